//! Small flag-parsing helpers shared by the subcommands.

use icx_core::error::{Error, Result};
use icx_core::ica::Contrast;
use icx_core::scoremap::{LayerSpec, SigmaMode};
use icx_core::synthetic::SourceDistribution;

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number '{c}'")))
        })
        .collect()
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad index '{c}'")))
        })
        .collect()
}

pub fn parse_distributions(s: &str) -> Result<Vec<SourceDistribution>> {
    s.split(',').map(|c| c.trim().parse()).collect()
}

pub fn parse_contrast(s: &str) -> Result<Contrast> {
    match s {
        "logcosh" => Ok(Contrast::LogCosh),
        "exp" => Ok(Contrast::Exp),
        other => Err(Error::Validation(format!(
            "unknown contrast '{other}' (expected logcosh or exp)"
        ))),
    }
}

/// `per-image` or `global:<sigma>`.
pub fn parse_sigma_mode(s: &str) -> Result<SigmaMode> {
    if s == "per-image" {
        return Ok(SigmaMode::PerImage);
    }
    if let Some(value) = s.strip_prefix("global:") {
        let v: f64 = value
            .parse()
            .map_err(|_| Error::Validation(format!("bad global sigma '{value}'")))?;
        return Ok(SigmaMode::Global(v));
    }
    Err(Error::Validation(format!(
        "unknown sigma mode '{s}' (expected per-image or global:<value>)"
    )))
}

/// `HxW`, e.g. `64x64`.
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| Error::Validation(format!("bad size '{s}' (expected HxW)")))?;
    let h = h
        .parse()
        .map_err(|_| Error::Validation(format!("bad height in '{s}'")))?;
    let w = w
        .parse()
        .map_err(|_| Error::Validation(format!("bad width in '{s}'")))?;
    Ok((h, w))
}

/// Semicolon-separated `kernel,stride,padding` triples, e.g.
/// `3,1,1;3,1,1;2,2,0`.
pub fn parse_arch(s: &str) -> Result<Vec<LayerSpec>> {
    s.split(';')
        .map(|layer| {
            let parts: Vec<&str> = layer.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Validation(format!(
                    "bad layer '{layer}' (expected kernel,stride,padding)"
                )));
            }
            let nums: Result<Vec<usize>> = parts
                .iter()
                .map(|p| {
                    p.parse::<usize>()
                        .map_err(|_| Error::Validation(format!("bad layer field '{p}'")))
                })
                .collect();
            let nums = nums?;
            Ok(LayerSpec::new(nums[0], nums[1], nums[2]))
        })
        .collect()
}

/// Worker count from `ICX_THREADS`; 0 or unset means sequential.
pub fn worker_count() -> usize {
    std::env::var("ICX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}
