//! `icx`: find the minimal set of independent components that preserves a
//! classifier's ordinal performance, and explain individual decisions.
//!
//! Exit codes: 0 on success, 1 on validation/format/usage errors, 2 on
//! numerical failures (rank deficiency, divergence, undefined metric).
//! Errors print to stderr as one line, `error: <category>: <detail>`.

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod util;

use commands::{explain, head, ica, pca, pipeline, qwk, select, synth, tsne};

#[derive(Parser)]
#[command(
    name = "icx",
    about = "Independent-component explanations for ordinal classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted synthetic dataset with known ground truth
    Synth(synth::SynthArgs),
    /// Principal-component redundancy report for a feature matrix
    Pca(pca::PcaArgs),
    /// Fit an independent-component model
    Ica(ica::IcaArgs),
    /// Fit or evaluate a linear classification head
    #[command(subcommand)]
    Head(head::HeadCommand),
    /// Quadratic weighted kappa between two label files
    Qwk(qwk::QwkArgs),
    /// Sweep component counts and select the smallest adequate one
    Select(select::SelectArgs),
    /// Per-component score decomposition and heatmaps for one image
    Explain(explain::ExplainArgs),
    /// 2-D embedding of a feature space for qualitative inspection
    Tsne(tsne::TsneArgs),
    /// Full procedure: redundancy report, selection, explanation, embedding
    Pipeline(pipeline::PipelineArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            // help and version requests are successes; anything else is a
            // usage error
            let code = if err.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };

    let result = match &cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Pca(args) => pca::run(args),
        Command::Ica(args) => ica::run(args),
        Command::Head(cmd) => head::run(cmd),
        Command::Qwk(args) => qwk::run(args),
        Command::Select(args) => select::run(args),
        Command::Explain(args) => explain::run(args),
        Command::Tsne(args) => tsne::run(args),
        Command::Pipeline(args) => pipeline::run(args),
    };

    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
