pub mod explain;
pub mod head;
pub mod ica;
pub mod pca;
pub mod pipeline;
pub mod qwk;
pub mod select;
pub mod synth;
pub mod tsne;
