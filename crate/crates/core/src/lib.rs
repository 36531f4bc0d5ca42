//! Visual vocabularies from large local-descriptor stores, fixed-length video
//! encodings and 1-vs-all SVM evaluation.

mod binio;
pub mod encode;
pub mod error;
pub mod eval;
pub mod layout;
pub mod manifest;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod store;
pub mod svm;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use layout::ComponentLayout;
pub use manifest::{DatasetManifest, Split, VideoEntry};
