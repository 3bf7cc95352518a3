//! Model bundles, the `krew` command line tool and the HTTP generation
//! service built on `krew-core` and `krew-ctgan`.

pub mod bench;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod http;
pub mod pipeline;

pub use bundle::{load_bundle, save_bundle, ModelBundle, FORMAT_VERSION};
pub use error::{Error, Result};
pub use pipeline::{fit, prepare, FitConfig, Generated};
