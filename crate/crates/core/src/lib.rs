//! Surface-assisted target recognition: channel simulation, a
//! differentiable forward model, adaptive and fixed-phase recognizers,
//! training, and the communication-side spectral efficiency analysis.

pub mod autodiff;
pub mod channel;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod protocol;
pub mod recognizer;
pub mod rng;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/channels.md")]
    struct Channels;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/recognizers.md")]
    struct Recognizers;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/protocol.md")]
    struct Protocol;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
}
