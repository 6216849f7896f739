pub mod elliptic;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod harness;
pub mod variation;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub struct Geometry;
    #[doc = include_str!("../../../book/src/harmonic.md")]
    pub struct Harmonic;
    #[doc = include_str!("../../../book/src/flow.md")]
    pub struct Flow;
    #[doc = include_str!("../../../book/src/second_variation.md")]
    pub struct SecondVariation;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
