pub mod bench;
pub mod camera;
pub mod catalog;
pub mod cloud;
pub mod config;
pub mod error;
pub mod geom;
pub mod grasp;
pub mod mesh;
pub mod ml;
pub mod policies;
pub mod render;
pub mod sim;
pub mod spatial;
pub mod viewsphere;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/viewsphere.md")]
    mod viewsphere {}
    #[doc = include_str!("../../../book/src/observation.md")]
    mod observation {}
    #[doc = include_str!("../../../book/src/grasps.md")]
    mod grasps {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
