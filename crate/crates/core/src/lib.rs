//! Projections and linear minimization oracles for Wasserstein balls over
//! images, plus the adversarial attacks built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod ball;
pub mod bisection;
pub mod capproj;
pub mod coupling;
pub mod dualproj;
pub mod dykstra;
pub mod error;
pub mod grid;
pub mod lmo;
pub mod oracle;
pub mod simplex;

pub use ball::BallSpec;
pub use coupling::{Block, Coupling};
pub use error::{Error, Result};
pub use grid::{build_euclidean_cost, GridShape, LocalCost};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($($name:ident),*) => {$(
            #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
            mod $name {}
        )*};
    }
    chapter!(introduction, grids, projection, lmo, attacks, oracle, cli);

    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
