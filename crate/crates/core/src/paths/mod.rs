//! Càdlàg paths and the M1 toolkit.

mod cadlag;
pub mod csv;
mod m1;

pub use cadlag::{counting_map, CadlagPath, PathBuilder};
pub use m1::{
    build_parametric, m1_distance, m1_distance_bounds, oscillation_v, oscillation_w, M1Distance,
    ParametricRepresentation,
};
