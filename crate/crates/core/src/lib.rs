//! Ball-average (Korevaar–Schoen) energies of maps into metric spaces and
//! the directional representation energy built from distance functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod directional;
pub mod domain;
pub mod error;
pub mod ks;
pub mod map;
pub mod metric_space;
pub mod oracles;
pub mod quadrature;
pub mod report;

pub use config::EnergyConfig;
pub use directional::{
    check_increment_bound, directional_derivative, directional_vector, frame_sum_energy,
    minimal_gradient, rep_energy_ball, rep_energy_sphere, DirectionalField, IncrementCheck,
};
pub use domain::{DomainGrid, InnerMask};
pub use error::{Error, Result};
pub use ks::{approx_density, density_limit, ks_energy};
pub use map::{MapSpec, MetricMap};
pub use metric_space::{MetricSpace, Space, SpaceHandle};
pub use quadrature::{extrapolate, Extrapolation, QuadratureRule};
pub use report::{EnergyReport, FormReport, KsReport, RepReport};
