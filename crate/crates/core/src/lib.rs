//! Construction and numerical certification of positive-Ricci doubly warped
//! surgery metrics, their index-one normalization along a totally geodesic
//! slice, and the spectral count behind the Morse index.

pub mod deform;
pub mod geometry;
pub mod glue;
pub mod ode;
pub mod pipeline;
pub mod spectral;
pub mod tridiag;
pub mod warp;
