//! Coalescing diffusive flows on the circle.
//!
//! The crate covers exact algebra on monotone degree-1 circle maps, a small
//! coefficient language for drift `b(t, x)` and diffusivity `a(t, x)`,
//! windowed weak flows with their metrics and time reversal, Poisson
//! disturbance flows, a coalescing Euler–Maruyama reference simulator and a
//! statistical verification harness for the reversed drift `−b + a′/2`.

pub mod circle_map;
pub mod disturbance;
pub mod dsl;
pub mod flow;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod verify;

pub use circle_map::{
    d_map, random_circle_map, Breakpoint, ChiFunction, CircleMap, MapError, Side,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
