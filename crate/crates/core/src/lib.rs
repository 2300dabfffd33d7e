//! Tracking control for the Schlögl reaction–diffusion model on a rectangle.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece:
//!
//! * [`fem`]: structured P1 triangulations, mass and stiffness assembly.
//! * [`actuators`]: box-shaped indicator actuators, their finite-element coupling
//!   and the L² projection onto their span.
//! * [`dynamics`]: the cubic reaction, the Crank–Nicolson/Adams–Bashforth stepper
//!   and free-dynamics simulation.
//! * [`feedback`]: radial saturation and the explicit saturated feedback law.
//! * [`ocp`] and [`rhc`]: finite-horizon optimal control by an exact discrete
//!   adjoint, Barzilai–Borwein projected gradient, and the receding-horizon loop.
//! * [`analysis`]: closed-form constants, the discrete stabilizability margin,
//!   decay-rate fitting and the scalar saturation toy model.
//!
//! IO, configuration files and the command line live in the companion
//! `schloegl-experiments` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod actuators;
pub mod analysis;
pub mod dynamics;
mod eigen;
mod error;
pub mod feedback;
pub mod fem;
pub(crate) mod math;
pub mod ocp;
pub mod rhc;
pub mod sparse;

pub use error::{Error, Result};
pub use dynamics::{ControlledSystem, TargetSource};
