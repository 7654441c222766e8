//! Solvers and structural diagnostics for the crowded active Brownian
//! particle equation
//!
//! `d_t f + Pe div(f (1 - rho) e(theta)) = De div((1 - rho) grad f + f grad rho) + d_theta^2 f`
//!
//! on the periodic space-angle cell, with `rho = int f dtheta` and
//! `e(theta) = (cos theta, sin theta)`.

pub mod acceptance;
pub mod config;
pub mod diagnostics;
pub mod dual_solver;
pub mod entropy;
pub mod error;
pub mod fields;
pub mod imex;
pub mod initial;
pub mod mollify;
pub mod primal_solver;
pub mod stationary;
pub mod sweep;

pub use error::{Error, Result};

/// Physical constants: Peclet number and the spatial diffusion coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub pe: f64,
    pub de: f64,
}

impl ModelParams {
    pub fn new(pe: f64, de: f64) -> Result<Self> {
        let p = ModelParams { pe, de };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pe.is_finite() {
            return Err(Error::InvalidParameter {
                name: "pe",
                msg: format!("must be finite, got {}", self.pe),
            });
        }
        if !(self.de > 0.0 && self.de.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "de",
                msg: format!("must be positive, got {}", self.de),
            });
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { pe: 0.0, de: 1.0 }
    }
}
