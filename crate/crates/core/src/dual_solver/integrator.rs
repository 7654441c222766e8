//! Adaptive Bogacki-Shampine 3(2) integration of `gamma' = M(gamma)^{-1} R(gamma)`
//! with an entropy-ledger acceptance test.

use super::mass::MassSolver;
use super::{DualRunConfig, Galerkin, Pointwise, SpectralState};
use crate::entropy::entropy_of_image;
use crate::error::{Error, Result};

/// Everything known about the system at one coefficient vector.
#[derive(Clone, Debug)]
pub struct StageEval {
    pub gamma: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pointwise: Pointwise,
    pub entropy: f64,
    pub lyapunov: f64,
    /// `eps ||grad u||^2 + dissipation`.
    pub total_dissipation: f64,
    pub mass: f64,
    key: u64,
}

pub enum StepAttempt {
    Accepted {
        next: StageEval,
        dt_next: f64,
        /// Simpson estimate of `int (eps ||grad u||^2 + dissipation) dt` over the step.
        dissipation_integral: f64,
        /// Simpson estimate of `int mass dt` over the step.
        mass_integral: f64,
        /// Change of `E + (eps/2)||u||^2` over the step.
        increase: f64,
    },
    Rejected {
        /// True when the entropy ledger, not the error estimate, caused the rejection.
        ledger: bool,
    },
}

pub struct Integrator<'a> {
    gal: &'a Galerkin,
    cfg: &'a DualRunConfig,
    solver: MassSolver,
    next_key: u64,
    e_ref: f64,
}

fn axpy(y: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (a, v) in terms {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += a * x;
        }
    }
    out
}

impl<'a> Integrator<'a> {
    pub fn new(gal: &'a Galerkin, cfg: &'a DualRunConfig) -> Self {
        Integrator {
            gal,
            cfg,
            solver: MassSolver::new(cfg.mass_solver, gal.dim()),
            next_key: 0,
            e_ref: 0.0,
        }
    }

    /// Entropy scale for the per-step ledger tolerance.
    pub fn set_reference_entropy(&mut self, e0: f64) {
        self.e_ref = e0;
    }

    pub fn linear_iterations(&self) -> usize {
        self.solver.iterations()
    }

    pub fn evaluate(&mut self, gamma: &[f64], x0: Option<&[f64]>, t: f64) -> Result<StageEval> {
        let pw = self.gal.pointwise(gamma);
        let rhs = self.gal.rhs_at(&pw);
        let velocity = self.solver.solve(self.gal, &pw.img.f, &rhs, x0, false, t)?;
        let (eps_grad, diss, _, mass) = self.gal.energy_terms(&pw);
        let entropy = entropy_of_image(&pw.img);
        let lyapunov = entropy + 0.5 * self.gal.eps_u_sq(gamma);
        self.next_key += 1;
        Ok(StageEval {
            gamma: gamma.to_vec(),
            velocity,
            pointwise: pw,
            entropy,
            lyapunov,
            total_dissipation: eps_grad + diss,
            mass,
            key: self.next_key,
        })
    }

    fn error_norm(&self, err: &[f64], y0: &[f64], y1: &[f64]) -> f64 {
        let n = err.len() as f64;
        let s: f64 = (0..err.len())
            .map(|i| {
                let sc = self.cfg.atol + self.cfg.rtol * y0[i].abs().max(y1[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    /// Try one step of size `h` from `y` at time `t`.
    pub fn attempt(&mut self, y: &StageEval, t: f64, h: f64) -> Result<StepAttempt> {
        self.solver.prepare(self.gal, &y.pointwise.img.f, y.key, t)?;
        let k1 = &y.velocity;
        let y2 = axpy(&y.gamma, &[(0.5 * h, k1)]);
        let s2 = self.evaluate(&y2, Some(k1), t + 0.5 * h)?;
        let k2 = &s2.velocity;
        let y3 = axpy(&y.gamma, &[(0.75 * h, k2)]);
        let s3 = self.evaluate(&y3, Some(k2), t + 0.75 * h)?;
        let k3 = &s3.velocity;
        let y4 = axpy(
            &y.gamma,
            &[(2.0 / 9.0 * h, k1), (1.0 / 3.0 * h, k2), (4.0 / 9.0 * h, k3)],
        );
        if y4.iter().any(|v| !v.is_finite()) {
            return Ok(StepAttempt::Rejected { ledger: false });
        }
        let s4 = self.evaluate(&y4, Some(k3), t + h)?;
        let k4 = &s4.velocity;
        let err: Vec<f64> = (0..y4.len())
            .map(|i| {
                h * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i]
                    - 0.125 * k4[i])
            })
            .collect();
        let en = self.error_norm(&err, &y.gamma, &y4);
        let increase = s4.lyapunov - y.lyapunov;
        let p = self.gal.params();
        let budget = if p.pe == 0.0 {
            0.0
        } else {
            h * 0.5 * p.pe * p.pe * p.de.max(1.0) * y.mass.max(s4.mass)
        };
        let allowed = self.cfg.ledger_step_tol * (1.0 + self.e_ref.abs()) + budget;
        if !en.is_finite() || en > 1.0 {
            return Ok(StepAttempt::Rejected { ledger: false });
        }
        if increase > allowed {
            return Ok(StepAttempt::Rejected { ledger: true });
        }
        let mid = axpy(
            &y.gamma,
            &[
                (0.5, &y4.iter().zip(&y.gamma).map(|(a, b)| a - b).collect::<Vec<_>>()),
                (0.125 * h, k1),
                (-0.125 * h, k4),
            ],
        );
        let (eg, di, _, mm) = self.gal.energy_terms(&self.gal.pointwise(&mid));
        let d_int = h / 6.0 * (y.total_dissipation + 4.0 * (eg + di) + s4.total_dissipation);
        let m_int = h / 6.0 * (y.mass + 4.0 * mm + s4.mass);
        let factor = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
        };
        Ok(StepAttempt::Accepted {
            next: s4,
            dt_next: h * factor,
            dissipation_integral: d_int,
            mass_integral: m_int,
            increase,
        })
    }
}

/// One accepted adaptive step of at most `dt`, halving on rejection.
pub fn step(
    gal: &Galerkin,
    state: &SpectralState,
    dt: f64,
    config: &DualRunConfig,
) -> Result<SpectralState> {
    config.validate()?;
    let mut integ = Integrator::new(gal, config);
    let y = integ.evaluate(&state.coeffs, None, state.t)?;
    integ.set_reference_entropy(y.entropy);
    let mut h = dt;
    loop {
        match integ.attempt(&y, state.t, h)? {
            StepAttempt::Accepted { next, .. } => {
                return Ok(SpectralState {
                    k: state.k,
                    coeffs: next.gamma,
                    t: state.t + h,
                })
            }
            StepAttempt::Rejected { .. } => {
                h *= 0.5;
                if h < 1e-12 * config.t_final {
                    return Err(Error::StepsizeUnderflow { t: state.t, dt: h });
                }
            }
        }
    }
}
