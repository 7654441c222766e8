//! Spectral Galerkin scheme for the eps-regularized entropy-variable equation
//! `(eps + A(u)) u' = div((eps + M(u)) grad u + M(u) V)`.
//!
//! The unknown is the coefficient vector `gamma` of `u` in the real
//! trigonometric tensor basis with per-axis slots `0..=2K`, which evolves by
//! `M(gamma) gamma' = R(gamma)` with
//! `M_kj = <phi_k, (eps + A(u)) phi_j>` and `R_k = <phi_k, div F(u)>` on the
//! quadrature grid.

mod integrator;
mod mass;

pub use integrator::{step, Integrator, StageEval, StepAttempt};
pub use mass::{pcg, MassSolver, MassSolverKind};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::diagnostics::{record_with, DiagnosticsRow};
use crate::entropy::{dual_image, dissipation_density, DriftField, DualImage};
use crate::error::{Error, Result};
use crate::fields::spectral::{derivative_coeffs, resize_coeffs, slot_weights};
use crate::fields::{
    l2_distance, pairwise_sum_by, Field3, FieldF, FieldRho, FieldU, GridSpec, Spectral, TWO_PI,
};
use crate::mollify::{regularize_initial, MollifierSpec, Regularized};
use crate::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct DualRunConfig {
    pub params: ModelParams,
    pub epsilon: f64,
    pub k: usize,
    pub grid: GridSpec,
    pub t_final: f64,
    pub dt_init: f64,
    pub rtol: f64,
    pub atol: f64,
    pub snap_every: f64,
    pub mass_solver: MassSolverKind,
    /// Angular exponent of the initial mollifier.
    pub gamma: f64,
    /// Allowed per-step increase of `E + (eps/2)||u||^2`, relative to `1 + |E(0)|`.
    pub ledger_step_tol: f64,
}

impl DualRunConfig {
    pub fn new(params: ModelParams, epsilon: f64, k: usize, grid: GridSpec, t_final: f64) -> Self {
        DualRunConfig {
            params,
            epsilon,
            k,
            grid,
            t_final,
            dt_init: 1e-3,
            rtol: 1e-8,
            atol: 1e-10,
            snap_every: t_final,
            mass_solver: MassSolverKind::Auto,
            gamma: MollifierSpec::DEFAULT_GAMMA,
            ledger_step_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                msg: format!(
                    "epsilon > 0 is required (the regularized mass matrix is only invertible for positive epsilon), got {}",
                    self.epsilon
                ),
            });
        }
        if self.epsilon >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                msg: format!("epsilon must be below 1, got {}", self.epsilon),
            });
        }
        check_cutoff(self.k, &self.grid)?;
        let positive = [
            ("t_final", self.t_final),
            ("dt_init", self.dt_init),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("snap_every", self.snap_every),
            ("ledger_step_tol", self.ledger_step_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    msg: format!("must be positive, got {v}"),
                });
            }
        }
        MollifierSpec::new(self.epsilon, self.gamma)?;
        Ok(())
    }
}

fn check_cutoff(k: usize, grid: &GridSpec) -> Result<()> {
    let needed = 2 * (2 * k + 1);
    let have = grid.nx.min(grid.ny).min(grid.ntheta);
    if k == 0 || have < needed {
        return Err(Error::CutoffTooLarge { k, needed, have });
    }
    Ok(())
}

/// Galerkin coefficients of the entropy variable.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub k: usize,
    pub coeffs: Vec<f64>,
    pub t: f64,
}

impl SpectralState {
    pub fn dim(k: usize) -> usize {
        (2 * k + 1).pow(3)
    }

    pub fn zeros(k: usize) -> Self {
        SpectralState {
            k,
            coeffs: vec![0.0; Self::dim(k)],
            t: 0.0,
        }
    }

    pub fn constant(k: usize, c: f64) -> Self {
        let mut s = Self::zeros(k);
        s.coeffs[0] = c;
        s
    }
}

/// Quadrature-grid machinery for one cutoff `K`.
#[derive(Clone, Debug)]
pub struct Galerkin {
    k: usize,
    l: usize,
    grid: GridSpec,
    sp: Spectral,
    embed: Vec<usize>,
    gram: Vec<f64>,
    drift: DriftField,
    params: ModelParams,
    epsilon: f64,
}

/// Synthesized entropy variable with its gradient and dual image.
#[derive(Clone, Debug)]
pub struct Pointwise {
    pub u: FieldU,
    pub grad: [Field3; 3],
    pub img: DualImage,
}

impl Galerkin {
    pub fn new(k: usize, grid: GridSpec, params: ModelParams, epsilon: f64) -> Result<Self> {
        check_cutoff(k, &grid)?;
        let l = 2 * k + 1;
        let mut embed = Vec::with_capacity(l * l * l);
        for a in 0..l {
            for b in 0..l {
                for c in 0..l {
                    embed.push((a * grid.ny + b) * grid.ntheta + c);
                }
            }
        }
        let vol = TWO_PI.powi(3);
        let gram = slot_weights(&[l, l, l]).iter().map(|w| w * vol).collect();
        Ok(Galerkin {
            k,
            l,
            grid,
            sp: Spectral::new(grid),
            embed,
            gram,
            drift: DriftField::new(&grid, params.pe),
            params,
            epsilon,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.embed.len()
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `int phi_k^2` for every basis function.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    fn mode_dims(&self) -> [usize; 3] {
        [self.l; 3]
    }

    pub fn embed(&self, gamma: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (g, &i) in gamma.iter().zip(&self.embed) {
            full[i] = *g;
        }
        full
    }

    pub fn extract(&self, full: &[f64]) -> Vec<f64> {
        self.embed.iter().map(|&i| full[i]).collect()
    }

    pub fn synth(&self, gamma: &[f64]) -> FieldU {
        Field3 {
            grid: self.grid,
            values: self.sp.transform3().inverse(&self.embed(gamma)),
        }
    }

    /// Galerkin coefficients of a grid field (spectral truncation).
    pub fn project(&self, u: &Field3) -> Vec<f64> {
        self.extract(&self.sp.transform3().forward(&u.values))
    }

    pub fn pointwise(&self, gamma: &[f64]) -> Pointwise {
        let dims = self.mode_dims();
        let u = self.synth(gamma);
        let grad = [0, 1, 2].map(|axis| self.synth(&derivative_coeffs(gamma, &dims, axis)));
        let img = dual_image(&u);
        Pointwise { u, grad, img }
    }

    /// `<phi_k, A(u) S v>` for all `k`, given the dual image density.
    pub fn apply_hessian_part(&self, f: &FieldF, v: &[f64]) -> Vec<f64> {
        let w = self.synth(v);
        let a = crate::entropy::hessian_apply_f(f, &w);
        let c = self.project(&a);
        c.iter().zip(&self.gram).map(|(c, g)| c * g).collect()
    }

    /// `M v = eps G v + <phi, A(u) S v>`.
    pub fn apply_mass(&self, f: &FieldF, v: &[f64]) -> Vec<f64> {
        let mut out = self.apply_hessian_part(f, v);
        for ((o, g), x) in out.iter_mut().zip(&self.gram).zip(v) {
            *o += self.epsilon * g * x;
        }
        out
    }

    /// Dense mass matrix at a given dual image, column by column.
    pub fn mass_matrix_at(&self, f: &FieldF) -> DMatrix<f64> {
        let n = self.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.apply_mass(f, &e)
            })
            .collect();
        let mut m = DMatrix::zeros(n, n);
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn assemble_mass(&self, state: &SpectralState) -> DMatrix<f64> {
        let u = self.synth(&state.coeffs);
        self.mass_matrix_at(&dual_image(&u).f)
    }

    /// Flux `(eps + M) grad u + M V` on the grid.
    fn flux(&self, pw: &Pointwise) -> [Vec<f64>; 3] {
        let g = self.grid;
        let nt = g.ntheta;
        let (eps, de) = (self.epsilon, self.params.de);
        let f = &pw.img.f.values;
        let vac = &pw.img.vacancy.values;
        let mut f1 = vec![0.0; g.len()];
        let mut f2 = vec![0.0; g.len()];
        let mut f3 = vec![0.0; g.len()];
        for i in 0..g.len() {
            let m = de * f[i] * vac[i / nt];
            let k = i % nt;
            f1[i] = (eps + m) * pw.grad[0].values[i] + m * self.drift.v1[k];
            f2[i] = (eps + m) * pw.grad[1].values[i] + m * self.drift.v2[k];
            f3[i] = (eps + f[i]) * pw.grad[2].values[i];
        }
        [f1, f2, f3]
    }

    /// `R_k = <phi_k, div F>` from a synthesized state.
    pub fn rhs_at(&self, pw: &Pointwise) -> Vec<f64> {
        let dims = self.mode_dims();
        let fl = self.flux(pw);
        let mut div = vec![0.0; self.dim()];
        for (axis, comp) in fl.iter().enumerate() {
            let c = self.extract(&self.sp.transform3().forward(comp));
            let d = derivative_coeffs(&c, &dims, axis);
            div.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }
        div.iter().zip(&self.gram).map(|(d, g)| d * g).collect()
    }

    pub fn assemble_rhs(&self, state: &SpectralState) -> Vec<f64> {
        self.rhs_at(&self.pointwise(&state.coeffs))
    }

    /// `eps ||u||^2` on the grid, computed from coefficients.
    pub fn eps_u_sq(&self, gamma: &[f64]) -> f64 {
        self.epsilon * pairwise_sum_by(gamma.len(), &|i| self.gram[i] * gamma[i] * gamma[i])
    }

    /// `(eps ||grad u||^2, int M grad u . grad u, int M grad u . V, mass f)`.
    pub fn energy_terms(&self, pw: &Pointwise) -> (f64, f64, f64, f64) {
        let g = self.grid;
        let nt = g.ntheta;
        let [u1, u2, ut] = &pw.grad;
        let grad_sq = g.cell()
            * pairwise_sum_by(g.len(), &|i| {
                u1.values[i].powi(2) + u2.values[i].powi(2) + ut.values[i].powi(2)
            });
        let diss = dissipation_density(&pw.img.f, &pw.img.vacancy, [u1, u2, ut], &self.params);
        let de = self.params.de;
        let drift = g.cell()
            * pairwise_sum_by(g.len(), &|i| {
                let m = de * pw.img.f.values[i] * pw.img.vacancy.values[i / nt];
                let k = i % nt;
                m * (u1.values[i] * self.drift.v1[k] + u2.values[i] * self.drift.v2[k])
            });
        let mass = crate::fields::total_mass(&pw.img.f);
        (self.epsilon * grad_sq, diss, drift, mass)
    }
}

pub struct Projection {
    pub state: SpectralState,
    /// `||S P u0 - u0||_{L^2}` on the grid.
    pub reconstruction_error: f64,
}

/// Spectral truncation of `u0` to the modes `|k_i| <= K`.
pub fn project_initial(u0eps: &FieldU, k: usize) -> Result<Projection> {
    check_cutoff(k, &u0eps.grid)?;
    let gal = Galerkin::new(k, u0eps.grid, ModelParams::default(), 1.0)?;
    let coeffs = gal.project(u0eps);
    let rec = gal.synth(&coeffs);
    Ok(Projection {
        reconstruction_error: l2_distance(&rec, u0eps),
        state: SpectralState { k, coeffs, t: 0.0 },
    })
}

/// `||f - P_{K-1} f||_{L^2}`: the L^2 weight of the outermost retained shell and beyond.
pub fn spectral_tail(f: &FieldF, k: usize) -> f64 {
    let g = f.grid;
    let dims = g.dims3();
    let c = crate::fields::spectral::TrigTransform::new(&dims).forward(&f.values);
    let keep = 2 * k.saturating_sub(1) + 1;
    let low = resize_coeffs(&c, &dims, &[keep; 3]);
    let back = resize_coeffs(&low, &[keep; 3], &dims);
    let w = slot_weights(&dims);
    let vol = TWO_PI.powi(3);
    pairwise_sum_by(c.len(), &|i| vol * w[i] * (c[i] - back[i]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSnapshot {
    pub t: f64,
    pub f: FieldF,
    pub rho: FieldRho,
    pub state: SpectralState,
}

#[derive(Clone, Debug)]
pub struct DualTrajectory {
    pub snapshots: Vec<DualSnapshot>,
    pub rows: Vec<DiagnosticsRow>,
    pub regularized: Regularized,
    pub projection_error: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub ledger_rejections: usize,
    pub linear_iterations: usize,
    /// Largest per-step increase of `E + (eps/2)||u||^2` over accepted steps.
    pub max_step_increase: f64,
}

impl DualTrajectory {
    pub fn last(&self) -> &DualSnapshot {
        self.snapshots.last().expect("at least one snapshot")
    }
}

fn snapshot(
    gal: &Galerkin,
    y: &StageEval,
    t: f64,
    cum: (f64, f64),
) -> (DualSnapshot, DiagnosticsRow) {
    let img = &y.pointwise.img;
    let mut row = record_with(
        gal.spectral(),
        &img.f,
        &img.rho,
        Some(&y.pointwise.u),
        gal.epsilon(),
        t,
        gal.params(),
    );
    row.cum_dissipation = Some(cum.0);
    row.cum_mass_time = Some(cum.1);
    (
        DualSnapshot {
            t,
            f: img.f.clone(),
            rho: img.rho.clone(),
            state: SpectralState {
                k: gal.k(),
                coeffs: y.gamma.clone(),
                t,
            },
        },
        row,
    )
}

/// Mollify, transform, project and integrate to `t_final`.
pub fn run_dual(f0: &FieldF, config: &DualRunConfig) -> Result<DualTrajectory> {
    config.validate()?;
    if f0.grid != config.grid {
        return Err(Error::ShapeMismatch {
            expected: config.grid.len(),
            got: f0.grid.len(),
        });
    }
    let spec = MollifierSpec::new(config.epsilon, config.gamma)?;
    let reg = regularize_initial(f0, &spec)?;
    let proj = project_initial(&reg.u, config.k)?;
    let gal = Galerkin::new(config.k, config.grid, config.params, config.epsilon)?;
    let mut integ = Integrator::new(&gal, config);
    let mut y = integ.evaluate(&proj.state.coeffs, None, 0.0)?;
    integ.set_reference_entropy(y.entropy);

    let mut snaps = vec![];
    let mut rows = vec![];
    let (s0, r0) = snapshot(&gal, &y, 0.0, (0.0, 0.0));
    snaps.push(s0);
    rows.push(r0);

    let t_end = config.t_final;
    let mut t = 0.0;
    let mut dt = config.dt_init.min(t_end);
    let mut next_snap = config.snap_every.min(t_end);
    let mut cum = (0.0, 0.0);
    let mut accepted = 0;
    let mut rejected = 0;
    let mut ledger_rejections = 0;
    let mut max_inc = f64::NEG_INFINITY;
    let time_tol = 1e-12 * t_end;
    while t < t_end - time_tol {
        let h = dt.min(next_snap - t).min(t_end - t);
        match integ.attempt(&y, t, h)? {
            StepAttempt::Accepted {
                next,
                dt_next,
                dissipation_integral,
                mass_integral,
                increase,
            } => {
                accepted += 1;
                cum.0 += dissipation_integral;
                cum.1 += mass_integral;
                max_inc = max_inc.max(increase);
                t += h;
                y = next;
                if h >= dt * (1.0 - 1e-12) || dt_next < dt {
                    dt = dt_next;
                }
            }
            StepAttempt::Rejected { ledger } => {
                rejected += 1;
                ledger_rejections += usize::from(ledger);
                dt = 0.5 * h;
                if dt < 1e-12 * t_end {
                    return Err(Error::StepsizeUnderflow { t, dt });
                }
                continue;
            }
        }
        if (t - next_snap).abs() <= time_tol || t >= t_end - time_tol {
            let t_snap = if t >= t_end - time_tol { t_end } else { next_snap };
            t = t_snap;
            let (s, r) = snapshot(&gal, &y, t_snap, cum);
            snaps.push(s);
            rows.push(r);
            next_snap = (next_snap + config.snap_every).min(t_end);
        }
    }
    Ok(DualTrajectory {
        snapshots: snaps,
        rows,
        regularized: reg,
        projection_error: proj.reconstruction_error,
        accepted,
        rejected,
        ledger_rejections,
        linear_iterations: integ.linear_iterations(),
        max_step_increase: max_inc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::cubic(8).unwrap()
    }

    #[test]
    fn validation_rejects_zero_epsilon_and_large_k() {
        let p = ModelParams::default();
        let cfg = DualRunConfig::new(p, 0.0, 1, grid(), 1.0);
        match cfg.validate() {
            Err(Error::InvalidParameter { name, msg }) => {
                assert_eq!(name, "epsilon");
                assert!(msg.contains("epsilon > 0"));
            }
            other => panic!("{other:?}"),
        }
        let cfg = DualRunConfig::new(p, 0.1, 2, grid(), 1.0);
        assert!(matches!(cfg.validate(), Err(Error::CutoffTooLarge { needed: 10, .. })));
    }

    #[test]
    fn constant_projection() {
        let g = grid();
        let u = Field3::constant(g, -1.7);
        let p = project_initial(&u, 1).unwrap();
        assert!((p.state.coeffs[0] + 1.7).abs() < 1e-14);
        assert!(p.state.coeffs[1..].iter().all(|c| c.abs() < 1e-14));
        assert!(p.reconstruction_error < 1e-12);
    }

    #[test]
    fn constant_state_has_zero_rhs() {
        let g = grid();
        for pe in [0.0, 1.3] {
            let gal = Galerkin::new(1, g, ModelParams { pe, de: 1.0 }, 0.1).unwrap();
            let r = gal.assemble_rhs(&SpectralState::constant(1, 0.4));
            assert!(r.iter().all(|v| v.abs() < 1e-13), "{r:?}");
        }
    }

    #[test]
    fn eps_only_mass_is_gram() {
        let g = grid();
        let eps = 0.05;
        let gal = Galerkin::new(1, g, ModelParams::default(), eps).unwrap();
        let m = gal.assemble_mass(&SpectralState::constant(1, -200.0));
        for i in 0..gal.dim() {
            for j in 0..gal.dim() {
                let want = if i == j { eps * gal.gram()[i] } else { 0.0 };
                assert!((m[(i, j)] - want).abs() < 1e-12, "{i} {j}");
            }
        }
    }
}
