//! Constant stationary states: residuals, linearized mode rates, the
//! fixed-point operators `G` (quadratic source) and `S` (linear solve), and
//! the iteration `w <- S(G(w))`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::entropy::dissipation;
use crate::error::{Error, Result};
use crate::fields::spectral::{
    derivative_coeffs, second_derivative_coeffs, slot_wavenumber, Dealias, TrigTransform,
};
use crate::fields::{integrate3, l2_distance, Field3, FieldF, GridSpec, Spectral, TWO_PI};
use crate::imex::{ars222_step, SplitOperator};
use crate::primal_solver::{rhs_primal, run_primal, PrimalRunConfig};
use crate::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantState {
    pub f_inf: f64,
}

impl ConstantState {
    /// A constant with `0 < f_inf < 1/(2 pi)`.
    pub fn new(f_inf: f64) -> Result<Self> {
        if !(f_inf > 0.0 && f_inf < 1.0 / TWO_PI) {
            return Err(Error::InvalidParameter {
                name: "f_inf",
                msg: format!("must lie in (0, 1/(2 pi)), got {f_inf}"),
            });
        }
        Ok(ConstantState { f_inf })
    }

    /// Also admits the jammed value `1/(2 pi)`; only for residual checks.
    pub fn new_closed(f_inf: f64) -> Result<Self> {
        if !(f_inf >= 0.0 && f_inf <= 1.0 / TWO_PI + 1e-15) {
            return Err(Error::InvalidParameter {
                name: "f_inf",
                msg: format!("must lie in [0, 1/(2 pi)], got {f_inf}"),
            });
        }
        Ok(ConstantState { f_inf })
    }

    pub fn rho_inf(&self) -> f64 {
        TWO_PI * self.f_inf
    }

    pub fn mass(&self) -> f64 {
        self.f_inf * TWO_PI.powi(3)
    }

    pub fn field(&self, grid: GridSpec) -> FieldF {
        Field3::constant(grid, self.f_inf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeRate {
    pub mode: (i64, i64, i64),
    pub lambda: Complex64,
}

/// `L^2` norm of the tendency; zero exactly at discrete stationary states.
pub fn stationary_residual(f: &FieldF, params: &ModelParams) -> f64 {
    let r = rhs_primal(f, params);
    let sq: Vec<f64> = r.values.iter().map(|v| v * v).collect();
    integrate3(&f.grid, &sq).sqrt()
}

/// The functional whose vanishing forces a stationary state to be constant
/// when `Pe = 0`: the entropy dissipation.
pub fn variational_f(f: &FieldF, params: &ModelParams) -> Result<f64> {
    dissipation(f, params)
}

/// Rate of one Fourier mode from the decoupled per-mode ODE with zero source:
/// `-[n3^2 + De |n'|^2 ((1 - rho) + [n3 = 0] 2 pi f) + 2 pi i Pe (1 - rho) n1]`.
pub fn mode_rate(c: &ConstantState, params: &ModelParams, n: (i64, i64, i64)) -> Complex64 {
    let (n1, n2, n3) = (n.0 as f64, n.1 as f64, n.2 as f64);
    let vac = 1.0 - c.rho_inf();
    let ind = if n.2 == 0 { TWO_PI * c.f_inf } else { 0.0 };
    let re = n3 * n3 + params.de * (n1 * n1 + n2 * n2) * (vac + ind);
    let im = TWO_PI * params.pe * vac * n1;
    -Complex64::new(re, im)
}

/// Rates for every mode with `|n_i| <= k`.
pub fn linearized_mode_rates(c: &ConstantState, params: &ModelParams, k: usize) -> Vec<ModeRate> {
    let k = k as i64;
    let mut out = Vec::with_capacity((2 * k as usize + 1).pow(3));
    for n1 in -k..=k {
        for n2 in -k..=k {
            for n3 in -k..=k {
                let mode = (n1, n2, n3);
                out.push(ModeRate {
                    mode,
                    lambda: mode_rate(c, params, mode),
                });
            }
        }
    }
    out
}

/// `G(w) = De (w lap W - W lap w) + Pe (w grad W + W grad w) . e`, formed on
/// a 3/2-padded grid.
pub fn apply_g(w: &Field3, params: &ModelParams) -> Field3 {
    let g = w.grid;
    let dims = g.dims3();
    let dims2 = g.dims2();
    let t3 = TrigTransform::new(&dims);
    let c = t3.forward(&w.values);
    let cw: Vec<f64> = c.iter().step_by(g.ntheta).map(|v| TWO_PI * v).collect();
    let pad3 = Dealias::new(&dims);
    let pad2 = Dealias::new(&dims2);
    let lap3: Vec<f64> = second_derivative_coeffs(&c, &dims, 0)
        .iter()
        .zip(second_derivative_coeffs(&c, &dims, 1))
        .map(|(a, b)| a + b)
        .collect();
    let lap2: Vec<f64> = second_derivative_coeffs(&cw, &dims2, 0)
        .iter()
        .zip(second_derivative_coeffs(&cw, &dims2, 1))
        .map(|(a, b)| a + b)
        .collect();
    let wp = pad3.lift(&c);
    let w1 = pad3.lift(&derivative_coeffs(&c, &dims, 0));
    let w2 = pad3.lift(&derivative_coeffs(&c, &dims, 1));
    let lw = pad3.lift(&lap3);
    let wm = pad2.lift(&cw);
    let wm1 = pad2.lift(&derivative_coeffs(&cw, &dims2, 0));
    let wm2 = pad2.lift(&derivative_coeffs(&cw, &dims2, 1));
    let lwm = pad2.lift(&lap2);
    let mt = pad3.padded_dims()[2];
    let ht = TWO_PI / mt as f64;
    let (cs, sn): (Vec<f64>, Vec<f64>) = (0..mt)
        .map(|k| ((k as f64 * ht).cos(), (k as f64 * ht).sin()))
        .unzip();
    let (pe, de) = (params.pe, params.de);
    let out: Vec<f64> = (0..wp.len())
        .map(|i| {
            let x = i / mt;
            let k = i % mt;
            let diff = de * (wp[i] * lwm[x] - wm[x] * lw[i]);
            let drift1 = wp[i] * wm1[x] + wm[x] * w1[i];
            let drift2 = wp[i] * wm2[x] + wm[x] * w2[i];
            diff + pe * (drift1 * cs[k] + drift2 * sn[k])
        })
        .collect();
    Field3 {
        grid: g,
        values: t3.inverse(&pad3.lower(&out)),
    }
}

/// A source sampled in time, linearly interpolated between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub times: Vec<f64>,
    pub fields: Vec<Field3>,
}

impl Source {
    pub fn zero(grid: GridSpec) -> Self {
        Source {
            times: vec![0.0],
            fields: vec![Field3::zeros(grid)],
        }
    }

    pub fn steady(g: Field3) -> Self {
        Source {
            times: vec![0.0],
            fields: vec![g],
        }
    }

    /// `int_0^T ||g||^2 dt` by the trapezoid rule over the samples (the
    /// constant extension for a single sample).
    pub fn l2_sq(&self, t_final: f64) -> f64 {
        let sq: Vec<f64> = self.fields.iter().map(|g| l2_sq(g)).collect();
        if sq.len() == 1 {
            return sq[0] * t_final;
        }
        (1..sq.len())
            .map(|j| 0.5 * (self.times[j] - self.times[j - 1]) * (sq[j] + sq[j - 1]))
            .sum()
    }
}

fn l2_sq(f: &Field3) -> f64 {
    let sq: Vec<f64> = f.values.iter().map(|v| v * v).collect();
    integrate3(&f.grid, &sq)
}

/// Time-sampled solution of the linear problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Field3>,
}

impl LinearTrajectory {
    pub fn constant(times: Vec<f64>, f: Field3) -> Self {
        let snapshots = vec![f; times.len()];
        LinearTrajectory { times, snapshots }
    }

    pub fn last(&self) -> &Field3 {
        self.snapshots.last().expect("non-empty trajectory")
    }

    fn sub(&self, other: &LinearTrajectory) -> LinearTrajectory {
        LinearTrajectory {
            times: self.times.clone(),
            snapshots: self
                .snapshots
                .iter()
                .zip(&other.snapshots)
                .map(|(a, b)| a.zip_map(b, |x, y| x - y))
                .collect(),
        }
    }
}

/// Multiply by `cos(theta)` (`sin_factor = false`) or `sin(theta)` along the
/// angular axis in coefficient space, discarding modes beyond `n/2 - 1`.
fn theta_multiply(c: &[f64], nt: usize, sin_factor: bool) -> Vec<f64> {
    let top = (nt - 1) / 2;
    let mut out = vec![0.0; c.len()];
    let cos_slot = |m: usize| if m == 0 { 0 } else { 2 * m - 1 };
    for (line_in, line_out) in c.chunks(nt).zip(out.chunks_mut(nt)) {
        let c0 = line_in[0];
        if top >= 1 {
            if sin_factor {
                line_out[2] += c0;
            } else {
                line_out[1] += c0;
            }
        }
        for m in 1..=top {
            let a = line_in[2 * m - 1];
            let b = line_in[2 * m];
            if !sin_factor {
                // cos * cos m = (cos(m+1) + cos(m-1)) / 2, cos * sin m = (sin(m+1) + sin(m-1)) / 2
                line_out[cos_slot(m - 1)] += 0.5 * a;
                if m > 1 {
                    line_out[2 * (m - 1)] += 0.5 * b;
                }
                if m < top {
                    line_out[2 * m + 1] += 0.5 * a;
                    line_out[2 * m + 2] += 0.5 * b;
                }
            } else {
                // sin * cos m = (sin(m+1) - sin(m-1)) / 2, sin * sin m = (cos(m-1) - cos(m+1)) / 2
                if m > 1 {
                    line_out[2 * (m - 1)] -= 0.5 * a;
                }
                line_out[cos_slot(m - 1)] += 0.5 * b;
                if m < top {
                    line_out[2 * m + 2] += 0.5 * a;
                    line_out[2 * m + 1] -= 0.5 * b;
                }
            }
        }
    }
    out
}

struct LinearizedOperator {
    grid: GridSpec,
    stiff: Vec<f64>,
    pe: f64,
    vac: f64,
    f_inf: f64,
    source_times: Vec<f64>,
    source: Vec<Vec<f64>>,
}

impl LinearizedOperator {
    fn new(grid: GridSpec, c: &ConstantState, params: &ModelParams, g: &Source, t3: &TrigTransform) -> Self {
        let vac = 1.0 - c.rho_inf();
        let nt = grid.ntheta;
        let stiff = (0..grid.len())
            .map(|idx| {
                let s3 = idx % nt;
                let k3 = slot_wavenumber(s3) as f64;
                let k2 = slot_wavenumber((idx / nt) % grid.ny) as f64;
                let k1 = slot_wavenumber(idx / (nt * grid.ny)) as f64;
                let ksq = k1 * k1 + k2 * k2;
                if s3 == 0 {
                    -params.de * ksq
                } else {
                    -(k3 * k3 + params.de * vac * ksq)
                }
            })
            .collect();
        LinearizedOperator {
            grid,
            stiff,
            pe: params.pe,
            vac,
            f_inf: c.f_inf,
            source_times: g.times.clone(),
            source: g.fields.iter().map(|f| t3.forward(&f.values)).collect(),
        }
    }

    fn source_at(&self, t: f64) -> std::borrow::Cow<'_, [f64]> {
        let ts = &self.source_times;
        if ts.len() == 1 || t <= ts[0] {
            return std::borrow::Cow::Borrowed(&self.source[0]);
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return std::borrow::Cow::Borrowed(&self.source[last]);
        }
        let j = ts.partition_point(|&s| s <= t).clamp(1, last);
        let w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        let (a, b) = (&self.source[j - 1], &self.source[j]);
        std::borrow::Cow::Owned(a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect())
    }
}

impl SplitOperator for LinearizedOperator {
    fn stiff_symbol(&self) -> &[f64] {
        &self.stiff
    }

    fn explicit(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.source_at(t).into_owned();
        if self.pe != 0.0 {
            let nt = self.grid.ntheta;
            let dims = self.grid.dims3();
            // q = (1 - rho) z - f Z; Z lives in the angular mean slot.
            let q: Vec<f64> = y
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if i % nt == 0 {
                        (self.vac - self.f_inf * TWO_PI) * v
                    } else {
                        self.vac * v
                    }
                })
                .collect();
            let a = theta_multiply(&derivative_coeffs(&q, &dims, 0), nt, false);
            let b = theta_multiply(&derivative_coeffs(&q, &dims, 1), nt, true);
            for ((o, x), y) in out.iter_mut().zip(&a).zip(&b) {
                *o -= self.pe * (x + y);
            }
        }
        Ok(out)
    }
}

/// Solve the linearized problem with source `g` from `z0` up to `t_final`,
/// returning every step. Diffusion is implicit; the angular drift coupling
/// and the source are explicit.
pub fn solve_s(
    g: &Source,
    z0: &Field3,
    c: &ConstantState,
    params: &ModelParams,
    t_final: f64,
    dt: f64,
) -> Result<LinearTrajectory> {
    params.validate()?;
    if !(t_final > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            msg: format!("t_final and dt must be positive, got {t_final}, {dt}"),
        });
    }
    let grid = z0.grid;
    if g.fields.iter().any(|f| f.grid != grid) || g.fields.len() != g.times.len() || g.fields.is_empty() {
        return Err(Error::MismatchedTrajectories(
            "source samples must share the grid of z0".into(),
        ));
    }
    let t3 = TrigTransform::new(&grid.dims3());
    let op = LinearizedOperator::new(grid, c, params, g, &t3);
    let n = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / n as f64;
    let mut y = t3.forward(&z0.values);
    let mut times = vec![0.0];
    let mut snaps = vec![z0.clone()];
    for s in 0..n {
        y = ars222_step(&op, s as f64 * h, &y, h, true)?;
        let t = (s + 1) as f64 * h;
        let z = Field3 {
            grid,
            values: t3.inverse(&y),
        };
        let m = z.max_abs();
        if !m.is_finite() || m > 1e8 {
            return Err(Error::BlowupDetected { t, max_abs: m });
        }
        times.push(t);
        snaps.push(z);
    }
    Ok(LinearTrajectory {
        times,
        snapshots: snaps,
    })
}

/// `C0 = exp(T (1 + Pe^2 / De))`, `C1 = (1 + Pe^2 / De)^{1/2} C0^{3/2}`.
pub fn fp_constants(params: &ModelParams, t_final: f64) -> (f64, f64) {
    let a = 1.0 + params.pe * params.pe / params.de;
    let c0 = (t_final * a).exp();
    (c0, a.sqrt() * c0.powf(1.5))
}

/// Both sides of the first energy estimate for the linear solve:
/// `sup ||z||^2 + ||d_theta z||^2 + De((1-rho)||grad z||^2 + f ||grad Z||^2)`
/// against `C0 (||z0||^2 + ||g||^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub c0: f64,
}

pub fn energy_estimate(
    z: &LinearTrajectory,
    g: &Source,
    c: &ConstantState,
    params: &ModelParams,
) -> EnergyEstimate {
    let grid = z.snapshots[0].grid;
    let sp = Spectral::new(grid);
    let t_final = *z.times.last().unwrap();
    let dens: Vec<(f64, f64, f64, f64)> = z
        .snapshots
        .par_iter()
        .map(|f| {
            let dt = sp.grad_theta(f);
            let (g1, g2) = sp.grad_x(f);
            let zm = crate::fields::marginal_rho(f);
            let gz = sp.grad2(&zm);
            let gz_sq: f64 = gz
                .p1
                .iter()
                .zip(&gz.p2)
                .map(|(a, b)| a * a + b * b)
                .sum::<f64>()
                * grid.cell_x();
            let grad_sq = l2_sq(&g1) + l2_sq(&g2);
            (l2_sq(f), l2_sq(&dt), grad_sq, gz_sq)
        })
        .collect();
    let trap = |sel: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> f64 {
        (1..dens.len())
            .map(|j| 0.5 * (z.times[j] - z.times[j - 1]) * (sel(&dens[j]) + sel(&dens[j - 1])))
            .sum()
    };
    let sup = dens.iter().map(|d| d.0).fold(0.0, f64::max);
    let vac = 1.0 - c.rho_inf();
    let lhs = sup
        + trap(&|d| d.1)
        + params.de * (vac * trap(&|d| d.2) + c.f_inf * trap(&|d| d.3));
    let (c0, _) = fp_constants(params, t_final);
    let rhs = c0 * (dens[0].0 + g.l2_sq(t_final));
    EnergyEstimate { lhs, rhs, c0 }
}

fn weighted_sq(sp: &Spectral, f: &Field3, weight: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid;
    let c = sp.forward(f).data;
    let gram = sp.gram3();
    let nt = g.ntheta;
    (0..c.len())
        .map(|idx| {
            let k3 = slot_wavenumber(idx % nt) as f64;
            let k2 = slot_wavenumber((idx / nt) % g.ny) as f64;
            let k1 = slot_wavenumber(idx / (nt * g.ny)) as f64;
            gram[idx] * c[idx] * c[idx] * weight(k1 * k1 + k2 * k2 + k3 * k3)
        })
        .sum()
}

/// `||f||_{H^s}` with the weight `(1 + |k|^2)^s`.
pub fn sobolev_norm(f: &Field3, s: i32) -> f64 {
    let sp = Spectral::new(f.grid);
    weighted_sq(&sp, f, |k2| (1.0 + k2).powi(s)).sqrt()
}

/// Discrete surrogate of the fixed-point space norm: sup of the `H^2` norm,
/// plus the `L^2`-in-time `H^3` seminorm, plus the `L^2`-in-time `H^1` norm
/// of snapshot finite differences.
pub fn xi_norm(z: &LinearTrajectory) -> f64 {
    let grid = z.snapshots[0].grid;
    let sp = Spectral::new(grid);
    let per: Vec<(f64, f64)> = z
        .snapshots
        .par_iter()
        .map(|f| {
            (
                weighted_sq(&sp, f, |k2| (1.0 + k2).powi(2)),
                weighted_sq(&sp, f, |k2| k2.powi(3)),
            )
        })
        .collect();
    let sup = per.iter().map(|p| p.0).fold(0.0, f64::max).sqrt();
    let n = z.times.len();
    if n < 2 {
        return sup;
    }
    let h3: f64 = (1..n)
        .map(|j| 0.5 * (z.times[j] - z.times[j - 1]) * (per[j].1 + per[j - 1].1))
        .sum();
    let dt_h1: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|j| {
            let h = z.times[j] - z.times[j - 1];
            let d = z.snapshots[j].zip_map(&z.snapshots[j - 1], |a, b| (a - b) / h);
            h * weighted_sq(&sp, &d, |k2| 1.0 + k2)
        })
        .collect();
    let dt_h1: f64 = dt_h1.iter().sum();
    sup + h3.sqrt() + dt_h1.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointStatus {
    Converged,
    NoContraction,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointConfig {
    pub t_final: f64,
    pub dt: f64,
    /// Radius of the ball the initial iterate must lie in.
    pub radius: f64,
    pub max_iter: usize,
    /// Stop once the increment falls below `tol * max(1e-300, ||w||)`.
    pub tol: f64,
    /// Compare the limit with a nonlinear run.
    pub cross_check: bool,
}

impl FixedPointConfig {
    pub fn new(t_final: f64, dt: f64) -> Self {
        FixedPointConfig {
            t_final,
            dt,
            radius: f64::INFINITY,
            max_iter: 50,
            tol: 1e-10,
            cross_check: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    pub status: FixedPointStatus,
    /// Space norm of every iterate, starting with the initial one.
    pub norms: Vec<f64>,
    /// Space norm of every increment `w_{k+1} - w_k`.
    pub increments: Vec<f64>,
    /// Raw ratios of consecutive increments.
    pub ratios: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    /// Norm of the last increment.
    pub residual: f64,
    /// Largest `L^2` gap to the nonlinear run over the common time samples.
    pub primal_mismatch: Option<f64>,
    pub limit: LinearTrajectory,
}

impl FixedPointReport {
    pub fn all_contractive(&self) -> bool {
        self.ratios.iter().all(|r| *r < 1.0)
    }

    /// `Err(NoContraction)` when the iteration failed to contract.
    pub fn strict(&self) -> Result<()> {
        if self.status == FixedPointStatus::NoContraction {
            return Err(Error::NoContraction {
                passes: self.ratios.len(),
                ratio: self.ratios.last().copied().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pass,norm,increment,ratio\n");
        for (i, n) in self.norms.iter().enumerate() {
            let inc = if i == 0 { f64::NAN } else { self.increments[i - 1] };
            let r = if i < 2 { f64::NAN } else { self.ratios[i - 2] };
            s.push_str(&format!("{i},{n:.16e},{inc:.16e},{r:.16e}\n"));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "status: {:?}\npasses: {}\nC0: {:.12e}\nC1: {:.12e}\nfinal increment: {:.6e}\n",
            self.status,
            self.increments.len(),
            self.c0,
            self.c1,
            self.residual
        );
        let worst = self.ratios.iter().copied().fold(f64::NAN, f64::max);
        s.push_str(&format!("largest contraction ratio: {worst:.6e}\n"));
        if let Some(m) = self.primal_mismatch {
            s.push_str(&format!("L2 gap to nonlinear run: {m:.6e}\n"));
        }
        s
    }
}

/// Iterate `w <- S(G(w))` from the time-constant iterate `w0` with initial
/// data `z0`.
pub fn gamma_iterate(
    w0: &Field3,
    z0: &Field3,
    c: &ConstantState,
    params: &ModelParams,
    cfg: &FixedPointConfig,
) -> Result<FixedPointReport> {
    if cfg.t_final > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter {
            name: "t_final",
            msg: format!("the iteration runs on intervals of length at most 1, got {}", cfg.t_final),
        });
    }
    if w0.grid != z0.grid {
        return Err(Error::MismatchedTrajectories("w0 and z0 grids differ".into()));
    }
    let n = (cfg.t_final / cfg.dt).round().max(1.0) as usize;
    let h = cfg.t_final / n as f64;
    let times: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    let mut w = LinearTrajectory::constant(times.clone(), w0.clone());
    let n0 = xi_norm(&w);
    if n0 > cfg.radius {
        return Err(Error::InvalidParameter {
            name: "radius",
            msg: format!("initial iterate norm {n0:.6e} exceeds radius {}", cfg.radius),
        });
    }
    let (c0, c1) = fp_constants(params, cfg.t_final);
    let mut norms = vec![n0];
    let mut increments = vec![];
    let mut ratios = vec![];
    let mut status = FixedPointStatus::MaxIterations;
    let mut streak = 0;
    for _ in 0..cfg.max_iter {
        let src = Source {
            times: times.clone(),
            fields: w.snapshots.par_iter().map(|f| apply_g(f, params)).collect(),
        };
        let z = solve_s(&src, z0, c, params, cfg.t_final, h)?;
        let inc = xi_norm(&z.sub(&w));
        let nz = xi_norm(&z);
        if let Some(prev) = increments.last() {
            let r = inc / prev;
            ratios.push(r);
            streak = if r >= 1.0 { streak + 1 } else { 0 };
        }
        increments.push(inc);
        norms.push(nz);
        w = z;
        if inc == 0.0 || inc <= cfg.tol * nz {
            status = FixedPointStatus::Converged;
            break;
        }
        if streak >= 3 {
            status = FixedPointStatus::NoContraction;
            break;
        }
    }
    let primal_mismatch = if cfg.cross_check {
        cross_check(&w, z0, c, params, h).ok()
    } else {
        None
    };
    Ok(FixedPointReport {
        status,
        norms,
        residual: *increments.last().unwrap_or(&0.0),
        increments,
        ratios,
        c0,
        c1,
        primal_mismatch,
        limit: w,
    })
}

fn cross_check(
    w: &LinearTrajectory,
    z0: &Field3,
    c: &ConstantState,
    params: &ModelParams,
    dt: f64,
) -> Result<f64> {
    let grid = z0.grid;
    let t_final = *w.times.last().unwrap();
    let f0 = z0.map(|v| v + c.f_inf);
    let mut cfg = PrimalRunConfig::new(*params, grid, t_final, dt);
    cfg.snap_every = dt;
    cfg.track_dissipation = false;
    let traj = run_primal(&f0, &cfg)?;
    let mut worst: f64 = 0.0;
    for (f, z) in traj.snapshots.iter().zip(&w.snapshots) {
        let shifted = f.map(|v| v - c.f_inf);
        worst = worst.max(l2_distance(&shifted, z));
    }
    Ok(worst)
}

/// Largest multiple of the unit-`H^2` direction `dir` (used as both the
/// initial iterate and the initial data) for which the iteration still
/// converges, by bisection on `[0, s_max]`.
pub fn contraction_radius(
    dir: &Field3,
    c: &ConstantState,
    params: &ModelParams,
    cfg: &FixedPointConfig,
    s_max: f64,
    bisections: usize,
) -> Result<f64> {
    let unit = {
        let n = sobolev_norm(dir, 2);
        if n == 0.0 {
            return Err(Error::InvalidParameter {
                name: "direction",
                msg: "must be non-zero".into(),
            });
        }
        dir.map(|v| v / n)
    };
    let mut cfg = cfg.clone();
    cfg.cross_check = false;
    cfg.radius = f64::INFINITY;
    let converges = |s: f64| -> Result<bool> {
        let w0 = unit.map(|v| v * s);
        match gamma_iterate(&w0, &w0, c, params, &cfg) {
            Ok(r) => Ok(r.status == FixedPointStatus::Converged),
            Err(e) if e.is_numerical() => Ok(false),
            Err(e) => Err(e),
        }
    };
    if converges(s_max)? {
        return Ok(s_max);
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Chain the iteration over consecutive unit intervals, handing the terminal
/// state of each limit to the next interval as initial data.
pub fn gamma_chain(
    z0: &Field3,
    c: &ConstantState,
    params: &ModelParams,
    cfg: &FixedPointConfig,
    intervals: usize,
) -> Result<Vec<FixedPointReport>> {
    let mut cfg = cfg.clone();
    cfg.t_final = 1.0;
    let mut start = z0.clone();
    let mut out = Vec::with_capacity(intervals);
    for _ in 0..intervals {
        let r = gamma_iterate(&start, &start, c, params, &cfg)?;
        start = r.limit.last().clone();
        out.push(r);
    }
    Ok(out)
}

/// `cos(n . xi)` on the grid.
pub fn mode_field(grid: GridSpec, n: (i64, i64, i64)) -> Field3 {
    Field3::from_fn(grid, |x, y, t| {
        (n.0 as f64 * x + n.1 as f64 * y + n.2 as f64 * t).cos()
    })
}

/// Least-squares slope of `y` against `t`.
pub fn fit_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    num / den
}

/// Log-decay rate of the `cos(n . xi)` amplitude of `f_inf + a cos(n . xi)`
/// under the nonlinear solver, sampled every `sample` time units.
pub fn measure_primal_rate(
    c: &ConstantState,
    params: &ModelParams,
    n: (i64, i64, i64),
    amplitude: f64,
    grid: GridSpec,
    t_final: f64,
    dt: f64,
    sample: f64,
) -> Result<f64> {
    let phi = mode_field(grid, n);
    let norm = l2_sq(&phi);
    let f0 = phi.map(|v| c.f_inf + amplitude * v);
    let mut cfg = PrimalRunConfig::new(*params, grid, t_final, dt);
    cfg.snap_every = sample;
    cfg.track_dissipation = false;
    let traj = run_primal(&f0, &cfg)?;
    let logs: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|f| {
            let dev = f.map(|v| v - c.f_inf);
            (crate::fields::inner3(&dev, &phi) / norm).abs().ln()
        })
        .collect();
    Ok(fit_slope(&traj.times, &logs))
}

/// Log-decay rate of `||z||` for the linear solve started from
/// `cos(n . xi)` with no source; includes the true angular coupling.
pub fn coupled_mode_rate(
    c: &ConstantState,
    params: &ModelParams,
    n: (i64, i64, i64),
    grid: GridSpec,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let z0 = mode_field(grid, n);
    let z = solve_s(&Source::zero(grid), &z0, c, params, t_final, dt)?;
    let logs: Vec<f64> = z.snapshots.iter().map(|f| 0.5 * l2_sq(f).ln()).collect();
    Ok(fit_slope(&z.times, &logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::cubic(16).unwrap()
    }

    #[test]
    fn constants_are_stationary() {
        let p = ModelParams { pe: 1.3, de: 0.7 };
        for f in [0.01, 0.1, 1.0 / TWO_PI] {
            let r = stationary_residual(&Field3::constant(grid(), f), &p);
            assert!(r <= 1e-11, "{r}");
        }
    }

    #[test]
    fn mode_rate_examples() {
        let c = ConstantState::new(1.0 / (8.0 * std::f64::consts::PI)).unwrap();
        let p = ModelParams { pe: 0.0, de: 1.0 };
        assert_eq!(mode_rate(&c, &p, (0, 0, 1)), Complex64::new(-1.0, 0.0));
        assert!((mode_rate(&c, &p, (1, 0, 0)).re + 1.0).abs() < 1e-15);
        assert_eq!(mode_rate(&c, &p, (0, 0, 0)).norm(), 0.0);
        let p = ModelParams { pe: 3.0, de: 1.0 };
        assert_eq!(mode_rate(&c, &p, (0, 0, 1)), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn constant_state_bounds() {
        assert!(ConstantState::new(0.0).is_err());
        assert!(ConstantState::new(1.0 / TWO_PI).is_err());
        assert!(ConstantState::new_closed(1.0 / TWO_PI).is_ok());
    }

    #[test]
    fn theta_multiply_matches_grid_product() {
        let g = GridSpec::new(4, 4, 16).unwrap();
        let t3 = TrigTransform::new(&g.dims3());
        let f = Field3::from_fn(g, |x, _, t| 0.3 + x.cos() * (2.0 * t).sin() + 0.2 * (3.0 * t).cos() - 0.1 * t.sin());
        let c = t3.forward(&f.values);
        for sin_factor in [false, true] {
            let got = t3.inverse(&theta_multiply(&c, g.ntheta, sin_factor));
            let want = Field3::from_fn(g, |x, _, t| {
                let e = if sin_factor { t.sin() } else { t.cos() };
                e * (0.3 + x.cos() * (2.0 * t).sin() + 0.2 * (3.0 * t).cos() - 0.1 * t.sin())
            });
            for (a, b) in got.iter().zip(&want.values) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn g_vanishes_on_zero_and_constants() {
        let p = ModelParams { pe: 0.8, de: 1.1 };
        assert_eq!(apply_g(&Field3::zeros(grid()), &p).max_abs(), 0.0);
        assert!(apply_g(&Field3::constant(grid(), 0.05), &p).max_abs() < 1e-15);
    }

    #[test]
    fn s_decays_angular_mode_at_unit_rate() {
        let g = grid();
        let c = ConstantState::new(0.05).unwrap();
        let p = ModelParams { pe: 0.0, de: 1.0 };
        let z0 = mode_field(g, (0, 0, 1)).map(|v| 1e-2 * v);
        let z = solve_s(&Source::zero(g), &z0, &c, &p, 1.0, 1e-3).unwrap();
        let want = z0.map(|v| v * (-1.0f64).exp());
        assert!(l2_distance(z.last(), &want) < 1e-6 * l2_sq(&z0).sqrt());
        let zero = solve_s(&Source::zero(g), &Field3::zeros(g), &c, &p, 0.1, 1e-2).unwrap();
        assert_eq!(zero.last().max_abs(), 0.0);
    }

    #[test]
    fn fp_constant_examples() {
        let (c0, c1) = fp_constants(&ModelParams { pe: 0.0, de: 1.0 }, 1.0);
        assert!((c0 - 1f64.exp()).abs() < 1e-15);
        assert!((c1 - 1.5f64.exp()).abs() < 1e-14);
        let (c0, c1) = fp_constants(&ModelParams { pe: 2.0, de: 4.0 }, 1.0);
        assert!((c0 - 2f64.exp()).abs() < 1e-14);
        assert!((c1 - 2f64.sqrt() * 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_iterate_is_fixed_after_one_pass() {
        let g = GridSpec::cubic(8).unwrap();
        let c = ConstantState::new(0.05).unwrap();
        let p = ModelParams { pe: 0.5, de: 1.0 };
        let cfg = FixedPointConfig::new(1.0, 0.05);
        let z = Field3::zeros(g);
        let r = gamma_iterate(&z, &z, &c, &p, &cfg).unwrap();
        assert_eq!(r.status, FixedPointStatus::Converged);
        assert_eq!(r.increments.len(), 1);
        assert_eq!(r.residual, 0.0);
    }
}
