//! Conservative pseudospectral solver for the density equation in flux form,
//! plus the planar marginal equation `d_t rho + Pe div((1 - rho) p) = De lap rho`.
//!
//! The constant-coefficient part `De lap_x f + d_theta^2 f` is implicit and
//! diagonal in coefficient space; the remainder
//! `-div[Pe (1 - rho) f e + De (rho grad f - f grad rho)]` is explicit and
//! formed on a 3/2-padded grid.

use crate::diagnostics::{record_with, DiagnosticsRow};
use crate::entropy::dissipation_with;
use crate::error::{Error, Result};
use crate::fields::spectral::{
    derivative_coeffs, padded_len, second_derivative_coeffs, slot_wavenumber, Dealias,
    TrigTransform,
};
use crate::fields::{
    marginal_rho, total_mass, Field2, Field3, FieldF, FieldRho, FieldVec2, GridSpec, Spectral,
    TWO_PI,
};
use crate::imex::{ars222_step, SplitOperator};
use crate::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// `dt = cfl * min(h) / max(|Pe|, 1)`.
    Cfl(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalRunConfig {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub t_final: f64,
    pub time_step: TimeStep,
    pub imex: bool,
    /// Time between stored snapshots; the final time is always stored.
    pub snap_every: f64,
    /// Pointwise lower clamp on f after each step. Runs using it are not certified.
    pub clamp: Option<f64>,
    /// Accumulate the dissipation integral step by step.
    pub track_dissipation: bool,
    pub blowup_threshold: f64,
}

impl PrimalRunConfig {
    pub fn new(params: ModelParams, grid: GridSpec, t_final: f64, dt: f64) -> Self {
        PrimalRunConfig {
            params,
            grid,
            t_final,
            time_step: TimeStep::Fixed(dt),
            imex: true,
            snap_every: t_final,
            clamp: None,
            track_dissipation: true,
            blowup_threshold: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |name, msg: String| Err(Error::InvalidParameter { name, msg });
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final", format!("must be positive, got {}", self.t_final));
        }
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return bad("dt", format!("must be positive, got {dt}"))
            }
            TimeStep::Cfl(c) if !(c > 0.0 && c.is_finite()) => {
                return bad("cfl", format!("must be positive, got {c}"))
            }
            _ => {}
        }
        if !(self.snap_every > 0.0) {
            return bad("snap_every", format!("must be positive, got {}", self.snap_every));
        }
        Ok(())
    }

    /// Step count and uniform step size covering `[0, t_final]`.
    pub fn steps(&self) -> (usize, f64) {
        let target = match self.time_step {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl(c) => {
                let h = self.grid.hx().min(self.grid.hy());
                c * h / self.params.pe.abs().max(1.0)
            }
        };
        let n = (self.t_final / target).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

/// Split right-hand side of the density equation in coefficient space.
#[derive(Clone, Debug)]
pub struct PrimalOperator {
    params: ModelParams,
    grid: GridSpec,
    stiff: Vec<f64>,
    pad3: Dealias,
    pad2: Dealias,
    cos_pad: Vec<f64>,
    sin_pad: Vec<f64>,
    transform: TrigTransform,
}

impl PrimalOperator {
    pub fn new(params: ModelParams, grid: GridSpec) -> Self {
        let dims = grid.dims3();
        let mut stiff = vec![0.0; grid.len()];
        for (idx, s) in stiff.iter_mut().enumerate() {
            let k3 = slot_wavenumber(idx % grid.ntheta) as f64;
            let k2 = slot_wavenumber((idx / grid.ntheta) % grid.ny) as f64;
            let k1 = slot_wavenumber(idx / (grid.ntheta * grid.ny)) as f64;
            *s = -params.de * (k1 * k1 + k2 * k2) - k3 * k3;
        }
        let mt = padded_len(grid.ntheta);
        let ht = TWO_PI / mt as f64;
        PrimalOperator {
            params,
            grid,
            stiff,
            pad3: Dealias::new(&dims),
            pad2: Dealias::new(&grid.dims2()),
            cos_pad: (0..mt).map(|k| (k as f64 * ht).cos()).collect(),
            sin_pad: (0..mt).map(|k| (k as f64 * ht).sin()).collect(),
            transform: TrigTransform::new(&dims),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn transform(&self) -> &TrigTransform {
        &self.transform
    }

    /// Coefficients of the marginal `rho` (2-D) from 3-D coefficients of `f`.
    pub fn rho_coeffs(&self, c: &[f64]) -> Vec<f64> {
        c.iter()
            .step_by(self.grid.ntheta)
            .map(|v| TWO_PI * v)
            .collect()
    }

    /// Explicit remainder `-div[Pe (1 - rho) f e + De (rho grad f - f grad rho)]`.
    pub fn explicit_coeffs(&self, c: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let dims = g.dims3();
        let dims2 = g.dims2();
        let rc = self.rho_coeffs(c);
        let f = self.pad3.lift(c);
        let f1 = self.pad3.lift(&derivative_coeffs(c, &dims, 0));
        let f2 = self.pad3.lift(&derivative_coeffs(c, &dims, 1));
        let r = self.pad2.lift(&rc);
        let r1 = self.pad2.lift(&derivative_coeffs(&rc, &dims2, 0));
        let r2 = self.pad2.lift(&derivative_coeffs(&rc, &dims2, 1));
        let mt = self.cos_pad.len();
        let (pe, de) = (self.params.pe, self.params.de);
        let mut j1 = vec![0.0; f.len()];
        let mut j2 = vec![0.0; f.len()];
        for idx in 0..f.len() {
            let x = idx / mt;
            let k = idx % mt;
            let adv = pe * (1.0 - r[x]) * f[idx];
            j1[idx] = adv * self.cos_pad[k] + de * (r[x] * f1[idx] - f[idx] * r1[x]);
            j2[idx] = adv * self.sin_pad[k] + de * (r[x] * f2[idx] - f[idx] * r2[x]);
        }
        let j1 = self.pad3.lower(&j1);
        let j2 = self.pad3.lower(&j2);
        let d1 = derivative_coeffs(&j1, &dims, 0);
        let d2 = derivative_coeffs(&j2, &dims, 1);
        d1.iter().zip(&d2).map(|(a, b)| -(a + b)).collect()
    }

    /// Full tendency in coefficient space.
    pub fn rhs_coeffs(&self, c: &[f64]) -> Vec<f64> {
        let mut n = self.explicit_coeffs(c);
        for ((v, s), ci) in n.iter_mut().zip(&self.stiff).zip(c) {
            *v += s * ci;
        }
        n
    }
}

impl SplitOperator for PrimalOperator {
    fn stiff_symbol(&self) -> &[f64] {
        &self.stiff
    }

    fn explicit(&self, _t: f64, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.explicit_coeffs(y))
    }
}

/// `-div_x[Pe (1 - rho) f e - De ((1 - rho) grad f + f grad rho)] + d_theta^2 f`.
pub fn rhs_primal(f: &FieldF, params: &ModelParams) -> FieldF {
    let op = PrimalOperator::new(*params, f.grid);
    let c = op.transform.forward(&f.values);
    Field3 {
        grid: f.grid,
        values: op.transform.inverse(&op.rhs_coeffs(&c)),
    }
}

fn check_initial(f0: &FieldF) -> Result<()> {
    if let Some((node, &value)) = f0
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| **v < -1e-12 || !v.is_finite())
    {
        return Err(Error::DegenerateState {
            what: "f0",
            node,
            value,
        });
    }
    let rho = marginal_rho(f0);
    if let Some((node, &value)) = rho
        .values
        .iter()
        .enumerate()
        .find(|(_, r)| **r > 1.0 + 1e-12)
    {
        return Err(Error::DegenerateState {
            what: "rho0",
            node,
            value,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldF>,
    pub rows: Vec<DiagnosticsRow>,
    pub dt: f64,
    pub steps: usize,
    /// False when the positivity clamp was active.
    pub certified: bool,
    /// Largest marginal seen over all steps.
    pub max_rho: f64,
    /// Smallest density seen over all steps.
    pub min_f: f64,
}

impl PrimalTrajectory {
    pub fn last(&self) -> &FieldF {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }
}

/// Integrate and call `observer(step, t, f)` after every step (and at `t = 0`).
pub fn run_primal_observed(
    f0: &FieldF,
    config: &PrimalRunConfig,
    observer: &mut dyn FnMut(usize, f64, &FieldF) -> Result<()>,
) -> Result<PrimalTrajectory> {
    config.validate()?;
    if f0.grid != config.grid {
        return Err(Error::ShapeMismatch {
            expected: config.grid.len(),
            got: f0.grid.len(),
        });
    }
    check_initial(f0)?;
    let params = config.params;
    let grid = config.grid;
    let op = PrimalOperator::new(params, grid);
    let sp = Spectral::new(grid);
    let (nsteps, dt) = config.steps();
    let snap_stride = ((config.snap_every / dt).round() as usize).max(1);

    let mut coeffs = op.transform.forward(&f0.values);
    let mut f = f0.clone();
    let mut traj = PrimalTrajectory {
        times: vec![],
        snapshots: vec![],
        rows: vec![],
        dt,
        steps: nsteps,
        certified: config.clamp.is_none(),
        max_rho: marginal_rho(f0).max(),
        min_f: f0.min(),
    };
    let mut cum_d = 0.0;
    let mut cum_m = 0.0;
    let dissip = |f: &FieldF| -> f64 {
        if config.track_dissipation {
            dissipation_with(&sp, f, &params).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        }
    };
    let mut d_prev = dissip(f0);
    let mut m_prev = total_mass(f0);

    let snapshot = |traj: &mut PrimalTrajectory, t: f64, f: &FieldF, cd: f64, cm: f64| {
        let rho = marginal_rho(f);
        let mut row = record_with(&sp, f, &rho, None, 0.0, t, &params);
        if config.track_dissipation {
            row.cum_dissipation = Some(cd);
            row.cum_mass_time = Some(cm);
        }
        traj.times.push(t);
        traj.snapshots.push(f.clone());
        traj.rows.push(row);
    };
    snapshot(&mut traj, 0.0, f0, 0.0, 0.0);
    observer(0, 0.0, f0)?;

    for n in 0..nsteps {
        let t = n as f64 * dt;
        coeffs = ars222_step(&op, t, &coeffs, dt, config.imex)?;
        let t_new = (n + 1) as f64 * dt;
        f.values = op.transform.inverse(&coeffs);
        let max_abs = f.max_abs();
        if !max_abs.is_finite() || max_abs > config.blowup_threshold {
            return Err(Error::BlowupDetected {
                t: t_new,
                max_abs,
            });
        }
        if let Some(c) = config.clamp {
            f.values.iter_mut().for_each(|v| *v = v.max(c));
            coeffs = op.transform.forward(&f.values);
        }
        traj.max_rho = traj.max_rho.max(marginal_rho(&f).max());
        traj.min_f = traj.min_f.min(f.min());
        let d_new = dissip(&f);
        let m_new = total_mass(&f);
        cum_d += 0.5 * dt * (d_prev + d_new);
        cum_m += 0.5 * dt * (m_prev + m_new);
        d_prev = d_new;
        m_prev = m_new;
        observer(n + 1, t_new, &f)?;
        if (n + 1) % snap_stride == 0 || n + 1 == nsteps {
            snapshot(&mut traj, t_new, &f, cum_d, cum_m);
        }
    }
    Ok(traj)
}

pub fn run_primal(f0: &FieldF, config: &PrimalRunConfig) -> Result<PrimalTrajectory> {
    run_primal_observed(f0, config, &mut |_, _, _| Ok(()))
}

/// Single IMEX step in physical space.
pub fn step_primal(f: &FieldF, dt: f64, config: &PrimalRunConfig) -> Result<FieldF> {
    let op = PrimalOperator::new(config.params, f.grid);
    let c = op.transform.forward(&f.values);
    let c = ars222_step(&op, 0.0, &c, dt, config.imex)?;
    let out = Field3 {
        grid: f.grid,
        values: op.transform.inverse(&c),
    };
    let max_abs = out.max_abs();
    if !max_abs.is_finite() || max_abs > config.blowup_threshold {
        return Err(Error::BlowupDetected { t: dt, max_abs });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftConfig {
    pub params: ModelParams,
    pub t_final: f64,
    pub dt: f64,
    pub imex: bool,
}

impl DriftConfig {
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.dt).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoTrajectory {
    pub times: Vec<f64>,
    pub rho: Vec<FieldRho>,
}

struct DriftOperator<'a> {
    grid: GridSpec,
    pe: f64,
    stiff: Vec<f64>,
    pad: Dealias,
    transform: TrigTransform,
    /// Polarization samples at the step start and end.
    p_start: Option<(&'a FieldVec2, &'a FieldVec2)>,
    t0: f64,
    dt: f64,
}

impl DriftOperator<'_> {
    fn p_at(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (a, b) = self.p_start?;
        let s = ((t - self.t0) / self.dt).clamp(0.0, 1.0);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| x + s * (y - x)).collect()
        };
        Some((mix(&a.p1, &b.p1), mix(&a.p2, &b.p2)))
    }
}

impl SplitOperator for DriftOperator<'_> {
    fn stiff_symbol(&self) -> &[f64] {
        &self.stiff
    }

    fn explicit(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let (p1, p2) = match self.p_at(t) {
            Some(p) if self.pe != 0.0 => p,
            _ => return Ok(vec![0.0; y.len()]),
        };
        let dims = self.grid.dims2();
        let r = self.pad.lift(y);
        let q1 = self.pad.lift(&self.transform.forward(&p1));
        let q2 = self.pad.lift(&self.transform.forward(&p2));
        let a1: Vec<f64> = (0..r.len()).map(|i| (1.0 - r[i]) * q1[i]).collect();
        let a2: Vec<f64> = (0..r.len()).map(|i| (1.0 - r[i]) * q2[i]).collect();
        let d1 = derivative_coeffs(&self.pad.lower(&a1), &dims, 0);
        let d2 = derivative_coeffs(&self.pad.lower(&a2), &dims, 1);
        Ok(d1.iter().zip(&d2).map(|(a, b)| -self.pe * (a + b)).collect())
    }
}

/// Planar marginal equation driven by a sampled polarization trajectory,
/// one sample per step time `n dt`, `n = 0..=steps`.
pub fn run_rho_drift(
    rho0: &FieldRho,
    p_source: Option<&[FieldVec2]>,
    config: &DriftConfig,
) -> Result<RhoTrajectory> {
    config.params.validate()?;
    if !(config.dt > 0.0 && config.t_final > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            msg: "dt and t_final must be positive".into(),
        });
    }
    if let Some((node, &value)) = rho0
        .values
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r >= -1e-12 && **r <= 1.0 + 1e-12))
    {
        return Err(Error::DegenerateState {
            what: "rho0",
            node,
            value,
        });
    }
    let (nsteps, dt) = config.steps();
    if let Some(p) = p_source {
        if p.len() != nsteps + 1 {
            return Err(Error::TrajectoryLengthMismatch {
                expected: nsteps + 1,
                got: p.len(),
            });
        }
    }
    let grid = rho0.grid;
    let dims = grid.dims2();
    let lap_x = second_derivative_coeffs(&vec![1.0; grid.len_x()], &dims, 0);
    let lap_y = second_derivative_coeffs(&vec![1.0; grid.len_x()], &dims, 1);
    let stiff: Vec<f64> = lap_x
        .iter()
        .zip(&lap_y)
        .map(|(a, b)| config.params.de * (a + b))
        .collect();
    let transform = TrigTransform::new(&dims);
    let mut op = DriftOperator {
        grid,
        pe: config.params.pe,
        stiff,
        pad: Dealias::new(&dims),
        transform: transform.clone(),
        p_start: None,
        t0: 0.0,
        dt,
    };
    let mut c = transform.forward(&rho0.values);
    let mut out = RhoTrajectory {
        times: vec![0.0],
        rho: vec![rho0.clone()],
    };
    for n in 0..nsteps {
        let t = n as f64 * dt;
        op.t0 = t;
        op.p_start = p_source.map(|p| (&p[n], &p[n + 1]));
        c = ars222_step(&op, t, &c, dt, config.imex)?;
        let values = transform.inverse(&c);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowupDetected {
                t: t + dt,
                max_abs: f64::INFINITY,
            });
        }
        out.times.push((n + 1) as f64 * dt);
        out.rho.push(Field2 { grid, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{l2_distance, l2_distance2, pairwise_sum};
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cubic(n).unwrap()
    }

    #[test]
    fn constants_are_stationary() {
        let g = grid(8);
        for pe in [0.0, 1.5] {
            let p = ModelParams { pe, de: 0.7 };
            let f = Field3::constant(g, 0.09);
            let r = rhs_primal(&f, &p);
            assert!(r.max_abs() < 1e-14);
            let cfg = PrimalRunConfig::new(p, g, 0.1, 0.05);
            assert_eq!(step_primal(&f, 0.05, &cfg).unwrap().values, {
                let c = TrigTransform::new(&g.dims3());
                c.inverse(&c.forward(&f.values))
            });
        }
    }

    #[test]
    fn tendency_has_zero_mean() {
        let g = grid(12);
        let p = ModelParams { pe: 2.0, de: 1.0 };
        let f = Field3::from_fn(g, |x, y, t| {
            0.08 * (1.0 + 0.4 * (x - t).sin() + 0.3 * (y + 2.0 * t).cos() * x.cos())
        });
        let r = rhs_primal(&f, &p);
        let mean = pairwise_sum(&r.values) * g.cell();
        assert!(mean.abs() < 1e-11 * crate::fields::lp_norm(&f, 2.0));
    }

    #[test]
    fn theta_independent_data_follow_heat_flow() {
        let g = grid(8);
        let p = ModelParams { pe: 0.0, de: 1.3 };
        let f = Field3::from_fn(g, |x, y, _| (0.4 + 0.1 * x.cos() + 0.05 * (x + y).sin()) / TWO_PI);
        let r = rhs_primal(&f, &p);
        let sp = Spectral::new(g);
        let heat = sp.laplacian_x(&f).map(|v| p.de * v);
        assert!(l2_distance(&r, &heat) < 1e-13);
    }

    #[test]
    fn heat_mode_decay() {
        let g = grid(8);
        let p = ModelParams { pe: 0.0, de: 1.0 };
        let f0 = Field3::from_fn(g, |x, _, _| (0.5 + 0.1 * x.cos()) / TWO_PI);
        let cfg = PrimalRunConfig::new(p, g, 0.1, 1e-3);
        let traj = run_primal(&f0, &cfg).unwrap();
        let want = Field3::from_fn(g, |x, _, _| (0.5 + 0.1 * (-0.1f64).exp() * x.cos()) / TWO_PI);
        let err = traj.last().values.iter().zip(&want.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rho_drift_heat_mode() {
        let g = grid(8);
        let p = ModelParams { pe: 0.0, de: 0.5 };
        let rho0 = Field2::from_fn(g, |x, _| 0.5 + 0.1 * x.cos());
        let cfg = DriftConfig {
            params: p,
            t_final: 0.5,
            dt: 1e-3,
            imex: true,
        };
        let tr = run_rho_drift(&rho0, None, &cfg).unwrap();
        let want = Field2::from_fn(g, |x, _| 0.5 + 0.1 * (-0.25f64).exp() * x.cos());
        assert!(l2_distance2(tr.rho.last().unwrap(), &want) < 1e-7);
        let c = Field2::constant(g, 0.3);
        let tc = run_rho_drift(&c, None, &cfg).unwrap();
        assert!(l2_distance2(tc.rho.last().unwrap(), &c) < 1e-14);
    }

    #[test]
    fn rho_drift_checks_source_length() {
        let g = grid(4);
        let rho0 = Field2::constant(g, 0.2);
        let cfg = DriftConfig {
            params: ModelParams { pe: 1.0, de: 1.0 },
            t_final: 0.1,
            dt: 0.05,
            imex: true,
        };
        let p = vec![
            FieldVec2 {
                grid: g,
                p1: vec![0.0; 16],
                p2: vec![0.0; 16],
            };
            2
        ];
        assert!(matches!(
            run_rho_drift(&rho0, Some(&p), &cfg),
            Err(Error::TrajectoryLengthMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn cfl_step_size() {
        let g = grid(16);
        let mut cfg = PrimalRunConfig::new(ModelParams { pe: 4.0, de: 1.0 }, g, 1.0, 0.1);
        cfg.time_step = TimeStep::Cfl(0.5);
        let (n, dt) = cfg.steps();
        assert!(dt <= 0.5 * (2.0 * PI / 16.0) / 4.0 + 1e-15);
        assert!((n as f64 * dt - 1.0).abs() < 1e-12);
    }
}
