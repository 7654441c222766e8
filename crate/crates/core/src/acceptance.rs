//! The acceptance suite: twelve structural checks, each producing one
//! pass/fail line. `Size::Full` uses the stated sample counts; `Size::Small`
//! shortens horizons and sample counts with unchanged tolerances.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::diagnostics::{check_interpolation, entropy_ledger, gajewski_monitor};
use crate::dual_solver::{run_dual, DualRunConfig};
use crate::error::{Error, Result};
use crate::fields::spectral::{slot_wavenumber, TrigTransform};
use crate::fields::{
    l2_distance2, lp_norm, marginal_rho, Field2, Field3, FieldF, GridSpec, TWO_PI,
};
use crate::initial::{random_trig, rng, rough_admissible, smooth_random, theta_redistribution_pair};
use crate::mollify::{budget_for, regularize_initial, MollifierSpec};
use crate::primal_solver::{
    run_primal, run_primal_observed, run_rho_drift, DriftConfig, PrimalRunConfig,
};
use crate::stationary::{
    apply_g, energy_estimate, gamma_iterate, measure_primal_rate, mode_rate, solve_s,
    sobolev_norm, ConstantState, FixedPointConfig, FixedPointStatus, Source,
};
use crate::sweep::{run_sweep, SweepConfig};
use crate::ModelParams;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Size {
    Small,
    Full,
}

impl FromStr for Size {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Size::Small),
            "full" => Ok(Size::Full),
            other => Err(Error::Config {
                key: "size".into(),
                msg: format!("expected small or full, got `{other}`"),
            }),
        }
    }
}

pub const TITLES: [&str; 12] = [
    "boundedness by entropy",
    "entropy dissipation at Pe = 0",
    "entropy budget at Pe != 0",
    "mass conservation",
    "heat-equation marginal",
    "Gajewski distance monitor",
    "double-limit convergence",
    "linearized stationary rates",
    "fixed-point contraction",
    "operator estimates",
    "interpolation checker",
    "mollifier contract",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail
        )
    }
}

pub const COUNT: usize = 12;

/// Run one criterion; solver errors turn into a failing outcome.
pub fn run(id: usize, size: Size) -> Outcome {
    assert!((1..=COUNT).contains(&id), "criterion ids run from 1 to {COUNT}");
    let res = match id {
        1 => boundedness(size),
        2 => dissipation_pe0(size),
        3 => budget_pe(size),
        4 => mass_conservation(size),
        5 => heat_marginal(size),
        6 => gajewski(size),
        7 => double_limit(size),
        8 => stationary_rates(size),
        9 => fixed_point(size),
        10 => operator_estimates(size),
        11 => interpolation(size),
        _ => mollifier(size),
    };
    let (passed, detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome {
        id,
        title: TITLES[id - 1],
        passed,
        detail,
    }
}

pub fn run_all(size: Size) -> Vec<Outcome> {
    (1..=COUNT).map(|id| run(id, size)).collect()
}

fn pick<T>(size: Size, small: T, full: T) -> T {
    match size {
        Size::Small => small,
        Size::Full => full,
    }
}

fn grid16() -> GridSpec {
    GridSpec::cubic(16).expect("valid grid")
}

fn params(pe: f64) -> ModelParams {
    ModelParams { pe, de: 1.0 }
}

fn dual_cfg(pe: f64, eps: f64, t: f64, snap: f64) -> DualRunConfig {
    let mut c = DualRunConfig::new(params(pe), eps, 3, grid16(), t);
    c.snap_every = snap;
    c
}

fn boundedness(size: Size) -> Result<(bool, String)> {
    let seeds = pick(size, 2, 5) as u64;
    let t = pick(size, 0.05, 0.1);
    let cases: Vec<(u64, f64, f64)> = (1..=seeds)
        .flat_map(|s| [0.0, 1.0].into_iter().flat_map(move |pe| [0.1, 0.01].map(|e| (s, pe, e))))
        .collect();
    let res: Vec<(f64, f64, usize)> = cases
        .par_iter()
        .map(|&(seed, pe, eps)| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, seed);
            let tr = run_dual(&f0, &dual_cfg(pe, eps, t, t / 10.0))?;
            let minf = tr.snapshots.iter().map(|s| s.f.min()).fold(f64::INFINITY, f64::min);
            let maxr = tr.snapshots.iter().map(|s| s.rho.max()).fold(f64::NEG_INFINITY, f64::max);
            Ok((minf, maxr, tr.snapshots.len()))
        })
        .collect::<Result<_>>()?;
    let minf = res.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let maxr = res.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let snaps: usize = res.iter().map(|r| r.2).sum();
    Ok((
        minf > 0.0 && maxr < 1.0,
        format!("{} runs, {snaps} snapshots, min f = {minf:.3e}, max rho = {maxr:.6}", res.len()),
    ))
}

fn dissipation_pe0(size: Size) -> Result<(bool, String)> {
    let seeds = pick(size, 1, 2) as u64;
    let t = pick(size, 0.1, 0.2);
    let p = params(0.0);
    let cases: Vec<(u64, f64)> = (1..=seeds).flat_map(|s| [0.1, 0.01].map(|e| (s, e))).collect();
    let dual: Vec<f64> = cases
        .par_iter()
        .map(|&(seed, eps)| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, seed);
            let tr = run_dual(&f0, &dual_cfg(0.0, eps, t, 0.01))?;
            let led = entropy_ledger(&tr.rows, eps, &p);
            Ok(led.entry("monotone").expect("monotone entry").worst_margin)
        })
        .collect::<Result<_>>()?;
    let primal: Vec<f64> = (1..=seeds + 1)
        .into_par_iter()
        .map(|seed| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, seed + 100);
            let mut cfg = PrimalRunConfig::new(p, grid16(), t, 1e-3);
            cfg.snap_every = 0.005;
            let tr = run_primal(&f0, &cfg)?;
            let led = entropy_ledger(&tr.rows, 0.0, &p);
            Ok(led.entry("monotone").expect("monotone entry").worst_margin)
        })
        .collect::<Result<_>>()?;
    let wd = dual.iter().copied().fold(f64::INFINITY, f64::min);
    let wp = primal.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        wd >= 0.0 && wp >= 0.0,
        format!(
            "{} dual and {} primal runs, worst monotonicity margins {wd:.3e} (dual), {wp:.3e} (primal)",
            dual.len(),
            primal.len()
        ),
    ))
}

fn budget_pe(size: Size) -> Result<(bool, String)> {
    let seeds = pick(size, 1, 2) as u64;
    let t = pick(size, 0.1, 0.2);
    let epss: Vec<f64> = pick(size, vec![0.1], vec![0.1, 0.01]);
    let cases: Vec<(u64, f64, f64)> = (1..=seeds)
        .flat_map(|s| {
            let epss = epss.clone();
            [0.5, 2.0].into_iter().flat_map(move |pe| epss.clone().into_iter().map(move |e| (s, pe, e)))
        })
        .collect();
    let margins: Vec<f64> = cases
        .par_iter()
        .map(|&(seed, pe, eps)| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, seed);
            let tr = run_dual(&f0, &dual_cfg(pe, eps, t, 0.01))?;
            let led = entropy_ledger(&tr.rows, eps, &params(pe));
            let e = led.entry("cumulative").expect("cumulative entry");
            Ok(if e.asserted { e.worst_margin } else { f64::NAN })
        })
        .collect::<Result<_>>()?;
    let worst = margins.iter().copied().fold(f64::INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.min(b) });
    Ok((
        worst >= 0.0,
        format!("{} runs at Pe in {{0.5, 2}}, worst ledger margin {worst:.3e}", margins.len()),
    ))
}

fn mass_conservation(size: Size) -> Result<(bool, String)> {
    let t = pick(size, 0.2, 0.5);
    let primal: Vec<f64> = [(0.0, 1u64), (1.0, 2), (2.0, 3)]
        .par_iter()
        .map(|&(pe, seed)| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, seed);
            let mut cfg = PrimalRunConfig::new(params(pe), grid16(), t, 1e-3);
            cfg.snap_every = 0.05;
            let tr = run_primal(&f0, &cfg)?;
            let m0 = tr.rows[0].mass_f;
            Ok(tr.rows.iter().map(|r| ((r.mass_f - m0) / m0).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let td = pick(size, 0.1, 0.2);
    let dual: Vec<f64> = [(0.0, 0.1), (1.0, 0.1), (0.0, 0.01), (1.0, 0.01)]
        .par_iter()
        .map(|&(pe, eps)| {
            let f0 = smooth_random(grid16(), 0.5, 0.6, 7);
            let tr = run_dual(&f0, &dual_cfg(pe, eps, td, 0.02))?;
            let q0 = tr.rows[0].mass_eps_u_f;
            Ok(tr
                .rows
                .iter()
                .map(|r| ((r.mass_eps_u_f - q0) / q0).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let wp = primal.iter().copied().fold(0.0, f64::max);
    let wd = dual.iter().copied().fold(0.0, f64::max);
    Ok((
        wp <= 1e-10 && wd <= 1e-8,
        format!("max relative drift {wp:.3e} (primal mass), {wd:.3e} (dual eps u + f)"),
    ))
}

/// Exact heat semigroup applied spectrally to `rho0`.
fn exact_heat(rho0: &Field2, de: f64, t: f64) -> Field2 {
    let g = rho0.grid;
    let tr = TrigTransform::new(&g.dims2());
    let mut c = tr.forward(&rho0.values);
    for (i, v) in c.iter_mut().enumerate() {
        let k1 = slot_wavenumber(i / g.ny) as f64;
        let k2 = slot_wavenumber(i % g.ny) as f64;
        *v *= (-de * (k1 * k1 + k2 * k2) * t).exp();
    }
    Field2 {
        grid: g,
        values: tr.inverse(&c),
    }
}

fn heat_marginal(size: Size) -> Result<(bool, String)> {
    let t = pick(size, 0.5, 1.0);
    let dt = 1e-3;
    let mut worst_rel: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    for (seed, de) in pick(size, vec![(1u64, 1.0)], vec![(1u64, 1.0), (2, 0.5)]) {
        let p = ModelParams { pe: 0.0, de };
        let (f0, _) = theta_redistribution_pair(grid16(), 0.5, seed);
        let rho0 = marginal_rho(&f0);
        let rho_norm = l2_distance2(&rho0, &Field2::constant(rho0.grid, 0.0));
        let drift = run_rho_drift(
            &rho0,
            None,
            &DriftConfig {
                params: p,
                t_final: t,
                dt,
                imex: true,
            },
        )?;
        let mut cfg = PrimalRunConfig::new(p, grid16(), t, dt);
        cfg.track_dissipation = false;
        let mut obs = |n: usize, tn: f64, f: &FieldF| -> Result<()> {
            let r = marginal_rho(f);
            worst_rel = worst_rel.max(l2_distance2(&r, &drift.rho[n]) / rho_norm);
            worst_exact = worst_exact.max(l2_distance2(&r, &exact_heat(&rho0, de, tn)) / rho_norm);
            Ok(())
        };
        run_primal_observed(&f0, &cfg, &mut obs)?;
    }
    Ok((
        worst_rel <= 1e-6 && worst_exact <= 1e-6,
        format!(
            "max ||rho(t) - rho_heat(t)|| / ||rho0|| = {worst_rel:.3e} against the planar solver, {worst_exact:.3e} against the exact semigroup"
        ),
    ))
}

fn gajewski(size: Size) -> Result<(bool, String)> {
    let t = pick(size, 0.1, 0.3);
    let seeds = pick(size, 1, 2) as u64;
    let p = params(0.0);
    let mut mono: f64 = f64::INFINITY;
    let mut lower: f64 = f64::INFINITY;
    let mut samples = 0;
    for seed in 1..=seeds {
        let (f1, f2) = theta_redistribution_pair(grid16(), 0.5, seed);
        let mut cfg = PrimalRunConfig::new(p, grid16(), t, 1e-3);
        cfg.snap_every = 1e-3;
        cfg.track_dissipation = false;
        let a = run_primal(&f1, &cfg)?;
        let b = run_primal(&f2, &cfg)?;
        let rep = gajewski_monitor(&a.times, &a.snapshots, &b.times, &b.snapshots, 1e-6, 0.0)?;
        mono = mono.min(rep.ledger.entry("monotone").expect("monotone").worst_margin);
        lower = lower.min(rep.ledger.entry("lower_bound").expect("lower bound").worst_margin);
        samples += rep.times.len();
    }
    Ok((
        mono >= 0.0 && lower >= 0.0,
        format!("{samples} samples, worst step-monotonicity margin {mono:.3e}, worst lower-bound margin {lower:.3e}"),
    ))
}

fn double_limit(size: Size) -> Result<(bool, String)> {
    let (grid, ks, t) = match size {
        Size::Small => (grid16(), vec![1, 2, 3], 0.1),
        Size::Full => (GridSpec::cubic(32)?, vec![3, 5, 7], 0.5),
    };
    let epss = vec![0.1, 0.05, 0.025];
    let f0 = smooth_random(grid, 0.5, 0.6, 42);
    let cfg = SweepConfig {
        params: params(0.0),
        grid,
        t_final: t,
        epsilons: epss.clone(),
        ks: ks.clone(),
        rtol: 1e-8,
        atol: 1e-10,
        primal_dt: Some(1e-3),
    };
    let res = run_sweep(&f0, &cfg)?;
    let id = |e: f64, k: usize| res.run_index(e, k).expect("run present");
    let mut ok = true;
    let mut worst_eps: f64 = 0.0;
    for &k in &ks {
        let d: Vec<f64> = epss.windows(2).map(|w| res.distance(id(w[0], k), id(w[1], k))).collect();
        ok &= d.windows(2).all(|w| w[1] < w[0]);
        worst_eps = worst_eps.max(d[1] / d[0]);
    }
    let mut worst_k: f64 = 0.0;
    for &e in &epss {
        let d: Vec<f64> = ks.windows(2).map(|w| res.distance(id(e, w[0]), id(e, w[1]))).collect();
        ok &= d.windows(2).all(|w| w[1] < w[0]);
        worst_k = worst_k.max(d[1] / d[0]);
    }
    let mut worst_gap: f64 = 0.0;
    for (r, (gap, tail)) in res.runs.iter().zip(&res.primal_gap) {
        let bound = 10.0 * (r.epsilon + tail);
        ok &= *gap <= bound;
        worst_gap = worst_gap.max(gap / bound);
    }
    Ok((
        ok,
        format!(
            "{} runs; consecutive distance ratios <= {worst_eps:.3} (eps), <= {worst_k:.3} (K); max gap / (10 (eps + tail)) = {worst_gap:.3e}",
            res.runs.len()
        ),
    ))
}

fn stationary_rates(_size: Size) -> Result<(bool, String)> {
    let c = ConstantState::new(1.0 / (8.0 * std::f64::consts::PI))?;
    let p = params(0.0);
    let modes = [(0, 0, 1), (1, 0, 0), (1, 1, 0), (1, 0, 1)];
    let res: Vec<((i64, i64, i64), f64, f64)> = modes
        .par_iter()
        .map(|&n| {
            let measured = measure_primal_rate(&c, &p, n, 1e-4, grid16(), 0.5, 1e-3, 0.05)?;
            Ok((n, measured, mode_rate(&c, &p, n).re))
        })
        .collect::<Result<_>>()?;
    let mut ok = true;
    let mut parts = vec![];
    for (n, m, pred) in &res {
        let rel = ((m - pred) / pred).abs();
        ok &= rel <= 0.05;
        parts.push(format!("{n:?}: {m:.5} vs {pred:.5}"));
    }
    Ok((ok, parts.join(", ")))
}

fn scaled_to_h2(f: &Field3, target: f64) -> Field3 {
    let n = sobolev_norm(f, 2);
    f.map(|v| v * target / n)
}

fn fixed_point(size: Size) -> Result<(bool, String)> {
    let c = ConstantState::new(1.0 / (8.0 * std::f64::consts::PI))?;
    let dt = pick(size, 0.02, 0.01);
    let mut ok = true;
    let mut parts = vec![];
    for pe in [0.0, 0.5] {
        let w0 = scaled_to_h2(&random_trig(grid16(), 1, 17), 1e-3);
        let mut cfg = FixedPointConfig::new(1.0, dt);
        cfg.radius = 1.0;
        let r = gamma_iterate(&w0, &w0, &c, &params(pe), &cfg)?;
        let mism = r.primal_mismatch.unwrap_or(f64::INFINITY);
        let worst = r.ratios.iter().copied().fold(0.0, f64::max);
        ok &= r.status == FixedPointStatus::Converged && r.all_contractive() && mism <= 1e-5;
        parts.push(format!(
            "Pe = {pe}: {:?} after {} passes, max ratio {worst:.3e}, gap {mism:.3e}",
            r.status,
            r.increments.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn operator_estimates(size: Size) -> Result<(bool, String)> {
    let pairs = pick(size, 5, 20) as u64;
    let g = grid16();
    let res: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(1000 + i);
            let pe: f64 = r.gen_range(0.0..2.0);
            let de: f64 = r.gen_range(0.5..2.0);
            let f_inf: f64 = r.gen_range(0.01..0.99) / TWO_PI;
            let c = ConstantState::new(f_inf)?;
            let p = ModelParams { pe, de };
            let z0 = random_trig(g, 2, 2000 + i).map(|v| 0.1 * v);
            let g1 = random_trig(g, 2, 3000 + i);
            let g2 = random_trig(g, 2, 4000 + i);
            let (t_final, dt) = (1.0, 0.01);
            let n = (t_final / dt) as usize;
            let times: Vec<f64> = (0..=n).map(|j| j as f64 * dt).collect();
            let fields = times
                .iter()
                .map(|&t| g1.zip_map(&g2, |a, b| a * (3.0 * t).cos() + b * t))
                .collect();
            let src = Source { times, fields };
            let z = solve_s(&src, &z0, &c, &p, t_final, dt)?;
            let est = energy_estimate(&z, &src, &c, &p);
            Ok((est.lhs, est.rhs))
        })
        .collect::<Result<_>>()?;
    let est_ok = res.iter().all(|(l, r)| *l <= r * (1.0 + 1e-6));
    let worst_ratio = res.iter().map(|(l, r)| l / r).fold(0.0, f64::max);
    let mut worst_hom: f64 = 0.0;
    for i in 0..pairs {
        let w = random_trig(g, 2, 5000 + i).map(|v| 0.05 * v);
        let p = ModelParams {
            pe: 0.3 + 0.1 * i as f64,
            de: 1.0,
        };
        let base = lp_norm(&apply_g(&w, &p), 2.0);
        for s in [2.0, 0.5] {
            let scaled = lp_norm(&apply_g(&w.map(|v| s * v), &p), 2.0);
            worst_hom = worst_hom.max(((scaled - s * s * base) / (s * s * base)).abs());
        }
    }
    Ok((
        est_ok && worst_hom <= 1e-12,
        format!(
            "{pairs} pairs, max LHS / (C0 RHS) = {worst_ratio:.4}; max relative deviation of ||G(s w)|| from s^2 ||G(w)|| = {worst_hom:.2e}"
        ),
    ))
}

fn interpolation(size: Size) -> Result<(bool, String)> {
    let count = pick(size, 5, 20) as u64;
    let coarse = grid16();
    let fine = coarse.refined();
    let times = [0.0, 0.5, 1.0];
    let sample = |g: GridSpec, seed: u64| -> Vec<Field3> {
        // Evaluate the same band-limited function on either grid.
        let base = random_trig(GridSpec::cubic(32).expect("grid"), 2, seed);
        let on_grid = crate::fields::resample(&base, g);
        let shifted = on_grid.map(|v| 0.5 + 0.4 * v);
        times.iter().map(|t| shifted.map(|v| v * (1.0 + 0.5 * t))).collect()
    };
    let mut worst: f64 = 0.0;
    let mut finite = true;
    for seed in 0..count {
        let a = sample(coarse, 7000 + seed);
        let b = sample(fine, 7000 + seed);
        for (m, p) in [(2.0, 2.0), (1.0, 2.0)] {
            let ra = check_interpolation(&times, &a, m, p)?.ratio;
            let rb = check_interpolation(&times, &b, m, p)?.ratio;
            finite &= ra.is_finite() && rb.is_finite();
            worst = worst.max((rb / ra - 1.0).abs());
        }
    }
    Ok((
        finite && worst <= 0.1,
        format!("{count} fields, max relative change under grid doubling {worst:.3e}"),
    ))
}

fn mollifier(size: Size) -> Result<(bool, String)> {
    let count = pick(size, 4, 10) as u64;
    let g = grid16();
    let mut worst: f64 = f64::INFINITY;
    let mut budget_ok = true;
    let mut max_budget = f64::NEG_INFINITY;
    for seed in 0..count {
        let f0 = rough_admissible(g, 9000 + seed);
        for eps in [0.1, 0.01] {
            let r = regularize_initial(&f0, &MollifierSpec::with_default_gamma(eps)?)?;
            let floor = eps / (4.0 * std::f64::consts::PI);
            let m1 = r.f.min() - floor;
            let (vmin, vmax) = r
                .rho
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(1.0 - x), b.max(1.0 - x)));
            worst = worst.min(m1).min(vmin - 0.5 * eps).min(1.0 - 0.5 * eps - vmax);
        }
        let cap = TWO_PI.powi(3) * (1.0 + lp_norm(&f0, 2.0));
        for eps in [0.1, 0.05, 0.025, 0.0125] {
            let b = budget_for(&f0, &MollifierSpec::with_default_gamma(eps)?)?;
            budget_ok &= b.is_finite() && b <= cap;
            max_budget = max_budget.max(b / cap);
        }
    }
    Ok((
        worst >= -1e-12 && budget_ok,
        format!(
            "{count} inputs, worst bound margin {worst:.3e}; max budget / (|cell| (1 + ||f0||_2)) = {max_budget:.3e}"
        ),
    ))
}
