//! Per-snapshot estimate quantities, cumulative entropy ledgers, the
//! Gajewski monitor and the angular interpolation checker.

use std::fmt::Write as _;

use crate::entropy::{dissipation_density, entropy_unchecked, gajewski_distance};
use crate::error::{Error, Result};
use crate::fields::{
    inner3, integrate2, integrate3, l2_distance, lp_norm, marginal_rho, pairwise_sum_by,
    polarization, total_mass, Field3, FieldF, FieldRho, FieldU, Spectral, TWO_PI,
};
use crate::ModelParams;

/// Floor added under square roots before differentiating.
pub const SQRT_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub entropy: f64,
    /// `eps ||u||^2`.
    pub eps_u_sq: f64,
    pub mass_f: f64,
    /// `int (eps u + f)`; equals `mass_f` when no entropy variable is given.
    pub mass_eps_u_f: f64,
    pub min_f: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub dissipation: f64,
    pub dtheta_sqrt_f_sq: f64,
    pub grad_sqrt_vacancy_sq: f64,
    pub vacancy_grad_sqrt_f_sq: f64,
    pub grad_rho_sq: f64,
    pub f_l3: f64,
    pub sqrt_vacancy_f_l10_3: f64,
    pub max_abs_p: f64,
    pub sqrt_floor: f64,
    /// True when the square-root floor is within a few decades of the data.
    pub floor_active: bool,
    /// `eps ||grad u||^2`.
    pub eps_grad_u_sq: f64,
    /// Solver-accumulated `int_0^t (eps ||grad u||^2 + dissipation)`.
    pub cum_dissipation: Option<f64>,
    /// Solver-accumulated `int_0^t mass`.
    pub cum_mass_time: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 21] = [
    "t",
    "entropy",
    "eps_u_sq",
    "mass_f",
    "mass_eps_u_f",
    "min_f",
    "min_rho",
    "max_rho",
    "dissipation",
    "dtheta_sqrt_f_sq",
    "grad_sqrt_vacancy_sq",
    "vacancy_grad_sqrt_f_sq",
    "grad_rho_sq",
    "f_l3",
    "sqrt_vacancy_f_l10_3",
    "max_abs_p",
    "sqrt_floor",
    "floor_active",
    "eps_grad_u_sq",
    "cum_dissipation",
    "cum_mass_time",
];

impl DiagnosticsRow {
    /// `E + (eps / 2) ||u||^2`.
    pub fn lyapunov(&self) -> f64 {
        self.entropy + 0.5 * self.eps_u_sq
    }

    pub fn total_dissipation(&self) -> f64 {
        self.eps_grad_u_sq + self.dissipation
    }

    fn numeric(&self) -> [f64; 17] {
        [
            self.t,
            self.entropy,
            self.eps_u_sq,
            self.mass_f,
            self.mass_eps_u_f,
            self.min_f,
            self.min_rho,
            self.max_rho,
            self.dissipation,
            self.dtheta_sqrt_f_sq,
            self.grad_sqrt_vacancy_sq,
            self.vacancy_grad_sqrt_f_sq,
            self.grad_rho_sq,
            self.f_l3,
            self.sqrt_vacancy_f_l10_3,
            self.max_abs_p,
            self.sqrt_floor,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.numeric().iter().all(|v| v.is_finite()) && self.eps_grad_u_sq.is_finite()
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_line(row: &DiagnosticsRow) -> String {
    let mut cells: Vec<String> = row.numeric().iter().map(|v| fmt17(*v)).collect();
    cells.push(u8::from(row.floor_active).to_string());
    cells.push(fmt17(row.eps_grad_u_sq));
    for opt in [row.cum_dissipation, row.cum_mass_time] {
        cells.push(opt.map(fmt17).unwrap_or_default());
    }
    cells.join(",")
}

pub fn rows_to_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&csv_line(r));
        out.push('\n');
    }
    out
}

/// Diagnostics of one snapshot.
pub fn record(
    f: &FieldF,
    rho: &FieldRho,
    u: Option<&FieldU>,
    epsilon: f64,
    t: f64,
    params: &ModelParams,
) -> DiagnosticsRow {
    record_with(&Spectral::new(f.grid), f, rho, u, epsilon, t, params)
}

pub fn record_with(
    sp: &Spectral,
    f: &FieldF,
    rho: &FieldRho,
    u: Option<&FieldU>,
    epsilon: f64,
    t: f64,
    params: &ModelParams,
) -> DiagnosticsRow {
    let g = f.grid;
    let nt = g.ntheta;
    let eta = SQRT_FLOOR;
    let vac = rho.map(|r| 1.0 - r);
    let min_f = f.min();
    let min_vac = vac.min();
    let mass_f = total_mass(f);

    let (eps_u_sq, eps_grad_u_sq, mass_eps_u_f) = match u {
        Some(u) => {
            let (u1, u2) = sp.grad_x(u);
            let ut = sp.grad_theta(u);
            let grad_sq = inner3(&u1, &u1) + inner3(&u2, &u2) + inner3(&ut, &ut);
            let q = integrate3(&g, &u.values) * epsilon + mass_f;
            (epsilon * inner3(u, u), epsilon * grad_sq, q)
        }
        None => (0.0, 0.0, mass_f),
    };

    let admissible = min_f > 0.0 && min_vac > 0.0;
    let dissipation = {
        let owned;
        let uu = match u {
            Some(u) => u,
            None => {
                let vals = (0..g.len())
                    .map(|i| {
                        let (fv, vv) = (f.values[i], vac.values[i / nt]);
                        if admissible {
                            fv.ln() - vv.ln()
                        } else {
                            (fv.max(0.0) + eta).ln() - (vv.max(0.0) + eta).ln()
                        }
                    })
                    .collect();
                owned = Field3 { grid: g, values: vals };
                &owned
            }
        };
        let (u1, u2) = sp.grad_x(uu);
        let ut = sp.grad_theta(uu);
        let fpos = f.map(|v| v.max(0.0));
        let vpos = vac.map(|v| v.max(0.0));
        dissipation_density(&fpos, &vpos, [&u1, &u2, &ut], params)
    };

    let sqrt_f = f.map(|v| (v.max(0.0) + eta).sqrt());
    let (s1, s2) = sp.grad_x(&sqrt_f);
    let st = sp.grad_theta(&sqrt_f);
    let dtheta_sqrt_f_sq = inner3(&st, &st);
    let vacancy_grad_sqrt_f_sq = g.cell()
        * pairwise_sum_by(g.len(), &|i| {
            vac.values[i / nt].max(0.0)
                * (s1.values[i].powi(2) + s2.values[i].powi(2) + st.values[i].powi(2))
        });
    let sqrt_vac = vac.map(|v| (v.max(0.0) + eta).sqrt());
    let gv = sp.grad2(&sqrt_vac);
    let grad_sqrt_vacancy_sq = TWO_PI
        * integrate2(
            &g,
            &(0..g.len_x())
                .map(|i| gv.p1[i].powi(2) + gv.p2[i].powi(2))
                .collect::<Vec<_>>(),
        );
    let gr = sp.grad2(rho);
    let grad_rho_sq = integrate2(
        &g,
        &(0..g.len_x())
            .map(|i| gr.p1[i].powi(2) + gr.p2[i].powi(2))
            .collect::<Vec<_>>(),
    );
    let sv = Field3 {
        grid: g,
        values: (0..g.len())
            .map(|i| (vac.values[i / nt] * f.values[i]).max(0.0).sqrt())
            .collect(),
    };
    let p = polarization(f);
    let max_abs_p = p
        .p1
        .iter()
        .zip(&p.p2)
        .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));

    DiagnosticsRow {
        t,
        entropy: entropy_unchecked(f, rho),
        eps_u_sq,
        mass_f,
        mass_eps_u_f,
        min_f,
        min_rho: rho.min(),
        max_rho: rho.max(),
        dissipation,
        dtheta_sqrt_f_sq,
        grad_sqrt_vacancy_sq,
        vacancy_grad_sqrt_f_sq,
        grad_rho_sq,
        f_l3: lp_norm(f, 3.0),
        sqrt_vacancy_f_l10_3: lp_norm(&sv, 10.0 / 3.0),
        max_abs_p,
        sqrt_floor: eta,
        floor_active: min_f <= 1e4 * eta || min_vac <= 1e4 * eta,
        eps_grad_u_sq,
        cum_dissipation: None,
        cum_mass_time: None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub name: String,
    /// False when the inequality is outside its proven scope or its inputs are missing.
    pub asserted: bool,
    pub pass: bool,
    pub worst_margin: f64,
    pub t_worst: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LedgerReport {
    pub entries: Vec<LedgerEntry>,
}

impl LedgerReport {
    /// Every asserted entry passes.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| !e.asserted || e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("inequality,asserted,pass,worst_margin,t_worst\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.name,
                u8::from(e.asserted),
                u8::from(e.pass),
                fmt17(e.worst_margin),
                fmt17(e.t_worst)
            );
        }
        out
    }

    fn push_margins(&mut self, name: &str, asserted: bool, margins: &[(f64, f64)]) {
        let (t_worst, worst) = margins
            .iter()
            .copied()
            .fold((0.0, f64::INFINITY), |acc, (t, m)| {
                if m < acc.1 || m.is_nan() {
                    (t, m)
                } else {
                    acc
                }
            });
        let worst = if margins.is_empty() { 0.0 } else { worst };
        self.entries.push(LedgerEntry {
            name: name.to_string(),
            asserted,
            pass: worst >= 0.0,
            worst_margin: worst,
            t_worst,
        });
    }
}

/// Cumulative trapezoid integral of `y` over `t`.
pub fn trapezoid_cumulative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Entropy ledger of one run.
///
/// `cumulative`: `L(t) + c int_0^t D <= L(0) + B(t) + tol` with
/// `L = E + (eps/2)||u||^2`, `D = eps ||grad u||^2 + dissipation`, `c = 1` and
/// `B = 0` when `Pe = 0`, `c = 1/2` and `B = (Pe^2/2) max(De, 1) int_0^t mass`
/// otherwise. `monotone` (asserted only for `Pe = 0`): `L` non-increasing
/// between consecutive rows. Solver-accumulated integrals are used when every
/// row carries them, otherwise the trapezoid rule over the rows.
/// Rows already carry the eps-weighted columns, so `_epsilon` is informational.
pub fn entropy_ledger(rows: &[DiagnosticsRow], _epsilon: f64, params: &ModelParams) -> LedgerReport {
    let mut report = LedgerReport::default();
    if rows.is_empty() {
        return report;
    }
    let l0 = rows[0].lyapunov();
    let tol = 1e-6 * (1.0 + rows[0].entropy.abs());
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let diss: Vec<f64> = match rows.iter().map(|r| r.cum_dissipation).collect::<Option<Vec<_>>>() {
        Some(v) => v,
        None => trapezoid_cumulative(
            &times,
            &rows.iter().map(|r| r.total_dissipation()).collect::<Vec<_>>(),
        ),
    };
    let mass: Vec<f64> = match rows.iter().map(|r| r.cum_mass_time).collect::<Option<Vec<_>>>() {
        Some(v) => v,
        None => trapezoid_cumulative(&times, &rows.iter().map(|r| r.mass_f).collect::<Vec<_>>()),
    };
    let pe0 = params.pe == 0.0;
    let (c, b) = if pe0 {
        (1.0, 0.0)
    } else {
        (0.5, 0.5 * params.pe * params.pe * params.de.max(1.0))
    };
    let margins: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.t, l0 + b * mass[i] + tol - (r.lyapunov() + c * diss[i])))
        .collect();
    let finite = diss.iter().all(|v| v.is_finite());
    report.push_margins("cumulative", finite, &margins);
    let mono: Vec<(f64, f64)> = rows
        .windows(2)
        .map(|w| (w[1].t, w[0].lyapunov() + tol - w[1].lyapunov()))
        .collect();
    report.push_margins("monotone", pe0, &mono);
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct GajewskiReport {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    /// `(1/8) ||f1 - f2||^2` at each time.
    pub lower_bound: Vec<f64>,
    pub ledger: LedgerReport,
}

/// Distance series between two trajectories sampled at the same times.
pub fn gajewski_monitor(
    times1: &[f64],
    traj1: &[FieldF],
    times2: &[f64],
    traj2: &[FieldF],
    delta: f64,
    pe: f64,
) -> Result<GajewskiReport> {
    if traj1.len() != traj2.len() || times1.len() != traj1.len() || times2.len() != traj2.len() {
        return Err(Error::MismatchedTrajectories(format!(
            "lengths {} and {}",
            traj1.len(),
            traj2.len()
        )));
    }
    for (i, (a, b)) in times1.iter().zip(times2).enumerate() {
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::MismatchedTrajectories(format!(
                "sample {i} at t = {a} vs t = {b}"
            )));
        }
        if traj1[i].grid != traj2[i].grid {
            return Err(Error::MismatchedTrajectories(format!("sample {i} grids differ")));
        }
    }
    let mut distance = Vec::with_capacity(traj1.len());
    let mut lower = Vec::with_capacity(traj1.len());
    for (a, b) in traj1.iter().zip(traj2) {
        distance.push(gajewski_distance(a, b, delta)?);
        lower.push(0.125 * l2_distance(a, b).powi(2));
    }
    let d0 = distance.first().copied().unwrap_or(0.0);
    let mut ledger = LedgerReport::default();
    let mono: Vec<(f64, f64)> = (1..distance.len())
        .map(|i| (times1[i], distance[i - 1] + 1e-6 * d0 - distance[i]))
        .collect();
    ledger.push_margins("monotone", pe == 0.0, &mono);
    let lb: Vec<(f64, f64)> = (0..distance.len())
        .map(|i| (times1[i], distance[i] - lower[i]))
        .collect();
    ledger.push_margins("lower_bound", true, &lb);
    Ok(GajewskiReport {
        times: times1.to_vec(),
        distance,
        lower_bound: lower,
        ledger,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationReport {
    pub m: f64,
    pub p: f64,
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn time_integral(times: &[f64], vals: &[f64]) -> f64 {
    if times.len() == 1 {
        return vals[0];
    }
    *trapezoid_cumulative(times, vals).last().unwrap()
}

/// `||v||_{L^q} / (sup_{t,x} ||v||_{L^m(0,2pi)} + ||d_theta v||_{L^p})` with
/// `q = p (m + 1)`. Time integrals use the trapezoid rule over the samples; a
/// single sample is treated as a unit-length time slab.
pub fn check_interpolation(times: &[f64], v: &[Field3], m: f64, p: f64) -> Result<InterpolationReport> {
    if times.len() != v.len() || v.is_empty() {
        return Err(Error::MismatchedTrajectories(format!(
            "{} times for {} samples",
            times.len(),
            v.len()
        )));
    }
    assert!(m >= 1.0 && p >= 1.0, "exponents must be >= 1");
    let q = p * (m + 1.0);
    let g = v[0].grid;
    let sp = Spectral::new(g);
    let h = g.htheta();
    let mut lq = Vec::with_capacity(v.len());
    let mut dp = Vec::with_capacity(v.len());
    let mut sup = 0.0f64;
    for s in v {
        let a = s.values.iter().map(|x| x.abs().powf(q)).collect::<Vec<_>>();
        lq.push(integrate3(&g, &a));
        let d = sp.grad_theta(s);
        let b = d.values.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>();
        dp.push(integrate3(&g, &b));
        for line in s.values.chunks(g.ntheta) {
            let n = (h * line.iter().map(|x| x.abs().powf(m)).sum::<f64>()).powf(1.0 / m);
            sup = sup.max(n);
        }
    }
    let lhs = time_integral(times, &lq).powf(1.0 / q);
    let rhs = sup + time_integral(times, &dp).powf(1.0 / p);
    let ratio = lhs / rhs;
    if !ratio.is_finite() {
        return Err(Error::Postcondition(format!(
            "interpolation ratio not finite: {lhs} / {rhs}"
        )));
    }
    Ok(InterpolationReport {
        m,
        p,
        q,
        lhs,
        rhs,
        ratio,
    })
}

/// Rows of an arbitrary trajectory of densities (no entropy variable).
pub fn record_trajectory(times: &[f64], fs: &[FieldF], params: &ModelParams) -> Vec<DiagnosticsRow> {
    use rayon::prelude::*;
    if fs.is_empty() {
        return vec![];
    }
    let sp = Spectral::new(fs[0].grid);
    times
        .par_iter()
        .zip(fs.par_iter())
        .map(|(&t, f)| {
            let rho = marginal_rho(f);
            record_with(&sp, f, &rho, None, 0.0, t, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams { pe: 0.0, de: 1.0 }
    }

    #[test]
    fn constant_row() {
        let g = GridSpec::cubic(8).unwrap();
        let c = 1.0 / (4.0 * PI);
        let f = Field3::constant(g, c);
        let rho = marginal_rho(&f);
        let row = record(&f, &rho, None, 0.0, 0.0, &params());
        assert!(row.dissipation.abs() < 1e-25);
        assert!(row.dtheta_sqrt_f_sq < 1e-25 && row.grad_rho_sq < 1e-25);
        let l3 = TWO_PI.powi(3).powf(1.0 / 3.0) * c;
        assert!((row.f_l3 - l3).abs() < 1e-13);
        let e = TWO_PI.powi(3) * c * c.ln() + TWO_PI.powi(2) * 0.5 * 0.5f64.ln();
        assert!((row.entropy - e).abs() < 1e-12 * e.abs());
        assert!(row.is_finite() && !row.floor_active);
    }

    fn row(t: f64, e: f64, d: f64) -> DiagnosticsRow {
        let g = GridSpec::cubic(4).unwrap();
        let f = Field3::constant(g, 0.1);
        let mut r = record(&f, &marginal_rho(&f), None, 0.0, t, &params());
        r.entropy = e;
        r.dissipation = d;
        r
    }

    #[test]
    fn ledger_detects_injected_fault() {
        let rows: Vec<_> = (0..5).map(|i| row(i as f64 * 0.1, -1.0 - 0.01 * i as f64, 0.0)).collect();
        assert!(entropy_ledger(&rows, 0.0, &params()).passed());
        let mut bad = rows.clone();
        bad[3].entropy += 1.0;
        let rep = entropy_ledger(&bad, 0.0, &params());
        assert!(!rep.passed());
        let mono = rep.entry("monotone").unwrap();
        assert!(!mono.pass && (mono.t_worst - 0.3).abs() < 1e-15);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let r = row(0.5, -2.0, 0.0);
        let text = rows_to_csv(&[r]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), CSV_COLUMNS.len());
        let line = lines.next().unwrap();
        assert_eq!(line.split(',').count(), CSV_COLUMNS.len());
        assert!(line.starts_with("5.0000000000000000e-1,"));
    }

    #[test]
    fn interpolation_of_constant() {
        let g = GridSpec::cubic(8).unwrap();
        let c = 0.7;
        let v = vec![Field3::constant(g, c), Field3::constant(g, c)];
        let t = [0.0, 2.0];
        let rep = check_interpolation(&t, &v, 2.0, 2.0).unwrap();
        let want = (TWO_PI.powi(3) * 2.0).powf(1.0 / 6.0) * c / (TWO_PI.sqrt() * c);
        assert!((rep.ratio - want).abs() < 1e-10 * want);
    }

    #[test]
    fn gajewski_identical_trajectories() {
        let g = GridSpec::cubic(4).unwrap();
        let f = vec![Field3::constant(g, 0.1); 3];
        let t = [0.0, 0.1, 0.2];
        let rep = gajewski_monitor(&t, &f, &t, &f, 1e-6, 0.0).unwrap();
        assert!(rep.distance.iter().all(|d| *d == 0.0));
        assert!(rep.ledger.passed());
        let short = &f[..2];
        assert!(gajewski_monitor(&t, &f, &t[..2], short, 1e-6, 0.0).is_err());
        let rep = gajewski_monitor(&t, &f, &t, &f, 1e-6, 1.0).unwrap();
        assert!(!rep.ledger.entry("monotone").unwrap().asserted);
    }
}
