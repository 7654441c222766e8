//! Grid of dual runs over `(epsilon, K)` with pairwise terminal distances
//! and an optional comparison against the primal solver.

use rayon::prelude::*;

use crate::dual_solver::{run_dual, spectral_tail, DualRunConfig};
use crate::error::Result;
use crate::fields::{l2_distance, FieldF, GridSpec};
use crate::primal_solver::{run_primal, PrimalRunConfig};
use crate::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub t_final: f64,
    pub epsilons: Vec<f64>,
    pub ks: Vec<usize>,
    pub rtol: f64,
    pub atol: f64,
    /// Step of the primal reference run; `None` skips it.
    pub primal_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub epsilon: f64,
    pub k: usize,
    pub terminal: FieldF,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub pairs: Vec<SweepPair>,
    pub primal: Option<FieldF>,
    /// Per run: `(||f_dual - f_primal||, spectral tail of f_primal at K)`.
    pub primal_gap: Vec<(f64, f64)>,
}

impl SweepResult {
    pub fn run_index(&self, epsilon: f64, k: usize) -> Option<usize> {
        self.runs.iter().position(|r| r.epsilon == epsilon && r.k == k)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (a, b) = (a.min(b), a.max(b));
        self.pairs
            .iter()
            .find(|p| p.a == a && p.b == b)
            .map(|p| p.distance)
            .expect("pair present")
    }

    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("epsilon_a,k_a,epsilon_b,k_b,l2_distance\n");
        for p in &self.pairs {
            let (ra, rb) = (&self.runs[p.a], &self.runs[p.b]);
            s.push_str(&format!(
                "{},{},{},{},{:.16e}\n",
                ra.epsilon, ra.k, rb.epsilon, rb.k, p.distance
            ));
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("epsilon,k,accepted,rejected,primal_distance,spectral_tail\n");
        for (i, r) in self.runs.iter().enumerate() {
            let (d, t) = self.primal_gap.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
            s.push_str(&format!(
                "{},{},{},{},{:.16e},{:.16e}\n",
                r.epsilon, r.k, r.accepted, r.rejected, d, t
            ));
        }
        s
    }
}

/// All runs execute concurrently; results are ordered by `epsilon` then `K`
/// as listed, so the output does not depend on scheduling.
pub fn run_sweep(f0: &FieldF, cfg: &SweepConfig) -> Result<SweepResult> {
    let combos: Vec<(f64, usize)> = cfg
        .epsilons
        .iter()
        .flat_map(|&e| cfg.ks.iter().map(move |&k| (e, k)))
        .collect();
    let runs: Vec<SweepRun> = combos
        .par_iter()
        .map(|&(epsilon, k)| {
            let mut dc = DualRunConfig::new(cfg.params, epsilon, k, cfg.grid, cfg.t_final);
            dc.rtol = cfg.rtol;
            dc.atol = cfg.atol;
            let traj = run_dual(f0, &dc)?;
            Ok(SweepRun {
                epsilon,
                k,
                terminal: traj.last().f.clone(),
                accepted: traj.accepted,
                rejected: traj.rejected,
            })
        })
        .collect::<Result<_>>()?;
    let idx: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|a| (a + 1..runs.len()).map(move |b| (a, b)))
        .collect();
    let pairs = idx
        .par_iter()
        .map(|&(a, b)| SweepPair {
            a,
            b,
            distance: l2_distance(&runs[a].terminal, &runs[b].terminal),
        })
        .collect();
    let (primal, primal_gap) = match cfg.primal_dt {
        Some(dt) => {
            let pc = PrimalRunConfig::new(cfg.params, cfg.grid, cfg.t_final, dt);
            let p = run_primal(f0, &pc)?.last().clone();
            let gaps = runs
                .iter()
                .map(|r| (l2_distance(&r.terminal, &p), spectral_tail(&p, r.k)))
                .collect();
            (Some(p), gaps)
        }
        None => (None, vec![]),
    };
    Ok(SweepResult {
        runs,
        pairs,
        primal,
        primal_gap,
    })
}
