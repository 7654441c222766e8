//! Linear solves with the Galerkin mass matrix.

use nalgebra::{Cholesky, DVector, Dyn};

use super::Galerkin;
use crate::error::{Error, Result};
use crate::fields::FieldF;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassSolverKind {
    /// Dense below [`MassSolver::DENSE_MAX_MODES`] modes, iterative above.
    Auto,
    /// Dense factorization at the step start, used as the stage preconditioner.
    Dense,
    /// Matrix-free conjugate gradients with a Gram-diagonal preconditioner.
    Iterative,
}

pub struct MassSolver {
    dense: bool,
    factor: Option<Cholesky<f64, Dyn>>,
    factor_key: Option<u64>,
    tol: f64,
    max_iter: usize,
    iterations: usize,
}

impl MassSolver {
    pub const DENSE_MAX_MODES: usize = 343;

    pub fn new(kind: MassSolverKind, dim: usize) -> Self {
        let dense = match kind {
            MassSolverKind::Auto => dim <= Self::DENSE_MAX_MODES,
            MassSolverKind::Dense => true,
            MassSolverKind::Iterative => false,
        };
        MassSolver {
            dense,
            factor: None,
            factor_key: None,
            tol: 1e-13,
            max_iter: 2000,
            iterations: 0,
        }
    }

    pub fn is_dense(&self) -> bool {
        self.dense
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Factorize `M` at the given density (dense mode only). `key` identifies
    /// the state so repeated calls at the same state reuse the factor.
    pub fn prepare(&mut self, gal: &Galerkin, f: &FieldF, key: u64, t: f64) -> Result<()> {
        if !self.dense || self.factor_key == Some(key) {
            return Ok(());
        }
        let m = gal.mass_matrix_at(f);
        let sym = (&m + m.transpose()) * 0.5;
        let chol = Cholesky::new(sym).ok_or(Error::FactorizationFailure { t })?;
        let min_gram = gal.gram().iter().copied().fold(f64::INFINITY, f64::min);
        let floor = 0.5 * gal.epsilon() * min_gram;
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| l[(i, i)].powi(2) < floor) {
            return Err(Error::FactorizationFailure { t });
        }
        self.factor = Some(chol);
        self.factor_key = Some(key);
        Ok(())
    }

    /// Solve `M(f) x = b`. With `exact_factor` the prepared factor is the
    /// matrix itself and is applied directly.
    pub fn solve(
        &mut self,
        gal: &Galerkin,
        f: &FieldF,
        b: &[f64],
        x0: Option<&[f64]>,
        exact_factor: bool,
        t: f64,
    ) -> Result<Vec<f64>> {
        if self.dense && exact_factor {
            if let Some(ch) = &self.factor {
                return Ok(ch.solve(&DVector::from_column_slice(b)).as_slice().to_vec());
            }
        }
        let apply = |v: &[f64]| gal.apply_mass(f, v);
        let (x, it) = match (&self.factor, self.dense) {
            (Some(ch), true) => {
                let pre = |r: &[f64]| ch.solve(&DVector::from_column_slice(r)).as_slice().to_vec();
                pcg(apply, pre, b, x0, self.tol, self.max_iter)
            }
            _ => {
                let diag = diagonal_estimate(gal, f);
                let pre = |r: &[f64]| r.iter().zip(&diag).map(|(r, d)| r / d).collect();
                pcg(apply, pre, b, x0, self.tol, self.max_iter)
            }
        }
        .map_err(|_| Error::FactorizationFailure { t })?;
        self.iterations += it;
        Ok(x)
    }
}

/// Gram diagonal scaled by `eps + mean f` (times `1 - mean rho` on angle-constant modes).
fn diagonal_estimate(gal: &Galerkin, f: &FieldF) -> Vec<f64> {
    let n = f.values.len() as f64;
    let fbar = f.values.iter().sum::<f64>() / n;
    let rbar = crate::fields::TWO_PI * fbar;
    let l = 2 * gal.k() + 1;
    gal.gram()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let a = if i % l == 0 { fbar * (1.0 - rbar) } else { fbar };
            g * (gal.epsilon() + a)
        })
        .collect()
}

#[derive(Debug)]
pub struct NotPositiveDefinite;

/// Preconditioned conjugate gradients. Returns the solution and iteration count.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec<f64>, usize), NotPositiveDefinite> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bz = precond(b);
    let bnorm = dot(b, &bz).max(0.0).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        if rz.max(0.0).sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_spd_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let apply = |v: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * v[j]).sum()).collect();
        let b = [1.0, 2.0, 3.0];
        let (x, _) = pcg(apply, |r: &[f64]| r.to_vec(), &b, None, 1e-14, 50).unwrap();
        let ax: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect();
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_detects_indefinite() {
        let apply = |v: &[f64]| vec![-v[0], v[1]];
        assert!(pcg(apply, |r: &[f64]| r.to_vec(), &[1.0, 0.0], None, 1e-12, 10).is_err());
    }
}
