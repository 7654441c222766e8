//! Second-order IMEX Runge-Kutta pair ARS(2,2,2) acting on coefficient
//! vectors whose stiff part is diagonal.

use crate::error::Result;

/// A right-hand side `L y + N(t, y)` with `L` diagonal (`stiff_symbol`).
pub trait SplitOperator {
    fn stiff_symbol(&self) -> &[f64];
    fn explicit(&self, t: f64, y: &[f64]) -> Result<Vec<f64>>;
}

pub const ARS_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// `1 - 1 / (2 gamma)`.
pub fn ars_delta() -> f64 {
    1.0 - 0.5 / ARS_GAMMA
}

/// One ARS(2,2,2) step. With `implicit = false` the stiff part joins the
/// explicit tableau, giving a plain explicit second-order scheme.
pub fn ars222_step<O: SplitOperator + ?Sized>(
    op: &O,
    t: f64,
    y: &[f64],
    dt: f64,
    implicit: bool,
) -> Result<Vec<f64>> {
    let g = ARS_GAMMA;
    let d = ars_delta();
    let lam = op.stiff_symbol();
    assert_eq!(lam.len(), y.len(), "stiff symbol length mismatch");
    let e1 = op.explicit(t, y)?;
    if implicit {
        let y2: Vec<f64> = (0..y.len())
            .map(|i| (y[i] + dt * g * e1[i]) / (1.0 - dt * g * lam[i]))
            .collect();
        let e2 = op.explicit(t + g * dt, &y2)?;
        Ok((0..y.len())
            .map(|i| {
                let rhs = y[i] + dt * (d * e1[i] + (1.0 - d) * e2[i] + (1.0 - g) * lam[i] * y2[i]);
                rhs / (1.0 - dt * g * lam[i])
            })
            .collect())
    } else {
        let k1: Vec<f64> = (0..y.len()).map(|i| e1[i] + lam[i] * y[i]).collect();
        let y2: Vec<f64> = (0..y.len()).map(|i| y[i] + dt * g * k1[i]).collect();
        let e2 = op.explicit(t + g * dt, &y2)?;
        Ok((0..y.len())
            .map(|i| y[i] + dt * (d * k1[i] + (1.0 - d) * (e2[i] + lam[i] * y2[i])))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        lam: Vec<f64>,
        mu: f64,
    }

    impl SplitOperator for Linear {
        fn stiff_symbol(&self) -> &[f64] {
            &self.lam
        }
        fn explicit(&self, _t: f64, y: &[f64]) -> Result<Vec<f64>> {
            Ok(y.iter().map(|v| self.mu * v).collect())
        }
    }

    fn solve(op: &Linear, dt: f64, t_end: f64, implicit: bool) -> f64 {
        let n = (t_end / dt).round() as usize;
        let mut y = vec![1.0];
        for i in 0..n {
            y = ars222_step(op, i as f64 * dt, &y, dt, implicit).unwrap();
        }
        y[0]
    }

    #[test]
    fn second_order_convergence() {
        let op = Linear {
            lam: vec![-3.0],
            mu: 0.7,
        };
        for implicit in [true, false] {
            let exact = (-2.3f64).exp();
            let e1 = (solve(&op, 0.02, 1.0, implicit) - exact).abs();
            let e2 = (solve(&op, 0.01, 1.0, implicit) - exact).abs();
            let order = (e1 / e2).log2();
            assert!(order > 1.9 && order < 2.2, "order {order}");
        }
    }

    #[test]
    fn stiff_decay_is_stable() {
        let op = Linear {
            lam: vec![-1e6],
            mu: 0.0,
        };
        assert!(solve(&op, 0.1, 1.0, true).abs() < 1e-3);
    }

    #[test]
    fn zero_symbol_zero_tendency_is_exact() {
        let op = Linear {
            lam: vec![0.0],
            mu: 0.0,
        };
        assert_eq!(solve(&op, 0.1, 1.0, true), 1.0);
    }
}
