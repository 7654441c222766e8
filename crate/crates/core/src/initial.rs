//! Seeded initial data: smooth low-mode densities, rough admissible
//! densities, and angular redistributions sharing one marginal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::{Field3, FieldF, GridSpec, TWO_PI};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random trigonometric polynomial with wavenumbers `|n_i| <= kmax`,
/// scaled to unit sup norm on the grid.
pub fn random_trig(grid: GridSpec, kmax: i64, seed: u64) -> Field3 {
    let mut r = rng(seed);
    let mut terms = vec![];
    for n1 in -kmax..=kmax {
        for n2 in -kmax..=kmax {
            for n3 in 0..=kmax {
                if (n1, n2, n3) == (0, 0, 0) {
                    continue;
                }
                let a: f64 = r.gen_range(-1.0..1.0);
                let ph: f64 = r.gen_range(0.0..TWO_PI);
                let decay = 1.0 / (1.0 + (n1 * n1 + n2 * n2 + n3 * n3) as f64);
                terms.push((n1 as f64, n2 as f64, n3 as f64, a * decay, ph));
            }
        }
    }
    let f = Field3::from_fn(grid, |x, y, t| {
        terms
            .iter()
            .map(|(a, b, c, amp, ph)| amp * (a * x + b * y + c * t + ph).cos())
            .sum()
    });
    let m = f.max_abs();
    if m == 0.0 {
        f
    } else {
        f.map(|v| v / m)
    }
}

/// `f = (rho_mean / 2 pi)(1 + amplitude * s)` with `s` a unit random
/// trigonometric polynomial of low degree. Admissible when
/// `rho_mean (1 + amplitude) < 1` and `amplitude < 1`.
pub fn smooth_random(grid: GridSpec, rho_mean: f64, amplitude: f64, seed: u64) -> FieldF {
    let s = random_trig(grid, 2, seed);
    s.map(|v| rho_mean / TWO_PI * (1.0 + amplitude * v))
}

/// Pointwise random admissible density: non-negative values whose angular
/// marginal is itself random in `[0, 1]`, with some columns empty and some
/// exactly full.
pub fn rough_admissible(grid: GridSpec, seed: u64) -> FieldF {
    let mut r = rng(seed);
    let nt = grid.ntheta;
    let h = grid.htheta();
    let mut values = vec![0.0; grid.len()];
    for col in values.chunks_mut(nt) {
        let target: f64 = match r.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => r.gen_range(0.0..1.0),
        };
        for v in col.iter_mut() {
            *v = r.gen_range(0.0..1.0);
        }
        let s: f64 = col.iter().sum::<f64>() * h;
        if s > 0.0 {
            col.iter_mut().for_each(|v| *v *= target / s);
        }
    }
    Field3 { grid, values }
}

/// Two densities with identical marginal `rho` differing in angular
/// distribution: `(rho / 2 pi)(1 + b_i cos(theta - phi_i))` with `b_i < 1`.
pub fn theta_redistribution_pair(grid: GridSpec, rho_mean: f64, seed: u64) -> (FieldF, FieldF) {
    let mut r = rng(seed);
    let shape = random_trig(grid, 2, seed ^ 0x9e37_79b9);
    let a: f64 = r.gen_range(0.2..0.4);
    let rho = |x: f64, y: f64| {
        let i = ((x / grid.hx()).round() as usize) % grid.nx;
        let j = ((y / grid.hy()).round() as usize) % grid.ny;
        rho_mean * (1.0 + a * shape.values[grid.idx(i, j, 0)])
    };
    let (b1, p1): (f64, f64) = (r.gen_range(0.3..0.9), r.gen_range(0.0..TWO_PI));
    let (b2, p2): (f64, f64) = (r.gen_range(0.3..0.9), r.gen_range(0.0..TWO_PI));
    let f1 = Field3::from_fn(grid, |x, y, t| rho(x, y) / TWO_PI * (1.0 + b1 * (t - p1).cos()));
    let f2 = Field3::from_fn(grid, |x, y, t| rho(x, y) / TWO_PI * (1.0 + b2 * (2.0 * t - p2).cos()));
    (f1, f2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::marginal_rho;

    #[test]
    fn smooth_data_are_admissible_and_seeded() {
        let g = GridSpec::cubic(8).unwrap();
        let a = smooth_random(g, 0.5, 0.5, 3);
        let b = smooth_random(g, 0.5, 0.5, 3);
        assert_eq!(a, b);
        assert_ne!(a, smooth_random(g, 0.5, 0.5, 4));
        assert!(a.min() > 0.0);
        assert!(marginal_rho(&a).max() < 0.75 + 1e-12);
    }

    #[test]
    fn rough_data_respect_bounds() {
        let g = GridSpec::cubic(8).unwrap();
        let f = rough_admissible(g, 11);
        assert!(f.min() >= 0.0);
        assert!(marginal_rho(&f).max() <= 1.0 + 1e-12);
    }

    #[test]
    fn redistribution_keeps_marginal() {
        let g = GridSpec::cubic(8).unwrap();
        let (f1, f2) = theta_redistribution_pair(g, 0.4, 5);
        let (r1, r2) = (marginal_rho(&f1), marginal_rho(&f2));
        for (a, b) in r1.values.iter().zip(&r2.values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(crate::fields::l2_distance(&f1, &f2) > 1e-3);
    }
}
