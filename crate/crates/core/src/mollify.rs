//! Regularized initial data `f0_eps = eps / (4 pi) + (1 - eps) (eta_eps * f0)`
//! with a product bump kernel of width `eps` in space and `eps^gamma` in angle.

use std::f64::consts::PI;

use crate::entropy::{entropy, to_entropy_var};
use crate::error::{Error, Result};
use crate::fields::spectral::slot_wavenumber;
use crate::fields::{
    inner3, marginal_rho, Field3, FieldF, FieldRho, FieldU, Spectral, TWO_PI,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub gamma: f64,
}

impl MollifierSpec {
    pub const DEFAULT_GAMMA: f64 = 3.0;

    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidMollifier(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if !(gamma > 2.0 && gamma.is_finite()) {
            return Err(Error::InvalidMollifier(format!(
                "gamma must exceed 2, got {gamma}"
            )));
        }
        Ok(MollifierSpec { epsilon, gamma })
    }

    pub fn with_default_gamma(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, Self::DEFAULT_GAMMA)
    }

    pub fn spatial_width(&self) -> f64 {
        self.epsilon
    }

    pub fn angular_width(&self) -> f64 {
        self.epsilon.powf(self.gamma)
    }
}

fn bump(s: f64, width: f64) -> f64 {
    let r = s / width;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Periodized bump samples on `n` nodes of `[0, 2 pi)`, unit rectangle-rule mass.
/// A width below the grid spacing degenerates to the discrete delta.
pub fn bump_kernel_1d(width: f64, n: usize) -> Result<Vec<f64>> {
    if !(width < TWO_PI) {
        return Err(Error::WidthTooLarge { width });
    }
    if !(width > 0.0) || n == 0 {
        return Err(Error::InvalidMollifier(format!("width {width} on {n} nodes")));
    }
    let h = TWO_PI / n as f64;
    let mut k: Vec<f64> = (0..n)
        .map(|j| {
            let x = j as f64 * h;
            (-1..=1).map(|m| bump(x + TWO_PI * m as f64, width)).sum()
        })
        .collect();
    let mass = h * k.iter().sum::<f64>();
    if mass == 0.0 {
        k[0] = 1.0 / h;
    } else {
        k.iter_mut().for_each(|v| *v /= mass);
    }
    Ok(k)
}

/// Convolution multiplier of an even kernel for every coefficient slot of the axis.
pub fn kernel_symbol(kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let h = TWO_PI / n as f64;
    (0..n)
        .map(|s| {
            let m = slot_wavenumber(s) as f64;
            h * kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * (m * j as f64 * h).cos())
                .sum::<f64>()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Regularized {
    pub f: FieldF,
    pub rho: FieldRho,
    pub u: FieldU,
}

/// Periodic convolution with the product kernel, applied spectrally.
pub fn convolve(f0: &FieldF, spec: &MollifierSpec) -> Result<FieldF> {
    let g = f0.grid;
    let sx = kernel_symbol(&bump_kernel_1d(spec.spatial_width(), g.nx)?);
    let sy = kernel_symbol(&bump_kernel_1d(spec.spatial_width(), g.ny)?);
    let st = kernel_symbol(&bump_kernel_1d(spec.angular_width(), g.ntheta)?);
    let sp = Spectral::new(g);
    let mut c = sp.forward(f0);
    for (idx, v) in c.data.iter_mut().enumerate() {
        let k = idx % g.ntheta;
        let j = (idx / g.ntheta) % g.ny;
        let i = idx / (g.ntheta * g.ny);
        *v *= sx[i] * sy[j] * st[k];
    }
    sp.inverse(&c)
}

pub fn regularize_initial(f0: &FieldF, spec: &MollifierSpec) -> Result<Regularized> {
    let rho0 = marginal_rho(f0);
    if let Some((node, &value)) = f0
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| **v < -1e-12 || v.is_nan())
    {
        return Err(Error::DegenerateState {
            what: "f0",
            node,
            value,
        });
    }
    if let Some((node, &value)) = rho0
        .values
        .iter()
        .enumerate()
        .find(|(_, r)| **r > 1.0 + 1e-12 || r.is_nan())
    {
        return Err(Error::DegenerateState {
            what: "rho0",
            node,
            value,
        });
    }
    let eps = spec.epsilon;
    let floor = eps / (4.0 * PI);
    let smooth = convolve(f0, spec)?;
    let f = smooth.map(|v| floor + (1.0 - eps) * v);
    let rho = marginal_rho(&f);

    let fmin = f.min();
    if fmin < floor - 1e-12 {
        return Err(Error::Postcondition(format!(
            "min f0_eps = {fmin:e} below eps/(4 pi) = {floor:e}"
        )));
    }
    let (vmin, vmax) = rho
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(1.0 - r), b.max(1.0 - r))
        });
    if vmin < 0.5 * eps - 1e-12 || vmax > 1.0 - 0.5 * eps + 1e-12 {
        return Err(Error::Postcondition(format!(
            "1 - rho0_eps in [{vmin:e}, {vmax:e}] escapes [eps/2, 1 - eps/2]"
        )));
    }
    let u = to_entropy_var(&f, &rho)?;
    Ok(Regularized { f, rho, u })
}

/// `E[f0_eps] + eps ||u0_eps||^2`.
pub fn initial_entropy_budget(f0eps: &FieldF, u0eps: &FieldU, epsilon: f64) -> Result<f64> {
    Ok(entropy(f0eps)? + epsilon * inner3(u0eps, u0eps))
}

/// Convenience: budget of the regularization of `f0` at `spec`.
pub fn budget_for(f0: &Field3, spec: &MollifierSpec) -> Result<f64> {
    let r = regularize_initial(f0, spec)?;
    initial_entropy_budget(&r.f, &r.u, spec.epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{total_mass, GridSpec};

    #[test]
    fn kernel_mass_and_symmetry() {
        for (w, n) in [(0.5, 64), (2.0, 32), (6.0, 16), (0.01, 16)] {
            let k = bump_kernel_1d(w, n).unwrap();
            let h = TWO_PI / n as f64;
            assert!((h * k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(k.iter().all(|v| *v >= 0.0));
            for j in 1..n {
                assert!((k[j] - k[n - j]).abs() < 1e-14 * k[0].max(1.0));
            }
        }
        assert!(matches!(
            bump_kernel_1d(7.0, 16),
            Err(Error::WidthTooLarge { .. })
        ));
    }

    #[test]
    fn halving_width_halves_support() {
        let n = 512;
        let k1 = bump_kernel_1d(1.0, n).unwrap();
        let k2 = bump_kernel_1d(0.5, n).unwrap();
        let support = |k: &[f64]| k.iter().filter(|v| **v > 0.0).count() as f64;
        let ratio = support(&k1) / support(&k2);
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
        let peak = k2[0] / k1[0];
        assert!((peak - 2.0).abs() < 0.02, "{peak}");
    }

    #[test]
    fn constant_data() {
        let g = GridSpec::cubic(8).unwrap();
        let c = 0.1;
        let spec = MollifierSpec::with_default_gamma(0.2).unwrap();
        let r = regularize_initial(&Field3::constant(g, c), &spec).unwrap();
        let want = 0.2 / (4.0 * PI) + 0.8 * c;
        assert!(r.f.values.iter().all(|v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn mass_identity() {
        let g = GridSpec::cubic(16).unwrap();
        let f0 = Field3::from_fn(g, |x, y, t| 0.08 * (1.0 + 0.5 * (x + t).sin() * y.cos()));
        let eps = 0.3;
        let spec = MollifierSpec::new(eps, 2.5).unwrap();
        let r = regularize_initial(&f0, &spec).unwrap();
        let lhs = total_mass(&r.f);
        let rhs = total_mass(&Field3::constant(g, eps / (4.0 * PI))) + (1.0 - eps) * total_mass(&f0);
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn invalid_specs() {
        assert!(MollifierSpec::new(0.0, 3.0).is_err());
        assert!(MollifierSpec::new(1.0, 3.0).is_err());
        assert!(MollifierSpec::new(0.1, 2.0).is_err());
    }

    #[test]
    fn over_full_input_rejected() {
        let g = GridSpec::cubic(4).unwrap();
        let f0 = Field3::constant(g, 1.01 / TWO_PI);
        let spec = MollifierSpec::with_default_gamma(0.1).unwrap();
        assert!(matches!(
            regularize_initial(&f0, &spec),
            Err(Error::DegenerateState { what: "rho0", .. })
        ));
    }
}
