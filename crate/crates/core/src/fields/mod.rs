//! Periodic grids on the space-angle torus, discrete fields, quadrature and
//! spectral differentiation.
//!
//! Every axis has period 2*pi. Arrays are row-major with theta varying
//! fastest, so a 3-D value lives at `(i * ny + j) * ntheta + k`.

pub mod snapshot;
pub mod spectral;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use spectral::{
    derivative_coeffs, resize_coeffs, second_derivative_coeffs, slot_weights, TrigTransform,
};

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, ntheta: usize) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("ntheta", ntheta)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n}; every axis needs an even count >= 4"
                )));
            }
        }
        Ok(GridSpec { nx, ny, ntheta })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    /// Number of 3-D nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of spatial (2-D) nodes.
    pub fn len_x(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dims3(&self) -> [usize; 3] {
        [self.nx, self.ny, self.ntheta]
    }

    pub fn dims2(&self) -> [usize; 2] {
        [self.nx, self.ny]
    }

    pub fn hx(&self) -> f64 {
        TWO_PI / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        TWO_PI / self.ny as f64
    }

    pub fn htheta(&self) -> f64 {
        TWO_PI / self.ntheta as f64
    }

    /// Rectangle-rule weight of one spatial cell.
    pub fn cell_x(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Rectangle-rule weight of one space-angle cell.
    pub fn cell(&self) -> f64 {
        self.cell_x() * self.htheta()
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.ntheta + k
    }

    /// Node coordinates `(x1, x2, theta)` of a flat 3-D index.
    pub fn coords(&self, idx: usize) -> (f64, f64, f64) {
        let k = idx % self.ntheta;
        let j = (idx / self.ntheta) % self.ny;
        let i = idx / (self.ntheta * self.ny);
        (
            i as f64 * self.hx(),
            j as f64 * self.hy(),
            k as f64 * self.htheta(),
        )
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.htheta()
    }

    /// Same grid with every axis doubled.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
            ntheta: 2 * self.ntheta,
        }
    }
}

/// Scalar field on the space-angle grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field3 {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Density f.
pub type FieldF = Field3;
/// Entropy variable u.
pub type FieldU = Field3;

/// Scalar field on the spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2 {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Angle marginal rho.
pub type FieldRho = Field2;

/// Spatial vector field (polarization).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldVec2 {
    pub grid: GridSpec,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Field3 {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field3 { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (x1, x2, th) = grid.coords(idx);
                f(x1, x2, th)
            })
            .collect();
        Field3 { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Field3 {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field3, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Field3 {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Field2 {
    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Field2 {
            grid,
            values: vec![c; grid.len_x()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len_x() {
            return Err(Error::ShapeMismatch {
                expected: grid.len_x(),
                got: values.len(),
            });
        }
        Ok(Field2 { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len_x())
            .map(|idx| {
                let i = idx / grid.ny;
                let j = idx % grid.ny;
                f(i as f64 * grid.hx(), j as f64 * grid.hy())
            })
            .collect();
        Field2 { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Field2 {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing more than a block.
pub fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 32 {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, f)
}

/// `(2pi/ntheta) sum_k f(x, theta_k)` at every spatial node.
pub fn marginal_rho(f: &FieldF) -> FieldRho {
    let g = f.grid;
    let h = g.htheta();
    let values = f
        .values
        .chunks(g.ntheta)
        .map(|line| h * line.iter().sum::<f64>())
        .collect();
    Field2 { grid: g, values }
}

/// First angular moment `p = int f e(theta) dtheta`.
pub fn polarization(f: &FieldF) -> FieldVec2 {
    let g = f.grid;
    let h = g.htheta();
    let (cos, sin) = theta_trig(&g);
    let mut p1 = Vec::with_capacity(g.len_x());
    let mut p2 = Vec::with_capacity(g.len_x());
    for line in f.values.chunks(g.ntheta) {
        p1.push(h * line.iter().zip(&cos).map(|(a, c)| a * c).sum::<f64>());
        p2.push(h * line.iter().zip(&sin).map(|(a, s)| a * s).sum::<f64>());
    }
    FieldVec2 { grid: g, p1, p2 }
}

/// `cos(theta_k)` and `sin(theta_k)` on the angular nodes.
pub fn theta_trig(g: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let cos = (0..g.ntheta).map(|k| g.theta(k).cos()).collect();
    let sin = (0..g.ntheta).map(|k| g.theta(k).sin()).collect();
    (cos, sin)
}

/// Rectangle-rule integral over the space-angle torus.
pub fn integrate3(grid: &GridSpec, values: &[f64]) -> f64 {
    grid.cell() * pairwise_sum(values)
}

/// Rectangle-rule integral over the spatial torus.
pub fn integrate2(grid: &GridSpec, values: &[f64]) -> f64 {
    grid.cell_x() * pairwise_sum(values)
}

pub fn total_mass(f: &FieldF) -> f64 {
    integrate3(&f.grid, &f.values)
}

/// `L^2(Upsilon)` inner product.
pub fn inner3(a: &Field3, b: &Field3) -> f64 {
    assert_eq!(a.grid, b.grid, "grid mismatch");
    a.grid.cell() * pairwise_sum_by(a.values.len(), &|i| a.values[i] * b.values[i])
}

/// `L^p(Upsilon)` norm.
pub fn lp_norm(f: &Field3, p: f64) -> f64 {
    lp_norm_values(&f.grid, &f.values, p, true)
}

/// `L^p(Omega)` norm of a spatial field.
pub fn lp_norm2(f: &Field2, p: f64) -> f64 {
    lp_norm_values(&f.grid, &f.values, p, false)
}

fn lp_norm_values(grid: &GridSpec, v: &[f64], p: f64, three_d: bool) -> f64 {
    assert!(p >= 1.0, "p must be >= 1");
    let w = if three_d { grid.cell() } else { grid.cell_x() };
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let s = pairwise_sum_by(v.len(), &|i| v[i].abs().powf(p));
    (w * s).powf(1.0 / p)
}

/// L^2 distance between two 3-D fields on the same grid.
pub fn l2_distance(a: &Field3, b: &Field3) -> f64 {
    assert_eq!(a.grid, b.grid, "grid mismatch");
    let s = pairwise_sum_by(a.values.len(), &|i| (a.values[i] - b.values[i]).powi(2));
    (a.grid.cell() * s).sqrt()
}

/// L^2 distance between two spatial fields on the same grid.
pub fn l2_distance2(a: &Field2, b: &Field2) -> f64 {
    assert_eq!(a.grid, b.grid, "grid mismatch");
    let s = pairwise_sum_by(a.values.len(), &|i| (a.values[i] - b.values[i]).powi(2));
    (a.grid.cell_x() * s).sqrt()
}

/// Real trigonometric coefficients of a 3-D field.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeffs3 {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

/// Spectral toolkit bound to one grid: transforms, derivatives, weights.
#[derive(Clone, Debug)]
pub struct Spectral {
    grid: GridSpec,
    t3: TrigTransform,
    t2: TrigTransform,
    w3: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        Spectral {
            grid,
            t3: TrigTransform::new(&grid.dims3()),
            t2: TrigTransform::new(&grid.dims2()),
            w3: slot_weights(&grid.dims3()),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn transform3(&self) -> &TrigTransform {
        &self.t3
    }

    pub fn transform2(&self) -> &TrigTransform {
        &self.t2
    }

    /// `int phi_s^2` for every 3-D coefficient slot.
    pub fn gram3(&self) -> Vec<f64> {
        let vol = TWO_PI.powi(3);
        self.w3.iter().map(|w| w * vol).collect()
    }

    pub fn forward(&self, f: &Field3) -> Coeffs3 {
        assert_eq!(f.grid, self.grid, "grid mismatch");
        Coeffs3 {
            grid: self.grid,
            data: self.t3.forward(&f.values),
        }
    }

    pub fn inverse(&self, c: &Coeffs3) -> Result<Field3> {
        if c.data.len() != self.grid.len() || c.grid != self.grid {
            return Err(Error::ShapeMismatch {
                expected: self.grid.len(),
                got: c.data.len(),
            });
        }
        Ok(Field3 {
            grid: self.grid,
            values: self.t3.inverse(&c.data),
        })
    }

    /// Weighted coefficient norm squared; equals the grid L^2 norm squared.
    pub fn parseval(&self, c: &Coeffs3) -> f64 {
        let g = self.gram3();
        pairwise_sum_by(c.data.len(), &|i| g[i] * c.data[i] * c.data[i])
    }

    fn deriv3(&self, f: &Field3, axis: usize, order: usize) -> Field3 {
        let dims = self.grid.dims3();
        let c = self.t3.forward(&f.values);
        let d = if order == 1 {
            derivative_coeffs(&c, &dims, axis)
        } else {
            second_derivative_coeffs(&c, &dims, axis)
        };
        Field3 {
            grid: self.grid,
            values: self.t3.inverse(&d),
        }
    }

    /// `(d/dx1 f, d/dx2 f)`.
    pub fn grad_x(&self, f: &Field3) -> (Field3, Field3) {
        let dims = self.grid.dims3();
        let c = self.t3.forward(&f.values);
        let d1 = self.t3.inverse(&derivative_coeffs(&c, &dims, 0));
        let d2 = self.t3.inverse(&derivative_coeffs(&c, &dims, 1));
        (
            Field3 {
                grid: self.grid,
                values: d1,
            },
            Field3 {
                grid: self.grid,
                values: d2,
            },
        )
    }

    pub fn grad_theta(&self, f: &Field3) -> Field3 {
        self.deriv3(f, 2, 1)
    }

    pub fn dtheta2(&self, f: &Field3) -> Field3 {
        self.deriv3(f, 2, 2)
    }

    pub fn laplacian_x(&self, f: &Field3) -> Field3 {
        let dims = self.grid.dims3();
        let c = self.t3.forward(&f.values);
        let a = second_derivative_coeffs(&c, &dims, 0);
        let b = second_derivative_coeffs(&c, &dims, 1);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b).collect();
        Field3 {
            grid: self.grid,
            values: self.t3.inverse(&sum),
        }
    }

    /// Spatial gradient of a 2-D field.
    pub fn grad2(&self, f: &Field2) -> FieldVec2 {
        let dims = self.grid.dims2();
        let c = self.t2.forward(&f.values);
        FieldVec2 {
            grid: self.grid,
            p1: self.t2.inverse(&derivative_coeffs(&c, &dims, 0)),
            p2: self.t2.inverse(&derivative_coeffs(&c, &dims, 1)),
        }
    }

    pub fn laplacian2(&self, f: &Field2) -> Field2 {
        let dims = self.grid.dims2();
        let c = self.t2.forward(&f.values);
        let a = second_derivative_coeffs(&c, &dims, 0);
        let b = second_derivative_coeffs(&c, &dims, 1);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b).collect();
        Field2 {
            grid: self.grid,
            values: self.t2.inverse(&sum),
        }
    }
}

/// Spectral interpolation of a field onto a finer (or coarser) grid.
pub fn resample(f: &Field3, target: GridSpec) -> Field3 {
    let from = f.grid.dims3();
    let to = target.dims3();
    let c = TrigTransform::new(&from).forward(&f.values);
    let mut c2 = resize_coeffs(&c, &from, &to);
    // Nyquist cosines carry over unchanged.
    TrigTransform::new(&to).inverse_in_place(&mut c2);
    Field3 {
        grid: target,
        values: c2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> GridSpec {
        GridSpec::cubic(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, 6, 8).is_ok());
        assert!(GridSpec::new(3, 6, 8).is_err());
        assert!(GridSpec::new(2, 6, 8).is_err());
        assert!(GridSpec::new(8, 8, 7).is_err());
    }

    #[test]
    fn marginal_of_uniform_and_cosine() {
        let grid = g(8);
        let f = Field3::constant(grid, 1.0 / TWO_PI);
        assert!(marginal_rho(&f).values.iter().all(|r| (r - 1.0).abs() < 1e-15));
        let f = Field3::from_fn(grid, |_, _, th| (1.0 + th.cos()) / (4.0 * PI));
        assert!(marginal_rho(&f).values.iter().all(|r| (r - 0.5).abs() < 1e-15));
        let p = polarization(&f);
        assert!(p.p1.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(p.p2.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn constant_mass() {
        let grid = GridSpec::new(4, 6, 8).unwrap();
        let f = Field3::constant(grid, 0.3);
        assert!((total_mass(&f) - 0.3 * TWO_PI.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn spectral_derivatives_of_single_modes() {
        let grid = g(8);
        let s = Spectral::new(grid);
        let f = Field3::from_fn(grid, |_, _, th| th.cos());
        let d = s.grad_theta(&f);
        let want = Field3::from_fn(grid, |_, _, th| -th.sin());
        assert!(l2_distance(&d, &want) < 1e-13);
        let f = Field3::from_fn(grid, |x, _, _| x.cos());
        let l = s.laplacian_x(&f);
        assert!(l2_distance(&l, &f.map(|v| -v)) < 1e-13);
    }

    #[test]
    fn sine_line_norm_is_sqrt_pi() {
        let n = 16;
        let h = TWO_PI / n as f64;
        let s: f64 = (0..n).map(|k| (k as f64 * h).sin().powi(2)).sum::<f64>() * h;
        assert!((s.sqrt() - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inverse_rejects_wrong_shape() {
        let grid = g(4);
        let s = Spectral::new(grid);
        let c = Coeffs3 {
            grid,
            data: vec![0.0; 10],
        };
        assert!(matches!(s.inverse(&c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn lp_norm_of_constant() {
        let grid = g(4);
        let f = Field3::constant(grid, 2.0);
        let want = 2.0 * TWO_PI.powi(3).powf(1.0 / 3.0);
        assert!((lp_norm(&f, 3.0) - want).abs() < 1e-12);
    }
}
