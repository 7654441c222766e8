//! Primal/dual dictionary: the entropy variable `u = log f - log(1 - rho)`,
//! its inverse, the entropy and its conjugate, mobility, Hessian action,
//! dissipation and the Gajewski distance.

use crate::error::{Error, Result};
use crate::fields::{
    integrate2, marginal_rho, pairwise_sum_by, theta_trig, Field2, Field3, FieldF,
    FieldRho, FieldU, GridSpec, Spectral,
};
use crate::ModelParams;

const BOUND_TOL: f64 = 1e-12;

/// Diagonal blocks of the mobility in entropy coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityDiag {
    /// `De f (1 - rho)`, multiplies the spatial gradient.
    pub spatial: Field3,
    /// `f`, multiplies the angular derivative.
    pub angular: Field3,
}

/// Perturbative drift `V = (-Pe cos theta, -Pe sin theta, 0)` sampled on the angular nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftField {
    pub pe: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl DriftField {
    pub fn new(grid: &GridSpec, pe: f64) -> Self {
        let (c, s) = theta_trig(grid);
        DriftField {
            pe,
            v1: c.iter().map(|c| -pe * c).collect(),
            v2: s.iter().map(|s| -pe * s).collect(),
        }
    }
}

/// `(f, rho, 1 - rho)` reconstructed from an entropy variable. The vacancy
/// `1 - rho` is computed directly so it keeps full relative precision when
/// `rho` rounds to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DualImage {
    pub f: FieldF,
    pub rho: FieldRho,
    pub vacancy: FieldRho,
}

/// `u = log f - log(1 - rho)`.
pub fn to_entropy_var(f: &FieldF, rho: &FieldRho) -> Result<FieldU> {
    let g = f.grid;
    if rho.grid != g || rho.values.len() != g.len_x() {
        return Err(Error::ShapeMismatch {
            expected: g.len_x(),
            got: rho.values.len(),
        });
    }
    check_strict(f, rho)?;
    let mut values = Vec::with_capacity(g.len());
    for (line, &r) in f.values.chunks(g.ntheta).zip(&rho.values) {
        let lv = (1.0 - r).ln();
        values.extend(line.iter().map(|&v| v.ln() - lv));
    }
    Ok(Field3 { grid: g, values })
}

fn check_strict(f: &FieldF, rho: &FieldRho) -> Result<()> {
    let (imin, fmin) = argmin(&f.values);
    if fmin <= 0.0 || fmin.is_nan() {
        return Err(Error::DegenerateState {
            what: "f",
            node: imin,
            value: fmin,
        });
    }
    let (imax, rmax) = argmax(&rho.values);
    if rmax >= 1.0 || rmax.is_nan() {
        return Err(Error::DegenerateState {
            what: "rho",
            node: imax,
            value: rmax,
        });
    }
    Ok(())
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| {
            if x < acc.1 || x.is_nan() {
                (i, x)
            } else {
                acc
            }
        })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| {
            if x > acc.1 || x.is_nan() {
                (i, x)
            } else {
                acc
            }
        })
}

/// Inverse map, log-sum-exp stabilized.
pub fn dual_image(u: &FieldU) -> DualImage {
    let g = u.grid;
    let h = g.htheta();
    let mut f = Vec::with_capacity(g.len());
    let mut rho = Vec::with_capacity(g.len_x());
    let mut vac = Vec::with_capacity(g.len_x());
    let mut ex = vec![0.0; g.ntheta];
    for line in u.values.chunks(g.ntheta) {
        let m = line.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m >= 0.0 {
            for (e, &v) in ex.iter_mut().zip(line) {
                *e = (v - m).exp();
            }
            let s = h * ex.iter().sum::<f64>();
            let a = (-m).exp();
            let d = a + s;
            f.extend(ex.iter().map(|e| e / d));
            rho.push(s / d);
            vac.push(a / d);
        } else {
            for (e, &v) in ex.iter_mut().zip(line) {
                *e = v.exp();
            }
            let s = h * ex.iter().sum::<f64>();
            let d = 1.0 + s;
            f.extend(ex.iter().map(|e| e / d));
            rho.push(s / d);
            vac.push(1.0 / d);
        }
    }
    DualImage {
        f: Field3 { grid: g, values: f },
        rho: Field2 {
            grid: g,
            values: rho,
        },
        vacancy: Field2 {
            grid: g,
            values: vac,
        },
    }
}

/// `f = e^u / (1 + S)`, `rho = S / (1 + S)` with `S = int e^u dtheta`.
pub fn from_entropy_var(u: &FieldU) -> (FieldF, FieldRho) {
    let img = dual_image(u);
    (img.f, img.rho)
}

/// `log(1 + int e^u dtheta)` at every spatial node.
pub fn log_one_plus_s(u: &FieldU) -> Vec<f64> {
    let g = u.grid;
    let h = g.htheta();
    u.values
        .chunks(g.ntheta)
        .map(|line| {
            let m = line.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m >= 0.0 {
                let s: f64 = h * line.iter().map(|v| (v - m).exp()).sum::<f64>();
                m + ((-m).exp() + s).ln()
            } else {
                (h * line.iter().map(|v| v.exp()).sum::<f64>()).ln_1p()
            }
        })
        .collect()
}

#[inline]
fn slogs(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        s * s.ln()
    }
}

fn check_admissible(f: &FieldF, rho: &FieldRho) -> Result<()> {
    let (imin, fmin) = argmin(&f.values);
    if fmin < -BOUND_TOL || fmin.is_nan() {
        return Err(Error::DegenerateState {
            what: "f",
            node: imin,
            value: fmin,
        });
    }
    let (imax, rmax) = argmax(&rho.values);
    if rmax > 1.0 + BOUND_TOL || rmax.is_nan() {
        return Err(Error::DegenerateState {
            what: "rho",
            node: imax,
            value: rmax,
        });
    }
    Ok(())
}

/// `int_Upsilon f log f + int_Omega (1 - rho) log(1 - rho)`.
///
/// The vacancy term is integrated over space only, which is the normalization
/// whose first variation is `u` and whose Legendre dual is [`conjugate`].
/// [`entropy_upsilon`] keeps the extra `2 pi` factor of the angle integral.
pub fn entropy(f: &FieldF) -> Result<f64> {
    let rho = marginal_rho(f);
    check_admissible(f, &rho)?;
    let (a, b) = entropy_parts(f, &rho);
    Ok(a + b)
}

/// Entropy with the vacancy term integrated over the full space-angle cell.
pub fn entropy_upsilon(f: &FieldF) -> Result<f64> {
    let rho = marginal_rho(f);
    check_admissible(f, &rho)?;
    let (a, b) = entropy_parts(f, &rho);
    Ok(a + crate::fields::TWO_PI * b)
}

/// Entropy evaluated on a given `(f, rho)` pair without bound checks; values
/// outside the admissible set are treated by the `0 log 0` branch.
pub fn entropy_unchecked(f: &FieldF, rho: &FieldRho) -> f64 {
    let (a, b) = entropy_parts(f, rho);
    a + b
}

/// Entropy from a dual image, using the stored vacancy.
pub fn entropy_of_image(img: &DualImage) -> f64 {
    let g = img.f.grid;
    let a = g.cell() * pairwise_sum_by(g.len(), &|i| slogs(img.f.values[i]));
    let b = g.cell_x() * pairwise_sum_by(g.len_x(), &|i| slogs(img.vacancy.values[i]));
    a + b
}

fn entropy_parts(f: &FieldF, rho: &FieldRho) -> (f64, f64) {
    let g = f.grid;
    let a = g.cell() * pairwise_sum_by(g.len(), &|i| slogs(f.values[i]));
    let b = g.cell_x() * pairwise_sum_by(g.len_x(), &|i| slogs(1.0 - rho.values[i]));
    (a, b)
}

/// `E*[u] = int_Omega log(1 + int e^u dtheta) dx`.
pub fn conjugate(u: &FieldU) -> f64 {
    integrate2(&u.grid, &log_one_plus_s(u))
}

pub fn mobility(u: &FieldU, params: &ModelParams) -> MobilityDiag {
    let img = dual_image(u);
    mobility_of_image(&img, params)
}

pub fn mobility_of_image(img: &DualImage, params: &ModelParams) -> MobilityDiag {
    let g = img.f.grid;
    let mut spatial = Vec::with_capacity(g.len());
    for (line, &v) in img.f.values.chunks(g.ntheta).zip(&img.vacancy.values) {
        spatial.extend(line.iter().map(|f| params.de * f * v));
    }
    MobilityDiag {
        spatial: Field3 {
            grid: g,
            values: spatial,
        },
        angular: img.f.clone(),
    }
}

/// Hessian of the conjugate applied to `v`: `f (v - int f v dtheta)`.
pub fn hessian_apply(u: &FieldU, v: &Field3) -> Field3 {
    let img = dual_image(u);
    hessian_apply_f(&img.f, v)
}

/// Hessian action given the already reconstructed density.
pub fn hessian_apply_f(f: &FieldF, v: &Field3) -> Field3 {
    assert_eq!(f.grid, v.grid, "grid mismatch");
    let g = f.grid;
    let h = g.htheta();
    let mut out = Vec::with_capacity(g.len());
    for (fl, vl) in f.values.chunks(g.ntheta).zip(v.values.chunks(g.ntheta)) {
        let w = h * fl.iter().zip(vl).map(|(a, b)| a * b).sum::<f64>();
        out.extend(fl.iter().zip(vl).map(|(a, b)| a * (b - w)));
    }
    Field3 { grid: g, values: out }
}

/// `int De f (1 - rho) |grad_x u|^2 + f |d_theta u|^2` with `u` the entropy variable of `f`.
pub fn dissipation(f: &FieldF, params: &ModelParams) -> Result<f64> {
    dissipation_with(&Spectral::new(f.grid), f, params)
}

pub fn dissipation_with(sp: &Spectral, f: &FieldF, params: &ModelParams) -> Result<f64> {
    let rho = marginal_rho(f);
    let u = to_entropy_var(f, &rho)?;
    let vac = rho.map(|r| 1.0 - r);
    let (u1, u2) = sp.grad_x(&u);
    let ut = sp.grad_theta(&u);
    Ok(dissipation_density(f, &vac, [&u1, &u2, &ut], params))
}

/// Dissipation of an entropy variable through its mobility and spectral gradient.
pub fn dissipation_of_u(sp: &Spectral, u: &FieldU, params: &ModelParams) -> f64 {
    let img = dual_image(u);
    let (u1, u2) = sp.grad_x(u);
    let ut = sp.grad_theta(u);
    dissipation_density(&img.f, &img.vacancy, [&u1, &u2, &ut], params)
}

/// Quadrature of `De f vac (u1^2 + u2^2) + f ut^2`.
pub fn dissipation_density(
    f: &FieldF,
    vac: &FieldRho,
    grad: [&Field3; 3],
    params: &ModelParams,
) -> f64 {
    let g = f.grid;
    let nt = g.ntheta;
    let integrand = |i: usize| {
        let fv = f.values[i];
        let sp = params.de * fv * vac.values[i / nt];
        sp * (grad[0].values[i].powi(2) + grad[1].values[i].powi(2))
            + fv * grad[2].values[i].powi(2)
    };
    g.cell() * pairwise_sum_by(g.len(), &integrand)
}

/// `zeta(s) = s (log s - 1) + 1`.
pub fn zeta(s: f64) -> f64 {
    s * (s.ln() - 1.0) + 1.0
}

/// Convexity gap `zeta(a) + zeta(b) - 2 zeta((a + b) / 2)` for `a, b > 0`,
/// evaluated without cancellation when `a` and `b` are close.
pub fn zeta_gap(a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let t = (a - b) / (a + b);
    let t2 = t * t;
    if t.abs() < 1e-2 {
        // sum_k t^(2k) / (k (2k - 1))
        c * t2 * (1.0 + t2 * (1.0 / 6.0 + t2 * (1.0 / 15.0 + t2 * (1.0 / 28.0))))
    } else {
        c * ((1.0 + t) * t.ln_1p() + (1.0 - t) * (-t).ln_1p())
    }
}

/// Regularized Gajewski distance `int zeta_d(f1) + zeta_d(f2) - 2 zeta_d((f1 + f2) / 2)`.
pub fn gajewski_distance(f1: &FieldF, f2: &FieldF, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::NonPositiveDelta(delta));
    }
    if f1.grid != f2.grid {
        return Err(Error::ShapeMismatch {
            expected: f1.grid.len(),
            got: f2.grid.len(),
        });
    }
    for f in [f1, f2] {
        let (i, m) = argmin(&f.values);
        if m < -BOUND_TOL || m.is_nan() {
            return Err(Error::DegenerateState {
                what: "f",
                node: i,
                value: m,
            });
        }
    }
    let g = f1.grid;
    let integrand = |i: usize| {
        zeta_gap(
            f1.values[i].max(0.0) + delta,
            f2.values[i].max(0.0) + delta,
        )
    };
    Ok(g.cell() * pairwise_sum_by(g.len(), &integrand))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{inner3, GridSpec, TWO_PI};
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(4, 6, 8).unwrap()
    }

    #[test]
    fn constant_entropy_variable() {
        let g = grid();
        let f = Field3::constant(g, 1.0 / (4.0 * PI));
        let rho = marginal_rho(&f);
        let u = to_entropy_var(&f, &rho).unwrap();
        let want = (1.0 / TWO_PI).ln();
        assert!(u.values.iter().all(|v| (v - want).abs() < 1e-14));
    }

    #[test]
    fn zero_u_image() {
        let g = grid();
        let (f, rho) = from_entropy_var(&Field3::zeros(g));
        let d = 1.0 + TWO_PI;
        assert!(f.values.iter().all(|v| (v - 1.0 / d).abs() < 1e-15));
        assert!(rho.values.iter().all(|v| (v - TWO_PI / d).abs() < 1e-15));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let g = grid();
        let mut f = Field3::constant(g, 0.1);
        f.values[7] = 0.0;
        let rho = marginal_rho(&f);
        match to_entropy_var(&f, &rho) {
            Err(Error::DegenerateState { what, node, .. }) => {
                assert_eq!(what, "f");
                assert_eq!(node, 7);
            }
            other => panic!("{other:?}"),
        }
        let f = Field3::constant(g, 1.0 / TWO_PI);
        assert!(to_entropy_var(&f, &marginal_rho(&f)).is_err());
    }

    #[test]
    fn entropy_closed_forms() {
        let g = grid();
        let c = 1.0 / (4.0 * PI);
        let f = Field3::constant(g, c);
        let lit = TWO_PI.powi(3) * (c * c.ln() + 0.5 * 0.5f64.ln());
        assert!((entropy_upsilon(&f).unwrap() - lit).abs() < 1e-12 * lit.abs());
        let omega = TWO_PI.powi(3) * c * c.ln() + TWO_PI.powi(2) * 0.5 * 0.5f64.ln();
        assert!((entropy(&f).unwrap() - omega).abs() < 1e-12 * omega.abs());
        let full = Field3::constant(g, 1.0 / TWO_PI);
        let want = TWO_PI.powi(3) * (1.0 / TWO_PI) * (1.0 / TWO_PI).ln();
        assert!((entropy(&full).unwrap() - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn conjugate_limits() {
        let g = grid();
        let z = conjugate(&Field3::zeros(g));
        assert!((z - TWO_PI.powi(2) * (1.0 + TWO_PI).ln()).abs() < 1e-12);
        let small = conjugate(&Field3::constant(g, -50.0));
        assert!(small > 0.0 && small < 1e-18);
    }

    #[test]
    fn mobility_of_zero() {
        let g = grid();
        let p = ModelParams { pe: 0.0, de: 2.5 };
        let m = mobility(&Field3::zeros(g), &p);
        let d = 1.0 + TWO_PI;
        assert!(m.spatial.values.iter().all(|v| (v - 2.5 / (d * d)).abs() < 1e-15));
        assert!(m.angular.values.iter().all(|v| (v - 1.0 / d).abs() < 1e-15));
    }

    #[test]
    fn hessian_of_constants() {
        let g = grid();
        let c: f64 = 0.4;
        let w = -1.3;
        let a = hessian_apply(&Field3::constant(g, c), &Field3::constant(g, w));
        let want = c.exp() * w / (1.0 + TWO_PI * c.exp()).powi(2);
        assert!(a.values.iter().all(|v| (v - want).abs() < 1e-15));
        let z = hessian_apply(&Field3::constant(g, c), &Field3::zeros(g));
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hessian_lower_bound_by_vacancy() {
        // <v, A v> >= int (1 - rho) f v^2
        let g = grid();
        let u = Field3::from_fn(g, |x, y, t| (x + 2.0 * t).sin() - 0.5 * y.cos());
        let v = Field3::from_fn(g, |x, _, t| 1.0 + (3.0 * t).cos() * x.sin());
        let img = dual_image(&u);
        let lhs = inner3(&v, &hessian_apply(&u, &v));
        let nt = g.ntheta;
        let rhs = g.cell()
            * (0..g.len())
                .map(|i| img.vacancy.values[i / nt] * img.f.values[i] * v.values[i].powi(2))
                .sum::<f64>();
        assert!(lhs >= rhs - 1e-14);
    }

    #[test]
    fn constant_dissipation_vanishes() {
        let g = grid();
        let f = Field3::constant(g, 0.05);
        assert!(dissipation(&f, &ModelParams::default()).unwrap().abs() < 1e-25);
    }

    #[test]
    fn zeta_gap_matches_direct_formula() {
        for (a, b) in [(0.3, 0.7), (1.0, 1.5), (0.01, 0.2), (0.5, 0.5001)] {
            let direct = zeta(a) + zeta(b) - 2.0 * zeta(0.5 * (a + b));
            assert!((zeta_gap(a, b) - direct).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn gajewski_constants_and_errors() {
        let g = grid();
        let (a, b, d) = (0.1, 0.03, 1e-2);
        let f1 = Field3::constant(g, a);
        let f2 = Field3::constant(g, b);
        let want = TWO_PI.powi(3) * (zeta(a + d) + zeta(b + d) - 2.0 * zeta(0.5 * (a + b) + d));
        let got = gajewski_distance(&f1, &f2, d).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        assert_eq!(gajewski_distance(&f1, &f1, d).unwrap(), 0.0);
        assert!(matches!(
            gajewski_distance(&f1, &f2, 0.0),
            Err(Error::NonPositiveDelta(_))
        ));
    }
}
