//! Real trigonometric transforms on periodic tensor grids.
//!
//! Coefficient slots along an axis of length `n`: slot 0 holds the mean,
//! slots `2k-1` and `2k` hold the `cos(k x)` and `sin(k x)` amplitudes, and
//! for even `n` the last slot holds the Nyquist `cos(n x / 2)` amplitude.
//! A grid function `f` is reproduced exactly by
//! `c_0 + sum_k (a_k cos(k x) + b_k sin(k x)) + c_N cos(n x / 2)`.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const PAR_THRESHOLD: usize = 1 << 14;

/// Wavenumber carried by a coefficient slot.
#[inline]
pub fn slot_wavenumber(slot: usize) -> usize {
    (slot + 1) / 2
}

/// True when `slot` holds a sine amplitude on an axis of length `n`.
#[inline]
pub fn slot_is_sin(n: usize, slot: usize) -> bool {
    slot > 0 && slot % 2 == 0 && !(n % 2 == 0 && slot == n - 1)
}

/// True when `slot` is the Nyquist cosine of an even axis.
#[inline]
pub fn slot_is_nyquist(n: usize, slot: usize) -> bool {
    n % 2 == 0 && slot == n - 1
}

/// Mean of `phi^2` over one period for the basis function in `slot`.
#[inline]
pub fn axis_weight(n: usize, slot: usize) -> f64 {
    if slot == 0 || slot_is_nyquist(n, slot) {
        1.0
    } else {
        0.5
    }
}

/// Evaluate the basis function of `slot` at `x`.
#[inline]
pub fn basis_value(n: usize, slot: usize, x: f64) -> f64 {
    if slot == 0 {
        return 1.0;
    }
    let k = slot_wavenumber(slot) as f64;
    if slot_is_sin(n, slot) {
        (k * x).sin()
    } else {
        (k * x).cos()
    }
}

#[derive(Clone)]
struct LinePlan {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl LinePlan {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        LinePlan {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn forward(&self, line: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.extend(line.iter().map(|&v| Complex64::new(v, 0.0)));
        self.fwd.process(buf);
        let scale = 1.0 / n as f64;
        line[0] = buf[0].re * scale;
        for k in 1..=(n - 1) / 2 {
            line[2 * k - 1] = 2.0 * buf[k].re * scale;
            line[2 * k] = -2.0 * buf[k].im * scale;
        }
        if n % 2 == 0 {
            line[n - 1] = buf[n / 2].re * scale;
        }
    }

    fn inverse(&self, line: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        buf[0] = Complex64::new(line[0], 0.0);
        for k in 1..=(n - 1) / 2 {
            let a = line[2 * k - 1];
            let b = line[2 * k];
            buf[k] = Complex64::new(0.5 * a, -0.5 * b);
            buf[n - k] = Complex64::new(0.5 * a, 0.5 * b);
        }
        if n % 2 == 0 {
            buf[n / 2] = Complex64::new(line[n - 1], 0.0);
        }
        self.inv.process(buf);
        for (v, c) in line.iter_mut().zip(buf.iter()) {
            *v = c.re;
        }
    }
}

/// Separable real trigonometric transform over a row-major tensor grid
/// whose last axis varies fastest.
#[derive(Clone)]
pub struct TrigTransform {
    dims: Vec<usize>,
    plans: Vec<LinePlan>,
}

impl std::fmt::Debug for TrigTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrigTransform").field("dims", &self.dims).finish()
    }
}

impl TrigTransform {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = dims.iter().map(|&n| LinePlan::new(&mut planner, n)).collect();
        TrigTransform {
            dims: dims.to_vec(),
            plans,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        self.forward_in_place(&mut out);
        out
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = coeffs.to_vec();
        self.inverse_in_place(&mut out);
        out
    }

    pub fn forward_in_place(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len(), "transform length mismatch");
        for axis in (0..self.dims.len()).rev() {
            self.apply_axis(data, axis, true);
        }
    }

    pub fn inverse_in_place(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len(), "transform length mismatch");
        for axis in 0..self.dims.len() {
            self.apply_axis(data, axis, false);
        }
    }

    fn apply_axis(&self, data: &mut [f64], axis: usize, forward: bool) {
        let n = self.dims[axis];
        if n == 1 {
            return;
        }
        let plan = &self.plans[axis];
        let run = |line: &mut [f64], buf: &mut Vec<Complex64>| {
            if forward {
                plan.forward(line, buf)
            } else {
                plan.inverse(line, buf)
            }
        };
        let stride: usize = self.dims[axis + 1..].iter().product();
        if stride == 1 {
            if data.len() >= PAR_THRESHOLD {
                data.par_chunks_mut(n)
                    .for_each_init(Vec::new, |buf, line| run(line, buf));
            } else {
                let mut buf = Vec::with_capacity(n);
                data.chunks_mut(n).for_each(|line| run(line, &mut buf));
            }
            return;
        }
        // Gather strided lines into a contiguous buffer, transform, scatter back.
        let block = n * stride;
        let nblocks = data.len() / block;
        let mut lines = vec![0.0; data.len()];
        for b in 0..nblocks {
            for s in 0..stride {
                let dst = (b * stride + s) * n;
                let src = b * block + s;
                for j in 0..n {
                    lines[dst + j] = data[src + j * stride];
                }
            }
        }
        if data.len() >= PAR_THRESHOLD {
            lines
                .par_chunks_mut(n)
                .for_each_init(Vec::new, |buf, line| run(line, buf));
        } else {
            let mut buf = Vec::with_capacity(n);
            lines.chunks_mut(n).for_each(|line| run(line, &mut buf));
        }
        for b in 0..nblocks {
            for s in 0..stride {
                let src = (b * stride + s) * n;
                let dst = b * block + s;
                for j in 0..n {
                    data[dst + j * stride] = lines[src + j];
                }
            }
        }
    }
}

fn stride_of(dims: &[usize], axis: usize) -> usize {
    dims[axis + 1..].iter().product()
}

/// First derivative along `axis`, applied to a coefficient array.
/// The Nyquist slot is sent to zero, which keeps the discrete derivative skew-adjoint.
pub fn derivative_coeffs(coeffs: &[f64], dims: &[usize], axis: usize) -> Vec<f64> {
    let n = dims[axis];
    let stride = stride_of(dims, axis);
    let mut out = vec![0.0; coeffs.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let s = (idx / stride) % n;
        if s == 0 || slot_is_nyquist(n, s) {
            continue;
        }
        let k = slot_wavenumber(s) as f64;
        if slot_is_sin(n, s) {
            *o = -k * coeffs[idx - stride];
        } else {
            *o = k * coeffs[idx + stride];
        }
    }
    out
}

/// Second derivative along `axis` in coefficient space (Nyquist included).
pub fn second_derivative_coeffs(coeffs: &[f64], dims: &[usize], axis: usize) -> Vec<f64> {
    let n = dims[axis];
    let stride = stride_of(dims, axis);
    coeffs
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let k = slot_wavenumber((idx / stride) % n) as f64;
            -k * k * c
        })
        .collect()
}

/// Copy coefficient slots between grids of different sizes. Slots present in
/// both layouts are copied, the rest are zero, so this pads or truncates.
pub fn resize_coeffs(coeffs: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    assert_eq!(from.len(), to.len());
    assert_eq!(coeffs.len(), from.iter().product::<usize>());
    let mut out = vec![0.0; to.iter().product()];
    let common: Vec<usize> = from.iter().zip(to).map(|(a, b)| (*a).min(*b)).collect();
    let mut idx = vec![0usize; from.len()];
    let total: usize = common.iter().product();
    for _ in 0..total {
        let mut src = 0;
        let mut dst = 0;
        for d in 0..from.len() {
            src = src * from[d] + idx[d];
            dst = dst * to[d] + idx[d];
        }
        out[dst] = coeffs[src];
        for d in (0..from.len()).rev() {
            idx[d] += 1;
            if idx[d] < common[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Padded axis length for products of two band-limited factors.
pub fn padded_len(n: usize) -> usize {
    let m = 3 * n / 2 + 1;
    m + m % 2
}

/// Product weight `prod_axis axis_weight` for every coefficient slot.
pub fn slot_weights(dims: &[usize]) -> Vec<f64> {
    let len: usize = dims.iter().product();
    let mut out = vec![1.0; len];
    for (axis, &n) in dims.iter().enumerate() {
        let stride = stride_of(dims, axis);
        for (idx, w) in out.iter_mut().enumerate() {
            *w *= axis_weight(n, (idx / stride) % n);
        }
    }
    out
}

/// Zero-padded product machinery between a base grid and its 3/2-rule extension.
#[derive(Clone, Debug)]
pub struct Dealias {
    base: Vec<usize>,
    padded: Vec<usize>,
    transform: TrigTransform,
}

impl Dealias {
    pub fn new(base: &[usize]) -> Self {
        let padded: Vec<usize> = base.iter().map(|&n| padded_len(n)).collect();
        Dealias {
            base: base.to_vec(),
            transform: TrigTransform::new(&padded),
            padded,
        }
    }

    pub fn padded_dims(&self) -> &[usize] {
        &self.padded
    }

    /// Base-grid coefficients to padded-grid values.
    pub fn lift(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut big = resize_coeffs(coeffs, &self.base, &self.padded);
        self.transform.inverse_in_place(&mut big);
        big
    }

    /// Padded-grid values to base-grid coefficients (truncating high modes).
    pub fn lower(&self, values: &[f64]) -> Vec<f64> {
        let big = self.transform.forward(values);
        resize_coeffs(&big, &self.padded, &self.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid_points(n: usize) -> Vec<f64> {
        (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
    }

    #[test]
    fn single_cosine_has_one_coefficient() {
        for n in [8usize, 9, 16] {
            let t = TrigTransform::new(&[n]);
            let x = grid_points(n);
            let v: Vec<f64> = x.iter().map(|x| x.cos()).collect();
            let c = t.forward(&v);
            for (s, c) in c.iter().enumerate() {
                let want = if s == 1 { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-14, "n={n} slot {s}: {c}");
            }
        }
    }

    #[test]
    fn nyquist_and_sine_slots() {
        let n = 8;
        let t = TrigTransform::new(&[n]);
        let x = grid_points(n);
        let v: Vec<f64> = x.iter().map(|x| 0.3 * (4.0 * x).cos() - 2.0 * (3.0 * x).sin()).collect();
        let c = t.forward(&v);
        assert!((c[7] - 0.3).abs() < 1e-14);
        assert!((c[6] + 2.0).abs() < 1e-14);
        assert!(slot_is_nyquist(8, 7) && slot_is_sin(8, 6) && !slot_is_sin(8, 7));
        assert!(slot_is_sin(9, 8));
    }

    #[test]
    fn derivative_pairs_rotate() {
        let n = 16;
        let t = TrigTransform::new(&[n]);
        let x = grid_points(n);
        let v: Vec<f64> = x.iter().map(|x| (2.0 * x).sin() + 0.5 * x.cos()).collect();
        let d = t.inverse(&derivative_coeffs(&t.forward(&v), &[n], 0));
        for (xi, di) in x.iter().zip(&d) {
            let want = 2.0 * (2.0 * xi).cos() - 0.5 * xi.sin();
            assert!((di - want).abs() < 1e-13);
        }
    }

    #[test]
    fn padding_roundtrip_is_identity() {
        let dims = [6usize, 8];
        let c: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = Dealias::new(&dims);
        assert_eq!(d.padded_dims(), &[10, 14]);
        let back = d.lower(&d.lift(&c));
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn padded_sizes() {
        assert_eq!(padded_len(16), 26);
        assert_eq!(padded_len(30), 46);
        assert_eq!(padded_len(32), 50);
    }
}
