//! Frozen reference values. The extreme entropy-variable cases were computed
//! with 300-digit arithmetic; the quadratic map values come from expanding
//! the products of single modes by hand.

use std::f64::consts::PI;

use abpf_core::entropy::{conjugate, dual_image, log_one_plus_s};
use abpf_core::fields::{Field3, GridSpec};
use abpf_core::stationary::apply_g;
use abpf_core::ModelParams;

fn line_field(line: [f64; 4]) -> Field3 {
    let g = GridSpec::new(4, 4, 4).unwrap();
    let values = (0..g.len_x()).flat_map(|_| line).collect();
    Field3::from_values(g, values).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

struct Case {
    u: [f64; 4],
    f: [f64; 4],
    vacancy: f64,
    rho: f64,
    log_one_plus_s: f64,
}

const CASES: [Case; 3] = [
    Case {
        u: [500.0, 499.5, -3.0, 0.0],
        f: [
            0.39626991773780157589,
            0.24034985462977976718,
            1.4056160497042801805e-219,
            2.8232553066160511585e-218,
        ],
        vacancy: 2.8232553066160511585e-218,
        rho: 1.0,
        log_one_plus_s: 500.92565968946956155,
    },
    Case {
        u: [-500.0, -501.0, -499.0, -500.0],
        f: [
            7.1245764067412855315e-218,
            2.6209851870952266725e-218,
            1.9366606581912876011e-217,
            7.1245764067412855315e-218,
        ],
        vacancy: 1.0,
        rho: 5.6920545285181220011e-217,
        log_one_plus_s: 5.6920545285181220011e-217,
    },
    Case {
        u: [30.0, -30.0, 0.0, 1.0],
        f: [
            0.6366197723673219108,
            5.5745678884798631483e-27,
            5.9572478043222550108e-14,
            1.6193478454116731872e-13,
        ],
        vacancy: 5.9572478043222550108e-14,
        rho: 0.99999999999994042752,
        log_one_plus_s: 30.45158270528986238,
    },
];

#[test]
fn extreme_entropy_variables_match_high_precision_values() {
    for c in &CASES {
        let u = line_field(c.u);
        let img = dual_image(&u);
        for (k, want) in c.f.iter().enumerate() {
            let got = img.f.values[k];
            assert!(rel(got, *want) < 1e-13, "u = {:?}, f[{k}] = {got:e}, want {want:e}", c.u);
        }
        assert!(rel(img.vacancy.values[0], c.vacancy) < 1e-13, "{:?}", c.u);
        assert!(rel(img.rho.values[0], c.rho) < 1e-15, "{:?}", c.u);
        assert!(rel(log_one_plus_s(&u)[0], c.log_one_plus_s) < 1e-14, "{:?}", c.u);
        let area = 4.0 * PI * PI;
        assert!(rel(conjugate(&u), area * c.log_one_plus_s) < 1e-14);
        assert!(img.f.is_finite() && img.vacancy.values.iter().all(|v| *v > 0.0));
    }
}

/// `w = cos x + b cos(theta) cos(2y)` has angular mean `W = 2 pi cos x`, and
/// `G(w) = 6 pi De b cos(theta) cos x cos 2y
///        - Pe [2 pi sin 2x cos theta + pi b (1 + cos 2 theta) sin x cos 2y
///              + 2 pi b cos x sin 2y sin 2 theta]`.
#[test]
fn quadratic_map_of_two_modes() {
    let g = GridSpec::cubic(8).unwrap();
    let b = 0.7;
    for (pe, de) in [(0.0, 1.0), (1.5, 0.5), (3.0, 2.0)] {
        let p = ModelParams::new(pe, de).unwrap();
        let w = Field3::from_fn(g, |x, y, t| x.cos() + b * t.cos() * (2.0 * y).cos());
        let got = apply_g(&w, &p);
        let want = Field3::from_fn(g, |x, y, t| {
            6.0 * PI * de * b * t.cos() * x.cos() * (2.0 * y).cos()
                - pe * (2.0 * PI * (2.0 * x).sin() * t.cos()
                    + PI * b * (1.0 + (2.0 * t).cos()) * x.sin() * (2.0 * y).cos()
                    + 2.0 * PI * b * x.cos() * (2.0 * y).sin() * (2.0 * t).sin())
        });
        let err = got
            .values
            .iter()
            .zip(&want.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "Pe = {pe}, De = {de}: error {err:e}");
    }
}

#[test]
fn quadratic_map_vanishes_without_angular_mean() {
    let g = GridSpec::cubic(8).unwrap();
    let p = ModelParams::new(2.0, 1.0).unwrap();
    let w = Field3::from_fn(g, |x, y, t| t.cos() * x.cos() + (2.0 * t).sin() * y.sin());
    assert!(apply_g(&w, &p).max_abs() < 1e-13);
}
