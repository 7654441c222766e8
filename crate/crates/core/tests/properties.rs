use abpf_core::entropy::{
    conjugate, dual_image, entropy, gajewski_distance, hessian_apply, log_one_plus_s,
    to_entropy_var,
};
use abpf_core::fields::snapshot::{decode, encode};
use abpf_core::fields::spectral::TrigTransform;
use abpf_core::fields::{integrate3, marginal_rho, total_mass, Field3, GridSpec};
use abpf_core::initial::{random_trig, smooth_random};
use abpf_core::mollify::{convolve, MollifierSpec};
use abpf_core::primal_solver::rhs_primal;
use abpf_core::stationary::apply_g;
use abpf_core::ModelParams;
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(8, 6, 8).unwrap()
}

/// Smooth data with `max rho < 1`: the amplitude is a fraction of the largest admissible one.
fn admissible(rho: f64, frac: f64, seed: u64) -> abpf_core::fields::FieldF {
    let amp = frac * (0.99 * (1.0 / rho - 1.0)).min(0.95);
    smooth_random(grid(), rho, amp, seed)
}

fn inner(a: &Field3, b: &Field3) -> f64 {
    let p: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    integrate3(&a.grid, &p)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_variable_round_trip(seed in 0u64..10_000, rho in 0.02f64..0.95, amp in 0.0f64..1.0) {
        let f = admissible(rho, amp, seed);
        let u = to_entropy_var(&f, &marginal_rho(&f)).unwrap();
        let back = dual_image(&u).f;
        for (a, b) in back.values.iter().zip(&f.values) {
            prop_assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn fenchel_young(seed in 0u64..10_000, seed_u in 0u64..10_000, rho in 0.05f64..0.9,
                     amp in 0.0f64..1.0, scale in 0.0f64..20.0, shift in -10.0f64..10.0) {
        let f = admissible(rho, amp, seed);
        let u = random_trig(grid(), 2, seed_u).map(|v| scale * v + shift);
        let e = entropy(&f).unwrap();
        prop_assert!(e + conjugate(&u) >= inner(&u, &f) - 1e-10 * (1.0 + e.abs()));
        let uf = to_entropy_var(&f, &marginal_rho(&f)).unwrap();
        prop_assert!(close(e + conjugate(&uf), inner(&uf, &f), 1e-12));
    }

    #[test]
    fn conjugate_hessian_is_symmetric_and_nonnegative(seed in 0u64..10_000, a in 0u64..10_000,
                                                       b in 0u64..10_000, scale in 0.1f64..30.0) {
        let u = random_trig(grid(), 2, seed).map(|v| scale * v);
        let v = random_trig(grid(), 3, a);
        let w = random_trig(grid(), 3, b);
        let vhw = inner(&v, &hessian_apply(&u, &w));
        let whv = inner(&w, &hessian_apply(&u, &v));
        prop_assert!(close(vhw, whv, 1e-12));
        prop_assert!(inner(&v, &hessian_apply(&u, &v)) >= -1e-14);
    }

    #[test]
    fn log_one_plus_s_matches_naive_form(seed in 0u64..10_000, scale in 0.0f64..5.0) {
        let u = random_trig(grid(), 2, seed).map(|v| scale * v);
        let h = grid().htheta();
        let naive: Vec<f64> = u.values.chunks(grid().ntheta)
            .map(|l| (1.0 + h * l.iter().map(|v| v.exp()).sum::<f64>()).ln())
            .collect();
        for (a, b) in log_one_plus_s(&u).iter().zip(&naive) {
            prop_assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>(), 8 * 6 * 8)) {
        let f = Field3::from_values(grid(), values).unwrap();
        let back = decode(&encode(&f)).unwrap();
        prop_assert_eq!(back.grid, f.grid);
        for (a, b) in back.values.iter().zip(&f.values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn trig_transform_inverts(values in prop::collection::vec(-1e3f64..1e3, 8 * 6 * 8)) {
        let t = TrigTransform::new(&grid().dims3());
        let back = t.inverse(&t.forward(&values));
        for (a, b) in back.iter().zip(&values) {
            prop_assert!((a - b).abs() <= 1e-12 * 1e3);
        }
    }

    #[test]
    fn quadratic_map_is_homogeneous(seed in 0u64..10_000, lambda in -4.0f64..4.0,
                                    pe in 0.0f64..5.0, de in 0.1f64..3.0) {
        let p = ModelParams::new(pe, de).unwrap();
        let w = random_trig(grid(), 2, seed);
        let gw = apply_g(&w, &p);
        let glw = apply_g(&w.map(|v| lambda * v), &p);
        let scale = gw.max_abs().max(1e-300);
        for (a, b) in glw.values.iter().zip(&gw.values) {
            prop_assert!((a - lambda * lambda * b).abs() <= 1e-12 * (1.0 + lambda * lambda) * scale);
        }
    }

    #[test]
    fn primal_tendency_conserves_mass(seed in 0u64..10_000, rho in 0.05f64..0.9,
                                      pe in 0.0f64..5.0, de in 0.1f64..3.0) {
        let f = admissible(rho, 0.8, seed);
        let r = rhs_primal(&f, &ModelParams::new(pe, de).unwrap());
        prop_assert!(total_mass(&r).abs() <= 1e-11 * (1.0 + r.max_abs()));
    }

    #[test]
    fn mollification_conserves_mass_and_bounds(seed in 0u64..10_000, rho in 0.05f64..0.9,
                                               eps in 0.01f64..1.0) {
        let f = admissible(rho, 0.9, seed);
        let spec = MollifierSpec::with_default_gamma(eps).unwrap();
        let m = convolve(&f, &spec).unwrap();
        prop_assert!(close(total_mass(&m), total_mass(&f), 1e-13));
        prop_assert!(m.min() >= f.min() - 1e-13 && m.max() <= f.max() + 1e-13);
    }

    #[test]
    fn gajewski_distance_is_a_symmetric_gap(a in 0u64..10_000, b in 0u64..10_000,
                                            rho in 0.05f64..0.9, delta in 1e-6f64..1.0) {
        let f1 = admissible(rho, 0.8, a);
        let f2 = admissible(rho, 0.8, b);
        let d12 = gajewski_distance(&f1, &f2, delta).unwrap();
        let d21 = gajewski_distance(&f2, &f1, delta).unwrap();
        prop_assert!(d12 >= -1e-14);
        prop_assert!(close(d12, d21, 1e-12));
        prop_assert!(gajewski_distance(&f1, &f1, delta).unwrap().abs() <= 1e-14);
    }
}
