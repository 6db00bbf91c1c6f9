use std::f64::consts::PI;
use std::sync::Arc;

use coincide_core::constraint::ConstraintField;
use coincide_core::func::{constant_matrix, constant_scalar};
use coincide_core::linalg::Mat;
use coincide_core::nonlinearity::{
    audit_tangency, compute_apriori_exponents, growth_audit, q_bound, s_bound, superpose, ForcingTerm,
};
use coincide_core::rng::SampleRng;
use coincide_core::{Error, GridDomain, VectorField};
use proptest::prelude::*;

#[test]
fn superpose_trivial_cases() {
    let g = GridDomain::new(2, 1.0, 7).unwrap();
    let u = VectorField::from_fn(g, 2, |x, o| {
        o[0] = x[0];
        o[1] = x[1] * x[0];
    });
    let z = superpose(&ForcingTerm::zero(2, 2), &u).unwrap();
    assert!(z.data().iter().all(|v| *v == 0.0));

    let id = ForcingTerm::new("identity", 2, 2, 1.0, 1.0, constant_scalar(0.0), 1.0, Arc::new(|_, u, _, o| o.copy_from_slice(u))).unwrap();
    let v = VectorField::constant(g, &[0.3, -2.0]);
    assert_eq!(superpose(&id, &v).unwrap().data(), v.data());
}

fn gradient_error(n: usize) -> f64 {
    let g = GridDomain::new(1, 1.0, n).unwrap();
    let u = VectorField::from_fn(g, 1, |x, o| o[0] = (PI * x[0]).sin());
    let f = ForcingTerm::new("slope", 1, 1, 1.0, 1.0, constant_scalar(0.0), 1.0, Arc::new(|_, _, xi, o| o[0] = xi[0])).unwrap();
    let fu = superpose(&f, &u).unwrap();
    g.points().map(|(i, p)| (fu.node(i)[0] - PI * (PI * p[0]).cos()).abs()).fold(0.0, f64::max)
}

#[test]
fn superpose_gradient_is_second_order() {
    let errs: Vec<f64> = [31, 63, 127, 255].iter().map(|&n| gradient_error(n)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.9 && order < 2.1, "{errs:?}");
    }
    // Leading term of the centred difference error: (π³/6) Δx².
    let dx = 2.0 / 256.0;
    assert!((errs[3] / (PI.powi(3) / 6.0 * dx * dx) - 1.0).abs() < 0.01);
}

#[test]
fn superpose_reports_nonfinite_node() {
    let g = GridDomain::new(1, 1.0, 9).unwrap();
    let u = VectorField::from_fn(g, 1, |x, o| o[0] = x[0]);
    let f = ForcingTerm::new("pole", 1, 1, 1.0, 1.0, constant_scalar(1.0), 1.0, Arc::new(|_, u, _, o| o[0] = 1.0 / u[0])).unwrap();
    assert!(matches!(superpose(&f, &u), Err(Error::NonFiniteForcing { node: 4 })));
}

#[test]
fn superpose_is_continuous() {
    let g = GridDomain::new(1, 1.0, 63).unwrap();
    let f = ForcingTerm::new(
        "mixed",
        1,
        1,
        1.5,
        1.2,
        constant_scalar(1.0),
        2.0,
        Arc::new(|_, u, xi, o| o[0] = u[0] * u[0].abs().sqrt() - xi[0].abs().powf(1.2) + 1.0),
    )
    .unwrap();
    let u = VectorField::from_fn(g, 1, |x, o| o[0] = (1.0 - x[0] * x[0]) * (2.0 * x[0]).cos());
    let fu = superpose(&f, &u).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..8 {
        let eps = 0.5f64.powi(2 * k);
        let v = VectorField::from_fn(g, 1, |x, o| o[0] = (1.0 - x[0] * x[0]) * ((2.0 * x[0]).cos() + eps * (5.0 * x[0]).sin()));
        let dist = v.sub(&u).unwrap().h1_norm();
        let gap = superpose(&f, &v).unwrap().sub(&fu).unwrap().l2_norm();
        assert!(gap < last);
        assert!(gap <= 10.0 * dist.powf(0.2), "{gap} vs {dist}");
        last = gap;
    }
    assert!(last < 1e-3);
}

#[test]
fn tangency_examples() {
    let g = GridDomain::new(1, 1.0, 15).unwrap();
    let unit = ConstraintField::constant_rectangle(&[0.0], &[1.0]).unwrap();
    let logistic = ForcingTerm::logistic(1, 1, 1.0).unwrap();
    assert!(audit_tangency(&logistic, &unit, &g, 500, 1).unwrap().pass);
    assert!(growth_audit(&logistic, &unit, &g, 10_000, 1).unwrap().pass);

    let push = ForcingTerm::constant(1, &[1.0]).unwrap();
    let rep = audit_tangency(&push, &unit, &g, 500, 1).unwrap();
    assert!(!rep.pass);
    let w = rep.witness.unwrap();
    assert!((w.u[0] - 1.0).abs() < 1e-12 && w.f == vec![1.0]);

    let ball = ConstraintField::ellipsoid(2, constant_matrix(Mat::identity(2)), 1e-12).unwrap();
    let rotation = ForcingTerm::linear(1, Mat::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]), &[0.0, 0.0]).unwrap();
    assert!(audit_tangency(&rotation, &ball, &g, 1000, 3).unwrap().pass);
    assert!(growth_audit(&rotation, &ball, &g, 10_000, 3).unwrap().pass);
    let outward = ForcingTerm::linear(1, Mat::identity(2), &[0.0, 0.0]).unwrap();
    assert!(!audit_tangency(&outward, &ball, &g, 100, 3).unwrap().pass);
}

#[test]
fn growth_audit_catches_understated_bound() {
    let g = GridDomain::new(1, 1.0, 15).unwrap();
    let k = ConstraintField::constant_rectangle(&[-5.0], &[5.0]).unwrap();
    let cubic = ForcingTerm::new("cubic", 1, 1, 1.0, 1.0, constant_scalar(0.0), 1.0, Arc::new(|_, u, _, o| o[0] = u[0].powi(3))).unwrap();
    let rep = growth_audit(&cubic, &k, &g, 10_000, 0).unwrap();
    assert!(!rep.pass && rep.worst_ratio > 1.0);
    assert!(rep.witness.unwrap().u[0].abs() > 1.0);
}

#[test]
fn exponent_examples() {
    let e = compute_apriori_exponents(1.0, 1.0, 3).unwrap();
    assert_eq!((e.theta1, e.theta2, e.gamma1, e.gamma2, e.p_embed), (0.0, 0.0, 0.0, 0.5, 2.0));
    let e = compute_apriori_exponents(2.0, 1.0, 3).unwrap();
    assert!((e.theta1 - 0.75).abs() < 1e-15 && (e.gamma1 - 0.75).abs() < 1e-15);
    let e = compute_apriori_exponents(1.0, 1.3, 3).unwrap();
    assert!((e.theta2 - 1.5 * 0.3 / 1.3).abs() < 1e-15);
    assert!((e.gamma2 - 0.65 * (1.0 + 0.45 / 1.3)).abs() < 1e-15);
    assert!((e.gamma2 - 0.875).abs() < 1e-3);

    assert!(matches!(compute_apriori_exponents(7.0 / 3.0, 1.0, 3), Err(Error::ExponentOutOfRange(_))));
    assert!(matches!(compute_apriori_exponents(1.0, 1.4, 3), Err(Error::ExponentOutOfRange(_))));
    assert!(compute_apriori_exponents(0.9, 1.0, 3).is_err());
    assert!(ForcingTerm::new("bad", 3, 1, 2.5, 1.0, constant_scalar(0.0), 1.0, Arc::new(|_, _, _, o| o[0] = 0.0)).is_err());
}

/// Solves `a·θ = b` for `θ` by bisection on `[0, 10]`.
fn bisect(a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a * mid < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exponent_grid_stays_subcritical() {
    let mut rng = SampleRng::new(11, 0);
    let mut count = 0;
    for n in 1..=6 {
        for _ in 0..9 {
            let s = 1.0 + (s_bound(n) - 1.0) * rng.uniform() * 0.999;
            let q = 1.0 + (q_bound(n) - 1.0) * rng.uniform() * 0.999;
            let e = compute_apriori_exponents(s, q, n).unwrap();
            let nf = n as f64;
            let theta1 = bisect(s / 2.0, nf / 4.0 * (s - 1.0));
            let theta1t = bisect(s, nf / 4.0 * (s - 1.0));
            let theta2 = bisect(q / 2.0, nf / 4.0 * (q - 1.0));
            assert!((e.theta1 - theta1).abs() < 1e-12);
            assert!((e.theta1_tilde - theta1t).abs() < 1e-12);
            assert!((e.theta2 - theta2).abs() < 1e-12);
            assert!(e.gamma1 < 1.0 && e.gamma2 < 1.0, "{e:?}");
            let p = (2.0 * q).max(1.0 / (1.0 / (2.0 * s) + 1.0 / nf));
            assert_eq!(e.p_embed, p);
            if n >= 3 {
                assert!(e.p_embed >= 2.0 && e.p_embed < (2.0 * nf / (nf - 2.0)).min(nf));
                assert!(e.p_in_range());
            }
            count += 1;
        }
    }
    assert!(count >= 50);
}

proptest! {
    #[test]
    fn admissible_exponents_give_contracting_powers(n in 1usize..8, a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let s = 1.0 + (s_bound(n) - 1.0) * a;
        let q = 1.0 + (q_bound(n) - 1.0) * b;
        let e = compute_apriori_exponents(s, q, n).unwrap();
        prop_assert!(e.gamma1 < 1.0 && e.gamma2 < 1.0);
        prop_assert!(e.gamma1 >= 0.0 && e.gamma2 >= 0.5);
    }
}
