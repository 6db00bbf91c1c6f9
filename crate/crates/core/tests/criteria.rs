use coincide_core::constraint::{ConstraintField, HalfSpace};
use coincide_core::criteria::{
    certifies_invariance, check_constraint, check_eigenvector_conditions, check_form_sign, check_mueller, CriterionId,
    CriterionStatus,
};
use coincide_core::func::{constant_scalar, constant_vector, scalar_fn, vector_fn};
use coincide_core::linalg::Mat;
use coincide_core::operator::{assemble, estimate_garding, OperatorCoefficients};
use coincide_core::resolvent::verify_resolvent_invariance;
use coincide_core::GridDomain;

fn grid1(n: usize) -> GridDomain {
    GridDomain::new(1, 1.0, n).unwrap()
}

#[test]
fn eigenvector_examples() {
    let g = grid1(7);
    let c = OperatorCoefficients::laplacian(1, 2);
    let r = check_eigenvector_conditions(&c, &[vec![1.0, 0.0]], &g);
    assert_eq!(r.status, CriterionStatus::Pass);
    assert!((r.scalars[0].a[0] - 1.0).abs() < 1e-15);

    let c = OperatorCoefficients::new(1, 2).with_a(0, 0, Mat::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
    let r = check_eigenvector_conditions(&c, &[vec![1.0, 0.0]], &g);
    assert_eq!(r.status, CriterionStatus::Fail);
    let w = &r.witnesses[0];
    assert!((w.defect[0]).abs() < 1e-15 && (w.defect[1] - 1.0).abs() < 1e-15);

    let c = OperatorCoefficients::laplacian(1, 2).with_reaction(Mat::diag(&[2.0, 3.0]));
    let r = check_eigenvector_conditions(&c, &[vec![0.0, 1.0]], &g);
    assert_eq!(r.status, CriterionStatus::Pass);
    assert!((r.scalars[0].c - 3.0).abs() < 1e-15);

    let r = check_eigenvector_conditions(&c, &[], &g);
    assert_eq!(r.status, CriterionStatus::NotApplicable);
}

#[test]
fn form_sign_examples() {
    let c = OperatorCoefficients::laplacian(1, 1);
    // Three interior nodes, hand evaluation: only boundary-adjacent hats see ξ = 1 on the ring.
    let g = grid1(3);
    let r = check_form_sign(&c, &g, &[1.0], &constant_scalar(1.0));
    assert_eq!(r.status, CriterionStatus::Pass);
    assert_eq!(r.margin, Some(0.0));

    let g = grid1(31);
    let r = check_form_sign(&c, &g, &[1.0], &scalar_fn(|x| 1.0 - x[0] * x[0]));
    assert_eq!(r.status, CriterionStatus::Pass);
    // −ξ'' = 2 at every interior hat.
    assert!((r.margin.unwrap() - 2.0).abs() < 1e-9, "{:?}", r.margin);

    let r = check_form_sign(&c, &g, &[1.0], &scalar_fn(|x| x[0] * x[0]));
    assert_eq!(r.status, CriterionStatus::Fail);
    assert!(!r.witnesses.is_empty());
    assert!(r.witnesses[0].x[0].abs() < 1.0);

    let nonparallel = OperatorCoefficients::new(1, 2).with_a(0, 0, Mat::from_rows(&[&[1.0, 0.9], &[0.0, 1.0]]));
    let r = check_form_sign(&nonparallel, &g, &[1.0, 0.0], &constant_scalar(1.0));
    assert_eq!(r.status, CriterionStatus::NotApplicable);
}

#[test]
fn mueller_examples() {
    let g = grid1(31);
    let c = OperatorCoefficients::laplacian(1, 1);
    let r = check_mueller(&c, &g, &constant_vector(&[-1.0]), &constant_vector(&[1.0]));
    assert_eq!(r.status, CriterionStatus::Pass);

    let c2 = OperatorCoefficients::laplacian(1, 1).with_reaction(Mat::diag(&[2.5]));
    let r = check_mueller(&c2, &g, &constant_vector(&[0.0]), &constant_vector(&[1.0]));
    assert_eq!(r.status, CriterionStatus::Pass);

    let dip = vector_fn(|x, o| o[0] = 1.0 - 0.9 * (-(x[0] * x[0]) / 0.02).exp());
    let r = check_mueller(&c, &g, &constant_vector(&[0.0]), &dip);
    assert_eq!(r.status, CriterionStatus::Fail);

    let coupled = OperatorCoefficients::new(1, 2).with_a(0, 0, Mat::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]));
    let r = check_mueller(&coupled, &g, &constant_vector(&[0.0, 0.0]), &constant_vector(&[1.0, 1.0]));
    assert_eq!(r.status, CriterionStatus::NotApplicable);

    // Trace condition: τ < 0 on the boundary.
    let r = check_mueller(&c, &g, &constant_vector(&[-2.0]), &constant_vector(&[-1.0]));
    assert_eq!(r.status, CriterionStatus::Fail);
}

struct Case {
    name: &'static str,
    coeffs: OperatorCoefficients,
    field: ConstraintField,
    grid: GridDomain,
}

#[allow(clippy::vec_init_then_push)]
fn pass_cases() -> Vec<Case> {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = Vec::new();
    v.push(Case {
        name: "diagonal diffusion, rectangle",
        coeffs: OperatorCoefficients::diagonal_diffusion(1, &[1.0, 3.0]),
        field: ConstraintField::constant_rectangle(&[-0.5, 0.0], &[1.0, 2.0]).unwrap(),
        grid: grid1(40),
    });
    v.push(Case {
        name: "variable Mueller bounds",
        coeffs: OperatorCoefficients::laplacian(1, 1).with_reaction(Mat::diag(&[1.0])),
        field: ConstraintField::rectangle(1, vector_fn(|x, o| o[0] = -1.0 - 0.25 * (1.0 - x[0] * x[0])), vector_fn(|x, o| o[0] = 1.0 + 0.5 * (1.0 - x[0] * x[0]))),
        grid: grid1(40),
    });
    v.push(Case {
        name: "2-D diagonal with small drift",
        coeffs: OperatorCoefficients::diagonal_diffusion(2, &[1.0, 2.0]).with_drift(0, Mat::diag(&[0.5, -0.3])),
        field: ConstraintField::constant_rectangle(&[0.0, -1.0], &[1.0, 1.0]).unwrap(),
        grid: GridDomain::new(2, 1.0, 12).unwrap(),
    });
    v.push(Case {
        name: "scalar diffusion, half-plane pair",
        coeffs: OperatorCoefficients::laplacian(1, 2),
        field: ConstraintField::polyhedron(
            2,
            vec![
                HalfSpace::new(vec![s2, s2], constant_scalar(1.0)),
                HalfSpace::new(vec![-s2, -s2], constant_scalar(0.5)),
            ],
        )
        .unwrap(),
        grid: grid1(30),
    });
    let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
    v.push(Case {
        name: "coupled diffusion, rotated square",
        coeffs: OperatorCoefficients::new(1, 2).with_a(0, 0, a),
        field: ConstraintField::polyhedron(
            2,
            vec![
                HalfSpace::new(vec![s2, s2], constant_scalar(1.0)),
                HalfSpace::new(vec![-s2, -s2], constant_scalar(1.0)),
                HalfSpace::new(vec![s2, -s2], constant_scalar(1.0)),
                HalfSpace::new(vec![-s2, s2], constant_scalar(1.0)),
            ],
        )
        .unwrap(),
        grid: grid1(30),
    });
    let var = coincide_core::func::matrix_fn(|x| Mat::diag(&[1.0 + 0.5 * x[0] * x[1], 1.0 + 0.5 * x[0] * x[1]]));
    v.push(Case {
        name: "2-D variable scalar diffusion",
        coeffs: OperatorCoefficients::new(2, 2)
            .with_a(0, 0, coincide_core::operator::MatrixField::Variable(var.clone()))
            .with_a(1, 1, coincide_core::operator::MatrixField::Variable(var)),
        field: ConstraintField::constant_rectangle(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        grid: GridDomain::new(2, 1.0, 10).unwrap(),
    });
    v
}

#[allow(clippy::vec_init_then_push)]
fn fail_cases() -> Vec<Case> {
    let mut v = Vec::new();
    v.push(Case {
        name: "upper-triangular coupling",
        coeffs: OperatorCoefficients::new(1, 2).with_a(0, 0, Mat::from_rows(&[&[1.0, 0.9], &[0.0, 1.0]])),
        field: ConstraintField::constant_rectangle(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        grid: grid1(30),
    });
    v.push(Case {
        name: "symmetric coupling",
        coeffs: OperatorCoefficients::new(1, 2).with_a(0, 0, Mat::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]])),
        field: ConstraintField::constant_rectangle(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        grid: grid1(30),
    });
    v.push(Case {
        name: "anisotropic diffusion, disc",
        coeffs: OperatorCoefficients::diagonal_diffusion(1, &[1.0, 3.0]),
        field: ConstraintField::ellipsoid(2, coincide_core::func::constant_matrix(Mat::identity(2)), 1e-12).unwrap(),
        grid: grid1(30),
    });
    v
}

#[test]
fn soundness_chain() {
    for case in pass_cases() {
        let reports = check_constraint(&case.coeffs, &case.grid, &case.field);
        assert!(certifies_invariance(&reports), "{}: {:?}", case.name, reports);
        let op = assemble(&case.coeffs, &case.grid).unwrap();
        let garding = estimate_garding(&op).unwrap();
        let hs = [0.5, 0.1, 0.02, 0.004];
        let inv = verify_resolvent_invariance(&op, &garding, &case.field, 24, &hs, 7).unwrap();
        for e in &inv.entries {
            assert!(e.pass && e.worst_distance <= 1e-8, "{}: {:?}", case.name, e);
        }
    }
    for case in fail_cases() {
        let reports = check_constraint(&case.coeffs, &case.grid, &case.field);
        assert!(!certifies_invariance(&reports), "{}", case.name);
        let op = assemble(&case.coeffs, &case.grid).unwrap();
        let garding = estimate_garding(&op).unwrap();
        let inv = verify_resolvent_invariance(&op, &garding, &case.field, 24, &[0.1, 0.02, 0.004], 7).unwrap();
        assert!(!inv.pass, "{}: {:?}", case.name, inv);
        let w = inv.worst_failure().unwrap();
        assert!(w.worst_distance > 1e-8 && w.witness_x.len() == 1, "{}", case.name);
    }
}

#[test]
fn criterion_ids_are_distinct() {
    let g = grid1(5);
    let r = check_constraint(&OperatorCoefficients::laplacian(1, 1), &g, &ConstraintField::constant_rectangle(&[0.0], &[1.0]).unwrap());
    let ids: Vec<CriterionId> = r.iter().map(|r| r.criterion).collect();
    assert_eq!(ids, vec![CriterionId::Eigenvector, CriterionId::FormSign, CriterionId::Mueller]);
}
