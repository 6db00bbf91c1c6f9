use coincide::field_io::{dump_field, field_csv, load_field, load_field_on};
use coincide::IoError;
use coincide_core::rng::SampleRng;
use coincide_core::{GridDomain, VectorField};

#[test]
fn zero_field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridDomain::new(2, 1.0, 7).unwrap();
    let u = VectorField::zeros(grid, 2);
    let path = dir.path().join("zero.csv");
    let art = dump_field(&u, &path).unwrap();
    assert_eq!(art.name, "zero.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x1,x2,u1,u2\n"));
    assert_eq!(text.lines().count(), 1 + 49);
    let back = load_field(&path).unwrap();
    assert_eq!(back.grid(), u.grid());
    assert_eq!(back.data(), u.data());
}

#[test]
fn random_field_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SampleRng::new(11, 0);
    for (dim, n, m) in [(1, 40, 1), (2, 9, 3), (3, 4, 2)] {
        let grid = GridDomain::new(dim, 1.3, n).unwrap();
        let data: Vec<f64> = (0..grid.node_count() * m).map(|_| rng.uniform_in(-1e3, 1e3) * rng.uniform_in(0.0, 1.0).powi(7)).collect();
        let u = VectorField::from_vec(grid, m, data).unwrap();
        let path = dir.path().join(format!("f{dim}.csv"));
        dump_field(&u, &path).unwrap();
        for back in [load_field(&path).unwrap(), load_field_on(&path, &grid, m).unwrap()] {
            assert_eq!(back.components(), m);
            for (a, b) in back.data().iter().zip(u.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

#[test]
fn dump_is_deterministic() {
    let grid = GridDomain::new(1, 1.0, 5).unwrap();
    let u = VectorField::from_vec(grid, 1, vec![0.1, 0.2, 1.0 / 3.0, -0.0, 1e-300]).unwrap();
    assert_eq!(field_csv(&u), field_csv(&u.clone()));
}

#[test]
fn schema_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x1,u1\n-0.5,1.0,2.0\n0.0,1.0\n0.5,1.0\n").unwrap();
    assert!(matches!(load_field(&path), Err(IoError::SchemaMismatch { .. })));
    std::fs::write(&path, "x1,v1\n-0.5,1.0\n0.0,1.0\n0.5,1.0\n").unwrap();
    assert!(matches!(load_field(&path), Err(IoError::SchemaMismatch { .. })));
    std::fs::write(&path, "x1,u1\n-0.5,1.0\n0.0,abc\n0.5,1.0\n").unwrap();
    assert!(matches!(load_field(&path), Err(IoError::SchemaMismatch { .. })));

    let grid = GridDomain::new(1, 1.0, 3).unwrap();
    std::fs::write(&path, "x1,u1\n-0.5,1.0\n0.0,1.0\n0.5,1.0\n").unwrap();
    assert_eq!(load_field_on(&path, &grid, 1).unwrap().data(), &[1.0, 1.0, 1.0]);
    assert!(matches!(load_field_on(&path, &grid, 2), Err(IoError::SchemaMismatch { .. })));
    let other = GridDomain::new(1, 2.0, 3).unwrap();
    assert!(matches!(load_field_on(&path, &other, 1), Err(IoError::SchemaMismatch { .. })));
    assert!(matches!(load_field(&dir.path().join("missing.csv")), Err(IoError::Io { .. })));
}
