use tensiform::analysis::equilibrium_residual;
use tensiform::fixtures::{FixtureSpec, FIXTURE_NAMES};
use tensiform::io::{
    export_obj, export_report_csv, load_model, load_state, run_request, save_model, save_state, state_report,
    LoadError, ModelFile, SolveRequest, StateFile, CSV_HEADER,
};
use tensiform::{fixtures, minimize_constrained, SolveOptions};

#[test]
fn every_fixture_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in FIXTURE_NAMES {
        let model = FixtureSpec::defaults(name).unwrap().build().unwrap();
        assert!(model.validate().is_empty(), "{name}");
        let path = dir.path().join(format!("{name}.json"));
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model, "{name}");
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_model("/nonexistent/model.json").unwrap_err();
    assert!(matches!(err, LoadError::Io { .. }), "{err:?}");
}

#[test]
fn exported_obj_keeps_topology_counts() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixtures::make_cuboctahedron_membrane(2.0, 1.0, 10.0);
    let path = dir.path().join("cubo.obj");
    export_obj(&model, None, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let count = |tag: &str| text.lines().filter(|l| l.split_whitespace().next() == Some(tag)).count();
    assert_eq!(count("v"), model.nodes.len());
    assert_eq!(count("l"), model.members.len());
    assert_eq!(count("f"), model.elements.len());
    // Generic re-import: every index is 1-based and in range.
    for line in text.lines().filter(|l| !l.starts_with('v')) {
        for idx in line.split_whitespace().skip(1) {
            let i: usize = idx.parse().unwrap();
            assert!((1..=model.nodes.len()).contains(&i));
        }
    }
}

#[test]
fn csv_report_values_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixtures::make_x_tensegrity([1.0; 4], [2f64.sqrt(); 2]);
    let s = minimize_constrained(&model, &SolveOptions::default().with_seed(3)).unwrap();
    let report = equilibrium_residual(&model, &s.coords, &s.forces).unwrap();
    let path = dir.path().join("x.csv");
    export_report_csv(&report, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for (row, m) in rows.iter().zip(&report.members) {
        let l: f64 = row[2].parse().unwrap();
        let n: f64 = row[3].parse().unwrap();
        assert!((l - m.length).abs() <= 1e-12 * m.length);
        assert!((n - m.force).abs() <= 1e-12 * m.force.abs());
    }
    assert!(text.contains("# residual_inf="));
}

#[test]
fn state_file_round_trip_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixtures::make_simplex(10.0);
    let (result, _) = run_request(&SolveRequest::formfind(&model, SolveOptions::default().with_seed(7)));
    let state = StateFile::new(ModelFile::from_model(&model), result);
    let path = dir.path().join("state.json");
    save_state(&state, &path).unwrap();
    let back = load_state(&path).unwrap();
    assert_eq!(back, state);
    let (m, coords, report) = state_report(&back).unwrap();
    assert_eq!(m, model);
    assert_eq!(coords, state.result.state.as_ref().unwrap().coords);
    assert_eq!(report.members.len(), 12);
    assert!(report.relative_norm < 1e-6);
}
