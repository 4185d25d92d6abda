mod common;

use emastate::io::{augment_night_gaps, format_dataset, night_rows, parse_dataset, read_dataset, write_dataset};
use emastate::simulate::{run_scenario, MissingnessSpec, PingSchedule, Scenario};
use emastate::{EmaDataset, ModelSpec, Participant};
use nalgebra::{dmatrix, DMatrix};
use rand::Rng as _;

fn same_data(a: &EmaDataset, b: &EmaDataset) {
    assert_eq!(a.channel_names, b.channel_names);
    assert_eq!(a.input_names, b.input_names);
    assert_eq!(a.participants.len(), b.participants.len());
    for (p, q) in a.participants.iter().zip(&b.participants) {
        assert_eq!(p.id, q.id);
        assert_eq!(p.timestamps, q.timestamps);
        assert_eq!(p.missing, q.missing);
        for (x, y) in p.y.iter().zip(q.y.iter()) {
            assert!(x.is_nan() && y.is_nan() || (x - y).abs() <= 1e-9);
        }
        assert_eq!(p.u, q.u);
    }
}

#[test]
fn ten_participant_round_trip() {
    let spec = ModelSpec::gaussian(dmatrix![0.5, 0.1; 0.0, 0.4], DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 0.3)
        .with_inputs(dmatrix![1.0; 0.0]);
    let mut scen = Scenario::new(PingSchedule::fixed(1.5, 60.0));
    scen.n_participants = 10;
    scen.missingness = Some(MissingnessSpec::mcar(0.25));
    let data = run_scenario(&spec, &scen, 99).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    write_dataset(&data, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    same_data(&data, &back);
    assert_eq!(format_dataset(&back).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn inserted_rows_follow_rounding_rule() {
    let mut r = common::rng(17);
    for _ in 0..200 {
        let tau: f64 = r.random_range(0.5..3.0);
        let evening: f64 = r.random_range(18.0..21.5);
        let morning: f64 = 24.0 + r.random_range(6.0..9.5);
        let t = vec![evening - tau, evening, morning, morning + tau];
        let p = Participant::new("p", t, DMatrix::from_element(4, 1, 1.0), DMatrix::zeros(4, 0));
        let d = EmaDataset::new(vec!["y".into()], vec![], vec![p]);
        let out = augment_night_gaps(&d, 7.0, 22.0, tau).unwrap();
        let expected = ((morning - evening) / tau).round() as usize - 1;
        assert_eq!(night_rows(morning - evening, tau), expected);
        let q = &out.participants[0];
        assert_eq!(q.len(), 4 + expected);
        // observed values untouched
        let kept: Vec<f64> = q.y.iter().copied().filter(|v| !v.is_nan()).collect();
        assert_eq!(kept, vec![1.0; 4]);
    }
}

#[test]
fn bad_files_report_codes() {
    assert_eq!(parse_dataset("participant_id,t,y.a\np,1,2\np,0.5,2\n").unwrap_err().code(), "NON_MONOTONE_TIME");
    assert_eq!(parse_dataset("id,t,y.a\n").unwrap_err().code(), "PARSE_ERROR");
    assert_eq!(parse_dataset("participant_id,t,y.a\np,1\n").unwrap_err().code(), "PARSE_ERROR");
}
