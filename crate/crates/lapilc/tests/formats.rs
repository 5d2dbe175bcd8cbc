use std::path::{Path, PathBuf};

use lapilc::io::{
    read_learned_input, read_matrix, read_track, track_csv, write_learned_input, write_matrix,
    write_track,
};
use lapilc::Error;
use lapilc_core::track::{build_time_grid, generate_speed_profile, synthetic_track};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Lap length of the built-in track (m).
const SYNTHETIC_LAP_LENGTH: f64 = 3047.1956595333004;

fn asset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/synthetic_track.csv")
}

#[test]
fn three_row_track_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(
        &path,
        "s_m,kappa_1pm,speed_mps\n0,0,30\n100,0.01,20\n200,0,30\n",
    )
    .unwrap();
    let table = read_track(&path).unwrap();
    assert_eq!(table.track.lap_length(), 200.0);
    assert_eq!(table.track.curvature(), &[0.0, 0.01, 0.0]);
    assert_eq!(table.speed.unwrap().speed(), &[30.0, 20.0, 30.0]);
}

#[test]
fn non_monotone_stations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "s_m,kappa_1pm\n0,0\n100,0.01\n50,0\n").unwrap();
    let err = read_track(&path).unwrap_err();
    assert!(matches!(err, Error::Input { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("t.csv"), "{err}");

    std::fs::write(&path, "s_m,kappa_1pm,speed_mps\n0,0,10\n100,0.01,-1\n").unwrap();
    assert!(read_track(&path).is_err());
}

#[test]
fn bundled_track_matches_generator() {
    let text = std::fs::read_to_string(asset()).unwrap();
    assert_eq!(text, track_csv(&synthetic_track(), None));
    let table = read_track(&asset()).unwrap();
    let last = *table.track.stations().last().unwrap();
    assert_eq!(table.track.lap_length(), last);
    assert_eq!(last, SYNTHETIC_LAP_LENGTH);
    assert_eq!(table.track, synthetic_track());
}

#[test]
fn track_with_speed_round_trips_exactly() {
    let track = synthetic_track();
    let speed = generate_speed_profile(&track, 6.0, 50.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_track(&path, &track, Some(&speed)).unwrap();
    let table = read_track(&path).unwrap();
    assert_eq!(table.track, track);
    assert_eq!(table.speed.unwrap(), speed);
}

#[test]
fn learned_input_round_trips_and_checks_length() {
    let track = synthetic_track();
    let speed = generate_speed_profile(&track, 8.0, 50.0).unwrap();
    let grid = build_time_grid(&track, &speed, 0.1).unwrap();
    let mut rng = Pcg64::seed_from_u64(1);
    let values: Vec<f64> = (0..grid.n()).map(|_| rng.gen_range(-0.02..0.02)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    write_learned_input(&path, &grid, &values).unwrap();
    assert_eq!(read_learned_input(&path, &grid).unwrap(), values);

    let other = build_time_grid(&track, &speed, 0.2).unwrap();
    let err = read_learned_input(&path, &other).unwrap_err().to_string();
    assert!(err.contains("samples"), "{err}");
}

#[test]
fn matrix_dump_round_trips_exactly() {
    let mut rng = Pcg64::seed_from_u64(2);
    let m = DMatrix::from_fn(7, 7, |i, j| {
        if i >= j {
            rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-12..3))
        } else {
            0.0
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_matrix(&path, &m, 0.1).unwrap();
    let (back, ts) = read_matrix(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(ts, 0.1);
}

#[test]
fn unsupported_format_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "# format_version: 2\ns_m,kappa_1pm\n0,0\n1,0\n").unwrap();
    let err = read_track(&path).unwrap_err().to_string();
    assert!(err.contains("format_version 2"), "{err}");
}

#[test]
fn missing_file_names_the_path() {
    let err = read_track(Path::new("/nonexistent/track.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("/nonexistent/track.csv"));
}
