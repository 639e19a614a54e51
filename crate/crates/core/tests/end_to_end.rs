use velest::data_pipeline::{read_collection, Dataset, SplitTag, FRAME_DT};
use velest::eval::{
    compare_estimators, run_mkf, Estimator, EvalOptions, ReferenceSource,
};
use velest::mkf::FilterMode;
use velest::vehicle_sim::{simulate, ScenarioConfig, ScenarioKind, SurfaceClass};

fn rmse_vy(est: &[velest::mkf::StateEstimate], truth: &[velest::mkf::StateEstimate]) -> f64 {
    let n = est.len() - 200;
    let ss: f64 = est[200..].iter().zip(&truth[200..]).map(|(a, b)| (a.vy - b.vy).powi(2)).sum();
    (ss / n as f64).sqrt()
}

#[test]
fn raw_directory_round_trip_preserves_the_dataset() {
    let out = simulate(&ScenarioConfig::new(ScenarioKind::Slalom, 12.0, 21).with_surface(SurfaceClass::Gravel)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    out.write_dir(&raw).unwrap();

    let direct = Dataset::from_scenario(&out, true).unwrap();
    let from_disk = Dataset::from_raw_dir(&raw, true).unwrap();
    assert_eq!(direct.len(), from_disk.len());
    assert_eq!(direct.provenance, from_disk.provenance);
    // Sensor CSVs carry full precision, so the synchronized frames agree closely.
    for (a, b) in direct.frames.iter().zip(&from_disk.frames) {
        assert!((a.t - b.t).abs() < 1e-9);
        assert!((a.imu1[0] - b.imu1[0]).abs() < 1e-9);
    }

    let mut tagged = from_disk.clone();
    tagged.split = Some(SplitTag::Test);
    let prepared = dir.path().join("sets").join(tagged.id());
    tagged.write_dir(&prepared).unwrap();
    let sets = read_collection(&dir.path().join("sets")).unwrap();
    assert_eq!(sets.len(), 1);
    let back = &sets[0];
    assert_eq!(back.split, Some(SplitTag::Test));
    assert_eq!(back.len(), tagged.len());
    assert!(back.targets.is_some() && back.truth.is_some());
    assert!((back.duration() - back.len() as f64 * FRAME_DT).abs() < 1e-12);

    // Stored targets score against truth the same as freshly computed ones.
    let opts = EvalOptions::default();
    let a = compare_estimators(&[back], &[Estimator::Reference], &opts).unwrap();
    let b = compare_estimators(&[&direct], &[Estimator::Reference], &opts).unwrap();
    for c in 0..5 {
        assert!((a.rows[0].rmse[c] - b.rows[0].rmse[c]).abs() < 1e-6);
    }
}

#[test]
fn reference_mode_beats_baseline_laterally_on_high_slip() {
    for surface in [SurfaceClass::Flat, SurfaceClass::Wet] {
        let out = simulate(&ScenarioConfig::new(ScenarioKind::HighSlipCorner, 25.0, 8).with_surface(surface)).unwrap();
        let ds = Dataset::from_scenario(&out, false).unwrap();
        let truth = ds.truth.as_ref().unwrap();
        let base = rmse_vy(&run_mkf(&ds, FilterMode::Baseline).unwrap(), truth);
        let reference = rmse_vy(&run_mkf(&ds, FilterMode::Reference).unwrap(), truth);
        assert!(reference < base / 3.0, "{surface}: reference {reference} baseline {base}");
    }
}

#[test]
fn targets_score_near_reference_filter_and_estimators_compare() {
    let out = simulate(&ScenarioConfig::new(ScenarioKind::TrackLap, 40.0, 3)).unwrap();
    let ds = Dataset::from_scenario(&out, true).unwrap();
    let ests = [Estimator::BaselineMkf, Estimator::ReferenceMkf, Estimator::Reference];
    let rep = compare_estimators(&[&ds], &ests, &EvalOptions::default()).unwrap();
    let vy = |n: &str| rep.row(n).unwrap().rmse[1];
    assert!(vy("reference_mkf") < vy("baseline"));
    assert!(vy("reference") < vy("baseline"));
    // Against its own targets the smoothed reference is exact.
    let own = compare_estimators(
        &[&ds],
        &[Estimator::Reference],
        &EvalOptions {
            source: ReferenceSource::Targets,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    assert_eq!(own.rows[0].rmse, [0.0; 5]);
}

#[test]
fn imu_freeze_does_not_blow_up_the_filter() {
    let out = simulate(&ScenarioConfig::new(ScenarioKind::ImuFreezeLap, 40.0, 5)).unwrap();
    let ds = Dataset::from_scenario(&out, false).unwrap();
    let truth = ds.truth.as_ref().unwrap();
    let est = run_mkf(&ds, FilterMode::Baseline).unwrap();
    let t_freeze = out.plan.freeze_events[0].t_start;
    let k = (t_freeze / FRAME_DT) as usize;
    let ay_rmse = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        (est[r.clone()].iter().zip(&truth[r]).map(|(a, b)| (a.ay - b.ay).powi(2)).sum::<f64>() / n).sqrt()
    };
    let pre = ay_rmse(200..k);
    let post = ay_rmse(k..est.len());
    assert!(post <= 2.0 * pre, "pre {pre} post {post}");
}
