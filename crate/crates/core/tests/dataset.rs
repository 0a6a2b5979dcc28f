use std::collections::BTreeSet;

use dynid::control::{EpisodeStatus, TrajectoryLog, WaypointOutcome};
use dynid::dataset::{
    build_dataset, build_dataset_cached, count_windows, effective_time, offset_sample, offset_windows,
    utilization, CacheStatus, DatasetConfig, DatasetError, NormalizationTable,
};
use dynid::model::{generate_fleet, KinematicTemplate, ManifestRecord, RobotModel, VariationRanges};
use proptest::prelude::*;

fn fleet(n: usize) -> (Vec<RobotModel>, Vec<ManifestRecord>) {
    let models = generate_fleet(n, 21, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
    let records = models.iter().map(|m| ManifestRecord::from_model(m).unwrap()).collect();
    (models, records)
}

/// Smooth synthetic episode of `frames` ticks.
fn synthetic_log(id: u64, frames: usize) -> TrajectoryLog {
    let mut log = TrajectoryLog::new(id, 1e-3, 6, vec![]);
    for k in 0..frames {
        let t = k as f64 * 1e-3;
        let q: Vec<f64> = (0..6).map(|j| 0.5 * (t * (1.0 + j as f64) + id as f64).sin()).collect();
        let qd: Vec<f64> = (0..6).map(|j| 0.5 * (1.0 + j as f64) * (t * (1.0 + j as f64) + id as f64).cos()).collect();
        let tau: Vec<f64> = (0..6).map(|j| 3.0 * (2.0 * t + j as f64 + id as f64).sin()).collect();
        log.push(&q, &qd, &tau, 0);
    }
    log.outcomes.push(WaypointOutcome::Settled);
    log.status = EpisodeStatus::Ok;
    log
}

fn cfg(seq_len: usize, stride: usize, ssr: usize) -> DatasetConfig {
    DatasetConfig {
        seq_len,
        stride,
        ssr,
        ..DatasetConfig::default()
    }
}

fn table() -> NormalizationTable {
    NormalizationTable::from_ranges(&VariationRanges::default(), &KinematicTemplate::default()).unwrap()
}

#[test]
fn sequence_count_is_sum_of_per_log_windows() {
    let (_, records) = fleet(12);
    let logs: Vec<TrajectoryLog> = (0..12).map(|i| synthetic_log(i, 700 + 137 * i as usize)).collect();
    for c in [cfg(4, 16, 4), cfg(8, 8, 8), cfg(3, 32, 8), cfg(16, 16, 16)] {
        let ds = build_dataset(&records, &KinematicTemplate::default(), &logs, &table(), &c).unwrap();
        let expected: usize = logs.iter().map(|l| offset_sample(l, &c).len()).sum();
        let counted: usize = logs.iter().map(|l| count_windows(l.len(), c.stride, c.ssr, c.seq_len)).sum();
        assert_eq!(ds.train.len() + ds.val.len(), expected);
        assert_eq!(counted, expected);
        for s in ds.train.iter().chain(&ds.val) {
            assert_eq!(s.features.len(), c.seq_len * ds.n_features);
            assert!(s.target.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn robots_never_straddle_the_split() {
    let (_, records) = fleet(20);
    let logs: Vec<TrajectoryLog> = (0..20).map(|i| synthetic_log(i, 600)).collect();
    let ds = build_dataset(&records, &KinematicTemplate::default(), &logs, &table(), &cfg(4, 8, 4)).unwrap();
    let train = ds.train_ids();
    let val = ds.val_ids();
    assert!(train.is_disjoint(&val));
    assert_eq!(train.len() + val.len(), 20);
    assert_eq!(val.len(), 2);
    // per-robot targets are identical across that robot's samples
    for s in &ds.val {
        let first = ds.val.iter().find(|o| o.robot_id == s.robot_id).unwrap();
        assert_eq!(first.target, s.target);
    }
}

#[test]
fn rejected_logs_are_refused() {
    let (_, records) = fleet(4);
    let mut logs: Vec<TrajectoryLog> = (0..4).map(|i| synthetic_log(i, 400)).collect();
    logs[2].status = EpisodeStatus::Diverged;
    let err = build_dataset(&records, &KinematicTemplate::default(), &logs, &table(), &cfg(4, 8, 4)).unwrap_err();
    assert!(matches!(err, DatasetError::RejectedLog { robot_id: 2, .. }));
}

#[test]
fn cache_hits_on_identical_inputs_only() {
    let dir = tempfile::tempdir().unwrap();
    let (_, records) = fleet(6);
    let mut logs: Vec<TrajectoryLog> = (0..6).map(|i| synthetic_log(i, 500)).collect();
    let t = KinematicTemplate::default();
    let c = cfg(4, 8, 4);
    let (a, s1) = build_dataset_cached(dir.path(), &records, &t, &logs, &table(), &c).unwrap();
    let (b, s2) = build_dataset_cached(dir.path(), &records, &t, &logs, &table(), &c).unwrap();
    assert_eq!((s1, s2), (CacheStatus::Miss, CacheStatus::Hit));
    assert_eq!(a, b);
    // one changed sample changes the key
    logs[3].tau[100] += 1e-9;
    let (d, s3) = build_dataset_cached(dir.path(), &records, &t, &logs, &table(), &c).unwrap();
    assert_eq!(s3, CacheStatus::Miss);
    assert_ne!(d.key, a.key);
    // and a different configuration too
    let (_, s4) = build_dataset_cached(dir.path(), &records, &t, &logs, &table(), &cfg(4, 8, 8)).unwrap();
    assert_eq!(s4, CacheStatus::Miss);
}

/// Dataset-configuration rows with `ssr ≤ stride` and `stride % ssr = 0`.
const GRID: &[(usize, usize, usize)] = &[
    (16, 32, 8),
    (16, 64, 16),
    (16, 128, 32),
    (16, 256, 32),
    (32, 32, 8),
    (32, 64, 16),
    (64, 32, 8),
    (64, 32, 16),
    (64, 64, 16),
    (64, 64, 32),
    (64, 64, 64),
    (128, 16, 8),
    (128, 32, 8),
    (128, 32, 16),
    (128, 64, 16),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn utilization_identity(row in 0..GRID.len(), k in 1usize..4) {
        let (seq_len, stride, ssr) = GRID[row];
        let n = k * seq_len * stride;
        let windows = offset_windows(n, stride, ssr, seq_len);
        let used: BTreeSet<usize> = windows.iter().flat_map(|w| w.frames.iter().copied()).collect();
        let total: usize = windows.iter().map(|w| w.frames.len()).sum();
        // no frame is read twice
        prop_assert_eq!(used.len(), total);
        prop_assert!(used.iter().all(|&f| f < n));
        prop_assert_eq!(used.len() as f64 / n as f64, 1.0 / ssr as f64);
        prop_assert_eq!(utilization(stride, ssr), 1.0 / ssr as f64);
        prop_assert_eq!(windows.len(), (stride / ssr) * k);
    }

    #[test]
    fn counting_matches_enumeration(n in 0usize..5000, row in 0..GRID.len()) {
        let (seq_len, stride, ssr) = GRID[row];
        let seq_len = seq_len.min(8);
        prop_assert_eq!(count_windows(n, stride, ssr, seq_len), offset_windows(n, stride, ssr, seq_len).len());
    }
}

#[test]
fn effective_time_of_the_grid() {
    assert_eq!(effective_time(64, 64), 4.096);
    assert_eq!(effective_time(16, 256), 4.096);
    assert_eq!(utilization(64, 16), 0.0625);
}
