use contcomm_bench::{
    bench, mean_stdev, ranks, reader_monotonicity_violations, run_grid, spearman, square_grid, table, to_csv, write_csv,
    BenchConfig, BenchReport,
};
use proptest::prelude::*;

#[test]
fn vacuous_cell_is_near_zero() {
    let s = bench(0, 0).unwrap();
    assert!(s < 0.05, "{s}");
}

#[test]
fn small_grid_bookkeeping() {
    let grid = square_grid(&[10, 100]);
    assert_eq!(grid, vec![(10, 10), (10, 100), (100, 10), (100, 100)]);
    let reports = run_grid(&BenchConfig::default(), &grid, 10).unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert_eq!(r.runs, 10);
        assert_eq!(r.samples.len(), 10);
        assert!(r.stdev_s >= 0.0);
        assert!(r.durable);
    }
    let one = run_grid(&BenchConfig::default(), &[(5, 5)], 1).unwrap();
    assert_eq!(one[0].stdev_s, 0.0);
}

#[test]
fn csv_columns_and_table_layout() {
    let reports = vec![
        BenchReport::from_samples(100, 100, vec![0.1, 0.3], true),
        BenchReport::from_samples(100, 1000, vec![0.5], true),
    ];
    let csv = to_csv(&reports);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("writers,readers,mean_s,stdev_s"));
    assert_eq!(lines.next(), Some("100,100,0.200000,0.141421"));
    assert_eq!(lines.next(), Some("100,1000,0.500000,0.000000"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    write_csv(&path, &reports).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), csv);
    let t = table(&reports);
    assert!(t.contains("1000 reads") && t.contains("0.2000 ± 0.1414"));
}

#[test]
fn spearman_hand_values() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    // Textbook example: d² sum 2 over n = 5 gives 1 − 6·2/(5·24) = 0.9.
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 3.0, 4.0, 5.0]) - 0.9).abs() < 1e-12);
    assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
}

#[test]
fn monotonicity_check_flags_drops() {
    let r = |w, rd, m| BenchReport::from_samples(w, rd, vec![m], true);
    let ok = vec![r(1, 1, 1.0), r(1, 2, 0.95), r(1, 3, 2.0)];
    assert!(reader_monotonicity_violations(&ok, 0.1).is_empty());
    let bad = vec![r(1, 1, 1.0), r(1, 2, 0.8)];
    assert_eq!(reader_monotonicity_violations(&bad, 0.1).len(), 1);
}

proptest! {
    #[test]
    fn stdev_nonnegative_and_spearman_bounded(xs in prop::collection::vec(0.0f64..10.0, 2..30), seed in any::<u64>()) {
        let (_, sd) = mean_stdev(&xs);
        prop_assert!(sd >= 0.0);
        let mut ys = xs.clone();
        let n = ys.len();
        ys.rotate_left((seed as usize) % n);
        let rho = spearman(&xs, &ys);
        prop_assert!(rho.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
        let self_rho = spearman(&xs, &xs);
        prop_assert!(self_rho.is_nan() || (self_rho - 1.0).abs() < 1e-9);
    }
}
