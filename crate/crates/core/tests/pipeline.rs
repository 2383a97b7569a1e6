use mamo::money::Money;
use mamo::pipeline::archive::{self, read_assurance_file, read_billing_batch, read_delivery, read_switch_batch};
use mamo::pipeline::{emit_metrics, read_windows, run_pipeline, RunConfig};
use mamo::reconciler::Provenance;

fn config(dir: &std::path::Path, calls: usize) -> RunConfig {
    RunConfig { call_count: calls, seed: 12, output_dir: dir.to_owned(), ..RunConfig::default() }
}

#[test]
fn no_calls_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(dir.path(), 0)).unwrap();
    let r = &out.report;
    assert_eq!(out.reconciliation.record_count(), 0);
    assert_eq!(r.balance_before_extended_mamo, Money::ZERO);
    assert_eq!(r.balance_after_extended_mamo, Money::ZERO);
    assert_eq!(r.recovered_amount, Money::ZERO);
    assert_eq!((r.calls_before, r.calls_after), (0, 0));
    assert_eq!(r.recovered_percentage, None);
    assert!(dir.path().join(archive::REPORT_CSV).exists());
}

#[test]
fn lossless_thousand_calls_recover_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(dir.path(), 1000)).unwrap();
    assert_eq!(out.reconciliation.record_count(), 1000);
    assert!(out
        .reconciliation
        .batches
        .iter()
        .flat_map(|b| &b.records)
        .all(|r| r.provenance == Provenance::FullyReconciled));
    assert_eq!(out.report.recovered_percentage, Some(0.0));
    assert!(out.assurance.iter().all(|f| f.unmatched_marks.is_empty() && f.parameter_marks.is_empty()));
    assert_eq!(out.metrics.reconciled_records, 1000);
}

#[test]
fn archives_read_back_to_what_was_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 400);
    c.channel.in_drop_probability = 0.1;
    let out = run_pipeline(&c).unwrap();

    let windows = read_windows(dir.path()).unwrap();
    assert_eq!(windows.len(), out.simulation.switch_batches.len());
    for (w, s) in windows.iter().zip(&out.simulation.switch_batches) {
        assert_eq!(&read_switch_batch(dir.path(), *w).unwrap(), s);
    }
    for b in &out.reconciliation.batches {
        assert_eq!(&read_billing_batch(dir.path(), b.window).unwrap(), b);
    }
    let files = archive::assurance_files_in(dir.path()).unwrap();
    let read: Vec<_> = files.iter().map(|p| read_assurance_file(p).unwrap()).collect();
    assert_eq!(read, out.assurance);
    let delivered = read_delivery(dir.path()).unwrap();
    assert_eq!(delivered.len(), out.simulation.delivery.delivered.len());
    assert!(delivered
        .iter()
        .zip(&out.simulation.delivery.delivered)
        .all(|(a, b)| a.arrival_ms == b.arrival_ms && a.message.to_frame() == b.message.to_frame()));
}

#[test]
fn metrics_reemit_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [50, 100]
        .iter()
        .map(|&n| run_pipeline(&config(&dir.path().join(n.to_string()), n)).unwrap().metrics)
        .collect();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_metrics(&runs, &a).unwrap();
    emit_metrics(&runs, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 3);
}
