//! Acceptance criteria, one PASS/FAIL line each.
//!
//! All criteria run inside a single test so the timing-sensitive scaling
//! run does not share the machine with the others.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::grammar_oracle::{all_strings, Enumerator};
use mamo::assurance::{
    contrast_parameters, merge_archives, revenue_report, BillingBatch, CountMark, FieldValue,
    ParameterMark, Presence, Tariff, UnmatchedMark, DEFAULT_CONTRAST_FIELDS,
};
use mamo::authz::{is_compatible, validate_edit, AuthorizationMode, CompatibilityMatrix};
use mamo::envelope::{open_segment, seal_segment, OwnerKey, SealedSegment, SectionPolicy, Source};
use mamo::money::Money;
use mamo::netsim::{CallRecord, Delivered, GroundTruthCall, ScheduleBatch, ScheduleId, ScheduleWindow};
use mamo::pipeline::{
    assure, emit_metrics, fit_exponent, reconcile, run_pipeline, simulate, RunConfig, RunMetrics,
};
use mamo::reconciler::{MissingHandset, Provenance, ReconciledRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Independent rating: setup fee plus per-second rate, PerSecond rounding.
fn oracle_charge(duration_s: u32, tariff: &Tariff) -> i64 {
    tariff.setup_fee.minor() + tariff.rate_per_second.minor() * i64::from(duration_s)
}

fn all_records(batches: &[BillingBatch]) -> Vec<ReconciledRecord> {
    let mut v: Vec<_> = batches.iter().flat_map(|b| b.records.iter().cloned()).collect();
    v.sort();
    v
}

// 1 ----------------------------------------------------------------------

/// Accepted (s, t) pairs per mode over {a,b}, |s| <= 3, |t| <= 5, counted
/// independently of both the validator and the derivation enumerator.
const FROZEN_ACCEPT_COUNTS: [(AuthorizationMode, usize); 5] = [
    (AuthorizationMode::ReadOnly, 15),
    (AuthorizationMode::AddBeginning, 241),
    (AuthorizationMode::AddEnd, 241),
    (AuthorizationMode::AddWithoutAlter, 521),
    (AuthorizationMode::AddWithAlter, 945),
];

fn grammar_oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let alpha = ['a', 'b'];
    let sources = all_strings(&alpha, 3);
    let targets = all_strings(&alpha, 5);
    let mut disagreements = 0;
    let mut details = Vec::new();
    for (mode, frozen) in FROZEN_ACCEPT_COUNTS {
        let mut oracle = Enumerator::new(mode, &alpha, 5);
        let mut accepted = 0;
        for s in &sources {
            let derivable = oracle.reachable(s);
            for t in &targets {
                let v = validate_edit(&s.as_str().into(), &t.as_str().into(), mode).is_accepted();
                disagreements += usize::from(v != derivable.contains(t));
                accepted += usize::from(v);
            }
        }
        if accepted != frozen {
            details.push(format!("{mode}: {accepted} accepted, frozen {frozen}"));
        }
    }
    let elapsed = started.elapsed();
    check(
        disagreements == 0 && details.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "{} pairs x 5 modes, {disagreements} disagreements, {elapsed:.2?}{}",
            sources.len() * targets.len(),
            if details.is_empty() { String::new() } else { format!("; {}", details.join(", ")) }
        ),
    )
}

// 2 ----------------------------------------------------------------------

const PRINTED_TABLE: &str = "\
READ ONLY	-	Yes	Yes	No	No
ADD BEGINNING	Yes	-	Yes	Yes	No
ADD END	Yes	Yes	-	Yes	No
ADD WITHOUT ALTER	No	Yes	Yes	-	No
ADD WITH ALTER	No	Yes	Yes	No	-";

fn compatibility_table() -> Verdict {
    let mut expected = BTreeMap::new();
    for (r, line) in PRINTED_TABLE.lines().enumerate() {
        for (c, cell) in line.split('\t').skip(1).enumerate() {
            if cell != "-" {
                expected.insert((r, c), cell == "Yes");
            }
        }
    }
    let modes = AuthorizationMode::ALL;
    let mut wrong = Vec::new();
    for (&(r, c), &yes) in &expected {
        if is_compatible(modes[r], modes[c]) != Ok(yes) {
            wrong.push(format!("({}, {})", modes[r], modes[c]));
        }
    }
    let diagonal_undefined = modes.iter().all(|&m| is_compatible(m, m).is_err());
    let table = CompatibilityMatrix::table();
    check(
        expected.len() == 20 && table.len() == 20 && wrong.is_empty() && diagonal_undefined,
        format!("{} cells checked, {} wrong {wrong:?}, diagonal undefined: {diagonal_undefined}", expected.len(), wrong.len()),
    )
}

// 3 ----------------------------------------------------------------------

fn tamper_evidence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a3);
    let policies = [
        SectionPolicy::single(AuthorizationMode::ReadOnly),
        SectionPolicy::single(AuthorizationMode::AddBeginning),
        SectionPolicy::single(AuthorizationMode::AddWithoutAlter),
        SectionPolicy::single(AuthorizationMode::AddWithAlter),
        SectionPolicy::single(AuthorizationMode::ReadOnly).with_grant("billing", AuthorizationMode::AddEnd),
    ];
    let (mut flips, mut undetected, mut false_failures) = (0usize, 0usize, 0usize);
    for i in 0..10 {
        let len = rng.gen_range(0..=64);
        let text: String = (0..len).map(|_| rng.gen_range(b' '..=b'~') as char).collect();
        let key = OwnerKey::generate(format!("owner{i}"), &mut rng).unwrap();
        let sealed = seal_segment(&text.as_str().into(), policies[i % policies.len()].clone(), &key, 8, &mut rng).unwrap();
        let bytes = sealed.to_bytes();
        match SealedSegment::from_bytes(&bytes).map(|s| open_segment(&s, &key)) {
            Ok(Ok(o)) if o.text.as_str() == text => {}
            _ => false_failures += 1,
        }
        for bit in 0..bytes.len() * 8 {
            let mut flipped = bytes.clone();
            flipped[bit / 8] ^= 1 << (bit % 8);
            flips += 1;
            if let Ok(s) = SealedSegment::from_bytes(&flipped) {
                if open_segment(&s, &key).is_ok() {
                    undetected += 1;
                }
            }
        }
    }
    check(
        undetected == 0 && false_failures == 0,
        format!("{flips} single-bit flips over 10 segments, {undetected} opened, {false_failures} false failures"),
    )
}

// 4 ----------------------------------------------------------------------

fn revenue_recovery(dir: &Path) -> Verdict {
    let mut config = RunConfig {
        call_count: 10_000,
        seed: 2011,
        output_dir: dir.join("recovery"),
        ..RunConfig::default()
    };
    config.channel.in_drop_probability = 0.05;
    config.channel.reorder_window = 50;
    let out = run_pipeline(&config).map_err(|e| e.to_string())?;
    let tariff = config.tariff;

    let truth: i64 = out.simulation.calls.iter().map(|c| oracle_charge(c.duration_s, &tariff)).sum();
    let by_corr: BTreeMap<u64, &GroundTruthCall> =
        out.simulation.calls.iter().map(|c| (c.correlation_id, c)).collect();
    let dropped: BTreeSet<u64> = out
        .simulation
        .delivery
        .dropped
        .iter()
        .filter(|d| d.source == Source::BaseStationIN)
        .map(|d| by_corr[&d.correlation_id].call_id)
        .collect();
    let shortfall: i64 = dropped
        .iter()
        .map(|id| oracle_charge(out.simulation.calls[*id as usize - 1].duration_s, &tariff))
        .sum();
    let expected_pct = 100.0 * shortfall as f64 / (truth - shortfall) as f64;

    let switch_only: BTreeSet<u64> = out
        .assurance
        .iter()
        .flat_map(|f| &f.unmatched_marks)
        .filter(|m| m.present == Presence::SwitchOnly)
        .map(|m| m.call_id)
        .collect();
    let r = &out.report;
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config.output_dir.join("report.json")).unwrap()).unwrap();
    let ok = r.balance_after_extended_mamo.minor() == truth
        && switch_only == dropped
        && r.recovered_amount.minor() == shortfall
        && r.recovered_percentage == Some(expected_pct)
        && on_disk == serde_json::to_value(r).unwrap();
    check(
        ok && !dropped.is_empty(),
        format!(
            "after {} vs truth {}, {} switch-only marks vs {} dropped IN, recovered {:?}% vs {expected_pct}%",
            r.balance_after_extended_mamo,
            Money::from_minor(truth),
            switch_only.len(),
            dropped.len(),
            r.recovered_percentage
        ),
    )
}

// 5 ----------------------------------------------------------------------

fn exception_handling(dir: &Path) -> Verdict {
    let config = RunConfig {
        call_count: 2000,
        seed: 55,
        output_dir: dir.join("late"),
        ..RunConfig::default()
    };
    let sim = simulate(&config).map_err(|e| e.to_string())?;
    let windows = sim.windows();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Every handset message arrives up to an hour after its IN message.
    let in_arrival: BTreeMap<u64, u64> = sim
        .delivery
        .delivered
        .iter()
        .filter(|d| d.message.source() == Source::BaseStationIN)
        .map(|d| (d.message.correlation_id(), d.arrival_ms))
        .collect();
    let mut late: Vec<Delivered> = sim
        .delivery
        .delivered
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.message.source() == Source::Handset {
                d.arrival_ms = in_arrival[&d.message.correlation_id()] + rng.gen_range(1..=3_600_000);
            }
            d
        })
        .collect();
    late.sort_by_key(|d| d.arrival_ms);
    let position: BTreeMap<(u64, Source), usize> = late
        .iter()
        .enumerate()
        .map(|(i, d)| ((d.message.correlation_id(), d.message.source()), i))
        .collect();
    let all_late = position
        .iter()
        .filter(|((_, s), _)| *s == Source::Handset)
        .all(|((c, _), &i)| i > position[&(*c, Source::BaseStationIN)]);
    let rec = reconcile(&config, &windows, &late).map_err(|e| e.to_string())?;
    let records = all_records(&rec.batches);
    let late_ok = all_late
        && records.len() == config.call_count
        && records.iter().all(|r| r.provenance == Provenance::FullyReconciled)
        && rec.rejects.is_empty();

    // No handset message arrives at all.
    let mut lost = RunConfig {
        output_dir: dir.join("lost"),
        ..config.clone()
    };
    lost.channel.handset_loss_probability = 1.0;
    lost.timeout_policy.on_missing_handset = MissingHandset::BillWithoutReconciliation;
    let out = run_pipeline(&lost).map_err(|e| e.to_string())?;
    let lost_records = all_records(&out.reconciliation.batches);
    let truth: i64 = out.simulation.calls.iter().map(|c| oracle_charge(c.duration_s, &lost.tariff)).sum();
    let lost_ok = lost_records.len() == lost.call_count
        && lost_records
            .iter()
            .all(|r| r.provenance == Provenance::BilledWithoutHandset && r.handset_fields.is_none())
        && out.report.balance_after_extended_mamo.minor() == truth;

    check(
        late_ok && lost_ok,
        format!(
            "late handsets: {} of {} FullyReconciled; handsets lost: {} of {} BilledWithoutHandset, revenue_after {} vs truth {}",
            records.iter().filter(|r| r.provenance == Provenance::FullyReconciled).count(),
            config.call_count,
            lost_records.iter().filter(|r| r.provenance == Provenance::BilledWithoutHandset).count(),
            lost.call_count,
            out.report.balance_after_extended_mamo,
            Money::from_minor(truth),
        ),
    )
}

// 6 ----------------------------------------------------------------------

fn scaling(dir: &Path) -> Verdict {
    let sizes = [1000usize, 5000, 10_000, 15_000, 20_000];
    let mut runs: Vec<RunMetrics> = Vec::new();
    let mut wall = Vec::new();
    for &n in &sizes {
        let config = RunConfig {
            call_count: n,
            seed: 7,
            output_dir: dir.join(format!("scale_{n}")),
            ..RunConfig::default()
        };
        let started = Instant::now();
        let out = run_pipeline(&config).map_err(|e| e.to_string())?;
        wall.push(started.elapsed());
        runs.push(out.metrics);
        fs::remove_dir_all(&config.output_dir).ok();
    }
    let csv = Path::new(env!("CARGO_TARGET_TMPDIR")).join("scaling_metrics.csv");
    emit_metrics(&runs, &csv).map_err(|e| e.to_string())?;
    let points: Vec<(f64, f64)> = runs
        .iter()
        .map(|m| (m.message_count as f64, m.reconciliation_time_ns as f64))
        .collect();
    let exponent = fit_exponent(&points);
    let last = *wall.last().unwrap();
    check(
        exponent < 1.3 && last < Duration::from_secs(10),
        format!(
            "fitted exponent {exponent:.3}, 20k run {last:.2?}, ns/message {:?}, metrics in {}",
            runs.iter().map(|m| m.ns_per_message.round() as u64).collect::<Vec<_>>(),
            csv.display()
        ),
    )
}

// 7 ----------------------------------------------------------------------

fn order_insensitivity(dir: &Path) -> Verdict {
    let config = RunConfig {
        call_count: 1000,
        seed: 77,
        output_dir: dir.join("perm"),
        ..RunConfig::default()
    };
    let sim = simulate(&config).map_err(|e| e.to_string())?;
    let windows = sim.windows();
    let run = |stream: &[Delivered]| -> Result<_, String> {
        let rec = reconcile(&config, &windows, stream).map_err(|e| e.to_string())?;
        let files = assure(&sim.switch_batches, &rec.batches).map_err(|e| e.to_string())?;
        Ok((all_records(&rec.batches), revenue_report(&files, &config.tariff, &sim.accounts)))
    };
    let (base_records, base_report) = run(&sim.delivery.delivered)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
    let mut differing = 0;
    for _ in 0..20 {
        let mut stream = sim.delivery.delivered.clone();
        stream.shuffle(&mut rng);
        let (records, report) = run(&stream)?;
        differing += usize::from(records != base_records || report != base_report);
    }
    check(
        differing == 0 && base_records.len() == config.call_count,
        format!("20 permutations of {} messages, {differing} differ from the original order", sim.delivery.delivered.len()),
    )
}

// 8 ----------------------------------------------------------------------

fn random_record(rng: &mut ChaCha8Rng, call_id: u64) -> CallRecord {
    CallRecord {
        call_id,
        correlation_id: call_id,
        start_time_ms: call_id,
        charged_duration: rng.gen_range(0..3),
        final_charge: Money::from_minor(rng.gen_range(0..3)),
        account_before: Money::ZERO,
        account_after: Money::ZERO,
        caller: "c".into(),
        callee: "d".into(),
    }
}

fn random_ids(rng: &mut ChaCha8Rng) -> Vec<u64> {
    let n = rng.gen_range(0..=50);
    let mut ids = rand::seq::index::sample(rng, 70, n).into_vec();
    ids.shuffle(rng);
    ids.into_iter().map(|i| i as u64 + 1).collect()
}

fn merge_oracle() -> Verdict {
    let window = ScheduleWindow { id: ScheduleId { run: 1, seq: 1 }, start_ms: 0, end_ms: 1000 };
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = 0;
    for _ in 0..200 {
        let switch = ScheduleBatch {
            window,
            records: random_ids(&mut rng).into_iter().map(|id| random_record(&mut rng, id)).collect(),
        };
        let billing = BillingBatch {
            window,
            records: random_ids(&mut rng)
                .into_iter()
                .map(|id| {
                    let r = random_record(&mut rng, id);
                    ReconciledRecord {
                        correlation_id: r.correlation_id,
                        call_id: id,
                        in_fields: r,
                        handset_fields: None,
                        housekeeping: vec![],
                        billing_schedule_id: Some(window.id),
                        provenance: Provenance::BilledWithoutHandset,
                    }
                })
                .collect(),
        };

        // Quadratic cross-join.
        let mut unmatched = Vec::new();
        let mut params = Vec::new();
        for s in &switch.records {
            let partners: Vec<_> = billing.records.iter().filter(|b| b.call_id == s.call_id).collect();
            if partners.is_empty() {
                unmatched.push(UnmatchedMark { call_id: s.call_id, present: Presence::SwitchOnly });
            }
            for b in partners {
                if s.charged_duration != b.in_fields.charged_duration {
                    params.push(ParameterMark {
                        call_id: s.call_id,
                        field: "charged_duration".into(),
                        switch_value: FieldValue::Count(s.charged_duration.into()),
                        reconciled_value: FieldValue::Count(b.in_fields.charged_duration.into()),
                    });
                }
                if s.final_charge != b.in_fields.final_charge {
                    params.push(ParameterMark {
                        call_id: s.call_id,
                        field: "final_charge".into(),
                        switch_value: FieldValue::Money(s.final_charge),
                        reconciled_value: FieldValue::Money(b.in_fields.final_charge),
                    });
                }
            }
        }
        for b in &billing.records {
            if !switch.records.iter().any(|s| s.call_id == b.call_id) {
                unmatched.push(UnmatchedMark { call_id: b.call_id, present: Presence::BillingOnly });
            }
        }
        unmatched.sort_by_key(|m| m.call_id);
        // Stable, so the two fields of one call stay in contrast order.
        params.sort_by_key(|m| m.call_id);
        let (ns, nb) = (switch.records.len(), billing.records.len());
        let count = if ns == nb {
            CountMark::Match
        } else {
            CountMark::Mismatch { switch_count: ns, reconciled_count: nb }
        };

        let file = merge_archives(&switch, &billing).and_then(|f| contrast_parameters(f, DEFAULT_CONTRAST_FIELDS));
        let agrees = matches!(&file, Ok(f) if f.count_mark == count && f.unmatched_marks == unmatched && f.parameter_marks == params);
        failures += usize::from(!agrees);
    }
    check(failures == 0, format!("200 random archive pairs, {failures} disagree with the cross-join"))
}

// 9 ----------------------------------------------------------------------

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn without_timing(mut m: RunMetrics) -> RunMetrics {
    m.reconciliation_time_ns = 0;
    m.ns_per_message = 0.0;
    m
}

fn determinism(dir: &Path) -> Verdict {
    let mut config = RunConfig {
        call_count: 3000,
        seed: 909,
        output_dir: dir.join("det"),
        ..RunConfig::default()
    };
    config.channel.in_drop_probability = 0.05;
    config.channel.handset_loss_probability = 0.02;
    config.channel.reorder_window = 20;

    let first = run_pipeline(&config).map_err(|e| e.to_string())?;
    let files_a = snapshot(&config.output_dir);
    fs::remove_dir_all(&config.output_dir).unwrap();
    let second = run_pipeline(&config).map_err(|e| e.to_string())?;
    let files_b = snapshot(&config.output_dir);

    let differing: Vec<_> = files_a
        .keys()
        .chain(files_b.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| files_a.get(*k) != files_b.get(*k))
        .collect();
    check(
        differing.is_empty()
            && first.report == second.report
            && without_timing(first.metrics) == without_timing(second.metrics),
        format!("{} files compared, differing: {differing:?}", files_a.len()),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("1 grammar oracle equivalence", Box::new(grammar_oracle_equivalence)),
        ("2 compatibility table", Box::new(compatibility_table)),
        ("3 tamper evidence", Box::new(tamper_evidence)),
        ("4 revenue recovery", Box::new(move || revenue_recovery(d))),
        ("5 exception handling", Box::new(move || exception_handling(d))),
        ("6 scaling", Box::new(move || scaling(d))),
        ("7 order insensitivity", Box::new(move || order_insensitivity(d))),
        ("8 merge oracle", Box::new(merge_oracle)),
        ("9 determinism", Box::new(move || determinism(d))),
    ];
    // Straight to stdout so the verdicts show even when the test passes.
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    let mut failed = Vec::new();
    for (name, run) in &criteria {
        let verdict = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        match verdict {
            Ok(detail) => writeln!(out, "PASS  {name}: {detail}").unwrap(),
            Err(detail) => {
                writeln!(out, "FAIL  {name}: {detail}").unwrap();
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
