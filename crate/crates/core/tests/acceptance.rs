//! Acceptance gate: ten numbered criteria, run in order, one PASS/FAIL
//! line each. Everything is hermetic; the only endpoints touched are
//! loopback mocks started by the test itself.
//!
//! Golden files live in tests/golden/. To regenerate after a deliberate,
//! reviewed behavior change: PLATEWATCH_REGEN=1 cargo test --test acceptance

use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use platewatch_core::bench::{
    format_accuracy, run_bench, score, BenchOptions, DatasetItem, TableFormat,
};
use platewatch_core::detection::{detect_heuristic, iou, DetectorKind, HeuristicParams};
use platewatch_core::imaging::{encode_png, otsu_threshold, Histogram256};
use platewatch_core::lmm::{LmmClient, LmmConfig, LmmRequest, RECOGNITION_PROMPT};
use platewatch_core::mock::MockServer;
use platewatch_core::notify::{DeliveryStatus, NotifyQueue, WebhookConfig};
use platewatch_core::patrol::{generate_lot, run_patrol, PatrolContext, PatrolReport, SweepPlan};
use platewatch_core::recognizer::{
    build_recognizer, normalize_plate, BuildContext, ImageSource, OcrKind, PipelineConfig,
    PlateRecognizer, PlateString, RecognitionResult, RoiVariant,
};
use platewatch_core::registry::{load_registry, read_events, EventStore};
use platewatch_core::retry::{Jitter, RetryPolicy};
use platewatch_core::synth::{degrade, render_plate, DegradeSpec, GlyphAtlas};

/// Criterion 3 regression pin: exact matches out of [`DEGRADED_TRIALS`]
/// seed-swept trials at noise sigma 8, rotation 2 degrees. Measured once
/// on this implementation; any drift is a behavior change to investigate,
/// not a tolerance to widen.
const DEGRADED_TRIALS: usize = 200;
const DEGRADED_EXACT_PINNED: usize = 200;

const PROMPT_SHA256: &str = "c27022205b077143dbf8b11b95ab6d45ae8cecf2153bd65b5baaa104597f8acc";

const PLATE_CHARS: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn random_plate<R: Rng>(rng: &mut R) -> PlateString {
    let len = if rng.random_bool(0.5) { 6 } else { 7 };
    let s: String = (0..len)
        .map(|_| PLATE_CHARS[rng.random_range(0..PLATE_CHARS.len())] as char)
        .collect();
    normalize_plate(&s).expect("alphabet characters form a plate")
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_ms: 1,
        factor: 1.0,
        cap_ms: 2,
        jitter: Jitter::None,
    }
}

/// Exhaustive Otsu oracle in exact integer arithmetic: between-class
/// variance at split t is proportional to (S0*W1 - S1*W0)^2 / (W0*W1), so
/// candidates compare exactly via cross-multiplied u128 products while the
/// total mass stays below 2^16. Ties keep the smallest t; a single
/// populated bin is its own threshold.
fn otsu_brute_force(counts: &[u64; 256]) -> Option<u8> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    assert!(total < (1 << 16), "oracle bound: total mass < 2^16");
    let first = counts.iter().position(|&c| c > 0).unwrap();
    let last = counts.iter().rposition(|&c| c > 0).unwrap();
    if first == last {
        return Some(first as u8);
    }
    let total_sum: u64 = counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut best: Option<(u128, u128, u8)> = None;
    for t in 0..256usize {
        let w0: u64 = counts[..=t].iter().sum();
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let s0: u64 = counts[..=t]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u64 * c)
            .sum();
        let s1 = total_sum - s0;
        let d = (s0 as i128) * (w1 as i128) - (s1 as i128) * (w0 as i128);
        let num = (d * d) as u128;
        let den = w0 as u128 * w1 as u128;
        let better = match &best {
            None => true,
            Some((bn, bd, _)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t as u8));
        }
    }
    best.map(|(_, _, t)| t)
}

// --------------------------------------------------------------------------
// criteria
// --------------------------------------------------------------------------

fn c01_otsu_oracle() -> Result<(), String> {
    let start = Instant::now();
    for i in 0..1_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + i);
        let mut counts = [0u64; 256];
        match i % 4 {
            // dense noise floor
            0 => {
                for c in counts.iter_mut() {
                    *c = rng.random_range(0..=200);
                }
            }
            // a few sparse spikes
            1 => {
                for _ in 0..rng.random_range(1..=8) {
                    counts[rng.random_range(0..256)] = rng.random_range(1..=500);
                }
            }
            // two humps, the realistic plate shape
            2 => {
                let m1 = rng.random_range(10..100) as i32;
                let m2 = rng.random_range(150..246) as i32;
                for _ in 0..2_000 {
                    let center = if rng.random_bool(0.5) { m1 } else { m2 };
                    let v = (center + rng.random_range(-10..=10)).clamp(0, 255);
                    counts[v as usize] += 1;
                }
            }
            // degenerate single class
            _ => {
                counts[rng.random_range(0..256)] = rng.random_range(1..=100);
            }
        }
        let got = otsu_threshold(&Histogram256::from_counts(counts)).ok();
        let want = otsu_brute_force(&counts);
        if got != want {
            return Err(format!(
                "histogram {i}: otsu_threshold gave {got:?}, oracle says {want:?}"
            ));
        }
    }
    // the empty histogram errors on both sides
    if otsu_threshold(&Histogram256::from_counts([0; 256])).is_ok() {
        return Err("empty histogram must not threshold".into());
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}, budget is < 1 s"));
    }
    Ok(())
}

fn c02_clean_round_trip() -> Result<(), String> {
    let start = Instant::now();
    let atlas = GlyphAtlas::built_in();
    let recognizer = build_recognizer(
        &PipelineConfig::dual(DetectorKind::Heuristic, OcrKind::Baseline, RoiVariant::Binary),
        &BuildContext::local(),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2_024);
    for i in 0..500 {
        let truth = random_plate(&mut rng);
        let (img, _) = render_plate(&truth, &atlas, 20).map_err(|e| e.to_string())?;
        let result = recognizer.recognize(&ImageSource::memory(&img));
        match &result.plate {
            Ok(read) if *read == truth => {}
            Ok(read) => return Err(format!("trial {i}: rendered {truth}, read {read}")),
            Err(e) => return Err(format!("trial {i}: rendered {truth}, failed: {e}")),
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(20) {
        return Err(format!("took {elapsed:?}, budget is < 20 s"));
    }
    Ok(())
}

fn c03_degraded_regression() -> Result<(), String> {
    let atlas = GlyphAtlas::built_in();
    let recognizer = build_recognizer(
        &PipelineConfig::dual(DetectorKind::Heuristic, OcrKind::Baseline, RoiVariant::Binary),
        &BuildContext::local(),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(30_000);
    let mut exact = 0usize;
    for i in 0..DEGRADED_TRIALS {
        let truth = random_plate(&mut rng);
        let (img, _) = render_plate(&truth, &atlas, 20).map_err(|e| e.to_string())?;
        let spec =
            DegradeSpec::new(8.0, 2.0, 0, 40_000 + i as u64).map_err(|e| e.to_string())?;
        let frame = degrade(&img, &spec);
        let result = recognizer.recognize(&ImageSource::memory(&frame));
        if matches!(&result.plate, Ok(read) if *read == truth) {
            exact += 1;
        }
    }
    if exact != DEGRADED_EXACT_PINNED {
        return Err(format!(
            "measured {exact}/{DEGRADED_TRIALS} exact, pinned {DEGRADED_EXACT_PINNED}/{DEGRADED_TRIALS}; \
             a drift here means recognition behavior changed"
        ));
    }
    Ok(())
}

fn c04_detector_quality() -> Result<(), String> {
    let atlas = GlyphAtlas::built_in();
    let params = HeuristicParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4_242);
    let mut passing = 0usize;
    let mut worst: f64 = 1.0;
    for _ in 0..100 {
        let plate = random_plate(&mut rng);
        let margin = rng.random_range(8..=32);
        let (img, truth) = render_plate(&plate, &atlas, margin).map_err(|e| e.to_string())?;
        let found = detect_heuristic(&img, &params).map_err(|e| e.to_string())?;
        let overlap = iou(&found.rect(), &truth.rect());
        worst = worst.min(overlap);
        if overlap >= 0.9236 {
            passing += 1;
        }
    }
    if passing < 95 {
        return Err(format!(
            "only {passing}/100 scenes reach IoU 0.9236 (worst seen {worst:.4})"
        ));
    }
    Ok(())
}

fn c05_metric_fidelity() -> Result<(), String> {
    let ok = |s: &str| RecognitionResult {
        plate: Ok(normalize_plate(s).unwrap()),
        raw_text: s.to_owned(),
        backend: "fixture".to_owned(),
        elapsed: Duration::ZERO,
        attempts: 1,
    };

    // 50 pairs, exactly 27 exact matches
    let truth = normalize_plate("HPJ149").unwrap();
    let mut exact = 0usize;
    for i in 0..50 {
        let pred = if i < 27 { "HPJ149" } else { "HPJ148" };
        if score(&truth, &ok(pred)).exact {
            exact += 1;
        }
    }
    if exact != 27 {
        return Err(format!("fixture built {exact} exact matches, wanted 27"));
    }
    let cell = format_accuracy(exact, 50);
    if cell != "54" {
        return Err(format!("27/50 formats as {cell:?}, table wants \"54\""));
    }

    // per-character reading of an exact match
    let rec = score(&truth, &ok("HPJ149"));
    if (rec.char_correct, rec.char_total) != (6, 6) {
        return Err(format!(
            "HPJ149 vs HPJ149 scored {}/{}, wanted 6/6",
            rec.char_correct, rec.char_total
        ));
    }
    Ok(())
}

fn c06_report_emitter() -> Result<(), String> {
    use platewatch_core::bench::{emit_summaries, BenchSummary};
    let summary = |family: &str, variant, exact, mean: f64| BenchSummary {
        family: family.to_owned(),
        variant,
        n_runs: 50,
        exact_count: exact,
        char_correct_sum: exact * 6,
        char_total_sum: 300,
        total_time: Some(Duration::from_secs_f64(mean * 50.0)),
        aborted: None,
    };
    let summaries = vec![
        summary("dual/heuristic/baseline", Some(RoiVariant::Original), 27, 0.6963),
        summary("dual/heuristic/baseline", Some(RoiVariant::Gray), 29, 0.6963),
        summary("dual/heuristic/baseline", Some(RoiVariant::Binary), 30, 0.6963),
        summary("dual/oracle/external", Some(RoiVariant::Original), 35, 0.3937),
        summary("dual/oracle/external", Some(RoiVariant::Gray), 36, 0.3937),
        summary("dual/oracle/external", Some(RoiVariant::Binary), 25, 0.3937),
        summary("lmm", None, 49, 2.8048),
    ];
    let table = emit_summaries(&summaries, TableFormat::Markdown);
    for want in [
        "| X | 54 | 58 | 60 | 0.6963 |",
        "| X | 70 | 72 | 50 | 0.3937 |",
        "| 98 | X | X | X | 2.8048 |",
    ] {
        if !table.contains(want) {
            return Err(format!("table is missing row {want:?}:\n{table}"));
        }
    }
    Ok(())
}

fn c07_lmm_contract() -> Result<(), String> {
    std::env::set_var("ACCEPTANCE_LMM_KEY", "acceptance-mock-key");
    let cfg_for = |endpoint: String| LmmConfig {
        endpoint,
        model_id: "mock-model".to_owned(),
        api_key_env: "ACCEPTANCE_LMM_KEY".to_owned(),
        timeout_ms: 5_000,
        retry: fast_retry(8),
        reask_on_parse_failure: false,
    };
    let atlas = GlyphAtlas::built_in();
    let plate = normalize_plate("HPJ149").unwrap();
    let (img, _) = render_plate(&plate, &atlas, 20).map_err(|e| e.to_string())?;
    let png = encode_png(&img).map_err(|e| e.to_string())?;

    // a messy but honest answer normalizes
    let server = MockServer::lmm_fixed("hpj-149").map_err(|e| e.to_string())?;
    let cfg = cfg_for(server.url_with_path("/v1/chat/completions"));
    let client = LmmClient::new(cfg.clone()).map_err(|e| e.to_string())?;
    let resp = client
        .recognize_with_retry(&LmmRequest::new(png.clone(), &cfg))
        .map_err(|e| e.to_string())?;
    match &resp.normalized {
        Ok(p) if p.as_str() == "HPJ149" => {}
        other => return Err(format!("\"hpj-149\" normalized to {other:?}")),
    }

    // seven failures then success exhausts exactly the retry budget
    let server = MockServer::lmm_fail_then(7, 500, "HPJ149").map_err(|e| e.to_string())?;
    let cfg = cfg_for(server.url_with_path("/v1/chat/completions"));
    let client = LmmClient::new(cfg.clone()).map_err(|e| e.to_string())?;
    let resp = client
        .recognize_with_retry(&LmmRequest::new(png.clone(), &cfg))
        .map_err(|e| format!("fail-7 should still succeed: {e}"))?;
    if resp.attempts != 8 {
        return Err(format!("fail-7 used {} attempts, wanted 8", resp.attempts));
    }
    if resp.normalized.is_err() {
        return Err("fail-7 answer did not normalize".into());
    }

    // eight failures is one too many
    let server = MockServer::lmm_fail_then(8, 500, "HPJ149").map_err(|e| e.to_string())?;
    let cfg = cfg_for(server.url_with_path("/v1/chat/completions"));
    let client = LmmClient::new(cfg.clone()).map_err(|e| e.to_string())?;
    if client
        .recognize_with_retry(&LmmRequest::new(png, &cfg))
        .is_ok()
    {
        return Err("fail-8 must exhaust the retry budget".into());
    }
    if server.hits() != 8 {
        return Err(format!("fail-8 hit the server {} times, wanted 8", server.hits()));
    }

    // the prompt is byte-exact
    let digest = Sha256::digest(RECOGNITION_PROMPT.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    if hex != PROMPT_SHA256 {
        return Err(format!("prompt checksum {hex} differs from pinned {PROMPT_SHA256}"));
    }
    Ok(())
}

struct SleepyStub;

impl PlateRecognizer for SleepyStub {
    fn recognize(&self, _: &ImageSource<'_>) -> RecognitionResult {
        let start = Instant::now();
        std::thread::sleep(Duration::from_millis(50));
        RecognitionResult {
            plate: Ok(normalize_plate("HPJ149").unwrap()),
            raw_text: "HPJ149".to_owned(),
            backend: "sleepy-stub".to_owned(),
            elapsed: start.elapsed(),
            attempts: 1,
        }
    }

    fn label(&self) -> String {
        "sleepy-stub".to_owned()
    }
}

fn c08_timing_harness() -> Result<(), String> {
    let truth = normalize_plate("HPJ149").unwrap();
    let items: Vec<DatasetItem> = (0..20)
        .map(|i| DatasetItem {
            path: PathBuf::from(format!("virtual-{i}.png")),
            truth: truth.clone(),
        })
        .collect();
    let configs = vec![PipelineConfig::lmm()];
    let summaries = run_bench(&items, &configs, &BenchOptions::default(), |_| {
        Ok(Box::new(SleepyStub))
    });
    let mean = summaries[0]
        .mean_time()
        .ok_or("timed run must produce a mean")?;
    if !(0.050..=0.070).contains(&mean) {
        return Err(format!("mean_time {mean:.4} s outside [0.050, 0.070]"));
    }
    Ok(())
}

const FIXTURE_REGISTRY_CSV: &str = "\
# acceptance whitelist (do not edit: golden notification bodies depend on it)
HPJ149,resident 12F
WXY680,visitor pass 3
ABC1234,staff
KLM552,resident 8A
QRS7077,clinic fleet
DEF402,resident 2C
GHI915,visitor pass 9
NOP238,delivery fleet
";

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn compare_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var("PLATEWATCH_REGEN").as_deref() == Ok("1") {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        eprintln!("regenerated {}", path.display());
        return Ok(());
    }
    let want = std::fs::read_to_string(&path)
        .map_err(|e| format!("read golden {}: {e} (regen with PLATEWATCH_REGEN=1)", path.display()))?;
    if want != actual {
        let diff_at = want
            .lines()
            .zip(actual.lines())
            .position(|(w, a)| w != a)
            .map(|i| i + 1);
        return Err(format!(
            "{name} differs from golden (first differing line: {diff_at:?}); \
             regen with PLATEWATCH_REGEN=1 only for a reviewed change"
        ));
    }
    Ok(())
}

fn c09_end_to_end_patrol() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let registry_path = dir.path().join("registry.csv");
    std::fs::write(&registry_path, FIXTURE_REGISTRY_CSV).map_err(|e| e.to_string())?;
    let registry = load_registry(&registry_path).map_err(|e| e.to_string())?;

    let lot = generate_lot(12, 10, &registry, 3, 42).map_err(|e| e.to_string())?;
    let plan = SweepPlan::full_lot(&lot, SweepPlan::default_angles());
    let recognizer = build_recognizer(
        &PipelineConfig::dual(DetectorKind::Heuristic, OcrKind::Baseline, RoiVariant::Binary),
        &BuildContext::local(),
    )
    .map_err(|e| e.to_string())?;

    let server = MockServer::status_sequence(vec![200]).map_err(|e| e.to_string())?;
    std::env::set_var("ACCEPTANCE_NOTIFY_TOKEN", "acceptance-webhook-token");
    let queue = NotifyQueue::start(WebhookConfig {
        url: server.url_with_path("/hook"),
        token_env: "ACCEPTANCE_NOTIFY_TOKEN".to_owned(),
        recipient: "manager".to_owned(),
        notify_legal: true,
        retry: fast_retry(5),
    });

    let events_path = dir.path().join("events.jsonl");
    let store = EventStore::open(&events_path).map_err(|e| e.to_string())?;
    let ctx = PatrolContext {
        registry: &registry,
        store: &store,
        notifier: Some(&queue),
        atlas: &GlyphAtlas::built_in(),
        clock_start: Utc.with_ymd_and_hms(2026, 8, 16, 8, 0, 0).unwrap(),
        step_secs: 30,
    };
    let report = run_patrol(&lot, &plan, recognizer.as_ref(), &ctx).map_err(|e| e.to_string())?;
    let want = PatrolReport {
        legal: 7,
        illegal: 3,
        unreadable: 0,
        empty: 2,
    };
    if report != want {
        return Err(format!("report {report:?}, wanted {want:?}"));
    }

    // every message delivered, in order, and the mix is exactly 3 + 7
    let records = queue.shutdown();
    if records.len() != 10 {
        return Err(format!("{} delivery records, wanted 10", records.len()));
    }
    if records
        .iter()
        .any(|r| r.status != DeliveryStatus::Delivered || r.attempts != 1)
    {
        return Err("every notification should deliver on the first attempt".into());
    }
    let bodies: Vec<String> = server
        .requests()
        .iter()
        .map(|r| String::from_utf8(r.body.clone()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if bodies.len() != 10 {
        return Err(format!("{} webhook bodies, wanted 10", bodies.len()));
    }
    let warnings = bodies.iter().filter(|b| b.contains("⚠ ILLEGAL PARKING")).count();
    let legals = bodies.iter().filter(|b| b.contains("Status: LEGAL")).count();
    if (warnings, legals) != (3, 7) {
        return Err(format!(
            "{warnings} warning and {legals} legal messages, wanted 3 and 7"
        ));
    }

    // byte-exact against the committed golden
    let mut joined = bodies.join("\n");
    joined.push('\n');
    compare_golden("patrol_webhook_bodies.jsonl", &joined)?;

    // events persisted, re-readable, and the log continues cleanly
    let events = read_events(&events_path, 0).map_err(|e| e.to_string())?;
    if events.len() != 10 {
        return Err(format!("{} events persisted, wanted 10", events.len()));
    }
    if events.iter().any(|e| !e.event.is_well_formed()) {
        return Err("persisted events violate the plate/verdict invariant".into());
    }
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    if seqs != (1..=10).collect::<Vec<u64>>() {
        return Err(format!("sequences {seqs:?}, wanted 1..=10"));
    }
    drop(store);
    let reopened = EventStore::open(&events_path).map_err(|e| e.to_string())?;
    if reopened.next_seq() != 11 {
        return Err(format!(
            "reopened log continues at {}, wanted 11",
            reopened.next_seq()
        ));
    }
    Ok(())
}

// --------------------------------------------------------------------------
// runner
// --------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let suite_start = Instant::now();
    let criteria: Vec<(&str, fn() -> Result<(), String>)> = vec![
        (
            "otsu threshold equals the exhaustive oracle on 1000 seeded histograms in under 1 s",
            c01_otsu_oracle,
        ),
        (
            "500 seeded plates round-trip exactly through render -> detect -> binarize -> ocr in under 20 s",
            c02_clean_round_trip,
        ),
        (
            "degraded round trip (sigma 8, rotation 2 deg, seed-swept) reproduces the pinned exact-match count",
            c03_degraded_regression,
        ),
        (
            "heuristic detector reaches IoU >= 0.9236 on at least 95 of 100 clean scenes",
            c04_detector_quality,
        ),
        (
            "27 of 50 exact matches report as 54, and an exact read scores 6/6 characters",
            c05_metric_fidelity,
        ),
        (
            "report emitter reproduces the published accuracy/latency rows",
            c06_report_emitter,
        ),
        (
            "model client normalizes answers, retries to exactly 8 attempts, and carries the pinned prompt",
            c07_lmm_contract,
        ),
        (
            "a 50 ms stub backend yields mean_time in [0.050, 0.070] s over 20 images",
            c08_timing_harness,
        ),
        (
            "seed-42 patrol: report {7,3,0,2}, 3 warning + 7 legal messages byte-exact vs goldens, 10 events re-readable",
            c09_end_to_end_patrol,
        ),
    ];

    let mut failures = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {n:>2}  PASS  ({secs:6.2} s)  {name}"),
            Err(reason) => {
                println!("criterion {n:>2}  FAIL  ({secs:6.2} s)  {name}: {reason}");
                failures.push(n);
            }
        }
    }

    // criterion 10: the whole gate is fast and loopback-only. Hermeticity
    // is structural (every endpoint above is a MockServer on 127.0.0.1);
    // the budget is asserted here.
    let total = suite_start.elapsed();
    if total < Duration::from_secs(60) {
        println!(
            "criterion 10  PASS  ({:6.2} s)  whole gate under 60 s, loopback mocks only",
            total.as_secs_f64()
        );
    } else {
        println!(
            "criterion 10  FAIL  ({:6.2} s)  whole gate exceeded the 60 s budget",
            total.as_secs_f64()
        );
        failures.push(10);
    }

    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
