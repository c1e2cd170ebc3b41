//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use opfactor::config::Config;
use opfactor::report::matrix_from_csv;
use opfactor::server::{self, Limits};
use opfactor::service::Gate;
use opfactor::store::EnrollmentStore;
use opfactor_core::eval::{
    calibrate_threshold, distance_matrix, duration_sweep, heatmap, mark_cells, pairwise_accuracy,
    synth_engine_sound, CellMark, DistanceMatrix, EngineProfile, FleetSpec, LabeledSample, MatrixKind,
    PaletteSpec, XorShift64Star,
};
use opfactor_core::vision::max_distance;
use opfactor_core::{
    audio_distance, audio_signature, bhattacharyya_coefficient, bhattacharyya_distance, decide,
    magnitude_spectrum, spectral_centroid, AudioError, AudioSignature, ColorHistogram, Factor, FactorOutcome,
    FactorStatus, FrameParams, Policy, PolicyKind, Verdict,
};

type Check = Result<(), String>;

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Check, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn labels(samples: &[LabeledSample]) -> Vec<String> {
    samples.iter().map(|s| s.label.clone()).collect()
}

fn dft_centroid(x: &[f64], rate: u32) -> Option<f64> {
    let n = x.len();
    let mut total = 0.0;
    let mut weighted = 0.0;
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        let m = re.hypot(im);
        total += m;
        weighted += m * k as f64 * rate as f64 / n as f64;
    }
    (total > 1e-6 * n as f64).then(|| weighted / total)
}

fn centroid_oracle() -> Check {
    let mut rng = XorShift64Star::new(1);
    for case in 0..100 {
        let n = 1usize << (1 + rng.next_u64() % 6);
        let rate = 8_000 + (rng.next_u64() % 88_000) as u32;
        let frame: Vec<f64> = (0..n).map(|_| rng.next_signed()).collect();
        let got = spectral_centroid(&magnitude_spectrum(&frame, rate).map_err(|e| e.to_string())?);
        match (got, dft_centroid(&frame, rate)) {
            (Ok(c), Some(o)) => ensure!((c - o).abs() <= 1e-6, "case {case}: {c} vs {o}"),
            (Err(AudioError::SilentFrame), None) => {}
            (g, o) => return Err(format!("case {case}: {g:?} vs {o:?}")),
        }
    }
    Ok(())
}

fn pure_tones() -> Check {
    let tone = |f| EngineProfile {
        fundamental: f,
        harmonic_amplitudes: vec![1.0],
        noise_level: 0.0,
        jitter: 0.0,
    };
    let bin = 44_100.0 / 2048.0;
    for f in [110.0, 220.0, 440.0, 880.0, 1760.0] {
        let clip = synth_engine_sound(&tone(f), 1.0, 44_100, 7).map_err(|e| e.to_string())?;
        let sig = audio_signature(&clip, &FrameParams::default()).map_err(|e| e.to_string())?;
        ensure!((sig.mean_centroid() - f).abs() <= bin, "{f} Hz tone read {}", sig.mean_centroid());
    }
    Ok(())
}

fn random_histogram(rng: &mut XorShift64Star) -> ColorHistogram {
    let mut v = vec![0.0; 512];
    for _ in 0..1 + rng.next_u64() % 12 {
        v[(rng.next_u64() % 512) as usize] += 0.01 + rng.next_f64();
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    ColorHistogram::from_values(8, v).unwrap()
}

fn one_hot(bin: usize) -> ColorHistogram {
    let mut v = vec![0.0; 512];
    v[bin] = 1.0;
    ColorHistogram::from_values(8, v).unwrap()
}

fn bhattacharyya_closed_forms() -> Check {
    let mut half = vec![0.0; 512];
    half[0] = 0.5;
    half[1] = 0.5;
    let half = ColorHistogram::from_values(8, half).unwrap();
    let d = bhattacharyya_distance(&one_hot(0), &half).map_err(|e| e.to_string())?;
    ensure!((d - 0.5 * 2f64.ln()).abs() < 1e-12, "half overlap distance {d}");
    let d = bhattacharyya_distance(&one_hot(0), &one_hot(511)).map_err(|e| e.to_string())?;
    ensure!(d == -(1e-12f64).ln() && d == max_distance(), "disjoint distance {d}");
    let mut rng = XorShift64Star::new(3);
    for _ in 0..100 {
        let p = random_histogram(&mut rng);
        let bc = bhattacharyya_coefficient(&p, &p).map_err(|e| e.to_string())?;
        ensure!((bc - 1.0).abs() <= 1e-12, "self coefficient {bc}");
        let d = bhattacharyya_distance(&p, &p).map_err(|e| e.to_string())?;
        ensure!(d.abs() <= 1e-12, "self distance {d}");
    }
    Ok(())
}

fn metric_suite() -> Check {
    let mut rng = XorShift64Star::new(4);
    // centroids on a 1/1024 Hz grid keep the sums exact
    let mut grid = || {
        let c = (rng.next_u64() % (22_050 * 1024)) as f64 / 1024.0;
        AudioSignature::from_centroids(vec![c], FrameParams::default()).unwrap()
    };
    for _ in 0..1000 {
        let (a, b, c) = (grid(), grid(), grid());
        ensure!(audio_distance(&a, &a) == 0.0, "self distance");
        ensure!(audio_distance(&a, &b) == audio_distance(&b, &a), "asymmetric");
        ensure!(audio_distance(&a, &b) >= 0.0, "negative");
        ensure!(
            audio_distance(&a, &c) <= audio_distance(&a, &b) + audio_distance(&b, &c),
            "triangle violated"
        );
    }
    let mut rng = XorShift64Star::new(5);
    for _ in 0..1000 {
        let (p, q) = (random_histogram(&mut rng), random_histogram(&mut rng));
        let pq = bhattacharyya_distance(&p, &q).map_err(|e| e.to_string())?;
        let qp = bhattacharyya_distance(&q, &p).map_err(|e| e.to_string())?;
        ensure!(pq >= 0.0 && pq <= max_distance(), "distance {pq} out of range");
        ensure!((pq - qp).abs() <= 1e-12, "asymmetric {pq} vs {qp}");
    }
    Ok(())
}

fn fixture(name: &str) -> Result<DistanceMatrix, String> {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    matrix_from_csv(&text, MatrixKind::IdentityAverage).map_err(|e| e.to_string())
}

fn cells(m: &DistanceMatrix, t: f64, want: CellMark) -> Vec<(String, String, f64)> {
    mark_cells(m, t)
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == want)
        .map(|(i, _)| {
            let (r, c) = (i / m.cols(), i % m.cols());
            (m.row_labels[r].clone(), m.col_labels[c].clone(), m.get(r, c).unwrap())
        })
        .collect()
}

fn thresholds_and_tables() -> Check {
    for cfg in [Config::default(), Config::from_toml("").map_err(|e| e.to_string())?] {
        ensure!(cfg.thresholds.audio_max_distance == 100.0, "audio threshold");
        ensure!(cfg.thresholds.visual_max_distance == 0.2, "visual threshold");
    }
    let t1 = fixture("reference_audio.csv")?;
    let fp = cells(&t1, 100.0, CellMark::FalsePositive);
    ensure!(fp == [("Car 1".into(), "Car 3".into(), 76.6)], "audio false positives {fp:?}");
    ensure!(cells(&t1, 100.0, CellMark::FalseNegative).is_empty(), "audio false negatives");
    let t2 = fixture("reference_visual.csv")?;
    let fn_ = cells(&t2, 0.2, CellMark::FalseNegative);
    ensure!(fn_ == [("Car 3".into(), "Car 3".into(), 0.224)], "visual false negatives {fn_:?}");
    ensure!(cells(&t2, 0.2, CellMark::FalsePositive).is_empty(), "visual false positives");
    Ok(())
}

/// Share of (row, same-label col, other-label col) triples where the
/// same-label cell is strictly lighter. Self-pairs are left out.
fn block_contrast(m: &DistanceMatrix, labels: &[String]) -> f64 {
    let h = heatmap(m);
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..m.rows() {
        for j in (0..m.cols()).filter(|&j| j != i && labels[j] == labels[i]) {
            for k in (0..m.cols()).filter(|&k| labels[k] != labels[i]) {
                total += 1;
                good += (h.level(i, j) > h.level(i, k)) as usize;
            }
        }
    }
    good as f64 / total as f64
}

fn fleet_accuracy() -> Check {
    let fleet = FleetSpec::default();
    let params = FrameParams::default();
    // calibrate on a held-out round, evaluate on round 0
    let (held_out, errs) = fleet.audio_corpus(2.0, &params, 99);
    ensure!(errs.is_empty(), "{errs:?}");
    let cal = distance_matrix(&held_out).map_err(|e| e.to_string())?;
    let threshold = calibrate_threshold(&cal, &labels(&held_out)).map_err(|e| e.to_string())?;

    let (samples, errs) = fleet.audio_corpus(2.0, &params, 0);
    ensure!(errs.is_empty() && samples.len() == 60, "{errs:?}");
    let m = distance_matrix(&samples).map_err(|e| e.to_string())?;
    ensure!(m.max_asymmetry() == Some(0.0), "matrix not symmetric");
    ensure!((0..60).all(|i| m.get(i, i) == Some(0.0)), "nonzero diagonal");
    let report = pairwise_accuracy(&m, &labels(&samples), threshold).map_err(|e| e.to_string())?;
    ensure!(report.accuracy >= 0.95, "accuracy {} at calibrated {threshold}", report.accuracy);
    let contrast = block_contrast(&m, &labels(&samples));
    ensure!(contrast >= 0.95, "heatmap block contrast {contrast}");
    Ok(())
}

fn palette_accuracy() -> Check {
    let palette = PaletteSpec::default();
    let reds: Vec<_> = palette.colors[..3].iter().map(|c| c.1 .0).collect();
    for a in &reds {
        for b in &reds {
            ensure!((0..3).all(|ch| a[ch].abs_diff(b[ch]) <= 48), "reddish bodies too far apart");
        }
    }
    let samples = palette.visual_corpus(8).map_err(|e| e.to_string())?;
    ensure!(samples.len() == 32, "corpus size {}", samples.len());
    let m = distance_matrix(&samples).map_err(|e| e.to_string())?;
    let report = pairwise_accuracy(&m, &labels(&samples), 0.2).map_err(|e| e.to_string())?;
    ensure!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
    Ok(())
}

fn sweep() -> Check {
    let rows = duration_sweep(&FleetSpec::default(), &[5.0, 2.0, 1.0], &FrameParams::default(), 100.0);
    ensure!(rows.len() == 3, "{} rows", rows.len());
    for r in &rows {
        ensure!(r.is_valid(), "{}s invalid: {:?}", r.duration, r.errors);
        let acc = r.accuracy().unwrap();
        ensure!(acc >= 0.95, "{}s accuracy {acc}", r.duration);
    }
    Ok(())
}

fn truth_tables() -> Check {
    let outcome = |f: Factor, s: FactorStatus| match (f, s) {
        (Factor::Rfid, s) => FactorOutcome { factor: f, status: s, score: None },
        (_, FactorStatus::Unavailable) => FactorOutcome::unavailable(f),
        (_, FactorStatus::Validated) => FactorOutcome::scored(f, 1.0, 2.0),
        (_, FactorStatus::Rejected) => FactorOutcome::scored(f, 3.0, 2.0),
    };
    let mut cases = 0;
    for policy in [Policy::all(), Policy::k_of_n(2), Policy::rfid_plus_any()] {
        for r in FactorStatus::ALL {
            for a in FactorStatus::ALL {
                for v in FactorStatus::ALL {
                    let ok = [r, a, v].map(|s| s == FactorStatus::Validated);
                    let want = match policy.kind {
                        PolicyKind::All => ok.iter().all(|&x| x),
                        PolicyKind::KOfN => ok.iter().filter(|&&x| x).count() >= 2,
                        PolicyKind::RfidPlusAny => ok[0] && (ok[1] || ok[2]),
                    };
                    let outcomes = [
                        outcome(Factor::Rfid, r),
                        outcome(Factor::Audio, a),
                        outcome(Factor::Visual, v),
                    ];
                    let d = decide(&outcomes, &policy).map_err(|e| e.to_string())?;
                    ensure!((d.verdict == Verdict::Accept) == want, "{policy:?} {r:?} {a:?} {v:?}");
                    cases += 1;
                }
            }
        }
    }
    ensure!(cases == 81, "{cases} cases");
    Ok(())
}

fn daemon_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = enrolled_store(dir.path());
    let gate = Gate::new(Arc::new(store), Config::default());
    let limits = Limits {
        max_connections: 4,
        max_request_bytes: 16 << 20,
    };
    let handle = server::spawn(gate, "127.0.0.1:0", limits).map_err(|e| e.to_string())?;
    let mut c = Client::connect(handle.local_addr());
    c.send(&request_json("acc-1", "TAG-0001", 150.0, RED, 11));
    c.send(&request_json("acc-2", "TAG-0001", 520.0, BLUE, 12));
    let a = json(&c.recv().ok_or("no response")?);
    let b = json(&c.recv().ok_or("no response")?);
    ensure!(a["request_id"] == "acc-1" && a["verdict"] == "accept", "first: {a}");
    ensure!(b["request_id"] == "acc-2" && b["verdict"] == "deny", "second: {b}");
    handle.shutdown();

    let live = EnrollmentStore::load(dir.path()).map_err(|e| e.to_string())?;
    let rec = live.get("car-1").map_err(|e| e.to_string())?;
    ensure!(rec.audio_refs.len() == 2, "accept did not refresh references");
    let reloaded = EnrollmentStore::load(dir.path()).map_err(|e| e.to_string())?;
    ensure!(reloaded.list() == live.list(), "reload differs");
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("spectral centroid matches a direct DFT", centroid_oracle, Duration::from_secs(1)),
        ("pure tones localize within one bin", pure_tones, Duration::from_secs(5)),
        ("Bhattacharyya closed forms", bhattacharyya_closed_forms, Duration::from_secs(1)),
        ("distance metric properties", metric_suite, Duration::from_secs(2)),
        ("default thresholds and reference tables", thresholds_and_tables, Duration::from_secs(1)),
        ("six-engine fleet accuracy and heatmap", fleet_accuracy, Duration::from_secs(60)),
        ("four-color palette accuracy", palette_accuracy, Duration::from_secs(10)),
        ("duration sweep 5/2/1 s", sweep, Duration::from_secs(90)),
        ("policy truth tables", truth_tables, Duration::from_secs(1)),
        ("daemon round trip and store reload", daemon_round_trip, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (n, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|()| {
            if took <= *budget {
                Ok(())
            } else {
                Err(format!("took {took:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(()) => println!("PASS criterion {}: {name} ({took:.2?})", n + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({took:.2?}): {e}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
