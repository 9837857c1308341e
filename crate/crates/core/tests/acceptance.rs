//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::Write as _;
use std::net::TcpListener;
use std::net::TcpStream;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use magpos::amp_estimator::{build_basis, estimate_amplitudes};
use magpos::domain::TONE_FREQUENCIES;
use magpos::eval::{calibrate_from_survey, classify_border_points, run_accuracy_experiment, BORDER_THRESHOLD};
use magpos::pca::{generate_events, map_to_canvas, CanvasCalibration, EventKind, PcaConfig, PcaRuntime, Pixel};
use magpos::pipeline::{run_pipeline, PipelineConfig, PositionSource, StopSignal};
use magpos::ranging::{calibrate, CalibrationObservation};
use magpos::signal_sim::{SimScenario, DEFAULT_CONSTANTS};
use magpos::trilateration::{jacobian, solve, SolverConfig};
use magpos::{load_survey_table, AnchorId, AnchorSet, DistanceEstimate, Point2, SampleRecord};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const FS: f64 = 200_000.0;
const M: usize = 300;

fn ids() -> Vec<AnchorId> {
    ['A', 'B', 'C', 'D'].into_iter().map(AnchorId).collect()
}

fn tones(amplitudes: &[f64], phases: &[f64], dc: f64) -> Vec<f64> {
    (0..M)
        .map(|n| {
            let t = n as f64 / FS;
            dc + amplitudes
                .iter()
                .zip(phases)
                .zip(TONE_FREQUENCIES)
                .map(|((a, p), f)| a * (2.0 * std::f64::consts::PI * f * t + p).cos())
                .sum::<f64>()
        })
        .collect()
}

fn record(samples: Vec<f64>) -> SampleRecord {
    SampleRecord { samples, sample_rate: FS, adc_bits: None, full_scale: 5.0, timestamp: 0.0 }
}

fn exact_chain() -> Outcome {
    let started = Instant::now();
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let report = run_accuracy_experiment(&SimScenario::exact(), 10, &survey).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let mean = report.mean_all.ok_or("no successful fixes")?;
    check(
        mean < 1e-3 && report.failed_trials == 0 && elapsed < Duration::from_secs(10),
        format!(
            "mean {mean:.2e} m over {} points, {} failed trials, {:.2} s",
            report.points.len(),
            report.failed_trials,
            elapsed.as_secs_f64()
        ),
    )
}

fn sinefit_exactness() -> Outcome {
    let started = Instant::now();
    let basis = build_basis(&TONE_FREQUENCIES, FS, M).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let amps: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..0.6)).collect();
        let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let dc = rng.random_range(-0.1..0.1);
        let est = estimate_amplitudes(&record(tones(&amps, &phases, dc)), &basis, &ids()).map_err(|e| e.to_string())?;
        for (id, a) in ids().iter().zip(&amps) {
            worst = worst.max((est.per_anchor[id] - a).abs() / a);
        }
    }
    let elapsed = started.elapsed();
    check(
        worst < 1e-9 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn sinefit_statistics() -> Outcome {
    let basis = build_basis(&TONE_FREQUENCIES, FS, M).map_err(|e| e.to_string())?;
    let amps = [0.8, 0.5, 0.3, 0.2];
    let sigma = 0.01 * 0.2;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let mut sums = [0.0; 4];
    let mut sq = [0.0; 4];
    for _ in 0..n {
        let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let mut samples = tones(&amps, &phases, 0.0);
        for s in &mut samples {
            *s += noise.sample(&mut rng);
        }
        let est = estimate_amplitudes(&record(samples), &basis, &ids()).map_err(|e| e.to_string())?;
        for (k, id) in ids().iter().enumerate() {
            let v = est.per_anchor[id];
            sums[k] += v;
            sq[k] += v * v;
        }
    }
    let mut worst = 0.0f64;
    for k in 0..4 {
        let mean = sums[k] / n as f64;
        let var = (sq[k] / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
        let sem = (var / n as f64).sqrt();
        worst = worst.max((mean - amps[k]).abs() / sem);
    }
    check(worst < 3.0, format!("largest |bias| = {worst:.2} standard errors over {n} records"))
}

fn calibration_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let distances = [0.4, 0.7, 1.1, 1.9, 2.8, 4.2];
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let alpha = rng.random_range(0.5..5.0);
        let beta = rng.random_range(2.0..4.0);
        let obs: Vec<CalibrationObservation> = distances
            .iter()
            .map(|&d| CalibrationObservation {
                anchor_id: AnchorId('A'),
                known_distance: d,
                measured_amplitude: alpha * d.powf(-beta),
            })
            .collect();
        let fit = calibrate(&obs).map_err(|e| e.to_string())?;
        let f = fit.get(AnchorId('A')).ok_or("anchor missing")?;
        worst = worst.max(((f.alpha - alpha) / alpha).abs()).max(((f.beta - beta) / beta).abs());
    }
    let scenario = SimScenario::free_space();
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let fit = calibrate_from_survey(&scenario, &survey, 1).map_err(|e| e.to_string())?;
    let beta_dev = fit.per_anchor.values().map(|f| (f.beta - 3.0).abs()).fold(0.0, f64::max);
    check(
        worst < 1e-9 && beta_dev < 1e-9,
        format!("max relative error {worst:.2e} over 200 draws; free-space |beta - 3| = {beta_dev:.2e}"),
    )
}

fn trilateration_oracle() -> Outcome {
    let set = AnchorSet::surveyed(DEFAULT_CONSTANTS);
    let anchors: Vec<Point2> = set.polygon();
    let lo = anchors.iter().fold(Point2::repeat(f64::INFINITY), |a, p| a.inf(p)) - Point2::repeat(0.1);
    let hi = anchors.iter().fold(Point2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p)) + Point2::repeat(0.1);
    let step = 1e-3;
    let nx = ((hi.x - lo.x) / step) as usize + 1;
    let ny = ((hi.y - lo.y) / step) as usize + 1;
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let truth = Point2::new(rng.random_range(0.3..2.4), rng.random_range(0.3..4.4));
        let ranges: Vec<f64> = anchors.iter().map(|a| (truth - a).norm() + noise.sample(&mut rng)).collect();
        let d = DistanceEstimate::from_pairs(set.ids().into_iter().zip(ranges.iter().copied())).map_err(|e| e.to_string())?;
        let fix = solve(&d, &set, &SolverConfig::default(), None).map_err(|e| e.to_string())?;
        let (best, _) = (0..ny)
            .into_par_iter()
            .map(|iy| {
                let y = lo.y + iy as f64 * step;
                let mut best = (Point2::zeros(), f64::INFINITY);
                for ix in 0..nx {
                    let x = lo.x + ix as f64 * step;
                    let cost: f64 = anchors
                        .iter()
                        .zip(&ranges)
                        .map(|(a, r)| {
                            let e = ((x - a.x).powi(2) + (y - a.y).powi(2)).sqrt() - r;
                            e * e
                        })
                        .sum();
                    if cost < best.1 {
                        best = (Point2::new(x, y), cost);
                    }
                }
                best
            })
            .reduce(|| (Point2::zeros(), f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        worst = worst.max((fix.position() - best).norm());
    }

    let mut jac_err = 0.0f64;
    let h = 1e-6;
    for _ in 0..20 {
        let p = Point2::new(rng.random_range(-0.5..3.2), rng.random_range(-0.5..5.2));
        let j = jacobian(&p, &set).map_err(|e| e.to_string())?;
        for (i, a) in anchors.iter().enumerate() {
            for k in 0..2 {
                let mut dp = Point2::zeros();
                dp[k] = h;
                let fd = ((p + dp - a).norm() - (p - dp - a).norm()) / (2.0 * h);
                jac_err = jac_err.max((fd - j[(i, k)]).abs());
            }
        }
    }
    check(
        worst < 2e-3 && jac_err < 1e-5,
        format!("max solver-to-grid distance {:.2} mm; max Jacobian error {jac_err:.2e}", worst * 1e3),
    )
}

fn accuracy_structure() -> Outcome {
    let started = Instant::now();
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let report = run_accuracy_experiment(&SimScenario::paper_like(0), 10, &survey).map_err(|e| e.to_string())?;
    let interior = report.mean_interior.ok_or("no interior fixes")?;
    let border = report.mean_border.ok_or("no border fixes")?;
    let cdf = report.cdf_at(0.25, true);
    let elapsed = started.elapsed();
    check(
        (0.08..=0.16).contains(&interior) && cdf >= 0.85 && border > interior && elapsed < Duration::from_secs(120),
        format!(
            "interior mean {:.1} cm, border mean {:.1} cm, all {:.1} cm, interior CDF(25 cm) {:.3}, {:.2} s",
            interior * 100.0,
            border * 100.0,
            report.mean_all.unwrap_or(f64::NAN) * 100.0,
            cdf,
            elapsed.as_secs_f64()
        ),
    )
}

fn border_classification() -> Outcome {
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let set = AnchorSet::surveyed(DEFAULT_CONSTANTS);
    let border = classify_border_points(&survey, &set, BORDER_THRESHOLD);
    let names: Vec<&str> = border.iter().map(String::as_str).collect();
    check(border.len() == 6, format!("{} border points: {}", border.len(), names.join(" ")))
}

fn closed_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn rate_requirement() -> Outcome {
    let scenario = SimScenario::paper_like(0);
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let calibration = calibrate_from_survey(&scenario, &survey, 10).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::new(scenario, calibration);
    config.stream_endpoint = Some(closed_port());
    let stop = StopSignal::new();
    let source = Arc::new(|t: f64| Point2::new(1.0 + 0.05 * (t * 0.3).sin(), 2.3 + 0.5 * (t * 0.2).sin()));
    let handle = run_pipeline(config, source, stop.clone()).map_err(|e| e.to_string())?;
    thread::sleep(Duration::from_secs(10));
    stop.raise();
    let stats = handle.join();
    let s = stats.snapshot();
    let p95 = stats.latency_percentile(95.0).ok_or("no cycles")?;
    check(
        s.fixes >= 19 && p95 < Duration::from_millis(100),
        format!("{} fixes in 10 s, {} errors, p95 cycle time {:.2} ms", s.fixes, s.errors, p95.as_secs_f64() * 1e3),
    )
}

fn wait_for(timeout: Duration, cond: impl Fn() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        thread::sleep(Duration::from_millis(2));
    }
    cond()
}

fn event_contract() -> Outcome {
    use EventKind::*;
    let p = Pixel::new(100, 200);
    let kinds = |events: &[magpos::pca::AppEvent]| events.iter().map(|e| e.kind).collect::<Vec<_>>();
    let five = generate_events([p; 5], 5);
    let ex1 = kinds(&five) == [UserMoved, UserMoved, UserMoved, UserMoved, UserMoved, UserClicked]
        && five[5].canvas_position == p
        && five.iter().enumerate().all(|(i, e)| e.sequence_number == i as u64);
    let ex2 = kinds(&generate_events([p, p, p, p, Pixel::new(101, 200)], 5)) == [UserMoved; 5];
    let ten = kinds(&generate_events([p; 10], 5));
    let mut expected = vec![UserMoved; 5];
    expected.push(UserClicked);
    expected.extend([UserMoved; 5]);
    expected.push(UserClicked);
    let ex3 = ten == expected;

    let cal = CanvasCalibration::new(0.0, 2.678, 0.0, 4.694, 1280, 720).map_err(|e| e.to_string())?;
    let mapping = map_to_canvas(&Point2::new(0.0, 0.0), &cal).pixel == Pixel::new(0, 0)
        && map_to_canvas(&Point2::new(2.678, 4.694), &cal).pixel == Pixel::new(1280, 720)
        && map_to_canvas(&Point2::new(1.339, 0.0), &cal).pixel.x == 640;

    let mut pca = PcaConfig::new(cal);
    pca.listen = "127.0.0.1:0".into();
    let runtime = PcaRuntime::start(pca).map_err(|e| e.to_string())?;
    let mut client = TcpStream::connect(runtime.listen_addr()).map_err(|e| e.to_string())?;
    client.write_all(b"POS 1.000000 2.000000\nPOS 1.100000 2.000000\n").map_err(|e| e.to_string())?;
    if !wait_for(Duration::from_secs(5), || runtime.state().sequence == Some(1)) {
        return Err("valid positions never reached the environment".into());
    }
    let before = runtime.state();
    let version = runtime.state_version();
    let counts = runtime.receiver_counts();
    let mut flood = Vec::new();
    for i in 0..10_000 {
        let line = match i % 5 {
            0 => "garbage\n".to_string(),
            1 => "POS 1.0 2.0\n".to_string(),
            2 => format!("POS {i}.000000\n"),
            3 => "pos 1.000000 2.000000\n".to_string(),
            _ => "POS 1.000000 2.000000 3.000000\n".to_string(),
        };
        flood.extend_from_slice(line.as_bytes());
    }
    client.write_all(&flood).map_err(|e| e.to_string())?;
    let flooded = wait_for(Duration::from_secs(10), || runtime.receiver_counts().malformed == 10_000);
    thread::sleep(Duration::from_millis(50));
    let after_counts = runtime.receiver_counts();
    let unchanged = runtime.state() == before
        && runtime.state_version() == version
        && after_counts.received == counts.received
        && after_counts.connections == counts.connections;
    runtime.shutdown();
    check(
        ex1 && ex2 && ex3 && mapping && flooded && unchanged,
        format!(
            "examples {ex1}/{ex2}/{ex3}, mapping endpoints {mapping}, flood counted {} malformed, state unchanged {unchanged}",
            after_counts.malformed
        ),
    )
}

fn protocol_robustness() -> Outcome {
    let scenario = SimScenario::exact();
    let survey = load_survey_table().map_err(|e| e.to_string())?;
    let calibration = calibrate_from_survey(&scenario, &survey, 1).map_err(|e| e.to_string())?;
    let cal = CanvasCalibration::new(0.0, 2.678, 0.0, 4.694, 1280, 720).map_err(|e| e.to_string())?;

    let mut pca = PcaConfig::new(cal);
    pca.listen = "127.0.0.1:0".into();
    let runtime = PcaRuntime::start(pca.clone()).map_err(|e| e.to_string())?;
    let addr = runtime.listen_addr();
    pca.listen = addr.to_string();

    let mut config = PipelineConfig::new(scenario, calibration);
    let period = config.update_period;
    config.stream_endpoint = Some(addr.to_string());
    // x advances 1 cm per cycle so a received fix identifies its cycle
    let source: Arc<dyn PositionSource> = Arc::new(move |t: f64| Point2::new(0.8 + 0.01 * (t / period), 2.3));
    let cycle_of = move |x: f64| ((x - 0.8) / 0.01).round() as i64;
    let stop = StopSignal::new();
    let handle = run_pipeline(config, source, stop.clone()).map_err(|e| e.to_string())?;

    let mut timestamps = Vec::new();
    let result = (|| {
        if !wait_for(Duration::from_secs(5), || runtime.receiver_counts().received >= 3) {
            return Err("no fixes reached the first server".to_string());
        }
        runtime.shutdown();
        thread::sleep(Duration::from_secs_f64(2.2 * period));
        timestamps.extend(handle.fixes.try_iter().map(|f| f.timestamp));
        let last_before = timestamps.last().copied().ok_or("no fixes before restart")?;
        let restarted = PcaRuntime::start(pca).map_err(|e| format!("restart failed: {e}"))?;
        let restarted_at = Instant::now();
        let resumed = wait_for(Duration::from_secs_f64(6.0 * period), || restarted.state().physical.is_some());
        let delay = restarted_at.elapsed();
        let first_x = restarted.state().physical.map(|p| p[0]);
        restarted.shutdown();
        let first_cycle_after = (last_before / period).round() as i64 + 1;
        let cycles = first_x.map(|x| cycle_of(x) - first_cycle_after + 1);
        Ok((resumed, cycles, delay))
    })();
    stop.raise();
    let fixes = handle.fixes.clone();
    let stats = handle.join();
    timestamps.extend(fixes.try_iter().map(|f| f.timestamp));
    let (resumed, cycles, delay) = result?;
    let s = stats.snapshot();
    let uninterrupted = s.errors == 0 && timestamps.windows(2).all(|w| ((w[1] - w[0]) - period).abs() < 1e-9);
    let within = cycles.is_some_and(|c| (1..=2).contains(&c));
    check(
        resumed && within && uninterrupted,
        format!(
            "resumed with fix {} cycle(s) after restart ({:.0} ms); {} fixes, {} sent, {} dropped, no gaps {uninterrupted}",
            cycles.map_or("none".to_string(), |c| c.to_string()),
            delay.as_secs_f64() * 1e3,
            s.fixes,
            s.sent,
            s.dropped
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exact-chain consistency", exact_chain),
        ("sinefit exactness", sinefit_exactness),
        ("sinefit statistical sanity", sinefit_statistics),
        ("calibration recovery", calibration_recovery),
        ("trilateration oracle equivalence", trilateration_oracle),
        ("noisy-preset accuracy structure", accuracy_structure),
        ("border classification", border_classification),
        ("rate requirement", rate_requirement),
        ("event contract", event_contract),
        ("protocol robustness", protocol_robustness),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
