use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use magpos::amp_estimator::{build_basis, estimate_amplitudes};
use magpos::domain::{Point2, PositionFix};
use magpos::eval::{gdop_map, run_accuracy_experiment_with, ExperimentConfig, CALIBRATION_REPEATS};
use magpos::pca::{follow_steering, CanvasCalibration, PcaConfig, PcaRuntime};
use magpos::pipeline::{
    run_pipeline, simulate_calibration, PipelineConfig, PositionSource, Stationary, SteeredVisitor, StopSignal,
    Trajectory,
};
use magpos::ranging::{self, calibrate_with, observations_from_text, FitDomain};
use magpos::signal_sim::{saturation_flag, synthesize_record};
use magpos::{geometry, wire};

use crate::args::{CalibrateArgs, Domain, EvalArgs, PcaArgs, ReplayArgs, RunArgs, SimulateArgs};
use crate::settings::{self, config_err, runtime_err, CliError, RunConfig};

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => settings::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn simulate(args: &SimulateArgs, config: &RunConfig) -> Result<(), CliError> {
    let scenario = settings::scenario(&args.scenario, config)?;
    let position = args.position.as_deref().map(settings::parse_point).transpose()?.unwrap_or_else(settings::default_position);
    if !args.t0.is_finite() {
        return Err(config_err("t0 must be finite"));
    }
    let record = synthesize_record(&scenario, &position, args.t0).map_err(config_err)?;
    let adc = &scenario.adc;
    let basis = build_basis(&scenario.anchor_set.frequencies(), adc.sample_rate, adc.record_length).map_err(config_err)?;
    let estimate = estimate_amplitudes(&record, &basis, &scenario.anchor_set.ids()).map_err(runtime_err)?;

    let mut text = String::new();
    let _ = writeln!(text, "# position {:.6} {:.6}", position.x, position.y);
    let _ = writeln!(text, "# timestamp {}", record.timestamp);
    let _ = writeln!(text, "# sample_rate {}", record.sample_rate);
    let bits = record.adc_bits.map_or("none".to_string(), |b| b.to_string());
    let _ = writeln!(text, "# adc_bits {bits}");
    let _ = writeln!(text, "# full_scale {}", record.full_scale);
    let _ = writeln!(text, "# saturated {}", saturation_flag(&record));
    for (id, v) in &estimate.per_anchor {
        let _ = writeln!(text, "# amplitude {id} {v:.9}");
    }
    for s in &record.samples {
        let _ = writeln!(text, "{s:.9}");
    }
    emit(args.out.as_ref(), &text)
}

pub fn calibrate(args: &CalibrateArgs, config: &RunConfig) -> Result<(), CliError> {
    let scenario = settings::scenario(&args.scenario, config)?;
    let observations = match &args.observations {
        Some(path) => observations_from_text(&settings::read(path)?)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?,
        None => {
            let survey = settings::survey();
            let points: Vec<Point2> = survey.calibration.iter().map(|p| scenario.anchor_set.project(&p.position)).collect();
            let repeats = args.repeats.or(config.repeats).unwrap_or(CALIBRATION_REPEATS);
            if repeats == 0 {
                return Err(config_err("repeats must be positive"));
            }
            simulate_calibration(&scenario, &points, repeats, 0.5).map_err(runtime_err)?
        }
    };
    if let Some(path) = &args.save_observations {
        settings::write(path, &ranging::observations_to_text(&observations))?;
    }
    let domain = match args.domain {
        Domain::Loglog => FitDomain::LogLog,
        Domain::Linear => FitDomain::Linear,
    };
    let result = calibrate_with(&observations, domain).map_err(runtime_err)?;
    emit(args.out.as_ref(), &result.to_text())
}

fn fix_line(fix: &PositionFix) -> String {
    format!("{:.3} {:.6} {:.6}\n", fix.timestamp, fix.x, fix.y)
}

pub fn run(args: &RunArgs, config: &RunConfig) -> Result<(), CliError> {
    let scenario = settings::scenario(&args.scenario, config)?;
    let calibration_path = args.calibration.as_ref().or(config.calibration.as_ref());
    let trajectory = args.trajectory.clone().or_else(|| config.trajectory.clone());
    let duration = args.duration.or(config.duration).unwrap_or(10.0);
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(config_err("duration must be a non-negative number of seconds"));
    }
    let endpoint = if args.offline {
        None
    } else {
        Some(args.endpoint.clone().or_else(|| config.endpoint.clone()).unwrap_or_else(|| settings::DEFAULT_ENDPOINT.into()))
    };

    let set = &scenario.anchor_set;
    let polygon = set.polygon();
    let lo = polygon.iter().fold(Point2::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = polygon.iter().fold(Point2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let mut live = None;
    let source: Arc<dyn PositionSource> = match trajectory.as_deref() {
        Some("live") => {
            let visitor = Arc::new(SteeredVisitor::new(geometry::centroid(&polygon), (lo, hi)));
            let bridge = args.bridge.clone().or_else(|| config.bridge.clone()).unwrap_or_else(|| settings::DEFAULT_BRIDGE.into());
            let url = if bridge.starts_with("ws://") { bridge } else { format!("ws://{bridge}/") };
            live = Some((url, visitor.clone()));
            visitor
        }
        Some(path) => {
            let path = PathBuf::from(path);
            let t = Trajectory::parse(&settings::read(&path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Arc::new(t)
        }
        None => {
            let p = args.position.as_deref().map(settings::parse_point).transpose()?.unwrap_or_else(settings::default_position);
            Arc::new(Stationary(p))
        }
    };
    let mut recorder = match &args.record {
        Some(path) => Some(fs::File::create(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?),
        None => None,
    };

    let calibration = settings::calibration(calibration_path, &scenario)?;
    let mut pipeline = PipelineConfig::new(scenario, calibration);
    if let Some(period) = args.period.or(config.period) {
        pipeline.update_period = period;
    }
    pipeline.stream_endpoint = endpoint;
    pipeline.validate().map_err(config_err)?;

    let stop = StopSignal::new();
    let follower = live.map(|(url, visitor)| follow_steering(url, visitor, stop.clone()));
    let handle = run_pipeline(pipeline, source, stop.clone()).map_err(runtime_err)?;
    let deadline = (duration > 0.0).then(|| Instant::now() + Duration::from_secs_f64(duration));
    let stdout = std::io::stdout();
    let mut handle_fix = |fix: &PositionFix| -> Result<(), CliError> {
        let line = fix_line(fix);
        if args.print {
            let _ = stdout.lock().write_all(line.as_bytes());
        }
        if let Some(file) = recorder.as_mut() {
            file.write_all(line.as_bytes()).map_err(runtime_err)?;
        }
        Ok(())
    };
    loop {
        let wait = match deadline {
            Some(d) => match d.checked_duration_since(Instant::now()) {
                Some(left) => left,
                None => break,
            },
            None => Duration::from_secs(3600),
        };
        match handle.fixes.recv_timeout(wait) {
            Ok(fix) => handle_fix(&fix)?,
            Err(crossbeam_timeout) if crossbeam_timeout.is_timeout() => continue,
            Err(_) => break,
        }
    }
    stop.raise();
    let fixes = handle.fixes.clone();
    let stats = handle.join();
    for fix in fixes.try_iter() {
        handle_fix(&fix)?;
    }
    if let Some(f) = follower {
        let _ = f.join();
    }

    let s = stats.snapshot();
    let p95 = stats.latency_percentile(95.0).map_or(0.0, |d| d.as_secs_f64() * 1e3);
    println!("fixes {}", s.fixes);
    println!("errors {}", s.errors);
    println!("sent {}", s.sent);
    println!("dropped {}", s.dropped);
    println!("reconnects {}", s.reconnects);
    println!("latency_p95_ms {p95:.3}");
    Ok(())
}

pub fn pca(args: &PcaArgs, config: &RunConfig) -> Result<(), CliError> {
    let (w, h) = match args.canvas.as_deref().or(config.canvas.as_deref()) {
        Some(text) => settings::parse_canvas(text)?,
        None => settings::DEFAULT_CANVAS,
    };
    let set = magpos::AnchorSet::surveyed(magpos::signal_sim::DEFAULT_CONSTANTS);
    let canvas = match args.calibration.as_ref().or(config.canvas_calibration.as_ref()) {
        Some(path) => {
            let mut cal = CanvasCalibration::from_text(&settings::read(path)?)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if args.canvas.is_some() || config.canvas.is_some() {
                cal.width = w;
                cal.height = h;
            }
            cal
        }
        None => {
            let polygon = set.polygon();
            let lo = polygon.iter().fold(Point2::repeat(f64::INFINITY), |a, p| a.inf(p));
            let hi = polygon.iter().fold(Point2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
            CanvasCalibration::new(lo.x, hi.x, lo.y, hi.y, w, h).map_err(config_err)?
        }
    };
    if args.click_count == 0 {
        return Err(config_err("click count must be positive"));
    }
    let duration = args.duration.or(config.duration).unwrap_or(0.0);
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(config_err("duration must be a non-negative number of seconds"));
    }
    let bridge = if args.no_bridge {
        None
    } else {
        Some(args.bridge.clone().or_else(|| config.bridge.clone()).unwrap_or_else(|| settings::DEFAULT_BRIDGE.into()))
    };
    let pca_config = PcaConfig {
        listen: args.listen.clone().or_else(|| config.listen.clone()).unwrap_or_else(|| settings::DEFAULT_ENDPOINT.into()),
        canvas,
        click_count: args.click_count,
        bridge,
        anchors: Some(set),
    };
    let runtime = PcaRuntime::start(pca_config).map_err(|e| runtime_err(format!("cannot start: {e}")))?;
    eprintln!("position receiver on {}", runtime.listen_addr());
    if let Some(addr) = runtime.bridge_addr() {
        eprintln!("ui bridge on ws://{addr}/");
    }

    let started = Instant::now();
    let mut last_version = 0;
    while duration == 0.0 || started.elapsed().as_secs_f64() < duration {
        thread::sleep(Duration::from_millis(200));
        let version = runtime.state_version();
        if version != last_version {
            last_version = version;
            let s = runtime.state();
            log::info!("app {} cursor {:?} dwell {}/{}", s.app_id, s.cursor, s.dwell, s.click_count);
        }
    }
    let counts = runtime.receiver_counts();
    let state = runtime.shutdown();
    if let Some(path) = &args.save_calibration {
        if state.canvas != canvas {
            settings::write(path, &state.canvas.to_text())?;
        }
    }
    println!("app {}", state.app_id);
    println!("received {}", counts.received);
    println!("malformed {}", counts.malformed);
    println!("connections {}", counts.connections);
    println!("evictions {}", state.evictions);
    Ok(())
}

pub fn eval(args: &EvalArgs, config: &RunConfig) -> Result<(), CliError> {
    let scenario = settings::scenario(&args.scenario, config)?;
    let mut experiment = ExperimentConfig::default();
    if let Some(r) = args.repeats.or(config.repeats) {
        experiment.repeats = r;
    }
    if let Some(t) = args.threshold.or(config.threshold) {
        experiment.border_threshold = t;
    }
    if experiment.repeats == 0 {
        return Err(config_err("repeats must be positive"));
    }
    if !(experiment.border_threshold.is_finite() && experiment.border_threshold >= 0.0) {
        return Err(config_err("threshold must be a non-negative distance"));
    }
    if !(args.gdop_resolution.is_finite() && args.gdop_resolution > 0.0) {
        return Err(config_err("gdop resolution must be positive"));
    }
    let out = args.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("report"));

    let report = run_accuracy_experiment_with(&scenario, &settings::survey(), &experiment).map_err(runtime_err)?;
    let grid = gdop_map(&scenario.anchor_set, args.gdop_resolution).map_err(runtime_err)?;
    fs::create_dir_all(&out).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    let summary = report.summary();
    settings::write(&out.join("errors.csv"), &report.errors_csv())?;
    settings::write(&out.join("cdf.csv"), &report.cdf_csv())?;
    settings::write(&out.join("gdop.csv"), &grid.to_csv())?;
    settings::write(&out.join("calibration.txt"), &report.calibration.to_text())?;
    settings::write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn connect(endpoint: &str) -> Option<TcpStream> {
    let addrs = endpoint.to_socket_addrs().ok()?;
    addrs.into_iter().find_map(|a| TcpStream::connect_timeout(&a, Duration::from_millis(500)).ok())
}

pub fn replay(args: &ReplayArgs, config: &RunConfig) -> Result<(), CliError> {
    let trajectory =
        Trajectory::parse(&settings::read(&args.file)?).map_err(|e| config_err(format!("{}: {e}", args.file.display())))?;
    if !(args.speed.is_finite() && args.speed > 0.0) {
        return Err(config_err("speed must be positive"));
    }
    let endpoint = args.endpoint.clone().or_else(|| config.endpoint.clone()).unwrap_or_else(|| settings::DEFAULT_ENDPOINT.into());
    let mut stream = connect(&endpoint).ok_or_else(|| runtime_err(format!("cannot reach {endpoint}")))?;
    let rows = trajectory.waypoints();
    let t_start = rows[0].0;
    let started = Instant::now();
    let (mut sent, mut dropped) = (0u64, 0u64);
    for (t, p) in rows {
        let due = started + Duration::from_secs_f64((t - t_start) / args.speed);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        let line = wire::format_position(p.x, p.y).ok_or_else(|| config_err("non-finite position"))?;
        if stream.write_all(line.as_bytes()).is_ok() {
            sent += 1;
            continue;
        }
        match connect(&endpoint) {
            Some(s) if (&s).write_all(line.as_bytes()).is_ok() => {
                stream = s;
                sent += 1;
            }
            _ => dropped += 1,
        }
    }
    println!("sent {sent}");
    println!("dropped {dropped}");
    Ok(())
}
