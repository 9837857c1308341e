//! Real-time measurement loop.
//!
//! Every update period the loop asks the [`PositionSource`] where the
//! visitor is, synthesizes the ADC record, runs the estimation chain and
//! emits a [`PositionFix`]. Fixes go to the caller over an unbounded channel
//! and to the position receiver through a bounded latest-wins queue drained
//! by a separate sender thread, so a slow or absent receiver never stalls
//! the loop.

mod chain;
mod source;
mod stream;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{self, Receiver};
use thiserror::Error;

pub use chain::{simulate_calibration, ChainError, Measurement, PositionEstimator};
pub use source::{PositionSource, Stationary, SteeredVisitor, Steering, Trajectory, TrajectoryError, WALKING_SPEED};
pub use stream::{stream_fix, SEND_BUFFER};

use crate::domain::PositionFix;
use crate::ranging::CalibrationResult;
use crate::signal_sim::{self, SimScenario};
use crate::trilateration::SolverConfig;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("update period {0} s must be in (0, 1]")]
    InvalidPeriod(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Seconds between fixes; at most one second.
    pub update_period: f64,
    pub scenario: SimScenario,
    pub calibration: CalibrationResult,
    pub solver: SolverConfig,
    /// `host:port` of the position receiver; `None` runs offline.
    pub stream_endpoint: Option<String>,
}

impl PipelineConfig {
    pub const DEFAULT_PERIOD: f64 = 0.5;

    pub fn new(scenario: SimScenario, calibration: CalibrationResult) -> Self {
        PipelineConfig {
            update_period: Self::DEFAULT_PERIOD,
            scenario,
            calibration,
            solver: SolverConfig::default(),
            stream_endpoint: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.update_period > 0.0 && self.update_period <= 1.0) {
            return Err(PipelineError::InvalidPeriod(self.update_period));
        }
        self.scenario.validate().map_err(ChainError::from)?;
        Ok(())
    }

    pub fn estimator(&self) -> Result<PositionEstimator, ChainError> {
        PositionEstimator::new(
            &self.scenario.anchor_set,
            &self.scenario.adc,
            self.calibration.clone(),
            self.solver,
        )
    }
}

/// Cooperative stop flag shared between the caller and the pipeline threads.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<(Mutex<bool>, Condvar)>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raise(&self) {
        let (flag, cv) = &*self.0;
        *flag.lock().expect("stop lock") = true;
        cv.notify_all();
    }

    pub fn is_raised(&self) -> bool {
        *self.0 .0.lock().expect("stop lock")
    }

    /// Sleeps until `deadline` or until raised. Returns true if raised.
    pub fn wait_until(&self, deadline: Instant) -> bool {
        let (flag, cv) = &*self.0;
        let mut raised = flag.lock().expect("stop lock");
        while !*raised {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            raised = cv.wait_timeout(raised, deadline - now).expect("stop lock").0;
        }
        *raised
    }
}

#[derive(Debug, Default)]
pub struct PipelineStats {
    pub fixes: AtomicU64,
    pub errors: AtomicU64,
    pub sent: AtomicU64,
    pub dropped: AtomicU64,
    pub reconnects: AtomicU64,
    latencies: Mutex<Vec<Duration>>,
}

impl PipelineStats {
    fn record_latency(&self, d: Duration) {
        self.latencies.lock().expect("stats lock").push(d);
    }

    /// Per-cycle compute times (synthesize, estimate, solve).
    pub fn latencies(&self) -> Vec<Duration> {
        self.latencies.lock().expect("stats lock").clone()
    }

    /// Nearest-rank percentile of the cycle compute time.
    pub fn latency_percentile(&self, p: f64) -> Option<Duration> {
        let mut l = self.latencies();
        if l.is_empty() {
            return None;
        }
        l.sort_unstable();
        let rank = ((p / 100.0) * l.len() as f64).ceil().max(1.0) as usize;
        Some(l[rank.min(l.len()) - 1])
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            fixes: self.fixes.load(Ordering::Relaxed),
            errors: self.errors.load(Ordering::Relaxed),
            sent: self.sent.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
            reconnects: self.reconnects.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub fixes: u64,
    pub errors: u64,
    pub sent: u64,
    pub dropped: u64,
    pub reconnects: u64,
}

pub struct PipelineHandle {
    pub fixes: Receiver<PositionFix>,
    pub stats: Arc<PipelineStats>,
    loop_thread: JoinHandle<()>,
    sender_thread: Option<JoinHandle<()>>,
}

impl PipelineHandle {
    /// Waits for both threads; call after raising the stop signal.
    pub fn join(self) -> Arc<PipelineStats> {
        let _ = self.loop_thread.join();
        if let Some(sender) = self.sender_thread {
            let _ = sender.join();
        }
        self.stats
    }
}

/// Starts the measurement loop. The first fix is produced immediately, then
/// one every `update_period` until `stop` is raised.
pub fn run_pipeline(
    config: PipelineConfig,
    position_source: Arc<dyn PositionSource>,
    stop: StopSignal,
) -> Result<PipelineHandle, PipelineError> {
    config.validate()?;
    let estimator = config.estimator()?;
    let stats = Arc::new(PipelineStats::default());
    let period = Duration::from_secs_f64(config.update_period);
    let (fix_tx, fixes) = channel::unbounded();

    let (queue, sender_thread) = match config.stream_endpoint.clone() {
        Some(endpoint) => {
            let (queue, rx) = stream::FixQueue::new(stats.clone());
            let handle = stream::spawn_sender(rx, endpoint, period, stats.clone());
            (Some(queue), Some(handle))
        }
        None => (None, None),
    };

    let loop_stats = stats.clone();
    let scenario = config.scenario;
    let loop_thread = thread::Builder::new()
        .name("pipeline".into())
        .spawn(move || {
            let start = Instant::now();
            let mut cycle: u32 = 0;
            while !stop.wait_until(start + period * cycle) {
                let t = config.update_period * f64::from(cycle);
                cycle += 1;
                let began = Instant::now();
                let position = position_source.position_at(t);
                let result = signal_sim::synthesize_record(&scenario, &position, t)
                    .map_err(ChainError::from)
                    .and_then(|record| estimator.fix(&record));
                loop_stats.record_latency(began.elapsed());
                match result {
                    Ok(fix) => {
                        loop_stats.fixes.fetch_add(1, Ordering::Relaxed);
                        if let Some(queue) = &queue {
                            queue.push(fix);
                        }
                        let _ = fix_tx.send(fix);
                    }
                    Err(e) => {
                        log::warn!("cycle at t={t:.3}s skipped: {e}");
                        loop_stats.errors.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            // dropping the queue lets the sender thread drain and exit
        })
        .expect("spawn pipeline thread");

    Ok(PipelineHandle { fixes, stats, loop_thread, sender_thread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{load_survey_table, Point2};
    use crate::ranging;

    fn exact_config() -> PipelineConfig {
        let scenario = SimScenario::exact();
        let points: Vec<Point2> = load_survey_table().unwrap().calibration.iter().map(|p| p.position.xy()).collect();
        let obs = simulate_calibration(&scenario, &points, 1, 0.5).unwrap();
        PipelineConfig::new(scenario, ranging::calibrate(&obs).unwrap())
    }

    #[test]
    fn rejects_slow_update_period() {
        let mut config = exact_config();
        config.update_period = 1.5;
        assert!(matches!(
            run_pipeline(config, Arc::new(Stationary(Point2::new(1.0, 1.0))), StopSignal::new()),
            Err(PipelineError::InvalidPeriod(_))
        ));
    }

    #[test]
    fn static_source_gives_exact_fixes() {
        let mut config = exact_config();
        config.update_period = 0.05;
        let stop = StopSignal::new();
        let c5 = Point2::new(1.367, 2.360);
        let handle = run_pipeline(config, Arc::new(Stationary(c5)), stop.clone()).unwrap();
        let fixes: Vec<_> = handle.fixes.iter().take(5).collect();
        stop.raise();
        handle.join();
        assert_eq!(fixes.len(), 5);
        for w in fixes.windows(2) {
            assert!(w[1].timestamp > w[0].timestamp);
        }
        for f in &fixes {
            assert!((f.position() - c5).norm() < 1e-3);
        }
    }

    #[test]
    fn stop_terminates_within_one_period() {
        let config = exact_config();
        let stop = StopSignal::new();
        let handle = run_pipeline(config, Arc::new(Stationary(Point2::new(1.0, 1.0))), stop.clone()).unwrap();
        handle.fixes.recv().unwrap();
        thread::sleep(Duration::from_millis(120));
        let raised_at = Instant::now();
        stop.raise();
        handle.join();
        assert!(raised_at.elapsed() < Duration::from_secs_f64(PipelineConfig::DEFAULT_PERIOD));
    }

    #[test]
    fn failing_cycles_are_counted() {
        let mut config = exact_config();
        config.update_period = 0.02;
        let stop = StopSignal::new();
        // on anchor A every other cycle
        let source = |t: f64| {
            if ((t / 0.02).round() as i64) % 2 == 0 {
                Point2::new(0.0, 0.0)
            } else {
                Point2::new(1.0, 1.0)
            }
        };
        let handle = run_pipeline(config, Arc::new(source), stop.clone()).unwrap();
        let _: Vec<_> = handle.fixes.iter().take(3).collect();
        stop.raise();
        let stats = handle.join();
        assert!(stats.errors.load(Ordering::Relaxed) >= 3);
    }

    #[test]
    fn percentile() {
        let stats = PipelineStats::default();
        for ms in 1..=100 {
            stats.record_latency(Duration::from_millis(ms));
        }
        assert_eq!(stats.latency_percentile(95.0), Some(Duration::from_millis(95)));
    }
}
