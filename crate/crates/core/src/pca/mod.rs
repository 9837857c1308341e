//! Position-controlled application: receives fixes, maps them onto the
//! canvas, turns them into move and click events and runs one app at a time.

pub mod apps;
pub mod bridge;
pub mod calibration;
pub mod env;
pub mod events;
pub mod mapping;
pub mod receiver;
pub mod runtime;

pub use apps::{App, AppAction, AppContext, AppError, AppInfo, AppView, Rect};
pub use bridge::{follow_steering, BridgeMessage, StateBoard, SteerMode, UiBridge, DEFAULT_BRIDGE_PORT};
pub use calibration::{run_calibration_app, CalibrationPrompt, CalibrationProcedure, Side};
pub use env::{ExecutionEnvironment, RenderState};
pub use events::{generate_events, AppEvent, EventGenerator, EventKind, DEFAULT_CLICK_COUNT};
pub use mapping::{map_to_canvas, CanvasCalibration, CanvasError, Mapped, Pixel};
pub use receiver::{PositionObserver, PositionReceiver, PositionSubject, ReceiverCounts};
pub use runtime::{PcaConfig, PcaRuntime, DEFAULT_LISTEN};
