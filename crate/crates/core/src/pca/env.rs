//! Execution environment: the app registry and the single current app.

use std::panic::{self, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::apps::{
    App, AppAction, AppContext, AppError, AppInfo, AppView, CalibrationApp, HomeApp, TargetTouchApp, HOME_APP_ID,
};
use super::events::{AppEvent, EventGenerator, EventKind};
use super::mapping::{map_to_canvas, CanvasCalibration, Pixel};
use crate::domain::{AnchorSet, Point2};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("registry must contain the home app")]
    MissingHome,
    #[error("duplicate app id {0}")]
    DuplicateApp(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMarker {
    pub id: String,
    pub pixel: Pixel,
}

/// Immutable snapshot of everything the UI needs to draw one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderState {
    pub app_id: String,
    pub apps: Vec<AppInfo>,
    /// Sequence number of the last event processed, if any.
    pub sequence: Option<u64>,
    pub last_event: Option<EventKind>,
    pub cursor: Option<Pixel>,
    /// Physical position behind the cursor, meters.
    pub physical: Option<[f64; 2]>,
    pub clamped: bool,
    pub dwell: u32,
    pub click_count: u32,
    pub canvas: CanvasCalibration,
    pub anchors: Vec<AnchorMarker>,
    pub evictions: u64,
    pub view: AppView,
}

pub struct ExecutionEnvironment {
    apps: Vec<Box<dyn App>>,
    infos: Vec<AppInfo>,
    current: usize,
    canvas: CanvasCalibration,
    generator: EventGenerator,
    time: f64,
    physical: Option<Point2>,
    cursor: Option<Pixel>,
    clamped: bool,
    last_event: Option<AppEvent>,
    anchors: Vec<(String, Point2)>,
    evictions: u64,
}

impl ExecutionEnvironment {
    /// Home, Calibration and the target-touch demo.
    pub fn new(canvas: CanvasCalibration, click_count: u32) -> Self {
        let apps: Vec<Box<dyn App>> =
            vec![Box::new(HomeApp::new()), Box::new(CalibrationApp::new()), Box::new(TargetTouchApp::new(0))];
        Self::with_apps(canvas, click_count, apps).expect("built-in registry is valid")
    }

    pub fn with_apps(canvas: CanvasCalibration, click_count: u32, apps: Vec<Box<dyn App>>) -> Result<Self, EnvError> {
        let mut infos: Vec<AppInfo> = Vec::with_capacity(apps.len());
        for app in &apps {
            if infos.iter().any(|i| i.id == app.id()) {
                return Err(EnvError::DuplicateApp(app.id().to_string()));
            }
            infos.push(AppInfo { id: app.id().to_string(), name: app.name().to_string() });
        }
        let home = infos.iter().position(|i| i.id == HOME_APP_ID).ok_or(EnvError::MissingHome)?;
        let mut env = ExecutionEnvironment {
            apps,
            infos,
            current: home,
            canvas,
            generator: EventGenerator::new(click_count),
            time: 0.0,
            physical: None,
            cursor: None,
            clamped: false,
            last_event: None,
            anchors: Vec::new(),
            evictions: 0,
        };
        env.enter_current();
        Ok(env)
    }

    pub fn with_anchors(mut self, set: &AnchorSet) -> Self {
        self.anchors = set.iter().map(|a| (a.id.to_string(), a.planar())).collect();
        self
    }

    pub fn current_app_id(&self) -> &str {
        &self.infos[self.current].id
    }

    pub fn apps(&self) -> &[AppInfo] {
        &self.infos
    }

    pub fn canvas(&self) -> &CanvasCalibration {
        &self.canvas
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.infos.iter().position(|i| i.id == id)
    }

    fn home(&self) -> usize {
        self.index_of(HOME_APP_ID).expect("home registered")
    }

    fn context(&self) -> AppContext<'_> {
        AppContext { canvas: &self.canvas, apps: &self.infos, physical: self.physical, time: self.time }
    }

    fn enter_current(&mut self) {
        let ctx = AppContext { canvas: &self.canvas, apps: &self.infos, physical: self.physical, time: self.time };
        let app = &mut self.apps[self.current];
        if panic::catch_unwind(AssertUnwindSafe(|| app.enter(&ctx))).is_err() {
            log::error!("app {} failed on enter", self.infos[self.current].id);
            self.evict();
        }
    }

    fn evict(&mut self) {
        self.evictions += 1;
        let home = self.home();
        if self.current == home {
            // home itself failed: reset it
            self.apps[home] = Box::new(HomeApp::new());
        }
        self.current = home;
        self.generator = EventGenerator::new(self.generator.click_count());
    }

    /// Makes `app_id` current. Returns false if it is not registered.
    pub fn select(&mut self, app_id: &str) -> bool {
        let Some(index) = self.index_of(app_id) else {
            return false;
        };
        self.current = index;
        self.enter_current();
        true
    }

    /// Maps a physical position, generates its events and delivers them.
    pub fn on_position(&mut self, t: f64, physical: Point2) -> Vec<AppEvent> {
        self.time = t;
        self.physical = Some(physical);
        let mapped = map_to_canvas(&physical, &self.canvas);
        self.cursor = Some(mapped.pixel);
        self.clamped = mapped.clamped;
        let events = self.generator.push(mapped.pixel);
        for event in &events {
            self.step(event);
        }
        events
    }

    /// Delivers one event to the current app and applies any switch it asks
    /// for. A failing or panicking handler sends control back to Home.
    pub fn step(&mut self, event: &AppEvent) -> RenderState {
        self.last_event = Some(*event);
        self.cursor = Some(event.canvas_position);
        let ctx = AppContext { canvas: &self.canvas, apps: &self.infos, physical: self.physical, time: self.time };
        let app = &mut self.apps[self.current];
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| app.handle(event, &ctx)));
        match outcome {
            Ok(Ok(action)) => self.apply(action),
            Ok(Err(AppError { app, message })) => {
                log::error!("app {app} failed: {message}; returning to home");
                self.evict();
            }
            Err(_) => {
                log::error!("app {} panicked; returning to home", self.current_app_id());
                self.evict();
            }
        }
        self.render()
    }

    fn apply(&mut self, action: Option<AppAction>) {
        match action {
            None => {}
            Some(AppAction::Launch(id)) => {
                if !self.select(&id) {
                    log::warn!("launch of unknown app {id} ignored");
                }
            }
            Some(AppAction::ReturnHome) => {
                self.current = self.home();
                self.enter_current();
            }
            Some(AppAction::Recalibrated(canvas)) => {
                log::info!("canvas recalibrated to {canvas:?}");
                self.canvas = canvas;
                self.current = self.home();
                self.enter_current();
            }
        }
    }

    pub fn render(&self) -> RenderState {
        let ctx = self.context();
        let view = match panic::catch_unwind(AssertUnwindSafe(|| self.apps[self.current].view(&ctx))) {
            Ok(view) => view,
            Err(_) => AppView::Home { tiles: Vec::new() },
        };
        RenderState {
            app_id: self.current_app_id().to_string(),
            apps: self.infos.clone(),
            sequence: self.last_event.map(|e| e.sequence_number),
            last_event: self.last_event.map(|e| e.kind),
            cursor: self.cursor,
            physical: self.physical.map(|p| [p.x, p.y]),
            clamped: self.clamped,
            dwell: self.generator.dwell(),
            click_count: self.generator.click_count(),
            canvas: self.canvas,
            anchors: self
                .anchors
                .iter()
                .map(|(id, p)| AnchorMarker { id: id.clone(), pixel: map_to_canvas(p, &self.canvas).pixel })
                .collect(),
            evictions: self.evictions,
            view,
        }
    }
}
