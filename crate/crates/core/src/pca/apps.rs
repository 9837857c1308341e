//! App contract and the built-in apps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::calibration::{CalibrationProcedure, CalibrationPrompt, Side};
use super::events::{AppEvent, EventKind};
use super::mapping::{CanvasCalibration, Pixel};
use crate::domain::Point2;

pub const HOME_APP_ID: &str = "home";
pub const CALIBRATION_APP_ID: &str = "calibration";
pub const TARGET_TOUCH_APP_ID: &str = "target-touch";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("app {app}: {message}")]
pub struct AppError {
    pub app: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppInfo {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub app_id: String,
    pub name: String,
    pub rect: Rect,
    pub highlighted: bool,
}

/// What the current app wants drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "snake_case")]
pub enum AppView {
    Home {
        tiles: Vec<Tile>,
    },
    Calibration {
        prompt: CalibrationPrompt,
        side: Option<Side>,
        /// Fraction of the current side's recording window elapsed.
        progress: f64,
        rejections: usize,
    },
    TargetTouch {
        target: Rect,
        home_zone: Rect,
        score: u32,
        on_target: bool,
    },
}

/// What the environment exposes to a running app.
#[derive(Debug, Clone, Copy)]
pub struct AppContext<'a> {
    pub canvas: &'a CanvasCalibration,
    pub apps: &'a [AppInfo],
    /// Physical position behind the current event, if any.
    pub physical: Option<Point2>,
    /// Seconds since the environment started.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppAction {
    Launch(String),
    ReturnHome,
    /// Replace the canvas calibration, then return home.
    Recalibrated(CanvasCalibration),
}

pub trait App: Send {
    fn id(&self) -> &str;
    fn name(&self) -> &str;
    /// Called whenever the app becomes current.
    fn enter(&mut self, _ctx: &AppContext) {}
    fn handle(&mut self, event: &AppEvent, ctx: &AppContext) -> Result<Option<AppAction>, AppError>;
    fn view(&self, ctx: &AppContext) -> AppView;
}

/// App selection screen: one tile per app, dwell-click a tile to launch.
#[derive(Debug, Default)]
pub struct HomeApp {
    cursor: Option<Pixel>,
}

impl HomeApp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tiles in a grid of at most three columns, centred on the canvas.
    pub fn layout(ctx: &AppContext) -> Vec<(AppInfo, Rect)> {
        let apps: Vec<&AppInfo> = ctx.apps.iter().filter(|a| a.id != HOME_APP_ID).collect();
        if apps.is_empty() {
            return Vec::new();
        }
        let cols = apps.len().min(3) as u32;
        let rows = apps.len().div_ceil(3) as u32;
        let (w, h) = (ctx.canvas.width, ctx.canvas.height);
        let cell_w = w / cols;
        let cell_h = h / rows;
        apps.into_iter()
            .enumerate()
            .map(|(i, app)| {
                let (c, r) = (i as u32 % 3, i as u32 / 3);
                let rect = Rect {
                    x: c * cell_w + cell_w / 10,
                    y: r * cell_h + cell_h / 10,
                    w: cell_w * 8 / 10,
                    h: cell_h * 8 / 10,
                };
                (app.clone(), rect)
            })
            .collect()
    }
}

impl App for HomeApp {
    fn id(&self) -> &str {
        HOME_APP_ID
    }

    fn name(&self) -> &str {
        "Home"
    }

    fn enter(&mut self, _ctx: &AppContext) {
        self.cursor = None;
    }

    fn handle(&mut self, event: &AppEvent, ctx: &AppContext) -> Result<Option<AppAction>, AppError> {
        self.cursor = Some(event.canvas_position);
        if event.kind != EventKind::UserClicked {
            return Ok(None);
        }
        Ok(Self::layout(ctx)
            .into_iter()
            .find(|(_, rect)| rect.contains(event.canvas_position))
            .map(|(app, _)| AppAction::Launch(app.id)))
    }

    fn view(&self, ctx: &AppContext) -> AppView {
        let tiles = Self::layout(ctx)
            .into_iter()
            .map(|(app, rect)| Tile {
                highlighted: self.cursor.is_some_and(|c| rect.contains(c)),
                app_id: app.id,
                name: app.name,
                rect,
            })
            .collect();
        AppView::Home { tiles }
    }
}

/// Walks the visitor through the four sides and installs the new bounds.
#[derive(Debug)]
pub struct CalibrationApp {
    procedure: Option<CalibrationProcedure>,
    last_time: f64,
}

impl CalibrationApp {
    pub fn new() -> Self {
        CalibrationApp { procedure: None, last_time: 0.0 }
    }
}

impl Default for CalibrationApp {
    fn default() -> Self {
        Self::new()
    }
}

impl App for CalibrationApp {
    fn id(&self) -> &str {
        CALIBRATION_APP_ID
    }

    fn name(&self) -> &str {
        "Calibration"
    }

    fn enter(&mut self, ctx: &AppContext) {
        self.procedure = Some(CalibrationProcedure::new(ctx.canvas.width, ctx.canvas.height));
        self.last_time = ctx.time;
    }

    fn handle(&mut self, event: &AppEvent, ctx: &AppContext) -> Result<Option<AppAction>, AppError> {
        // clicks repeat the same physical sample; only moves feed the window
        if event.kind != EventKind::UserMoved {
            return Ok(None);
        }
        let Some(position) = ctx.physical else {
            return Ok(None);
        };
        let procedure = self
            .procedure
            .get_or_insert_with(|| CalibrationProcedure::new(ctx.canvas.width, ctx.canvas.height));
        self.last_time = ctx.time;
        for prompt in procedure.feed(ctx.time, position) {
            match prompt {
                CalibrationPrompt::Done { calibration } => return Ok(Some(AppAction::Recalibrated(calibration))),
                other => log::info!("calibration: {other:?}"),
            }
        }
        Ok(None)
    }

    fn view(&self, _ctx: &AppContext) -> AppView {
        match &self.procedure {
            Some(p) => AppView::Calibration {
                prompt: p.prompt(),
                side: p.current_side(),
                progress: p.progress(self.last_time),
                rejections: p.rejections(),
            },
            None => AppView::Calibration {
                prompt: CalibrationPrompt::MoveTo { side: Side::Left },
                side: Some(Side::Left),
                progress: 0.0,
                rejections: 0,
            },
        }
    }
}

/// Demo game: walk onto the highlighted target and dwell there to score.
/// Dwell-clicking the home zone in the top-left corner returns home.
#[derive(Debug)]
pub struct TargetTouchApp {
    rng: ChaCha8Rng,
    target: Option<Rect>,
    cursor: Option<Pixel>,
    score: u32,
}

impl TargetTouchApp {
    pub fn new(seed: u64) -> Self {
        TargetTouchApp { rng: ChaCha8Rng::seed_from_u64(seed), target: None, cursor: None, score: 0 }
    }

    pub fn home_zone(canvas: &CanvasCalibration) -> Rect {
        let side = canvas.width.min(canvas.height) / 6;
        Rect { x: 0, y: 0, w: side.max(1), h: side.max(1) }
    }

    fn target_size(canvas: &CanvasCalibration) -> (u32, u32) {
        ((canvas.width / 5).max(1), (canvas.height / 5).max(1))
    }

    fn next_target(&mut self, canvas: &CanvasCalibration) -> Rect {
        let (w, h) = Self::target_size(canvas);
        let zone = Self::home_zone(canvas);
        loop {
            let x = self.rng.random_range(0..=canvas.width - w);
            let y = self.rng.random_range(0..=canvas.height - h);
            let rect = Rect { x, y, w, h };
            let overlaps_home = x < zone.x + zone.w && y < zone.y + zone.h;
            if !overlaps_home || canvas.width <= zone.w + w {
                return rect;
            }
        }
    }

    pub fn score(&self) -> u32 {
        self.score
    }
}

impl App for TargetTouchApp {
    fn id(&self) -> &str {
        TARGET_TOUCH_APP_ID
    }

    fn name(&self) -> &str {
        "Target Touch"
    }

    fn enter(&mut self, ctx: &AppContext) {
        self.score = 0;
        self.cursor = None;
        self.target = Some(self.next_target(ctx.canvas));
    }

    fn handle(&mut self, event: &AppEvent, ctx: &AppContext) -> Result<Option<AppAction>, AppError> {
        self.cursor = Some(event.canvas_position);
        if event.kind != EventKind::UserClicked {
            return Ok(None);
        }
        if Self::home_zone(ctx.canvas).contains(event.canvas_position) {
            return Ok(Some(AppAction::ReturnHome));
        }
        let target = match self.target {
            Some(t) => t,
            None => {
                let t = self.next_target(ctx.canvas);
                *self.target.insert(t)
            }
        };
        if target.contains(event.canvas_position) {
            self.score += 1;
            self.target = Some(self.next_target(ctx.canvas));
        }
        Ok(None)
    }

    fn view(&self, ctx: &AppContext) -> AppView {
        let target = self.target.unwrap_or(Rect { x: 0, y: 0, w: 0, h: 0 });
        AppView::TargetTouch {
            target,
            home_zone: Self::home_zone(ctx.canvas),
            score: self.score,
            on_target: self.cursor.is_some_and(|c| target.contains(c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas() -> CanvasCalibration {
        CanvasCalibration::new(0.0, 2.7, 0.0, 4.7, 1280, 720).unwrap()
    }

    fn infos() -> Vec<AppInfo> {
        [HOME_APP_ID, CALIBRATION_APP_ID, TARGET_TOUCH_APP_ID]
            .iter()
            .map(|id| AppInfo { id: id.to_string(), name: id.to_string() })
            .collect()
    }

    fn event(kind: EventKind, x: u32, y: u32) -> AppEvent {
        AppEvent { kind, canvas_position: Pixel::new(x, y), sequence_number: 0 }
    }

    #[test]
    fn home_tiles_exclude_home_and_do_not_overlap() {
        let c = canvas();
        let apps = infos();
        let ctx = AppContext { canvas: &c, apps: &apps, physical: None, time: 0.0 };
        let layout = HomeApp::layout(&ctx);
        assert_eq!(layout.len(), 2);
        let (a, b) = (layout[0].1, layout[1].1);
        assert!(a.x + a.w <= b.x || b.x + b.w <= a.x);
        for (_, r) in &layout {
            assert!(r.x + r.w <= c.width && r.y + r.h <= c.height);
        }
    }

    #[test]
    fn home_click_on_tile_launches() {
        let c = canvas();
        let apps = infos();
        let ctx = AppContext { canvas: &c, apps: &apps, physical: None, time: 0.0 };
        let mut home = HomeApp::new();
        let rect = HomeApp::layout(&ctx)[1].1;
        let (cx, cy) = (rect.x + rect.w / 2, rect.y + rect.h / 2);
        assert_eq!(home.handle(&event(EventKind::UserMoved, cx, cy), &ctx).unwrap(), None);
        let AppView::Home { tiles } = home.view(&ctx) else { panic!() };
        assert!(tiles[1].highlighted && !tiles[0].highlighted);
        assert_eq!(
            home.handle(&event(EventKind::UserClicked, cx, cy), &ctx).unwrap(),
            Some(AppAction::Launch(TARGET_TOUCH_APP_ID.into()))
        );
    }

    #[test]
    fn target_touch_scores_and_returns_home() {
        let c = canvas();
        let apps = infos();
        let ctx = AppContext { canvas: &c, apps: &apps, physical: None, time: 0.0 };
        let mut game = TargetTouchApp::new(7);
        game.enter(&ctx);
        let AppView::TargetTouch { target, home_zone, .. } = game.view(&ctx) else { panic!() };
        assert!(!(target.x < home_zone.w && target.y < home_zone.h));
        let (cx, cy) = (target.x + target.w / 2, target.y + target.h / 2);
        game.handle(&event(EventKind::UserClicked, cx, cy), &ctx).unwrap();
        assert_eq!(game.score(), 1);
        assert_eq!(
            game.handle(&event(EventKind::UserClicked, 1, 1), &ctx).unwrap(),
            Some(AppAction::ReturnHome)
        );
    }
}
