//! UserMoved / UserClicked event generation.

use serde::{Deserialize, Serialize};

use super::mapping::Pixel;

/// Consecutive identical canvas positions that make a click.
pub const DEFAULT_CLICK_COUNT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    UserMoved,
    UserClicked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppEvent {
    pub kind: EventKind,
    pub canvas_position: Pixel,
    pub sequence_number: u64,
}

/// Every position yields a `UserMoved`. After `click_count` consecutive
/// identical positions a `UserClicked` follows and the repeat counter starts
/// over, so a visitor standing still clicks once per `click_count` updates.
#[derive(Debug, Clone)]
pub struct EventGenerator {
    click_count: u32,
    last: Option<Pixel>,
    repeats: u32,
    next_sequence: u64,
}

impl EventGenerator {
    pub fn new(click_count: u32) -> Self {
        assert!(click_count > 0, "click count must be positive");
        EventGenerator { click_count, last: None, repeats: 0, next_sequence: 0 }
    }

    pub fn click_count(&self) -> u32 {
        self.click_count
    }

    /// Identical positions seen since the last change or click.
    pub fn dwell(&self) -> u32 {
        self.repeats
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    fn event(&mut self, kind: EventKind, canvas_position: Pixel) -> AppEvent {
        let sequence_number = self.next_sequence;
        self.next_sequence += 1;
        AppEvent { kind, canvas_position, sequence_number }
    }

    pub fn push(&mut self, position: Pixel) -> Vec<AppEvent> {
        let mut events = vec![self.event(EventKind::UserMoved, position)];
        if self.last == Some(position) {
            self.repeats += 1;
        } else {
            self.last = Some(position);
            self.repeats = 1;
        }
        if self.repeats == self.click_count {
            events.push(self.event(EventKind::UserClicked, position));
            self.repeats = 0;
        }
        events
    }
}

pub fn generate_events(canvas_stream: impl IntoIterator<Item = Pixel>, click_count: u32) -> Vec<AppEvent> {
    let mut generator = EventGenerator::new(click_count);
    canvas_stream.into_iter().flat_map(|p| generator.push(p)).collect()
}
