use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven sleep-event categories carried by PSG annotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Apnea,
    Hypopnea,
    Desaturation,
    RA,
    SA,
    PLMA,
    Wake,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Apnea,
        EventKind::Hypopnea,
        EventKind::Desaturation,
        EventKind::RA,
        EventKind::SA,
        EventKind::PLMA,
        EventKind::Wake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Apnea => "Apnea",
            EventKind::Hypopnea => "Hypopnea",
            EventKind::Desaturation => "Desaturation",
            EventKind::RA => "RA",
            EventKind::SA => "SA",
            EventKind::PLMA => "PLMA",
            EventKind::Wake => "Wake",
        }
    }

    /// Apnea, Hypopnea and Desaturation.
    pub fn is_respiratory(self) -> bool {
        matches!(
            self,
            EventKind::Apnea | EventKind::Hypopnea | EventKind::Desaturation
        )
    }

    /// Events that count towards the apnea-hypopnea index.
    pub fn counts_towards_ahi(self) -> bool {
        matches!(self, EventKind::Apnea | EventKind::Hypopnea)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown event kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub kind: EventKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl EventAnnotation {
    pub fn new(kind: EventKind, start_s: f64, end_s: f64) -> Self {
        Self {
            kind,
            start_s,
            end_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err(Error::Validation(format!("{} event has non-finite bounds", self.kind)));
        }
        if self.start_s < 0.0 {
            return Err(Error::Validation(format!(
                "{} event starts before t=0 ({})",
                self.kind, self.start_s
            )));
        }
        if self.end_s <= self.start_s {
            return Err(Error::Validation(format!(
                "{} event has end_s {} <= start_s {}",
                self.kind, self.end_s, self.start_s
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    kind: String,
    start_s: f64,
    end_s: f64,
}

/// Parses an annotation JSON array, validating every entry and sorting by `start_s`.
pub fn parse_annotations(json: &str) -> Result<Vec<EventAnnotation>> {
    let raw: Vec<RawAnnotation> = serde_json::from_str(json)?;
    let mut events = raw
        .into_iter()
        .map(|r| {
            let ev = EventAnnotation::new(r.kind.parse()?, r.start_s, r.end_s);
            ev.validate()?;
            Ok(ev)
        })
        .collect::<Result<Vec<_>>>()?;
    sort_events(&mut events);
    Ok(events)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<EventAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

pub fn write_annotations(path: impl AsRef<Path>, events: &[EventAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(events)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub(crate) fn sort_events(events: &mut [EventAnnotation]) {
    events.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
}

/// Checks that every event ends within the time in bed.
pub fn check_within(events: &[EventAnnotation], tib_s: f64) -> Result<()> {
    for ev in events {
        ev.validate()?;
        if ev.end_s > tib_s + 1e-9 {
            return Err(Error::Validation(format!(
                "{} event [{}, {}] extends past time in bed {tib_s}",
                ev.kind, ev.start_s, ev.end_s
            )));
        }
    }
    Ok(())
}
