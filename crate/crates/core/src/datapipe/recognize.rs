use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::resample::{frame_time, FrameSeries, FRAME_RATE_HZ};
use super::schema::FeatureSchema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionClass {
    Braking,
    LaneChangeLeft,
    LaneChangeRight,
    TurnLeft,
    TurnRight,
}

impl ActionClass {
    pub const ALL: [ActionClass; 5] = [
        ActionClass::Braking,
        ActionClass::LaneChangeLeft,
        ActionClass::LaneChangeRight,
        ActionClass::TurnLeft,
        ActionClass::TurnRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionClass::Braking => "braking",
            ActionClass::LaneChangeLeft => "lane_change_left",
            ActionClass::LaneChangeRight => "lane_change_right",
            ActionClass::TurnLeft => "turn_left",
            ActionClass::TurnRight => "turn_right",
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown action class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Recognizer,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub class: ActionClass,
    /// Onset time in seconds from session start.
    pub onset: f64,
    pub source: EventSource,
}

/// Threshold rules over the recognition channels.
///
/// Braking fires when brake pressure rises above `brake_threshold`. Turns
/// need the steering angle beyond `±steering_threshold` for
/// `steering_sustain_s` (positive angle is left). Lane changes fire when the
/// offset to the left or right lane marking drops to `lane_offset_threshold`
/// or below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecognitionRules {
    pub brake_threshold: f64,
    pub steering_threshold: f64,
    pub steering_sustain_s: f64,
    pub lane_offset_threshold: f64,
    /// Frames of observed falsehood required before a new onset.
    pub refractory_s: f64,
}

impl Default for RecognitionRules {
    fn default() -> Self {
        Self {
            brake_threshold: 1.0,
            steering_threshold: 1.0,
            steering_sustain_s: 0.5,
            lane_offset_threshold: 0.0,
            refractory_s: 1.0,
        }
    }
}

fn seconds_to_frames(s: f64) -> usize {
    (s * FRAME_RATE_HZ).round().max(0.0) as usize
}

/// Onsets of every rule's rising edges, sorted by time then class.
pub fn recognize_actions(series: &FrameSeries, schema: &FeatureSchema, rules: &RecognitionRules) -> Result<Vec<ActionEvent>> {
    let brake = series.channel(schema.require("brake_pressure")?);
    let steer = series.channel(schema.require("steering_angle")?);
    let left = series.channel(schema.require("left_lane_offset")?);
    let right = series.channel(schema.require("right_lane_offset")?);
    let n = series.len();
    let sustain = seconds_to_frames(rules.steering_sustain_s).max(1);
    let sustained = |k: usize, pred: &dyn Fn(f64) -> bool| k + sustain <= n && steer[k..k + sustain].iter().all(|&v| pred(v));

    let predicates: [(ActionClass, Vec<bool>); 5] = [
        (ActionClass::Braking, brake.iter().map(|&v| v > rules.brake_threshold).collect()),
        (
            ActionClass::LaneChangeLeft,
            left.iter().map(|&v| v <= rules.lane_offset_threshold).collect(),
        ),
        (
            ActionClass::LaneChangeRight,
            right.iter().map(|&v| v <= rules.lane_offset_threshold).collect(),
        ),
        (
            ActionClass::TurnLeft,
            (0..n).map(|k| sustained(k, &|v| v > rules.steering_threshold)).collect(),
        ),
        (
            ActionClass::TurnRight,
            (0..n).map(|k| sustained(k, &|v| v < -rules.steering_threshold)).collect(),
        ),
    ];

    let refractory = seconds_to_frames(rules.refractory_s);
    let mut events = Vec::new();
    for (class, pred) in &predicates {
        for k in rising_edges(pred, refractory) {
            events.push(ActionEvent {
                class: *class,
                onset: frame_time(k),
                source: EventSource::Recognizer,
            });
        }
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.class.cmp(&b.class)));
    Ok(events)
}

/// Indices where `pred` turns true after at least `refractory` observed
/// false frames. A predicate already true at index 0 is not an onset.
pub fn rising_edges(pred: &[bool], refractory: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut false_run = 0usize;
    for (k, &p) in pred.iter().enumerate() {
        if p {
            if false_run >= refractory.max(1) {
                out.push(k);
            }
            false_run = 0;
        } else {
            false_run += 1;
        }
    }
    out
}
