//! Synthetic multi-session driving logs with planted actions.
//!
//! Every float channel is first-order autoregressive noise around a
//! baseline, sampled at its sensor's native rate. Each planted event at
//! onset `t_a` adds
//!
//! * a precursor on a few class-specific channels: a step of the configured
//!   amplitude at `t_a - lead` plus a linear ramp that adds another
//!   amplitude by `t_a`, both held until `t_a + exec_len`;
//! * an action signature on the recognition channels over
//!   `[t_a, t_a + exec_len]` (brake step, steering ramp, lane-offset drop).
//!
//! Values are in normalized units. Onsets sit on the 10 Hz grid.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datapipe::{
    frame_time, ActionClass, ActionEvent, ChannelKind, ChannelLog, EventSource, FeatureSchema, Sample, SensorLog,
    FRAME_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// Deflection added to one channel while an action executes, linear from
/// `start` at `t_a` to `end` at `t_a + exec_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSignature {
    pub channel: String,
    pub start: f64,
    pub end: f64,
}

/// Channel touched by a precursor; `sign` scales the configured amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecursorSignature {
    pub channel: String,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_sessions: usize,
    pub session_length_s: f64,
    /// Events per minute for each class.
    pub event_rates: BTreeMap<ActionClass, f64>,
    pub min_gap_s: f64,
    /// No event is planted closer than this to either end of a session.
    pub margin_s: f64,
    pub precursor_lead_s: f64,
    /// Per-event lead is drawn uniformly from `lead ± lead_jitter`.
    pub lead_jitter_s: f64,
    pub precursor_amplitude: f64,
    pub noise_std: f64,
    /// Time constant of the autoregressive noise.
    pub noise_tau_s: f64,
    pub exec_len_s: f64,
    pub precursors: BTreeMap<ActionClass, Vec<PrecursorSignature>>,
    pub actions: BTreeMap<ActionClass, Vec<ActionSignature>>,
    pub seed: u64,
}

fn pre(channel: &str, sign: f64) -> PrecursorSignature {
    PrecursorSignature {
        channel: channel.into(),
        sign,
    }
}

fn act(channel: &str, start: f64, end: f64) -> ActionSignature {
    ActionSignature {
        channel: channel.into(),
        start,
        end,
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        use ActionClass::*;
        let event_rates = BTreeMap::from([
            (Braking, 1.0),
            (LaneChangeLeft, 0.25),
            (LaneChangeRight, 0.25),
            (TurnLeft, 0.25),
            (TurnRight, 0.25),
        ]);
        let precursors = BTreeMap::from([
            (
                Braking,
                vec![pre("lead_obj_distance", -1.0), pre("lead_obj_speed", -1.0), pre("accel_pressure", -1.0)],
            ),
            (LaneChangeLeft, vec![pre("head_hmove_lt_m2", 1.0), pre("head_angle_q2", 1.0)]),
            (LaneChangeRight, vec![pre("head_hmove_gt_2", 1.0), pre("head_angle_q4", 1.0)]),
            (TurnLeft, vec![pre("head_hmove_m2_0", 1.0), pre("left_hand_x", 1.0)]),
            (TurnRight, vec![pre("head_hmove_0_2", 1.0), pre("right_hand_x", 1.0)]),
        ]);
        let actions = BTreeMap::from([
            (Braking, vec![act("brake_pressure", 5.0, 5.0)]),
            (LaneChangeLeft, vec![act("left_lane_offset", -2.8, -2.8)]),
            (LaneChangeRight, vec![act("right_lane_offset", -2.8, -2.8)]),
            (TurnLeft, vec![act("steering_angle", 3.0, 5.0)]),
            (TurnRight, vec![act("steering_angle", -3.0, -5.0)]),
        ]);
        Self {
            num_sessions: 10,
            session_length_s: 600.0,
            event_rates,
            min_gap_s: 20.0,
            margin_s: 10.0,
            precursor_lead_s: 4.0,
            lead_jitter_s: 0.0,
            precursor_amplitude: 0.3,
            noise_std: 0.1,
            noise_tau_s: 0.5,
            exec_len_s: 2.0,
            precursors,
            actions,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Only braking events, at `rate` per minute.
    pub fn braking_only(rate: f64) -> Self {
        let mut c = Self::default();
        for (class, r) in c.event_rates.iter_mut() {
            *r = if *class == ActionClass::Braking { rate } else { 0.0 };
        }
        c
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_sessions == 0 {
            return bad("num_sessions must be at least 1".into());
        }
        if !(self.session_length_s > 0.0 && self.session_length_s.is_finite()) {
            return bad(format!("session length must be > 0, got {}", self.session_length_s));
        }
        for (class, r) in &self.event_rates {
            if !(*r >= 0.0 && r.is_finite()) {
                return bad(format!("event rate for {class} must be >= 0, got {r}"));
            }
        }
        if !(self.exec_len_s >= 0.0 && self.min_gap_s > self.exec_len_s) {
            return bad(format!(
                "min gap ({}) must exceed exec_len ({})",
                self.min_gap_s, self.exec_len_s
            ));
        }
        if !(self.precursor_lead_s > 0.0 && self.lead_jitter_s >= 0.0 && self.lead_jitter_s < self.precursor_lead_s) {
            return bad(format!(
                "need lead > jitter >= 0, got lead {} and jitter {}",
                self.precursor_lead_s, self.lead_jitter_s
            ));
        }
        if self.margin_s < self.precursor_lead_s + self.lead_jitter_s {
            return bad(format!(
                "margin {} must cover the longest precursor lead {}",
                self.margin_s,
                self.precursor_lead_s + self.lead_jitter_s
            ));
        }
        for (name, v) in [
            ("precursor amplitude", self.precursor_amplitude),
            ("noise std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.noise_tau_s > 0.0) {
            return bad(format!("noise time constant must be > 0, got {}", self.noise_tau_s));
        }
        let names = self
            .precursors
            .values()
            .flat_map(|v| v.iter().map(|p| &p.channel))
            .chain(self.actions.values().flat_map(|v| v.iter().map(|a| &a.channel)));
        for name in names {
            let idx = schema.require(name)?;
            if schema.channels[idx].kind != ChannelKind::Float {
                return bad(format!("signature channel `{name}` must be float-valued"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub class: ActionClass,
    pub onset: f64,
    pub precursor_onset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub session_id: String,
    pub events: Vec<PlantedEvent>,
}

impl SessionTruth {
    pub fn action_events(&self) -> Vec<ActionEvent> {
        self.events
            .iter()
            .map(|e| ActionEvent {
                class: e.class,
                onset: e.onset,
                source: EventSource::GroundTruth,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sessions: Vec<SessionTruth>,
}

impl GroundTruth {
    pub fn session(&self, id: &str) -> Option<&SessionTruth> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    pub fn event_count(&self) -> usize {
        self.sessions.iter().map(|s| s.events.len()).sum()
    }
}

/// Driver-specific perturbation applied on top of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub driver_id: u64,
    pub lead_offset_s: f64,
    pub amplitude_scale: f64,
    pub noise_scale: f64,
}

impl DriverProfile {
    pub fn neutral() -> Self {
        Self {
            driver_id: 0,
            lead_offset_s: 0.0,
            amplitude_scale: 1.0,
            noise_scale: 1.0,
        }
    }

    /// Deterministic profile for `(seed, driver_id)`: lead shifted by up
    /// to ±1 s, amplitude and noise scaled by 0.8 to 1.2.
    pub fn for_driver(seed: u64, driver_id: u64) -> Self {
        let mut rng = SeededRng::new(seed).fork(0x6472_6976_6572 ^ driver_id);
        Self {
            driver_id,
            lead_offset_s: rng.uniform(-1.0, 1.0),
            amplitude_scale: rng.uniform(0.8, 1.2),
            noise_scale: rng.uniform(0.8, 1.2),
        }
    }
}

pub fn generate(config: &ScenarioConfig, schema: &FeatureSchema) -> Result<(Vec<SensorLog>, GroundTruth)> {
    generate_inner(config, schema, &DriverProfile::neutral(), "session")
}

/// Like [`generate`], with a per-driver perturbation of precursor lead,
/// amplitudes and noise. Session ids are prefixed with the driver.
pub fn generate_driver_variant(
    config: &ScenarioConfig,
    schema: &FeatureSchema,
    driver_id: u64,
) -> Result<(Vec<SensorLog>, GroundTruth)> {
    let profile = DriverProfile::for_driver(config.seed, driver_id);
    let mut cfg = config.clone();
    cfg.precursor_lead_s = (cfg.precursor_lead_s + profile.lead_offset_s).max(cfg.lead_jitter_s + 0.5);
    cfg.margin_s = cfg.margin_s.max(cfg.precursor_lead_s + cfg.lead_jitter_s);
    cfg.seed = SeededRng::new(config.seed).fork(driver_id.wrapping_add(1 << 32)).seed();
    generate_inner(&cfg, schema, &profile, &format!("driver{driver_id}_session"))
}

fn generate_inner(
    config: &ScenarioConfig,
    schema: &FeatureSchema,
    profile: &DriverProfile,
    prefix: &str,
) -> Result<(Vec<SensorLog>, GroundTruth)> {
    config.validate(schema)?;
    let master = SeededRng::new(config.seed);
    let mut logs = Vec::with_capacity(config.num_sessions);
    let mut truth = GroundTruth::default();
    for i in 0..config.num_sessions {
        let id = format!("{prefix}_{i:03}");
        let rng = master.fork(i as u64);
        let events = schedule_events(config, &mut rng.fork(0))?;
        logs.push(render_session(config, schema, profile, &id, &events, &rng));
        truth.sessions.push(SessionTruth { session_id: id, events });
    }
    Ok((logs, truth))
}

/// Jittered uniform spacing: the usable span is cut into one slot per event
/// and each event lands in its slot early enough to keep `min_gap` to the
/// next slot. Works in whole frames so onsets sit on the grid.
fn schedule_events(config: &ScenarioConfig, rng: &mut SeededRng) -> Result<Vec<PlantedEvent>> {
    let minutes = config.session_length_s / 60.0;
    let mut classes: Vec<ActionClass> = Vec::new();
    for (&class, &rate) in &config.event_rates {
        let n = (rate * minutes).round() as usize;
        classes.extend(std::iter::repeat(class).take(n));
    }
    if classes.is_empty() {
        return Ok(Vec::new());
    }
    let to_frames = |s: f64| (s * FRAME_RATE_HZ).round() as usize;
    let first = to_frames(config.margin_s);
    let total = to_frames(config.session_length_s);
    let last = total.saturating_sub(to_frames(config.margin_s.max(config.exec_len_s + 1.0)));
    let gap = to_frames(config.min_gap_s).max(1);
    let span = last.saturating_sub(first);
    let slot = span / classes.len();
    if slot < gap {
        return Err(Error::InfeasibleSchedule(format!(
            "{} events with min gap {} s do not fit in {} s of usable session time",
            classes.len(),
            config.min_gap_s,
            span as f64 / FRAME_RATE_HZ
        )));
    }
    rng.shuffle(&mut classes);
    let mut events = Vec::with_capacity(classes.len());
    for (i, class) in classes.into_iter().enumerate() {
        let frame = first + i * slot + rng.below(slot - gap + 1);
        let onset = frame_time(frame);
        let lead = if config.lead_jitter_s > 0.0 {
            rng.uniform(config.precursor_lead_s - config.lead_jitter_s, config.precursor_lead_s + config.lead_jitter_s)
        } else {
            config.precursor_lead_s
        };
        events.push(PlantedEvent {
            class,
            onset,
            precursor_onset: onset - lead,
        });
    }
    Ok(events)
}

const FACTOR_BASELINES: [(&str, f64); 9] = [
    ("gear_position", 4.0),
    ("left_on_wheel", 1.0),
    ("right_on_wheel", 1.0),
    ("left_hand_moving", 0.0),
    ("right_hand_moving", 0.0),
    ("hands_on_wheel", 1.0),
    ("left_lane_available", 1.0),
    ("right_lane_available", 1.0),
    ("intersection_state", 0.0),
];

fn baseline(name: &str) -> f64 {
    match name {
        "left_lane_offset" | "right_lane_offset" => 1.8,
        "velocity" => 1.0,
        "lead_obj_distance" => 1.0,
        _ => FACTOR_BASELINES
            .iter()
            .find(|(n, _)| *n == name)
            .map_or(0.0, |(_, v)| *v),
    }
}

/// Timestamps `0, 1/r, ..., L` (inclusive where the rate divides `L`).
fn sample_times(rate_hz: f64, length_s: f64) -> Vec<f64> {
    let n = (length_s * rate_hz + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 / rate_hz).collect()
}

fn render_session(
    config: &ScenarioConfig,
    schema: &FeatureSchema,
    profile: &DriverProfile,
    session_id: &str,
    events: &[PlantedEvent],
    rng: &SeededRng,
) -> SensorLog {
    let noise_std = config.noise_std * profile.noise_scale;
    let amplitude = config.precursor_amplitude * profile.amplitude_scale;
    let exec = config.exec_len_s;
    let mut channels = Vec::with_capacity(schema.len());
    for (c, channel) in schema.channels.iter().enumerate() {
        let rate = channel.modality.native_rate_hz();
        let times = sample_times(rate, config.session_length_s);
        let base = baseline(&channel.name);
        if channel.kind == ChannelKind::Factor {
            channels.push(ChannelLog {
                name: channel.name.clone(),
                samples: times.into_iter().map(|t| Sample { t, value: base }).collect(),
            });
            continue;
        }

        // Signatures touching this channel, as (event, precursor sign) and
        // (event, action deflection) pairs.
        let mut pre_hits: Vec<(&PlantedEvent, f64)> = Vec::new();
        let mut act_hits: Vec<(&PlantedEvent, &ActionSignature)> = Vec::new();
        for e in events {
            if let Some(sigs) = config.precursors.get(&e.class) {
                pre_hits.extend(sigs.iter().filter(|s| s.channel == channel.name).map(|s| (e, s.sign)));
            }
            if let Some(sigs) = config.actions.get(&e.class) {
                act_hits.extend(sigs.iter().filter(|s| s.channel == channel.name).map(|s| (e, s)));
            }
        }

        let mut noise_rng = rng.fork(1 + c as u64);
        let phi = (-1.0 / (rate * config.noise_tau_s)).exp();
        let innovation = (1.0 - phi * phi).sqrt();
        let mut x = noise_std * noise_rng.normal();
        let mut samples = Vec::with_capacity(times.len());
        for (i, &t) in times.iter().enumerate() {
            if i > 0 {
                x = phi * x + innovation * noise_std * noise_rng.normal();
            }
            let mut v = base + x;
            for &(e, sign) in &pre_hits {
                v += sign * amplitude * precursor_shape(t, e.precursor_onset, e.onset, exec);
            }
            for &(e, sig) in &act_hits {
                if t >= e.onset - 1e-9 && t <= e.onset + exec + 1e-9 {
                    let frac = if exec > 0.0 { ((t - e.onset) / exec).clamp(0.0, 1.0) } else { 0.0 };
                    v += sig.start + (sig.end - sig.start) * frac;
                }
            }
            samples.push(Sample { t, value: v });
        }
        channels.push(ChannelLog {
            name: channel.name.clone(),
            samples,
        });
    }
    SensorLog {
        session_id: session_id.to_string(),
        schema_id: schema.id.clone(),
        duration: config.session_length_s,
        channels,
    }
}

/// Boxcar of height 1 on `[from, onset + exec]` plus a ramp from 0 at
/// `from` to 1 at `onset`, held through `onset + exec`.
fn precursor_shape(t: f64, from: f64, onset: f64, exec: f64) -> f64 {
    if t < from - 1e-9 || t > onset + exec + 1e-9 {
        0.0
    } else if t < onset {
        1.0 + ((t - from) / (onset - from)).max(0.0)
    } else {
        2.0
    }
}

pub const TRUTH_HEADER: [&str; 4] = ["session", "class", "t_a", "precursor_onset"];

pub fn write_truth<W: Write>(truth: &GroundTruth, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUTH_HEADER)?;
    for s in &truth.sessions {
        for e in &s.events {
            w.write_record([
                s.session_id.clone(),
                e.class.to_string(),
                e.onset.to_string(),
                e.precursor_onset.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    write_truth(truth, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Reads a truth file. Sessions without events do not appear in the file,
/// so they are absent from the result.
pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let mut r = csv::Reader::from_path(path)?;
    let mut truth = GroundTruth::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| {
            rec.get(k).ok_or_else(|| Error::Parse {
                line,
                reason: format!("missing column {}", TRUTH_HEADER[k]),
            })
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|e| Error::Parse {
                line,
                reason: format!("{}: {e}", TRUTH_HEADER[k]),
            })
        };
        let session = field(0)?.to_string();
        let class: ActionClass = field(1)?.parse().map_err(|e: Error| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let event = PlantedEvent {
            class,
            onset: num(2)?,
            precursor_onset: num(3)?,
        };
        match truth.sessions.last_mut() {
            Some(s) if s.session_id == session => s.events.push(event),
            _ => truth.sessions.push(SessionTruth {
                session_id: session,
                events: vec![event],
            }),
        }
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            num_sessions: 2,
            session_length_s: 120.0,
            ..ScenarioConfig::braking_only(1.0)
        }
    }

    #[test]
    fn schedule_respects_gap_and_margin() {
        let cfg = ScenarioConfig::braking_only(1.0);
        let ev = schedule_events(&cfg, &mut SeededRng::new(5)).unwrap();
        assert_eq!(ev.len(), 10);
        for w in ev.windows(2) {
            assert!(w[1].onset - w[0].onset >= cfg.min_gap_s - 1e-9);
        }
        assert!(ev[0].onset >= cfg.margin_s);
        assert!(ev.last().unwrap().onset <= cfg.session_length_s - cfg.margin_s);
    }

    #[test]
    fn infeasible_schedule_is_an_error() {
        let mut cfg = ScenarioConfig::braking_only(10.0);
        cfg.min_gap_s = 30.0;
        assert!(matches!(
            schedule_events(&cfg, &mut SeededRng::new(0)),
            Err(Error::InfeasibleSchedule(_))
        ));
    }

    #[test]
    fn channel_rates_follow_modality() {
        let schema = FeatureSchema::standard();
        let (logs, _) = generate(&small(), &schema).unwrap();
        let log = &logs[0];
        assert_eq!(log.channels.len(), 50);
        assert_eq!(log.channel("brake_pressure").unwrap().samples.len(), 120 * 80 + 1);
        assert_eq!(log.channel("head_angle_q1").unwrap().samples.len(), 120 * 30 + 1);
        assert_eq!(log.channel("intersection_distance").unwrap().samples.len(), 121);
        log.validate().unwrap();
    }

    #[test]
    fn precursor_shape_steps_ramps_then_holds() {
        assert_eq!(precursor_shape(5.0, 6.0, 10.0, 2.0), 0.0);
        assert_eq!(precursor_shape(6.0, 6.0, 10.0, 2.0), 1.0);
        assert_eq!(precursor_shape(8.0, 6.0, 10.0, 2.0), 1.5);
        assert_eq!(precursor_shape(11.0, 6.0, 10.0, 2.0), 2.0);
        assert_eq!(precursor_shape(12.5, 6.0, 10.0, 2.0), 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let schema = FeatureSchema::standard();
        let mut cfg = small();
        cfg.min_gap_s = 1.0;
        assert!(cfg.validate(&schema).is_err());
        let mut cfg = small();
        cfg.actions
            .insert(ActionClass::Braking, vec![act("gear_position", 1.0, 1.0)]);
        assert!(cfg.validate(&schema).is_err());
        let mut cfg = small();
        cfg.num_sessions = 0;
        assert!(cfg.validate(&schema).is_err());
    }
}
