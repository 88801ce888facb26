use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::recognize::{ActionClass, ActionEvent};
use super::resample::{frame_time, FrameSeries, FRAME_RATE_HZ};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};

/// Slack for comparing times derived from different float computations.
pub const TIME_EPS: f64 = 1e-9;

/// One labeled input window.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `T x F`, oldest frame first.
    pub window: Matrix,
    /// 0 is the negative class; action classes follow in task order.
    pub label: usize,
    /// `t_a - t` for positives, absent for negatives.
    pub time_to_event: Option<f64>,
    pub session_id: String,
    /// Time of the window's last frame.
    pub end_time: f64,
}

impl Example {
    pub fn is_positive(&self) -> bool {
        self.label != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Braking,
    LaneChange,
    Turns,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Braking, TaskKind::LaneChange, TaskKind::Turns];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Braking => "braking",
            TaskKind::LaneChange => "lane_change",
            TaskKind::Turns => "turns",
        }
    }

    pub fn positive_classes(self) -> &'static [ActionClass] {
        match self {
            TaskKind::Braking => &[ActionClass::Braking],
            TaskKind::LaneChange => &[ActionClass::LaneChangeLeft, ActionClass::LaneChangeRight],
            TaskKind::Turns => &[ActionClass::TurnLeft, ActionClass::TurnRight],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task `{s}` (expected braking, lane_change or turns)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Negatives kept per positive after balancing.
    pub balance_ratio: f64,
}

pub const NEGATIVE_CLASS_NAME: &str = "negative";

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            balance_ratio: 1.5,
        }
    }

    pub fn with_ratio(kind: TaskKind, balance_ratio: f64) -> Result<Self> {
        let spec = Self { kind, balance_ratio };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.balance_ratio > 0.0 && self.balance_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "balance ratio must be a positive number, got {}",
                self.balance_ratio
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.kind.as_str()
    }

    pub fn positive_classes(&self) -> &'static [ActionClass] {
        self.kind.positive_classes()
    }

    pub fn num_classes(&self) -> usize {
        self.positive_classes().len() + 1
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        std::iter::once(NEGATIVE_CLASS_NAME)
            .chain(self.positive_classes().iter().map(|c| c.as_str()))
            .collect()
    }

    /// Label index of an action class, if the task predicts it.
    pub fn label_of(&self, class: ActionClass) -> Option<usize> {
        self.positive_classes().iter().position(|&c| c == class).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowingParams {
    /// Prediction horizon `d` in seconds.
    pub horizon_s: f64,
    /// Window length `T` in frames.
    pub window: usize,
    /// Frames between consecutive window ends.
    pub stride: usize,
    /// Windows ending in `[t_a, t_a + exec_len_s]` are dropped.
    pub exec_len_s: f64,
}

impl Default for WindowingParams {
    fn default() -> Self {
        Self {
            horizon_s: 5.0,
            window: 50,
            stride: 5,
            exec_len_s: 2.0,
        }
    }
}

impl WindowingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be > 0, got {}", self.horizon_s)));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig("window length and stride must be at least one frame".into()));
        }
        if !(self.exec_len_s >= 0.0 && self.exec_len_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("exec_len must be >= 0, got {}", self.exec_len_s)));
        }
        Ok(())
    }

    pub fn window_seconds(&self) -> f64 {
        self.window as f64 / FRAME_RATE_HZ
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowLabel {
    Positive { label: usize, time_to_event: f64 },
    Negative,
    Excluded,
}

/// Label of a window ending at `t`.
///
/// Windows inside any action's execution zone are excluded. Otherwise the
/// nearest upcoming task event with `0 < t_a - t <= d` makes the window
/// positive; everything else is negative.
pub fn label_for_time(t: f64, events: &[ActionEvent], task: &TaskSpec, params: &WindowingParams) -> WindowLabel {
    let in_execution = events
        .iter()
        .any(|e| t >= e.onset - TIME_EPS && t <= e.onset + params.exec_len_s + TIME_EPS);
    if in_execution {
        return WindowLabel::Excluded;
    }
    let mut best: Option<(usize, f64)> = None;
    for e in events {
        let Some(label) = task.label_of(e.class) else { continue };
        let tte = e.onset - t;
        if tte > TIME_EPS && tte <= params.horizon_s + TIME_EPS && best.map_or(true, |(_, b)| tte < b) {
            best = Some((label, tte));
        }
    }
    match best {
        Some((label, time_to_event)) => WindowLabel::Positive { label, time_to_event },
        None => WindowLabel::Negative,
    }
}

/// Sliding windows over one session, labeled against `events`.
///
/// Window ends sit at frames `T-1, T-1+stride, ...`, so every window lies
/// fully inside the session.
pub fn build_examples(
    series: &FrameSeries,
    events: &[ActionEvent],
    task: &TaskSpec,
    params: &WindowingParams,
) -> Result<Vec<Example>> {
    params.validate()?;
    let n = series.len();
    let t_len = params.window;
    if t_len > n {
        warn!(
            "session {}: window of {} frames exceeds the session's {} frames; no examples",
            series.session_id, t_len, n
        );
        return Ok(Vec::new());
    }
    let width = series.frames.cols();
    let data = series.frames.as_slice();
    let mut out = Vec::new();
    let mut end = t_len - 1;
    while end < n {
        let t = frame_time(end);
        let (label, time_to_event) = match label_for_time(t, events, task, params) {
            WindowLabel::Excluded => {
                end += params.stride;
                continue;
            }
            WindowLabel::Negative => (0, None),
            WindowLabel::Positive { label, time_to_event } => (label, Some(time_to_event)),
        };
        let start = end + 1 - t_len;
        let window = Matrix::new(t_len, width, data[start * width..(end + 1) * width].to_vec())?;
        out.push(Example {
            window,
            label,
            time_to_event,
            session_id: series.session_id.clone(),
            end_time: t,
        });
        end += params.stride;
    }
    Ok(out)
}

/// Keeps every positive and a uniform subsample of `⌈ratio × positives⌉`
/// negatives (all of them if fewer exist). Relative order is preserved.
pub fn balance_classes(examples: Vec<Example>, task: &TaskSpec, rng: &mut SeededRng) -> Result<Vec<Example>> {
    task.validate()?;
    let positives = examples.iter().filter(|e| e.is_positive()).count();
    if positives == 0 {
        return Err(Error::NoPositives(task.name().to_string()));
    }
    let negatives = examples.len() - positives;
    let target = balance_target(positives, task.balance_ratio);
    if target > negatives {
        warn!(
            "task {}: requested {target} negatives but only {negatives} available; keeping all",
            task.name()
        );
    }
    let keep = rng.sample_indices(negatives, target);
    let mut keep = keep.into_iter().peekable();
    let mut neg_idx = 0usize;
    let mut out = Vec::with_capacity(positives + target.min(negatives));
    for ex in examples {
        if ex.is_positive() {
            out.push(ex);
            continue;
        }
        if keep.peek() == Some(&neg_idx) {
            keep.next();
            out.push(ex);
        }
        neg_idx += 1;
    }
    Ok(out)
}

/// `⌈ratio × positives⌉`, robust to representation error in the product.
pub fn balance_target(positives: usize, ratio: f64) -> usize {
    (ratio * positives as f64 - TIME_EPS).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl DatasetSplit {
    /// Sorted session ids per split.
    pub fn sessions(&self) -> [Vec<String>; 3] {
        let ids = |xs: &[Example]| {
            let mut v: Vec<String> = xs.iter().map(|e| e.session_id.clone()).collect();
            v.sort();
            v.dedup();
            v
        };
        [ids(&self.train), ids(&self.val), ids(&self.test)]
    }
}

/// Partitions by session into train/validation/test.
///
/// Sessions are shuffled, then each goes to the split whose cumulative
/// fraction range holds the midpoint of the session's example-count span.
/// An empty split takes one session from the largest split.
pub fn split_dataset(examples: Vec<Example>, fractions: [f64; 3], rng: &mut SeededRng) -> Result<DatasetSplit> {
    if fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &examples {
        *counts.entry(e.session_id.clone()).or_default() += 1;
    }
    if counts.len() < 3 {
        return Err(Error::TooFewSessions(counts.len()));
    }
    let mut sessions: Vec<(String, usize)> = counts.into_iter().collect();
    rng.shuffle(&mut sessions);

    let total = examples.len() as f64;
    let bounds = [fractions[0] * total, (fractions[0] + fractions[1]) * total];
    let mut assign: Vec<usize> = Vec::with_capacity(sessions.len());
    let mut cum = 0.0;
    for (_, n) in &sessions {
        let mid = cum + *n as f64 / 2.0;
        assign.push(if mid < bounds[0] {
            0
        } else if mid < bounds[1] {
            1
        } else {
            2
        });
        cum += *n as f64;
    }
    for split in 0..3 {
        if assign.contains(&split) {
            continue;
        }
        let sizes = |a: &[usize]| {
            let mut s = [0usize; 3];
            for &x in a {
                s[x] += 1;
            }
            s
        };
        let s = sizes(&assign);
        let donor = (0..3).max_by_key(|&i| (s[i], std::cmp::Reverse(i))).unwrap_or(0);
        // Take the donor's session nearest to the empty split's side.
        let pos = if split < donor {
            assign.iter().position(|&a| a == donor)
        } else {
            assign.iter().rposition(|&a| a == donor)
        };
        if let Some(p) = pos {
            assign[p] = split;
        }
    }

    let lookup: BTreeMap<String, usize> = sessions.into_iter().map(|(s, _)| s).zip(assign).collect();
    let mut out = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for e in examples {
        match lookup[&e.session_id] {
            0 => out.train.push(e),
            1 => out.val.push(e),
            _ => out.test.push(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::recognize::EventSource;

    fn braking_at(t: f64) -> ActionEvent {
        ActionEvent {
            class: ActionClass::Braking,
            onset: t,
            source: EventSource::GroundTruth,
        }
    }

    fn tiny(session: &str, label: usize) -> Example {
        Example {
            window: Matrix::zeros(1, 1),
            label,
            time_to_event: (label != 0).then_some(1.0),
            session_id: session.into(),
            end_time: 0.0,
        }
    }

    #[test]
    fn labeling_rules_around_an_event() {
        let task = TaskSpec::new(TaskKind::Braking);
        let p = WindowingParams::default();
        let ev = [braking_at(100.0)];
        assert_eq!(
            label_for_time(96.0, &ev, &task, &p),
            WindowLabel::Positive {
                label: 1,
                time_to_event: 4.0
            }
        );
        assert_eq!(label_for_time(94.9, &ev, &task, &p), WindowLabel::Negative);
        assert!(matches!(label_for_time(95.0, &ev, &task, &p), WindowLabel::Positive { .. }));
        assert_eq!(label_for_time(100.5, &ev, &task, &p), WindowLabel::Excluded);
        assert_eq!(label_for_time(102.1, &ev, &task, &p), WindowLabel::Negative);
    }

    #[test]
    fn nearer_event_wins() {
        let task = TaskSpec::new(TaskKind::LaneChange);
        let p = WindowingParams::default();
        let ev = [
            ActionEvent {
                class: ActionClass::LaneChangeRight,
                onset: 14.0,
                source: EventSource::GroundTruth,
            },
            ActionEvent {
                class: ActionClass::LaneChangeLeft,
                onset: 12.0,
                source: EventSource::GroundTruth,
            },
        ];
        assert_eq!(
            label_for_time(10.0, &ev, &task, &p),
            WindowLabel::Positive {
                label: 1,
                time_to_event: 2.0
            }
        );
    }

    #[test]
    fn other_task_events_are_negative_but_excluded_during_execution() {
        let task = TaskSpec::new(TaskKind::Turns);
        let p = WindowingParams::default();
        let ev = [braking_at(50.0)];
        assert_eq!(label_for_time(48.0, &ev, &task, &p), WindowLabel::Negative);
        assert_eq!(label_for_time(51.0, &ev, &task, &p), WindowLabel::Excluded);
    }

    #[test]
    fn balance_counts() {
        let mut ex: Vec<Example> = (0..10).map(|_| tiny("a", 1)).collect();
        ex.extend((0..100).map(|_| tiny("a", 0)));
        let task = TaskSpec::new(TaskKind::Braking);
        let b = balance_classes(ex.clone(), &task, &mut SeededRng::new(1)).unwrap();
        assert_eq!(b.iter().filter(|e| !e.is_positive()).count(), 15);
        let big = TaskSpec::with_ratio(TaskKind::Braking, 50.0).unwrap();
        let b = balance_classes(ex.clone(), &big, &mut SeededRng::new(1)).unwrap();
        assert_eq!(b.len(), 110);
        let none: Vec<Example> = (0..5).map(|_| tiny("a", 0)).collect();
        assert!(matches!(balance_classes(none, &task, &mut SeededRng::new(1)), Err(Error::NoPositives(_))));
        assert_eq!(balance_target(1033, 1.5), 1550);
    }

    #[test]
    fn twenty_equal_sessions_split_14_3_3() {
        let ex: Vec<Example> = (0..20)
            .flat_map(|s| (0..7).map(move |_| tiny(&format!("s{s:02}"), 0)))
            .collect();
        let split = split_dataset(ex, [0.7, 0.15, 0.15], &mut SeededRng::new(3)).unwrap();
        let [tr, va, te] = split.sessions();
        assert_eq!((tr.len(), va.len(), te.len()), (14, 3, 3));
    }

    #[test]
    fn split_needs_three_sessions() {
        let ex = vec![tiny("a", 0), tiny("b", 0)];
        assert!(matches!(
            split_dataset(ex, [0.7, 0.15, 0.15], &mut SeededRng::new(0)),
            Err(Error::TooFewSessions(2))
        ));
    }

    #[test]
    fn split_fills_empty_splits() {
        let ex = vec![tiny("a", 0), tiny("b", 0), tiny("c", 0)];
        let split = split_dataset(ex, [0.98, 0.01, 0.01], &mut SeededRng::new(0)).unwrap();
        let [tr, va, te] = split.sessions();
        assert_eq!((tr.len(), va.len(), te.len()), (1, 1, 1));
    }

    #[test]
    fn short_session_gives_no_examples() {
        let s = FrameSeries {
            session_id: "x".into(),
            frames: Matrix::zeros(10, 3),
        };
        let ex = build_examples(&s, &[], &TaskSpec::new(TaskKind::Braking), &WindowingParams::default()).unwrap();
        assert!(ex.is_empty());
    }
}
