use super::schema::{ChannelKind, FeatureSchema};
use super::session::{Sample, SensorLog};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const FRAME_RATE_HZ: f64 = 10.0;

/// Tolerance when comparing sample timestamps against grid times.
const TIME_EPS: f64 = 1e-9;

/// Time of grid frame `k`.
pub fn frame_time(k: usize) -> f64 {
    k as f64 / FRAME_RATE_HZ
}

/// Uniform 10 Hz frames, one row per frame, one column per schema channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub session_id: String,
    pub frames: Matrix,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn duration(&self) -> f64 {
        frame_time(self.len())
    }

    /// One channel over all frames.
    pub fn channel(&self, idx: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.frames.get(k, idx)).collect()
    }
}

/// Resamples every schema channel onto the grid `0.0, 0.1, ...` covering
/// the session duration. Float channels are linearly interpolated inside
/// their support and linearly extrapolated beyond it; factor channels hold
/// the nearest past value (the first value before the first sample).
pub fn resample(log: &SensorLog, schema: &FeatureSchema) -> Result<FrameSeries> {
    log.validate()?;
    let n = (log.duration * FRAME_RATE_HZ + TIME_EPS).floor() as usize;
    let width = schema.len();
    let mut data = vec![0.0; n * width];
    for (c, channel) in schema.channels.iter().enumerate() {
        let samples = log
            .channel(&channel.name)
            .map(|ch| ch.samples.as_slice())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MissingChannel(channel.name.clone()))?;
        let values = match channel.kind {
            ChannelKind::Float => resample_float(samples, n),
            ChannelKind::Factor => resample_factor(samples, n),
        };
        for (k, v) in values.into_iter().enumerate() {
            data[k * width + c] = v;
        }
    }
    let frames = Matrix::new(n, width, data).map_err(|_| Error::NonFinite("resample"))?;
    Ok(FrameSeries {
        session_id: log.session_id.clone(),
        frames,
    })
}

fn lerp(a: Sample, b: Sample, t: f64) -> f64 {
    a.value + (b.value - a.value) * ((t - a.t) / (b.t - a.t))
}

fn resample_float(samples: &[Sample], n: usize) -> Vec<f64> {
    let last = samples.len() - 1;
    let mut out = Vec::with_capacity(n);
    // Index of the first sample with time > t.
    let mut next = 0;
    for k in 0..n {
        let t = frame_time(k);
        while next < samples.len() && samples[next].t <= t {
            next += 1;
        }
        let v = if samples.len() == 1 {
            samples[0].value
        } else if next == 0 {
            lerp(samples[0], samples[1], t)
        } else if next > last {
            if samples[last].t == t {
                samples[last].value
            } else {
                lerp(samples[last - 1], samples[last], t)
            }
        } else {
            lerp(samples[next - 1], samples[next], t)
        };
        out.push(v);
    }
    out
}

fn resample_factor(samples: &[Sample], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut next = 0;
    for k in 0..n {
        let t = frame_time(k);
        while next < samples.len() && samples[next].t <= t + TIME_EPS {
            next += 1;
        }
        out.push(samples[next.saturating_sub(1)].value);
    }
    out
}
