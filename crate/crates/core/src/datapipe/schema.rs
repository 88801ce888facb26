use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const STANDARD_SCHEMA_ID: &str = "dap-features-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    CanBus,
    Face,
    Hand,
    Dash,
    GpsMap,
}

impl Modality {
    pub const ALL: [Modality; 5] = [Modality::CanBus, Modality::Face, Modality::Hand, Modality::Dash, Modality::GpsMap];

    /// Native logging rate of the sensor feeding this group.
    pub fn native_rate_hz(self) -> f64 {
        match self {
            Modality::CanBus => 80.0,
            Modality::Face | Modality::Hand | Modality::Dash => 30.0,
            Modality::GpsMap => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::CanBus => "can_bus",
            Modality::Face => "face",
            Modality::Hand => "hand",
            Modality::Dash => "dash",
            Modality::GpsMap => "gps_map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Continuous; linearly interpolated and extrapolated when resampling.
    Float,
    /// Integer-coded category; holds the nearest past value when resampling.
    Factor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub modality: Modality,
    pub kind: ChannelKind,
}

/// Ordered feature channels. The standard layout has 50 channels in five
/// modality groups of 8, 9, 19, 12 and 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub id: String,
    pub channels: Vec<Channel>,
}

const STANDARD_GROUP_SIZES: [(Modality, usize); 5] = [
    (Modality::CanBus, 8),
    (Modality::Face, 9),
    (Modality::Hand, 19),
    (Modality::Dash, 12),
    (Modality::GpsMap, 2),
];

impl FeatureSchema {
    pub fn standard() -> Self {
        use ChannelKind::{Factor, Float};
        use Modality::*;
        let spec: &[(Modality, &[(&str, ChannelKind)])] = &[
            (
                CanBus,
                &[
                    ("brake_pressure", Float),
                    ("accel_pressure", Float),
                    ("gear_position", Factor),
                    ("steering_angle", Float),
                    ("velocity", Float),
                    ("acceleration", Float),
                    ("engine_rpm", Float),
                    ("elevation", Float),
                ],
            ),
            (
                Face,
                &[
                    ("head_motion_mean", Float),
                    ("head_hmove_lt_m2", Float),
                    ("head_hmove_m2_0", Float),
                    ("head_hmove_0_2", Float),
                    ("head_hmove_gt_2", Float),
                    ("head_angle_q1", Float),
                    ("head_angle_q2", Float),
                    ("head_angle_q3", Float),
                    ("head_angle_q4", Float),
                ],
            ),
            (
                Hand,
                &[
                    ("left_hand_x", Float),
                    ("left_hand_y", Float),
                    ("right_hand_x", Float),
                    ("right_hand_y", Float),
                    ("left_hand_dist", Float),
                    ("right_hand_dist", Float),
                    ("left_hand_angle", Float),
                    ("right_hand_angle", Float),
                    ("left_on_wheel", Factor),
                    ("right_on_wheel", Factor),
                    ("left_wheel_pos", Float),
                    ("right_wheel_pos", Float),
                    ("left_hand_moving", Factor),
                    ("right_hand_moving", Factor),
                    ("left_move_dist", Float),
                    ("right_move_dist", Float),
                    ("left_move_dir", Float),
                    ("right_move_dir", Float),
                    ("hands_on_wheel", Factor),
                ],
            ),
            (
                Dash,
                &[
                    ("left_lane_available", Factor),
                    ("right_lane_available", Factor),
                    ("left_lane_offset", Float),
                    ("right_lane_offset", Float),
                    ("left_lane_curvature", Float),
                    ("right_lane_curvature", Float),
                    ("lead_obj_distance", Float),
                    ("lead_obj_speed", Float),
                    ("left_obj_distance", Float),
                    ("left_obj_speed", Float),
                    ("right_obj_distance", Float),
                    ("right_obj_speed", Float),
                ],
            ),
            (GpsMap, &[("intersection_state", Factor), ("intersection_distance", Float)]),
        ];
        let channels = spec
            .iter()
            .flat_map(|(modality, chans)| {
                chans.iter().map(move |(name, kind)| Channel {
                    name: (*name).to_string(),
                    modality: *modality,
                    kind: *kind,
                })
            })
            .collect();
        Self {
            id: STANDARD_SCHEMA_ID.to_string(),
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn group_size(&self, modality: Modality) -> usize {
        self.channels.iter().filter(|c| c.modality == modality).count()
    }

    /// Checks the standard group layout and name uniqueness.
    pub fn validate(&self) -> Result<()> {
        for (modality, size) in STANDARD_GROUP_SIZES {
            let found = self.group_size(modality);
            if found != size {
                return Err(Error::SchemaMismatch(format!(
                    "group {} has {found} channels, expected {size}",
                    modality.as_str()
                )));
            }
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.channels.len() {
            return Err(Error::SchemaMismatch("duplicate channel names".into()));
        }
        Ok(())
    }

    /// Short content hash over channel names, kinds and groups.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.id.as_bytes());
        for c in &self.channels {
            h.update(format!("\n{}:{:?}:{:?}", c.name, c.kind, c.modality).as_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
