//! The fixed feature schema: ordered names, feature groups, and kinds.
//!
//! The schema is identical for every sample regardless of group size. The
//! egocentric block declares 216 slots of which 18 are identically zero by
//! construction (centered head x/z raw and head yaw raw, 9 per user), leaving
//! 198 non-trivial slots.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Feature group of Table-style organization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Speech,
    Traits,
    Egocentric,
    Dyadic,
    GroupRel,
}

/// Scaling behavior of a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub group: FeatureGroup,
    pub kind: FeatureKind,
}

/// Knobs that shape the schema and window extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Length of the pre-onset window in seconds.
    pub window_duration: f64,
    /// View lengths for visual shared space, meters.
    pub vs_lengths: Vec<f64>,
    /// Number of preceding speaker turns encoded.
    pub sequence_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_duration: 1.0,
            vs_lengths: vec![1.0, 5.0, 10.0],
            sequence_len: 10,
        }
    }
}

/// Speech-sequence symbols: the main user plus up to three others in
/// first-encounter order. "NA" turns encode as the all-zero block.
pub const SEQ_SYMBOLS: [&str; 4] = ["u", "a", "b", "c"];
/// Devices carrying egocentric features (the root is excluded).
pub const EGO_DEVICES: [&str; 3] = ["head", "lh", "rh"];
pub const DOF_NAMES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];
pub const MEAS_NAMES: [&str; 2] = ["raw", "vel"];
pub const STAT_NAMES: [&str; 3] = ["min", "max", "mean"];
/// The two users a sample describes: the scored listener and the previous
/// speaker.
pub const USER_ROLES: [&str; 2] = ["main", "ref"];
pub const BIG5_NAMES: [&str; 5] = [
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
];

fn length_label(l: f64) -> String {
    if l.fract() == 0.0 {
        format!("{}m", l as i64)
    } else {
        format!("{l}m")
    }
}

/// Ordered feature schema shared by every sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
    pub config: FeatureConfig,
    hash: String,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl PartialEq for FeatureSchema {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl FeatureSchema {
    pub fn build(config: &FeatureConfig) -> Self {
        let mut features = Vec::new();
        let mut push = |name: String, group: FeatureGroup, kind: FeatureKind| {
            features.push(FeatureDef { name, group, kind });
        };

        // Speech block: one-hot preceding-turn symbols plus recency scalars.
        for turn in 1..=config.sequence_len {
            for sym in SEQ_SYMBOLS {
                push(
                    format!("seq_t{turn}_{sym}"),
                    FeatureGroup::Speech,
                    FeatureKind::OneHot,
                );
            }
        }
        push(
            "turns_since_last_speech".into(),
            FeatureGroup::Speech,
            FeatureKind::Continuous,
        );
        push(
            "time_since_last_speech_end".into(),
            FeatureGroup::Speech,
            FeatureKind::Continuous,
        );
        push(
            "has_spoken".into(),
            FeatureGroup::Speech,
            FeatureKind::Binary,
        );

        // Individual and group traits.
        for role in USER_ROLES {
            for trait_name in BIG5_NAMES {
                push(
                    format!("{role}_big5_{trait_name}"),
                    FeatureGroup::Traits,
                    FeatureKind::Continuous,
                );
            }
        }
        for trait_name in BIG5_NAMES {
            push(
                format!("group_big5_{trait_name}"),
                FeatureGroup::Traits,
                FeatureKind::Continuous,
            );
        }
        push(
            "group_size".into(),
            FeatureGroup::Traits,
            FeatureKind::Continuous,
        );

        // Egocentric motion: device x DOF x measurement x stat, per role.
        for role in USER_ROLES {
            for device in EGO_DEVICES {
                for dof in DOF_NAMES {
                    for meas in MEAS_NAMES {
                        for stat in STAT_NAMES {
                            push(
                                format!("{role}_{device}_{dof}_{meas}_{stat}"),
                                FeatureGroup::Egocentric,
                                FeatureKind::Continuous,
                            );
                        }
                    }
                }
            }
        }

        // Dyadic relationship between the main and reference user.
        for direction in ["main_to_ref", "ref_to_main"] {
            for meas in MEAS_NAMES {
                for stat in STAT_NAMES {
                    push(
                        format!("gaze_{direction}_{meas}_{stat}"),
                        FeatureGroup::Dyadic,
                        FeatureKind::Continuous,
                    );
                }
            }
        }
        for meas in MEAS_NAMES {
            for stat in STAT_NAMES {
                push(
                    format!("ipd_{meas}_{stat}"),
                    FeatureGroup::Dyadic,
                    FeatureKind::Continuous,
                );
            }
        }
        for &l in &config.vs_lengths {
            for meas in MEAS_NAMES {
                for stat in STAT_NAMES {
                    push(
                        format!("vss_{}_{meas}_{stat}", length_label(l)),
                        FeatureGroup::Dyadic,
                        FeatureKind::Continuous,
                    );
                }
            }
        }

        // Group relationship: each role against the remaining members.
        for role in USER_ROLES {
            for measure in ["gaze_to_group", "gaze_from_group", "group_ipd"] {
                for meas in MEAS_NAMES {
                    for stat in STAT_NAMES {
                        push(
                            format!("{role}_{measure}_{meas}_{stat}"),
                            FeatureGroup::GroupRel,
                            FeatureKind::Continuous,
                        );
                    }
                }
            }
            for &l in &config.vs_lengths {
                for meas in MEAS_NAMES {
                    for stat in STAT_NAMES {
                        push(
                            format!("{role}_group_vss_{}_{meas}_{stat}", length_label(l)),
                            FeatureGroup::GroupRel,
                            FeatureKind::Continuous,
                        );
                    }
                }
            }
        }

        let mut schema = FeatureSchema {
            features,
            config: config.clone(),
            hash: String::new(),
            index: BTreeMap::new(),
        };
        schema.rebuild_caches();
        schema
    }

    fn rebuild_caches(&mut self) {
        let mut hasher = Sha256::new();
        for f in &self.features {
            hasher.update(f.name.as_bytes());
            hasher.update([b'|']);
            hasher.update(format!("{:?}|{:?}\n", f.group, f.kind).as_bytes());
        }
        self.hash = format!("{:x}", hasher.finalize());
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.clone(), i))
            .collect();
    }

    /// Restore the derived lookup table after deserialization.
    pub fn ensure_caches(&mut self) {
        if self.index.is_empty() {
            let hash = self.hash.clone();
            self.rebuild_caches();
            assert_eq!(hash, self.hash, "schema hash mismatch after reload");
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn def(&self, idx: usize) -> &FeatureDef {
        &self.features[idx]
    }

    /// Indices of all features in a group.
    pub fn group_indices(&self, group: FeatureGroup) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of features whose name starts with `prefix`.
    pub fn indices_with_prefix(&self, prefix: &str) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.name.starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    }
}
