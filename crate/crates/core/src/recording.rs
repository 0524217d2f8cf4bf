//! Session data model, the line-delimited recording format, and frame windows.
//!
//! A recording is a pair of files: a JSON manifest describing the session
//! roster and one JSON record per line for the tracked frames. Frames carry
//! four device poses (root, headset, both controllers) and the scalar voice
//! volume. Everything downstream consumes the validated in-memory structures,
//! never the raw files.
//!
//! Coordinate conventions: y is vertical, the horizontal plane is x-z, angles
//! are degrees, yaw is normalized to (-180, 180], and positive pitch means the
//! head rotates downward.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal tracker rate.
pub const FRAME_RATE: f64 = 30.0;
/// Nominal inter-frame gap in seconds.
pub const FRAME_PERIOD: f64 = 1.0 / FRAME_RATE;
/// Tolerance for timestamp boundary comparisons (seconds).
pub const TIME_EPS: f64 = 1e-9;
/// Nearest-frame clock alignment tolerance (seconds).
pub const ALIGN_TOLERANCE: f64 = 1.0 / 60.0;
/// Inter-frame gaps above this are reported as clock gaps (seconds).
pub const GAP_WARN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("frames line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("frames line {line}: unknown user {user}")]
    UnknownUser { line: usize, user: String },
    #[error("manifest user {user} has no frames")]
    UserWithoutFrames { user: String },
    #[error("group has {count} users, need at least 3")]
    GroupTooSmall { count: usize },
    #[error("group has {count} users, at most 4 supported")]
    GroupTooLarge { count: usize },
    #[error("frames line {line}: volume {value} outside [0, 1]")]
    VolumeOutOfRange { line: usize, value: f64 },
    #[error("frames line {line}: {device} pose invalid: {detail}")]
    InvalidPose {
        line: usize,
        device: &'static str,
        detail: String,
    },
    #[error("user {user}: timestamp {t} not strictly increasing")]
    NonMonotonicTimestamp { user: String, t: f64 },
    #[error("window [{start}, {start_plus_dur}) outside recording span of user {user}")]
    WindowOutOfRange {
        user: String,
        start: f64,
        start_plus_dur: f64,
    },
    #[error("window has fewer than 2 frames for user {user}")]
    WindowTooSparse { user: String },
    #[error("window duration must be positive, got {0}")]
    NonPositiveDuration(f64),
}

/// Six-DOF pose of one tracked device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl DevicePose {
    fn validate(&self, line: usize, device: &'static str) -> Result<(), RecordingError> {
        let vals = [self.x, self.y, self.z, self.roll, self.pitch, self.yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(RecordingError::InvalidPose {
                line,
                device,
                detail: "non-finite value".into(),
            });
        }
        if !(self.yaw > -180.0 - TIME_EPS && self.yaw <= 180.0 + TIME_EPS) {
            return Err(RecordingError::InvalidPose {
                line,
                device,
                detail: format!("yaw {} outside (-180, 180]", self.yaw),
            });
        }
        if !(-90.0 - TIME_EPS..=90.0 + TIME_EPS).contains(&self.pitch) {
            return Err(RecordingError::InvalidPose {
                line,
                device,
                detail: format!("pitch {} outside [-90, 90]", self.pitch),
            });
        }
        Ok(())
    }
}

/// One user's tracked devices plus voice volume at a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFrame {
    #[serde(rename = "t")]
    pub timestamp: f64,
    #[serde(rename = "user")]
    pub user_id: String,
    pub root: DevicePose,
    pub head: DevicePose,
    #[serde(rename = "left")]
    pub left_hand: DevicePose,
    #[serde(rename = "right")]
    pub right_hand: DevicePose,
    #[serde(rename = "vol")]
    pub volume: f64,
}

/// Big-5 trait scores from the ten-item inventory, each in [1, 7].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Big5 {
    #[serde(rename = "o")]
    pub openness: f64,
    #[serde(rename = "c")]
    pub conscientiousness: f64,
    #[serde(rename = "e")]
    pub extraversion: f64,
    #[serde(rename = "a")]
    pub agreeableness: f64,
    #[serde(rename = "n")]
    pub neuroticism: f64,
}

impl Big5 {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }

    fn validate(&self) -> Result<(), RecordingError> {
        for v in self.as_array() {
            if !(1.0..=7.0).contains(&v) {
                return Err(RecordingError::MalformedManifest(format!(
                    "big5 value {v} outside [1, 7]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEntry {
    pub user_id: String,
    pub big5: Big5,
}

/// Session roster and identity keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub group_id: String,
    pub week: u8,
    pub users: Vec<UserEntry>,
}

impl SessionManifest {
    pub fn validate(&self) -> Result<(), RecordingError> {
        if self.users.len() < 3 {
            return Err(RecordingError::GroupTooSmall {
                count: self.users.len(),
            });
        }
        if self.users.len() > 4 {
            return Err(RecordingError::GroupTooLarge {
                count: self.users.len(),
            });
        }
        if !(1..=4).contains(&self.week) {
            return Err(RecordingError::MalformedManifest(format!(
                "week {} outside 1..=4",
                self.week
            )));
        }
        let mut ids: Vec<&str> = self.users.iter().map(|u| u.user_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.users.len() {
            return Err(RecordingError::MalformedManifest(
                "duplicate user_id in roster".into(),
            ));
        }
        for u in &self.users {
            u.big5.validate()?;
        }
        Ok(())
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.user_id == user_id)
    }

    pub fn traits_of(&self, user_id: &str) -> Option<&Big5> {
        self.users
            .iter()
            .find(|u| u.user_id == user_id)
            .map(|u| &u.big5)
    }
}

/// One user's time-ordered frames.
#[derive(Debug, Clone, PartialEq)]
pub struct UserStream {
    pub user_id: String,
    pub frames: Vec<UserFrame>,
}

/// A validated session: manifest plus per-user frame streams on a common clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub manifest: SessionManifest,
    /// Streams in manifest roster order.
    pub streams: Vec<UserStream>,
    /// Frames dropped per user during clock alignment, in roster order.
    pub alignment_dropped: Vec<usize>,
}

impl SessionRecording {
    pub fn stream(&self, user_id: &str) -> Option<&UserStream> {
        self.streams.iter().find(|s| s.user_id == user_id)
    }

    /// Earliest first-frame timestamp across users.
    pub fn span_start(&self) -> f64 {
        self.streams
            .iter()
            .filter_map(|s| s.frames.first())
            .map(|f| f.timestamp)
            .fold(f64::INFINITY, f64::min)
    }

    /// Latest last-frame timestamp across users, plus one frame period.
    pub fn span_end(&self) -> f64 {
        self.streams
            .iter()
            .filter_map(|s| s.frames.last())
            .map(|f| f.timestamp + FRAME_PERIOD)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-user (timestamp, volume) series for speech labeling.
    pub fn volume_series(&self, user_id: &str) -> Vec<(f64, f64)> {
        self.stream(user_id)
            .map(|s| s.frames.iter().map(|f| (f.timestamp, f.volume)).collect())
            .unwrap_or_default()
    }
}

/// Frames of all users within a half-open time range.
#[derive(Debug, Clone)]
pub struct FrameWindow<'a> {
    pub start: f64,
    pub duration: f64,
    /// (user_id, frames) in roster order.
    pub streams: Vec<(&'a str, &'a [UserFrame])>,
}

impl<'a> FrameWindow<'a> {
    pub fn frames_of(&self, user_id: &str) -> Option<&'a [UserFrame]> {
        self.streams
            .iter()
            .find(|(u, _)| *u == user_id)
            .map(|(_, f)| *f)
    }
}

/// Load and validate a recording, aligning all users to the first user's clock.
pub fn load_recording(
    manifest_path: &Path,
    frames_path: &Path,
) -> Result<SessionRecording, RecordingError> {
    let manifest_text = fs::read_to_string(manifest_path)?;
    let manifest: SessionManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| RecordingError::MalformedManifest(e.to_string()))?;
    let file = fs::File::open(frames_path)?;
    let reader = BufReader::new(file);
    load_from_parts(manifest, reader.lines())
}

/// Core of `load_recording`, usable with in-memory sources.
pub fn load_from_parts<I>(
    manifest: SessionManifest,
    lines: I,
) -> Result<SessionRecording, RecordingError>
where
    I: IntoIterator<Item = std::io::Result<String>>,
{
    manifest.validate()?;
    let mut per_user: BTreeMap<usize, Vec<UserFrame>> = BTreeMap::new();
    for (line_idx, line) in lines.into_iter().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: UserFrame =
            serde_json::from_str(&line).map_err(|e| RecordingError::MalformedLine {
                line: line_no,
                detail: e.to_string(),
            })?;
        validate_frame(&frame, line_no)?;
        let idx =
            manifest
                .user_index(&frame.user_id)
                .ok_or_else(|| RecordingError::UnknownUser {
                    line: line_no,
                    user: frame.user_id.clone(),
                })?;
        let stream = per_user.entry(idx).or_default();
        if let Some(last) = stream.last() {
            if frame.timestamp <= last.timestamp {
                return Err(RecordingError::NonMonotonicTimestamp {
                    user: frame.user_id.clone(),
                    t: frame.timestamp,
                });
            }
        }
        stream.push(frame);
    }
    for user in &manifest.users {
        let idx = manifest.user_index(&user.user_id).unwrap();
        if per_user.get(&idx).map_or(true, |v| v.is_empty()) {
            return Err(RecordingError::UserWithoutFrames {
                user: user.user_id.clone(),
            });
        }
    }
    let mut streams = Vec::with_capacity(manifest.users.len());
    let mut dropped = Vec::with_capacity(manifest.users.len());
    let reference: Vec<f64> = per_user[&0].iter().map(|f| f.timestamp).collect();
    for (idx, user) in manifest.users.iter().enumerate() {
        let frames = per_user.remove(&idx).unwrap();
        let (aligned, n_dropped) = if idx == 0 {
            (frames, 0)
        } else {
            align_to_clock(frames, &reference)
        };
        if aligned.len() < 2 {
            return Err(RecordingError::UserWithoutFrames {
                user: user.user_id.clone(),
            });
        }
        streams.push(UserStream {
            user_id: user.user_id.clone(),
            frames: aligned,
        });
        dropped.push(n_dropped);
    }
    Ok(SessionRecording {
        manifest,
        streams,
        alignment_dropped: dropped,
    })
}

fn validate_frame(frame: &UserFrame, line: usize) -> Result<(), RecordingError> {
    if !frame.timestamp.is_finite() {
        return Err(RecordingError::MalformedLine {
            line,
            detail: "non-finite timestamp".into(),
        });
    }
    if !frame.volume.is_finite() || !(0.0..=1.0).contains(&frame.volume) {
        return Err(RecordingError::VolumeOutOfRange {
            line,
            value: frame.volume,
        });
    }
    frame.root.validate(line, "root")?;
    frame.head.validate(line, "head")?;
    frame.left_hand.validate(line, "left")?;
    frame.right_hand.validate(line, "right")?;
    Ok(())
}

/// Nearest-timestamp match of `frames` onto the reference clock. Matched
/// frames are re-stamped to the reference timestamp; unmatched ones dropped.
fn align_to_clock(frames: Vec<UserFrame>, reference: &[f64]) -> (Vec<UserFrame>, usize) {
    let n = frames.len();
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    for &ref_t in reference {
        if j >= n {
            break;
        }
        while j + 1 < n
            && (frames[j + 1].timestamp - ref_t).abs() < (frames[j].timestamp - ref_t).abs()
        {
            j += 1;
        }
        if (frames[j].timestamp - ref_t).abs() <= ALIGN_TOLERANCE + TIME_EPS {
            let mut f = frames[j].clone();
            f.timestamp = ref_t;
            out.push(f);
            j += 1;
        }
    }
    let dropped = n - out.len();
    (out, dropped)
}

/// Canonical serialization of the manifest (round-trips bit-exactly).
pub fn manifest_to_string(manifest: &SessionManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

/// Canonical serialization of the frame streams: one JSON record per line,
/// time-major, roster order within a timestamp.
pub fn frames_to_string(rec: &SessionRecording) -> String {
    let mut cursors = vec![0usize; rec.streams.len()];
    let mut out = String::new();
    loop {
        let mut next: Option<(f64, usize)> = None;
        for (si, stream) in rec.streams.iter().enumerate() {
            if let Some(frame) = stream.frames.get(cursors[si]) {
                let better = match next {
                    None => true,
                    Some((t, _)) => frame.timestamp < t - TIME_EPS,
                };
                if better {
                    next = Some((frame.timestamp, si));
                }
            }
        }
        let Some((_, si)) = next else { break };
        let frame = &rec.streams[si].frames[cursors[si]];
        writeln!(
            out,
            "{}",
            serde_json::to_string(frame).expect("frame serializes")
        )
        .unwrap();
        cursors[si] += 1;
    }
    out
}

/// Write manifest and frames files in the canonical format.
pub fn write_recording(
    rec: &SessionRecording,
    manifest_path: &Path,
    frames_path: &Path,
) -> Result<(), RecordingError> {
    fs::write(manifest_path, manifest_to_string(&rec.manifest))?;
    fs::write(frames_path, frames_to_string(rec))?;
    Ok(())
}

/// Per-user findings from `validate_recording`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserValidation {
    pub user_id: String,
    pub frame_count: usize,
    /// (timestamp of gap start, gap length) for inter-frame gaps > 100 ms.
    pub clock_gaps: Vec<(f64, f64)>,
    /// Fraction of frames with volume above the speech threshold.
    pub speech_fraction: f64,
    pub alignment_dropped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub session_id: String,
    pub users: Vec<UserValidation>,
}

impl ValidationReport {
    pub fn gap_count(&self) -> usize {
        self.users.iter().map(|u| u.clock_gaps.len()).sum()
    }
}

/// Report-only diagnostics: frame counts, clock gaps, speech fraction.
pub fn validate_recording(rec: &SessionRecording, volume_threshold: f64) -> ValidationReport {
    let users = rec
        .streams
        .iter()
        .zip(&rec.alignment_dropped)
        .map(|(stream, &dropped)| {
            let frames = &stream.frames;
            let mut gaps = Vec::new();
            for pair in frames.windows(2) {
                let gap = pair[1].timestamp - pair[0].timestamp;
                if gap > GAP_WARN_THRESHOLD + TIME_EPS {
                    gaps.push((pair[0].timestamp, gap));
                }
            }
            let above = frames
                .iter()
                .filter(|f| f.volume > volume_threshold)
                .count();
            UserValidation {
                user_id: stream.user_id.clone(),
                frame_count: frames.len(),
                clock_gaps: gaps,
                speech_fraction: if frames.is_empty() {
                    0.0
                } else {
                    above as f64 / frames.len() as f64
                },
                alignment_dropped: dropped,
            }
        })
        .collect();
    ValidationReport {
        session_id: rec.manifest.session_id.clone(),
        users,
    }
}

/// Slice the frames with timestamp in [start, start + duration).
///
/// Frames within `TIME_EPS` of a boundary belong to the later window, so
/// adjacent windows partition the stream without loss or duplication.
pub fn slice_window(
    rec: &SessionRecording,
    start: f64,
    duration: f64,
) -> Result<FrameWindow<'_>, RecordingError> {
    if duration <= 0.0 {
        return Err(RecordingError::NonPositiveDuration(duration));
    }
    let end = start + duration;
    let mut streams = Vec::with_capacity(rec.streams.len());
    for stream in &rec.streams {
        let frames = &stream.frames;
        let first = frames.first().expect("validated stream non-empty");
        let last = frames.last().expect("validated stream non-empty");
        if start < first.timestamp - TIME_EPS || end > last.timestamp + FRAME_PERIOD + TIME_EPS {
            return Err(RecordingError::WindowOutOfRange {
                user: stream.user_id.clone(),
                start,
                start_plus_dur: end,
            });
        }
        let lo = frames.partition_point(|f| f.timestamp < start - TIME_EPS);
        let hi = frames.partition_point(|f| f.timestamp < end - TIME_EPS);
        if hi - lo < 2 {
            return Err(RecordingError::WindowTooSparse {
                user: stream.user_id.clone(),
            });
        }
        streams.push((stream.user_id.as_str(), &frames[lo..hi]));
    }
    Ok(FrameWindow {
        start,
        duration,
        streams,
    })
}
