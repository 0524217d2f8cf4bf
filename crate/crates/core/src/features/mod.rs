//! Feature extraction for a (moment, main user, reference user) sample.
//!
//! A sample describes the second of behavior before a moment `t`: speech
//! history walking backward from `t`, trait features from the manifest,
//! egocentric motion summaries in body space, and the dyadic and group
//! geometry between the two users of interest and the remaining members.
//! All motion features use only frames with timestamp strictly before `t`.

mod schema;

pub use schema::{
    FeatureConfig, FeatureDef, FeatureGroup, FeatureKind, FeatureSchema, BIG5_NAMES, DOF_NAMES,
    EGO_DEVICES, MEAS_NAMES, SEQ_SYMBOLS, STAT_NAMES, USER_ROLES,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    body_space_transform, pair_series, velocity_series, yaw_velocity_series, BodySpaceWindow,
    GeometryError, PairSeries,
};
use crate::recording::{
    slice_window, FrameWindow, RecordingError, SessionManifest, SessionRecording,
};
use crate::speech::MainSpeakerTimeline;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Window(#[from] RecordingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("user {0} not in manifest")]
    UnknownUser(String),
    #[error("main user and reference user must differ")]
    MainEqualsReference,
}

/// Identifying keys carried by every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub session_id: String,
    pub group_id: String,
    pub week: u8,
    pub onset: f64,
    pub main_user: String,
    pub reference_user: String,
}

/// Values aligned to a `FeatureSchema` plus provenance keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

fn stats(series: &[f64]) -> (f64, f64, f64) {
    debug_assert!(!series.is_empty());
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in series {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    (min, max, sum / series.len() as f64)
}

fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

fn push_stats(out: &mut Vec<f64>, series: &[f64]) {
    let (min, max, mean) = stats(series);
    out.push(min);
    out.push(max);
    out.push(mean);
}

/// Symbol index per preceding turn, most recent first: 0 for the main user,
/// 1..=3 for other speakers in first-encounter order, `None` once speaker
/// changes run out.
pub fn speech_sequence_symbols(
    timeline: &MainSpeakerTimeline,
    main_user: &str,
    t: f64,
    len: usize,
) -> Vec<Option<usize>> {
    let turns = timeline.turns_before(t);
    let mut mapping: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(len);
    for turn in turns.iter().take(len) {
        let sym = if turn.speaker_id == main_user {
            0
        } else {
            match mapping.iter().position(|&u| u == turn.speaker_id) {
                Some(i) => i + 1,
                None => {
                    mapping.push(&turn.speaker_id);
                    mapping.len()
                }
            }
        };
        // Groups of at most four mean at most three non-main symbols.
        debug_assert!(sym < SEQ_SYMBOLS.len());
        out.push(Some(sym));
    }
    out.resize(len, None);
    out
}

/// One-hot encoding of `speech_sequence_symbols`: 4 slots per turn index,
/// all-zero for turns beyond the last speaker change.
pub fn speech_sequence_features(
    timeline: &MainSpeakerTimeline,
    main_user: &str,
    t: f64,
    len: usize,
) -> Vec<f64> {
    let symbols = speech_sequence_symbols(timeline, main_user, t, len);
    let mut out = vec![0.0; len * SEQ_SYMBOLS.len()];
    for (turn, sym) in symbols.iter().enumerate() {
        if let Some(s) = sym {
            out[turn * SEQ_SYMBOLS.len() + s] = 1.0;
        }
    }
    out
}

/// Recency of the main user's speech, measured backward from `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecencyFeatures {
    /// 1-based turn index of the main user's last turn; when they have not
    /// spoken, total turns so far plus one.
    pub turns_since_last_speech: f64,
    /// Seconds since the main user's last turn ended; when they have not
    /// spoken, the session time elapsed at `t`.
    pub time_since_last_speech_end: f64,
    pub has_spoken: bool,
}

pub fn speech_recency_features(
    timeline: &MainSpeakerTimeline,
    main_user: &str,
    t: f64,
    session_start: f64,
) -> RecencyFeatures {
    let turns = timeline.turns_before(t);
    match turns.iter().position(|turn| turn.speaker_id == main_user) {
        Some(idx) => RecencyFeatures {
            turns_since_last_speech: (idx + 1) as f64,
            time_since_last_speech_end: (t - turns[idx].end).max(0.0),
            has_spoken: true,
        },
        None => RecencyFeatures {
            turns_since_last_speech: (turns.len() + 1) as f64,
            time_since_last_speech_end: t - session_start,
            has_spoken: false,
        },
    }
}

/// Big-5 traits of both users, the group mean, and the group size.
pub fn trait_features(
    manifest: &SessionManifest,
    main_user: &str,
    ref_user: &str,
) -> Result<Vec<f64>, FeatureError> {
    let main = manifest
        .traits_of(main_user)
        .ok_or_else(|| FeatureError::UnknownUser(main_user.to_string()))?;
    let reference = manifest
        .traits_of(ref_user)
        .ok_or_else(|| FeatureError::UnknownUser(ref_user.to_string()))?;
    let mut out = Vec::with_capacity(16);
    out.extend(main.as_array());
    out.extend(reference.as_array());
    let n = manifest.users.len() as f64;
    for k in 0..5 {
        let sum: f64 = manifest.users.iter().map(|u| u.big5.as_array()[k]).sum();
        out.push(sum / n);
    }
    out.push(manifest.users.len() as f64);
    Ok(out)
}

fn device_series(bs: &BodySpaceWindow, device: usize) -> &[crate::recording::DevicePose] {
    match device {
        0 => &bs.head,
        1 => &bs.left_hand,
        _ => &bs.right_hand,
    }
}

fn dof_value(pose: &crate::recording::DevicePose, dof: usize) -> f64 {
    match dof {
        0 => pose.x,
        1 => pose.y,
        2 => pose.z,
        3 => pose.roll,
        4 => pose.pitch,
        _ => pose.yaw,
    }
}

/// Egocentric motion block for one user: 3 devices x 6 DOF x {raw, velocity}
/// x {min, max, mean} = 108 values.
///
/// Raw values come from the centered body-space transform, velocities from
/// the uncentered transform, and yaw velocities from the raw pre-transform
/// yaw series (the transform zeroes what head-yaw rotation looks like).
pub fn egocentric_features(
    window: &FrameWindow<'_>,
    user_id: &str,
) -> Result<Vec<f64>, FeatureError> {
    let centered = body_space_transform(window, user_id, true)?;
    let uncentered = body_space_transform(window, user_id, false)?;
    let frames = window
        .frames_of(user_id)
        .ok_or_else(|| FeatureError::UnknownUser(user_id.to_string()))?;
    let ts = &centered.timestamps;

    let mut out = Vec::with_capacity(108);
    for device in 0..3 {
        for dof in 0..6 {
            let raw: Vec<f64> = device_series(&centered, device)
                .iter()
                .map(|p| dof_value(p, dof))
                .collect();
            let vel = if dof == 5 {
                let raw_yaw: Vec<(f64, f64)> = frames
                    .iter()
                    .map(|f| {
                        let pose = match device {
                            0 => &f.head,
                            1 => &f.left_hand,
                            _ => &f.right_hand,
                        };
                        (f.timestamp, pose.yaw)
                    })
                    .collect();
                yaw_velocity_series(&raw_yaw)?
            } else {
                let samples: Vec<(f64, f64)> = device_series(&uncentered, device)
                    .iter()
                    .zip(ts)
                    .map(|(p, &t)| (t, dof_value(p, dof)))
                    .collect();
                velocity_series(&samples)?
            };
            push_stats(&mut out, &raw);
            push_stats(&mut out, &vel);
        }
    }
    Ok(out)
}

fn series_raw_and_vel(out: &mut Vec<f64>, timestamps: &[f64], values: &[f64]) {
    push_stats(out, values);
    let samples: Vec<(f64, f64)> = timestamps.iter().copied().zip(values.iter().copied()).collect();
    let vel = velocity_series(&samples).expect("pair series has >= 2 frames");
    push_stats(out, &vel);
}

/// Dyadic relationship block: both gaze directions, interpersonal distance,
/// and visual shared space at each view length; raw and velocity, three
/// stats each = 36 values.
pub fn dyadic_features(
    window: &FrameWindow<'_>,
    main_user: &str,
    ref_user: &str,
    vs_lengths: &[f64],
) -> Result<Vec<f64>, FeatureError> {
    let main_frames = window
        .frames_of(main_user)
        .ok_or_else(|| FeatureError::UnknownUser(main_user.to_string()))?;
    let ref_frames = window
        .frames_of(ref_user)
        .ok_or_else(|| FeatureError::UnknownUser(ref_user.to_string()))?;
    let series = pair_series(main_frames, ref_frames, vs_lengths)?;
    Ok(dyadic_from_series(&series, vs_lengths.len()))
}

fn dyadic_from_series(series: &PairSeries, n_lengths: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(12 * (2 + n_lengths));
    series_raw_and_vel(&mut out, &series.timestamps, &series.gaze_ab);
    series_raw_and_vel(&mut out, &series.timestamps, &series.gaze_ba);
    series_raw_and_vel(&mut out, &series.timestamps, &series.distance);
    for k in 0..n_lengths {
        series_raw_and_vel(&mut out, &series.timestamps, &series.shared_space[k]);
    }
    out
}

/// Pair-geometry cache for one window, keyed by roster index pair.
struct PairCache<'a> {
    window: &'a FrameWindow<'a>,
    vs_lengths: &'a [f64],
    cache: BTreeMap<(usize, usize), PairSeries>,
}

impl<'a> PairCache<'a> {
    fn new(window: &'a FrameWindow<'a>, vs_lengths: &'a [f64]) -> Self {
        Self {
            window,
            vs_lengths,
            cache: BTreeMap::new(),
        }
    }

    fn get(&mut self, i: usize, j: usize) -> Result<&PairSeries, FeatureError> {
        let key = (i.min(j), i.max(j));
        if !self.cache.contains_key(&key) {
            let a = self.window.streams[key.0].1;
            let b = self.window.streams[key.1].1;
            let series = pair_series(a, b, self.vs_lengths)?;
            self.cache.insert(key, series);
        }
        Ok(&self.cache[&key])
    }

    /// (gaze from i to j, gaze from j to i, distance, shared space) series.
    fn directed(
        &mut self,
        i: usize,
        j: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>), FeatureError> {
        let series = self.get(i, j)?;
        let (to, from) = if i < j {
            (series.gaze_ab.clone(), series.gaze_ba.clone())
        } else {
            (series.gaze_ba.clone(), series.gaze_ab.clone())
        };
        Ok((
            to,
            from,
            series.distance.clone(),
            series.shared_space.clone(),
            series.timestamps.clone(),
        ))
    }
}

/// Group relationship block: for each user of interest, pairwise series
/// against every remaining member are window-averaged (raw and velocity per
/// pair) and then summarized across pairs by min/max/mean = 72 values.
pub fn group_relationship_features(
    window: &FrameWindow<'_>,
    main_user: &str,
    ref_user: &str,
    vs_lengths: &[f64],
) -> Result<Vec<f64>, FeatureError> {
    let mut cache = PairCache::new(window, vs_lengths);
    group_features_with_cache(window, main_user, ref_user, vs_lengths, &mut cache)
}

fn group_features_with_cache(
    window: &FrameWindow<'_>,
    main_user: &str,
    ref_user: &str,
    vs_lengths: &[f64],
    cache: &mut PairCache<'_>,
) -> Result<Vec<f64>, FeatureError> {
    let roster: Vec<&str> = window.streams.iter().map(|(u, _)| *u).collect();
    let idx_of = |user: &str| -> Result<usize, FeatureError> {
        roster
            .iter()
            .position(|u| *u == user)
            .ok_or_else(|| FeatureError::UnknownUser(user.to_string()))
    };
    let mut out = Vec::with_capacity(72);
    for user in [main_user, ref_user] {
        let ui = idx_of(user)?;
        // Per-partner window means: gaze out, gaze in, distance, then shared
        // space per view length; raw and velocity for each.
        let mut gaze_to: Vec<(f64, f64)> = Vec::new();
        let mut gaze_from: Vec<(f64, f64)> = Vec::new();
        let mut dist: Vec<(f64, f64)> = Vec::new();
        let mut vss: Vec<Vec<(f64, f64)>> = vec![Vec::new(); vs_lengths.len()];
        for (pi, _) in roster.iter().enumerate() {
            if pi == ui {
                continue;
            }
            let (to, from, distance, shared, ts) = cache.directed(ui, pi)?;
            let pair_mean = |vals: &[f64]| -> (f64, f64) {
                let samples: Vec<(f64, f64)> =
                    ts.iter().copied().zip(vals.iter().copied()).collect();
                let vel = velocity_series(&samples).expect("pair series has >= 2 frames");
                (mean(vals), mean(&vel))
            };
            gaze_to.push(pair_mean(&to));
            gaze_from.push(pair_mean(&from));
            dist.push(pair_mean(&distance));
            for (k, s) in shared.iter().enumerate() {
                vss[k].push(pair_mean(s));
            }
        }
        let mut push_measure = |pairs: &[(f64, f64)]| {
            let raws: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let vels: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            push_stats(&mut out, &raws);
            push_stats(&mut out, &vels);
        };
        push_measure(&gaze_to);
        push_measure(&gaze_from);
        push_measure(&dist);
        for k in 0..vs_lengths.len() {
            push_measure(&vss[k]);
        }
    }
    Ok(out)
}

/// Extract the full feature vector for a sample at moment `t`.
///
/// The motion window is `[t - window_duration, t)`; speech features walk the
/// provided timeline backward from `t`. Frames at or after `t` are never
/// read, so perturbing them cannot change the result.
pub fn extract_sample(
    rec: &SessionRecording,
    timeline: &MainSpeakerTimeline,
    t: f64,
    main_user: &str,
    ref_user: &str,
    schema: &FeatureSchema,
) -> Result<FeatureVector, FeatureError> {
    if main_user == ref_user {
        return Err(FeatureError::MainEqualsReference);
    }
    let cfg = &schema.config;
    let window = slice_window(rec, t - cfg.window_duration, cfg.window_duration)?;

    let mut values = Vec::with_capacity(schema.len());
    values.extend(speech_sequence_features(
        timeline,
        main_user,
        t,
        cfg.sequence_len,
    ));
    let recency = speech_recency_features(timeline, main_user, t, rec.span_start());
    values.push(recency.turns_since_last_speech);
    values.push(recency.time_since_last_speech_end);
    values.push(if recency.has_spoken { 1.0 } else { 0.0 });

    values.extend(trait_features(&rec.manifest, main_user, ref_user)?);

    values.extend(egocentric_features(&window, main_user)?);
    values.extend(egocentric_features(&window, ref_user)?);

    let mut cache = PairCache::new(&window, &cfg.vs_lengths);
    let main_idx = rec
        .manifest
        .user_index(main_user)
        .ok_or_else(|| FeatureError::UnknownUser(main_user.to_string()))?;
    let ref_idx = rec
        .manifest
        .user_index(ref_user)
        .ok_or_else(|| FeatureError::UnknownUser(ref_user.to_string()))?;
    {
        let series = cache.get(main_idx, ref_idx)?;
        let dyadic = if main_idx < ref_idx {
            dyadic_from_series(series, cfg.vs_lengths.len())
        } else {
            // The cached series is oriented low-to-high roster index; swap
            // the two gaze directions for the main-to-ref view.
            let swapped = PairSeries {
                timestamps: series.timestamps.clone(),
                gaze_ab: series.gaze_ba.clone(),
                gaze_ba: series.gaze_ab.clone(),
                distance: series.distance.clone(),
                shared_space: series.shared_space.clone(),
            };
            dyadic_from_series(&swapped, cfg.vs_lengths.len())
        };
        values.extend(dyadic);
    }

    values.extend(group_features_with_cache(
        &window,
        main_user,
        ref_user,
        &cfg.vs_lengths,
        &mut cache,
    )?);

    debug_assert_eq!(values.len(), schema.len());
    Ok(FeatureVector {
        values,
        provenance: Provenance {
            session_id: rec.manifest.session_id.clone(),
            group_id: rec.manifest.group_id.clone(),
            week: rec.manifest.week,
            onset: t,
            main_user: main_user.to_string(),
            reference_user: ref_user.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::testutil::{manifest_n, pose};
    use crate::recording::{DevicePose, SessionRecording, UserFrame, UserStream, FRAME_RATE};
    use crate::speech::{MainSegment, MainSpeakerTimeline};

    fn timeline(segs: &[(&str, f64, f64)]) -> MainSpeakerTimeline {
        MainSpeakerTimeline {
            segments: segs
                .iter()
                .map(|&(u, s, e)| MainSegment {
                    speaker_id: u.into(),
                    start: s,
                    end: e,
                    event_start: s,
                })
                .collect(),
        }
    }

    /// Recording where each user's head pose is given per frame by a closure.
    fn recording_with_poses<F>(n_users: usize, secs: f64, mut f: F) -> SessionRecording
    where
        F: FnMut(usize, f64) -> UserFrame,
    {
        let manifest = manifest_n(n_users);
        let n_frames = (secs * FRAME_RATE).round() as usize;
        let streams = (0..n_users)
            .map(|u| UserStream {
                user_id: format!("u{u}"),
                frames: (0..n_frames).map(|k| f(u, k as f64 / FRAME_RATE)).collect(),
            })
            .collect();
        SessionRecording {
            manifest,
            streams,
            alignment_dropped: vec![0; n_users],
        }
    }

    fn static_frame(user: usize, t: f64, x: f64, z: f64, yaw: f64) -> UserFrame {
        UserFrame {
            timestamp: t,
            user_id: format!("u{user}"),
            root: pose(x, 0.0, z, yaw),
            head: pose(x, 1.6, z, yaw),
            left_hand: pose(x - 0.3, 1.1, z + 0.2, yaw),
            right_hand: pose(x + 0.3, 1.1, z + 0.2, yaw),
            volume: 0.0,
        }
    }

    #[test]
    fn sequence_symbols_hand_trace() {
        // Backward speakers [B, A, U, B] with main U -> [a, b, u, a, NA...].
        let tl = timeline(&[
            ("uB", 0.0, 1.0),
            ("uU", 2.0, 3.0),
            ("uA", 4.0, 5.0),
            ("uB", 6.0, 7.0),
        ]);
        let symbols = speech_sequence_symbols(&tl, "uU", 8.0, 10);
        assert_eq!(
            symbols[..4],
            [Some(1), Some(2), Some(0), Some(1)],
            "expected a, b, u, a"
        );
        assert!(symbols[4..].iter().all(|s| s.is_none()));
    }

    #[test]
    fn sequence_before_any_speech_is_all_na() {
        let tl = timeline(&[("uA", 10.0, 11.0)]);
        let feats = speech_sequence_features(&tl, "u0", 5.0, 10);
        assert!(feats.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sequence_single_other_speaker() {
        let tl = timeline(&[("uM", 0.0, 1.0), ("uM", 2.0, 3.0)]);
        let symbols = speech_sequence_symbols(&tl, "u0", 5.0, 10);
        assert_eq!(symbols[0], Some(1));
        assert!(symbols[1..].iter().all(|s| s.is_none()));
    }

    #[test]
    fn sequence_one_hot_blocks_sum_to_at_most_one() {
        let tl = timeline(&[
            ("u1", 0.0, 1.0),
            ("u2", 1.5, 2.5),
            ("u0", 3.0, 4.0),
            ("u3", 4.5, 5.0),
        ]);
        let feats = speech_sequence_features(&tl, "u0", 6.0, 10);
        for turn in 0..10 {
            let sum: f64 = feats[turn * 4..(turn + 1) * 4].iter().sum();
            assert!(sum == 0.0 || sum == 1.0);
        }
    }

    #[test]
    fn recency_two_turns_back() {
        let tl = timeline(&[("uM", 2.0, 4.0), ("uB", 5.0, 7.0)]);
        let r = speech_recency_features(&tl, "uM", 8.0, 0.0);
        assert_eq!(r.turns_since_last_speech, 2.0);
        assert!((r.time_since_last_speech_end - 4.0).abs() < 1e-12);
        assert!(r.has_spoken);
    }

    #[test]
    fn recency_never_spoken_sentinels() {
        let tl = timeline(&[("uA", 2.0, 4.0), ("uB", 5.0, 7.0)]);
        let r = speech_recency_features(&tl, "uZ", 8.0, 0.0);
        assert!(!r.has_spoken);
        assert_eq!(r.turns_since_last_speech, 3.0); // 2 turns so far + 1
        assert_eq!(r.time_since_last_speech_end, 8.0); // session elapsed
    }

    #[test]
    fn recency_segment_ending_exactly_at_t() {
        let tl = timeline(&[("uA", 0.0, 2.0), ("uM", 3.0, 5.0)]);
        let r = speech_recency_features(&tl, "uM", 5.0, 0.0);
        assert_eq!(r.turns_since_last_speech, 1.0);
        assert_eq!(r.time_since_last_speech_end, 0.0);
        assert!(r.has_spoken);
    }

    #[test]
    fn traits_mean_and_group_size() {
        let mut manifest = manifest_n(3);
        manifest.users[0].big5.extraversion = 1.0;
        manifest.users[1].big5.extraversion = 7.0;
        manifest.users[2].big5.extraversion = 4.0;
        let vals = trait_features(&manifest, "u0", "u1").unwrap();
        assert_eq!(vals.len(), 16);
        assert_eq!(vals[2], 1.0); // main extraversion
        assert_eq!(vals[7], 7.0); // ref extraversion
        assert_eq!(vals[12], 4.0); // group mean extraversion
        assert_eq!(vals[15], 3.0); // group size
        assert!(matches!(
            trait_features(&manifest, "ghost", "u1"),
            Err(FeatureError::UnknownUser(_))
        ));
    }

    #[test]
    fn egocentric_stationary_user_zeroes() {
        let rec = recording_with_poses(3, 2.0, |u, t| {
            static_frame(u, t, u as f64 * 1.5, 0.0, 25.0)
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = egocentric_features(&window, "u0").unwrap();
        assert_eq!(vals.len(), 108);
        // Layout per device/dof: raw min,max,mean then vel min,max,mean.
        let idx = |device: usize, dof: usize, meas: usize, stat: usize| {
            device * 36 + dof * 6 + meas * 3 + stat
        };
        for device in 0..3 {
            for dof in 0..6 {
                for stat in 0..3 {
                    assert_eq!(vals[idx(device, dof, 1, stat)], 0.0, "velocity not zero");
                }
            }
        }
        // Centered head x/z and yaw raw are identically zero.
        for dof in [0, 2, 5] {
            for stat in 0..3 {
                assert_eq!(vals[idx(0, dof, 0, stat)], 0.0);
            }
        }
        // Head y raw preserved.
        assert!((vals[idx(0, 1, 0, 2)] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn egocentric_hand_raise_velocity() {
        // Left hand rises 0.3 m over the 1-second window at constant speed.
        let rec = recording_with_poses(3, 2.0, |u, t| {
            let mut f = static_frame(u, t, u as f64 * 1.5, 0.0, 0.0);
            if u == 0 {
                f.left_hand.y = 1.1 + 0.3 * t;
            }
            f
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = egocentric_features(&window, "u0").unwrap();
        let idx = |device: usize, dof: usize, meas: usize, stat: usize| {
            device * 36 + dof * 6 + meas * 3 + stat
        };
        let mean_vel = vals[idx(1, 1, 1, 2)];
        assert!((mean_vel - 0.3).abs() < 1e-9, "got {mean_vel}");
    }

    #[test]
    fn egocentric_yaw_velocity_survives_transform() {
        // Head spins at 30 deg/s; body-space yaw is identically zero but the
        // velocity must come from the raw series.
        let rec = recording_with_poses(3, 2.0, |u, t| {
            let mut f = static_frame(u, t, u as f64 * 1.5, 0.0, 0.0);
            if u == 0 {
                f.head.yaw = crate::geometry::wrap_angle_deg(30.0 * t);
            }
            f
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = egocentric_features(&window, "u0").unwrap();
        let idx = |device: usize, dof: usize, meas: usize, stat: usize| {
            device * 36 + dof * 6 + meas * 3 + stat
        };
        assert!((vals[idx(0, 5, 1, 2)] - 30.0).abs() < 1e-6);
        for stat in 0..3 {
            assert_eq!(vals[idx(0, 5, 0, stat)], 0.0);
        }
    }

    #[test]
    fn dyadic_mutual_facing_static() {
        // u0 at origin facing +z toward u1; u1 facing back.
        let rec = recording_with_poses(3, 2.0, |u, t| match u {
            0 => static_frame(0, t, 0.0, 0.0, 0.0),
            1 => static_frame(1, t, 0.0, 2.0, 180.0),
            _ => static_frame(2, t, 5.0, 0.0, 0.0),
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = dyadic_features(&window, "u0", "u1", &[1.0, 5.0, 10.0]).unwrap();
        assert_eq!(vals.len(), 36);
        // gaze main->ref raw stats all zero; velocities zero.
        for v in &vals[0..6] {
            assert!(v.abs() < 1e-9);
        }
        // IPD raw min=max=mean=2, velocity zero.
        assert!((vals[12] - 2.0).abs() < 1e-9);
        assert!((vals[13] - 2.0).abs() < 1e-9);
        assert!((vals[14] - 2.0).abs() < 1e-9);
        for v in &vals[15..18] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn dyadic_vss_colocated_closed_form() {
        let rec = recording_with_poses(3, 2.0, |u, t| match u {
            0 => static_frame(0, t, 0.0, 0.0, 40.0),
            1 => static_frame(1, t, 0.0011, 0.0, 40.0), // just beyond coincidence
            _ => static_frame(2, t, 5.0, 0.0, 0.0),
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = dyadic_features(&window, "u0", "u1", &[1.0]).unwrap();
        // vss_1m raw mean is after gaze (12) + ipd (6) -> index 18..24.
        let expected = 0.5 * (104f64).to_radians().sin();
        // A 1.1 mm apex offset keeps the heads distinct but trims the overlap
        // slightly below the identical-pose closed form.
        assert!(
            (vals[20] - expected).abs() < 5e-3,
            "vss mean {} vs {expected}",
            vals[20]
        );
    }

    #[test]
    fn group_gaze_from_others_straight_at_main() {
        // Both others gaze straight at u0.
        let rec = recording_with_poses(3, 2.0, |u, t| match u {
            0 => static_frame(0, t, 0.0, 0.0, 0.0),
            1 => static_frame(1, t, 0.0, 3.0, 180.0), // faces u0
            _ => static_frame(2, t, 3.0, 0.0, -90.0), // faces u0
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = group_relationship_features(&window, "u0", "u1", &[1.0, 5.0, 10.0]).unwrap();
        assert_eq!(vals.len(), 72);
        // main block: gaze_to_group (6), gaze_from_group (6) at offset 6.
        for v in &vals[6..9] {
            assert!(v.abs() < 1e-9, "gaze from group should be 0, got {v}");
        }
    }

    #[test]
    fn group_aggregation_min_max_mean() {
        // Others at 10 and 30 degrees gaze from the ref user u0's partners.
        // Place u1, u2 so their gaze angle toward u0 is 10 and 30 degrees.
        let rec = recording_with_poses(3, 2.0, |u, t| match u {
            0 => static_frame(0, t, 0.0, 0.0, 0.0),
            1 => static_frame(1, t, 0.0, 3.0, 170.0), // 10 deg off facing u0
            _ => static_frame(2, t, 3.0, 0.0, -60.0), // 30 deg off facing u0
        });
        let window = slice_window(&rec, 0.5, 1.0).unwrap();
        let vals = group_relationship_features(&window, "u0", "u1", &[1.0, 5.0, 10.0]).unwrap();
        let from_group = &vals[6..9]; // min, max, mean raw
        assert!((from_group[0] - 10.0).abs() < 1e-9, "min {}", from_group[0]);
        assert!((from_group[1] - 30.0).abs() < 1e-9, "max {}", from_group[1]);
        assert!((from_group[2] - 20.0).abs() < 1e-9, "mean {}", from_group[2]);
    }

    #[test]
    fn group_features_order_invariant_in_roster() {
        let make = |swap: bool| {
            let rec = recording_with_poses(4, 2.0, move |u, t| {
                let u_mapped = if swap {
                    // Swap the two non-main, non-ref members' positions.
                    match u {
                        2 => 3,
                        3 => 2,
                        other => other,
                    }
                } else {
                    u
                };
                let (x, z, yaw) = match u_mapped {
                    0 => (0.0, 0.0, 0.0),
                    1 => (0.0, 3.0, 180.0),
                    2 => (3.0, 0.0, -90.0),
                    _ => (-3.0, 0.0, 90.0),
                };
                static_frame(u, t, x, z, yaw)
            });
            let window = slice_window(&rec, 0.5, 1.0).unwrap();
            group_relationship_features(&window, "u0", "u1", &[1.0, 5.0, 10.0]).unwrap()
        };
        let a = make(false);
        let b = make(true);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_sample_width_and_determinism() {
        let schema = FeatureSchema::build(&FeatureConfig::default());
        let rec = recording_with_poses(3, 4.0, |u, t| {
            let angle = u as f64 * 2.1;
            static_frame(u, t, angle.cos() * 2.0, angle.sin() * 2.0, u as f64 * 50.0)
        });
        let tl = timeline(&[("u1", 0.5, 1.5), ("u2", 1.8, 2.6)]);
        let a = extract_sample(&rec, &tl, 3.0, "u0", "u1", &schema).unwrap();
        let b = extract_sample(&rec, &tl, 3.0, "u0", "u1", &schema).unwrap();
        assert_eq!(a.values.len(), schema.len());
        assert!(a.values.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
        assert!(matches!(
            extract_sample(&rec, &tl, 3.0, "u0", "u0", &schema),
            Err(FeatureError::MainEqualsReference)
        ));
    }

    #[test]
    fn extract_sample_causal_in_frames() {
        let schema = FeatureSchema::build(&FeatureConfig::default());
        let base = recording_with_poses(3, 4.0, |u, t| {
            let angle = u as f64 * 2.1 + t * 0.1;
            static_frame(u, t, angle.cos() * 2.0, angle.sin() * 2.0, u as f64 * 50.0)
        });
        let tl = timeline(&[("u1", 0.5, 1.5), ("u2", 1.8, 2.6)]);
        let t = 3.0;
        let before = extract_sample(&base, &tl, t, "u0", "u1", &schema).unwrap();
        let mut perturbed = base.clone();
        for stream in &mut perturbed.streams {
            for f in &mut stream.frames {
                if f.timestamp >= t {
                    f.head.x += 10.0;
                    f.head.yaw = crate::geometry::wrap_angle_deg(f.head.yaw + 90.0);
                    f.volume = 0.9;
                }
            }
        }
        let after = extract_sample(&perturbed, &tl, t, "u0", "u1", &schema).unwrap();
        assert_eq!(before.values, after.values);
    }

    #[test]
    fn extract_sample_rigid_motion_invariance() {
        // Global translation + yaw rotation: dyadic/group features and
        // centered egocentric raws unchanged.
        let schema = FeatureSchema::build(&FeatureConfig::default());
        let tl = timeline(&[("u1", 0.5, 1.5)]);
        let build = |rot_deg: f64, tx: f64, tz: f64| {
            recording_with_poses(3, 3.0, move |u, t| {
                let angle = u as f64 * 2.1;
                let (x0, z0) = (angle.cos() * 2.0, angle.sin() * 2.0 + 0.05 * t);
                let yaw0 = u as f64 * 50.0;
                let r = rot_deg.to_radians();
                let (s, c) = (r.sin(), r.cos());
                let mut f = static_frame(u, t, x0 * c + z0 * s + tx, -x0 * s + z0 * c + tz, 0.0);
                let yaw = crate::geometry::wrap_angle_deg(yaw0 + rot_deg);
                f.root.yaw = yaw;
                f.head.yaw = yaw;
                f.left_hand.yaw = yaw;
                f.right_hand.yaw = yaw;
                // Hands follow the same rigid transform.
                let (lx, lz) = (x0 - 0.3, z0 + 0.2);
                f.left_hand.x = lx * c + lz * s + tx;
                f.left_hand.z = -lx * s + lz * c + tz;
                let (rx, rz) = (x0 + 0.3, z0 + 0.2);
                f.right_hand.x = rx * c + rz * s + tx;
                f.right_hand.z = -rx * s + rz * c + tz;
                f
            })
        };
        let a = extract_sample(&build(0.0, 0.0, 0.0), &tl, 2.0, "u0", "u1", &schema).unwrap();
        let b = extract_sample(&build(65.0, 3.0, -4.0), &tl, 2.0, "u0", "u1", &schema).unwrap();
        for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            let def = schema.def(i);
            let is_centered_raw = def.group == FeatureGroup::Egocentric
                && def.name.contains("_raw_");
            let is_relational =
                def.group == FeatureGroup::Dyadic || def.group == FeatureGroup::GroupRel;
            if is_centered_raw || is_relational {
                assert!(
                    (x - y).abs() < 1e-7,
                    "{} changed under rigid motion: {x} vs {y}",
                    def.name
                );
            }
        }
    }
}
