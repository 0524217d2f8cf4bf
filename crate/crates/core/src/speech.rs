//! Speech labeling: volume-threshold speech events, main-speaker resolution,
//! and the four turn-transition categories.
//!
//! The stages run in order: per-user inter-pausal units from the volume
//! channel, same-user smoothing across short gaps, overlap resolution into a
//! single main-speaker timeline, and categorization of speaker changes into
//! clean turn taking, overlap turn taking, backchannels, and continuing
//! speech. Transitions triggered by speech events shorter than the noise
//! floor are dropped last.

use serde::{Deserialize, Serialize};

use crate::recording::{SessionRecording, FRAME_PERIOD, TIME_EPS};

/// Labeling thresholds. Defaults: speech volume 0.1, smoothing gap 0.5 s,
/// minimum event duration 0.323 s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelConfig {
    pub volume_threshold: f64,
    pub max_gap: f64,
    pub min_event_duration: f64,
    pub frame_period: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            volume_threshold: 0.1,
            max_gap: 0.5,
            min_event_duration: 0.323,
            frame_period: FRAME_PERIOD,
        }
    }
}

/// A maximal stretch of speech activity by a single speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechEvent {
    pub user_id: String,
    pub start: f64,
    pub end: f64,
}

impl SpeechEvent {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// One main-speaker turn segment. `event_start` is the start of the speech
/// event backing the segment; it precedes `start` when the segment was
/// clipped to the previous main speaker's end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainSegment {
    pub speaker_id: String,
    pub start: f64,
    pub end: f64,
    pub event_start: f64,
}

/// Non-overlapping, time-ordered main-speaker segments; gaps are silence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MainSpeakerTimeline {
    pub segments: Vec<MainSegment>,
}

impl MainSpeakerTimeline {
    /// Speaker of the segment containing `t`, if any.
    pub fn speaker_at(&self, t: f64) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| t >= s.start - TIME_EPS && t < s.end - TIME_EPS)
            .map(|s| s.speaker_id.as_str())
    }

    /// Main speaker of the most recent turn as of `t`: the speaker of the
    /// last segment starting strictly before `t`.
    pub fn previous_speaker_at(&self, t: f64) -> Option<&str> {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start < t - TIME_EPS)
            .map(|s| s.speaker_id.as_str())
    }

    /// Turns before `t`, most recent first. Consecutive segments by the same
    /// speaker collapse into one turn; a turn's `end` is the end of its last
    /// segment (clamped to `t` for an ongoing segment).
    pub fn turns_before(&self, t: f64) -> Vec<Turn> {
        let mut turns: Vec<Turn> = Vec::new();
        for seg in self.segments.iter().rev() {
            if seg.start >= t - TIME_EPS {
                continue;
            }
            let end = seg.end.min(t);
            match turns.last_mut() {
                Some(turn) if turn.speaker_id == seg.speaker_id => {
                    // Walking backward, keep the latest end of the run.
                    turn.end = turn.end.max(end);
                }
                _ => turns.push(Turn {
                    speaker_id: seg.speaker_id.clone(),
                    end,
                }),
            }
        }
        turns
    }
}

/// A collapsed main-speaker turn (see `turns_before`).
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker_id: String,
    pub end: f64,
}

/// The four turn-transition behaviors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransitionCategory {
    CleanTurnTaking,
    OverlapTurnTaking,
    Backchannel,
    ContinuingSpeech,
}

impl TransitionCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CleanTurnTaking => "clean_turn_taking",
            Self::OverlapTurnTaking => "overlap_turn_taking",
            Self::Backchannel => "backchannel",
            Self::ContinuingSpeech => "continuing_speech",
        }
    }
}

/// A categorized turn-transition behavior. The onset is the start of the
/// triggering (new) speech event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub category: TransitionCategory,
    pub onset: f64,
    pub new_speaker: String,
    pub previous_speaker: Option<String>,
}

/// Maximal runs of frames with volume strictly above the threshold. Event
/// start/end are the first/last frame timestamps of the run, with the end
/// extended by one frame period.
pub fn detect_ipus(
    user_id: &str,
    samples: &[(f64, f64)],
    threshold: f64,
    frame_period: f64,
) -> Vec<SpeechEvent> {
    let mut events = Vec::new();
    let mut run_start: Option<f64> = None;
    let mut run_end = 0.0;
    for &(t, vol) in samples {
        if vol > threshold {
            if run_start.is_none() {
                run_start = Some(t);
            }
            run_end = t;
        } else if let Some(start) = run_start.take() {
            events.push(SpeechEvent {
                user_id: user_id.to_string(),
                start,
                end: run_end + frame_period,
            });
        }
    }
    if let Some(start) = run_start {
        events.push(SpeechEvent {
            user_id: user_id.to_string(),
            start,
            end: run_end + frame_period,
        });
    }
    events
}

/// Merge same-user events whose gap is within `max_gap` (inclusive).
/// Events of different users are never merged.
pub fn smooth_ipus(events: &[SpeechEvent], max_gap: f64) -> Vec<SpeechEvent> {
    let mut sorted: Vec<SpeechEvent> = events.to_vec();
    sorted.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then(a.start.total_cmp(&b.start))
    });
    let mut out: Vec<SpeechEvent> = Vec::with_capacity(sorted.len());
    for ev in sorted {
        match out.last_mut() {
            Some(last)
                if last.user_id == ev.user_id && ev.start - last.end <= max_gap + TIME_EPS =>
            {
                last.end = last.end.max(ev.end);
            }
            _ => out.push(ev),
        }
    }
    out.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.end.total_cmp(&b.end))
            .then(a.user_id.cmp(&b.user_id))
    });
    out
}

/// Resolve overlapping speech into a single main-speaker timeline.
///
/// Sole speakers are main speakers over their events. At the end of each main
/// turn, among the events still active, the one ending last takes over, with
/// its segment start clipped to the previous main speaker's end. Events fully
/// inside another event never become main (they are backchannel material).
/// Ties on end resolve to the later-starting event, then the lowest user id.
pub fn resolve_main_speaker(events: &[SpeechEvent]) -> MainSpeakerTimeline {
    let mut sorted: Vec<&SpeechEvent> = events.iter().collect();
    sorted.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(b.end.total_cmp(&a.end))
            .then(a.user_id.cmp(&b.user_id))
    });

    let mut segments: Vec<MainSegment> = Vec::new();
    let mut iter = sorted.into_iter().peekable();
    let mut active: Vec<&SpeechEvent> = Vec::new();
    let mut current: Option<(&SpeechEvent, f64)> = None;
    loop {
        match current {
            None => match iter.next() {
                None => break,
                Some(ev) => current = Some((ev, ev.start)),
            },
            Some((cur, seg_start)) => {
                while let Some(ev) = iter.peek() {
                    if ev.start < cur.end - TIME_EPS {
                        active.push(iter.next().unwrap());
                    } else {
                        break;
                    }
                }
                segments.push(MainSegment {
                    speaker_id: cur.user_id.clone(),
                    start: seg_start,
                    end: cur.end,
                    event_start: cur.start,
                });
                // Next main: the active event ending last; later start, then
                // lowest user id on ties. Losers end within the winner's turn
                // and can never win later, so the set is cleared either way.
                let winner = active
                    .iter()
                    .filter(|e| e.end > cur.end + TIME_EPS)
                    .max_by(|a, b| {
                        a.end
                            .total_cmp(&b.end)
                            .then(a.start.total_cmp(&b.start))
                            .then(b.user_id.cmp(&a.user_id))
                    })
                    .copied();
                active.clear();
                current = winner.map(|ev| (ev, cur.end));
            }
        }
    }

    // Same-speaker zero-gap neighbors merge (the smoothing stage normally
    // prevents these from arising).
    let mut merged: Vec<MainSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match merged.last_mut() {
            Some(last)
                if last.speaker_id == seg.speaker_id
                    && (seg.start - last.end).abs() <= TIME_EPS =>
            {
                last.end = seg.end;
            }
            _ => merged.push(seg),
        }
    }
    MainSpeakerTimeline { segments: merged }
}

/// Categorize main-speaker changes and backchannels into transition events.
/// Transitions whose triggering speech event is shorter than
/// `min_event_duration` are dropped. The session's first main segment
/// produces no event.
pub fn categorize_transitions(
    timeline: &MainSpeakerTimeline,
    events: &[SpeechEvent],
    min_event_duration: f64,
) -> Vec<TransitionEvent> {
    let mut out = Vec::new();
    for pair in timeline.segments.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let duration = next.end - next.event_start;
        if duration < min_event_duration - TIME_EPS {
            continue;
        }
        let category = if next.speaker_id == prev.speaker_id {
            TransitionCategory::ContinuingSpeech
        } else if next.event_start < prev.end - TIME_EPS {
            TransitionCategory::OverlapTurnTaking
        } else {
            TransitionCategory::CleanTurnTaking
        };
        out.push(TransitionEvent {
            category,
            onset: next.event_start,
            new_speaker: next.speaker_id.clone(),
            previous_speaker: Some(prev.speaker_id.clone()),
        });
    }

    // Backchannels: events strictly inside another user's event.
    for ev in events {
        if ev.duration() < min_event_duration - TIME_EPS {
            continue;
        }
        let contained = events.iter().any(|other| {
            other.user_id != ev.user_id
                && other.start + TIME_EPS < ev.start
                && ev.end + TIME_EPS < other.end
        });
        if contained {
            let prev = timeline
                .speaker_at(ev.start)
                .map(str::to_string)
                .or_else(|| timeline.previous_speaker_at(ev.start).map(str::to_string));
            out.push(TransitionEvent {
                category: TransitionCategory::Backchannel,
                onset: ev.start,
                new_speaker: ev.user_id.clone(),
                previous_speaker: prev,
            });
        }
    }

    out.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.category.cmp(&b.category))
            .then(a.new_speaker.cmp(&b.new_speaker))
    });
    out
}

/// Full labeling output for one session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionLabels {
    /// Smoothed speech events of all users.
    pub events: Vec<SpeechEvent>,
    pub timeline: MainSpeakerTimeline,
    pub transitions: Vec<TransitionEvent>,
}

/// Run detect -> smooth -> resolve -> categorize over a recording.
pub fn label_session(rec: &SessionRecording, cfg: &LabelConfig) -> SessionLabels {
    let mut raw = Vec::new();
    for stream in &rec.streams {
        let series = rec.volume_series(&stream.user_id);
        raw.extend(detect_ipus(
            &stream.user_id,
            &series,
            cfg.volume_threshold,
            cfg.frame_period,
        ));
    }
    let events = smooth_ipus(&raw, cfg.max_gap);
    let timeline = resolve_main_speaker(&events);
    let transitions = categorize_transitions(&timeline, &events, cfg.min_event_duration);
    SessionLabels {
        events,
        timeline,
        transitions,
    }
}
