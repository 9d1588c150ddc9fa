//! Dialogue pattern mining over shot-label strings.
//!
//! A dialogue shows up as two shot labels that alternate, `l1 l2 l1 l2 ...`.
//! The base rule keeps maximal alternations of at least three shots
//! (`l1 (l2 l1)+` somewhere in the string); the extended rule also keeps
//! isolated two-shot alternations. Patterns sharing a label can then be
//! merged into a single dialogue.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pipeline::SpeechSegment;
use crate::shot_analysis::{Shot, ShotLabeling};
use crate::union_find::UnionFind;
use crate::{Error, Result};

/// Minimum run length of the base rule.
pub const BASE_MIN_LEN: usize = 3;
/// Minimum run length once isolated two-shot alternations are admitted.
pub const EXTENDED_MIN_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShotSequence {
    pub labels: Vec<u32>,
    /// `(start_time, end_time)` per shot.
    pub spans: Vec<(f64, f64)>,
}

impl ShotSequence {
    pub fn new(labels: Vec<u32>, spans: Vec<(f64, f64)>) -> Result<Self> {
        if labels.len() != spans.len() {
            return Err(Error::InconsistentShots(format!(
                "{} labels for {} shot spans",
                labels.len(),
                spans.len()
            )));
        }
        Ok(ShotSequence { labels, spans })
    }

    /// Label string without timing; every shot gets a unit span.
    pub fn from_labels(labels: Vec<u32>) -> Self {
        let spans = (0..labels.len())
            .map(|i| (i as f64, i as f64 + 1.0))
            .collect();
        ShotSequence { labels, spans }
    }

    pub fn from_shots(shots: &[Shot], labeling: &ShotLabeling) -> Result<Self> {
        ShotSequence::new(
            labeling.labels.clone(),
            shots.iter().map(|s| (s.start_time, s.end_time)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Maximal stretch of shots alternating between two distinct labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationRun {
    /// Unordered pair stored as `(min, max)`.
    pub pair: (u32, u32),
    pub start_pos: usize,
    pub end_pos: usize,
    pub start_time: f64,
    pub end_time: f64,
}

impl AlternationRun {
    pub fn len(&self) -> usize {
        self.end_pos - self.start_pos + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_time(&self, t: f64) -> bool {
        self.start_time <= t && t < self.end_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialoguePattern {
    pub labels: BTreeSet<u32>,
    pub occurrences: Vec<AlternationRun>,
    pub segments: BTreeSet<String>,
}

impl DialoguePattern {
    pub fn first_start(&self) -> usize {
        self.occurrences.first().map_or(usize::MAX, |o| o.start_pos)
    }

    /// Shot positions covered by any occurrence.
    pub fn shot_positions(&self) -> BTreeSet<usize> {
        self.occurrences
            .iter()
            .flat_map(|o| o.start_pos..=o.end_pos)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatternSet {
    pub patterns: Vec<DialoguePattern>,
    pub extended: bool,
    pub merged: bool,
}

impl PatternSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Label pairs of every occurrence, deduplicated.
    pub fn label_pairs(&self) -> BTreeSet<(u32, u32)> {
        self.patterns
            .iter()
            .flat_map(|p| p.occurrences.iter().map(|o| o.pair))
            .collect()
    }

    /// Segment id to pattern index.
    pub fn segment_map(&self) -> BTreeMap<String, usize> {
        self.patterns
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.segments.iter().map(move |s| (s.clone(), i)))
            .collect()
    }
}

/// All maximal alternating runs of at least `min_len` shots.
///
/// Consecutive runs may share their boundary shot (`a b a c a` yields
/// `{a,b}` over 0..=2 and `{a,c}` over 2..=4).
pub fn scan_alternations(seq: &ShotSequence, min_len: usize) -> Vec<AlternationRun> {
    let s = &seq.labels;
    let mut runs = Vec::new();
    let mut i = 0;
    while i + 1 < s.len() {
        if s[i] == s[i + 1] {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j + 1 < s.len() && s[j + 1] == s[j - 1] {
            j += 1;
        }
        if j - i + 1 >= min_len {
            runs.push(AlternationRun {
                pair: (s[i].min(s[i + 1]), s[i].max(s[i + 1])),
                start_pos: i,
                end_pos: j,
                start_time: seq.spans[i].0,
                end_time: seq.spans[j].1,
            });
        }
        i = j;
    }
    runs
}

/// One pattern per label pair with at least one qualifying run; no merging.
pub fn extract_patterns(seq: &ShotSequence, extended: bool) -> PatternSet {
    let min_len = if extended {
        EXTENDED_MIN_LEN
    } else {
        BASE_MIN_LEN
    };
    let mut by_pair: BTreeMap<(u32, u32), Vec<AlternationRun>> = BTreeMap::new();
    for run in scan_alternations(seq, min_len) {
        by_pair.entry(run.pair).or_default().push(run);
    }
    let mut patterns: Vec<DialoguePattern> = by_pair
        .into_iter()
        .map(|((a, b), occurrences)| DialoguePattern {
            labels: [a, b].into_iter().collect(),
            occurrences,
            segments: BTreeSet::new(),
        })
        .collect();
    patterns.sort_by_key(|p| p.first_start());
    PatternSet {
        patterns,
        extended,
        merged: false,
    }
}

/// Merges patterns sharing at least one label, transitively.
pub fn merge_patterns(ps: &PatternSet) -> PatternSet {
    let n = ps.patterns.len();
    let mut uf = UnionFind::new(n);
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, p) in ps.patterns.iter().enumerate() {
        for &label in &p.labels {
            match owner.get(&label) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    owner.insert(label, i);
                }
            }
        }
    }
    let groups = uf.components();
    let mut merged: Vec<DialoguePattern> = Vec::new();
    for (p, &g) in ps.patterns.iter().zip(&groups) {
        if g == merged.len() {
            merged.push(DialoguePattern {
                labels: BTreeSet::new(),
                occurrences: Vec::new(),
                segments: BTreeSet::new(),
            });
        }
        let target = &mut merged[g];
        target.labels.extend(p.labels.iter().copied());
        target.occurrences.extend(p.occurrences.iter().cloned());
        target.segments.extend(p.segments.iter().cloned());
    }
    for p in &mut merged {
        p.occurrences.sort_by_key(|o| (o.start_pos, o.pair));
    }
    merged.sort_by_key(|p| p.first_start());
    PatternSet {
        patterns: merged,
        extended: ps.extended,
        merged: true,
    }
}

/// Assigns each segment to the pattern whose occurrence contains its midpoint.
///
/// When occurrences of several patterns contain the midpoint, the one that
/// starts first wins. Previous assignments are discarded.
pub fn assign_utterances(ps: &PatternSet, segments: &[SpeechSegment]) -> PatternSet {
    let mut out = ps.clone();
    for p in &mut out.patterns {
        p.segments.clear();
    }
    let mut occurrences: Vec<(usize, &AlternationRun)> = ps
        .patterns
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.occurrences.iter().map(move |o| (i, o)))
        .collect();
    occurrences.sort_by(|a, b| {
        a.1.start_time
            .total_cmp(&b.1.start_time)
            .then(a.1.start_pos.cmp(&b.1.start_pos))
            .then(a.0.cmp(&b.0))
    });
    for seg in segments {
        let mid = seg.midpoint();
        if let Some(&(i, _)) = occurrences.iter().find(|(_, o)| o.contains_time(mid)) {
            out.patterns[i].segments.insert(seg.segment_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub num_patterns: usize,
    pub total_speech: f64,
    pub covered_speech: f64,
    /// Fraction of speech time covered by patterns, in `[0, 1]`.
    pub coverage: f64,
    /// Mean covered speech seconds per pattern.
    pub speech_per_pattern: f64,
    /// Mean number of distinct reference speakers per pattern with speech.
    pub speakers_per_pattern: Option<f64>,
}

pub fn coverage_stats(ps: &PatternSet, segments: &[SpeechSegment]) -> CoverageReport {
    let by_id: BTreeMap<&str, &SpeechSegment> = segments
        .iter()
        .map(|s| (s.segment_id.as_str(), s))
        .collect();
    let total_speech: f64 = segments.iter().map(|s| s.duration()).sum();
    let mut covered_speech = 0.0;
    let mut speaker_counts = Vec::new();
    for p in &ps.patterns {
        let members: Vec<&SpeechSegment> = p
            .segments
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect();
        covered_speech += members.iter().map(|s| s.duration()).sum::<f64>();
        let speakers: BTreeSet<&str> = members
            .iter()
            .filter_map(|s| s.reference_speaker.as_deref())
            .collect();
        if !speakers.is_empty() {
            speaker_counts.push(speakers.len() as f64);
        }
    }
    let n = ps.patterns.len();
    CoverageReport {
        num_patterns: n,
        total_speech,
        covered_speech,
        coverage: if total_speech > 0.0 {
            covered_speech / total_speech
        } else {
            0.0
        },
        speech_per_pattern: if n > 0 {
            covered_speech / n as f64
        } else {
            0.0
        },
        speakers_per_pattern: (!speaker_counts.is_empty())
            .then(|| speaker_counts.iter().sum::<f64>() / speaker_counts.len() as f64),
    }
}
