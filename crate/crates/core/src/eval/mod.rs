//! Scoring of shot detection, shot similarity and diarization output.

mod hungarian;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use hungarian::max_weight_assignment;

use crate::pipeline::{Diarization, SpeechSegment};
use crate::shot_analysis::{Shot, ShotLabeling};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerReport {
    /// Scored speech seconds.
    pub total: f64,
    /// Speech seconds attributed to the wrong speaker under the best mapping.
    pub confusion: f64,
    pub der: f64,
    /// Hypothesis label to reference label; unmapped hypothesis labels are absent.
    pub mapping: BTreeMap<String, String>,
}

/// Speaker confusion rate over the segments labeled by the hypothesis.
///
/// Hypothesis and reference labels are matched one-to-one so as to maximize
/// correctly attributed time; everything else counts as confusion.
pub fn der(
    reference: &Diarization,
    hypothesis: &Diarization,
    segments: &[SpeechSegment],
) -> Result<DerReport> {
    let durations: BTreeMap<&str, f64> = segments
        .iter()
        .map(|s| (s.segment_id.as_str(), s.duration()))
        .collect();
    let mut overlap: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut total = 0.0;
    for (id, hyp) in &hypothesis.labels {
        let r = reference
            .labels
            .get(id)
            .ok_or_else(|| Error::UnknownSegment(id.clone()))?;
        let dur = *durations
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownSegment(id.clone()))?;
        *overlap.entry((hyp.as_str(), r.as_str())).or_default() += dur;
        total += dur;
    }
    if !(total > 0.0) {
        return Err(Error::EmptyScoredRegion("hypothesis covers no speech"));
    }
    let hyp_labels: Vec<&str> = hypothesis
        .labels
        .values()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ref_labels: Vec<&str> = overlap
        .keys()
        .map(|&(_, r)| r)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let weights: Vec<Vec<f64>> = hyp_labels
        .iter()
        .map(|h| {
            ref_labels
                .iter()
                .map(|r| overlap.get(&(*h, *r)).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    let assignment = max_weight_assignment(&weights);
    let mut mapping = BTreeMap::new();
    let mut matched = 0.0;
    for (i, j) in assignment.iter().enumerate() {
        if let Some(j) = *j {
            if weights[i][j] > 0.0 {
                matched += weights[i][j];
                mapping.insert(hyp_labels[i].to_string(), ref_labels[j].to_string());
            }
        }
    }
    let confusion = (total - matched).max(0.0);
    Ok(DerReport {
        total,
        confusion,
        der: confusion / total,
        mapping,
    })
}

/// DER of each dialogue, scored independently. Dialogues without
/// hypothesized speech are skipped.
pub fn per_dialogue_der(
    reference: &Diarization,
    hypothesis: &Diarization,
    segments: &[SpeechSegment],
    dialogue_of: &BTreeMap<String, usize>,
) -> Result<Vec<(usize, DerReport)>> {
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for id in hypothesis.labels.keys() {
        if let Some(&d) = dialogue_of.get(id) {
            groups.entry(d).or_default().push(id);
        }
    }
    groups
        .into_iter()
        .map(|(d, ids)| der(reference, &hypothesis.restricted_to(ids), segments).map(|r| (d, r)))
        .collect()
}

/// Duration-weighted mean of per-dialogue DERs.
pub fn single_show_der(reports: &[DerReport]) -> Result<f64> {
    let weight: f64 = reports.iter().map(|r| r.total).sum();
    if !(weight > 0.0) {
        return Err(Error::EmptyScoredRegion(
            "no dialogue with positive duration",
        ));
    }
    Ok(reports.iter().map(|r| r.der * r.total).sum::<f64>() / weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Report {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        F1Report {
            precision,
            recall,
            f1,
        }
    }
}

/// Cut positions (first frame of every shot but the first).
pub fn cut_frames(shots: &[Shot]) -> Vec<u64> {
    shots.iter().skip(1).map(|s| s.start_frame).collect()
}

/// Cut detection F1: each hypothesis cut, in order, is matched to the nearest
/// unmatched reference cut at most `tolerance` frames away.
pub fn f1_cuts(reference: &[u64], hypothesis: &[u64], tolerance: u64) -> F1Report {
    if reference.is_empty() && hypothesis.is_empty() {
        return F1Report::from_pr(1.0, 1.0);
    }
    let mut hyp = hypothesis.to_vec();
    hyp.sort_unstable();
    let mut used = vec![false; reference.len()];
    let mut matches = 0usize;
    for h in hyp {
        let best = reference
            .iter()
            .enumerate()
            .filter(|(i, r)| !used[*i] && r.abs_diff(h) <= tolerance)
            .min_by_key(|(i, r)| (r.abs_diff(h), **r, *i))
            .map(|(i, _)| i);
        if let Some(i) = best {
            used[i] = true;
            matches += 1;
        }
    }
    let ratio = |m: usize, n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
    F1Report::from_pr(
        ratio(matches, hypothesis.len()),
        ratio(matches, reference.len()),
    )
}

/// Projects hypothesis shot labels onto reference shots: each reference shot
/// takes the label of the hypothesis shot sharing most of its frames.
pub fn align_labeling(
    reference_shots: &[Shot],
    hypothesis_shots: &[Shot],
    hypothesis: &ShotLabeling,
) -> Result<ShotLabeling> {
    if hypothesis.labels.len() != hypothesis_shots.len() {
        return Err(Error::InconsistentShots(
            "hypothesis labeling does not match its shots".into(),
        ));
    }
    let labels = reference_shots
        .iter()
        .map(|r| {
            hypothesis_shots
                .iter()
                .enumerate()
                .map(|(j, h)| {
                    let lo = r.start_frame.max(h.start_frame);
                    let hi = r.end_frame.min(h.end_frame);
                    (if hi >= lo { hi - lo + 1 } else { 0 }, j)
                })
                .filter(|&(o, _)| o > 0)
                // most overlap, earliest shot on ties
                .min_by_key(|&(o, j)| (std::cmp::Reverse(o), j))
                .map(|(_, j)| hypothesis.labels[j])
                .ok_or_else(|| {
                    Error::InconsistentShots(format!("reference shot {} has no counterpart", r.id))
                })
        })
        .collect::<Result<_>>()?;
    Ok(ShotLabeling { labels })
}

/// Shot similarity F1: a shot is correctly paired when its list of similar
/// shots under the hypothesis intersects its list under the reference.
pub fn f1_similarity(reference: &ShotLabeling, hypothesis: &ShotLabeling) -> Result<F1Report> {
    let n = reference.labels.len();
    if hypothesis.labels.len() != n {
        return Err(Error::InconsistentShots(format!(
            "{} reference shots vs {} hypothesis shots",
            n,
            hypothesis.labels.len()
        )));
    }
    let similar = |labels: &[u32], i: usize| -> BTreeSet<usize> {
        (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect()
    };
    let (mut ref_total, mut ref_hit, mut hyp_total, mut hyp_hit) = (0, 0, 0, 0);
    for i in 0..n {
        let r = similar(&reference.labels, i);
        let h = similar(&hypothesis.labels, i);
        let hit = !r.is_disjoint(&h);
        if !r.is_empty() {
            ref_total += 1;
            ref_hit += hit as usize;
        }
        if !h.is_empty() {
            hyp_total += 1;
            hyp_hit += hit as usize;
        }
    }
    if ref_total == 0 && hyp_total == 0 {
        return Err(Error::EmptyScoredRegion(
            "no shot has similar shots on either side",
        ));
    }
    let ratio = |m: usize, n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
    Ok(F1Report::from_pr(
        ratio(hyp_hit, hyp_total),
        ratio(ref_hit, ref_total),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerCountRow {
    pub system: String,
    pub hypothesized: usize,
    pub reference: Option<usize>,
}

/// Number of distinct speakers per system over the segments each one labels.
pub fn speaker_count_report(
    systems: &[(&str, &Diarization)],
    reference: Option<&Diarization>,
) -> Vec<SpeakerCountRow> {
    systems
        .iter()
        .map(|(name, d)| SpeakerCountRow {
            system: name.to_string(),
            hypothesized: d.num_speakers(),
            reference: reference.map(|r| {
                r.restricted_to(d.labels.keys().map(String::as_str))
                    .num_speakers()
            }),
        })
        .collect()
}

/// Renders rows as left-aligned text columns.
pub fn format_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(headers.to_vec())];
    out.extend(
        rows.iter()
            .map(|r| line(r.iter().map(String::as_str).collect())),
    );
    out.join("\n") + "\n"
}
