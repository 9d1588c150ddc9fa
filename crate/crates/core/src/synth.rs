//! Synthetic episodes with planted dialogues, speakers and embeddings.
//!
//! Speakers are isotropic Gaussian clouds whose centers are
//! `separation * within_std` apart. Each dialogue is a planted alternation
//! of two fresh shot labels; filler shots between dialogues carry labels
//! that never recur, so the base pattern rule finds exactly the planted
//! dialogues. Filler speech is added until dialogue speech makes up the
//! requested share of all speech.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding_space::{LabeledEmbedding, SegmentEmbedding};
use crate::pipeline::{Diarization, SpeechSegment};
use crate::shot_analysis::{Shot, ShotLabeling};
use crate::{Error, Result};

/// Frame rate used to give synthetic shots frame ranges.
pub const SYNTH_FPS: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEpisodeConfig {
    pub num_speakers: usize,
    pub num_dialogues: usize,
    pub speakers_per_dialogue: usize,
    /// Utterances per speaker in each dialogue they take part in.
    pub segments_per_speaker: usize,
    pub dim: usize,
    /// Distance between speaker centers in units of `within_std`.
    pub separation: f64,
    pub within_std: f64,
    /// Share of speech time inside dialogues, in `(0, 1]`.
    pub coverage: f64,
    /// One shot per utterance, filming the current speaker.
    pub synchronized: bool,
    pub training_speakers: usize,
    pub training_segments_per_speaker: usize,
    pub seed: u64,
}

impl Default for SyntheticEpisodeConfig {
    fn default() -> Self {
        SyntheticEpisodeConfig {
            num_speakers: 6,
            num_dialogues: 8,
            speakers_per_dialogue: 2,
            segments_per_speaker: 8,
            dim: 60,
            separation: 10.0,
            within_std: 1.0,
            coverage: 0.6,
            synchronized: false,
            training_speakers: 20,
            training_segments_per_speaker: 10,
            seed: 0,
        }
    }
}

impl SyntheticEpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_speakers == 0
            || self.num_dialogues == 0
            || self.speakers_per_dialogue == 0
            || self.segments_per_speaker == 0
            || self.dim == 0
        {
            return bad("all counts must be >= 1");
        }
        if !(self.separation > 0.0) || !(self.within_std > 0.0) {
            return bad("separation and within_std must be positive");
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return bad("coverage must lie in (0, 1]");
        }
        if self.speakers_per_dialogue > self.num_speakers {
            return bad("more speakers per dialogue than speakers");
        }
        if self.num_dialogues * self.speakers_per_dialogue < self.num_speakers {
            return bad("dialogues cannot host every speaker");
        }
        if self.synchronized && self.speakers_per_dialogue != 2 {
            return bad("synchronized episodes need exactly 2 speakers per dialogue");
        }
        if self.synchronized && self.segments_per_speaker < 2 {
            return bad("synchronized dialogues need at least 2 utterances per speaker");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDialogue {
    pub labels: [u32; 2],
    pub speakers: Vec<String>,
    pub segment_ids: Vec<String>,
    pub start_shot: usize,
    pub end_shot: usize,
    pub start_time: f64,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEpisode {
    pub config: SyntheticEpisodeConfig,
    pub shots: Vec<Shot>,
    pub labeling: ShotLabeling,
    /// Time-ordered, each annotated with its reference speaker.
    pub segments: Vec<SpeechSegment>,
    pub embeddings: Vec<SegmentEmbedding>,
    pub training: Vec<LabeledEmbedding>,
    pub dialogues: Vec<PlantedDialogue>,
    pub speaker_centers: Vec<Vec<f64>>,
}

impl SyntheticEpisode {
    pub fn reference(&self) -> Diarization {
        Diarization::reference(&self.segments)
    }

    /// Planted dialogue index per dialogue segment.
    pub fn planted_dialogue_of(&self) -> std::collections::BTreeMap<String, usize> {
        self.dialogues
            .iter()
            .enumerate()
            .flat_map(|(d, p)| p.segment_ids.iter().map(move |s| (s.clone(), d)))
            .collect()
    }

    pub fn planted_coverage(&self) -> f64 {
        let planted = self.planted_dialogue_of();
        let (mut inside, mut total) = (0.0, 0.0);
        for s in &self.segments {
            total += s.duration();
            if planted.contains_key(&s.segment_id) {
                inside += s.duration();
            }
        }
        inside / total
    }
}

fn speaker_name(k: usize) -> String {
    format!("S{k}")
}

fn random_centers(rng: &mut ChaCha8Rng, count: usize, dim: usize, spacing: f64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    if dim >= count {
        // scaled simplex corners: every pair exactly `spacing` apart
        let scale = spacing / std::f64::consts::SQRT_2;
        let mut axes: Vec<usize> = (0..dim).collect();
        axes.shuffle(rng);
        (0..count)
            .map(|k| {
                let mut c = vec![0.0; dim];
                c[axes[k]] = scale;
                c
            })
            .collect()
    } else {
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter()
                    .map(|x| x / norm * spacing / std::f64::consts::SQRT_2)
                    .collect()
            })
            .collect()
    }
}

fn sample_around(rng: &mut ChaCha8Rng, center: &[f64], std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    center.iter().map(|c| c + normal.sample(rng)).collect()
}

struct Timeline {
    labels: Vec<u32>,
    spans: Vec<(f64, f64)>,
    segments: Vec<(f64, f64, usize)>,
    next_label: u32,
}

impl Timeline {
    fn shot(&mut self, label: u32, start: f64, end: f64) {
        self.labels.push(label);
        self.spans.push((start, end));
    }

    fn fresh_label(&mut self) -> u32 {
        self.next_label += 1;
        self.next_label - 1
    }

    fn cursor(&self) -> f64 {
        self.spans.last().map_or(0.0, |s| s.1)
    }

    /// Non-recurring shots carrying `speech` seconds of filler utterances.
    fn filler(&mut self, rng: &mut ChaCha8Rng, speech: f64, num_speakers: usize) {
        let mut remaining = speech;
        if remaining < 0.05 {
            let (t, label) = (self.cursor(), self.fresh_label());
            self.shot(label, t, t + rng.random_range(1.0..3.0));
            return;
        }
        while remaining > 1e-9 {
            let mut dur = rng.random_range(1.0..4.0f64).min(remaining);
            if remaining - dur < 0.3 {
                dur = remaining;
            }
            remaining -= dur;
            let t = self.cursor();
            let lead = rng.random_range(0.2..0.6);
            let tail = rng.random_range(0.2..0.6);
            self.segments
                .push((t + lead, t + lead + dur, rng.random_range(0..num_speakers)));
            let label = self.fresh_label();
            self.shot(label, t, t + lead + dur + tail);
        }
    }
}

pub fn generate_synthetic_episode(config: &SyntheticEpisodeConfig) -> Result<SyntheticEpisode> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spacing = config.separation * config.within_std;
    let centers = random_centers(&mut rng, config.num_speakers, config.dim, spacing);

    // speaker sets: the first dialogues cover everybody, the rest are random
    let p = config.speakers_per_dialogue;
    let mut order: Vec<usize> = (0..config.num_speakers).collect();
    order.shuffle(&mut rng);
    let mut casts: Vec<Vec<usize>> = Vec::new();
    for chunk in order.chunks(p) {
        let mut cast = chunk.to_vec();
        while cast.len() < p {
            let k = rng.random_range(0..config.num_speakers);
            if !cast.contains(&k) {
                cast.push(k);
            }
        }
        casts.push(cast);
    }
    while casts.len() < config.num_dialogues {
        let mut all: Vec<usize> = (0..config.num_speakers).collect();
        all.shuffle(&mut rng);
        casts.push(all[..p].to_vec());
    }
    casts.truncate(config.num_dialogues);
    casts.shuffle(&mut rng);

    // utterance durations and turn orders per dialogue
    let plans: Vec<Vec<(usize, f64)>> = casts
        .iter()
        .map(|cast| {
            let mut turns: Vec<usize> = if config.synchronized {
                (0..config.segments_per_speaker * 2)
                    .map(|i| cast[i % 2])
                    .collect()
            } else {
                let mut t: Vec<usize> = cast
                    .iter()
                    .flat_map(|&k| std::iter::repeat_n(k, config.segments_per_speaker))
                    .collect();
                t.shuffle(&mut rng);
                t
            };
            if config.synchronized && rng.random_bool(0.5) {
                turns.rotate_left(1);
            }
            turns
                .into_iter()
                .map(|k| (k, rng.random_range(1.0..4.0)))
                .collect()
        })
        .collect();
    let dialogue_speech: f64 = plans.iter().flatten().map(|(_, d)| d).sum();
    let filler_speech = dialogue_speech * (1.0 - config.coverage) / config.coverage;
    let filler_share = filler_speech / (config.num_dialogues + 1) as f64;

    let mut tl = Timeline {
        labels: Vec::new(),
        spans: Vec::new(),
        segments: Vec::new(),
        next_label: 0,
    };
    let mut planted_ranges = Vec::new();
    for (cast, plan) in casts.iter().zip(&plans) {
        tl.filler(&mut rng, filler_share, config.num_speakers);
        let labels = [tl.fresh_label(), tl.fresh_label()];
        let first_shot = tl.labels.len();
        let first_segment = tl.segments.len();
        let start = tl.cursor();
        if config.synchronized {
            for &(k, dur) in plan {
                let t = tl.cursor();
                let lead = rng.random_range(0.1..0.4);
                let tail = rng.random_range(0.1..0.4);
                tl.segments.push((t + lead, t + lead + dur, k));
                let side = usize::from(k != cast[0]);
                tl.shot(labels[side], t, t + lead + dur + tail);
            }
        } else {
            let mut t = start;
            for &(k, dur) in plan {
                t += rng.random_range(0.1..0.5);
                tl.segments.push((t, t + dur, k));
                t += dur;
            }
            let end = t + rng.random_range(0.1..0.5);
            // alternating shots over [start, end], at least three of them
            let mut cuts = vec![start];
            let mut c = start;
            loop {
                c += rng.random_range(1.5..5.0);
                if c >= end - 0.5 {
                    break;
                }
                cuts.push(c);
            }
            if cuts.len() < 3 {
                cuts = (0..3)
                    .map(|i| start + (end - start) * i as f64 / 3.0)
                    .collect();
            }
            cuts.push(end);
            for (i, w) in cuts.windows(2).enumerate() {
                tl.shot(labels[i % 2], w[0], w[1]);
            }
        }
        planted_ranges.push((
            labels,
            cast.clone(),
            first_shot,
            tl.labels.len() - 1,
            first_segment,
            tl.segments.len(),
        ));
    }
    tl.filler(&mut rng, filler_share, config.num_speakers);

    let shots: Vec<Shot> = tl
        .spans
        .iter()
        .enumerate()
        .map(|(id, &(s, e))| {
            let start_frame = (s * SYNTH_FPS).round() as u64;
            let end_frame = ((e * SYNTH_FPS).round() as u64).max(start_frame + 1) - 1;
            Shot {
                id,
                start_frame,
                end_frame,
                start_time: s,
                end_time: e,
            }
        })
        .collect();

    let mut segments = Vec::new();
    let mut embeddings = Vec::new();
    for (i, &(s, e, k)) in tl.segments.iter().enumerate() {
        let id = format!("seg{i:05}");
        segments.push(SpeechSegment::new(id.clone(), s, e).with_speaker(speaker_name(k)));
        embeddings.push(SegmentEmbedding::new(
            id,
            sample_around(&mut rng, &centers[k], config.within_std),
        )?);
    }

    let dialogues = planted_ranges
        .into_iter()
        .map(|(labels, cast, s0, s1, g0, g1)| PlantedDialogue {
            labels,
            speakers: cast.iter().map(|&k| speaker_name(k)).collect(),
            segment_ids: segments[g0..g1]
                .iter()
                .map(|s| s.segment_id.clone())
                .collect(),
            start_shot: s0,
            end_shot: s1,
            start_time: tl.spans[s0].0,
            end_time: tl.spans[s1].1,
        })
        .collect();

    let training_centers = random_centers(&mut rng, config.training_speakers, config.dim, spacing);
    let mut training = Vec::new();
    for (k, c) in training_centers.iter().enumerate() {
        for j in 0..config.training_segments_per_speaker {
            training.push(LabeledEmbedding {
                segment_id: format!("train{k:03}_{j:03}"),
                speaker: format!("T{k}"),
                vector: sample_around(&mut rng, c, config.within_std),
            });
        }
    }

    Ok(SyntheticEpisode {
        config: config.clone(),
        labeling: ShotLabeling { labels: tl.labels },
        shots,
        segments,
        embeddings,
        training,
        dialogues,
        speaker_centers: centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_space::euclidean;

    #[test]
    fn same_seed_same_episode() {
        let c = SyntheticEpisodeConfig {
            seed: 42,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic_episode(&c).unwrap(),
            generate_synthetic_episode(&c).unwrap()
        );
    }

    #[test]
    fn reference_has_every_speaker() {
        for k in [2, 5, 9] {
            let c = SyntheticEpisodeConfig {
                num_speakers: k,
                num_dialogues: 6,
                seed: k as u64,
                ..Default::default()
            };
            let ep = generate_synthetic_episode(&c).unwrap();
            assert_eq!(ep.reference().num_speakers(), k);
        }
    }

    #[test]
    fn high_separation_is_separable_by_nearest_centroid() {
        let c = SyntheticEpisodeConfig {
            separation: 50.0,
            seed: 3,
            ..Default::default()
        };
        let ep = generate_synthetic_episode(&c).unwrap();
        let correct = ep
            .segments
            .iter()
            .zip(&ep.embeddings)
            .filter(|(s, e)| {
                let nearest = (0..ep.speaker_centers.len())
                    .min_by(|&a, &b| {
                        euclidean(&e.vector, &ep.speaker_centers[a])
                            .total_cmp(&euclidean(&e.vector, &ep.speaker_centers[b]))
                    })
                    .unwrap();
                s.reference_speaker.as_deref() == Some(speaker_name(nearest).as_str())
            })
            .count();
        assert!(correct as f64 >= 0.99 * ep.segments.len() as f64);
    }

    #[test]
    fn planted_coverage_matches_config() {
        for seed in 0..5 {
            let c = SyntheticEpisodeConfig {
                coverage: 0.6,
                seed,
                ..Default::default()
            };
            let ep = generate_synthetic_episode(&c).unwrap();
            assert!((ep.planted_coverage() - 0.6).abs() < 0.02);
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let too_many = SyntheticEpisodeConfig {
            num_speakers: 2,
            speakers_per_dialogue: 3,
            ..Default::default()
        };
        assert!(generate_synthetic_episode(&too_many).is_err());
        let too_few_dialogues = SyntheticEpisodeConfig {
            num_speakers: 10,
            num_dialogues: 2,
            ..Default::default()
        };
        assert!(generate_synthetic_episode(&too_few_dialogues).is_err());
        let zero_coverage = SyntheticEpisodeConfig {
            coverage: 0.0,
            ..Default::default()
        };
        assert!(generate_synthetic_episode(&zero_coverage).is_err());
    }

    #[test]
    fn shots_tile_the_timeline() {
        let ep = generate_synthetic_episode(&SyntheticEpisodeConfig::default()).unwrap();
        for w in ep.shots.windows(2) {
            assert_eq!(w[0].end_time, w[1].start_time);
        }
        crate::pipeline::validate_segments(&ep.segments).unwrap();
    }
}
