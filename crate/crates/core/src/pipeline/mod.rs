//! Two-step diarization: local clustering inside each dialogue, then global
//! clustering of the local speakers, optionally under cannot-link constraints
//! between speakers of the same dialogue.

mod segments;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use segments::{parse_subtitles, validate_segments, SpeechSegment};

use crate::constrained_hac::{
    agglomerate, cut_forest_detailed, ConstraintSet, DendrogramForest, DistanceMatrix, Instance,
    Partition, TreeCut,
};
use crate::embedding_space::{
    compute_within_class_cov, unit_normalize, CovarianceSource, EmbeddingSet, LabeledEmbedding,
    SegmentEmbedding, Whitener, WithinClassCovariance,
};
use crate::pattern_miner::{
    assign_utterances, coverage_stats, extract_patterns, merge_patterns, CoverageReport,
    DialoguePattern, PatternSet, ShotSequence,
};
use crate::shot_analysis::{
    detect_cuts, detect_similar_shots, FrameDescriptor, Shot, ShotConfig, ShotLabeling,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Label of the shot on screen.
    Naive,
    /// Local clustering only; speakers are not linked across dialogues.
    Local,
    /// Local then unconstrained global clustering.
    #[serde(rename = "2s")]
    TwoStep,
    /// Local then cannot-link constrained global clustering.
    #[serde(rename = "cst2s")]
    ConstrainedTwoStep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Naive => "naive",
            Mode::Local => "local",
            Mode::TwoStep => "2s",
            Mode::ConstrainedTwoStep => "cst2s",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Mode::Naive),
            "local" => Ok(Mode::Local),
            "2s" => Ok(Mode::TwoStep),
            "cst2s" | "cst-2s" => Ok(Mode::ConstrainedTwoStep),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Segment id to speaker label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diarization {
    pub mode: Option<Mode>,
    pub labels: BTreeMap<String, String>,
}

impl Diarization {
    /// Reference diarization from the speakers annotated on the segments.
    pub fn reference(segments: &[SpeechSegment]) -> Self {
        Diarization {
            mode: None,
            labels: segments
                .iter()
                .filter_map(|s| {
                    s.reference_speaker
                        .as_ref()
                        .map(|spk| (s.segment_id.clone(), spk.clone()))
                })
                .collect(),
        }
    }

    pub fn num_speakers(&self) -> usize {
        self.labels.values().collect::<BTreeSet<_>>().len()
    }

    pub fn restricted_to<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        Diarization {
            mode: self.mode,
            labels: ids
                .into_iter()
                .filter_map(|id| self.labels.get(id).map(|l| (id.to_string(), l.clone())))
                .collect(),
        }
    }
}

/// Clusters the utterances of one dialogue: whitening, Ward, silhouette cut.
pub fn local_diarize(
    segment_ids: &[String],
    embeddings: &EmbeddingSet,
    whitener: &Whitener,
) -> Result<Partition> {
    if segment_ids.is_empty() {
        return Ok(Partition { labels: Vec::new() });
    }
    let instances = segment_ids
        .iter()
        .map(|id| Ok(Instance::new(whitener.apply(embeddings.require(id)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let forest = agglomerate(&instances, &ConstraintSet::new())?;
    let (partition, _) = cut_forest_detailed(&forest, &DistanceMatrix::of_instances(&instances))?;
    Ok(partition)
}

/// Shot label at each segment midpoint, restricted to the shots of the pattern.
///
/// Returns `(segment_id, shot label)` pairs in input order.
pub fn naive_assign(
    pattern: &DialoguePattern,
    sequence: &ShotSequence,
    segments: &[&SpeechSegment],
) -> Vec<(String, u32)> {
    let shots: Vec<usize> = pattern.shot_positions().into_iter().collect();
    segments
        .iter()
        .filter_map(|seg| {
            let mid = seg.midpoint();
            let inside = shots.iter().find(|&&p| {
                let (s, e) = sequence.spans[p];
                s <= mid && mid < e
            });
            let pos = inside.copied().or_else(|| {
                shots.iter().copied().min_by(|&a, &b| {
                    let gap = |p: usize| {
                        let (s, e) = sequence.spans[p];
                        if mid < s {
                            s - mid
                        } else {
                            (mid - e).max(0.0)
                        }
                    };
                    gap(a).total_cmp(&gap(b))
                })
            })?;
            Some((seg.segment_id.clone(), sequence.labels[pos]))
        })
        .collect()
}

/// Local clustering result of one dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDialogue {
    pub dialogue: usize,
    pub segment_ids: Vec<String>,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSpeaker {
    pub dialogue: usize,
    pub local_index: usize,
    pub segments: Vec<String>,
    pub representative: Vec<f64>,
}

impl LocalSpeaker {
    pub fn name(&self) -> String {
        format!("d{}.s{}", self.dialogue, self.local_index)
    }
}

/// One instance per local cluster, represented by the mean of its member
/// embeddings (unit-normalized when `normalize` is set).
pub fn build_global_instances(
    local: &[LocalDialogue],
    embeddings: &EmbeddingSet,
    normalize: bool,
) -> Result<Vec<LocalSpeaker>> {
    let mut out = Vec::new();
    for dialogue in local {
        for (k, members) in dialogue.partition.clusters().into_iter().enumerate() {
            let ids: Vec<String> = members
                .iter()
                .map(|&i| dialogue.segment_ids[i].clone())
                .collect();
            let mut mean = vec![0.0; embeddings.dim()];
            for id in &ids {
                for (m, x) in mean.iter_mut().zip(embeddings.require(id)?) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= ids.len() as f64);
            out.push(LocalSpeaker {
                dialogue: dialogue.dialogue,
                local_index: k,
                segments: ids,
                representative: if normalize {
                    unit_normalize(&mean)
                } else {
                    mean
                },
            });
        }
    }
    Ok(out)
}

/// Cannot-link between every two local speakers of the same dialogue.
pub fn derive_constraints(speakers: &[LocalSpeaker]) -> ConstraintSet {
    let mut set = ConstraintSet::new();
    for (i, a) in speakers.iter().enumerate() {
        for (j, b) in speakers.iter().enumerate().skip(i + 1) {
            if a.dialogue == b.dialogue {
                set.insert(i, j).expect("distinct indices");
            }
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalResult {
    pub diarization: Diarization,
    pub forest: DendrogramForest,
    pub partition: Partition,
    pub tree_cuts: Vec<TreeCut>,
}

/// Clusters local speakers across dialogues and labels every segment with
/// its local speaker's global cluster.
pub fn global_diarize(
    speakers: &[LocalSpeaker],
    constraints: &ConstraintSet,
    constrained: bool,
    whitener: &Whitener,
) -> Result<GlobalResult> {
    let mode = if constrained {
        Mode::ConstrainedTwoStep
    } else {
        Mode::TwoStep
    };
    if speakers.is_empty() {
        return Ok(GlobalResult {
            diarization: Diarization {
                mode: Some(mode),
                labels: BTreeMap::new(),
            },
            forest: DendrogramForest {
                num_leaves: 0,
                nodes: Vec::new(),
                merges: Vec::new(),
            },
            partition: Partition { labels: Vec::new() },
            tree_cuts: Vec::new(),
        });
    }
    let instances = speakers
        .iter()
        .map(|s| Ok(Instance::new(whitener.apply(&s.representative)?)))
        .collect::<Result<Vec<_>>>()?;
    let empty = ConstraintSet::new();
    let active = if constrained { constraints } else { &empty };
    let forest = agglomerate(&instances, active)?;
    let (partition, tree_cuts) =
        cut_forest_detailed(&forest, &DistanceMatrix::of_instances(&instances))?;
    let mut labels = BTreeMap::new();
    for (speaker, &cluster) in speakers.iter().zip(&partition.labels) {
        for id in &speaker.segments {
            labels.insert(id.clone(), format!("spk{cluster}"));
        }
    }
    Ok(GlobalResult {
        diarization: Diarization {
            mode: Some(mode),
            labels,
        },
        forest,
        partition,
        tree_cuts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub extended: bool,
    pub merge: bool,
    /// Unit-normalize embeddings at ingestion and local-speaker representatives.
    pub normalize: bool,
    /// Ridge added to `W`; defaults to `1e-6 * trace(W) / d`.
    pub epsilon: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::ConstrainedTwoStep,
            extended: false,
            merge: true,
            normalize: false,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ShotInput {
    /// Shots with labels, e.g. from a reference annotation.
    Labeled {
        shots: Vec<Shot>,
        labeling: ShotLabeling,
    },
    /// Frames still to be segmented.
    Frames {
        frames: Vec<FrameDescriptor>,
        config: ShotConfig,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub shots: ShotInput,
    pub segments: Vec<SpeechSegment>,
    pub embeddings: Vec<SegmentEmbedding>,
    pub training: Option<Vec<LabeledEmbedding>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub extended: bool,
    pub merged: bool,
    pub normalize: bool,
    pub shot_thresholds: Option<(f64, f64)>,
    pub covariance: CovarianceSource,
    pub epsilon: f64,
    pub representative: String,
    pub num_shots: usize,
    pub num_patterns: usize,
    pub coverage: CoverageReport,
    pub num_local_speakers: usize,
    pub num_constraints: usize,
    pub num_trees: Option<usize>,
    pub num_speakers: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub shots: Vec<Shot>,
    pub labeling: ShotLabeling,
    pub sequence: ShotSequence,
    pub patterns: PatternSet,
    pub local: Vec<LocalDialogue>,
    pub local_speakers: Vec<LocalSpeaker>,
    pub constraints: ConstraintSet,
    pub global: Option<GlobalResult>,
    pub diarization: Diarization,
    pub manifest: RunManifest,
}

impl PipelineRun {
    /// Segment id to dialogue (pattern) index.
    pub fn dialogue_of(&self) -> BTreeMap<String, usize> {
        self.patterns.segment_map()
    }
}

fn covariance_for(
    training: Option<&[LabeledEmbedding]>,
    dim: usize,
    config: &PipelineConfig,
) -> Result<WithinClassCovariance> {
    let cov = match training {
        Some(t) if !t.is_empty() => {
            let t: Vec<LabeledEmbedding> = if config.normalize {
                t.iter()
                    .map(|e| LabeledEmbedding {
                        vector: unit_normalize(&e.vector),
                        ..e.clone()
                    })
                    .collect()
            } else {
                t.to_vec()
            };
            let cov = compute_within_class_cov(&t)?;
            if cov.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: cov.dim(),
                });
            }
            cov
        }
        _ => WithinClassCovariance::identity(dim),
    };
    Ok(match config.epsilon {
        Some(eps) => cov.with_epsilon(eps),
        None => cov,
    })
}

/// Runs shot analysis (when needed), pattern mining and the diarization
/// steps selected by `config.mode`.
///
/// Only segments covered by a dialogue pattern receive a label.
pub fn run_pipeline(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineRun> {
    validate_segments(&inputs.segments).map_err(|e| e.in_stage("segments"))?;

    let (shots, labeling, thresholds) = match &inputs.shots {
        ShotInput::Labeled { shots, labeling } => (shots.clone(), labeling.clone(), None),
        ShotInput::Frames { frames, config } => {
            let shots = detect_cuts(frames, config).map_err(|e| e.in_stage("shots"))?;
            let labeling =
                detect_similar_shots(&shots, frames, config).map_err(|e| e.in_stage("shots"))?;
            (
                shots,
                labeling,
                Some((config.cut_threshold, config.similarity_threshold)),
            )
        }
    };
    let sequence =
        ShotSequence::from_shots(&shots, &labeling).map_err(|e| e.in_stage("patterns"))?;

    let mut patterns = assign_utterances(
        &extract_patterns(&sequence, config.extended),
        &inputs.segments,
    );
    if config.merge {
        patterns = merge_patterns(&patterns);
    }
    let coverage = coverage_stats(&patterns, &inputs.segments);

    let embeddings = EmbeddingSet::new(inputs.embeddings.iter().cloned(), config.normalize)
        .map_err(|e| e.in_stage("embeddings"))?;
    let covariance = covariance_for(inputs.training.as_deref(), embeddings.dim(), config)
        .map_err(|e| e.in_stage("covariance"))?;

    let by_id: BTreeMap<&str, &SpeechSegment> = inputs
        .segments
        .iter()
        .map(|s| (s.segment_id.as_str(), s))
        .collect();
    // segment ids per dialogue in time order
    let dialogue_segments: Vec<Vec<String>> = patterns
        .patterns
        .iter()
        .map(|p| {
            let mut ids: Vec<&SpeechSegment> =
                p.segments.iter().map(|id| by_id[id.as_str()]).collect();
            ids.sort_by(|a, b| a.start.total_cmp(&b.start));
            ids.into_iter().map(|s| s.segment_id.clone()).collect()
        })
        .collect();

    let mut local = Vec::new();
    let mut local_speakers = Vec::new();
    let mut constraints = ConstraintSet::new();
    let mut global = None;

    let diarization = if config.mode == Mode::Naive {
        let mut labels = BTreeMap::new();
        for (d, (pattern, ids)) in patterns.patterns.iter().zip(&dialogue_segments).enumerate() {
            let segs: Vec<&SpeechSegment> = ids.iter().map(|id| by_id[id.as_str()]).collect();
            for (id, label) in naive_assign(pattern, &sequence, &segs) {
                labels.insert(id, format!("d{d}.l{label}"));
            }
        }
        Diarization {
            mode: Some(Mode::Naive),
            labels,
        }
    } else {
        let whitener = covariance
            .whitener()
            .map_err(|e| e.in_stage("covariance"))?;
        local = dialogue_segments
            .par_iter()
            .enumerate()
            .map(|(d, ids)| {
                local_diarize(ids, &embeddings, &whitener)
                    .map(|partition| LocalDialogue {
                        dialogue: d,
                        segment_ids: ids.clone(),
                        partition,
                    })
                    .map_err(|e| match e {
                        Error::MissingEmbedding(id) => {
                            Error::MissingEmbedding(format!("{id} (dialogue {d})"))
                        }
                        other => other,
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("local"))?;
        local_speakers = build_global_instances(&local, &embeddings, config.normalize)
            .map_err(|e| e.in_stage("global"))?;
        constraints = derive_constraints(&local_speakers);

        if config.mode == Mode::Local {
            let mut labels = BTreeMap::new();
            for s in &local_speakers {
                for id in &s.segments {
                    labels.insert(id.clone(), s.name());
                }
            }
            Diarization {
                mode: Some(Mode::Local),
                labels,
            }
        } else {
            let constrained = config.mode == Mode::ConstrainedTwoStep;
            let result = global_diarize(&local_speakers, &constraints, constrained, &whitener)
                .map_err(|e| e.in_stage("global"))?;
            let d = result.diarization.clone();
            global = Some(result);
            d
        }
    };

    let manifest = RunManifest {
        mode: config.mode,
        extended: config.extended,
        merged: config.merge,
        normalize: config.normalize,
        shot_thresholds: thresholds,
        covariance: covariance.source.clone(),
        epsilon: covariance.epsilon,
        representative: if config.normalize {
            "unit-normalized mean of member embeddings".into()
        } else {
            "mean of member embeddings".into()
        },
        num_shots: shots.len(),
        num_patterns: patterns.len(),
        coverage,
        num_local_speakers: local_speakers.len(),
        num_constraints: constraints.len(),
        num_trees: global.as_ref().map(|g| g.forest.num_trees()),
        num_speakers: diarization.num_speakers(),
    };

    Ok(PipelineRun {
        shots,
        labeling,
        sequence,
        patterns,
        local,
        local_speakers,
        constraints,
        global,
        diarization,
        manifest,
    })
}
