//! File formats: shots (JSONL), frame histograms (CSV or JSONL), segments
//! (CSV or SRT), embeddings (CSV), patterns and manifests (JSON), RTTM.
//!
//! CSV readers accept an optional header line: a first record whose numeric
//! columns do not parse is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::embedding_space::{LabeledEmbedding, SegmentEmbedding};
use crate::pattern_miner::PatternSet;
use crate::pipeline::{parse_subtitles, Diarization, PipelineRun, SpeechSegment};
use crate::shot_analysis::{BlockHistogram, FrameDescriptor, Shot, ShotConfig, ShotLabeling};
use crate::synth::SyntheticEpisode;
use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(&row)?);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Records of a headerless-or-headed CSV file with their 1-based line numbers.
fn csv_records(text: &str, numeric_column: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        let is_header = out.is_empty()
            && fields
                .get(numeric_column)
                .is_some_and(|f| f.parse::<f64>().is_err());
        if !is_header {
            out.push((line, fields));
        }
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(fields: &[String], i: usize, line: usize, name: &str) -> Result<T> {
    fields
        .get(i)
        .ok_or_else(|| Error::parse(line, format!("missing column {name}")))?
        .parse()
        .map_err(|_| Error::parse(line, format!("bad value for {name}: {:?}", fields[i])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_time: f64,
    pub end_time: f64,
    pub label: u32,
}

pub fn shot_records(shots: &[Shot], labeling: &ShotLabeling) -> Result<Vec<ShotRecord>> {
    if shots.len() != labeling.labels.len() {
        return Err(Error::InconsistentShots(format!(
            "{} shots but {} labels",
            shots.len(),
            labeling.labels.len()
        )));
    }
    Ok(shots
        .iter()
        .zip(&labeling.labels)
        .map(|(s, &label)| ShotRecord {
            id: s.id,
            start_frame: s.start_frame,
            end_frame: s.end_frame,
            start_time: s.start_time,
            end_time: s.end_time,
            label,
        })
        .collect())
}

pub fn write_shots(path: &Path, shots: &[Shot], labeling: &ShotLabeling) -> Result<()> {
    write_jsonl(path, shot_records(shots, labeling)?)
}

pub fn read_shots(path: &Path) -> Result<(Vec<Shot>, ShotLabeling)> {
    let records: Vec<ShotRecord> = read_jsonl(path)?;
    let shots = records
        .iter()
        .map(|r| Shot {
            id: r.id,
            start_frame: r.start_frame,
            end_frame: r.end_frame,
            start_time: r.start_time,
            end_time: r.end_time,
        })
        .collect();
    let labels = records.iter().map(|r| r.label).collect();
    Ok((shots, ShotLabeling { labels }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistogramRecord {
    frame_index: u64,
    timestamp: f64,
    block_index: usize,
    bin_index: usize,
    mass: f64,
}

/// Frame histograms from a CSV (or `.jsonl`) file of
/// `frame_index,timestamp,block_index,bin_index,mass` records. Missing
/// records are zero mass; the grid and bins come from `config`.
pub fn read_histograms(path: &Path, config: &ShotConfig) -> Result<Vec<FrameDescriptor>> {
    config.validate()?;
    let records: Vec<(usize, HistogramRecord)> = if has_extension(path, "jsonl") {
        read_jsonl(path)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect()
    } else {
        csv_records(&read_text(path)?, 0)?
            .into_iter()
            .map(|(line, f)| {
                Ok((
                    line,
                    HistogramRecord {
                        frame_index: field(&f, 0, line, "frame_index")?,
                        timestamp: field(&f, 1, line, "timestamp")?,
                        block_index: field(&f, 2, line, "block_index")?,
                        bin_index: field(&f, 3, line, "bin_index")?,
                        mass: field(&f, 4, line, "mass")?,
                    },
                ))
            })
            .collect::<Result<_>>()?
    };
    let bins = config.bins();
    let (blocks, nb) = (config.block_rows * config.block_cols, bins.len());
    let mut frames: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (line, r) in records {
        if r.block_index >= blocks || r.bin_index >= nb {
            return Err(Error::parse(line, "block or bin index out of range"));
        }
        let entry = frames
            .entry(r.frame_index)
            .or_insert_with(|| (r.timestamp, vec![0.0; blocks * nb]));
        if entry.0 != r.timestamp {
            return Err(Error::parse(line, "timestamp differs within one frame"));
        }
        entry.1[r.block_index * nb + r.bin_index] += r.mass;
    }
    frames
        .into_iter()
        .map(|(frame_index, (timestamp, masses))| {
            Ok(FrameDescriptor {
                frame_index,
                timestamp,
                histogram: BlockHistogram::from_masses(
                    config.block_rows,
                    config.block_cols,
                    bins,
                    masses,
                )?,
            })
        })
        .collect()
}

/// Writes nonzero histogram entries as CSV with a header line.
pub fn write_histograms(path: &Path, frames: &[FrameDescriptor]) -> Result<()> {
    let mut text = String::from("frame_index,timestamp,block_index,bin_index,mass\n");
    for f in frames {
        for (b, block) in f.histogram.blocks().enumerate() {
            for (k, &m) in block.iter().enumerate() {
                if m != 0.0 {
                    text.push_str(&format!(
                        "{},{},{},{},{}\n",
                        f.frame_index, f.timestamp, b, k, m
                    ));
                }
            }
        }
    }
    write_text(path, &text)
}

/// Segments from an SRT file (by extension) or a CSV
/// `segment_id,start,end[,speaker]` file.
pub fn read_segments(path: &Path) -> Result<Vec<SpeechSegment>> {
    let text = read_text(path)?;
    if has_extension(path, "srt") {
        return parse_subtitles(&text);
    }
    parse_segments_csv(&text)
}

pub fn parse_segments_csv(text: &str) -> Result<Vec<SpeechSegment>> {
    csv_records(text, 1)?
        .into_iter()
        .map(|(line, f)| {
            let seg = SpeechSegment::new(
                f[0].clone(),
                field(&f, 1, line, "start")?,
                field(&f, 2, line, "end")?,
            );
            Ok(match f.get(3).filter(|s| !s.is_empty()) {
                Some(spk) => seg.with_speaker(spk.clone()),
                None => seg,
            })
        })
        .collect()
}

pub fn write_segments(path: &Path, segments: &[SpeechSegment]) -> Result<()> {
    let with_speaker = segments.iter().any(|s| s.reference_speaker.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    if with_speaker {
        w.write_record(["segment_id", "start", "end", "speaker"])?;
    } else {
        w.write_record(["segment_id", "start", "end"])?;
    }
    for s in segments {
        let mut row = vec![s.segment_id.clone(), s.start.to_string(), s.end.to_string()];
        if with_speaker {
            row.push(s.reference_speaker.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    finish_csv(path, w)
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_vector(f: &[String], from: usize, line: usize) -> Result<Vec<f64>> {
    if f.len() <= from {
        return Err(Error::parse(line, "record has no vector components"));
    }
    (from..f.len())
        .map(|i| field(f, i, line, &format!("v{}", i - from + 1)))
        .collect()
}

pub fn parse_embeddings_csv(text: &str) -> Result<Vec<SegmentEmbedding>> {
    let mut dim = None;
    csv_records(text, 1)?
        .into_iter()
        .map(|(line, f)| {
            let v = parse_vector(&f, 1, line)?;
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(Error::parse(
                    line,
                    "vector length differs from earlier records",
                ));
            }
            SegmentEmbedding::new(f[0].clone(), v).map_err(|e| Error::parse(line, e.to_string()))
        })
        .collect()
}

pub fn read_embeddings(path: &Path) -> Result<Vec<SegmentEmbedding>> {
    parse_embeddings_csv(&read_text(path)?)
}

pub fn write_embeddings(path: &Path, embeddings: &[SegmentEmbedding]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in embeddings {
        let mut row = vec![e.segment_id.clone()];
        row.extend(e.vector.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    finish_csv(path, w)
}

/// Training embeddings: `segment_id,speaker_label,v1..vd`.
pub fn parse_training_csv(text: &str) -> Result<Vec<LabeledEmbedding>> {
    csv_records(text, 2)?
        .into_iter()
        .map(|(line, f)| {
            let vector = parse_vector(&f, 2, line)?;
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::parse(line, "non-finite component"));
            }
            Ok(LabeledEmbedding {
                segment_id: f[0].clone(),
                speaker: f[1].clone(),
                vector,
            })
        })
        .collect()
}

pub fn read_training(path: &Path) -> Result<Vec<LabeledEmbedding>> {
    parse_training_csv(&read_text(path)?)
}

pub fn write_training(path: &Path, training: &[LabeledEmbedding]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in training {
        let mut row = vec![e.segment_id.clone(), e.speaker.clone()];
        row.extend(e.vector.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    finish_csv(path, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub start_shot: usize,
    pub end_shot: usize,
    pub start_time: f64,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub pattern_id: usize,
    pub labels: Vec<u32>,
    pub occurrences: Vec<OccurrenceRecord>,
    pub segment_ids: Vec<String>,
}

pub fn pattern_records(ps: &PatternSet) -> Vec<PatternRecord> {
    ps.patterns
        .iter()
        .enumerate()
        .map(|(i, p)| PatternRecord {
            pattern_id: i,
            labels: p.labels.iter().copied().collect(),
            occurrences: p
                .occurrences
                .iter()
                .map(|o| OccurrenceRecord {
                    start_shot: o.start_pos,
                    end_shot: o.end_pos,
                    start_time: o.start_time,
                    end_time: o.end_time,
                })
                .collect(),
            segment_ids: p.segments.iter().cloned().collect(),
        })
        .collect()
}

pub fn write_patterns(path: &Path, ps: &PatternSet) -> Result<()> {
    write_json(path, &pattern_records(ps))
}

/// RTTM lines, one per labeled segment, in time order.
pub fn format_rttm(
    recording: &str,
    diarization: &Diarization,
    segments: &[SpeechSegment],
) -> String {
    let mut out = String::new();
    for s in segments {
        if let Some(label) = diarization.labels.get(&s.segment_id) {
            out.push_str(&format!(
                "SPEAKER {recording} 1 {:.3} {:.3} <NA> <NA> {label} <NA>\n",
                s.start,
                s.duration()
            ));
        }
    }
    out
}

pub fn write_rttm(
    path: &Path,
    recording: &str,
    diarization: &Diarization,
    segments: &[SpeechSegment],
) -> Result<()> {
    write_text(path, &format_rttm(recording, diarization, segments))
}

/// Maps RTTM turns back to segments: each turn labels the segment it
/// overlaps most.
pub fn parse_rttm(text: &str, segments: &[SpeechSegment]) -> Result<Diarization> {
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with(';') {
            continue;
        }
        if f[0] != "SPEAKER" || f.len() < 8 {
            return Err(Error::parse(
                i + 1,
                "expected a SPEAKER record with 8+ fields",
            ));
        }
        let onset: f64 = f[3].parse().map_err(|_| Error::parse(i + 1, "bad onset"))?;
        let dur: f64 = f[4]
            .parse()
            .map_err(|_| Error::parse(i + 1, "bad duration"))?;
        let best = segments
            .iter()
            .map(|s| (s.end.min(onset + dur) - s.start.max(onset), s))
            .filter(|(o, _)| *o > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((_, s)) => {
                labels.insert(s.segment_id.clone(), f[7].to_string());
            }
            None => return Err(Error::parse(i + 1, "turn overlaps no segment")),
        }
    }
    Ok(Diarization { mode: None, labels })
}

/// Diarization from an RTTM file, a `segment_id,label` CSV, or a segments
/// CSV with a speaker column.
pub fn read_diarization(path: &Path, segments: &[SpeechSegment]) -> Result<Diarization> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if has_extension(path, "rttm") || first.trim_start().starts_with("SPEAKER") {
        return parse_rttm(&text, segments);
    }
    let records = csv_records(&text, usize::MAX)?;
    let skip_header = records.first().is_some_and(|(_, f)| f[0] == "segment_id");
    let mut labels = BTreeMap::new();
    for (line, f) in records.into_iter().skip(usize::from(skip_header)) {
        let label = match f.len() {
            2 => f[1].clone(),
            n if n >= 4 => f[3].clone(),
            _ => {
                return Err(Error::parse(
                    line,
                    "expected segment_id,label or segments with speaker",
                ))
            }
        };
        if !label.is_empty() {
            labels.insert(f[0].clone(), label);
        }
    }
    Ok(Diarization { mode: None, labels })
}

pub fn write_labels(path: &Path, diarization: &Diarization) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment_id", "label"])?;
    for (id, label) in &diarization.labels {
        w.write_record([id, label])?;
    }
    finish_csv(path, w)
}

pub fn write_dialogue_map(path: &Path, map: &BTreeMap<String, usize>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment_id", "dialogue"])?;
    for (id, d) in map {
        w.write_record([id.clone(), d.to_string()])?;
    }
    finish_csv(path, w)
}

pub fn read_dialogue_map(path: &Path) -> Result<BTreeMap<String, usize>> {
    csv_records(&read_text(path)?, 1)?
        .into_iter()
        .map(|(line, f)| Ok((f[0].clone(), field(&f, 1, line, "dialogue")?)))
        .collect()
}

/// Writes the full output of a pipeline run into `dir`.
pub fn write_artifacts(
    dir: &Path,
    recording: &str,
    run: &PipelineRun,
    segments: &[SpeechSegment],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rttm(
        &dir.join("diarization.rttm"),
        recording,
        &run.diarization,
        segments,
    )?;
    write_labels(&dir.join("labels.csv"), &run.diarization)?;
    write_json(&dir.join("manifest.json"), &run.manifest)?;
    write_patterns(&dir.join("patterns.json"), &run.patterns)?;
    write_dialogue_map(&dir.join("dialogues.csv"), &run.dialogue_of())?;
    write_shots(&dir.join("shots.jsonl"), &run.shots, &run.labeling)?;
    if let Some(global) = &run.global {
        write_json(&dir.join("forest.json"), &global.forest.export())?;
    }
    Ok(())
}

/// Writes a synthetic episode in the same formats the CLI reads.
pub fn write_synthetic(dir: &Path, episode: &SyntheticEpisode) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_shots(&dir.join("shots.jsonl"), &episode.shots, &episode.labeling)?;
    write_segments(&dir.join("segments.csv"), &episode.segments)?;
    write_embeddings(&dir.join("embeddings.csv"), &episode.embeddings)?;
    write_training(&dir.join("train.csv"), &episode.training)?;
    write_rttm(
        &dir.join("reference.rttm"),
        "synthetic",
        &episode.reference(),
        &episode.segments,
    )?;
    write_dialogue_map(&dir.join("dialogues.csv"), &episode.planted_dialogue_of())?;
    write_json(&dir.join("config.json"), &episode.config)?;
    let mut log = fs::File::create(dir.join("planted.json")).map_err(|e| Error::io(dir, e))?;
    writeln!(log, "{}", serde_json::to_string_pretty(&episode.dialogues)?)
        .map_err(|e| Error::io(dir, e))
}
