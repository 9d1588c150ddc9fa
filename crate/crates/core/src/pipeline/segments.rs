//! Speech segments and SubRip ingestion.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Single-speaker spoken interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub segment_id: String,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_speaker: Option<String>,
}

impl SpeechSegment {
    pub fn new(segment_id: impl Into<String>, start: f64, end: f64) -> Self {
        SpeechSegment {
            segment_id: segment_id.into(),
            start,
            end,
            text: None,
            reference_speaker: None,
        }
    }

    pub fn with_speaker(mut self, speaker: impl Into<String>) -> Self {
        self.reference_speaker = Some(speaker.into());
        self
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Checks `start < end`, unique ids and time ordering without overlap.
pub fn validate_segments(segments: &[SpeechSegment]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (i, s) in segments.iter().enumerate() {
        if !(s.start < s.end) || !s.start.is_finite() || !s.end.is_finite() {
            return Err(Error::parse(
                i + 1,
                format!(
                    "segment {} has invalid span [{}, {}]",
                    s.segment_id, s.start, s.end
                ),
            ));
        }
        if !seen.insert(s.segment_id.as_str()) {
            return Err(Error::parse(
                i + 1,
                format!("duplicate segment id {}", s.segment_id),
            ));
        }
    }
    for (i, w) in segments.windows(2).enumerate() {
        if w[1].start < w[0].end - 1e-9 {
            return Err(Error::parse(
                i + 2,
                format!(
                    "segment {} overlaps segment {}",
                    w[1].segment_id, w[0].segment_id
                ),
            ));
        }
    }
    Ok(())
}

fn parse_timestamp(raw: &str, line: usize) -> Result<f64> {
    let bad = || Error::parse(line, format!("malformed timestamp {raw:?}"));
    let raw = raw.trim();
    let (hms, millis) = raw.split_once([',', '.']).ok_or_else(bad)?;
    let parts: Vec<&str> = hms.split(':').collect();
    if parts.len() != 3 || millis.is_empty() || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let (h, m, s) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if m >= 60 || s >= 60 {
        return Err(bad());
    }
    let frac = format!("0.{millis}").parse::<f64>().map_err(|_| bad())?;
    Ok((h * 3600 + m * 60 + s) as f64 + frac)
}

/// Parses SubRip text into speech segments.
///
/// A block whose text lines all start with a dash holds one utterance per
/// line; its time span is shared among the lines in proportion to their
/// character counts and ids get a `.k` suffix. Blocks starting before the
/// previous block ends are clipped to it (and dropped if nothing remains).
pub fn parse_subtitles(text: &str) -> Result<Vec<SpeechSegment>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out: Vec<SpeechSegment> = Vec::new();
    let mut i = 0;
    let mut prev_end = f64::NEG_INFINITY;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let index_line = i + 1;
        let index = lines[i].trim().trim_start_matches('\u{feff}').to_string();
        if index.contains("-->") {
            return Err(Error::parse(index_line, "missing subtitle index"));
        }
        i += 1;
        let timing = lines
            .get(i)
            .ok_or_else(|| Error::parse(i + 1, "missing timing line"))?;
        let (from, to) = timing
            .split_once("-->")
            .ok_or_else(|| Error::parse(i + 1, "missing '-->' separator"))?;
        let mut start = parse_timestamp(from, i + 1)?;
        // trailing SubRip position hints such as `X1:...` are ignored
        let end = parse_timestamp(to.split_whitespace().next().unwrap_or(""), i + 1)?;
        if end < start {
            return Err(Error::parse(i + 1, "subtitle ends before it starts"));
        }
        i += 1;
        let mut body = Vec::new();
        while i < lines.len() && !lines[i].trim().is_empty() {
            body.push(lines[i].trim());
            i += 1;
        }

        if start < prev_end {
            log::warn!(
                "subtitle {index} starts at {start:.3}s before previous end {prev_end:.3}s; clipping"
            );
            start = prev_end;
        }
        if start >= end {
            log::warn!("subtitle {index} is empty after clipping; dropped");
            continue;
        }
        prev_end = end;

        let dashed = body.len() >= 2 && body.iter().all(|l| l.starts_with('-'));
        if dashed {
            let weights: Vec<usize> = body.iter().map(|l| l.chars().count()).collect();
            let total: usize = weights.iter().sum();
            let span = end - start;
            let mut acc = 0usize;
            for (k, (line, w)) in body.iter().zip(&weights).enumerate() {
                let s = start + span * acc as f64 / total as f64;
                acc += w;
                let e = if k + 1 == body.len() {
                    end
                } else {
                    start + span * acc as f64 / total as f64
                };
                let mut seg = SpeechSegment::new(format!("{index}.{}", k + 1), s, e);
                seg.text = Some(line.trim_start_matches('-').trim().to_string());
                out.push(seg);
            }
        } else {
            let mut seg = SpeechSegment::new(index, start, end);
            seg.text = (!body.is_empty()).then(|| body.join(" "));
            out.push(seg);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let segs = parse_subtitles("1\n00:00:01,000 --> 00:00:03,000\nHello.\n").unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (1.0, 3.0));
        assert_eq!(segs[0].text.as_deref(), Some("Hello."));
        assert_eq!(segs[0].segment_id, "1");
    }

    #[test]
    fn dash_lines_split_by_character_share() {
        let srt = "7\n00:00:10,000 --> 00:00:14,000\n- Yes\n- No way no\n";
        let segs = parse_subtitles(srt).unwrap();
        assert_eq!(segs.len(), 2);
        assert!((segs[0].start - 10.0).abs() < 1e-12);
        assert!((segs[0].end - 11.25).abs() < 1e-12);
        assert!((segs[1].start - 11.25).abs() < 1e-12);
        assert!((segs[1].end - 14.0).abs() < 1e-12);
        assert_eq!(segs[1].text.as_deref(), Some("No way no"));
        assert_eq!(segs[0].segment_id, "7.1");
    }

    #[test]
    fn missing_arrow_reports_line() {
        let srt = "1\n00:00:01,000 --> 00:00:02,000\nA\n\n2\n00:00:03,000 00:00:04,000\nB\n";
        match parse_subtitles(srt) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_timestamp() {
        let srt = "1\n00:00:xx,000 --> 00:00:02,000\nA\n";
        assert!(matches!(
            parse_subtitles(srt),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn overlapping_blocks_are_clipped() {
        let srt = "1\n00:00:01,000 --> 00:00:03,000\nA\n\n2\n00:00:02,500 --> 00:00:04,000\nB\n\n\
                   3\n00:00:03,500 --> 00:00:03,900\nC\n";
        let segs = parse_subtitles(srt).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].start, 3.0);
        validate_segments(&segs).unwrap();
    }

    #[test]
    fn validation_catches_overlap_and_duplicates() {
        let a = SpeechSegment::new("a", 0.0, 2.0);
        assert!(validate_segments(&[a.clone(), SpeechSegment::new("b", 1.0, 3.0)]).is_err());
        assert!(validate_segments(&[a.clone(), SpeechSegment::new("a", 3.0, 4.0)]).is_err());
        assert!(validate_segments(&[SpeechSegment::new("z", 1.0, 1.0)]).is_err());
        assert!(validate_segments(&[a, SpeechSegment::new("b", 2.0, 3.0)]).is_ok());
    }
}
