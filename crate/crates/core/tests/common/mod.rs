//! Independent reference implementations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;

use scenediar::constrained_hac::{ConstraintSet, Instance};
use scenediar::embedding_space::LabeledEmbedding;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Alternation occurrences `(min label, max label, start, end)` found by
/// regex over a character rendering of the label string.
pub fn regex_alternations(labels: &[u32], min_len: usize) -> BTreeSet<(u32, u32, usize, usize)> {
    assert!(labels.iter().all(|&l| l < 26));
    let text: String = labels.iter().map(|&l| (b'a' + l as u8) as char).collect();
    let alphabet: BTreeSet<u32> = labels.iter().copied().collect();
    let mut out = BTreeSet::new();
    for &a in &alphabet {
        for &b in alphabet.range(a + 1..) {
            let re = pair_regex(a, b);
            for m in re.find_iter(&text) {
                if m.len() >= min_len {
                    out.insert((a, b, m.start(), m.end() - 1));
                }
            }
        }
    }
    out
}

fn pair_regex(a: u32, b: u32) -> Regex {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u32), Regex>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap();
    cache
        .entry((a, b))
        .or_insert_with(|| {
            let (ca, cb) = ((b'a' + a as u8) as char, (b'a' + b as u8) as char);
            Regex::new(&format!("(?:{ca}{cb})+{ca}?|(?:{cb}{ca})+{cb}?")).unwrap()
        })
        .clone()
}

/// Pairs `{a, b}` for which the string contains `a b a` (or, with
/// `extended`, at least `a b`).
pub fn regex_pattern_pairs(labels: &[u32], extended: bool) -> BTreeSet<(u32, u32)> {
    regex_alternations(labels, if extended { 2 } else { 3 })
        .into_iter()
        .map(|(a, b, _, _)| (a, b))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMerge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// Cubic-time constrained Ward agglomeration recomputing every cluster
/// center and mass from its members at every step.
pub fn naive_hac(instances: &[Instance], constraints: &ConstraintSet) -> Vec<OracleMerge> {
    let n = instances.len();
    let mut active: BTreeMap<usize, Vec<usize>> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        let ids: Vec<usize> = active.keys().copied().collect();
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                let (a, b) = (&active[&i], &active[&j]);
                if a.iter()
                    .any(|&p| b.iter().any(|&q| constraints.contains(p, q)))
                {
                    continue;
                }
                let cost = ward_from_members(instances, a, b);
                let better = match best {
                    None => true,
                    Some((c, bi, bj)) => cost < c || (cost == c && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((cost, i, j));
                }
            }
        }
        let Some((height, i, j)) = best else { break };
        let mut members = active.remove(&i).unwrap();
        members.extend(active.remove(&j).unwrap());
        active.insert(n + merges.len(), members);
        merges.push(OracleMerge {
            left: i,
            right: j,
            height,
        });
    }
    merges
}

fn center(instances: &[Instance], members: &[usize]) -> (f64, Vec<f64>) {
    let d = instances[0].vector.len();
    let mass: f64 = members.iter().map(|&i| instances[i].mass).sum();
    let mut c = vec![0.0; d];
    for &i in members {
        for (ck, x) in c.iter_mut().zip(&instances[i].vector) {
            *ck += instances[i].mass * x;
        }
    }
    c.iter_mut().for_each(|x| *x /= mass);
    (mass, c)
}

pub fn ward_from_members(instances: &[Instance], a: &[usize], b: &[usize]) -> f64 {
    let (ma, ca) = center(instances, a);
    let (mb, cb) = center(instances, b);
    let d2: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
    ma * mb / (ma + mb) * d2
}

/// Random instances and a random cannot-link set of the given density.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    density: f64,
) -> (Vec<Instance>, ConstraintSet) {
    let instances: Vec<Instance> = (0..n)
        .map(|_| Instance::new((0..d).map(|_| rng.random_range(-5.0..5.0)).collect()))
        .collect();
    let mut constraints = ConstraintSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                constraints.insert(i, j).unwrap();
            }
        }
    }
    (instances, constraints)
}

/// Two-pass within-class scatter: class means first, then the summed outer
/// products of deviations, divided by the number of vectors.
pub fn two_pass_within_class(training: &[LabeledEmbedding]) -> Vec<Vec<f64>> {
    let d = training[0].vector.len();
    let mut sums: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for e in training {
        let entry = sums.entry(&e.speaker).or_insert((0, vec![0.0; d]));
        entry.0 += 1;
        for (s, x) in entry.1.iter_mut().zip(&e.vector) {
            *s += x;
        }
    }
    let means: BTreeMap<&str, Vec<f64>> = sums
        .into_iter()
        .map(|(k, (n, s))| (k, s.into_iter().map(|x| x / n as f64).collect()))
        .collect();
    let mut w = vec![vec![0.0; d]; d];
    for e in training {
        let m = &means[e.speaker.as_str()];
        for i in 0..d {
            for j in 0..d {
                w[i][j] += (e.vector[i] - m[i]) * (e.vector[j] - m[j]);
            }
        }
    }
    let n = training.len() as f64;
    w.iter_mut().flatten().for_each(|x| *x /= n);
    w
}

/// Labeled vectors with anisotropic, correlated within-class noise.
pub fn random_training(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    speakers: usize,
) -> Vec<LabeledEmbedding> {
    let mix: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let centers: Vec<Vec<f64>> = (0..speakers)
        .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let k = i % speakers;
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vector = (0..d)
                .map(|r| centers[k][r] + (0..d).map(|c| mix[r][c] * z[c]).sum::<f64>())
                .collect();
            LabeledEmbedding {
                segment_id: format!("t{i}"),
                speaker: format!("spk{k}"),
                vector,
            }
        })
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct OracleBlock {
    pub total: u64,
    pub counts: Vec<(usize, u64)>,
}

#[derive(Debug, Deserialize)]
pub struct HsvOracle {
    pub grid: (usize, usize),
    pub bins: (usize, usize, usize),
    pub images: BTreeMap<String, Vec<OracleBlock>>,
}

pub fn load_hsv_oracle(name: &str) -> HsvOracle {
    let text = std::fs::read_to_string(fixtures().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Debug, Deserialize)]
pub struct Planted {
    pub num_frames: usize,
    pub cut_frames: Vec<u64>,
    pub labels: Vec<u32>,
}

pub fn load_planted() -> Planted {
    let text = std::fs::read_to_string(fixtures().join("planted.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
