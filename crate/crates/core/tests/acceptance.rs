//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;

use scenediar::constrained_hac::{
    agglomerate, cut_forest, ward_delta, Cluster, ConstraintSet, DistanceMatrix, Instance,
};
use scenediar::embedding_space::{compute_within_class_cov, euclidean, mahalanobis, Whitener};
use scenediar::eval::{
    cut_frames, der, f1_cuts, f1_similarity, per_dialogue_der, single_show_der, DerReport, F1Report,
};
use scenediar::pattern_miner::{extract_patterns, ShotSequence};
use scenediar::pipeline::{
    run_pipeline, Diarization, Mode, PipelineConfig, PipelineInputs, ShotInput, SpeechSegment,
};
use scenediar::shot_analysis::{
    compute_block_histograms, detect_cuts, detect_similar_shots, load_frame_dir, ppm::read_ppm,
    ShotConfig, ShotLabeling,
};
use scenediar::synth::{generate_synthetic_episode, SyntheticEpisode, SyntheticEpisodeConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]),
    );
    let strings = (1u32..=20).prop_flat_map(|k| proptest::collection::vec(0..k, 0..=200));
    let mut mismatches = 0;
    for _ in 0..1000 {
        let labels = strings.new_tree(&mut runner).unwrap().current();
        let seq = ShotSequence::from_labels(labels.clone());
        for extended in [false, true] {
            if extract_patterns(&seq, extended).label_pairs()
                != common::regex_pattern_pairs(&labels, extended)
            {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && within(elapsed, 10.0),
        format!("1000 strings x 2 rules, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(2);
    let (mut bad_pairs, mut worst) = (0, 0.0f64);
    for trial in 0..200 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=8);
        let density = if trial % 4 == 0 {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        };
        let (instances, constraints) = common::random_problem(&mut rng, n, d, density);
        let forest = agglomerate(&instances, &constraints).unwrap();
        let oracle = common::naive_hac(&instances, &constraints);
        if forest.merges.len() != oracle.len() {
            bad_pairs += 1;
            continue;
        }
        for (m, o) in forest.merges.iter().zip(&oracle) {
            if (m.left, m.right) != (o.left, o.right) {
                bad_pairs += 1;
            }
            worst = worst.max((m.height - o.height).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        bad_pairs == 0 && worst <= 1e-9 && within(elapsed, 30.0),
        format!("200 sets, {bad_pairs} sequence mismatches, max height error {worst:.1e}, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = common::rng(3);
    let (mut violations, mut inheritance_failures, mut merges_checked) = (0, 0, 0);
    for _ in 0..500 {
        let n = rng.random_range(2..=40);
        let d = rng.random_range(1..=6);
        let density = rng.random_range(0.01..0.5);
        let (instances, constraints) = common::random_problem(&mut rng, n, d, density);
        let forest = agglomerate(&instances, &constraints).unwrap();

        let cluster = |node: usize| Cluster::from_members(&instances, forest.leaves_under(node));
        let blocked = |a: &Cluster, b: &Cluster| ward_delta(a, b, &constraints).is_infinite();
        let mut active: Vec<usize> = (0..n).collect();
        for m in &forest.merges {
            let (l, r, c) = (cluster(m.left), cluster(m.right), cluster(m.node));
            if blocked(&l, &r) {
                violations += 1;
            }
            active.retain(|&x| x != m.left && x != m.right);
            for &o in &active {
                let other = cluster(o);
                if blocked(&c, &other) != (blocked(&l, &other) || blocked(&r, &other)) {
                    inheritance_failures += 1;
                }
            }
            active.push(m.node);
            merges_checked += 1;
        }
        let partition = cut_forest(&forest, &DistanceMatrix::of_instances(&instances)).unwrap();
        if partition.violates(&constraints) {
            violations += 1;
        }
    }
    check(
        violations == 0 && inheritance_failures == 0,
        format!(
            "500 runs, {merges_checked} merges checked, {violations} violations, \
             {inheritance_failures} inheritance failures"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = common::rng(4);
    let (mut worst_w, mut worst_rel) = (0.0f64, 0.0f64);
    for trial in 0..20 {
        let n = rng.random_range(20..=1000);
        let d = rng.random_range(1..=16);
        let speakers = rng.random_range(2..=20);
        let training = common::random_training(&mut rng, n, d, speakers);
        let w = compute_within_class_cov(&training).unwrap();
        let oracle = common::two_pass_within_class(&training);
        for i in 0..d {
            for j in 0..d {
                worst_w = worst_w.max((w.matrix[(i, j)] - oracle[i][j]).abs());
            }
        }
        let eps = if trial % 2 == 0 { w.epsilon } else { 0.0 };
        let whitener = Whitener::new(&w.matrix, eps).unwrap();
        for _ in 0..100 {
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let m = mahalanobis(&a, &b, &w.matrix, eps).unwrap();
            let e = euclidean(&whitener.apply(&a).unwrap(), &whitener.apply(&b).unwrap());
            worst_rel = worst_rel.max((m - e).abs() / m.max(f64::MIN_POSITIVE));
        }
    }
    check(
        worst_w <= 1e-9 && worst_rel <= 1e-6,
        format!("20 trials, max |W - oracle| {worst_w:.1e}, max relative distance error {worst_rel:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(5);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut recovered = 0;
    for trial in 0..100 {
        let k = 2 + trial % 3;
        let d = 4;
        let scale = 8.0 / std::f64::consts::SQRT_2;
        let instances: Vec<Instance> = (0..k)
            .flat_map(|c| (0..20).map(move |_| c))
            .map(|c| {
                let v = (0..d)
                    .map(|j| if j == c { scale } else { 0.0 } + rng.sample(normal))
                    .collect();
                Instance::new(v)
            })
            .collect();
        let forest = agglomerate(&instances, &ConstraintSet::new()).unwrap();
        let p = cut_forest(&forest, &DistanceMatrix::of_instances(&instances)).unwrap();
        if forest.num_trees() == 1 && p.num_clusters() == k {
            recovered += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        recovered >= 95 && within(elapsed, 60.0),
        format!("planted k recovered in {recovered}/100 trials, {elapsed:.2?}"),
    )
}

fn run_mode(ep: &SyntheticEpisode, mode: Mode) -> scenediar::pipeline::PipelineRun {
    let inputs = PipelineInputs {
        shots: ShotInput::Labeled {
            shots: ep.shots.clone(),
            labeling: ep.labeling.clone(),
        },
        segments: ep.segments.clone(),
        embeddings: ep.embeddings.clone(),
        training: Some(ep.training.clone()),
    };
    run_pipeline(
        &inputs,
        &PipelineConfig {
            mode,
            ..Default::default()
        },
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let base = SyntheticEpisodeConfig {
        num_speakers: 6,
        num_dialogues: 8,
        separation: 10.0,
        coverage: 0.6,
        ..Default::default()
    };
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let ep = generate_synthetic_episode(&SyntheticEpisodeConfig {
            seed,
            ..base.clone()
        })
        .unwrap();
        let run = run_mode(&ep, Mode::ConstrainedTwoStep);
        let d = der(&ep.reference(), &run.diarization, &ep.segments)
            .unwrap()
            .der;
        let speakers = run.diarization.num_speakers();
        ok &= d <= 0.05 && speakers == 6;
        details.push(format!("{:.1}%/{speakers}", 100.0 * d));
    }
    let mut naive = Vec::new();
    for seed in 0..5 {
        let ep = generate_synthetic_episode(&SyntheticEpisodeConfig {
            seed,
            synchronized: true,
            ..base.clone()
        })
        .unwrap();
        let run = run_mode(&ep, Mode::Naive);
        let per = per_dialogue_der(
            &ep.reference(),
            &run.diarization,
            &ep.segments,
            &run.dialogue_of(),
        )
        .unwrap();
        let reports: Vec<DerReport> = per.into_iter().map(|(_, r)| r).collect();
        let d = single_show_der(&reports).unwrap();
        ok &= d == 0.0;
        naive.push(format!("{:.1}%", 100.0 * d));
    }
    let elapsed = start.elapsed();
    check(
        ok && within(elapsed, 60.0),
        format!(
            "cst2s DER/speakers over 5 seeds [{}]; naive single-show DER on synchronized [{}]; {elapsed:.2?}",
            details.join(", "),
            naive.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let (mut two, mut cst, mut wins, mut losses) = (0.0, 0.0, 0, 0);
    for seed in 0..50u64 {
        let ep = generate_synthetic_episode(&SyntheticEpisodeConfig {
            separation: 4.0 + 2.0 * seed as f64 / 49.0,
            seed: 1000 + seed,
            ..Default::default()
        })
        .unwrap();
        let reference = ep.reference();
        let a = der(
            &reference,
            &run_mode(&ep, Mode::TwoStep).diarization,
            &ep.segments,
        )
        .unwrap()
        .der;
        let b = der(
            &reference,
            &run_mode(&ep, Mode::ConstrainedTwoStep).diarization,
            &ep.segments,
        )
        .unwrap()
        .der;
        two += a / 50.0;
        cst += b / 50.0;
        if b < a {
            wins += 1;
        } else if b > a {
            losses += 1;
        }
    }
    check(
        cst < two,
        format!(
            "mean DER 2s {:.2}% vs cst2s {:.2}% (cst2s better on {wins}, worse on {losses} of 50)",
            100.0 * two,
            100.0 * cst
        ),
    )
}

fn criterion_8() -> Outcome {
    let segs = |durations: &[(&str, f64)]| -> Vec<SpeechSegment> {
        let mut t = 0.0;
        durations
            .iter()
            .map(|&(id, d)| {
                t += d;
                SpeechSegment::new(id, t - d, t)
            })
            .collect()
    };
    let diar = |pairs: &[(&str, &str)]| Diarization {
        mode: None,
        labels: pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    };
    let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
    let mut failures = Vec::new();

    let s = segs(&[("a", 8.0), ("b", 2.0), ("c", 10.0)]);
    let r = diar(&[("a", "X"), ("b", "X"), ("c", "Y")]);
    if !close(der(&r, &r, &s).unwrap().der, 0.0) {
        failures.push("identity");
    }
    let h = diar(&[("a", "1"), ("b", "2"), ("c", "2")]);
    if !close(der(&r, &h, &s).unwrap().der, 0.10) {
        failures.push("2 of 20 seconds");
    }
    let rep = |der: f64, total: f64| DerReport {
        total,
        confusion: der * total,
        der,
        mapping: BTreeMap::new(),
    };
    if !close(
        single_show_der(&[rep(0.1, 10.0), rep(0.2, 30.0)]).unwrap(),
        0.175,
    ) {
        failures.push("single-show weighted mean");
    }
    let f = F1Report::from_pr(0.5, 1.0);
    if !close(f.f1, 2.0 / 3.0) {
        failures.push("f1 from precision/recall");
    }
    let c = f1_cuts(&[10, 20, 30, 40], &[10, 30, 55], 1);
    if !(close(c.precision, 2.0 / 3.0) && close(c.recall, 0.5) && close(c.f1, 4.0 / 7.0)) {
        failures.push("cut f1");
    }
    let same = ShotLabeling {
        labels: vec![0, 1, 0, 1],
    };
    let partial = ShotLabeling {
        labels: vec![0, 1, 0, 2],
    };
    let sim = f1_similarity(&same, &partial).unwrap();
    if !(close(sim.precision, 1.0) && close(sim.recall, 0.5) && close(sim.f1, 2.0 / 3.0)) {
        failures.push("similarity f1");
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "DER 0 / 0.10, single-show 0.175, cut and similarity F1 exact".into()
        } else {
            format!("failed cases: {}", failures.join(", "))
        },
    )
}

fn criterion_9() -> Outcome {
    let planted = common::load_planted();
    let config = ShotConfig::default();
    let frames = load_frame_dir(&common::fixtures().join("frames"), 25.0, &config).unwrap();
    let shots = detect_cuts(&frames, &config).unwrap();
    let labeling = detect_similar_shots(&shots, &frames, &config).unwrap();
    let cut_f1 = f1_cuts(&planted.cut_frames, &cut_frames(&shots), 0).f1;
    let sim_f1 = f1_similarity(
        &ShotLabeling {
            labels: planted.labels.clone(),
        },
        &labeling,
    )
    .unwrap()
    .f1;
    let labels_exact = labeling.labels == planted.labels;

    let mut blocks_checked = 0;
    let mut bin_mismatches = 0;
    for name in ["hsv_oracle.json", "hsv_oracle_alt.json"] {
        let oracle = common::load_hsv_oracle(name);
        let cfg = ShotConfig {
            block_rows: oracle.grid.0,
            block_cols: oracle.grid.1,
            bins_h: oracle.bins.0,
            bins_s: oracle.bins.1,
            bins_v: oracle.bins.2,
            ..ShotConfig::default()
        };
        for (file, blocks) in &oracle.images {
            let path = if file.starts_with("edges") {
                common::fixtures().join(file)
            } else {
                common::fixtures().join("frames").join(file)
            };
            let hist = compute_block_histograms(&read_ppm(&path).unwrap(), &cfg).unwrap();
            for (b, expected) in blocks.iter().enumerate() {
                let mut want = vec![0.0; cfg.bins().len()];
                for &(bin, count) in &expected.counts {
                    want[bin] = count as f64 / expected.total as f64;
                }
                blocks_checked += 1;
                if hist.block(b) != &want[..] {
                    bin_mismatches += 1;
                }
            }
        }
    }
    check(
        cut_f1 == 1.0 && sim_f1 == 1.0 && labels_exact && bin_mismatches == 0,
        format!(
            "cut F1 {cut_f1}, similarity F1 {sim_f1}, labels exact {labels_exact}; \
             {blocks_checked} oracle blocks, {bin_mismatches} mismatches"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("pattern extraction vs regex oracle", criterion_1),
        ("HAC vs naive oracle", criterion_2),
        ("constraint safety and inheritance", criterion_3),
        ("within-class covariance and Mahalanobis", criterion_4),
        ("silhouette model selection", criterion_5),
        ("end-to-end synthetic episode", criterion_6),
        ("constrained beats unconstrained on average", criterion_7),
        ("metric hand cases", criterion_8),
        ("shot analysis on PPM fixtures", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {status} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
