mod common;

use proptest::prelude::*;
use scenediar::constrained_hac::{
    agglomerate, cut_forest, ConstraintSet, DendrogramForest, DistanceMatrix, ExportNode, Instance,
};

fn assert_matches_oracle(instances: &[Instance], constraints: &ConstraintSet) {
    let forest = agglomerate(instances, constraints).unwrap();
    let oracle = common::naive_hac(instances, constraints);
    assert_eq!(forest.merges.len(), oracle.len());
    for (k, (m, o)) in forest.merges.iter().zip(&oracle).enumerate() {
        assert_eq!((m.left, m.right), (o.left, o.right), "merge {k}");
        assert!(
            (m.height - o.height).abs() <= 1e-9 * o.height.abs().max(1.0),
            "merge {k}: {} vs {}",
            m.height,
            o.height
        );
        assert_eq!(m.node, instances.len() + k);
    }
}

fn assert_constraints_respected(forest: &DendrogramForest, constraints: &ConstraintSet) {
    for m in &forest.merges {
        let (a, b) = (forest.leaves_under(m.left), forest.leaves_under(m.right));
        assert!(
            !constraints.blocks(&a, &b),
            "merge {m:?} joins a cannot-link pair"
        );
    }
    // stopping means every remaining pair of trees is blocked
    let roots = forest.roots();
    for (i, &r) in roots.iter().enumerate() {
        for &s in &roots[i + 1..] {
            assert!(constraints.blocks(&forest.leaves_under(r), &forest.leaves_under(s)));
        }
    }
}

#[test]
fn matches_naive_oracle_on_random_problems() {
    let mut rng = common::rng(11);
    for case in 0..60 {
        let n = 2 + case % 25;
        let d = 1 + case % 6;
        let density = (case % 6) as f64 * 0.1;
        let (instances, constraints) = common::random_problem(&mut rng, n, d, density);
        assert_matches_oracle(&instances, &constraints);
    }
}

#[test]
fn weighted_instances_match_oracle() {
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let (plain, constraints) = common::random_problem(&mut rng, 15, 3, 0.2);
        let weighted: Vec<Instance> = plain
            .into_iter()
            .enumerate()
            .map(|(i, inst)| Instance::with_mass(inst.vector, 1.0 + (i % 4) as f64).unwrap())
            .collect();
        assert_matches_oracle(&weighted, &constraints);
    }
}

#[test]
fn heights_are_non_decreasing() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let (instances, constraints) = common::random_problem(&mut rng, 30, 4, 0.3);
        let forest = agglomerate(&instances, &constraints).unwrap();
        for w in forest.merges.windows(2) {
            assert!(w[1].height >= w[0].height - 1e-9);
        }
    }
}

#[test]
fn exported_nodes_list_their_leaves() {
    let mut rng = common::rng(14);
    let (instances, constraints) = common::random_problem(&mut rng, 10, 2, 0.2);
    let forest = agglomerate(&instances, &constraints).unwrap();
    let export = forest.export();
    assert_eq!(export.len(), forest.num_trees());
    let mut stack: Vec<&ExportNode> = export.iter().collect();
    let mut seen = 0;
    while let Some(node) = stack.pop() {
        seen += 1;
        assert_eq!(node.member_ids, forest.leaves_under(node.node_id));
        assert!(node.children.is_empty() || node.children.len() == 2);
        stack.extend(&node.children);
    }
    assert_eq!(seen, forest.nodes.len());
    let json = serde_json::to_string(&export).unwrap();
    assert!(json.contains("member_ids"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constraints_hold_in_forest_and_partition(
        seed in any::<u64>(),
        n in 1usize..30,
        d in 1usize..5,
        density in 0.0f64..0.6,
    ) {
        let mut rng = common::rng(seed);
        let (instances, constraints) = common::random_problem(&mut rng, n, d, density);
        let forest = agglomerate(&instances, &constraints).unwrap();
        assert_constraints_respected(&forest, &constraints);
        prop_assert_eq!(forest.merges.len() + forest.num_trees(), n);
        let partition = cut_forest(&forest, &DistanceMatrix::of_instances(&instances)).unwrap();
        prop_assert!(!partition.violates(&constraints));
        prop_assert!(partition.num_clusters() >= forest.num_trees());
    }
}

#[test]
fn full_constraint_graph_leaves_singletons() {
    let instances: Vec<Instance> = (0..5).map(|i| Instance::new(vec![i as f64])).collect();
    let all =
        ConstraintSet::from_pairs((0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j)))).unwrap();
    let forest = agglomerate(&instances, &all).unwrap();
    assert!(forest.merges.is_empty());
    assert_eq!(forest.num_trees(), 5);
}
