use activeclust::flat::FlatClusterer;
use activeclust::hbm::{evenly_spaced_levels, Band};
use activeclust::{
    active_cluster, assign_by_average, generate, heurspec_cluster, nonactive_hierarchical, validate_tree, ActiveConfig,
    BandMode, Bands, ClusterTree, Error, Heuristics, NewClusterThreshold, NoisyHbmSpec, SimilarityOracle, TreeShape,
};
use ndarray::Array2;
use proptest::prelude::*;

fn oracle_for(spec: &NoisyHbmSpec) -> (SimilarityOracle, ClusterTree) {
    let inst = generate(spec).unwrap();
    (SimilarityOracle::from_matrix(inst.matrix).unwrap(), inst.truth)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn choose2(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

#[test]
fn base_case_is_a_single_leaf() {
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(6, 1, 0.1, 0));
    let out = active_cluster(
        &oracle,
        &all(6),
        &FlatClusterer::spectral(),
        &ActiveConfig::new(6, 2, 0),
    )
    .unwrap();
    assert_eq!(out.tree.num_nodes(), 1);
    assert_eq!(out.tree.root().members(), &all(6)[..]);
    assert_eq!(oracle.unique_pairs(), 0);
}

#[test]
fn noiseless_two_level_recovers_planted_clusters() {
    for seed in 0..20 {
        let (oracle, truth) = oracle_for(&NoisyHbmSpec::balanced(32, 2, 0.0, seed));
        let out = active_cluster(
            &oracle,
            &all(32),
            &FlatClusterer::spectral(),
            &ActiveConfig::new(8, 2, seed),
        )
        .unwrap();
        let big: Vec<_> = truth.nodes().iter().filter(|c| c.len() >= 8).collect();
        assert_eq!(big.len(), 7);
        for c in big {
            assert!(
                out.tree.contains_cluster(c.members()),
                "seed {seed}: missing {:?}",
                c.members()
            );
        }
    }
}

#[test]
fn noiseless_recovery_with_kmeans_and_kway() {
    // k-means on rows only promises the two-block case: with deeper nesting
    // an unbalanced sample can make a sub-block the cheaper 2-means cut
    for (algo, depth) in [(FlatClusterer::kmeans(), 1), (FlatClusterer::spectral_kway(), 3)] {
        let spec = NoisyHbmSpec::balanced(64, depth, 0.0, 3);
        let (oracle, truth) = oracle_for(&spec);
        let out = active_cluster(&oracle, &all(64), &algo, &ActiveConfig::new(8, 2, 11)).unwrap();
        for c in truth.nodes().iter().filter(|c| c.len() >= 8) {
            assert!(
                out.tree.contains_cluster(c.members()),
                "{:?} missing {:?}",
                algo.kind,
                c.members()
            );
        }
    }
}

#[test]
fn query_count_follows_split_accounting() {
    let n = 256;
    let s = 16;
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(n, 4, 0.1, 9));
    let out = active_cluster(
        &oracle,
        &all(n),
        &FlatClusterer::spectral(),
        &ActiveConfig::new(s, 2, 9).with_traces(),
    )
    .unwrap();
    // recount the per-split tally from the produced tree
    let tally: usize = out
        .tree
        .nodes()
        .iter()
        .filter(|c| !c.is_leaf())
        .map(|c| choose2(s) + (c.len() - s) * s)
        .sum();
    assert_eq!(tally, out.requested_pairs);
    assert_eq!(out.splits, out.tree.nodes().iter().filter(|c| !c.is_leaf()).count());
    let unique = oracle.unique_pairs();
    assert!(unique <= tally, "{unique} > {tally}");
    let levels = ((n as f64 / s as f64).log2().ceil()) as usize;
    assert!(unique <= n * s * (1 + levels) * 2);
    assert_eq!(out.traces.last().unwrap().queries_after, unique);
}

#[test]
fn traces_partition_every_split() {
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(128, 3, 0.5, 2));
    let out = active_cluster(
        &oracle,
        &all(128),
        &FlatClusterer::spectral(),
        &ActiveConfig::new(12, 2, 2).with_traces(),
    )
    .unwrap();
    assert!(!out.traces.is_empty());
    let mut prev = 0;
    for t in &out.traces {
        assert_eq!(t.sample.len(), 12.min(t.cluster.len()));
        assert!(t.sample.iter().all(|x| t.cluster.contains(x)));
        let mut joined: Vec<usize> = t.children.iter().flatten().copied().collect();
        joined.sort_unstable();
        assert_eq!(joined, t.cluster);
        assert_eq!(t.scores.len(), t.cluster.len() - t.kept.len());
        assert!(t.queries_after >= prev);
        prev = t.queries_after;
        let line = t.tsv_line();
        assert_eq!(line.split('\t').count(), 5);
        assert!(line.starts_with(&format!("{}\t12\t2\t", t.cluster.len())));
    }
}

#[test]
fn deterministic_given_seed() {
    let spec = NoisyHbmSpec::balanced(100, 3, 0.6, 5);
    let run = |seed| {
        let (oracle, _) = oracle_for(&spec);
        let t = active_cluster(
            &oracle,
            &all(100),
            &FlatClusterer::spectral(),
            &ActiveConfig::new(10, 2, seed),
        )
        .unwrap()
        .tree;
        (t.to_text(), oracle.unique_pairs())
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).0, run(2).0);
}

#[test]
fn works_on_a_subset_of_objects() {
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(40, 2, 0.0, 0));
    let objs: Vec<usize> = (0..40).step_by(2).collect();
    let out = active_cluster(&oracle, &objs, &FlatClusterer::spectral(), &ActiveConfig::new(4, 2, 0)).unwrap();
    assert_eq!(out.tree.root().members(), &objs[..]);
}

#[test]
fn rejects_bad_inputs() {
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(8, 1, 0.0, 0));
    let algo = FlatClusterer::spectral();
    assert!(matches!(
        active_cluster(&oracle, &[], &algo, &ActiveConfig::new(4, 2, 0)),
        Err(Error::InvalidParameter(_))
    ));
    assert!(matches!(
        active_cluster(&oracle, &[1, 1], &algo, &ActiveConfig::new(4, 2, 0)),
        Err(Error::DuplicateId(1))
    ));
    assert!(matches!(
        active_cluster(&oracle, &[9], &algo, &ActiveConfig::new(4, 2, 0)),
        Err(Error::OutOfRange { .. })
    ));
    assert!(active_cluster(&oracle, &all(8), &algo, &ActiveConfig::new(1, 2, 0)).is_err());
    assert!(active_cluster(&oracle, &all(8), &algo, &ActiveConfig::new(3, 4, 0)).is_err());
}

#[test]
fn subroutine_failure_carries_the_trace() {
    struct Broken;
    impl activeclust::FlatAlgorithm for Broken {
        fn cluster(&self, _: &Array2<f64>, _: usize, _: u64) -> activeclust::Result<activeclust::FlatPartition> {
            Err(Error::DegenerateSample)
        }
    }
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(20, 1, 0.0, 0));
    match active_cluster(&oracle, &all(20), &Broken, &ActiveConfig::new(5, 2, 0)) {
        Err(Error::SplitFailed { trace, .. }) => {
            assert_eq!(trace.cluster, all(20));
            assert_eq!(trace.sample.len(), 5);
        }
        other => panic!("expected SplitFailed, got {other:?}"),
    }
}

#[test]
fn assign_by_average_examples() {
    let mut w = Array2::from_elem((5, 5), 0.1);
    for j in [1, 2] {
        w[[0, j]] = 0.9;
        w[[j, 0]] = 0.9;
    }
    let oracle = SimilarityOracle::from_matrix(w).unwrap();
    assert_eq!(assign_by_average(&oracle, 0, &[vec![1, 2], vec![3, 4]]).unwrap(), 0);
    assert_eq!(assign_by_average(&oracle, 0, &[vec![3, 4], vec![1, 2]]).unwrap(), 1);

    let tie = SimilarityOracle::from_matrix(Array2::from_elem((3, 3), 0.5)).unwrap();
    assert_eq!(assign_by_average(&tie, 0, &[vec![1], vec![2]]).unwrap(), 0);
    assert!(matches!(
        assign_by_average(&tie, 0, &[vec![1], vec![]]),
        Err(Error::EmptySeedCluster(1))
    ));
    assert!(assign_by_average(&tie, 0, &[vec![0, 1], vec![2]]).is_err());
}

fn assignment_error_rate(m: usize, gap: f64, sigma: f64, trials: u64) -> f64 {
    let lo = 0.2;
    let spec = |seed| NoisyHbmSpec {
        n: 2 * m + 2,
        shape: TreeShape::Balanced { depth: 1 },
        bands: Bands::PerLevel(vec![Band::constant(lo), Band::constant(lo + gap)]),
        mode: BandMode::Constant,
        sigma,
        seed,
    };
    let left: Vec<usize> = (1..=m).collect();
    // the left block is 0..=m
    let right: Vec<usize> = (m + 2..=2 * m + 1).collect();
    let mut wrong = 0;
    for seed in 0..trials {
        let (oracle, _) = oracle_for(&spec(seed));
        if assign_by_average(&oracle, 0, &[left.clone(), right.clone()]).unwrap() != 0 {
            wrong += 1;
        }
    }
    wrong as f64 / trials as f64
}

#[test]
fn averaging_concentrates_within_the_stated_bound() {
    // m = 4, gap 0.5, sigma 0.5: 2 exp(-2 m gap^2 / 4 sigma^2) = 2 e^-2
    let (m, gap, sigma) = (4, 0.5, 0.5);
    let bound = 2.0 * (-2.0 * m as f64 * gap * gap / (4.0 * sigma * sigma)).exp();
    let err = assignment_error_rate(m, gap, sigma, 2000);
    assert!(1.0 - err >= 1.0 - bound, "error {err} above {bound}");
}

#[test]
fn averaging_concentrates_at_the_subgaussian_rate() {
    // each mean stays within gap/2 of its expectation with probability
    // 1 - 2 exp(-m gap^2 / 8 sigma^2); a union over both seed clusters
    for &(m, gap, sigma) in &[(16, 0.5, 0.5), (32, 0.3, 0.5), (8, 0.6, 0.3)] {
        let bound = 4.0 * (-(m as f64) * gap * gap / (8.0 * sigma * sigma)).exp();
        let err = assignment_error_rate(m, gap, sigma, 2000);
        assert!(err <= bound.min(1.0) + 0.01, "m={m}: error {err} above {bound}");
    }
}

fn three_way_spec(sigma: f64, seed: u64) -> NoisyHbmSpec {
    let mut t = ClusterTree::leaf(0..30);
    for part in [0..10, 10..20, 20..30] {
        t.add_child(0, part);
    }
    NoisyHbmSpec {
        n: 30,
        shape: TreeShape::Explicit(t),
        bands: Bands::PerLevel(vec![Band::constant(0.1), Band::constant(0.9)]),
        mode: BandMode::Constant,
        sigma,
        seed,
    }
}

#[test]
fn heurspec_finds_a_three_way_root() {
    let (oracle, truth) = oracle_for(&three_way_spec(0.0, 0));
    let cfg = ActiveConfig {
        heuristics: Heuristics::heurspec(),
        ..ActiveConfig::new(15, 5, 4)
    };
    let out = heurspec_cluster(&oracle, &all(30), &FlatClusterer::spectral(), &cfg).unwrap();
    assert_eq!(out.tree.root().children().len(), 3);
    for c in truth.nodes() {
        assert!(out.tree.contains_cluster(c.members()));
    }
}

#[test]
fn heurspec_needs_a_spectral_subroutine() {
    let (oracle, _) = oracle_for(&three_way_spec(0.0, 0));
    let cfg = ActiveConfig {
        heuristics: Heuristics::heurspec(),
        ..ActiveConfig::new(15, 5, 4)
    };
    assert!(heurspec_cluster(&oracle, &all(30), &FlatClusterer::kmeans(), &cfg).is_err());
}

#[test]
fn heurspec_isolates_a_low_degree_outlier() {
    // two blocks of 20 plus one object only weakly similar to everything
    let n = 41;
    let outlier = 40;
    let mut w = Array2::from_elem((n, n), 0.1);
    for i in 0..40 {
        for j in 0..40 {
            if i / 20 == j / 20 {
                w[[i, j]] = 0.9;
            }
        }
    }
    for i in 0..n {
        w[[i, outlier]] = 0.0;
        w[[outlier, i]] = 0.0;
    }
    let oracle = SimilarityOracle::from_matrix(w).unwrap();
    let heur = Heuristics {
        eigengap_k: false,
        ..Heuristics::heurspec()
    };
    // find a seed whose root sample contains the outlier
    let mut seen = false;
    for seed in 0..200 {
        let cfg = ActiveConfig {
            heuristics: heur,
            ..ActiveConfig::new(12, 2, seed)
        }
        .with_traces();
        let out = heurspec_cluster(&oracle, &all(n), &FlatClusterer::spectral(), &cfg).unwrap();
        let root = &out.traces[0];
        let in_a = root.sample.iter().filter(|&&x| x < 20).count();
        let in_b = root.sample.iter().filter(|&&x| (20..40).contains(&x)).count();
        if !root.sample.contains(&outlier) || in_a < 4 || in_b < 4 {
            continue;
        }
        seen = true;
        assert!(!root.kept.contains(&outlier));
        assert_eq!(root.children.len(), 3);
        assert!(root.children.contains(&vec![outlier]));
        assert_eq!(root.new_clusters, 1);
        assert!(out.tree.contains_cluster(&(0..20).collect::<Vec<_>>()));
        assert!(out.tree.contains_cluster(&(20..40).collect::<Vec<_>>()));
        break;
    }
    assert!(seen);
}

#[test]
fn heurspec_absolute_threshold_groups_low_affinity_objects() {
    // a third block that is weakly similar to the two seeded blocks
    let n = 60;
    let mut w = Array2::from_elem((n, n), 0.05);
    for i in 0..n {
        for j in 0..n {
            if i / 20 == j / 20 {
                w[[i, j]] = 0.9;
            }
        }
    }
    let oracle = SimilarityOracle::from_matrix(w).unwrap();
    let heur = Heuristics {
        eigengap_k: false,
        degree_filter: None,
        new_cluster: Some(NewClusterThreshold::Absolute(0.5)),
    };
    // a sample drawn only from the first 40 objects gives two seed clusters
    let objs: Vec<usize> = all(n);
    for seed in 0..500 {
        let cfg = ActiveConfig {
            heuristics: heur,
            ..ActiveConfig::new(6, 2, seed)
        }
        .with_traces();
        let out = heurspec_cluster(&oracle, &objs, &FlatClusterer::spectral(), &cfg).unwrap();
        let root = &out.traces[0];
        let in_a = root.sample.iter().filter(|&&x| x < 20).count();
        if root.sample.iter().any(|&x| x >= 40) || in_a == 0 || in_a == 6 {
            continue;
        }
        assert_eq!(root.new_clusters, 1);
        assert!(root.children.contains(&(40..60).collect::<Vec<_>>()));
        return;
    }
    panic!("no seed sampled only from the first two blocks");
}

#[test]
fn heurspec_with_no_heuristics_matches_the_base_algorithm() {
    let (oracle_a, _) = oracle_for(&NoisyHbmSpec::balanced(90, 3, 0.4, 1));
    let (oracle_b, _) = oracle_for(&NoisyHbmSpec::balanced(90, 3, 0.4, 1));
    let cfg = ActiveConfig::new(9, 2, 17);
    let a = heurspec_cluster(&oracle_a, &all(90), &FlatClusterer::spectral(), &cfg).unwrap();
    let b = active_cluster(&oracle_b, &all(90), &FlatClusterer::spectral(), &cfg).unwrap();
    assert_eq!(a.tree, b.tree);
    assert_eq!(oracle_a.unique_pairs(), oracle_b.unique_pairs());
}

#[test]
fn heurspec_output_is_valid_under_noise() {
    for seed in 0..10 {
        let spec = NoisyHbmSpec::balanced(120, 3, 0.8, seed);
        let (oracle, _) = oracle_for(&spec);
        let cfg = ActiveConfig {
            heuristics: Heuristics::heurspec(),
            ..ActiveConfig::new(12, 4, seed)
        };
        let out = heurspec_cluster(&oracle, &all(120), &FlatClusterer::spectral(), &cfg).unwrap();
        assert_eq!(validate_tree(&out.tree, 120), Ok(()));
    }
}

#[test]
fn nonactive_small_input_is_a_leaf() {
    let (oracle, _) = oracle_for(&NoisyHbmSpec::balanced(3, 1, 0.0, 0));
    let t = nonactive_hierarchical(&oracle, &all(3), 2, &FlatClusterer::spectral(), 0).unwrap();
    assert_eq!(t.num_nodes(), 1);
}

#[test]
fn nonactive_recovers_the_planted_tree() {
    let spec = NoisyHbmSpec {
        bands: Bands::PerLevel(evenly_spaced_levels(4, 0.2, 0.9)),
        ..NoisyHbmSpec::balanced(32, 4, 0.0, 0)
    };
    let (oracle, truth) = oracle_for(&spec);
    let t = nonactive_hierarchical(&oracle, &all(32), 2, &FlatClusterer::spectral(), 0).unwrap();
    assert!(t.same_family(&truth));
    assert_eq!(oracle.unique_pairs(), choose2(32));
}

#[test]
fn refine_leaves_continues_below_s() {
    let (oracle, truth) = oracle_for(&NoisyHbmSpec::balanced(64, 4, 0.0, 0));
    let cfg = ActiveConfig {
        refine_leaves: true,
        ..ActiveConfig::new(16, 2, 0)
    };
    let out = active_cluster(&oracle, &all(64), &FlatClusterer::spectral(), &cfg).unwrap();
    assert_eq!(validate_tree(&out.tree, 64), Ok(()));
    for c in truth.nodes() {
        assert!(out.tree.contains_cluster(c.members()), "missing {:?}", c.members());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn output_is_always_a_valid_tree(
        n in 2usize..90,
        s in 2usize..12,
        sigma in 0.0f64..3.0,
        seed in any::<u64>(),
        kind in 0usize..3,
    ) {
        let depth = if n >= 8 { 3 } else { 1 };
        let spec = NoisyHbmSpec::balanced(n, depth, sigma, seed);
        let (oracle, _) = oracle_for(&spec);
        let algo = [FlatClusterer::spectral(), FlatClusterer::kmeans(), FlatClusterer::spectral_kway()][kind];
        let k = if kind == 2 && s >= 3 { 3 } else { 2 };
        let out = active_cluster(&oracle, &all(n), &algo, &ActiveConfig::new(s.max(k), k, seed)).unwrap();
        prop_assert_eq!(validate_tree(&out.tree, n), Ok(()));
        prop_assert!(oracle.unique_pairs() <= out.requested_pairs);
    }

    #[test]
    fn noiseless_recovery_of_every_large_cluster(seed in any::<u64>(), depth in 1usize..4) {
        let n = 96;
        let s = 12;
        let spec = NoisyHbmSpec::balanced(n, depth, 0.0, seed);
        let (oracle, truth) = oracle_for(&spec);
        let out = active_cluster(&oracle, &all(n), &FlatClusterer::spectral(), &ActiveConfig::new(s, 2, seed)).unwrap();
        for c in truth.nodes().iter().filter(|c| c.len() >= s) {
            prop_assert!(out.tree.contains_cluster(c.members()));
        }
    }

    #[test]
    fn relabeling_objects_relabels_the_noiseless_tree(seed in any::<u64>(), rot in 1usize..95) {
        // planted clusters are recovered whatever the object numbering; s = 12
        // keeps the chance of a one-sided sample below 1e-4 per split
        let n = 96;
        let spec = NoisyHbmSpec::balanced(n, 2, 0.0, seed);
        let inst = generate(&spec).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let w = Array2::from_shape_fn((n, n), |(i, j)| inst.matrix[[perm[i], perm[j]]]);
        let oracle = SimilarityOracle::from_matrix(w).unwrap();
        let out = active_cluster(&oracle, &all(n), &FlatClusterer::spectral(), &ActiveConfig::new(12, 2, seed)).unwrap();
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        for c in inst.truth.nodes().iter().filter(|c| c.len() >= 12) {
            let mapped: Vec<usize> = c.members().iter().map(|&x| inverse[x]).collect();
            prop_assert!(out.tree.contains_cluster(&mapped));
        }
    }
}
