mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diestudy::aglp::{self, build_graph, connected_components, label_propagation, label_propagation_from, Algorithm};
use diestudy::baselines::{agglomerative, oracle_best_cut, Linkage, Metric};
use diestudy::corpus::{self, CoinId, Corpus, MatchRecord, PointMatch};
use diestudy::matcher::{match_pair, Descriptor, Keypoint, KeypointSet};
use diestudy::metrics::{self, silhouette_samples};
use diestudy::robust::{fit_homography_dlt, magsac_filter, symmetric_transfer_error, MagsacConfig, SigmaWeight};
use diestudy::simmatrix::{to_dissimilarity, DissimilarityMatrix, SimilarityMatrix};
use diestudy::synthkit::{plant_correspondences, random_homography};
use diestudy::Partition;

fn ids(n: usize) -> Vec<CoinId> {
    Corpus::from_ids("p", (0..n).map(|i| format!("c{i:02}"))).unwrap().ids()
}

fn label_pair(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..=max_n).prop_flat_map(|n| {
        let side = move || (1..=n).prop_flat_map(move |k| prop::collection::vec(0..k, n));
        (side(), side())
    })
}

/// Symmetric similarity matrix with zero diagonal.
fn sim_matrix(max_n: usize, max_v: u32) -> impl Strategy<Value = SimilarityMatrix> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(0..=max_v, n * (n - 1) / 2).prop_map(move |upper| {
            let mut m = SimilarityMatrix::zeros(ids(n));
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    m.set(i, j, upper[k]);
                    k += 1;
                }
            }
            m
        })
    })
}

/// Euclidean distances between random points, so `d` is a metric.
fn point_dissimilarity(points: &[(f64, f64)]) -> DissimilarityMatrix {
    let n = points.len();
    let d = (0..n)
        .flat_map(|i| (0..n).map(move |j| ((points[i].0 - points[j].0).powi(2) + (points[i].1 - points[j].1).powi(2)).sqrt()))
        .collect();
    DissimilarityMatrix::from_raw(ids(n), d)
}

fn relabel(v: &[usize], shift: usize) -> Vec<usize> {
    // a bijection on labels that also reorders them
    v.iter().map(|&l| (l * 7 + shift) % 1009 + 3).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn external_measures_ignore_label_names((u, v) in label_pair(12), shift in 0usize..1000) {
        let (pu, pv) = (Partition::from_labels(&u), Partition::from_labels(&v));
        let (qu, qv) = (Partition::from_labels(&relabel(&u, shift)), Partition::from_labels(&relabel(&v, shift + 1)));
        let a = metrics::MetricsReport::compute(&pu, &pv).unwrap();
        let b = metrics::MetricsReport::compute(&qu, &qv).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn external_measures_are_symmetric((u, v) in label_pair(12)) {
        let (pu, pv) = (Partition::from_labels(&u), Partition::from_labels(&v));
        prop_assert!((metrics::ari(&pu, &pv).unwrap() - metrics::ari(&pv, &pu).unwrap()).abs() < 1e-12);
        prop_assert!((metrics::ami(&pu, &pv).unwrap() - metrics::ami(&pv, &pu).unwrap()).abs() < 1e-12);
        let uv = metrics::pairwise_pr_fmi(&pu, &pv).unwrap();
        let vu = metrics::pairwise_pr_fmi(&pv, &pu).unwrap();
        prop_assert_eq!((uv.precision, uv.recall), (vu.recall, vu.precision));
        prop_assert!((uv.fmi - vu.fmi).abs() < 1e-15);
    }

    #[test]
    fn measures_match_enumeration_oracles((u, v) in label_pair(7)) {
        let (pu, pv) = (Partition::from_labels(&u), Partition::from_labels(&v));
        prop_assert!((metrics::ari(&pu, &pv).unwrap() - common::ari(&u, &v)).abs() < 1e-12);
        let emi = common::emi_exact(&u, &v);
        prop_assert!((metrics::ami(&pu, &pv).unwrap() - common::ami(&u, &v, emi)).abs() < 1e-12);
        let (p, r) = common::pairwise(&u, &v);
        let s = metrics::pairwise_pr_fmi(&pu, &pv).unwrap();
        prop_assert!((s.precision - p).abs() < 1e-12 && (s.recall - r).abs() < 1e-12);
    }

    #[test]
    fn silhouette_bounds_and_duplicates(
        points in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 3..14),
        seed in any::<u64>(),
    ) {
        let n = points.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Partition::from_labels(&common::random_labels(&mut rng, n));
        let d = point_dissimilarity(&points);
        let Ok(s) = silhouette_samples(&d, &p) else { return Ok(()) };
        prop_assert!(s.iter().all(|x| (-1.0..=1.0).contains(x)));
        // duplicate item 0 into its own cluster
        let mut with_dup = points.clone();
        with_dup.push(points[0]);
        let mut labels = p.labels().to_vec();
        labels.push(labels[0]);
        let s2 = silhouette_samples(&point_dissimilarity(&with_dup), &Partition::from_labels(&labels)).unwrap();
        prop_assert!(s2[0] >= s[0] - 1e-12, "{} < {}", s2[0], s[0]);
    }

    #[test]
    fn dissimilarity_preserves_row_order(m in sim_matrix(9, 30)) {
        let d = to_dissimilarity(&m).unwrap();
        for i in 0..m.len() {
            for j in 0..m.len() {
                for k in 0..m.len() {
                    if i != j && i != k {
                        prop_assert_eq!(m.get(i, j) >= m.get(i, k), d.get(i, j) <= d.get(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn propagation_refines_components_and_is_a_fixed_point(m in sim_matrix(14, 6), tau in 1u32..6, seed in any::<u64>()) {
        let g = build_graph(&m, tau);
        let lp = label_propagation(&g, seed);
        prop_assert!(lp.refines(&connected_components(&g)));
        prop_assert_eq!(label_propagation(&g, seed), lp.clone());
        prop_assert_eq!(label_propagation_from(&g, lp.labels(), seed ^ 1), lp);
    }

    #[test]
    fn higher_threshold_graphs_are_subgraphs(m in sim_matrix(12, 20), t1 in 1u32..20, dt in 0u32..10) {
        let (low, high) = (build_graph(&m, t1), build_graph(&m, t1 + dt));
        let low_edges = low.edges();
        prop_assert!(high.edges().iter().all(|e| low_edges.contains(e)));
        for (i, j) in low_edges {
            prop_assert!(m.get(i, j) >= t1);
        }
    }

    #[test]
    fn sweep_selects_least_tau_with_best_silhouette(m in sim_matrix(10, 12), seed in any::<u64>()) {
        let d = to_dissimilarity(&m).unwrap();
        let Ok(sweep) = aglp::sweep_thresholds(&m, &d, Algorithm::LabelPropagation, seed, None) else {
            return Ok(());
        };
        prop_assert!(sweep.rows.windows(2).all(|w| w[0].tau < w[1].tau));
        let best = sweep.valid_rows().map(|r| r.silhouette.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(metrics::silhouette(&d, &sweep.best).unwrap(), best);
        let first = sweep.valid_rows().find(|r| r.silhouette.unwrap() == best).unwrap();
        prop_assert_eq!(first.tau, sweep.tau_star);
        let again = aglp::sweep_thresholds(&m, &d, Algorithm::LabelPropagation, seed, None).unwrap();
        prop_assert_eq!(again, sweep);
    }

    #[test]
    fn cuts_coarsen_and_oracle_dominates(
        points in prop::collection::vec((0.0..50.0f64, 0.0..50.0f64), 2..14),
        heights in prop::collection::vec(0.0..80.0f64, 1..6),
        seed in any::<u64>(),
    ) {
        let d = point_dissimilarity(&points);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = Partition::from_labels(&common::random_labels(&mut rng, points.len()));
        for linkage in [Linkage::Average, Linkage::Single, Linkage::Complete] {
            let dend = agglomerative(&d, linkage);
            prop_assert_eq!(dend.merges().len(), points.len() - 1);
            prop_assert!(dend.merges().windows(2).all(|w| w[0].height <= w[1].height + 1e-9));
            let mut sorted = heights.clone();
            sorted.sort_by(f64::total_cmp);
            let counts: Vec<usize> = sorted.iter().map(|&h| dend.cut(h).n_clusters()).collect();
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            for metric in [Metric::Ami, Metric::Ari, Metric::Fmi] {
                let best = oracle_best_cut(&dend, &truth, metric).unwrap();
                for &h in &sorted {
                    prop_assert!(best.score >= metric.score(&truth, &dend.cut(h)).unwrap());
                }
            }
        }
    }

    #[test]
    fn sigma_weight_shape(sigma_max in 0.5..20.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let w = SigmaWeight::new(sigma_max, 0.99);
        let limit = w.threshold_sq();
        let (r1, r2) = ((a * limit).min(b * limit), (a * limit).max(b * limit));
        prop_assert!(w.weight(r1) >= w.weight(r2));
        if r2 < limit {
            prop_assert!(w.weight(r2) > 0.0);
        }
    }

    #[test]
    fn dlt_reproduces_generating_homography(seed in any::<u64>(), n in 4usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_homography(&mut rng, 400.0);
        let planted = plant_correspondences(n, 0, 0.0, 400.0, seed).unwrap();
        let fitted = fit_homography_dlt(&planted.matches);
        prop_assume!(fitted.is_ok());
        let fitted = fitted.unwrap();
        for m in &planted.matches {
            prop_assert!(symmetric_transfer_error(&fitted, m) < 1e-6);
        }
        // the oracle homography is its own zero-error model
        let pts: Vec<PointMatch> = [(10.0, 20.0), (300.0, 40.0), (200.0, 350.0)]
            .iter()
            .filter_map(|&(x, y)| h.apply(x, y).map(|(u, v)| PointMatch::new(x, y, u, v)))
            .collect();
        for m in &pts {
            prop_assert!(symmetric_transfer_error(&h, m) < 1e-12);
        }
    }

    #[test]
    fn magsac_report_is_consistent(seed in any::<u64>(), inliers in 4usize..40, outliers in 0usize..40) {
        let planted = plant_correspondences(inliers, outliers, 1.0, 512.0, seed).unwrap();
        let config = MagsacConfig { max_iterations: 300, ..Default::default() };
        let a = magsac_filter(&planted.matches, &config, seed);
        prop_assert_eq!(a.inlier_mask.len(), planted.matches.len());
        prop_assert_eq!(a.inlier_count, a.inlier_mask.iter().filter(|&&x| x).count());
        prop_assert!(a.inlier_count <= planted.matches.len());
        prop_assert_eq!(magsac_filter(&planted.matches, &config, seed), a);
    }

    #[test]
    fn mutual_matching_is_symmetric(
        da in prop::collection::vec(any::<[u64; 4]>(), 0..40),
        db in prop::collection::vec(any::<[u64; 4]>(), 0..40),
        ratio in prop::option::of(0.5f32..1.0),
        dup in any::<bool>(),
    ) {
        let set = |d: &[[u64; 4]]| KeypointSet {
            keypoints: d.iter().map(|_| Keypoint { x: 0.0, y: 0.0, response: 0.0, orientation: 0.0, level: 0 }).collect(),
            descriptors: d.iter().map(|&w| Descriptor(w)).collect(),
            top_k: 5000,
        };
        // duplicated descriptors exercise distance ties
        let db = if dup && !da.is_empty() { [db, da[..da.len() / 2].to_vec()].concat() } else { db };
        let (a, b) = (set(&da), set(&db));
        let ab: Vec<(usize, usize)> = match_pair(&a, &b, ratio).pairs.iter().map(|c| (c.a, c.b)).collect();
        let mut ba: Vec<(usize, usize)> = match_pair(&b, &a, ratio).pairs.iter().map(|c| (c.b, c.a)).collect();
        let mut ab_sorted = ab.clone();
        ab_sorted.sort_unstable();
        ba.sort_unstable();
        prop_assert_eq!(ab_sorted, ba);
    }

    #[test]
    fn match_records_round_trip(
        recs in prop::collection::vec((0usize..6, 0usize..6, any::<bool>(), prop::collection::vec((-1e4..1e4f64, -1e4..1e4f64, -1e4..1e4f64, -1e4..1e4f64), 0..5)), 1..8)
    ) {
        let ids = ids(6);
        let records: Vec<MatchRecord> = recs
            .into_iter()
            .filter(|(a, b, _, _)| a != b)
            .map(|(a, b, f, pts)| MatchRecord::new(ids[a].clone(), ids[b].clone(), f, pts.into_iter().map(|(w, x, y, z)| PointMatch::new(w, x, y, z)).collect()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ndjson");
        corpus::write_match_file(&records, &path).unwrap();
        let back = corpus::read_match_file(&path, None).unwrap();
        let canon: Vec<MatchRecord> = records.into_iter().map(MatchRecord::canonical).collect();
        let back: Vec<MatchRecord> = back.into_iter().map(MatchRecord::canonical).collect();
        prop_assert_eq!(back, canon);
    }

    #[test]
    fn matrix_and_truth_files_round_trip(m in sim_matrix(8, 1000), seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write_csv(&path).unwrap();
        prop_assert_eq!(SimilarityMatrix::read_csv(&path).unwrap(), m.clone());

        let corpus = Corpus::from_ids("p", m.ids().iter().map(|i| i.to_string())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dies = common::random_labels(&mut rng, m.len());
        let labels: HashMap<CoinId, String> = corpus.ids().into_iter().zip(&dies).map(|(id, d)| (id, format!("d{d}"))).collect();
        let gt = corpus::GroundTruth::new(&corpus, &labels).unwrap();
        let gpath = dir.path().join("gt.csv");
        corpus::write_ground_truth(&gt, &gpath).unwrap();
        prop_assert_eq!(corpus::load_ground_truth(&gpath, &corpus).unwrap(), gt);

        let ppath = dir.path().join("p.csv");
        let p = Partition::from_labels(&dies);
        aglp::write_partition_csv(&corpus.ids(), &p, &ppath).unwrap();
        prop_assert_eq!(aglp::read_partition_csv(&ppath, &corpus).unwrap(), p);
    }
}
