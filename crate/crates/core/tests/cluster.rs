use proptest::prelude::*;
use semilabel_core::cluster::{kmeans, pairwise_wgss, silhouette, silhouette_sweep, KMeansConfig};
use semilabel_core::synthetic::{gaussian_blobs, uniform_points};
use semilabel_oracles::{exhaustive_min_sse, naive_silhouette, XorShift};

fn random_points(r: &mut XorShift, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.unit() * 10.0).collect()).collect()
}

#[test]
fn restarted_kmeans_is_within_five_percent_of_exhaustive_optimum() {
    for seed in 0..50u64 {
        let mut r = XorShift::new(seed + 1000);
        let n = 4 + r.below(9);
        let k = 1 + r.below(3);
        let pts = random_points(&mut r, n, 2);
        let opt = exhaustive_min_sse(&pts, k);
        let got = kmeans(&pts, &KMeansConfig { seed, ..KMeansConfig::new(k) }).unwrap().model.wgss;
        assert!(got <= opt * 1.05 + 1e-12, "seed {seed} n {n} k {k}: {got} vs optimum {opt}");
    }
}

#[test]
fn wgss_never_increases_within_a_restart() {
    for seed in 0..30u64 {
        let mut r = XorShift::new(seed);
        let pts = random_points(&mut r, 80, 3);
        let res = kmeans(&pts, &KMeansConfig { seed, restarts: 5, ..KMeansConfig::new(4) }).unwrap();
        for t in &res.traces {
            for w in t.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {t:?}");
            }
        }
        let min = res.model.restart_wgss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.model.wgss, min);
    }
}

#[test]
fn k1_pairwise_wgss_matches_brute_force_sum() {
    let mut r = XorShift::new(3);
    let pts = random_points(&mut r, 20, 4);
    let res = kmeans(&pts, &KMeansConfig::new(1)).unwrap();
    let mut brute = 0.0;
    for a in &pts {
        for b in &pts {
            brute += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    assert!((res.model.pairwise_wgss - brute / 2.0).abs() < 1e-9 * brute);
    assert!((pairwise_wgss(&pts, &res.labels, 1) - 20.0 * res.model.wgss).abs() < 1e-9 * brute);
}

#[test]
fn far_blobs_separate_exactly() {
    let (pts, truth) = gaussian_blobs(&[vec![0.0, 0.0], vec![20.0, 0.0]], 40, 1.0, 5);
    let res = kmeans(&pts, &KMeansConfig::new(2)).unwrap();
    let flip = res.labels[0] != truth[0];
    for (l, t) in res.labels.iter().zip(&truth) {
        assert_eq!((*l == 1) ^ flip, *t == 1);
    }
}

#[test]
fn silhouette_matches_naive_recomputation() {
    for seed in 0..10u64 {
        let mut r = XorShift::new(seed + 77);
        let n = 20 + r.below(181);
        let k = 2 + r.below(5);
        let pts = random_points(&mut r, n, 3);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.below(k) }).collect();
        let got = silhouette(&pts, &labels).unwrap();
        let (mean, per) = naive_silhouette(&pts, &labels);
        assert!((got.mean - mean).abs() < 1e-9);
        for (a, b) in got.per_point.iter().zip(&per) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn sweep_peaks_at_three_for_three_blobs() {
    let (pts, _) = gaussian_blobs(&[vec![0.0, 0.0], vec![12.0, 0.0], vec![6.0, 10.0]], 40, 1.0, 9);
    let rows = silhouette_sweep(&pts, &[2, 3, 4, 5, 6], 10, 1).unwrap();
    let best = rows.iter().max_by(|a, b| a.silhouette.total_cmp(&b.silhouette)).unwrap();
    assert_eq!(best.k, 3);
    assert_eq!(silhouette_sweep(&pts, &[4], 2, 1).unwrap().len(), 1);
}

#[test]
fn uniform_noise_clusters_poorly() {
    let pts = uniform_points(300, 10, 4);
    for row in silhouette_sweep(&pts, &[2, 4, 6], 4, 2).unwrap() {
        assert!(row.silhouette < 0.2, "{row:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_are_bounded_and_every_cluster_is_used(seed in 0u64..10_000, n in 6usize..40, k in 2usize..5) {
        let mut r = XorShift::new(seed);
        let pts = random_points(&mut r, n, 2);
        let res = kmeans(&pts, &KMeansConfig { seed, restarts: 3, ..KMeansConfig::new(k) }).unwrap();
        let mut sizes = vec![0; k];
        res.labels.iter().for_each(|&l| sizes[l] += 1);
        prop_assert!(sizes.iter().all(|&s| s > 0));
        let s = silhouette(&pts, &res.labels).unwrap();
        prop_assert!(s.per_point.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn wgss_never_rises_within_a_restart(seed in any::<u64>(), n in 8usize..60, k in 2usize..6, dim in 1usize..4) {
        let mut r = XorShift::new(seed);
        let pts = random_points(&mut r, n, dim);
        let res = kmeans(&pts, &KMeansConfig { seed, restarts: 2, ..KMeansConfig::new(k) }).unwrap();
        for t in &res.traces {
            prop_assert!(!t.is_empty());
            for w in t.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", t);
            }
        }
    }
}
