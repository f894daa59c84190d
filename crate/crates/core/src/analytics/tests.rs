use super::*;
use crate::graph::{ObjectNode, RelationEdge, SceneGraphSnapshot};
use crate::model::{Aabb3, Timestamp, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn edges(spec: &[(u64, &str, u64)]) -> Vec<RelationEdge> {
    spec.iter()
        .enumerate()
        .map(|(i, (s, r, o))| RelationEdge::new(i as u64 + 1, *s, r, *o, Timestamp::ZERO))
        .collect()
}

fn graph(n: u64, spec: &[(u64, &str, u64)]) -> SceneGraphSnapshot {
    let b = Aabb3::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
    SceneGraphSnapshot {
        stamp: Timestamp::ZERO,
        nodes: (1..=n).map(|i| ObjectNode::from_box(i, "cup", b, Timestamp::ZERO)).collect(),
        edges: edges(spec),
        traces: vec![],
    }
}

#[test]
fn entropy_examples() {
    let e = edges(&[(1, "a", 2), (1, "b", 2), (1, "c", 2), (1, "d", 2)]);
    assert!((relation_entropy(&e) - 2.0).abs() < 1e-9);
    assert_eq!(relation_entropy(&edges(&[(1, "a", 2), (2, "a", 1)])), 0.0);
    let e = edges(&[(1, "a", 2), (1, "a", 3), (1, "b", 2), (1, "c", 2)]);
    assert!((relation_entropy(&e) - 1.5).abs() < 1e-12);
    assert_eq!(relation_entropy(&[]), 0.0);
}

#[test]
fn triangle_and_path() {
    let tri = structural_complexity(&graph(3, &[(1, "a", 2), (2, "a", 3), (3, "a", 1)]));
    assert_eq!(tri.clustering, 1.0);
    assert_eq!(tri.avg_degree, 2.0);
    let path = structural_complexity(&graph(3, &[(1, "a", 2), (2, "a", 3)]));
    assert_eq!(path.clustering, 0.0);
    // reciprocal edges collapse
    let recip = structural_complexity(&graph(2, &[(1, "left_of", 2), (2, "right_of", 1)]));
    assert_eq!(recip.avg_degree, 1.0);
    assert_eq!(recip.edge_count, 2);
}

/// Neighbor-pair triangle counting on an adjacency matrix.
fn clustering_oracle(n: usize, links: &[(usize, usize)]) -> f64 {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in links {
        if a != b {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    let mut vals = Vec::new();
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| adj[v][u]).collect();
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut t = 0;
        for i in 0..k {
            for j in 0..k {
                if i != j && adj[nb[i]][nb[j]] {
                    t += 1;
                }
            }
        }
        // each triangle counted twice in the ordered loop
        vals.push(t as f64 / (k * (k - 1)) as f64);
    }
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[test]
fn clustering_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..=15usize);
        let m = rng.random_range(0..40usize);
        let links: Vec<(usize, usize)> = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let spec: Vec<(u64, &str, u64)> = links.iter().map(|&(a, b)| (a as u64 + 1, "r", b as u64 + 1)).collect();
        let c = structural_complexity(&graph(n as u64, &spec));
        assert_eq!(c.clustering, clustering_oracle(n, &links));
    }
}

#[test]
fn stability_examples() {
    let a = edges(&[(1, "a", 2), (1, "b", 2)]);
    assert_eq!(stability(&a, &a), 1.0);
    assert_eq!(stability(&edges(&[(1, "a", 2)]), &edges(&[(2, "a", 1)])), 0.0);
    let x = edges(&[(1, "a", 2), (1, "b", 2)]);
    let y = edges(&[(1, "b", 2), (1, "c", 2)]);
    assert!((stability(&x, &y) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(stability(&[], &[]), 1.0);
}

#[test]
fn srqi_examples() {
    let w = SrqiWeights::default();
    assert!((srqi(0.0, 3.0, 1.0, &w, 8).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(srqi(1.0, 0.0, 0.0, &w, 8).unwrap(), 0.0);
    let v = srqi(0.018, 2.34, 0.8, &w, 8).unwrap();
    assert!((v - 0.8668).abs() < 1e-12, "{v}");
    let bad = SrqiWeights {
        w_consistency: 0.5,
        w_entropy: 0.3,
        w_stability: 0.3,
    };
    assert!(matches!(srqi(0.0, 0.0, 0.0, &bad, 8), Err(AnalyticsError::Config(_))));
}

proptest! {
    #[test]
    fn srqi_monotone(v in 0.0f64..1.0, h in 0.0f64..3.0, s in 0.0f64..1.0, d in 0.0f64..0.5) {
        let w = SrqiWeights::default();
        let base = srqi(v, h, s, &w, 8).unwrap();
        prop_assert!(srqi((v + d).min(1.0), h, s, &w, 8).unwrap() <= base + 1e-15);
        prop_assert!(srqi(v, (h + d).min(3.0), s, &w, 8).unwrap() >= base - 1e-15);
        prop_assert!(srqi(v, h, (s + d).min(1.0), &w, 8).unwrap() >= base - 1e-15);
    }

    #[test]
    fn entropy_bounded_by_distinct_types(counts in prop::collection::vec(1usize..20, 1..8)) {
        let h = entropy_bits(counts.iter().copied());
        let k = counts.len() as f64;
        prop_assert!(h <= k.log2() + 1e-12);
        let uniform = counts.iter().all(|&c| c == counts[0]);
        if uniform {
            prop_assert!((h - k.log2()).abs() < 1e-12);
        } else {
            prop_assert!(h < k.log2() - 1e-12);
        }
    }
}

#[test]
fn kruskal_wallis_hand_ranked() {
    let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
    assert!((r.h - 3.857).abs() < 1e-3, "{}", r.h);
    assert_eq!(r.df, 1);
    let r = kruskal_wallis(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
    assert!(r.h.abs() < 1e-12);
    assert!(r.p_value > 0.99);
    let r = kruskal_wallis(&[vec![3.0, 3.0], vec![3.0]]).unwrap();
    assert_eq!((r.h, r.p_value), (0.0, 1.0));
    assert!(matches!(kruskal_wallis(&[vec![1.0, 2.0, 3.0]]), Err(AnalyticsError::Arity(_))));
    assert!(matches!(kruskal_wallis(&[vec![1.0], vec![]]), Err(AnalyticsError::Arity(_))));
}

/// Variance-of-ranks form of H, which folds in the tie correction.
fn h_oracle(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let rank = |x: f64| {
        let less = all.iter().filter(|&&y| y < x).count() as f64;
        let eq = all.iter().filter(|&&y| y == x).count() as f64;
        less + (eq + 1.0) / 2.0
    };
    let n = all.len() as f64;
    let rbar = (n + 1.0) / 2.0;
    let num: f64 = groups
        .iter()
        .map(|g| {
            let m = g.iter().map(|&x| rank(x)).sum::<f64>() / g.len() as f64;
            g.len() as f64 * (m - rbar).powi(2)
        })
        .sum();
    let den: f64 = all.iter().map(|&x| (rank(x) - rbar).powi(2)).sum();
    (n - 1.0) * num / den
}

#[test]
fn kruskal_wallis_matches_rank_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let k = rng.random_range(2..=5);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..rng.random_range(1..=12))
                    .map(|_| f64::from(rng.random_range(0..15u8)))
                    .collect()
            })
            .collect();
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        if all.len() < 3 || all.iter().all(|&x| x == all[0]) {
            continue;
        }
        let r = kruskal_wallis(&groups).unwrap();
        assert!((r.h - h_oracle(&groups)).abs() < 1e-9);
    }
}

#[test]
fn kruskal_wallis_is_rank_invariant() {
    let g = vec![vec![0.3, 1.2, 2.2], vec![0.1, 4.0, 5.5, 0.7], vec![3.3, 2.9]];
    let t: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x: &f64| x.exp() * 3.0 + 1.0).collect()).collect();
    assert_eq!(kruskal_wallis(&g).unwrap(), kruskal_wallis(&t).unwrap());
}

#[test]
fn kruskal_wallis_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let reps = 1000;
    let mut below = 0;
    for _ in 0..reps {
        let groups: Vec<Vec<f64>> = (0..3).map(|_| (0..10).map(|_| normal.sample(&mut rng)).collect()).collect();
        if kruskal_wallis(&groups).unwrap().p_value < 0.05 {
            below += 1;
        }
    }
    let rate = below as f64 / reps as f64;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}

#[test]
fn kde_examples() {
    assert!(matches!(kde(&[1.0, 1.0], &[0.0], None), Err(AnalyticsError::DegenerateBandwidth)));
    assert!(matches!(kde(&[1.0], &[0.0], None), Err(AnalyticsError::Arity(_))));
    let f = kde(&[0.0], &[0.0], Some(1.0)).unwrap();
    assert!((f[0] - 0.398_942_280_401_432_7).abs() < 1e-12);
    let grid = linspace(-3.0, 3.0, 61);
    let f = kde(&[-1.0, 1.0], &grid, None).unwrap();
    for i in 0..grid.len() {
        assert!((f[i] - f[grid.len() - 1 - i]).abs() < 1e-12);
    }
}

#[test]
fn kde_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
    let grid = linspace(-3.0, 4.0, 4001);
    let f = kde(&samples, &grid, None).unwrap();
    let dx = grid[1] - grid[0];
    let area: f64 = f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
    assert!((area - 1.0).abs() < 1e-3, "{area}");
}

#[test]
fn run_aggregate_skips_first_stability() {
    let t = |s: Option<f64>| SnapshotMetrics {
        stamp: Timestamp::ZERO,
        node_count: 2,
        edge_count: 2,
        violation_rate: 0.0,
        entropy: 1.0,
        avg_degree: 1.0,
        clustering: 0.0,
        stability: s,
    };
    let r = RunMetrics::aggregate(30.0, 1, &[t(None), t(Some(1.0)), t(Some(0.5))], &SrqiWeights::default(), 8).unwrap();
    assert_eq!(r.stability, 0.75);
    assert_eq!(r.ticks, 3);
    assert!((r.srqi - (0.4 + 0.3 / 3.0 + 0.3 * 0.75)).abs() < 1e-12);
}
