use std::collections::HashMap;

use geospark::superpoint::{
    group_diameters, soft_pseudo_labels, SuperpointEmbedder, SuperpointGeometry, GLOBAL_DESC_DIM,
};
use geospark::tensor::{Graph, ParamStore, Tensor};
use geospark::{Error, Point3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_partition(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    // every id used at least once
    let mut part: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.random_range(0..m) }).collect();
    for i in (1..n).rev() {
        part.swap(i, rng.random_range(0..=i));
    }
    part
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..3.0)])
        .collect()
}

fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
}

fn embed(
    store: &ParamStore,
    e: &SuperpointEmbedder,
    f: &[f64],
    c: usize,
    coords: &[Point3],
    part: &[usize],
    m: usize,
) -> (Vec<f64>, SuperpointGeometry) {
    let geom = SuperpointGeometry::new(coords, part, m).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(&[coords.len(), c], f.to_vec()).unwrap());
    let y = e.forward(&mut g, store, x, &geom).unwrap();
    (g.value(y).data().to_vec(), geom)
}

fn affine(store: &ParamStore, w: geospark::tensor::ParamId, b: geospark::tensor::ParamId, x: &[f64]) -> Vec<f64> {
    let w = store.value(w);
    let (fi, fo) = (w.shape()[0], w.shape()[1]);
    (0..fo)
        .map(|o| store.value(b).data()[o] + (0..fi).map(|i| x[i] * w.data()[i * fo + o]).sum::<f64>())
        .collect()
}

#[test]
fn embedding_matches_per_partition_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let n = rng.random_range(5..60);
        let m = rng.random_range(1..=n.min(12));
        let (c, hidden, out) = (4, 5, 3);
        let coords = random_points(&mut rng, n);
        let part = random_partition(&mut rng, n, m);
        let f: Vec<f64> = (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut store = ParamStore::new();
        let e = SuperpointEmbedder::new(&mut store, "sp", c, hidden, out, &mut rng);
        jitter(&mut store, &mut rng);
        let (got, geom) = embed(&store, &e, &f, c, &coords, &part, m);

        for s in 0..m {
            let members: Vec<usize> = (0..n).filter(|&i| part[i] == s).collect();
            let mut pooled = vec![f64::NEG_INFINITY; hidden];
            let mut mean = [0.0; 3];
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &i in &members {
                let h = affine(&store, e.t1.w, e.t1.b.unwrap(), &f[i * c..(i + 1) * c]);
                for (p, v) in pooled.iter_mut().zip(h) {
                    *p = p.max(v.max(0.0));
                }
                for a in 0..3 {
                    mean[a] += coords[i][a] / members.len() as f64;
                    lo[a] = lo[a].min(coords[i][a]);
                    hi[a] = hi[a].max(coords[i][a]);
                }
            }
            let dia = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();
            pooled.extend([dia, members.len() as f64 / n as f64]);
            let expect = affine(&store, e.t2.w, e.t2.b.unwrap(), &pooled);
            for o in 0..out {
                assert!((got[s * out + o] - expect[o]).abs() < 1e-12, "trial {trial}");
            }
            for a in 0..3 {
                assert!((geom.coords[s][a] - mean[a]).abs() < 1e-12);
                assert!(geom.coords[s][a] >= lo[a] - 1e-12 && geom.coords[s][a] <= hi[a] + 1e-12);
            }
            assert_eq!(geom.global_desc.row(s).len(), GLOBAL_DESC_DIM);
        }
    }
}

#[test]
fn singleton_partition_keeps_the_point() {
    let coords = [[0.3, -1.7, 2.25], [5.0, 5.0, 5.0], [5.5, 5.0, 5.0]];
    let geom = SuperpointGeometry::new(&coords, &[1, 0, 0], 2).unwrap();
    assert_eq!(geom.coords[1], coords[0]);
    assert_eq!(geom.global_desc.row(1)[0], 0.0);
    assert_eq!(geom.members(), vec![vec![1, 2], vec![0]]);
}

#[test]
fn shared_features_pool_to_that_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = 3;
    let mut store = ParamStore::new();
    let e = SuperpointEmbedder::new(&mut store, "sp", c, c, 2, &mut rng);
    // T1 = identity, T2 reads only the pooled part
    let w1 = store.value_mut(e.t1.w).data_mut();
    w1.fill(0.0);
    for i in 0..c {
        w1[i * c + i] = 1.0;
    }
    let v = [0.4, 0.9, 0.1];
    let coords = random_points(&mut rng, 6);
    let f: Vec<f64> = (0..6).flat_map(|_| v).collect();
    let geom = SuperpointGeometry::new(&coords, &[0; 6], 1).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(&[6, c], f).unwrap());
    let h = e.t1.forward(&mut g, &store, x).unwrap();
    let h = g.relu(h);
    let pooled = g.segment_max(h, &geom.source, 1).unwrap();
    assert_eq!(g.value(pooled).data(), &v);
}

#[test]
fn diameter_is_the_box_diagonal() {
    let d = group_diameters(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.75]], &[0, 0], 1);
    assert_eq!(d, vec![0.75]);
    assert_eq!(group_diameters(&[[1.0, 2.0, 3.0]], &[0], 1), vec![0.0]);
}

#[test]
fn diameter_bounds_the_pairwise_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let n = rng.random_range(2..50);
        let m = rng.random_range(1..=n.min(6));
        let coords = random_points(&mut rng, n);
        let part = random_partition(&mut rng, n, m);
        let dia = group_diameters(&coords, &part, m);
        for s in 0..m {
            let mut widest: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if part[i] == s && part[j] == s {
                        let d = geospark::cloud::dist(&coords[i], &coords[j]);
                        widest = widest.max(d);
                    }
                }
            }
            assert!(dia[s] >= widest / 3f64.sqrt() - 1e-12);
            assert!(dia[s] >= widest - 1e-12);
        }
    }
}

#[test]
fn soft_labels_examples() {
    let w = soft_pseudo_labels(&[2, 2, 2], &[0, 0, 0], 1, 4).unwrap();
    assert_eq!(w.w.row(0), &[0.0, 0.0, 1.0, 0.0]);
    let w = soft_pseudo_labels(&[0, 0, 1], &[0, 0, 0], 1, 2).unwrap();
    assert!((w.w.row(0)[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((w.w.row(0)[1] - 1.0 / 3.0).abs() < 1e-15);
    assert!(matches!(soft_pseudo_labels(&[4], &[0], 1, 4), Err(Error::Validation(_))));
}

#[test]
fn soft_labels_match_hash_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, m, l) = (500, 23, 6);
    let part = random_partition(&mut rng, n, m);
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..l as u32)).collect();
    let w = soft_pseudo_labels(&labels, &part, m, l).unwrap();
    let mut counts: HashMap<(usize, u32), usize> = HashMap::new();
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for (&s, &c) in part.iter().zip(&labels) {
        *counts.entry((s, c)).or_default() += 1;
        *sizes.entry(s).or_default() += 1;
    }
    for s in 0..m {
        let row = w.w.row(s);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for c in 0..l {
            let expect = counts.get(&(s, c as u32)).copied().unwrap_or(0) as f64 / sizes[&s] as f64;
            assert!((row[c] - expect).abs() < 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn soft_label_rows_are_distributions(
        labels in proptest::collection::vec(0u32..5, 1..200),
        m in 1usize..10,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = m.min(labels.len());
        let part = random_partition(&mut rng, labels.len(), m);
        let w = soft_pseudo_labels(&labels, &part, m, 5).unwrap();
        for s in 0..m {
            prop_assert!(w.w.row(s).iter().all(|&v| v >= 0.0));
            prop_assert!((w.w.row(s).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_ignores_member_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..30);
        let m = rng.random_range(1..=n.min(5));
        let c = 3;
        let coords = random_points(&mut rng, n);
        let part = random_partition(&mut rng, n, m);
        let f: Vec<f64> = (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut store = ParamStore::new();
        let e = SuperpointEmbedder::new(&mut store, "sp", c, 4, 2, &mut rng);
        let (base, geom) = embed(&store, &e, &f, c, &coords, &part, m);

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pc: Vec<Point3> = perm.iter().map(|&i| coords[i]).collect();
        let pp: Vec<usize> = perm.iter().map(|&i| part[i]).collect();
        let pf: Vec<f64> = perm.iter().flat_map(|&i| f[i * c..(i + 1) * c].to_vec()).collect();
        let (shuffled, pgeom) = embed(&store, &e, &pf, c, &pc, &pp, m);
        for (a, b) in base.iter().zip(&shuffled) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in geom.coords.iter().zip(&pgeom.coords) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diameter_ignores_translation(seed in any::<u64>(), dx in -50.0..50.0f64, dy in -50.0..50.0f64, dz in -50.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..40);
        let m = rng.random_range(1..=n.min(5));
        let coords = random_points(&mut rng, n);
        let part = random_partition(&mut rng, n, m);
        let moved: Vec<Point3> = coords.iter().map(|p| [p[0] + dx, p[1] + dy, p[2] + dz]).collect();
        let a = group_diameters(&coords, &part, m);
        let b = group_diameters(&moved, &part, m);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
