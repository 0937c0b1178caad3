use geospark::gia::{
    geometry_informed_aggregation, local_vector_attention, partition_attention, AttentionParams, GiaParams,
    NeighborContext,
};
use geospark::nn::{Linear, Mlp};
use geospark::tensor::gradcheck::check_params;
use geospark::tensor::{Graph, ParamStore, Tensor};
use geospark::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)])
        .collect()
}

fn feats(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_vec(&[rows.len(), rows[0].len()], rows.concat()).unwrap()
}

/// Randomises every parameter so zero biases do not hide mistakes.
fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

// Scalar reference implementations.

fn lin(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = store.value(l.w);
    let (fi, fo) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.len(), fi);
    let mut y = vec![0.0; fo];
    for o in 0..fo {
        let mut s = l.b.map_or(0.0, |b| store.value(b).data()[o]);
        for i in 0..fi {
            s += x[i] * w.data()[i * fo + o];
        }
        y[o] = s;
    }
    y
}

fn mlp(store: &ParamStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = lin(store, &m.first, x).into_iter().map(|v| v.max(0.0)).collect();
    lin(store, &m.second, &h)
}

/// Per-point, per-neighbour, per-channel attention; `flip` selects
/// `query − key` instead of `key − query`.
#[allow(clippy::too_many_arguments)]
fn attention_oracle(
    store: &ParamStore,
    p: &AttentionParams,
    f: &[Vec<f64>],
    pts: &[Point3],
    others: &[Vec<f64>],
    other_pts: &[Point3],
    idx: &[usize],
    k: usize,
    flip: bool,
) -> Vec<Vec<f64>> {
    let c = f[0].len();
    (0..f.len())
        .map(|i| {
            let q = lin(store, &p.center, &f[i]);
            let mut logits = vec![vec![0.0; c]; k];
            let mut values = vec![vec![0.0; c]; k];
            for t in 0..k {
                let j = idx[i * k + t];
                let rel = [pts[i][0] - other_pts[j][0], pts[i][1] - other_pts[j][1], pts[i][2] - other_pts[j][2]];
                let delta = mlp(store, &p.position, &rel);
                let key = lin(store, &p.neighbor, &others[j]);
                let val = lin(store, &p.value, &others[j]);
                let pre: Vec<f64> = (0..c)
                    .map(|ch| if flip { q[ch] - key[ch] } else { key[ch] - q[ch] } + delta[ch])
                    .collect();
                logits[t] = mlp(store, &p.weight, &pre);
                values[t] = (0..c).map(|ch| val[ch] + delta[ch]).collect();
            }
            (0..c)
                .map(|ch| {
                    let mx = (0..k).map(|t| logits[t][ch]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..k).map(|t| (logits[t][ch] - mx).exp()).sum();
                    (0..k).map(|t| (logits[t][ch] - mx).exp() / z * values[t][ch]).sum()
                })
                .collect()
        })
        .collect()
}

fn max_diff(t: &Tensor, rows: &[Vec<f64>]) -> f64 {
    t.data().iter().zip(rows.concat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn local_attention_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, k, c) = (64, 8, 6);
    let pts = cloud(&mut rng, n);
    let f = feats(&mut rng, n, c);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "a", c, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &[], k, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let out = local_vector_attention(&mut g, &store, &p, x, &ctx).unwrap();
    let expect = attention_oracle(&store, &p, &f, &pts, &f, &pts, &ctx.local_idx, k, false);
    assert!(max_diff(g.value(out.out), &expect) < 1e-6);
}

#[test]
fn partition_attention_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, m, k, c) = (48, 9, 4, 5);
    let pts = cloud(&mut rng, n);
    let sp_pts = cloud(&mut rng, m);
    let f = feats(&mut rng, n, c);
    let sf = feats(&mut rng, m, c);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "g", c, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &sp_pts, 4, k).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let s = g.input(tensor(&sf));
    let out = partition_attention(&mut g, &store, &p, x, Some(s), &ctx).unwrap();
    let expect = attention_oracle(&store, &p, &f, &pts, &sf, &sp_pts, &ctx.global_idx, k, true);
    assert!(max_diff(g.value(out.out), &expect) < 1e-6);
}

#[test]
fn self_only_neighbourhood_returns_value_plus_zero_offset_code() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = cloud(&mut rng, 10);
    let f = feats(&mut rng, 10, 4);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "a", 4, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &[], 1, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let out = local_vector_attention(&mut g, &store, &p, x, &ctx).unwrap();
    let zero = mlp(&store, &p.position, &[0.0; 3]);
    let expect: Vec<Vec<f64>> = f
        .iter()
        .map(|fi| lin(&store, &p.value, fi).iter().zip(&zero).map(|(a, b)| a + b).collect())
        .collect();
    assert!(max_diff(g.value(out.out), &expect) < 1e-12);
}

#[test]
fn equal_neighbours_with_silent_position_code_return_their_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts = cloud(&mut rng, 12);
    let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = vec![v.clone(); 12];
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "a", 4, &mut rng);
    jitter(&mut store, &mut rng);
    for id in [p.position.second.w, p.position.second.b.unwrap()] {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let ctx = NeighborContext::build(&pts, &[], 5, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let out = local_vector_attention(&mut g, &store, &p, x, &ctx).unwrap();
    let expect = vec![lin(&store, &p.value, &v); 12];
    assert!(max_diff(g.value(out.out), &expect) < 1e-12);
}

#[test]
fn single_superpoint_gives_value_plus_offset_code() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = cloud(&mut rng, 7);
    let sp = [[0.4, 0.3, 0.2]];
    let f = feats(&mut rng, 7, 3);
    let sf = feats(&mut rng, 1, 3);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "g", 3, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &sp, 3, 1).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let s = g.input(tensor(&sf));
    let out = partition_attention(&mut g, &store, &p, x, Some(s), &ctx).unwrap();
    let a = lin(&store, &p.value, &sf[0]);
    let expect: Vec<Vec<f64>> = pts
        .iter()
        .map(|q| {
            let d = mlp(&store, &p.position, &[q[0] - sp[0][0], q[1] - sp[0][1], q[2] - sp[0][2]]);
            a.iter().zip(d).map(|(x, y)| x + y).collect()
        })
        .collect();
    assert!(max_diff(g.value(out.out), &expect) < 1e-12);
}

fn set_identity(store: &mut ParamStore, l: &Linear) {
    let c = store.value(l.w).shape()[0];
    let w = store.value_mut(l.w).data_mut();
    w.fill(0.0);
    for i in 0..c {
        w[i * c + i] = 1.0;
    }
    if let Some(b) = l.b {
        store.value_mut(b).data_mut().fill(0.0);
    }
}

#[test]
fn identity_merge_without_superpoints_is_the_local_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pts = cloud(&mut rng, 20);
    let f = feats(&mut rng, 20, 4);
    let mut store = ParamStore::new();
    let p = GiaParams::new(&mut store, "gia", 4, &mut rng);
    jitter(&mut store, &mut rng);
    set_identity(&mut store, &p.merge);
    let ctx = NeighborContext::build(&pts, &[], 6, 0).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let merged = geometry_informed_aggregation(&mut g, &store, &p, x, None, &ctx).unwrap();
    let local = local_vector_attention(&mut g, &store, &p.local, x, &ctx).unwrap();
    assert_eq!(g.value(merged).data(), g.value(local.out).data());
}

#[test]
fn all_zero_parameters_give_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pts = cloud(&mut rng, 15);
    let sp = cloud(&mut rng, 4);
    let f = feats(&mut rng, 15, 4);
    let sf = feats(&mut rng, 4, 4);
    let mut store = ParamStore::new();
    let p = GiaParams::new(&mut store, "gia", 4, &mut rng);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let ctx = NeighborContext::build(&pts, &sp, 5, 3).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&f));
    let s = g.input(tensor(&sf));
    let y = geometry_informed_aggregation(&mut g, &store, &p, x, Some(s), &ctx).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn aggregation_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts = cloud(&mut rng, 14);
    let sp = cloud(&mut rng, 4);
    let f = tensor(&feats(&mut rng, 14, 3));
    let sf = tensor(&feats(&mut rng, 4, 3));
    let mut store = ParamStore::new();
    let p = GiaParams::new(&mut store, "gia", 3, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &sp, 4, 2).unwrap();
    let report = check_params(&store, 1e-5, 6, |g, store| {
        let x = g.input(f.clone());
        let s = g.input(sf.clone());
        let y = geometry_informed_aggregation(g, store, &p, x, Some(s), &ctx)?;
        Ok(g.sum_all(y))
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
    assert!(report.checked > 50);
}

#[test]
fn attention_weights_sum_to_one_per_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, c) = (40, 5);
    let pts = cloud(&mut rng, n);
    let sp = cloud(&mut rng, 6);
    let mut store = ParamStore::new();
    let p = GiaParams::new(&mut store, "gia", c, &mut rng);
    jitter(&mut store, &mut rng);
    let ctx = NeighborContext::build(&pts, &sp, 8, 3).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(&feats(&mut rng, n, c)));
    let s = g.input(tensor(&feats(&mut rng, 6, c)));
    let local = local_vector_attention(&mut g, &store, &p.local, x, &ctx).unwrap();
    let global = partition_attention(&mut g, &store, &p.global, x, Some(s), &ctx).unwrap();
    for (w, k) in [(local.weights.unwrap(), 8), (global.weights.unwrap(), 3)] {
        let w = g.value(w);
        assert_eq!(w.shape(), &[n, k, c]);
        for i in 0..n {
            for ch in 0..c {
                let s: f64 = (0..k).map(|t| w.data()[(i * k + t) * c + ch]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }
}

fn run_gia(store: &ParamStore, p: &GiaParams, pts: &[Point3], sp: &[Point3], f: &[Vec<f64>], sf: &[Vec<f64>]) -> Tensor {
    let ctx = NeighborContext::build(pts, sp, 6, 3).unwrap();
    let mut g = Graph::new();
    let x = g.input(tensor(f));
    let s = g.input(tensor(sf));
    let y = geometry_informed_aggregation(&mut g, store, p, x, Some(s), &ctx).unwrap();
    g.value(y).clone()
}

#[test]
fn permutation_equivariance_and_translation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, c) = (30, 4);
    let pts = cloud(&mut rng, n);
    let sp = cloud(&mut rng, 5);
    let f = feats(&mut rng, n, c);
    let sf = feats(&mut rng, 5, c);
    let mut store = ParamStore::new();
    let p = GiaParams::new(&mut store, "gia", c, &mut rng);
    jitter(&mut store, &mut rng);
    let base = run_gia(&store, &p, &pts, &sp, &f, &sf);

    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let pp: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
    let pf: Vec<Vec<f64>> = perm.iter().map(|&i| f[i].clone()).collect();
    let permuted = run_gia(&store, &p, &pp, &sp, &pf, &sf);
    for (r, &i) in perm.iter().enumerate() {
        for ch in 0..c {
            assert!((permuted.data()[r * c + ch] - base.data()[i * c + ch]).abs() < 1e-12);
        }
    }

    let shift = |q: &Point3| [q[0] + 3.0, q[1] - 1.5, q[2] + 0.25];
    let moved = run_gia(
        &store,
        &p,
        &pts.iter().map(shift).collect::<Vec<_>>(),
        &sp.iter().map(shift).collect::<Vec<_>>(),
        &f,
        &sf,
    );
    for (a, b) in moved.data().iter().zip(base.data()) {
        assert!((a - b).abs() < 1e-9);
    }
}
