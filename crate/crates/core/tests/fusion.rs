mod common;

use common::{check_params, random_tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teamnet::fusion::{channel_fusion, spatial_fusion, team_forward, Arrangement, FusionConfig, TeamBlock};
use teamnet::tensor::{Graph, ParamStore, Tensor, Var};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn block(cfg: FusionConfig, seed: u64) -> (ParamStore, TeamBlock) {
    let mut store = ParamStore::new();
    let b = TeamBlock::new(cfg, "team1", &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (store, b)
}

fn zero_params(store: &mut ParamStore) {
    for p in store.params_mut() {
        p.value.data_mut().fill(0.0);
    }
}

fn inputs(g: &mut Graph, ts: &[Tensor; 3]) -> [Var; 3] {
    [g.input(ts[0].clone()).unwrap(), g.input(ts[1].clone()).unwrap(), g.input(ts[2].clone()).unwrap()]
}

fn random_inputs(b: usize, cs: [usize; 3], h: usize, w: usize, rng: &mut ChaCha8Rng) -> [Tensor; 3] {
    [
        random_tensor(&[b, cs[0], h, w], rng),
        random_tensor(&[b, cs[1], h, w], rng),
        random_tensor(&[b, cs[2], h, w], rng),
    ]
}

#[test]
fn channel_fusion_matches_scalar_oracle() {
    let mut cfg = FusionConfig::new([2, 1, 1]);
    cfg.arrangement = Arrangement::ChannelOnly;
    let (mut store, blk) = block(cfg, 0);
    let p = blk.channel.clone().unwrap();
    let set = |s: &mut ParamStore, id, v: &[f64]| s.value_mut(id).data_mut().copy_from_slice(v);
    set(&mut store, p.squeeze_w, &[0.5, -0.25, 1.0, 0.75]);
    set(&mut store, p.squeeze_b.unwrap(), &[0.1]);
    set(&mut store, p.expand_w[0], &[1.5, -2.0]);
    set(&mut store, p.expand_b[0].unwrap(), &[0.2, 0.0]);
    set(&mut store, p.expand_w[1], &[-0.7]);
    set(&mut store, p.expand_b[1].unwrap(), &[0.05]);
    set(&mut store, p.expand_w[2], &[0.3]);
    set(&mut store, p.expand_b[2].unwrap(), &[-0.4]);

    let (a1, a2, b, c) = (2.0, -1.0, 0.5, 3.0);
    // hand computation: spatial mean of a 1x1 map is the value itself
    let zl = (0.5 * a1 - 0.25 * a2 + 1.0 * b + 0.75 * c + 0.1_f64).max(0.0);
    let want = [
        a1 * sig(zl * 1.5 + 0.2),
        a2 * sig(zl * -2.0),
        b * sig(zl * -0.7 + 0.05),
        c * sig(zl * 0.3 - 0.4),
    ];

    let mut g = Graph::new();
    let xs = inputs(
        &mut g,
        &[
            Tensor::new(&[1, 2, 1, 1], vec![a1, a2]).unwrap(),
            Tensor::new(&[1, 1, 1, 1], vec![b]).unwrap(),
            Tensor::new(&[1, 1, 1, 1], vec![c]).unwrap(),
        ],
    );
    let out = channel_fusion(&mut g, &store, &p, xs).unwrap().outputs;
    let got = [
        g.value(out[0]).data()[0],
        g.value(out[0]).data()[1],
        g.value(out[1]).data()[0],
        g.value(out[2]).data()[0],
    ];
    for (a, b) in got.iter().zip(want) {
        assert!((a - b).abs() < 1e-14, "{got:?} vs {want:?}");
    }
}

#[test]
fn spatial_fusion_matches_scalar_oracle() {
    let mut cfg = FusionConfig::new([2, 1, 3]);
    cfg.arrangement = Arrangement::SpatialOnly;
    let (mut store, blk) = block(cfg, 0);
    let p = blk.spatial.clone().unwrap();
    let taps = [[0.3, -1.2, 0.8], [1.1, 0.4, -0.6], [-0.2, 0.9, 0.5]];
    let biases = [0.1, -0.3, 0.0];
    for i in 0..3 {
        // only the centre tap sees a 1x1 input under padding 1; fill the rest
        // with junk that must not matter
        let k = store.value_mut(p.kernels[i]).data_mut();
        k.fill(7.0);
        for j in 0..3 {
            k[j * 9 + 4] = taps[i][j];
        }
        store.value_mut(p.biases[i].unwrap()).data_mut()[0] = biases[i];
    }
    let f1 = [1.0, 3.0];
    let f2 = [-2.0];
    let f3 = [0.5, 1.5, -0.5];
    let zs = [2.0, -2.0, 0.5];
    let mut g = Graph::new();
    let xs = inputs(
        &mut g,
        &[
            Tensor::new(&[1, 2, 1, 1], f1.to_vec()).unwrap(),
            Tensor::new(&[1, 1, 1, 1], f2.to_vec()).unwrap(),
            Tensor::new(&[1, 3, 1, 1], f3.to_vec()).unwrap(),
        ],
    );
    let fused = spatial_fusion(&mut g, &store, &p, xs).unwrap();
    let feats: [&[f64]; 3] = [&f1, &f2, &f3];
    for i in 0..3 {
        let gate = sig(taps[i].iter().zip(zs).map(|(k, z)| k * z).sum::<f64>() + biases[i]);
        assert!((g.value(fused.gates[i]).data()[0] - gate).abs() < 1e-14);
        for (a, b) in g.value(fused.outputs[i]).data().iter().zip(feats[i]) {
            assert!((a - b * gate).abs() < 1e-14);
        }
    }
}

#[test]
fn zero_params_halve_or_quarter() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ts = random_inputs(2, [4, 2, 3], 3, 5, &mut rng);
    for arr in Arrangement::ALL {
        let mut cfg = FusionConfig::new([4, 2, 3]);
        cfg.arrangement = arr;
        let (mut store, blk) = block(cfg, 1);
        zero_params(&mut store);
        let mut g = Graph::new();
        let xs = inputs(&mut g, &ts);
        let out = team_forward(&mut g, &store, &blk, xs).unwrap();
        let factor = match arr {
            Arrangement::ChannelOnly | Arrangement::SpatialOnly => 0.5,
            _ => 0.25,
        };
        for i in 0..3 {
            for (o, x) in g.value(out[i]).data().iter().zip(ts[i].data()) {
                assert!((o - factor * x).abs() < 1e-15, "{arr:?}");
            }
        }
    }
}

#[test]
fn channel_only_equals_channel_fusion_and_composition_is_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ts = random_inputs(2, [3, 2, 2], 4, 4, &mut rng);
    let mut cfg = FusionConfig::new([3, 2, 2]);
    cfg.reduction = 2;
    let (store, blk) = block(cfg, 5);
    let mut g = Graph::new();
    let xs = inputs(&mut g, &ts);
    let team = team_forward(&mut g, &store, &blk, xs).unwrap();
    let c = channel_fusion(&mut g, &store, blk.channel.as_ref().unwrap(), xs).unwrap();
    let s = spatial_fusion(&mut g, &store, blk.spatial.as_ref().unwrap(), c.outputs).unwrap();
    for i in 0..3 {
        assert_eq!(g.value(team[i]), g.value(s.outputs[i]));
    }
    let mut only = blk.clone();
    only.cfg.arrangement = Arrangement::ChannelOnly;
    let o = team_forward(&mut g, &store, &only, xs).unwrap();
    for i in 0..3 {
        assert_eq!(g.value(o[i]), g.value(c.outputs[i]));
    }
}

#[test]
fn cross_modal_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ts = random_inputs(1, [4, 2, 2], 4, 4, &mut rng);
    let mut zeroed = ts.clone();
    zeroed[1] = Tensor::zeros(zeroed[1].shape());
    for arr in Arrangement::ALL {
        let mut cfg = FusionConfig::new([4, 2, 2]);
        cfg.arrangement = arr;
        cfg.reduction = 2;
        let (store, blk) = block(cfg, 3);
        let run = |ts: &[Tensor; 3]| {
            let mut g = Graph::new();
            let xs = inputs(&mut g, ts);
            let out = team_forward(&mut g, &store, &blk, xs).unwrap();
            g.value(out[0]).clone()
        };
        assert!(run(&ts).max_abs_diff(&run(&zeroed)) > 1e-6, "{arr:?}");
    }
}

#[test]
fn team_gradients_all_arrangements() {
    for arr in Arrangement::ALL {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let ts = random_inputs(2, [3, 2, 2], 3, 3, &mut rng);
            let mut cfg = FusionConfig::new([3, 2, 2]);
            cfg.arrangement = arr;
            cfg.reduction = 2;
            let (mut store, blk) = block(cfg, seed);
            let weights: Vec<Tensor> = ts.iter().map(|t| random_tensor(t.shape(), &mut rng)).collect();
            let e = check_params(
                &mut store,
                |s, g| {
                    let xs = inputs(g, &ts);
                    let out = team_forward(g, s, &blk, xs)?;
                    let parts = [
                        g.weighted_sum(out[0], weights[0].clone())?,
                        g.weighted_sum(out[1], weights[1].clone())?,
                        g.weighted_sum(out[2], weights[2].clone())?,
                    ];
                    let l = g.add(parts[0], parts[1])?;
                    g.add(l, parts[2])
                },
                None,
                seed,
            )
            .max_rel;
            assert!(e < 1e-6, "{arr:?} seed {seed}: {e}");
            let ie = common::check_inputs(
                |g, v| {
                    let out = team_forward(g, &store, &blk, [v[0], v[1], v[2]])?;
                    let a = g.spatial_mean(out[0])?;
                    let b = g.spatial_mean(out[1])?;
                    let c = g.spatial_mean(out[2])?;
                    g.concat_channels(&[a, b, c])
                },
                &ts,
            );
            assert!(ie < 1e-6, "{arr:?} seed {seed} inputs: {ie}");
        }
    }
}

fn arrangement() -> impl Strategy<Value = Arrangement> {
    prop::sample::select(Arrangement::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shapes_preserved_and_gates_bounded(
        arr in arrangement(),
        b in 1usize..3, c1 in 1usize..6, c2 in 1usize..4, c3 in 1usize..4,
        h in 1usize..6, w in 1usize..6, r in 1usize..8, seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts = random_inputs(b, [c1, c2, c3], h, w, &mut rng);
        let mut cfg = FusionConfig::new([c1, c2, c3]);
        cfg.arrangement = arr;
        cfg.reduction = r;
        let (store, blk) = block(cfg, seed);
        let mut g = Graph::new();
        let xs = inputs(&mut g, &ts);
        let out = team_forward(&mut g, &store, &blk, xs).unwrap();
        for i in 0..3 {
            prop_assert_eq!(g.value(out[i]).shape(), ts[i].shape());
            for (o, x) in g.value(out[i]).data().iter().zip(ts[i].data()) {
                prop_assert!(o.abs() <= x.abs());
            }
        }
        if let Some(p) = &blk.channel {
            let f = channel_fusion(&mut g, &store, p, xs).unwrap();
            for i in 0..3 {
                prop_assert_eq!(g.value(f.gates[i]).shape(), &[b, [c1, c2, c3][i]][..]);
                prop_assert!(g.value(f.gates[i]).data().iter().all(|&z| z > 0.0 && z < 1.0));
            }
        }
        if let Some(p) = &blk.spatial {
            let f = spatial_fusion(&mut g, &store, p, xs).unwrap();
            for i in 0..3 {
                prop_assert_eq!(g.value(f.gates[i]).shape(), &[b, 1, h, w][..]);
                prop_assert!(g.value(f.gates[i]).data().iter().all(|&z| z > 0.0 && z < 1.0));
            }
        }
    }

    #[test]
    fn batch_permutation_equivariance(arr in arrangement(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cs = [3, 2, 2];
        let ts = random_inputs(3, cs, 3, 4, &mut rng);
        let perm = [2usize, 0, 1];
        let permute = |t: &Tensor| {
            let per = t.len() / 3;
            let data = perm.iter().flat_map(|&p| t.data()[p * per..(p + 1) * per].to_vec()).collect();
            Tensor::new(t.shape(), data).unwrap()
        };
        let tp = [permute(&ts[0]), permute(&ts[1]), permute(&ts[2])];
        let mut cfg = FusionConfig::new(cs);
        cfg.arrangement = arr;
        cfg.reduction = 2;
        let (store, blk) = block(cfg, seed);
        let mut g = Graph::new();
        let a = inputs(&mut g, &ts);
        let b = inputs(&mut g, &tp);
        let oa = team_forward(&mut g, &store, &blk, a).unwrap();
        let ob = team_forward(&mut g, &store, &blk, b).unwrap();
        for i in 0..3 {
            prop_assert_eq!(&permute(g.value(oa[i])), g.value(ob[i]));
        }
    }
}
