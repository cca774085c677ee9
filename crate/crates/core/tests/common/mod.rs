//! Test-only oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teamnet::tensor::{Graph, ParamStore, Tensor, TensorError, Var};

pub const FD_EPS: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`, maximized over elements.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences at eps = 1e-5 carry ~1e-11 absolute rounding error on
/// O(1) losses, so entries below this magnitude are judged absolutely.
pub const REL_FLOOR: f64 = 1e-3;

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Builds `out = f(inputs)` and projects it to a scalar with fixed random
/// weights, so every output element contributes to the check.
fn projected<F>(f: &F, inputs: &[Tensor], weights: Option<&Tensor>) -> Result<(Graph, Vec<Var>, Var, Tensor), TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.input(t.clone())).collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut g, &vars)?;
    let w = match weights {
        Some(w) => w.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
            Tensor::from_fn(g.value(out).shape(), |_| rng.random_range(0.5..1.5))
        }
    };
    let loss = g.weighted_sum(out, w.clone())?;
    Ok((g, vars, loss, w))
}

/// Analytic input gradients against central differences, checking every
/// element of every input. Returns the max relative error.
pub fn check_inputs<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let (g, vars, loss, w) = projected(&f, inputs, None).expect("forward");
    let grads = g.backward(loss).expect("backward");
    let eval = |ins: &[Tensor]| -> f64 {
        let (g, _, loss, _) = projected(&f, ins, Some(&w)).expect("forward");
        g.value(loss).data()[0]
    };
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, &inputs[i]);
        let mut numeric = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_EPS;
            numeric[j] = (eval(&plus) - eval(&minus)) / (2.0 * FD_EPS);
        }
        worst = worst.max(max_rel_error(analytic.data(), &numeric, REL_FLOOR));
    }
    worst
}

/// Result of a parameter gradient check.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel: f64,
    /// Probes dropped because `+eps` and `-eps` fell on different sides of a
    /// ReLU or max-pool kink, where a central difference is not a derivative.
    pub kinks: usize,
}

/// Parameter gradients of a scalar loss against central differences.
/// `per_tensor` caps how many entries of each parameter are probed (chosen
/// with a seeded RNG, redrawn when a probe straddles a kink); `None` probes
/// every entry.
pub fn check_params<F>(store: &mut ParamStore, loss_fn: F, per_tensor: Option<usize>, seed: u64) -> GradCheck
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var, TensorError>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = loss_fn(store, &mut g).expect("forward");
    let pattern = g.activation_pattern();
    let grads = g.backward(loss).expect("backward");
    g.accumulate_param_grads(&grads, store);
    let eval = |s: &ParamStore| -> (f64, bool) {
        let mut g = Graph::new();
        let l = loss_fn(s, &mut g).expect("forward");
        (g.value(l).data()[0], g.activation_pattern() == pattern)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut kinks = 0;
    for id in ids {
        let n = store.value(id).len();
        let (want, mut candidates): (usize, Box<dyn Iterator<Item = usize>>) = match per_tensor {
            Some(k) if k < n => (k, Box::new((0..8 * k).map(|_| rng.random_range(0..n)))),
            _ => (n, Box::new(0..n)),
        };
        let mut taken = 0;
        while taken < want {
            let Some(j) = candidates.next() else { break };
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + FD_EPS;
            let (lp, same_p) = eval(store);
            store.value_mut(id).data_mut()[j] = orig - FD_EPS;
            let (lm, same_m) = eval(store);
            store.value_mut(id).data_mut()[j] = orig;
            if !(same_p && same_m) {
                kinks += 1;
                continue;
            }
            analytic.push(store.grad(id).data()[j]);
            numeric.push((lp - lm) / (2.0 * FD_EPS));
            taken += 1;
        }
    }
    if std::env::var_os("GRADCHECK_DEBUG").is_some() {
        for (a, n) in analytic.iter().zip(&numeric) {
            let e = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
            if e > 1e-7 {
                eprintln!("analytic {a:e} numeric {n:e} rel {e:e}");
            }
        }
    }
    GradCheck {
        max_rel: max_rel_error(&analytic, &numeric, REL_FLOOR),
        kinks,
    }
}

/// Frames of a random texture drifting by a random per-frame shift, plus
/// noise, so block matching has something to find.
pub fn drifting_video(width: usize, height: usize, frames: usize, rng: &mut ChaCha8Rng) -> Vec<teamnet::codec::FrameRgb> {
    let (tw, th) = (width + 32, height + 32);
    let texture: Vec<u8> = (0..tw * th * 3).map(|_| rng.random()).collect();
    let (mut ox, mut oy) = (16i64, 16i64);
    (0..frames)
        .map(|_| {
            let data = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .flat_map(|(x, y)| {
                    let tx = (x as i64 + ox).rem_euclid(tw as i64) as usize;
                    let ty = (y as i64 + oy).rem_euclid(th as i64) as usize;
                    let o = (ty * tw + tx) * 3;
                    [texture[o], texture[o + 1], texture[o + 2]]
                })
                .map(|v| v.saturating_add(rng.random_range(0..3)))
                .collect();
            ox += rng.random_range(-3..=3);
            oy += rng.random_range(-3..=3);
            teamnet::codec::FrameRgb::new(width, height, data).unwrap()
        })
        .collect()
}

/// Pixel-by-pixel sequential decoder written without the library's helpers:
/// each P-frame pixel copies the previous frame at the clamped position
/// `p - mv` and adds its residual.
pub fn naive_decode(stream: &teamnet::codec::GopStream) -> Vec<Vec<u8>> {
    let (w, h) = (stream.header.width as i64, stream.header.height as i64);
    let bs = stream.header.block_size as i64;
    let mut out = Vec::new();
    for gop in &stream.gops {
        let mut prev = gop.iframe.data().to_vec();
        out.push(prev.clone());
        for pf in &gop.pframes {
            let mut cur = vec![0u8; prev.len()];
            for y in 0..h {
                for x in 0..w {
                    let mv = pf.motion.block((x / bs) as usize, (y / bs) as usize);
                    let rx = (x - mv.dx as i64).clamp(0, w - 1);
                    let ry = (y - mv.dy as i64).clamp(0, h - 1);
                    for c in 0..3 {
                        let r = pf.residual.data()[((y * w + x) * 3 + c) as usize] as i64;
                        let v = prev[((ry * w + rx) * 3 + c) as usize] as i64 + r;
                        assert!((0..=255).contains(&v), "naive decode left the pixel range");
                        cur[((y * w + x) * 3 + c) as usize] = v as u8;
                    }
                }
            }
            out.push(cur.clone());
            prev = cur;
        }
    }
    out
}
