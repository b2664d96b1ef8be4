#![allow(dead_code)]

use contrail_core::autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;

/// Gradient components smaller than this fraction of the largest one are
/// compared on an absolute scale (`|analytic − numeric| / (FLOOR · max)`).
/// Keeps cancellation noise in near-zero components from dominating.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Reduce any tensor to a scalar by a fixed random projection so every output
/// element contributes a distinct weight.
pub fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let mut r = rng(seed ^ 0x5eed);
    let w = random_tensor(&mut r, tape.value(out).shape(), 1.0);
    let wv = tape.constant(w);
    let prod = tape.mul(out, wv).unwrap();
    tape.sum(prod)
}

/// Worst relative error between reverse-mode and central-difference
/// gradients of `f` with respect to every element of every input.
pub fn grad_check<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_EPS;
            let up = eval(&xs);
            xs[k].data_mut()[i] = orig - FD_EPS;
            let down = eval(&xs);
            xs[k].data_mut()[i] = orig;
            analytic.push(g[i]);
            numeric.push((up - down) / (2.0 * FD_EPS));
        }
    }
    max_relative_error(&analytic, &numeric)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR * scale))
        .fold(0.0, f64::max)
}

pub type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

/// One differentiable op under test: input shapes and a scalar-valued
/// closure built around it.
pub struct OpCase {
    pub name: String,
    pub shapes: Vec<Vec<usize>>,
    pub f: OpFn,
}

fn case(name: &str, shapes: &[&[usize]], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var + 'static) -> OpCase {
    OpCase {
        name: name.to_string(),
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        f: Box::new(f),
    }
}

/// Every differentiable tape op, each reduced to a scalar by a random
/// projection (the loss is already scalar).
pub fn op_cases() -> Vec<OpCase> {
    use contrail_core::autodiff::{Activation, ConvGeometry};
    let mut v = vec![
        case("add", &[&[2, 3], &[2, 3]], |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            project(t, y, 1)
        }),
        case("mul", &[&[2, 3], &[2, 3]], |t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            project(t, y, 2)
        }),
        case("scale", &[&[5]], |t, v| {
            let y = t.scale(v[0], -2.5);
            project(t, y, 3)
        }),
        case("sum", &[&[4, 2]], |t, v| {
            let s = t.sum(v[0]);
            t.mul(s, s).unwrap()
        }),
        case("fan-out accumulation", &[&[3]], |t, v| {
            let y = t.mul(v[0], v[0]).unwrap();
            let z = t.add(y, v[0]).unwrap();
            project(t, z, 4)
        }),
    ];
    for kind in [Activation::Relu, Activation::Gelu, Activation::Sigmoid] {
        v.push(case(&format!("{kind:?}"), &[&[2, 3, 4]], move |t, v| {
            let y = t.activation(v[0], kind);
            project(t, y, 5)
        }));
    }
    let convs: [(&str, [usize; 4], [usize; 4], ConvGeometry, bool); 5] = [
        ("conv 3x3 pad 1", [2, 3, 6, 5], [4, 3, 3, 3], ConvGeometry::new(1, 1, 1), true),
        ("conv stride 2", [1, 2, 7, 6], [3, 2, 2, 2], ConvGeometry::new(2, 0, 1), true),
        ("conv pointwise", [2, 4, 3, 3], [2, 4, 1, 1], ConvGeometry::default(), false),
        ("conv grouped", [1, 4, 5, 5], [6, 2, 3, 3], ConvGeometry::new(1, 1, 2), true),
        ("conv depthwise 7x7", [1, 3, 8, 8], [3, 1, 7, 7], ConvGeometry::new(1, 3, 3), true),
    ];
    for (name, xs, ws, geom, bias) in convs {
        let bs = [ws[0]];
        let mut shapes: Vec<&[usize]> = vec![&xs, &ws];
        if bias {
            shapes.push(&bs);
        }
        v.push(case(name, &shapes, move |t, v| {
            let y = t.conv2d(v[0], v[1], v.get(2).copied(), geom).unwrap();
            project(t, y, 6)
        }));
    }
    v.extend([
        case("max pool 2x2", &[&[2, 2, 6, 6]], |t, v| {
            let y = t.max_pool2d(v[0], 2, 2).unwrap();
            project(t, y, 7)
        }),
        case("adaptive avg 5x7 -> 3x2", &[&[1, 2, 5, 7]], |t, v| {
            let y = t.adaptive_avg_pool(v[0], 3, 2).unwrap();
            project(t, y, 8)
        }),
        case("adaptive avg 4x4 -> 6x6", &[&[1, 1, 4, 4]], |t, v| {
            let y = t.adaptive_avg_pool(v[0], 6, 6).unwrap();
            project(t, y, 9)
        }),
        case("resize 5x4 -> 7x9", &[&[1, 2, 5, 4]], |t, v| {
            let y = t.resize_bilinear(v[0], 7, 9).unwrap();
            project(t, y, 10)
        }),
        case("resize 8x8 -> 3x5", &[&[1, 1, 8, 8]], |t, v| {
            let y = t.resize_bilinear(v[0], 3, 5).unwrap();
            project(t, y, 11)
        }),
        case("upsample x2", &[&[2, 1, 3, 4]], |t, v| {
            let y = t.upsample_bilinear(v[0], 2).unwrap();
            project(t, y, 12)
        }),
        case("channel norm", &[&[2, 4, 3, 3], &[4], &[4]], |t, v| {
            let y = t.channel_norm(v[0], v[1], v[2], 1e-6).unwrap();
            project(t, y, 13)
        }),
        case("concat channels", &[&[2, 1, 2, 2], &[2, 3, 2, 2]], |t, v| {
            let y = t.concat(&[v[0], v[1]], 1).unwrap();
            project(t, y, 14)
        }),
        case("concat batch", &[&[1, 2, 2, 2], &[2, 2, 2, 2]], |t, v| {
            let y = t.concat(&[v[0], v[1]], 0).unwrap();
            project(t, y, 15)
        }),
        case("softmax", &[&[2, 3, 2, 2]], |t, v| {
            let y = t.softmax(v[0], 1).unwrap();
            project(t, y, 16)
        }),
        case("weighted cross-entropy", &[&[2, 2, 3, 3]], |t, v| {
            let target: Vec<usize> = (0..18).map(|i| usize::from(i * 7 % 5 == 0)).collect();
            t.weighted_cross_entropy(v[0], &target, &[1.0, 10.0]).unwrap()
        }),
    ]);
    v
}

/// Worst per-op relative error over `seeds`, with the offending op.
pub fn op_suite(seeds: &[u64]) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for c in op_cases() {
        for &seed in seeds {
            let mut r = rng(seed);
            let inputs: Vec<_> = c.shapes.iter().map(|s| random_tensor(&mut r, s, 1.0)).collect();
            let err = grad_check(&inputs, |t, v| (c.f)(t, v));
            if err >= worst.0 {
                worst = (err, format!("{} (seed {seed})", c.name));
            }
        }
    }
    worst
}

/// Relative error of the full network's loss gradient with respect to every
/// parameter, on an 8×8 batch of two.
pub fn network_grad_error(config: &contrail_core::models::ModelConfig, seed: u64) -> f64 {
    use contrail_core::autodiff::ParamStore;
    use contrail_core::models::Network;

    let net = Network::<f64>::build(config, seed).unwrap();
    let mut r = rng(seed);
    let x = random_tensor(&mut r, &[2, config.in_channels, 8, 8], 1.0);
    let target: Vec<usize> = (0..2 * 64).map(|_| usize::from(r.random_bool(0.3))).collect();
    let weights = [1.0, 10.0];
    let loss_of = |params: &ParamStore<f64>| {
        let n = Network::from_params(config, params.clone()).unwrap();
        let mut tape = Tape::new();
        let (l, _) = n.loss(&mut tape, &x, &target, &weights).unwrap();
        tape.value(l).item().unwrap()
    };
    let mut tape = Tape::new();
    let (loss, vars) = net.loss(&mut tape, &x, &target, &weights).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut params = net.params().clone();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (k, var) in vars.iter().enumerate() {
        let g = grads.get(*var).unwrap().to_vec();
        for i in 0..g.len() {
            let orig = params.get(k).value.data()[i];
            params.value_mut(k).data_mut()[i] = orig + FD_EPS;
            let up = loss_of(&params);
            params.value_mut(k).data_mut()[i] = orig - FD_EPS;
            let down = loss_of(&params);
            params.value_mut(k).data_mut()[i] = orig;
            analytic.push(g[i]);
            numeric.push((up - down) / (2.0 * FD_EPS));
        }
    }
    max_relative_error(&analytic, &numeric)
}
