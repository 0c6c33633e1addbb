//! Central finite differences against reverse-mode gradients.

use modgate::autodiff::{Tensor, Value};
use modgate::data::Utterance;
use modgate::fusion::FusionKind;
use modgate::mfm::{FilterMode, Phase};
use modgate::model::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;
const MIN_PROBES: usize = 100;

/// Relative error with a floor on the denominator; below the floor the
/// comparison is effectively absolute.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], avoid: &[f64]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let x: f64 = rng.random_range(-2.0..2.0);
            if avoid.iter().all(|k| (x - k).abs() > 0.05) {
                break x;
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Reduces any output to a scalar with fixed random weights so that every
/// output element contributes a distinct amount.
fn project(out: &Value, weights: &Tensor) -> Value {
    out.mul(&Value::constant(weights.clone())).unwrap().sum()
}

/// Checks every element of every input; returns the number of probes.
fn check_all(label: &str, inputs: &[Value], f: &dyn Fn(&[Value]) -> Value) -> usize {
    let loss = f(inputs);
    loss.backward().unwrap();
    let analytic: Vec<Vec<f64>> = inputs.iter().map(|v| v.grad().data().to_vec()).collect();
    let mut probes = 0;
    for (v, grads) in inputs.iter().zip(&analytic) {
        for (j, &a) in grads.iter().enumerate() {
            let x0 = v.data().data()[j];
            v.data_mut().data_mut()[j] = x0 + H;
            let up = f(inputs).item();
            v.data_mut().data_mut()[j] = x0 - H;
            let down = f(inputs).item();
            v.data_mut().data_mut()[j] = x0;
            let n = (up - down) / (2.0 * H);
            let e = rel_err(a, n);
            assert!(
                e < TOL,
                "{label}: element {j}: analytic {a} vs numeric {n} (rel {e:.2e})"
            );
            probes += 1;
        }
    }
    probes
}

/// Repeats a randomized check until at least `MIN_PROBES` elements were
/// probed.
fn run_op(label: &str, seed: u64, mut trial: impl FnMut(&mut ChaCha8Rng) -> usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = 0;
    while probes < MIN_PROBES {
        probes += trial(&mut rng);
    }
    assert!(probes >= MIN_PROBES, "{label}");
}

fn unary(label: &str, seed: u64, shape: &[usize], avoid: &[f64], op: fn(&Value) -> Value) {
    run_op(label, seed, |rng| {
        let x = Value::param(random_tensor(rng, shape, avoid));
        let w = random_tensor(rng, &op(&x).shape(), &[]);
        check_all(label, &[x], &|xs| project(&op(&xs[0]), &w))
    });
}

fn binary(label: &str, seed: u64, a: &[usize], b: &[usize], op: fn(&Value, &Value) -> Value) {
    run_op(label, seed, |rng| {
        let x = Value::param(random_tensor(rng, a, &[]));
        let y = Value::param(random_tensor(rng, b, &[]));
        let w = random_tensor(rng, &op(&x, &y).shape(), &[]);
        check_all(label, &[x, y], &|v| project(&op(&v[0], &v[1]), &w))
    });
}

pub fn check_elementwise() {
    unary("relu", 1, &[4, 5], &[0.0], |x| x.relu());
    unary("sigmoid", 2, &[4, 5], &[], |x| x.sigmoid());
    unary("abs", 3, &[4, 5], &[0.0], |x| x.abs());
    unary("scale", 4, &[20], &[], |x| x.scale(-1.7));
    unary("add_scalar", 5, &[20], &[], |x| x.add_scalar(0.3));
    unary("clamp", 6, &[4, 5], &[-0.5, 0.5], |x| x.clamp(-0.5, 0.5));
    binary("add", 7, &[3, 4], &[3, 4], |a, b| a.add(b).unwrap());
    binary("sub", 8, &[3, 4], &[3, 4], |a, b| a.sub(b).unwrap());
    binary("mul", 9, &[3, 4], &[3, 4], |a, b| a.mul(b).unwrap());
    binary("scale_by", 10, &[25], &[], |a, s| a.scale_by(s).unwrap());
}

pub fn check_linear_algebra() {
    binary("matmul", 11, &[3, 4], &[4, 5], |a, b| a.matmul(b).unwrap());
    binary("matmul_vec", 12, &[4, 6], &[6], |a, b| {
        a.matmul(&b.reshape(&[6, 1]).unwrap()).unwrap()
    });
    binary("add_bias", 13, &[5, 4], &[4], |a, b| a.add_bias(b).unwrap());
    unary("transpose", 14, &[4, 6], &[], |x| x.transpose().unwrap());
    unary("reshape", 15, &[4, 6], &[], |x| x.reshape(&[2, 12]).unwrap());
}

pub fn check_reductions() {
    unary("sum", 16, &[5, 5], &[], |x| x.sum().scale(1.3));
    unary("mean", 17, &[5, 5], &[], |x| x.mean().scale(1.3));
    unary("row", 18, &[5, 6], &[], |x| x.row(2).unwrap());
    unary("index", 19, &[30], &[], |x| x.index(7).unwrap().scale(2.0));
    binary("concat", 20, &[6], &[7], |a, b| {
        Value::concat(&[a.clone(), b.clone()]).unwrap()
    });
}

pub fn check_softmax_unfold_outer() {
    unary("softmax", 21, &[4, 5], &[], |x| x.softmax(1.7).unwrap());
    unary("softmax_scalar_row", 22, &[2], &[], |x| x.softmax(3.0).unwrap());
    unary("unfold3", 23, &[6, 4], &[], |x| x.unfold_same(3).unwrap());
    unary("unfold5", 24, &[4, 3], &[], |x| x.unfold_same(5).unwrap());
    run_op("outer3", 25, |rng| {
        let vs: Vec<Value> = [3, 4, 2]
            .iter()
            .map(|&n| Value::param(random_tensor(rng, &[n], &[])))
            .collect();
        let w = random_tensor(rng, &[24], &[]);
        check_all("outer3", &vs, &|v| {
            project(&Value::outer3(&v[0], &v[1], &v[2]).unwrap(), &w)
        })
    });
}

pub fn check_shared_subexpressions() {
    // y = x*x + relu(x)*x reuses x along several paths.
    unary("diamond", 26, &[25], &[0.0], |x| {
        let sq = x.mul(x).unwrap();
        sq.add(&x.relu().mul(x).unwrap()).unwrap()
    });
}

fn utterance(rng: &mut ChaCha8Rng, dims: [usize; 3], t: usize) -> Utterance {
    Utterance {
        id: "probe".into(),
        label: rng.random_range(-3.0..3.0),
        sequences: dims.map(|d| random_tensor(rng, &[t, d], &[])),
        noise_flags: None,
    }
}

/// Probes random parameter entries of `model`; `loss` rebuilds the graph.
fn check_params(label: &str, model: &Model, loss: &dyn Fn() -> Value, rng: &mut ChaCha8Rng, count: usize) {
    let l = loss();
    l.backward().unwrap();
    let params: Vec<(String, Value)> = model.params().iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
    let analytic: Vec<Vec<f64>> = params.iter().map(|(_, v)| v.grad().data().to_vec()).collect();
    let mut nonzero = 0;
    for _ in 0..count {
        let p = rng.random_range(0..params.len());
        let (name, v) = &params[p];
        let j = rng.random_range(0..v.numel());
        let x0 = v.data().data()[j];
        v.data_mut().data_mut()[j] = x0 + H;
        let up = loss().item();
        v.data_mut().data_mut()[j] = x0 - H;
        let down = loss().item();
        v.data_mut().data_mut()[j] = x0;
        let n = (up - down) / (2.0 * H);
        let a = analytic[p][j];
        let e = rel_err(a, n);
        assert!(
            e < TOL,
            "{label}: {name}[{j}]: analytic {a} vs numeric {n} (rel {e:.2e})"
        );
        if a.abs() > 1e-6 {
            nonzero += 1;
        }
    }
    assert!(nonzero > count / 4, "{label}: too few informative probes ({nonzero})");
    model.params().zero_grad();
}

pub fn check_unimodal_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let config = ModelConfig {
        input_dims: [3, 2, 2],
        d: 4,
        layers: 2,
        filter: FilterMode::None,
        ..Default::default()
    };
    let model = Model::new(config, 31).unwrap();
    let u = utterance(&mut rng, [3, 2, 2], 4);
    let loss = || {
        let xs = model.encode(&u).unwrap();
        let preds = model.unimodal_predictions(&xs).unwrap();
        let losses: Vec<Value> = preds.iter().map(|p| p.add_scalar(-u.label).abs()).collect();
        Value::concat(&losses).unwrap().mean()
    };
    check_params("unimodal", &model, &loss, &mut rng, 150);
}

fn multimodal_path(fusion: FusionKind, filter: FilterMode, shared: bool, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        input_dims: [3, 2, 2],
        d: 3,
        fusion,
        filter,
        shared_filter: shared,
        lambda: 2.0,
        ..Default::default()
    };
    let model = Model::new(config, seed + 1).unwrap();
    // Move gates and baselines off their zero initialization.
    for (name, v) in model.params().iter() {
        if name.starts_with("mfm.") {
            let t = random_tensor(&mut rng, &v.shape(), &[]);
            *v.data_mut() = t;
            v.data_mut().data_mut().iter_mut().for_each(|x| *x *= 0.3);
        }
    }
    let u = utterance(&mut rng, [3, 2, 2], 3);
    let loss = || {
        let xs = model.encode(&u).unwrap();
        // A fresh generator per evaluation fixes the Hard Concrete samples.
        let mut draw = ChaCha8Rng::seed_from_u64(99);
        let out = model.multimodal(&xs, Phase::Train, &mut draw).unwrap();
        let mut total = out.prediction.add_scalar(-u.label).abs();
        for d in &out.decisions {
            total = total.add(&d.penalty.scale(0.1)).unwrap();
        }
        total
    };
    check_params(&format!("{fusion:?}/{filter:?}"), &model, &loss, &mut rng, 150);
}

pub fn check_soft_addition_path() {
    multimodal_path(FusionKind::Addition, FilterMode::Soft, true, 40);
}

pub fn check_soft_concat_path() {
    multimodal_path(FusionKind::ConcatFc, FilterMode::Soft, false, 50);
}

pub fn check_hard_tensor_path() {
    multimodal_path(FusionKind::Tensor, FilterMode::Hard, true, 60);
}

/// Every op and composite path; panics on the first mismatch.
pub fn check_everything() {
    check_elementwise();
    check_linear_algebra();
    check_reductions();
    check_softmax_unfold_outer();
    check_shared_subexpressions();
    check_unimodal_path();
    check_soft_addition_path();
    check_soft_concat_path();
    check_hard_tensor_path();
}
