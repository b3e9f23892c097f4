//! Test oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ctp_core::causal::{
    causal_l2_loss, causal_nll_loss, causal_predict, gan_step_losses, relative_future, Discriminator,
    InterventionMode, InterventionSpec, Phase,
};
use ctp_core::data::{Point, SceneWindow, OBS_LEN, PRED_LEN};
use ctp_core::grad::{Activation, Array, Binding, ParameterStore, Tape, Var};
use ctp_core::model::{
    bivariate_nll, future_displacements, GatLayer, Linear, LstmCell, Model, ModelConfig, NoiseSample, Predictor,
    StgatConfig, StgcnnConfig,
};
use ctp_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Floor on the gradient scale when forming a relative error.
pub const FD_SCALE_FLOOR: f64 = 1e-8;
/// Instances per gradient check.
pub const FD_INSTANCES: usize = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_array(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// `max |analytic - numeric| / max(|analytic|, |numeric|)` over one instance.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0f64;
    let mut scale = FD_SCALE_FLOOR;
    for (a, n) in analytic.iter().zip(numeric) {
        diff = diff.max((a - n).abs());
        scale = scale.max(a.abs()).max(n.abs());
    }
    diff / scale
}

fn scalar_of(tape: &Tape, v: Var) -> f64 {
    let a = tape.value(v);
    assert_eq!(a.len(), 1, "loss must be a scalar");
    a.data()[0]
}

/// Relative error of the tape gradient of `f` with respect to every entry
/// of every input.
pub fn check_inputs(inputs: &[Array], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let eval = |xs: &[Array]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.variable(x.clone()).unwrap()).collect();
        let y = f(&mut t, &vars).unwrap();
        scalar_of(&t, y)
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.variable(x.clone()).unwrap()).collect();
    let y = f(&mut t, &vars).unwrap();
    let grads = t.backward(y).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        analytic.extend_from_slice(grads.wrt(*v).data());
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Relative error of the parameter gradient of `f`, probing `per_tensor`
/// random coordinates of every parameter tensor.
pub fn check_params(
    store: &ParameterStore,
    per_tensor: usize,
    rng: &mut impl Rng,
    f: &dyn Fn(&mut Tape, &Binding) -> Result<Var>,
) -> f64 {
    let eval = |s: &ParameterStore| -> f64 {
        let mut t = Tape::new();
        let b = t.bind(s).unwrap();
        let y = f(&mut t, &b).unwrap();
        scalar_of(&t, y)
    };
    let mut t = Tape::new();
    let b = t.bind(store).unwrap();
    let y = f(&mut t, &b).unwrap();
    let grads = t.backward(y).unwrap().for_binding(&b);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (id, g) in store.ids().zip(&grads) {
        for _ in 0..per_tensor {
            let i = rng.random_range(0..g.len());
            let mut plus = store.clone();
            plus.get_mut(id).data_mut()[i] += FD_STEP;
            let mut minus = store.clone();
            minus.get_mut(id).data_mut()[i] -= FD_STEP;
            analytic.push(g.data()[i]);
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Weighted sum of all entries, so every output coordinate carries a
/// distinct gradient.
pub fn weighted_sum(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = random_array(&mut rng(seed), t.shape(y), -1.0, 1.0);
    let w = t.constant(w)?;
    let p = t.mul(y, w)?;
    t.sum(p)
}

type InputCheck = (&'static str, fn(&mut ChaCha8Rng) -> Vec<Array>, fn(&mut Tape, &[Var]) -> Result<Var>);

fn dims(r: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5))
}

fn primitives() -> Vec<InputCheck> {
    vec![
        (
            "matmul",
            |r| {
                let (m, k, n) = dims(r);
                vec![random_array(r, &[m, k], -1.0, 1.0), random_array(r, &[k, n], -1.0, 1.0)]
            },
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                weighted_sum(t, y, 1)
            },
        ),
        (
            "batch_matmul",
            |r| {
                let (m, k, n) = dims(r);
                vec![random_array(r, &[3, m, k], -1.0, 1.0), random_array(r, &[3, k, n], -1.0, 1.0)]
            },
            |t, v| {
                let y = t.batch_matmul(v[0], v[1])?;
                weighted_sum(t, y, 2)
            },
        ),
        (
            "transpose",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[m, n], -1.0, 1.0)]
            },
            |t, v| {
                let y = t.transpose(v[0])?;
                weighted_sum(t, y, 3)
            },
        ),
        (
            "add_sub_mul",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[m, n], -1.0, 1.0), random_array(r, &[m, n], -1.0, 1.0)]
            },
            |t, v| {
                let a = t.add(v[0], v[1])?;
                let s = t.sub(v[0], v[1])?;
                let y = t.mul(a, s)?;
                weighted_sum(t, y, 4)
            },
        ),
        (
            "div",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[m, n], -1.0, 1.0), random_array(r, &[m, n], 0.5, 2.0)]
            },
            |t, v| {
                let y = t.div(v[0], v[1])?;
                weighted_sum(t, y, 5)
            },
        ),
        (
            "add_bias",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[2, m, n], -1.0, 1.0), random_array(r, &[n], -1.0, 1.0)]
            },
            |t, v| {
                let y = t.add_bias(v[0], v[1])?;
                weighted_sum(t, y, 6)
            },
        ),
        (
            "affine",
            |r| vec![random_array(r, &[4], -1.0, 1.0)],
            |t, v| {
                let y = t.affine(v[0], -1.7, 0.3)?;
                weighted_sum(t, y, 7)
            },
        ),
        (
            "tanh",
            |r| vec![random_array(r, &[6], -2.0, 2.0)],
            |t, v| {
                let y = t.tanh(v[0])?;
                weighted_sum(t, y, 8)
            },
        ),
        (
            "sigmoid",
            |r| vec![random_array(r, &[6], -3.0, 3.0)],
            |t, v| {
                let y = t.sigmoid(v[0])?;
                weighted_sum(t, y, 9)
            },
        ),
        (
            "relu",
            |r| vec![random_array(r, &[6], -2.0, 2.0)],
            |t, v| {
                let y = t.relu(v[0])?;
                weighted_sum(t, y, 10)
            },
        ),
        (
            "leaky_relu",
            |r| vec![random_array(r, &[6], -2.0, 2.0)],
            |t, v| {
                let y = t.leaky_relu(v[0], 0.2)?;
                weighted_sum(t, y, 11)
            },
        ),
        (
            "exp",
            |r| vec![random_array(r, &[6], -2.0, 2.0)],
            |t, v| {
                let y = t.exp(v[0])?;
                weighted_sum(t, y, 12)
            },
        ),
        (
            "log",
            |r| vec![random_array(r, &[6], 0.2, 3.0)],
            |t, v| {
                let y = t.log(v[0])?;
                weighted_sum(t, y, 13)
            },
        ),
        (
            "log_sigmoid",
            |r| vec![random_array(r, &[6], -4.0, 4.0)],
            |t, v| {
                let y = t.map(v[0], Activation::LogSigmoid)?;
                weighted_sum(t, y, 14)
            },
        ),
        (
            "softmax",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[m, n + 1], -2.0, 2.0)]
            },
            |t, v| {
                let y = t.softmax(v[0])?;
                weighted_sum(t, y, 15)
            },
        ),
        (
            "reshape_permute",
            |r| {
                let (a, b, c) = dims(r);
                vec![random_array(r, &[a, b * c], -1.0, 1.0)]
            },
            |t, v| {
                let s = t.shape(v[0]).to_vec();
                let x = t.reshape(v[0], &[s[0], 1, s[1]])?;
                let y = t.permute(x, [2, 0, 1])?;
                weighted_sum(t, y, 16)
            },
        ),
        (
            "concat_slice",
            |r| {
                let (m, a, b) = dims(r);
                vec![random_array(r, &[m, a], -1.0, 1.0), random_array(r, &[m, b + 1], -1.0, 1.0)]
            },
            |t, v| {
                let c = t.concat(&[v[0], v[1]])?;
                let w = t.shape(c)[1];
                let y = t.slice(c, 1, w - 1)?;
                weighted_sum(t, y, 17)
            },
        ),
        (
            "stack_index",
            |r| {
                let (m, n, _) = dims(r);
                vec![random_array(r, &[m, n], -1.0, 1.0), random_array(r, &[m, n], -1.0, 1.0)]
            },
            |t, v| {
                let s = t.stack(&[v[0], v[1], v[0]])?;
                let i = t.index(s, 1)?;
                let j = t.index(s, 2)?;
                let y = t.mul(i, j)?;
                let y2 = weighted_sum(t, y, 18)?;
                let z = weighted_sum(t, s, 19)?;
                t.add(y2, z)
            },
        ),
        (
            "sum_mean",
            |r| vec![random_array(r, &[3, 4], -1.0, 1.0)],
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                let s = t.sum(sq)?;
                let m = t.mean(v[0])?;
                let m2 = t.mul(m, m)?;
                t.add(s, m2)
            },
        ),
        (
            "temporal_conv",
            |r| {
                let (cin, cout, _) = dims(r);
                vec![
                    random_array(r, &[2, cin, 7], -1.0, 1.0),
                    random_array(r, &[cout, cin, 3], -1.0, 1.0),
                    random_array(r, &[cout], -1.0, 1.0),
                ]
            },
            |t, v| {
                let y = t.temporal_conv_bias(v[0], v[1], v[2], 1)?;
                let a = weighted_sum(t, y, 20)?;
                let x0 = t.index(v[0], 0)?;
                let z = t.temporal_conv(x0, v[1], 0)?;
                let b = weighted_sum(t, z, 21)?;
                t.add(a, b)
            },
        ),
    ]
}

/// Worst relative error per primitive over [`FD_INSTANCES`] random instances.
pub fn primitive_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    primitives()
        .into_iter()
        .map(|(name, gen, f)| {
            let worst = (0..FD_INSTANCES).map(|_| check_inputs(&gen(&mut r), &f)).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

pub fn random_window(r: &mut impl Rng, n: usize) -> SceneWindow {
    let mut observed = Vec::new();
    let mut future = Vec::new();
    for _ in 0..n {
        let mut p: Point = [r.random_range(0.0..8.0), r.random_range(0.0..8.0)];
        let v: Point = [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        for t in 0..OBS_LEN + PRED_LEN {
            p = [p[0] + v[0] + r.random_range(-0.05..0.05), p[1] + v[1] + r.random_range(-0.05..0.05)];
            if t < OBS_LEN {
                observed.push(p);
            } else {
                future.push(p);
            }
        }
    }
    SceneWindow::new("random", 0, (0..n as i64).collect(), observed, future).unwrap()
}

pub fn small_stgat() -> ModelConfig {
    ModelConfig::Stgat(StgatConfig {
        motion_hidden: 6,
        gat_heads: 2,
        gat_head_dim: 3,
        gat_out: 5,
        graph_hidden: 4,
        noise_dim: 3,
        decoder_embed: 4,
    })
}

pub fn small_stgcnn() -> ModelConfig {
    ModelConfig::Stgcnn(StgcnnConfig {
        hidden: 5,
        st_kernel: 3,
        txp_layers: 2,
        txp_kernel: 3,
    })
}

/// Worst relative error per building block and full model over
/// [`FD_INSTANCES`] random instances.
pub fn model_gradient_errors(seed: u64, per_tensor: usize) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..FD_INSTANCES {
        let mut store = ParameterStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 3, 4, &mut r).unwrap();
        perturb(&mut store, &mut r);
        let x = random_array(&mut r, &[2, 3], -1.0, 1.0);
        let (h0, c0) = (random_array(&mut r, &[2, 4], -1.0, 1.0), random_array(&mut r, &[2, 4], -1.0, 1.0));
        worst = worst.max(check_params(&store, per_tensor, &mut r, &|t, b| {
            let (mut h, mut c) = (t.constant(h0.clone())?, t.constant(c0.clone())?);
            let x = t.constant(x.clone())?;
            for _ in 0..3 {
                (h, c) = cell.step(t, b, x, h, c)?;
            }
            let hc = t.concat(&[h, c])?;
            weighted_sum(t, hc, 30)
        }));
        worst = worst.max(check_inputs(&[x.clone(), h0.clone(), c0.clone()], &|t, v| {
            let b = t.bind(&store)?;
            let (h, c) = cell.step(t, &b, v[0], v[1], v[2])?;
            let hc = t.concat(&[h, c])?;
            weighted_sum(t, hc, 31)
        }));
    }
    out.push(("lstm", worst));

    let mut worst = 0.0f64;
    for _ in 0..FD_INSTANCES {
        let mut store = ParameterStore::new();
        let gat = GatLayer::new(&mut store, "gat", 4, 2, 3, &mut r).unwrap();
        let lin = Linear::new(&mut store, "lin", 6, 2, &mut r).unwrap();
        perturb(&mut store, &mut r);
        let h = random_array(&mut r, &[3, 4], -1.0, 1.0);
        worst = worst.max(check_params(&store, per_tensor, &mut r, &|t, b| {
            let h = t.constant(h.clone())?;
            let g = gat.forward(t, b, h)?;
            let y = lin.forward(t, b, g)?;
            weighted_sum(t, y, 32)
        }));
    }
    out.push(("gat_linear", worst));

    let mut worst = 0.0f64;
    for _ in 0..FD_INSTANCES {
        let n = r.random_range(1..4);
        let mu = random_array(&mut r, &[n, 4, 2], -1.0, 1.0);
        let sigma = random_array(&mut r, &[n, 4, 2], 0.3, 2.0);
        let rho = random_array(&mut r, &[n, 4, 1], -0.8, 0.8);
        let target = random_array(&mut r, &[n, 4, 2], -1.5, 1.5);
        worst = worst.max(check_inputs(&[mu, sigma, rho, target], &|t, v| {
            let g = t.concat(&[v[0], v[1], v[2]])?;
            bivariate_nll(t, g, v[3])
        }));
    }
    out.push(("bivariate_nll", worst));

    let mut worst = 0.0f64;
    for _ in 0..FD_INSTANCES {
        let disc = Discriminator::new(5, &mut r).unwrap();
        let window = random_window(&mut r, 2);
        let real = relative_future(&window).unwrap();
        let pred = random_array(&mut r, &[2, PRED_LEN, 2], -0.5, 0.5);
        worst = worst.max(check_params(&disc.params, per_tensor, &mut r, &|t, b| {
            let p = t.constant(pred.clone())?;
            let (g, d) = gan_step_losses(t, &disc, b, &real, p)?;
            t.add(g, d)
        }));
        let db = disc.params.clone();
        worst = worst.max(check_inputs(&[pred], &|t, v| {
            let b = t.bind(&db)?;
            Ok(gan_step_losses(t, &disc, &b, &real, v[0])?.0)
        }));
    }
    out.push(("gan_losses", worst));

    for (name, config) in [("stgat_model", small_stgat()), ("stgcnn_model", small_stgcnn())] {
        let mut worst = 0.0f64;
        for i in 0..FD_INSTANCES {
            let mut model = Model::new(config, &mut r).unwrap();
            perturb(&mut model.params, &mut r);
            let n = r.random_range(2..4);
            let window = random_window(&mut r, n);
            let noise = NoiseSample::draw(model.noise_dim(), &mut r);
            let mode = [InterventionMode::Zero, InterventionMode::Mean, InterventionMode::Random][i % 3];
            let mut spec = InterventionSpec::new(mode, i as u64).with_phase(Phase::Eval);
            if mode == InterventionMode::Mean {
                let mut t = Tape::new();
                let b = t.bind(&model.params).unwrap();
                let feature = model.prepare(&mut t, &b, &window).unwrap().feature;
                let width = t.value(feature).cols();
                spec.running_mean = Some((0..width).map(|_| r.random_range(-0.5..0.5)).collect());
            }
            let target = future_displacements(&window).unwrap();
            let m = &model;
            worst = worst.max(check_params(&model.params, per_tensor, &mut r, &|t, b| {
                let mut spec = spec.clone();
                let bundle = causal_predict(m, t, b, &window, &mut spec, &noise)?;
                let l2 = causal_l2_loss(t, bundle.causal, &window.last_observed(), &window.future)?;
                match bundle.causal_gaussian {
                    Some(g) => {
                        let nll = causal_nll_loss(t, g, &target)?;
                        t.add(l2, nll)
                    }
                    None => Ok(l2),
                }
            }));
        }
        out.push((name, worst));
    }
    out
}

/// Moves every parameter off its initial value so zero-initialised biases
/// are exercised too.
fn perturb(store: &mut ParameterStore, r: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
}

/// Brute-force ADE/FDE: per-pedestrian loops with an explicit square root.
pub fn brute_ade_fde(pred: &[Point], gt: &[Point]) -> (f64, f64) {
    let n = pred.len() / PRED_LEN;
    let mut ade = 0.0;
    let mut fde = 0.0;
    for i in 0..n {
        let mut per = 0.0;
        for t in 0..PRED_LEN {
            let (a, b) = (pred[i * PRED_LEN + t], gt[i * PRED_LEN + t]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            per += d;
            if t == PRED_LEN - 1 {
                fde += d;
            }
        }
        ade += per / PRED_LEN as f64;
    }
    (ade / n as f64, fde / n as f64)
}

pub fn random_points(r: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n * PRED_LEN).map(|_| [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)]).collect()
}
