use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{Point, SceneWindow, OBS_LEN, PRED_LEN};
use crate::grad::{Array, Binding, ParamId, ParameterStore, Tape, Var};
use crate::model::{
    observed_displacements, Model, ModelConfig, NoiseSample, OutputMode, PassOutput, Predictor, Prepared, StgatConfig,
    StgcnnConfig,
};

/// `f(x) = x W` over the flattened observed displacements.
struct LinearToy {
    params: ParameterStore,
    w: ParamId,
}

impl LinearToy {
    fn new(seed: u64) -> Self {
        let mut params = ParameterStore::new();
        let w = params
            .insert_glorot("w", &[OBS_LEN * 2, PRED_LEN * 2], 16, 24, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        Self { params, w }
    }
}

impl Predictor for LinearToy {
    type Context = ();

    fn params(&self) -> &ParameterStore {
        &self.params
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn output_mode(&self) -> OutputMode {
        OutputMode::Point
    }

    fn prepare(&self, tape: &mut Tape, _p: &Binding, window: &SceneWindow) -> crate::Result<Prepared<()>> {
        Ok(Prepared {
            feature: tape.constant(observed_displacements(window)?)?,
            context: (),
        })
    }

    fn predict_from(
        &self,
        tape: &mut Tape,
        p: &Binding,
        _prepared: &Prepared<()>,
        feature: Var,
        _noise: &NoiseSample,
    ) -> crate::Result<PassOutput> {
        let n = tape.shape(feature)[0];
        let y = tape.matmul(feature, p.var(self.w))?;
        Ok(PassOutput {
            displacement: tape.reshape(y, &[n, PRED_LEN, 2])?,
            gaussian: None,
            adjacency: None,
        })
    }
}

fn random_window(n: usize, seed: u64) -> SceneWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = Vec::new();
    let mut future = Vec::new();
    for _ in 0..n {
        let mut p: Point = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let v = [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)];
        for t in 0..OBS_LEN + PRED_LEN {
            p = [p[0] + v[0] + rng.random_range(-0.05..0.05), p[1] + v[1] + rng.random_range(-0.05..0.05)];
            if t < OBS_LEN { observed.push(p) } else { future.push(p) }
        }
    }
    SceneWindow::new("t", 0, (0..n as i64).collect(), observed, future).unwrap()
}

fn small_models(seed: u64) -> [Model; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [
        Model::new(
            ModelConfig::Stgat(StgatConfig {
                motion_hidden: 5,
                gat_heads: 2,
                gat_head_dim: 2,
                gat_out: 4,
                graph_hidden: 3,
                noise_dim: 2,
                decoder_embed: 3,
            }),
            &mut rng,
        )
        .unwrap(),
        Model::new(
            ModelConfig::Stgcnn(StgcnnConfig { hidden: 4, st_kernel: 3, txp_layers: 2, txp_kernel: 3 }),
            &mut rng,
        )
        .unwrap(),
    ]
}

fn bundle_of<P: Predictor>(m: &P, w: &SceneWindow, spec: &mut InterventionSpec, z: &NoiseSample) -> BundleValues {
    let mut t = Tape::new();
    let b = t.bind(m.params()).unwrap();
    causal_predict(m, &mut t, &b, w, spec, z).unwrap().values(&t)
}

#[test]
fn subtraction_identity_on_random_bundles() {
    for s in 0..10u64 {
        for m in small_models(s) {
            let w = random_window(1 + (s as usize % 4), 50 + s);
            let mut spec = InterventionSpec::new(InterventionMode::Random, s);
            let z = NoiseSample::draw(m.noise_dim(), &mut ChaCha8Rng::seed_from_u64(s));
            let v = bundle_of(&m, &w, &mut spec, &z);
            for ((f, c), y) in v.factual.data().iter().zip(v.counterfactual.data()).zip(v.causal.data()) {
                assert!(libm::fabs(f - c - y) < 1e-12);
            }
            if let Some(g) = v.causal_gaussian {
                for (row, mu) in g.data().chunks(5).zip(v.causal.data().chunks(2)) {
                    assert_eq!(&row[..2], mu);
                }
            }
        }
    }
}

#[test]
fn null_intervention_gives_zero_causal_prediction() {
    for m in small_models(3) {
        let w = random_window(3, 7);
        let mut t = Tape::new();
        let b = t.bind(&m.params).unwrap();
        let prep = m.prepare(&mut t, &b, &w).unwrap();
        let f = t.value(prep.feature).clone();
        let z = NoiseSample::draw(m.noise_dim(), &mut ChaCha8Rng::seed_from_u64(1));
        let bundle = causal_predict_with(&m, &mut t, &b, &prep, f.clone(), f, &z).unwrap();
        assert!(t.value(bundle.causal).data().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn zero_counterfactual_output_leaves_the_factual_prediction() {
    let toy = LinearToy::new(2);
    let w = random_window(3, 8);
    let mut spec = InterventionSpec::new(InterventionMode::Zero, 0);
    let v = bundle_of(&toy, &w, &mut spec, &NoiseSample::zeros(0));
    assert!(v.counterfactual.data().iter().all(|x| *x == 0.0));
    assert_eq!(v.causal, v.factual);
}

#[test]
fn linear_toy_matches_the_analytic_difference() {
    let toy = LinearToy::new(4);
    let w = random_window(2, 9);
    let mut spec = InterventionSpec::new(InterventionMode::Random, 77);
    let mut t = Tape::new();
    let b = t.bind(&toy.params).unwrap();
    let bundle = causal_predict(&toy, &mut t, &b, &w, &mut spec, &NoiseSample::zeros(0)).unwrap();
    let x = &bundle.feature;
    let xp = &bundle.replacement;
    let wm = toy.params.get(toy.w);
    for i in 0..2 {
        for j in 0..PRED_LEN * 2 {
            let expected: f64 = (0..OBS_LEN * 2)
                .map(|k| wm.get2(k, j) * (x.get2(i, k) - xp.get2(i, k)))
                .sum();
            assert!(libm::fabs(t.value(bundle.causal).data()[i * 24 + j] - expected) < 1e-12);
        }
    }
}

#[test]
fn eval_random_equals_eval_zero_bitwise() {
    for m in small_models(5) {
        let w = random_window(3, 10);
        let z = NoiseSample::draw(m.noise_dim(), &mut ChaCha8Rng::seed_from_u64(2));
        let mut r = InterventionSpec::new(InterventionMode::Random, 1).with_phase(Phase::Eval);
        let mut zero = InterventionSpec::new(InterventionMode::Zero, 2).with_phase(Phase::Eval);
        assert_eq!(bundle_of(&m, &w, &mut r, &z), bundle_of(&m, &w, &mut zero, &z));
    }
}

#[test]
fn same_noise_is_shared_and_reproducible() {
    let [stgat, _] = small_models(6);
    let w = random_window(2, 11);
    let z = NoiseSample::draw(2, &mut ChaCha8Rng::seed_from_u64(3));
    let mut spec = InterventionSpec::new(InterventionMode::Zero, 0);
    let a = bundle_of(&stgat, &w, &mut spec, &z);
    let b = bundle_of(&stgat, &w, &mut spec, &z);
    assert_eq!(a, b);
    // the counterfactual pass equals a separate forward with the same Z
    let mut t = Tape::new();
    let bind = t.bind(&stgat.params).unwrap();
    let prep = stgat.prepare(&mut t, &bind, &w).unwrap();
    let zeros = Array::zeros(t.shape(prep.feature));
    let mut t2 = Tape::new();
    let bind2 = t2.bind(&stgat.params).unwrap();
    let cf = stgat.forward(&mut t2, &bind2, &w, &z, Some(&zeros)).unwrap();
    assert_eq!(t2.value(cf.displacement), &a.counterfactual);
    let other = NoiseSample::draw(2, &mut ChaCha8Rng::seed_from_u64(4));
    assert_ne!(bundle_of(&stgat, &w, &mut spec, &other), a);
}

#[test]
fn adjacency_is_untouched_by_the_intervention() {
    let [_, stgcnn] = small_models(7);
    let w = random_window(4, 12);
    let mut t = Tape::new();
    let b = t.bind(&stgcnn.params).unwrap();
    let mut spec = InterventionSpec::new(InterventionMode::Random, 3);
    let bundle = causal_predict(&stgcnn, &mut t, &b, &w, &mut spec, &NoiseSample::zeros(0)).unwrap();
    let af = t.value(bundle.factual.adjacency.unwrap());
    let ac = t.value(bundle.counterfactual.adjacency.unwrap());
    assert_eq!(af, ac);
    assert_eq!(af, &crate::model::InteractionGraph::from_window(&w).adjacency);
}

#[test]
fn intervention_modes() {
    let f = Array::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 5.0]).unwrap();
    let mut zero = InterventionSpec::new(InterventionMode::Zero, 0);
    assert!(make_intervention(&mut zero, &f).unwrap().data().iter().all(|v| *v == 0.0));

    let mut mean = InterventionSpec::new(InterventionMode::Mean, 0).with_phase(Phase::Eval);
    assert!(matches!(make_intervention(&mut mean, &f), Err(crate::Error::Contract(_))));
    mean.set_phase(Phase::Train);
    let m1 = make_intervention(&mut mean, &f).unwrap();
    assert_eq!(m1.data(), &[0.0, 1.0, 4.0, 0.0, 1.0, 4.0]);
    let g = Array::full(&[1, 3], 10.0);
    let m2 = make_intervention(&mut mean, &g).unwrap();
    let expected = [0.99 * 0.0 + 0.1, 0.99 * 1.0 + 0.1, 0.99 * 4.0 + 0.1];
    for (a, b) in m2.data().iter().zip(expected) {
        assert!(libm::fabs(a - b) < 1e-12);
    }
    mean.set_phase(Phase::Eval);
    let frozen = make_intervention(&mut mean, &f).unwrap();
    assert_eq!(make_intervention(&mut mean, &g).unwrap().data(), &frozen.data()[..3]);
    assert!(make_intervention(&mut mean, &Array::zeros(&[1, 4])).is_err());

    let mut bad = InterventionSpec::new(InterventionMode::Random, 0);
    bad.half_width = 0.0;
    assert!(make_intervention(&mut bad, &f).is_err());
}

#[test]
fn random_intervention_bounds_and_mean() {
    let mut spec = InterventionSpec::new(InterventionMode::Random, 42);
    let f = Array::zeros(&[1000, 100]);
    let x = make_intervention(&mut spec, &f).unwrap();
    assert!(x.data().iter().all(|v| (-0.1..=0.1).contains(v)));
    let mean = x.data().iter().sum::<f64>() / x.len() as f64;
    assert!(libm::fabs(mean) < 0.002);
    spec.set_phase(Phase::Eval);
    assert!(make_intervention(&mut spec, &f).unwrap().data().iter().all(|v| *v == 0.0));
}

fn future_of(w: &SceneWindow) -> Vec<Point> {
    w.future.clone()
}

#[test]
fn l2_loss_examples() {
    let w = random_window(2, 13);
    let disp = crate::model::future_displacements(&w).unwrap();
    let mut t = Tape::new();
    let d = t.constant(disp.clone()).unwrap();
    let l = causal_l2_loss(&mut t, d, &w.last_observed(), &future_of(&w)).unwrap();
    assert!(t.value(l).data()[0] < 1e-24);

    // shifting every decoded point by (0.3, 0.4) costs 0.5^2
    let mut shifted = disp.clone();
    for i in 0..2 {
        let k = i * PRED_LEN * 2;
        shifted.data_mut()[k] += 0.3;
        shifted.data_mut()[k + 1] += 0.4;
    }
    let d = t.constant(shifted).unwrap();
    let l = causal_l2_loss(&mut t, d, &w.last_observed(), &future_of(&w)).unwrap();
    assert!(libm::fabs(t.value(l).data()[0] - 0.25) < 1e-12);

    assert!(causal_l2_loss(&mut t, d, &w.last_observed()[..1], &future_of(&w)).is_err());
}

#[test]
fn l2_loss_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for s in 0..20 {
        let w = random_window(3, 100 + s);
        let mut t = Tape::new();
        let d = t
            .constant(Array::new(&[3, PRED_LEN, 2], (0..72).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        let l = causal_l2_loss(&mut t, d, &w.last_observed(), &w.future).unwrap();
        assert!(t.value(l).data()[0] >= 0.0);
    }
}

#[test]
fn nll_loss_rejects_invalid_parameters() {
    let mut t = Tape::new();
    let g = t.constant(Array::new(&[1, 1, 5], vec![0.0, 0.0, 1.0, -1.0, 0.0]).unwrap()).unwrap();
    assert!(causal_nll_loss(&mut t, g, &Array::zeros(&[1, 1, 2])).is_err());
    let g = t.constant(Array::new(&[1, 1, 5], vec![0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
    assert!(causal_nll_loss(&mut t, g, &Array::zeros(&[1, 1, 2])).is_err());
    let g = t.constant(Array::new(&[1, 1, 5], vec![0.5, 0.5, 1.0, 1.0, 0.0]).unwrap()).unwrap();
    let l = causal_nll_loss(&mut t, g, &Array::full(&[1, 1, 2], 0.5)).unwrap();
    assert!(libm::fabs(t.value(l).data()[0] - libm::log(2.0 * core::f64::consts::PI)) < 1e-15);
}

#[test]
fn variety_loss_picks_the_minimum() {
    let w = random_window(2, 15);
    let exact = crate::model::future_displacements(&w).unwrap();
    let mut t = Tape::new();
    let mut preds = Vec::new();
    let mut singles = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..4 {
        let noisy: Vec<f64> = exact.data().iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        let v = t.constant(Array::new(exact.shape(), noisy).unwrap()).unwrap();
        let single = causal_l2_loss(&mut t, v, &w.last_observed(), &w.future).unwrap();
        singles.push(t.value(single).data()[0]);
        preds.push(v);
    }
    let l = variety_loss(&mut t, &preds, &w.last_observed(), &w.future).unwrap();
    let lv = t.value(l).data()[0];
    assert!(singles.iter().all(|s| lv <= *s));
    let one = variety_loss(&mut t, &preds[..1], &w.last_observed(), &w.future).unwrap();
    assert_eq!(t.value(one).data()[0], singles[0]);
    let e = t.constant(exact).unwrap();
    preds.push(e);
    let l = variety_loss(&mut t, &preds, &w.last_observed(), &w.future).unwrap();
    assert!(t.value(l).data()[0] < 1e-24);
    assert!(variety_loss(&mut t, &[], &w.last_observed(), &w.future).is_err());
}

fn flat_discriminator() -> Discriminator {
    let mut d = Discriminator::new(8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for id in d.params.ids().collect::<Vec<_>>() {
        d.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    d
}

#[test]
fn uninformative_discriminator_costs_two_log_two() {
    let d = flat_discriminator();
    let w = random_window(3, 17);
    let mut t = Tape::new();
    let db = t.bind(&d.params).unwrap();
    let real = relative_future(&w).unwrap();
    let pred = t.constant(crate::model::future_displacements(&w).unwrap()).unwrap();
    let (gen, disc) = gan_step_losses(&mut t, &d, &db, &real, pred).unwrap();
    assert!(libm::fabs(t.value(disc).data()[0] - 2.0 * core::f64::consts::LN_2) < 1e-15);
    assert!(libm::fabs(t.value(gen).data()[0] - core::f64::consts::LN_2) < 1e-15);
    let l2 = causal_l2_loss(&mut t, pred, &w.last_observed(), &w.future).unwrap();
    assert!(t.value(l2).data()[0] < 1e-24);
    let p = t.constant(real.clone()).unwrap();
    let prob = d.probability(&mut t, &db, p).unwrap();
    assert!(t.value(prob).data().iter().all(|v| *v == 0.5));
}

#[test]
fn adversarial_losses_touch_disjoint_parameters() {
    let [stgat, _] = small_models(8);
    let d = Discriminator::new(6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let w = random_window(2, 18);
    let mut t = Tape::new();
    let gb = t.bind(&stgat.params).unwrap();
    let db = t.bind(&d.params).unwrap();
    let mut spec = InterventionSpec::new(InterventionMode::Zero, 0);
    let bundle = causal_predict(&stgat, &mut t, &gb, &w, &mut spec, &NoiseSample::zeros(2)).unwrap();
    let real = relative_future(&w).unwrap();
    // the discriminator sees a detached copy of the prediction
    let causal_value = t.value(bundle.causal).clone();
    let detached = t.constant(causal_value).unwrap();
    let (_, disc) = gan_step_losses(&mut t, &d, &db, &real, detached).unwrap();
    let (gen, _) = gan_step_losses(&mut t, &d, &db, &real, bundle.causal).unwrap();
    let gd = t.backward(disc).unwrap();
    assert!(gd.for_binding(&gb).iter().all(|g| g.data().iter().all(|v| *v == 0.0)));
    assert!(gd.for_binding(&db).iter().any(|g| g.data().iter().any(|v| *v != 0.0)));
    let gg = t.backward(gen).unwrap();
    assert!(gg.for_binding(&gb).iter().any(|g| g.data().iter().any(|v| *v != 0.0)));
}

#[test]
fn counterfactual_pass_contributes_gradient() {
    // With a detached counterfactual the gradient would differ; the causal
    // loss must differentiate through both passes.
    let [stgat, _] = small_models(9);
    let w = random_window(2, 19);
    let mut t = Tape::new();
    let b = t.bind(&stgat.params).unwrap();
    let mut spec = InterventionSpec::new(InterventionMode::Zero, 0);
    let bundle = causal_predict(&stgat, &mut t, &b, &w, &mut spec, &NoiseSample::zeros(2)).unwrap();
    let full = causal_l2_loss(&mut t, bundle.causal, &w.last_observed(), &w.future).unwrap();
    let cf_value = t.value(bundle.counterfactual.displacement).clone();
    let cf_const = t.constant(cf_value).unwrap();
    let half = t.sub(bundle.factual.displacement, cf_const).unwrap();
    let detached = causal_l2_loss(&mut t, half, &w.last_observed(), &w.future).unwrap();
    assert_eq!(t.value(full), t.value(detached));
    let g_full = t.backward(full).unwrap().for_binding(&b);
    let g_det = t.backward(detached).unwrap().for_binding(&b);
    let head = stgat.params.find("decoder_head.weight").unwrap().index();
    assert!(g_full[head].max_abs_diff(&g_det[head]) > 1e-8);
}
