use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::autodiff::grad_check;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn grn_params(g_: usize, input: usize, hidden: usize, out: usize, rng: &mut ChaCha8Rng) -> GrnParams<Tensor> {
    GrnParams {
        w_hidden: randn(&[g_, input, hidden], rng, 0.5),
        b_hidden: randn(&[g_, 1, hidden], rng, 0.1),
        w_inner: randn(&[g_, hidden, hidden], rng, 0.5),
        b_inner: randn(&[g_, 1, hidden], rng, 0.1),
        w_gate: randn(&[g_, hidden, out], rng, 0.5),
        b_gate: randn(&[g_, 1, out], rng, 0.1),
        w_value: randn(&[g_, hidden, out], rng, 0.5),
        b_value: randn(&[g_, 1, out], rng, 0.1),
        w_skip: (input != out).then(|| randn(&[g_, input, out], rng, 0.5)),
        ln_gain: Tensor::full(&[g_, 1, out], 1.0),
        ln_bias: Tensor::zeros(&[g_, 1, out]),
    }
}

fn grn_blocks(p: &GrnParams<Tensor>) -> Vec<Tensor> {
    let mut v = vec![
        p.w_hidden.clone(),
        p.b_hidden.clone(),
        p.w_inner.clone(),
        p.b_inner.clone(),
        p.w_gate.clone(),
        p.b_gate.clone(),
        p.w_value.clone(),
        p.b_value.clone(),
        p.ln_gain.clone(),
        p.ln_bias.clone(),
    ];
    if let Some(w) = &p.w_skip {
        v.push(w.clone());
    }
    v
}

fn grn_from_ids(ids: &[NodeId]) -> GrnParams<NodeId> {
    GrnParams {
        w_hidden: ids[0],
        b_hidden: ids[1],
        w_inner: ids[2],
        b_inner: ids[3],
        w_gate: ids[4],
        b_gate: ids[5],
        w_value: ids[6],
        b_value: ids[7],
        ln_gain: ids[8],
        ln_bias: ids[9],
        w_skip: ids.get(10).copied(),
    }
}

fn run_grn(p: &GrnParams<Tensor>, x: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = grn_blocks(p).into_iter().map(|t| g.constant(t)).collect();
    let pn = grn_from_ids(&ids);
    let xn = g.constant(x.clone());
    let out = grn(&mut g, &pn, xn, 0.0, &mut None).unwrap();
    g.value(out).clone()
}

fn layer_norm_rows(data: &[f64], cols: usize) -> Vec<f64> {
    data.chunks(cols)
        .flat_map(|row| {
            let m = row.iter().sum::<f64>() / cols as f64;
            let v = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / cols as f64;
            row.iter().map(move |x| (x - m) / (v + 1e-5).sqrt()).collect::<Vec<_>>()
        })
        .collect()
}

fn zero_branch(p: &mut GrnParams<Tensor>) {
    for t in [
        &mut p.w_hidden,
        &mut p.b_hidden,
        &mut p.w_inner,
        &mut p.b_inner,
        &mut p.w_gate,
        &mut p.b_gate,
        &mut p.w_value,
        &mut p.b_value,
    ] {
        *t = Tensor::zeros(t.shape());
    }
}

#[test]
fn zero_grn_is_layer_norm_of_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = grn_params(1, 4, 3, 4, &mut rng);
    zero_branch(&mut p);
    let x = randn(&[1, 5, 4], &mut rng, 1.0);
    let out = run_grn(&p, &x);
    for (a, b) in out.data().iter().zip(layer_norm_rows(x.data(), 4)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }

    // Projected residual when widths differ.
    let mut p = grn_params(1, 6, 3, 2, &mut rng);
    zero_branch(&mut p);
    let x = randn(&[1, 5, 6], &mut rng, 1.0);
    let out = run_grn(&p, &x);
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let wn = g.constant(p.w_skip.clone().unwrap());
    let proj = g.matmul(xn, wn).unwrap();
    for (a, b) in out.data().iter().zip(layer_norm_rows(g.value(proj).data(), 2)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn grn_output_width_is_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for input in [1, 3, 8, 17] {
        let p = grn_params(2, input, 5, 8, &mut rng);
        let x = randn(&[2, 3, input], &mut rng, 1.0);
        assert_eq!(run_grn(&p, &x).shape(), &[2, 3, 8]);
    }
}

#[test]
fn grn_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (input, out) in [(5, 3), (4, 4)] {
        let p = grn_params(2, input, 4, out, &mut rng);
        let x = randn(&[2, 3, input], &mut rng, 1.0);
        let target = randn(&[2, 3, out], &mut rng, 1.0);
        let report = grad_check(&grn_blocks(&p), 1e-5, |g, ids| {
            let pn = grn_from_ids(ids);
            let xn = g.constant(x.clone());
            let tn = g.constant(target.clone());
            let y = grn(g, &pn, xn, 0.0, &mut None).map_err(unwrap_ad)?;
            let prod = g.mul(y, tn)?;
            let e = g.elu(prod);
            Ok(g.sum_all(e))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

fn unwrap_ad(e: TftError) -> AutodiffError {
    match e {
        TftError::Autodiff(e) => e,
        other => panic!("{other}"),
    }
}

fn lstm_params(d: usize, rng: &mut ChaCha8Rng) -> LstmParams<Tensor> {
    LstmParams {
        w_input: randn(&[d, 4 * d], rng, 0.5),
        w_recurrent: randn(&[d, 4 * d], rng, 0.5),
        bias: randn(&[4 * d], rng, 0.3),
    }
}

#[test]
fn zero_lstm_gives_zero_states() {
    for w in [1, 2, 7] {
        let mut g = Graph::new();
        let p = LstmParams {
            w_input: g.constant(Tensor::zeros(&[4, 16])),
            w_recurrent: g.constant(Tensor::zeros(&[4, 16])),
            bias: g.constant(Tensor::zeros(&[16])),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let x = g.constant(randn(&[2, w, 4], &mut rng, 1.0));
        let h = lstm(&mut g, &p, x).unwrap();
        assert_eq!(g.shape(h), &[2, w, 4]);
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn lstm_gradients_through_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = lstm_params(3, &mut rng);
    let x = randn(&[2, 3, 3], &mut rng, 1.0);
    let c = randn(&[2, 3, 3], &mut rng, 1.0);
    let blocks = vec![p.w_input, p.w_recurrent, p.bias, x];
    let report = grad_check(&blocks, 1e-5, |g, ids| {
        let pn = LstmParams {
            w_input: ids[0],
            w_recurrent: ids[1],
            bias: ids[2],
        };
        let h = lstm(g, &pn, ids[3]).map_err(unwrap_ad)?;
        let cn = g.constant(c.clone());
        let prod = g.mul(h, cn)?;
        Ok(g.sum_all(prod))
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

fn attention_params(d: usize, dk: usize, heads: usize, rng: &mut ChaCha8Rng) -> AttentionParams<Tensor> {
    AttentionParams {
        w_query: (0..heads).map(|_| randn(&[d, dk], rng, 0.5)).collect(),
        w_key: (0..heads).map(|_| randn(&[d, dk], rng, 0.5)).collect(),
        w_value: randn(&[d, dk], rng, 0.5),
        w_out: randn(&[dk, d], rng, 0.5),
        ln_gain: Tensor::full(&[d], 1.0),
        ln_bias: Tensor::zeros(&[d]),
    }
}

fn run_attention(p: &AttentionParams<Tensor>, x: &Tensor) -> (Tensor, Vec<Tensor>) {
    let mut g = Graph::new();
    let pn = AttentionParams {
        w_query: p.w_query.iter().map(|t| g.constant(t.clone())).collect(),
        w_key: p.w_key.iter().map(|t| g.constant(t.clone())).collect(),
        w_value: g.constant(p.w_value.clone()),
        w_out: g.constant(p.w_out.clone()),
        ln_gain: g.constant(p.ln_gain.clone()),
        ln_bias: g.constant(p.ln_bias.clone()),
    };
    let xn = g.constant(x.clone());
    let (out, maps) = attention(&mut g, &pn, xn, 0.0, &mut None).unwrap();
    (g.value(out).clone(), maps.iter().map(|&m| g.value(m).clone()).collect())
}

#[test]
fn zero_query_key_gives_uniform_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = attention_params(4, 4, 1, &mut rng);
    p.w_query[0] = Tensor::zeros(&[4, 4]);
    p.w_key[0] = Tensor::zeros(&[4, 4]);
    let w = 5;
    let (_, maps) = run_attention(&p, &randn(&[2, w, 4], &mut rng, 1.0));
    for &a in maps[0].data() {
        assert_abs_diff_eq!(a, 1.0 / w as f64, epsilon = 1e-15);
    }
}

#[test]
fn identical_heads_equal_one_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let single = attention_params(8, 4, 1, &mut rng);
    let mut double = single.clone();
    double.w_query.push(single.w_query[0].clone());
    double.w_key.push(single.w_key[0].clone());
    let x = randn(&[3, 6, 8], &mut rng, 1.0);
    let (a, _) = run_attention(&single, &x);
    let (b, maps) = run_attention(&double, &x);
    assert_eq!(maps.len(), 2);
    for (u, v) in a.data().iter().zip(b.data()) {
        assert_abs_diff_eq!(*u, *v, epsilon = 1e-12);
    }
}

fn random_windows(cfg: &ModelConfig, b: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..b * cfg.window * cfg.n_features)
        .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn check_normalized(out: &PredictionOutput, cfg: &ModelConfig) {
    let sum: f64 = out.probs.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9 && out.probs.iter().all(|&p| p >= 0.0));
    for row in out.vsn_weights.chunks(cfg.n_features) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert_eq!(out.attn_weights.len(), cfg.n_heads * cfg.window * cfg.window);
    for row in out.attn_weights.chunks(cfg.window) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn outputs_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = ModelConfig::new(6, 4, 3);
    for seed in 0..5 {
        let model = TftModel::new(cfg.clone(), seed).unwrap();
        let xs = random_windows(&cfg, 40, &mut rng);
        for out in model.predict(&xs).unwrap() {
            check_normalized(&out, &cfg);
        }
    }
}

#[test]
fn single_feature_weight_is_one() {
    let cfg = ModelConfig { n_features: 1, ..ModelConfig::tiny() };
    let model = TftModel::new(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let out = model.forward(&random_windows(&cfg, 1, &mut rng)).unwrap();
    assert!(out.vsn_weights.iter().all(|&w| w == 1.0));
}

#[test]
fn symmetric_selection_gives_uniform_weights() {
    let cfg = ModelConfig::new(3, 5, 2);
    let mut model = TftModel::new(cfg.clone(), 1).unwrap();
    {
        let p = model.params_mut();
        p.embed_weight = Tensor::full(p.embed_weight.shape(), 0.3);
        p.embed_bias = Tensor::full(p.embed_bias.shape(), -0.1);
        let s = &mut p.selection;
        for t in [
            &mut s.w_hidden,
            &mut s.b_hidden,
            &mut s.w_inner,
            &mut s.b_inner,
            &mut s.w_gate,
            &mut s.b_gate,
            &mut s.w_value,
            &mut s.b_value,
        ] {
            *t = Tensor::full(t.shape(), 0.2);
        }
        let w = s.w_skip.as_mut().unwrap();
        *w = Tensor::full(w.shape(), 0.1);
    }
    let sample: Vec<f64> = (0..3).flat_map(|t| vec![t as f64 - 0.5; 5]).collect();
    let out = model.forward(&sample).unwrap();
    for &w in &out.vsn_weights {
        assert_abs_diff_eq!(w, 0.2, epsilon = 1e-12);
    }
}

#[test]
fn feature_permutation_leaves_probs_unchanged() {
    let cfg = ModelConfig::new(5, 4, 3);
    let model = TftModel::new(cfg.clone(), 3).unwrap();
    let perm = [2, 0, 3, 1];
    let permuted = model.permute_features(&perm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs = random_windows(&cfg, 6, &mut rng);
    let xp: Vec<f64> = xs.chunks(4).flat_map(|row| perm.iter().map(|&o| row[o]).collect::<Vec<_>>()).collect();
    let a = model.predict(&xs).unwrap();
    let b = permuted.predict(&xp).unwrap();
    for (u, v) in a.iter().zip(&b) {
        for (p, q) in u.probs.iter().zip(&v.probs) {
            assert_abs_diff_eq!(*p, *q, epsilon = 1e-12);
        }
        for (row_u, row_v) in u.vsn_weights.chunks(4).zip(v.vsn_weights.chunks(4)) {
            for (i, &o) in perm.iter().enumerate() {
                assert_abs_diff_eq!(row_v[i], row_u[o], epsilon = 1e-12);
            }
        }
    }
    assert!(model.permute_features(&[0, 0, 1, 2]).is_err());
}

#[test]
fn tiny_model_gradient_check() {
    let cfg = ModelConfig::tiny();
    let model = TftModel::new(cfg.clone(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs = random_windows(&cfg, 2, &mut rng);
    let report = model.grad_check(&xs, &[0, 2], 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert_eq!(report.n_checked, model.params().n_scalars());
}

#[test]
fn every_block_receives_gradient() {
    let cfg = ModelConfig::new(4, 3, 3);
    let model = TftModel::new(cfg.clone(), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs = random_windows(&cfg, 8, &mut rng);
    let ys: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let bg = model.loss_and_grad(&xs, &ys, &[1.0; 8], Some(&mut rng)).unwrap();
    for (name, t) in bg.grads.named() {
        assert!(t.norm() > 0.0, "dead gradient in {name}");
    }
}

#[test]
fn zero_dropout_train_equals_eval() {
    let cfg = ModelConfig { dropout: 0.0, ..ModelConfig::new(4, 3, 2) };
    let model = TftModel::new(cfg.clone(), 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs = random_windows(&cfg, 3, &mut rng);
    let eval = model.forward_batch(&xs, None).unwrap();
    let train = model.forward_batch(&xs, Some(&mut rng)).unwrap();
    assert_eq!(eval, train);

    // With dropout active the two modes differ.
    let cfg = ModelConfig { dropout: 0.5, ..cfg };
    let model = TftModel::new(cfg, 13).unwrap();
    let eval = model.forward_batch(&xs, None).unwrap();
    let train = model.forward_batch(&xs, Some(&mut rng)).unwrap();
    assert_ne!(eval, train);
}

#[test]
fn eval_forward_is_bitwise_deterministic() {
    let cfg = ModelConfig::new(6, 4, 3);
    let model = TftModel::new(cfg.clone(), 14).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let xs = random_windows(&cfg, 5, &mut rng);
    assert_eq!(model.predict(&xs).unwrap(), model.predict(&xs).unwrap());
    assert_eq!(TftModel::new(cfg, 14).unwrap(), model);
    let probs = model.predict_proba(&xs).unwrap();
    let outs = model.predict(&xs).unwrap();
    assert_eq!(probs, outs.iter().flat_map(|o| o.probs.clone()).collect::<Vec<_>>());
}

#[test]
fn checkpoint_reload_is_bit_exact() {
    let cfg = ModelConfig::new(4, 3, 2);
    let model = TftModel::new(cfg, 15).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    model.save(&path, &names, None).unwrap();
    let (back, ckpt) = TftModel::load(&path).unwrap();
    assert_eq!(ckpt.feature_names, names);
    for (a, b) in model.params().blocks().iter().zip(back.params().blocks()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ModelConfig::new(4, 3, 3);
    for bad in [
        ModelConfig { n_heads: 3, ..base.clone() },
        ModelConfig { dropout: 1.0, ..base.clone() },
        ModelConfig { n_classes: 1, ..base.clone() },
        ModelConfig { window: 0, ..base.clone() },
    ] {
        assert!(matches!(TftModel::new(bad, 0), Err(TftError::Config(_))));
    }
}

#[test]
fn non_finite_activation_names_layer() {
    let cfg = ModelConfig::new(3, 2, 2);
    let mut model = TftModel::new(cfg.clone(), 16).unwrap();
    let p = model.params_mut();
    p.embed_weight = Tensor::full(p.embed_weight.shape(), 1e308);
    let err = model.forward(&[10.0; 6]).unwrap_err();
    assert!(matches!(err, TftError::NonFinite { layer: "variable selection" }), "{err}");

    let model = TftModel::new(cfg, 16).unwrap();
    let err = model.forward(&[f64::NAN; 6]).unwrap_err();
    assert!(matches!(err, TftError::NonFinite { layer: "input" }), "{err}");
}

#[test]
fn initialization_follows_fan_in() {
    let cfg = ModelConfig::new(4, 3, 2);
    let model = TftModel::new(cfg.clone(), 17).unwrap();
    let p = model.params();
    let d = cfg.d_model;
    assert!(p.lstm.bias.data()[d..2 * d].iter().all(|&b| b == 1.0));
    assert!(p.lstm.bias.data()[..d].iter().all(|&b| b == 0.0));
    let bound = 1.0 / (d as f64).sqrt();
    assert!(p.lstm.w_input.data().iter().all(|v| v.abs() <= bound));
    assert!(p.head_bias.data().iter().all(|&b| b == 0.0));
    assert!(p.attention.ln_gain.data().iter().all(|&g| g == 1.0));
}
