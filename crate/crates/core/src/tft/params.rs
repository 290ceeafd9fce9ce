use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, TftError};
use crate::autodiff::Tensor;

/// Weights of `G` gated residual networks evaluated side by side.
/// Every tensor carries a leading group axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrnParams<T> {
    /// `(G, in, hidden)`
    pub w_hidden: T,
    pub b_hidden: T,
    /// `(G, hidden, hidden)`
    pub w_inner: T,
    pub b_inner: T,
    /// `(G, hidden, out)`, sigmoid branch of the GLU
    pub w_gate: T,
    pub b_gate: T,
    /// `(G, hidden, out)`, linear branch of the GLU
    pub w_value: T,
    pub b_value: T,
    /// `(G, in, out)` projection of the residual; absent when `in == out`.
    pub w_skip: Option<T>,
    /// `(G, 1, out)` affine part of the output layer norm.
    pub ln_gain: T,
    pub ln_bias: T,
}

/// LSTM with gate blocks laid out `[input, forget, cell, output]` along the last axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams<T> {
    /// `(d, 4d)`
    pub w_input: T,
    /// `(d, 4d)`
    pub w_recurrent: T,
    /// `(4d)`
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    /// One `(d, d/H)` matrix per head.
    pub w_query: Vec<T>,
    pub w_key: Vec<T>,
    /// `(d, d/H)`, shared by every head.
    pub w_value: T,
    /// `(d/H, d)`
    pub w_out: T,
    pub ln_gain: T,
    pub ln_bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TftParams<T> {
    /// `(F, 1, d)`: feature `f` is embedded as `x_f·w[f] + b[f]`.
    pub embed_weight: T,
    pub embed_bias: T,
    /// One GRN from the concatenated embeddings (`F·d`) to `F` selection logits.
    pub selection: GrnParams<T>,
    /// `F` GRNs, one per feature, `d → d`.
    pub features: GrnParams<T>,
    pub lstm: LstmParams<T>,
    pub attention: AttentionParams<T>,
    /// `(d, K)`
    pub head_weight: T,
    pub head_bias: T,
}

impl<T> GrnParams<T> {
    fn fields<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        let mut push = |n: &str, t: &'a T| out.push((format!("{prefix}.{n}"), t));
        push("w_hidden", &self.w_hidden);
        push("b_hidden", &self.b_hidden);
        push("w_inner", &self.w_inner);
        push("b_inner", &self.b_inner);
        push("w_gate", &self.w_gate);
        push("b_gate", &self.b_gate);
        push("w_value", &self.w_value);
        push("b_value", &self.b_value);
        if let Some(w) = &self.w_skip {
            push("w_skip", w);
        }
        push("ln_gain", &self.ln_gain);
        push("ln_bias", &self.ln_bias);
    }

    fn fields_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.extend([
            &mut self.w_hidden,
            &mut self.b_hidden,
            &mut self.w_inner,
            &mut self.b_inner,
            &mut self.w_gate,
            &mut self.b_gate,
            &mut self.w_value,
            &mut self.b_value,
        ]);
        if let Some(w) = &mut self.w_skip {
            out.push(w);
        }
        out.extend([&mut self.ln_gain, &mut self.ln_bias]);
    }

    fn try_map<U, E>(&self, f: &mut impl FnMut(&T) -> Result<U, E>) -> Result<GrnParams<U>, E> {
        Ok(GrnParams {
            w_hidden: f(&self.w_hidden)?,
            b_hidden: f(&self.b_hidden)?,
            w_inner: f(&self.w_inner)?,
            b_inner: f(&self.b_inner)?,
            w_gate: f(&self.w_gate)?,
            b_gate: f(&self.b_gate)?,
            w_value: f(&self.w_value)?,
            b_value: f(&self.b_value)?,
            w_skip: self.w_skip.as_ref().map(&mut *f).transpose()?,
            ln_gain: f(&self.ln_gain)?,
            ln_bias: f(&self.ln_bias)?,
        })
    }
}

impl<T> TftParams<T> {
    /// Every parameter block with a dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![
            ("embed_weight".to_string(), &self.embed_weight),
            ("embed_bias".to_string(), &self.embed_bias),
        ];
        self.selection.fields("selection", &mut out);
        self.features.fields("features", &mut out);
        out.push(("lstm.w_input".into(), &self.lstm.w_input));
        out.push(("lstm.w_recurrent".into(), &self.lstm.w_recurrent));
        out.push(("lstm.bias".into(), &self.lstm.bias));
        let a = &self.attention;
        for (h, w) in a.w_query.iter().enumerate() {
            out.push((format!("attention.w_query.{h}"), w));
        }
        for (h, w) in a.w_key.iter().enumerate() {
            out.push((format!("attention.w_key.{h}"), w));
        }
        out.push(("attention.w_value".into(), &a.w_value));
        out.push(("attention.w_out".into(), &a.w_out));
        out.push(("attention.ln_gain".into(), &a.ln_gain));
        out.push(("attention.ln_bias".into(), &a.ln_bias));
        out.push(("head_weight".into(), &self.head_weight));
        out.push(("head_bias".into(), &self.head_bias));
        out
    }

    /// Mutable blocks in the same order as [`TftParams::named`].
    pub fn blocks_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.embed_weight, &mut self.embed_bias];
        self.selection.fields_mut(&mut out);
        self.features.fields_mut(&mut out);
        out.extend([&mut self.lstm.w_input, &mut self.lstm.w_recurrent, &mut self.lstm.bias]);
        let a = &mut self.attention;
        out.extend(a.w_query.iter_mut());
        out.extend(a.w_key.iter_mut());
        out.extend([&mut a.w_value, &mut a.w_out, &mut a.ln_gain, &mut a.ln_bias]);
        out.extend([&mut self.head_weight, &mut self.head_bias]);
        out
    }

    pub fn blocks(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<TftParams<U>, E> {
        let a = &self.attention;
        Ok(TftParams {
            embed_weight: f(&self.embed_weight)?,
            embed_bias: f(&self.embed_bias)?,
            selection: self.selection.try_map(&mut f)?,
            features: self.features.try_map(&mut f)?,
            lstm: LstmParams {
                w_input: f(&self.lstm.w_input)?,
                w_recurrent: f(&self.lstm.w_recurrent)?,
                bias: f(&self.lstm.bias)?,
            },
            attention: AttentionParams {
                w_query: a.w_query.iter().map(&mut f).collect::<Result<_, _>>()?,
                w_key: a.w_key.iter().map(&mut f).collect::<Result<_, _>>()?,
                w_value: f(&a.w_value)?,
                w_out: f(&a.w_out)?,
                ln_gain: f(&a.ln_gain)?,
                ln_bias: f(&a.ln_bias)?,
            },
            head_weight: f(&self.head_weight)?,
            head_bias: f(&self.head_bias)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> TftParams<U> {
        self.try_map(|t| Ok::<U, std::convert::Infallible>(f(t)))
            .unwrap_or_else(|e| match e {})
    }
}

/// Expected shape of every block, in [`TftParams::named`] order.
pub(crate) fn expected_shapes(cfg: &ModelConfig) -> TftParams<Vec<usize>> {
    let (f, d, k, dk) = (cfg.n_features, cfg.d_model, cfg.n_classes, cfg.head_dim());
    TftParams {
        embed_weight: vec![f, 1, d],
        embed_bias: vec![f, 1, d],
        selection: grn_shapes(1, f * d, d, f),
        features: grn_shapes(f, d, d, d),
        lstm: LstmParams {
            w_input: vec![d, 4 * d],
            w_recurrent: vec![d, 4 * d],
            bias: vec![4 * d],
        },
        attention: AttentionParams {
            w_query: vec![vec![d, dk]; cfg.n_heads],
            w_key: vec![vec![d, dk]; cfg.n_heads],
            w_value: vec![d, dk],
            w_out: vec![dk, d],
            ln_gain: vec![d],
            ln_bias: vec![d],
        },
        head_weight: vec![d, k],
        head_bias: vec![k],
    }
}

fn grn_shapes(g: usize, input: usize, hidden: usize, out: usize) -> GrnParams<Vec<usize>> {
    GrnParams {
        w_hidden: vec![g, input, hidden],
        b_hidden: vec![g, 1, hidden],
        w_inner: vec![g, hidden, hidden],
        b_inner: vec![g, 1, hidden],
        w_gate: vec![g, hidden, out],
        b_gate: vec![g, 1, out],
        w_value: vec![g, hidden, out],
        b_value: vec![g, 1, out],
        w_skip: (input != out).then(|| vec![g, input, out]),
        ln_gain: vec![g, 1, out],
        ln_bias: vec![g, 1, out],
    }
}

impl TftParams<Tensor> {
    /// Uniform `±1/√fan_in` weights, zero biases, unit layer-norm gains and a
    /// forget-gate bias of one.
    pub fn init(cfg: &ModelConfig, rng: &mut dyn RngCore) -> Self {
        let shapes = expected_shapes(cfg);
        let names: Vec<String> = shapes.named().into_iter().map(|(n, _)| n).collect();
        let mut i = 0;
        let mut params = shapes.map(|shape| {
            let name = &names[i];
            i += 1;
            let leaf = name.rsplit('.').find(|s| s.parse::<usize>().is_err()).unwrap_or(name);
            if leaf == "ln_gain" {
                Tensor::full(shape, 1.0)
            } else if leaf.starts_with("b_") || leaf.ends_with("bias") {
                Tensor::zeros(shape)
            } else {
                // Weights are (…, fan_in, fan_out).
                let fan_in = shape[shape.len() - 2] as f64;
                let bound = 1.0 / fan_in.sqrt();
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Tensor::new(shape.clone(), data).expect("shape and length agree")
            }
        });
        let d = cfg.d_model;
        params.lstm.bias.data_mut()[d..2 * d].fill(1.0);
        params
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape()))
    }

    pub fn n_scalars(&self) -> usize {
        self.blocks().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|t| t.all_finite())
    }

    pub fn norm(&self) -> f64 {
        self.blocks().iter().map(|t| t.norm().powi(2)).sum::<f64>().sqrt()
    }

    pub(crate) fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), TftError> {
        let expected = expected_shapes(cfg);
        let exp = expected.named();
        let got = self.named();
        if exp.len() != got.len() {
            return Err(TftError::Params(format!(
                "expected {} parameter blocks, found {}",
                exp.len(),
                got.len()
            )));
        }
        for ((name, shape), (_, t)) in exp.into_iter().zip(got) {
            if t.shape() != shape.as_slice() {
                return Err(TftError::Params(format!(
                    "block `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if !self.all_finite() {
            return Err(TftError::Params("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Reorders the feature-indexed blocks so that new feature `i` is old
    /// feature `perm[i]`. A model with permuted parameters applied to
    /// permuted inputs computes the same function.
    pub fn permute_features(&self, perm: &[usize], d_model: usize) -> Self {
        let f = perm.len();
        let mut p = self.clone();
        p.embed_weight = permute_blocks(&self.embed_weight, 0, perm);
        p.embed_bias = permute_blocks(&self.embed_bias, 0, perm);
        p.features = self.features.map_ref(|t| permute_blocks(t, 0, perm));
        let s = &self.selection;
        // Input rows come in per-feature blocks of d_model.
        let block_perm: Vec<usize> = perm.iter().flat_map(|&o| (0..d_model).map(move |j| o * d_model + j)).collect();
        debug_assert_eq!(s.w_hidden.shape()[1], f * d_model);
        p.selection.w_hidden = permute_blocks(&s.w_hidden, 1, &block_perm);
        p.selection.w_gate = permute_blocks(&s.w_gate, 2, perm);
        p.selection.b_gate = permute_blocks(&s.b_gate, 2, perm);
        p.selection.w_value = permute_blocks(&s.w_value, 2, perm);
        p.selection.b_value = permute_blocks(&s.b_value, 2, perm);
        p.selection.w_skip = s
            .w_skip
            .as_ref()
            .map(|w| permute_blocks(&permute_blocks(w, 1, &block_perm), 2, perm));
        p.selection.ln_gain = permute_blocks(&s.ln_gain, 2, perm);
        p.selection.ln_bias = permute_blocks(&s.ln_bias, 2, perm);
        p
    }
}

impl GrnParams<Tensor> {
    fn map_ref(&self, mut f: impl FnMut(&Tensor) -> Tensor) -> Self {
        self.try_map(&mut |t| Ok::<_, std::convert::Infallible>(f(t)))
            .unwrap_or_else(|e| match e {})
    }
}

/// Gathers indices `perm` along `axis`.
fn permute_blocks(t: &Tensor, axis: usize, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    assert_eq!(shape[axis], perm.len(), "permutation length must match axis");
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let n = shape[axis];
    let src = t.data();
    let mut data = Vec::with_capacity(src.len());
    for o in 0..outer {
        for &p in perm {
            let start = (o * n + p) * inner;
            data.extend_from_slice(&src[start..start + inner]);
        }
    }
    Tensor::new(shape.to_vec(), data).expect("same shape")
}
