//! Building blocks of the classifier, recorded on an autodiff [`Graph`].
//!
//! Every function takes `rng: &mut Option<&mut dyn RngCore>`; `None` means
//! evaluation mode, where dropout is the identity.

use rand::RngCore;

use super::params::{AttentionParams, GrnParams, LstmParams, TftParams};
use super::{ModelConfig, TftError};
use crate::autodiff::{Graph, NodeId};

pub type ModeRng<'a> = Option<&'a mut dyn RngCore>;

/// `G` gated residual networks applied to `x: (G, R, in)`, giving `(G, R, out)`.
pub fn grn(g: &mut Graph, p: &GrnParams<NodeId>, x: NodeId, dropout: f64, rng: &mut ModeRng) -> Result<NodeId, TftError> {
    let h = g.matmul(x, p.w_hidden)?;
    let h = g.add(h, p.b_hidden)?;
    let h = g.elu(h);
    let h = g.matmul(h, p.w_inner)?;
    let h = g.add(h, p.b_inner)?;
    let h = g.dropout(h, dropout, rng.as_deref_mut())?;
    let gate = g.matmul(h, p.w_gate)?;
    let gate = g.add(gate, p.b_gate)?;
    let gate = g.sigmoid(gate);
    let val = g.matmul(h, p.w_value)?;
    let val = g.add(val, p.b_value)?;
    let glu = g.mul(gate, val)?;
    let skip = match p.w_skip {
        Some(w) => g.matmul(x, w)?,
        None => x,
    };
    let s = g.add(skip, glu)?;
    let n = g.layer_norm(s);
    let n = g.mul(n, p.ln_gain)?;
    Ok(g.add(n, p.ln_bias)?)
}

/// Variable selection over `x: (R, F)` rows. Returns the combined
/// embedding `(R, d)` and the selection weights `(R, F)`.
pub fn vsn(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &TftParams<NodeId>,
    x: NodeId,
    rng: &mut ModeRng,
) -> Result<(NodeId, NodeId), TftError> {
    let (r, f, d) = (g.shape(x)[0], cfg.n_features, cfg.d_model);
    let xt = g.transpose(x)?;
    let xt = g.reshape(xt, &[f, r, 1])?;
    let e = g.mul(xt, p.embed_weight)?;
    let e = g.add(e, p.embed_bias)?;

    let flat = g.permute(e, &[1, 0, 2])?;
    let flat = g.reshape(flat, &[1, r, f * d])?;
    let logits = grn(g, &p.selection, flat, cfg.dropout, rng)?;
    let logits = g.reshape(logits, &[r, f])?;
    let weights = g.softmax(logits);

    let feats = grn(g, &p.features, e, cfg.dropout, rng)?;
    let wt = g.transpose(weights)?;
    let wt = g.reshape(wt, &[f, r, 1])?;
    let weighted = g.mul(feats, wt)?;
    let combined = g.sum_axis(weighted, 0)?;
    Ok((combined, weights))
}

/// Runs the LSTM over `x: (B, w, d)` from a zero state and returns every
/// hidden state, `(B, w, d)`.
pub fn lstm(g: &mut Graph, p: &LstmParams<NodeId>, x: NodeId) -> Result<NodeId, TftError> {
    let (b, w, d) = match *g.shape(x) {
        [b, w, d] => (b, w, d),
        _ => return Err(TftError::Shape(format!("lstm input must be rank 3, got {:?}", g.shape(x)))),
    };
    let flat = g.reshape(x, &[b * w, d])?;
    let xw = g.matmul(flat, p.w_input)?;
    let xw = g.add(xw, p.bias)?;
    let xw = g.reshape(xw, &[b, w, 4 * d])?;
    let mut h: Option<NodeId> = None;
    let mut c: Option<NodeId> = None;
    let mut states = Vec::with_capacity(w);
    for t in 0..w {
        let z = g.slice(xw, 1, t, 1)?;
        let mut z = g.reshape(z, &[b, 4 * d])?;
        if let Some(h) = h {
            let rec = g.matmul(h, p.w_recurrent)?;
            z = g.add(z, rec)?;
        }
        let gi = g.slice(z, 1, 0, d)?;
        let i = g.sigmoid(gi);
        let gc = g.slice(z, 1, 2 * d, d)?;
        let cand = g.tanh(gc);
        let go = g.slice(z, 1, 3 * d, d)?;
        let o = g.sigmoid(go);
        let write = g.mul(i, cand)?;
        let c_new = match c {
            Some(prev) => {
                let gf = g.slice(z, 1, d, d)?;
                let f = g.sigmoid(gf);
                let keep = g.mul(f, prev)?;
                g.add(keep, write)?
            }
            None => write,
        };
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        states.push(g.reshape(h_new, &[b, 1, d])?);
        h = Some(h_new);
        c = Some(c_new);
    }
    Ok(g.concat(&states, 1)?)
}

/// Multi-head self-attention with a value projection shared by all heads.
/// Heads are averaged before the output projection; the result goes
/// through a residual connection and layer norm. Returns the output
/// `(B, w, d)` and one `(B, w, w)` attention map per head.
pub fn attention(
    g: &mut Graph,
    p: &AttentionParams<NodeId>,
    x: NodeId,
    dropout: f64,
    rng: &mut ModeRng,
) -> Result<(NodeId, Vec<NodeId>), TftError> {
    let (b, w, d) = match *g.shape(x) {
        [b, w, d] => (b, w, d),
        _ => return Err(TftError::Shape(format!("attention input must be rank 3, got {:?}", g.shape(x)))),
    };
    if p.w_query.is_empty() || p.w_query.len() != p.w_key.len() {
        return Err(TftError::Shape("attention needs matching query and key heads".into()));
    }
    let dk = g.shape(p.w_value)[1];
    let scale = 1.0 / (g.shape(p.w_query[0])[1] as f64).sqrt();
    let flat = g.reshape(x, &[b * w, d])?;
    let v = g.matmul(flat, p.w_value)?;
    let v = g.reshape(v, &[b, w, dk])?;
    let mut maps = Vec::with_capacity(p.w_query.len());
    let mut sum: Option<NodeId> = None;
    for (&wq, &wk) in p.w_query.iter().zip(&p.w_key) {
        let q = g.matmul(flat, wq)?;
        let q = g.reshape(q, &[b, w, dk])?;
        let k = g.matmul(flat, wk)?;
        let k = g.reshape(k, &[b, w, dk])?;
        let kt = g.transpose(k)?;
        let s = g.matmul(q, kt)?;
        let s = g.scale(s, scale);
        let a = g.softmax(s);
        let head = g.matmul(a, v)?;
        sum = Some(match sum {
            Some(acc) => g.add(acc, head)?,
            None => head,
        });
        maps.push(a);
    }
    let avg = g.scale(sum.expect("at least one head"), 1.0 / maps.len() as f64);
    let avg = g.reshape(avg, &[b * w, dk])?;
    let out = g.matmul(avg, p.w_out)?;
    let out = g.dropout(out, dropout, rng.as_deref_mut())?;
    let out = g.add(flat, out)?;
    let out = g.layer_norm(out);
    let out = g.mul(out, p.ln_gain)?;
    let out = g.add(out, p.ln_bias)?;
    Ok((g.reshape(out, &[b, w, d])?, maps))
}

/// Nodes of one full forward pass.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    /// `(B, K)`
    pub logits: NodeId,
    /// `(B, K)`
    pub probs: NodeId,
    /// `(B·w, F)`
    pub vsn_weights: NodeId,
    /// Per head, `(B, w, w)`.
    pub attention: Vec<NodeId>,
}

fn ensure_finite(g: &Graph, node: NodeId, layer: &'static str) -> Result<(), TftError> {
    if g.value(node).all_finite() {
        Ok(())
    } else {
        Err(TftError::NonFinite { layer })
    }
}

/// Full classifier on `x: (B, w, F)`: VSN per timestep, LSTM, attention,
/// mean pooling over time, dense head and softmax.
pub fn forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &TftParams<NodeId>,
    x: NodeId,
    rng: &mut ModeRng,
) -> Result<ForwardNodes, TftError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || shape[1] != cfg.window || shape[2] != cfg.n_features {
        return Err(TftError::Shape(format!(
            "input shape {shape:?} does not match (batch, {}, {})",
            cfg.window, cfg.n_features
        )));
    }
    ensure_finite(g, x, "input")?;
    let (b, w, f, d) = (shape[0], cfg.window, cfg.n_features, cfg.d_model);
    let rows = g.reshape(x, &[b * w, f])?;
    let (emb, weights) = vsn(g, cfg, p, rows, rng)?;
    ensure_finite(g, emb, "variable selection")?;
    let emb = g.reshape(emb, &[b, w, d])?;
    let states = lstm(g, &p.lstm, emb)?;
    ensure_finite(g, states, "lstm encoder")?;
    let (att, maps) = attention(g, &p.attention, states, cfg.dropout, rng)?;
    ensure_finite(g, att, "attention")?;
    let pooled = g.mean_axis(att, 1)?;
    let logits = g.matmul(pooled, p.head_weight)?;
    let logits = g.add(logits, p.head_bias)?;
    ensure_finite(g, logits, "output head")?;
    let probs = g.softmax(logits);
    Ok(ForwardNodes {
        logits,
        probs,
        vsn_weights: weights,
        attention: maps,
    })
}
