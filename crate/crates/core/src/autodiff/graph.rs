use rand::Rng;

use super::{AutodiffError, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How an operand maps onto the (possibly larger) broadcast output.
#[derive(Debug)]
enum Bcast {
    Same,
    /// Operand is a trailing block repeated over the output.
    Tile(usize),
    /// Operand has size 1 on a single axis: `(inner, repeat)` of that axis.
    Axis(usize, usize),
    Map(Vec<usize>),
}

impl Bcast {
    fn new(out: &[usize], input: &[usize]) -> Self {
        if out == input {
            return Bcast::Same;
        }
        let in_len: usize = input.iter().product();
        if in_len == 1 || (input.len() <= out.len() && out.ends_with(input)) {
            return Bcast::Tile(in_len);
        }
        if input.len() == out.len() {
            let diff: Vec<usize> = (0..out.len()).filter(|&d| input[d] != out[d]).collect();
            if let [axis] = diff[..] {
                if input[axis] == 1 {
                    let inner = out[axis + 1..].iter().product();
                    return Bcast::Axis(inner, out[axis]);
                }
            }
        }
        Bcast::Map(broadcast_map(out, input))
    }

    #[cfg(test)]
    fn index(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Tile(n) => i % n,
            Bcast::Axis(inner, repeat) => (i / (repeat * inner)) * inner + i % inner,
            Bcast::Map(m) => m[i],
        }
    }
}

/// Walks the source indices of a [`Bcast`] in output order without divisions.
struct BcastIter<'a> {
    kind: &'a Bcast,
    i: usize,
    base: usize,
    j: usize,
    r: usize,
}

impl Iterator for BcastIter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        let out = match self.kind {
            Bcast::Same => self.i,
            Bcast::Tile(n) => {
                let v = self.j;
                self.j += 1;
                if self.j == *n {
                    self.j = 0;
                }
                v
            }
            Bcast::Axis(inner, repeat) => {
                let v = self.base + self.j;
                self.j += 1;
                if self.j == *inner {
                    self.j = 0;
                    self.r += 1;
                    if self.r == *repeat {
                        self.r = 0;
                        self.base += inner;
                    }
                }
                v
            }
            Bcast::Map(m) => m[self.i],
        };
        self.i += 1;
        Some(out)
    }
}

impl Bcast {
    /// Unbounded; zip with something of the output's length.
    fn iter(&self) -> BcastIter<'_> {
        BcastIter {
            kind: self,
            i: 0,
            base: 0,
            j: 0,
            r: 0,
        }
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn broadcast_map(out: &[usize], input: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - input.len();
    // Strides of the input expressed in output dimensions; 0 where broadcast.
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..input.len()).rev() {
        if input[i] != 1 {
            strides[i + offset] = s;
        }
        s *= input[i];
    }
    let total: usize = out.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c = a·b + beta·c` where `a` is logically `m×k` and `b` is `k×n`.
/// A `true` transpose flag means the operand is stored as its transpose.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // dense row-major (or transposed) storage within those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Bcast, Bcast),
    Sub(NodeId, NodeId, Bcast, Bcast),
    Mul(NodeId, NodeId, Bcast, Bcast),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    Softmax(NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize },
    Sum { input: NodeId, axis: usize },
    SumAll(NodeId),
    Dropout { input: NodeId, mask: Vec<f64> },
    LayerNorm { input: NodeId, inv_std: Vec<f64> },
    Reshape(NodeId),
    Permute { input: NodeId, map: Vec<usize> },
    CrossEntropy { logits: NodeId, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    is_param: bool,
}

/// A tape of tensor operations recorded in topological order.
///
/// Nodes are appended as operations execute, so the node order is
/// already a valid topological order and [`Graph::backward`] just walks
/// it in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the parameter leaves of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_node(Op::Leaf, value, true, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_node(Op::Leaf, value, false, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push_node(&mut self, op: Op, value: Tensor, needs_grad: bool, is_param: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            is_param,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.push_node(op, value, needs_grad, false)
    }

    fn mismatch(&self, op: &'static str, ids: &[NodeId]) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            shapes: ids.iter().map(|&i| self.shape(i).to_vec()).collect(),
        }
    }

    /// Matrix product. Rank-2 `(m,k)·(k,n)` or batched rank-3 `(b,m,k)·(b,k,n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, m, k, n) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n),
            ([b1, m, k], [b2, k2, n]) if b1 == b2 && k == k2 => (*b1, *m, *k, *n),
            _ => return Err(self.mismatch("matmul", &[a, b])),
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..],
                    false,
                    &bv[i * k * n..],
                    false,
                    0.0,
                    &mut out[i * m * n..],
                );
            }
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, Bcast, Bcast), AutodiffError> {
        let out_shape = broadcast_shape(self.shape(a), self.shape(b))
            .ok_or_else(|| self.mismatch(name, &[a, b]))?;
        let ma = Bcast::new(&out_shape, self.shape(a));
        let mb = Bcast::new(&out_shape, self.shape(b));
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let total: usize = out_shape.iter().product();
        let data: Vec<f64> = match (&ma, &mb) {
            (Bcast::Same, Bcast::Same) => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            (Bcast::Same, Bcast::Tile(n)) => av
                .chunks(*n)
                .flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>())
                .collect(),
            _ => ma.iter().zip(mb.iter()).take(total).map(|(i, j)| f(av[i], bv[j])).collect(),
        };
        Ok((Tensor::new(out_shape, data)?, ma, mb))
    }

    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (v, ma, mb) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b, ma, mb), v, &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (v, ma, mb) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b, ma, mb), v, &[a, b]))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (v, ma, mb) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b, ma, mb), v, &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), v, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v, &[a])
    }

    /// ELU with unit alpha.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(Op::Elu(a), v, &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let cols = *t.shape().last().unwrap_or(&1);
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let v = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(Op::Softmax(a), v, &[a])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, AutodiffError> {
        let first = inputs
            .first()
            .ok_or(AutodiffError::InvalidArgument { op: "concat", msg: "no inputs".into() })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(self.mismatch("concat", inputs));
        }
        let mut total_axis = 0;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != base.len()
                || s.iter().enumerate().any(|(d, &x)| d != axis && x != base[d])
            {
                return Err(self.mismatch("concat", inputs));
            }
            total_axis += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for &id in inputs {
                let t = self.value(id);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total_axis;
        let v = Tensor::new(shape, data)?;
        Ok(self.push(Op::Concat { inputs: inputs.to_vec(), axis }, v, inputs))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice",
                shapes: vec![shape, vec![axis, start, len]],
            });
        }
        let (outer, mid, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * mid * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let v = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Slice { input: a, axis, start }, v, &[a]))
    }

    /// Sums over `axis`, removing it. A rank-1 input yields shape `[1]`.
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(self.mismatch("sum_axis", &[a]));
        }
        let (outer, mid, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut data[o * inner..(o + 1) * inner];
            for m in 0..mid {
                let row = &src[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let v = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Sum { input: a, axis }, v, &[a]))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId, AutodiffError> {
        let n = *self
            .shape(a)
            .get(axis)
            .ok_or_else(|| self.mismatch("mean_axis", &[a]))?;
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    /// Sum of every element, as a `[1]` tensor.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s), &[a])
    }

    /// Inverted dropout. With `rng == None` (evaluation) this returns `a`
    /// itself, so it is the exact identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: NodeId,
        p: f64,
        rng: Option<&mut R>,
    ) -> Result<NodeId, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::InvalidArgument {
                op: "dropout",
                msg: format!("rate {p} outside [0, 1)"),
            });
        }
        let rng = match rng {
            Some(r) if p > 0.0 => r,
            _ => return Ok(a),
        };
        let keep = 1.0 / (1.0 - p);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let v = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { input: a, mask }, v, &[a]))
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let cols = *t.shape().last().unwrap_or(&1);
        let mut data = t.data().to_vec();
        let mut inv_std = Vec::with_capacity(data.len() / cols);
        for row in data.chunks_mut(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        let v = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(Op::LayerNorm { input: a, inv_std }, v, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, AutodiffError> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(a), v, &[a]))
    }

    /// General axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(a).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(AutodiffError::ShapeMismatch {
                op: "permute",
                shapes: vec![shape, perm.to_vec()],
            });
        }
        let mut in_strides = vec![1usize; rank];
        for d in (0..rank.saturating_sub(1)).rev() {
            in_strides[d] = in_strides[d + 1] * shape[d + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let permuted_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let map = broadcast_like_map(&out_shape, &permuted_strides);
        let src = self.value(a).data();
        let data = map.iter().map(|&i| src[i]).collect();
        let v = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Permute { input: a, map }, v, &[a]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let rank = self.shape(a).len();
        if rank < 2 {
            return Err(self.mismatch("transpose", &[a]));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(a, &perm)
    }

    /// Weighted softmax cross-entropy summed over rows:
    /// `Σᵢ wᵢ · (logsumexp(zᵢ) − zᵢ[tᵢ])` for logits of shape `(n, K)`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[f64],
    ) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(logits).to_vec();
        let (n, k) = match shape.as_slice() {
            [n, k] => (*n, *k),
            _ => return Err(self.mismatch("cross_entropy", &[logits])),
        };
        if targets.len() != n || weights.len() != n || targets.iter().any(|&t| t >= k) {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                shapes: vec![shape, vec![targets.len()], vec![weights.len()]],
            });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (i, row) in probs.chunks_mut(k).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += weights[i] * (lse - row[targets[i]]);
            softmax_in_place(row);
        }
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
            probs,
        };
        Ok(self.push(op, Tensor::scalar(loss), &[logits]))
    }

    /// Reverse-mode sweep from a scalar `loss`. Every parameter leaf gets
    /// an entry, zero-filled when no path reaches it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(node, &g, &mut grads);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_param && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            } else if !node.is_param {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let sa = av.shape();
                let (batch, m, k) = match sa {
                    [m, k] => (1, *m, *k),
                    [b, m, k] => (*b, *m, *k),
                    _ => unreachable!(),
                };
                let n = *bv.shape().last().unwrap();
                if self.wants(*a) {
                    let ga = grad_slot(grads, *a, sa);
                    for i in 0..batch {
                        // dA = dC · Bᵀ
                        gemm(
                            m,
                            n,
                            k,
                            &gd[i * m * n..],
                            false,
                            &bv.data()[i * k * n..],
                            true,
                            1.0,
                            &mut ga.data_mut()[i * m * k..],
                        );
                    }
                }
                if self.wants(*b) {
                    let gb = grad_slot(grads, *b, bv.shape());
                    for i in 0..batch {
                        // dB = Aᵀ · dC
                        gemm(
                            k,
                            m,
                            n,
                            &av.data()[i * m * k..],
                            true,
                            &gd[i * m * n..],
                            false,
                            1.0,
                            &mut gb.data_mut()[i * k * n..],
                        );
                    }
                }
            }
            Op::Add(a, b, ma, mb) => {
                self.reduce_into(grads, *a, ma, gd, |g, _| g);
                self.reduce_into(grads, *b, mb, gd, |g, _| g);
            }
            Op::Sub(a, b, ma, mb) => {
                self.reduce_into(grads, *a, ma, gd, |g, _| g);
                self.reduce_into(grads, *b, mb, gd, |g, _| -g);
            }
            Op::Mul(a, b, ma, mb) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.reduce_scaled(grads, *a, ma, gd, bv, mb);
                self.reduce_scaled(grads, *b, mb, gd, av, ma);
            }
            Op::Scale(a, f) => {
                let ga = grad_slot(grads, *a, g.shape());
                for (x, gi) in ga.data_mut().iter_mut().zip(gd) {
                    *x += gi * f;
                }
            }
            Op::Sigmoid(a) => self.unary_back(grads, *a, gd, &node.value, |y| y * (1.0 - y)),
            Op::Tanh(a) => self.unary_back(grads, *a, gd, &node.value, |y| 1.0 - y * y),
            Op::Elu(a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let ga = grad_slot(grads, *a, g.shape());
                for (i, dst) in ga.data_mut().iter_mut().enumerate() {
                    let d = if x[i] > 0.0 { 1.0 } else { y[i] + 1.0 };
                    *dst += gd[i] * d;
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = *g.shape().last().unwrap_or(&1);
                let ga = grad_slot(grads, *a, g.shape());
                for ((dst, yr), gr) in ga
                    .data_mut()
                    .chunks_mut(cols)
                    .zip(y.chunks(cols))
                    .zip(gd.chunks(cols))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        dst[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(g.shape(), *axis);
                let mut offset = 0;
                for &id in inputs {
                    let s = self.shape(id).to_vec();
                    let len = s[*axis];
                    if self.wants(id) {
                        let gi = grad_slot(grads, id, &s);
                        let block = len * inner;
                        for o in 0..outer {
                            let src = &gd[o * total * inner + offset * inner..][..block];
                            for (d, v) in gi.data_mut()[o * block..(o + 1) * block].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { input, axis, start } => {
                let s = self.shape(*input).to_vec();
                let (outer, mid, inner) = split_axis(&s, *axis);
                let len = g.shape()[*axis];
                let gi = grad_slot(grads, *input, &s);
                for o in 0..outer {
                    let dst = &mut gi.data_mut()[o * mid * inner + start * inner..][..len * inner];
                    for (d, v) in dst.iter_mut().zip(&gd[o * len * inner..(o + 1) * len * inner]) {
                        *d += v;
                    }
                }
            }
            Op::Sum { input, axis } => {
                let s = self.shape(*input).to_vec();
                let (outer, mid, inner) = split_axis(&s, *axis);
                let gi = grad_slot(grads, *input, &s);
                for o in 0..outer {
                    let src = &gd[o * inner..(o + 1) * inner];
                    for m in 0..mid {
                        let dst = &mut gi.data_mut()[(o * mid + m) * inner..][..inner];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                let s = self.shape(*a).to_vec();
                let ga = grad_slot(grads, *a, &s);
                for d in ga.data_mut() {
                    *d += gd[0];
                }
            }
            Op::Dropout { input, mask } => {
                let ga = grad_slot(grads, *input, g.shape());
                for ((d, v), m) in ga.data_mut().iter_mut().zip(gd).zip(mask) {
                    *d += v * m;
                }
            }
            Op::LayerNorm { input, inv_std } => {
                let y = node.value.data();
                let cols = *g.shape().last().unwrap_or(&1);
                let nf = cols as f64;
                let ga = grad_slot(grads, *input, g.shape());
                for (r, ((dst, yr), gr)) in ga
                    .data_mut()
                    .chunks_mut(cols)
                    .zip(y.chunks(cols))
                    .zip(gd.chunks(cols))
                    .enumerate()
                {
                    let mean_g = gr.iter().sum::<f64>() / nf;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for j in 0..cols {
                        dst[j] += inv_std[r] * (gr[j] - mean_g - yr[j] * mean_gy);
                    }
                }
            }
            Op::Reshape(a) => {
                let s = self.shape(*a).to_vec();
                let ga = grad_slot(grads, *a, &s);
                for (d, v) in ga.data_mut().iter_mut().zip(gd) {
                    *d += v;
                }
            }
            Op::Permute { input, map } => {
                let s = self.shape(*input).to_vec();
                let gi = grad_slot(grads, *input, &s);
                let dst = gi.data_mut();
                for (i, &src) in map.iter().enumerate() {
                    dst[src] += gd[i];
                }
            }
            Op::CrossEntropy { logits, targets, weights, probs } => {
                let s = self.shape(*logits).to_vec();
                let k = s[1];
                let gl = grad_slot(grads, *logits, &s);
                let scale = gd[0];
                for (i, row) in gl.data_mut().chunks_mut(k).enumerate() {
                    let w = weights[i] * scale;
                    for j in 0..k {
                        let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                        row[j] += w * (probs[i * k + j] - onehot);
                    }
                }
            }
        }
    }

    fn unary_back(
        &self,
        grads: &mut [Option<Tensor>],
        a: NodeId,
        gd: &[f64],
        out: &Tensor,
        deriv: impl Fn(f64) -> f64,
    ) {
        let ga = grad_slot(grads, a, out.shape());
        for ((d, v), y) in ga.data_mut().iter_mut().zip(gd).zip(out.data()) {
            *d += v * deriv(*y);
        }
    }

    fn reduce_into(
        &self,
        grads: &mut [Option<Tensor>],
        id: NodeId,
        map: &Bcast,
        gd: &[f64],
        f: impl Fn(f64, usize) -> f64,
    ) {
        if !self.wants(id) {
            return;
        }
        let s = self.shape(id).to_vec();
        let dst = grad_slot(grads, id, &s).data_mut();
        match map {
            Bcast::Same => {
                for (i, d) in dst.iter_mut().enumerate() {
                    *d += f(gd[i], i);
                }
            }
            _ => {
                for ((i, &v), j) in gd.iter().enumerate().zip(map.iter()) {
                    dst[j] += f(v, i);
                }
            }
        }
    }

    /// Accumulates `g ⊙ other` into the gradient of `id`, undoing both broadcasts.
    fn reduce_scaled(
        &self,
        grads: &mut [Option<Tensor>],
        id: NodeId,
        map: &Bcast,
        gd: &[f64],
        other: &[f64],
        other_map: &Bcast,
    ) {
        if !self.wants(id) {
            return;
        }
        let s = self.shape(id).to_vec();
        let dst = grad_slot(grads, id, &s).data_mut();
        if let (Bcast::Same, Bcast::Same) = (map, other_map) {
            for ((d, g), o) in dst.iter_mut().zip(gd).zip(other) {
                *d += g * o;
            }
            return;
        }
        for ((&g, i), j) in gd.iter().zip(map.iter()).zip(other_map.iter()) {
            dst[i] += g * other[j];
        }
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut Tensor {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
}

/// Flat source index for each output element given per-axis source strides.
fn broadcast_like_map(out_shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let total: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row, in place.
fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
