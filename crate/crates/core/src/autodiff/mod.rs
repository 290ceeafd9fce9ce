//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation as it runs. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns gradients for every node created with [`Graph::param`].
//!
//! ```
//! use serra_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![1.0, 2.0]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum_all(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("non-finite value while perturbing parameter block {block}, element {index}")]
    NonFinite { block: usize, index: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0; 3]));
        let s = g.softmax(x);
        for &v in g.value(s).data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(3));
        let a = Tensor::new(vec![3, 2], vec![1.0, -2.0, 3.5, 0.25, 7.0, 9.0]).unwrap();
        let an = g.constant(a.clone());
        let out = g.matmul(i, an).unwrap();
        assert_eq!(g.value(out), &a);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).item(), 0.5);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(w);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap().item(), 0.25);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarLoss(_))));
    }

    #[test]
    fn shape_mismatch_names_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"), "{err}");
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0]));
        let y = g.param(Tensor::vector(vec![5.0, 6.0]));
        let loss = g.sum_all(x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(y).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = g.dropout::<ChaCha8Rng>(x, 0.5, None).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_replays_with_seed() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let x = g.constant(Tensor::full(&[64], 1.0));
            let y = g.dropout(x, 0.3, Some(&mut rng)).unwrap();
            g.value(y).clone()
        };
        let a = run(11);
        assert_eq!(a, run(11));
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 1.0 / 0.7));
    }

    #[test]
    fn quadratic_form_grad_check() {
        let a = Tensor::new(vec![3, 3], vec![2.0, 0.5, 0.0, 0.5, 3.0, 1.0, 0.0, 1.0, 4.0]).unwrap();
        let x = Tensor::new(vec![3, 1], vec![0.3, -1.2, 2.0]).unwrap();
        let report = grad_check(&[x], 1e-5, |g, p| {
            let am = g.constant(a.clone());
            let ax = g.matmul(am, p[0])?;
            let xax = g.mul(p[0], ax)?;
            Ok(g.sum_all(xax))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let mut g = Graph::new();
        let p = g.param(x.clone());
        let c = g.constant(Tensor::scalar(4.0));
        let z = g.scale(p, 0.0);
        let s = g.sum_all(z);
        let loss = g.add(s, c).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(p).unwrap().data().iter().all(|&v| v == 0.0));
        let report = grad_check(&[x], 1e-5, |g, p| {
            let z = g.scale(p[0], 0.0);
            Ok(g.sum_all(z))
        })
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn grad_check_rejects_bad_step() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(&[x], 0.5, |g, p| Ok(g.sum_all(p[0]))).is_err());
    }

    fn tensor_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0f64..2.0, len)
    }

    /// A random weighting makes each primitive's loss sensitive to every output.
    fn weighted_sum(g: &mut Graph, y: NodeId, w: &[f64]) -> Result<NodeId, AutodiffError> {
        let shape = g.shape(y).to_vec();
        let wn = g.constant(Tensor::new(shape, w[..g.value(y).len()].to_vec())?);
        let p = g.mul(y, wn)?;
        Ok(g.sum_all(p))
    }

    type Prim = fn(&mut Graph, NodeId, NodeId) -> Result<NodeId, AutodiffError>;

    fn primitives() -> Vec<(&'static str, Prim)> {
        vec![
            ("matmul", |g, a, b| g.matmul(a, b)),
            ("add_bcast", |g, a, b| {
                let row = g.slice(b, 0, 0, 1)?;
                g.add(a, row)
            }),
            ("sub", |g, a, b| g.sub(a, b)),
            ("mul", |g, a, b| g.mul(a, b)),
            ("mul_col_bcast", |g, a, b| {
                let col = g.slice(b, 1, 1, 1)?;
                g.mul(a, col)
            }),
            ("sigmoid", |g, a, _| Ok(g.sigmoid(a))),
            ("tanh", |g, a, _| Ok(g.tanh(a))),
            ("elu", |g, a, _| Ok(g.elu(a))),
            ("softmax", |g, a, _| Ok(g.softmax(a))),
            ("layer_norm", |g, a, _| Ok(g.layer_norm(a))),
            ("concat", |g, a, b| g.concat(&[a, b], 1)),
            ("slice", |g, a, _| g.slice(a, 1, 1, 2)),
            ("mean_axis", |g, a, _| g.mean_axis(a, 0)),
            ("sum_axis", |g, a, _| g.sum_axis(a, 1)),
            ("transpose", |g, a, _| g.transpose(a)),
            ("reshape", |g, a, _| g.reshape(a, &[9])),
            ("cross_entropy", |g, a, _| g.cross_entropy(a, &[2, 0, 1], &[1.0, 0.5, 2.0])),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn softmax_is_a_simplex(xs in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let mut g = Graph::new();
            let x = g.constant(Tensor::vector(xs));
            let s = g.softmax(x);
            let v = g.value(s).data();
            prop_assert!(v.iter().all(|&p| p >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn primitive_gradients_match_central_differences(
            a in tensor_strategy(9),
            b in tensor_strategy(9),
            w in tensor_strategy(27),
        ) {
            let ta = Tensor::new(vec![3, 3], a).unwrap();
            let tb = Tensor::new(vec![3, 3], b).unwrap();
            for (name, prim) in primitives() {
                let report = grad_check(&[ta.clone(), tb.clone()], 1e-6, |g, p| {
                    let y = prim(g, p[0], p[1])?;
                    weighted_sum(g, y, &w)
                })
                .unwrap();
                // Central differences at this step are accurate to ~1e-9.
                prop_assert!(report.max_rel_error <= 1e-6, "{name}: {report:?}");
            }
        }

        #[test]
        fn batched_matmul_and_permute_gradients(
            a in tensor_strategy(12),
            b in tensor_strategy(12),
            w in tensor_strategy(18),
        ) {
            let ta = Tensor::new(vec![2, 2, 3], a).unwrap();
            let tb = Tensor::new(vec![2, 3, 2], b).unwrap();
            let report = grad_check(&[ta, tb], 1e-6, |g, p| {
                let c = g.matmul(p[0], p[1])?;
                let c = g.permute(c, &[2, 0, 1])?;
                weighted_sum(g, c, &w)
            })
            .unwrap();
            prop_assert!(report.max_rel_error <= 1e-6, "{report:?}");
        }
    }

    #[test]
    fn batched_matmul_matches_naive_loops() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (b, m, k, n) = (rng.random_range(1..4), rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..9));
            let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
            let (av, bv, wv) = (draw(b * m * k), draw(b * k * n), draw(b * m * n));
            let mut g = Graph::new();
            let a = g.param(Tensor::new(vec![b, m, k], av.clone()).unwrap());
            let bb = g.param(Tensor::new(vec![b, k, n], bv.clone()).unwrap());
            let c = g.matmul(a, bb).unwrap();
            let w = g.constant(Tensor::new(vec![b, m, n], wv.clone()).unwrap());
            let cw = g.mul(c, w).unwrap();
            let loss = g.sum_all(cw);
            let grads = g.backward(loss).unwrap();
            let (ga, gb) = (grads.get(a).unwrap().data(), grads.get(bb).unwrap().data());
            for p in 0..b {
                for i in 0..m {
                    for j in 0..n {
                        let v: f64 = (0..k).map(|t| av[p * m * k + i * k + t] * bv[p * k * n + t * n + j]).sum();
                        assert!((g.value(c).data()[p * m * n + i * n + j] - v).abs() <= 1e-12 * (1.0 + v.abs()));
                    }
                    for t in 0..k {
                        let v: f64 = (0..n).map(|j| wv[p * m * n + i * n + j] * bv[p * k * n + t * n + j]).sum();
                        assert!((ga[p * m * k + i * k + t] - v).abs() <= 1e-12 * (1.0 + v.abs()));
                    }
                }
                for t in 0..k {
                    for j in 0..n {
                        let v: f64 = (0..m).map(|i| av[p * m * k + i * k + t] * wv[p * m * n + i * n + j]).sum();
                        assert!((gb[p * k * n + t * n + j] - v).abs() <= 1e-12 * (1.0 + v.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn elu_negative_branch() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![-1.0, 2.0]));
        let y = g.elu(x);
        assert!(rel_err(g.value(y).data()[0], (-1.0f64).exp() - 1.0) < 1e-15);
        assert_eq!(g.value(y).data()[1], 2.0);
    }
}
