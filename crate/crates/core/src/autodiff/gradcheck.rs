use super::{AutodiffError, Graph, NodeId, Tensor};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |numeric|)` over all scalars checked.
    pub max_rel_error: f64,
    /// (parameter block, flat element) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub n_checked: usize,
}

/// Checks the gradient of the scalar built by `f` against central
/// differences with step `eps`, perturbing every element of every block
/// in `params`.
pub fn grad_check<F>(params: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, AutodiffError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(AutodiffError::InvalidArgument {
            op: "grad_check",
            msg: format!("step {eps} outside (0, 1e-2]"),
        });
    }

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &ids)?;
    if !g.value(loss).item().is_finite() {
        return Err(AutodiffError::NonFinite { block: 0, index: 0 });
    }
    let grads = g.backward(loss)?;

    let eval = |ps: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &ids)?;
        Ok(g.value(out).item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        n_checked: 0,
    };
    for (b, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("parameter gradient").data().to_vec();
        for j in 0..work[b].len() {
            let orig = work[b].data()[j];
            work[b].data_mut()[j] = orig + eps;
            let fp = eval(&work)?;
            work[b].data_mut()[j] = orig - eps;
            let fm = eval(&work)?;
            work[b].data_mut()[j] = orig;
            if !(fp.is_finite() && fm.is_finite()) {
                return Err(AutodiffError::NonFinite { block: b, index: j });
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let rel = (analytic[j] - numeric).abs() / numeric.abs().max(1.0);
            if !rel.is_finite() {
                return Err(AutodiffError::NonFinite { block: b, index: j });
            }
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((b, j));
            }
            report.n_checked += 1;
        }
    }
    Ok(report)
}
