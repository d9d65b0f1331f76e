use super::{AutodiffError, Graph, ParamStore, Var};

/// Analytic vs central-difference gradient of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)`.
    pub rel_err: f64,
    pub max_abs_err: f64,
    pub diff_norm: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

/// Relative error of the concatenated gradient over all checked parameters.
/// Parameters whose true gradient vanishes (a conv bias feeding batch norm,
/// say) only contribute finite-difference noise here instead of a 0/0 ratio.
pub fn combined_rel_err(checks: &[GradCheck]) -> f64 {
    let d = checks.iter().map(|c| c.diff_norm.powi(2)).sum::<f64>().sqrt();
    let a = checks.iter().map(|c| c.analytic_norm.powi(2)).sum::<f64>().sqrt();
    let n = checks.iter().map(|c| c.numeric_norm.powi(2)).sum::<f64>().sqrt();
    let scale = a.max(n);
    if scale == 0.0 {
        0.0
    } else {
        d / scale
    }
}

/// Compares the backward pass of `loss_fn` against central finite differences
/// with step `h`, for every parameter in `store`.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, loss_fn: F) -> Result<Vec<GradCheck>, AutodiffError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, AutodiffError>,
{
    let eval = |store: &ParamStore| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, store)?;
        Ok(g.value(l).item())
    };
    store.zero_grads();
    {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, store)?;
        g.backward(l, store)?;
    }
    let ids: Vec<_> = store.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let analytic = store.get(id).grad.clone().unwrap_or_else(|| vec![0.0; store.get(id).value.len()]);
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel_err = if scale == 0.0 { 0.0 } else { diff / scale };
        let max_abs_err = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(GradCheck {
            name: store.get(id).name.clone(),
            rel_err,
            max_abs_err,
            diff_norm: diff,
            analytic_norm: na,
            numeric_norm: nn,
        });
    }
    store.zero_grads();
    Ok(out)
}
