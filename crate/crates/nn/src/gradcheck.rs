//! Central finite-difference verification of graph gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric|` over checked elements, divided by the
    /// largest analytic gradient magnitude of the same input.
    pub max_rel_error: f64,
    /// Per-input maxima, in input order.
    pub per_input: Vec<f64>,
    pub checked: usize,
}

/// Checks the gradient of `⟨op(inputs), r⟩` for a random projection `r`.
///
/// `op` builds the operation on a fresh graph from the input leaves; it is
/// evaluated twice per perturbed element, so any internal state (such as
/// batch-norm statistics) must be created inside it. At most `max_per_input`
/// evenly spaced elements of each input are perturbed.
pub fn grad_check<F>(inputs: &[Tensor<f64>], op: F, seed: u64, max_per_input: usize) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = op(&mut g, &vars)?;
        Ok((g, vars, out))
    };

    let (mut g, vars, out) = run(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Tensor::from_fn(g.value(out).shape(), |_| rng.random_range(-1.0..1.0));
    g.backward_with(out, proj.clone())?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let objective = |values: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, out) = run(values)?;
        Ok(g.value(out).dot(&proj))
    };

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        let n = inputs[k].len();
        let stride = n.div_ceil(max_per_input.max(1)).max(1);
        let scale = grad.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let mut worst = 0.0f64;
        for i in (0..n).step_by(stride) {
            let x = inputs[k].data()[i];
            let h = 1e-5 * (1.0 + x.abs());
            work[k].data_mut()[i] = x + h;
            let plus = objective(&work)?;
            work[k].data_mut()[i] = x - h;
            let minus = objective(&work)?;
            work[k].data_mut()[i] = x;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max((grad.data()[i] - numeric).abs() / scale);
            checked += 1;
        }
        per_input.push(worst);
    }
    let max_rel_error = per_input.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, per_input, checked })
}
