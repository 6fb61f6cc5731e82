//! Log-domain Sinkhorn iterations.

use ndarray::Array2;

pub(crate) const MAX_ITERATIONS: usize = 10_000;
pub(crate) const MARGINAL_TOLERANCE: f64 = 1e-8;

pub(crate) struct SinkhornOutput {
    pub plan: Array2<f64>,
    /// L¹ distance between the row sums of `plan` and `a` (columns are exact
    /// after the last half-step).
    pub marginal_error: f64,
    pub iterations: usize,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn solve(a: &[f64], b: &[f64], cost: &Array2<f64>, eps: f64) -> SinkhornOutput {
    let (m, n) = cost.dim();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..m {
            f[i] = eps * log_a[i] - eps * log_sum_exp((0..n).map(|j| (g[j] - cost[[i, j]]) / eps));
        }
        for j in 0..n {
            g[j] = eps * log_b[j] - eps * log_sum_exp((0..m).map(|i| (f[i] - cost[[i, j]]) / eps));
        }
        err = (0..m)
            .map(|i| {
                let row: f64 = (0..n).map(|j| ((f[i] + g[j] - cost[[i, j]]) / eps).exp()).sum();
                (row - a[i]).abs()
            })
            .sum();
        if err <= MARGINAL_TOLERANCE {
            break;
        }
    }
    let plan = Array2::from_shape_fn((m, n), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp());
    SinkhornOutput { plan, marginal_error: err, iterations }
}
