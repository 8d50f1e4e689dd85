//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mat::Mat;

use super::{ParameterStore, Result};

/// Coordinates checked per call; larger stores are subsampled
/// deterministically.
pub const MAX_CHECKED_COORDS: usize = 500;

#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    pub step: f64,
    /// Max relative error per parameter tensor.
    pub per_param: BTreeMap<String, f64>,
    pub coords: Vec<CoordCheck>,
}

impl GradientReport {
    pub fn max_rel_error(&self) -> f64 {
        self.coords.iter().fold(0.0, |acc, c| acc.max(c.rel_error))
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_error.partial_cmp(&b.rel_error).unwrap())
    }

    pub fn failures(&self, tol: f64) -> Vec<&CoordCheck> {
        self.coords.iter().filter(|c| c.rel_error > tol).collect()
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compares `analytic` against central differences of `value_fn`.
pub fn gradient_check_against<F>(
    value_fn: F,
    analytic: &BTreeMap<String, Mat>,
    params: &ParameterStore,
    step: f64,
    seed: u64,
) -> Result<GradientReport>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");

    // Enumerate coordinates in deterministic (sorted) parameter order.
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, value) in params.iter() {
        if analytic.contains_key(name) {
            for i in 0..value.len() {
                coords.push((name.clone(), i));
            }
        }
    }
    if coords.len() > MAX_CHECKED_COORDS {
        // Partial Fisher-Yates under a fixed seed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = coords.len();
        for i in 0..MAX_CHECKED_COORDS {
            let j = rng.gen_range(i..len);
            coords.swap(i, j);
        }
        coords.truncate(MAX_CHECKED_COORDS);
    }

    let mut work = params.clone();
    let mut checks = Vec::with_capacity(coords.len());
    for (name, idx) in coords {
        let orig = params.get(&name)?.data()[idx];
        work.get_mut(&name)?.data_mut()[idx] = orig + step;
        let fp = value_fn(&work)?;
        work.get_mut(&name)?.data_mut()[idx] = orig - step;
        let fm = value_fn(&work)?;
        work.get_mut(&name)?.data_mut()[idx] = orig;

        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[&name].data()[idx];
        checks.push(CoordCheck {
            param: name,
            index: idx,
            analytic: a,
            numeric,
            rel_error: rel_error(a, numeric),
        });
    }

    let mut per_param: BTreeMap<String, f64> = BTreeMap::new();
    for c in &checks {
        let slot = per_param.entry(c.param.clone()).or_insert(0.0);
        *slot = slot.max(c.rel_error);
    }
    Ok(GradientReport {
        step,
        per_param,
        coords: checks,
    })
}

/// Computes the analytic gradient once via `grad_fn`, then verifies it
/// against central differences of `value_fn`.
pub fn gradient_check<F, G>(
    value_fn: F,
    grad_fn: G,
    params: &ParameterStore,
    step: f64,
    seed: u64,
) -> Result<GradientReport>
where
    F: Fn(&ParameterStore) -> Result<f64>,
    G: Fn(&ParameterStore) -> Result<BTreeMap<String, Mat>>,
{
    let analytic = grad_fn(params)?;
    gradient_check_against(value_fn, &analytic, params, step, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    fn quadratic_value(params: &ParameterStore) -> Result<f64> {
        let mut tape = Tape::new();
        let w = tape.var(params.get("w")?.clone())?;
        let loss = tape.sum_squares(w)?;
        Ok(tape.scalar(loss))
    }

    fn quadratic_grad(params: &ParameterStore) -> Result<BTreeMap<String, Mat>> {
        let mut tape = Tape::new();
        let w = tape.var(params.get("w")?.clone())?;
        let loss = tape.sum_squares(w)?;
        let grads = tape.backward(loss)?;
        let mut out = BTreeMap::new();
        out.insert("w".to_string(), grads.require(w).clone());
        Ok(out)
    }

    #[test]
    fn quadratic_loss_is_exact_up_to_roundoff() {
        let mut params = ParameterStore::new();
        params.insert("w", Mat::from_vec(1, 4, vec![0.3, -1.2, 0.0, 2.4]));
        let report =
            gradient_check(quadratic_value, quadratic_grad, &params, 1e-5, 0).unwrap();
        assert!(report.max_rel_error() <= 1e-7, "{}", report.max_rel_error());
    }

    #[test]
    fn corrupted_coordinate_is_flagged() {
        let mut params = ParameterStore::new();
        params.insert("w", Mat::from_vec(1, 3, vec![0.5, -0.5, 1.0]));
        let mut bad = quadratic_grad(&params).unwrap();
        bad.get_mut("w").unwrap().data_mut()[1] += 1.0;
        let report =
            gradient_check_against(quadratic_value, &bad, &params, 1e-5, 0).unwrap();
        let failures = report.failures(1e-4);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].param, "w");
        assert_eq!(failures[0].index, 1);
    }

    #[test]
    fn subsampling_is_deterministic() {
        let mut params = ParameterStore::new();
        params.insert("w", Mat::zeros(30, 30));
        let a = gradient_check(quadratic_value, quadratic_grad, &params, 1e-5, 7).unwrap();
        let b = gradient_check(quadratic_value, quadratic_grad, &params, 1e-5, 7).unwrap();
        assert_eq!(a.coords.len(), MAX_CHECKED_COORDS);
        let ka: Vec<_> = a.coords.iter().map(|c| (c.param.clone(), c.index)).collect();
        let kb: Vec<_> = b.coords.iter().map(|c| (c.param.clone(), c.index)).collect();
        assert_eq!(ka, kb);
    }
}
