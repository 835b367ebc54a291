//! Multistart maximization of a convex, positively homogeneous function on
//! the Euclidean unit sphere.
//!
//! For such `f` and `g ∈ ∂f(u)` we have `f(u) = ⟨g, u⟩`, so the normalized
//! subgradient step `u ← g / |g|` never decreases `f`. Each start runs this
//! projected ascent to a fixed point; the best value over all starts and
//! random probes is reported. On a nonconvex landscape this is a certified
//! lower bound on the true maximum, not the maximum itself.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub starts: usize,
    pub probes: usize,
    pub max_steps: usize,
    pub rel_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            probes: 1000,
            max_steps: 200,
            rel_tol: 1e-12,
        }
    }
}

impl AscentOptions {
    /// Budget for Monte Carlo sweeps over many sections: few starts and a
    /// loose stopping rule.
    pub fn sweep() -> Self {
        Self {
            starts: 8,
            probes: 200,
            max_steps: 50,
            rel_tol: 1e-6,
        }
    }

    pub fn with_budget(starts: usize, probes: usize) -> Self {
        Self {
            starts,
            probes,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub value: f64,
    pub argmax: DVector<f64>,
    pub steps: usize,
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Maximizes `oracle` (value, subgradient) over the unit sphere of R^dim.
///
/// `probe` scores random directions cheaply; it must satisfy
/// `probe(u) ≤ max f` so that probe scores are themselves valid lower
/// bounds. When absent, probes call the oracle.
pub fn maximize_on_sphere<R, O>(
    dim: usize,
    rng: &mut R,
    opts: &AscentOptions,
    mut probe: Option<&mut dyn FnMut(&DVector<f64>) -> Result<f64>>,
    mut oracle: O,
) -> Result<AscentResult>
where
    R: Rng + ?Sized,
    O: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    if dim == 1 {
        let u = DVector::from_element(1, 1.0);
        let (v, _) = oracle(&u)?;
        return Ok(AscentResult {
            value: v,
            argmax: u,
            steps: 0,
        });
    }
    let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(opts.probes);
    for _ in 0..opts.probes {
        let u = random_unit(rng, dim);
        let s = match probe.as_mut() {
            Some(p) => p(&u)?,
            None => oracle(&u)?.0,
        };
        scored.push((s, u));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = AscentResult {
        value: f64::NEG_INFINITY,
        argmax: DVector::zeros(dim),
        steps: 0,
    };
    if let Some((s, u)) = scored.first() {
        best.value = *s;
        best.argmax = u.clone();
    }
    let mut starts: Vec<DVector<f64>> = scored.into_iter().take(opts.starts).map(|(_, u)| u).collect();
    while starts.len() < opts.starts {
        starts.push(random_unit(rng, dim));
    }
    for start in starts {
        let mut u = start;
        let (mut value, mut grad) = oracle(&u)?;
        let mut steps = 0;
        while steps < opts.max_steps {
            let gn = grad.norm();
            if gn == 0.0 {
                break;
            }
            let next = &grad / gn;
            let (nv, ng) = oracle(&next)?;
            steps += 1;
            if nv <= value * (1.0 + opts.rel_tol) {
                if nv > value {
                    value = nv;
                    u = next;
                }
                break;
            }
            value = nv;
            u = next;
            grad = ng;
        }
        if value > best.value {
            best = AscentResult {
                value,
                argmax: u,
                steps,
            };
        }
    }
    Ok(best)
}
