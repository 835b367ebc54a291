//! The α-regular position by damped fixed-point iteration, and random
//! Gelfand numbers of bodies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::{ConvexBody, Family};
use crate::error::{GeomError, Result};
use crate::gaussian::{GaussianSample, Symmetrization};
use crate::interpolation::{interpolate, theta_of_alpha, InterpolationPair};
use crate::map::PositionMap;
use crate::positions::{balance_scale, ell2_at, solve_ell_position, EllPositionOptions, Structure};
use crate::random::substream;
use crate::sphere::AscentOptions;
use crate::subspaces::{haar_grassmannian, SectionBody, Subspace};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    /// Weight of the new iterate in the log-space average.
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
    pub symmetrization: Symmetrization,
    pub solver_tol: f64,
    /// Diagonal of the starting map; identity when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            beta: 0.5,
            tol: 1e-5,
            max_iter: 200,
            samples: 20_000,
            seed: 0,
            stream: 0,
            symmetrization: Symmetrization::CyclicShifts,
            solver_tol: 1e-6,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    /// Diagonal SPD `T` with `det T = 1`.
    pub map: PositionMap,
    pub alpha: f64,
    pub theta: f64,
    /// `‖log T − log F(T)‖_∞` at the returned map.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// Balance scale `a`.
    pub scale: f64,
    /// `a·T(K)`.
    pub body: ConvexBody,
}

fn check_tractable(k: &ConvexBody) -> Result<()> {
    if k.weighted_lp_form().is_none() {
        return Err(GeomError::NotTractable(
            "the regular position needs a weighted ℓp ball or a diagonal ellipsoid".into(),
        ));
    }
    Ok(())
}

fn diagonal_of(t: &PositionMap) -> Result<Vec<f64>> {
    let d = t
        .diagonal_entries()
        .ok_or_else(|| GeomError::InvalidParameter("map must be diagonal".into()))?;
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(GeomError::InvalidParameter("map must be positive definite".into()));
    }
    Ok(d)
}

/// `D(K)` for diagonal `D`, kept in closed form.
pub fn diagonal_image(k: &ConvexBody, d: &[f64]) -> Result<ConvexBody> {
    check_tractable(k)?;
    let (p, w) = k.weighted_lp_form().expect("checked");
    if d.len() != w.len() {
        return Err(GeomError::DimensionMismatch {
            expected: w.len(),
            got: d.len(),
        });
    }
    let scales: Vec<f64> = w.iter().zip(d).map(|(w, t)| w / t).collect();
    if matches!(k.family(), Family::Ellipsoid { .. }) {
        let v: Vec<f64> = scales.iter().map(|s| s * s).collect();
        ConvexBody::diagonal_ellipsoid(&v)
    } else {
        ConvexBody::weighted_lp_from_scales(p, &scales)
    }
}

fn position_opts(tol: f64, start: Option<PositionMap>) -> EllPositionOptions {
    EllPositionOptions {
        tol,
        max_iter: 500,
        structure: Structure::Diagonal,
        start,
        compute_product: false,
    }
}

/// `F(T)`: the ℓ-position of `[K, T⁻¹B₂]_θ`.
pub fn fixed_point_map(
    k: &ConvexBody,
    t: &PositionMap,
    theta: f64,
    sample: &GaussianSample,
    warm: Option<&PositionMap>,
) -> Result<PositionMap> {
    check_tractable(k)?;
    if !k.symmetries().sign_flips {
        return Err(GeomError::HypothesisViolated("body must be unconditional".into()));
    }
    let d = diagonal_of(t)?;
    let v: Vec<f64> = d.iter().map(|x| x * x).collect();
    let ellipsoid = ConvexBody::diagonal_ellipsoid(&v)?;
    let kt = interpolate(&InterpolationPair::new(k.clone(), ellipsoid, theta)?)?;
    let res = solve_ell_position(&kt, sample, &position_opts(1e-6, warm.cloned()))?;
    if !res.converged {
        return Err(GeomError::SolverNonConvergence { residual: res.residual });
    }
    Ok(res.map)
}

fn log_diag(t: &PositionMap) -> Vec<f64> {
    t.diagonal_entries().expect("diagonal").iter().map(|v| v.ln()).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Damped iteration `log T ← (1−β) log T + β log F(T)`.
pub fn find_regular_position(k: &ConvexBody, alpha: f64, opts: &FixedPointOptions) -> Result<FixedPointResult> {
    check_tractable(k)?;
    let theta = theta_of_alpha(alpha)?;
    if !(opts.beta > 0.0 && opts.beta <= 1.0) {
        return Err(GeomError::InvalidParameter(format!("damping {} must lie in (0, 1]", opts.beta)));
    }
    let n = k.dim();
    let sample = GaussianSample::with_options(opts.seed, opts.stream, opts.samples, n, opts.symmetrization)?;
    let mut t = match &opts.start {
        Some(d) => PositionMap::diagonal(d)?.normalized()?,
        None => PositionMap::identity(n),
    };
    let mut warm: Option<PositionMap> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    while trace.len() < opts.max_iter {
        let f = fixed_point_map(k, &t, theta, &sample, warm.as_ref())?;
        let (lt, lf) = (log_diag(&t), log_diag(&f));
        residual = sup_diff(&lt, &lf);
        trace.push(residual);
        if residual <= opts.tol {
            converged = true;
            break;
        }
        let next: Vec<f64> = lt.iter().zip(&lf).map(|(a, b)| (1.0 - opts.beta) * a + opts.beta * b).collect();
        t = PositionMap::from_log_diagonal(&next)?.normalized()?;
        warm = Some(f);
    }
    let d = diagonal_of(&t)?;
    let positioned = diagonal_image(k, &d)?;
    let scale = balance_scale(&positioned, theta, &sample)?;
    let ad: Vec<f64> = d.iter().map(|v| v * scale).collect();
    let body = diagonal_image(k, &ad)?;
    Ok(FixedPointResult {
        map: t,
        alpha,
        theta,
        residual,
        iterations: trace.len(),
        converged,
        trace,
        scale,
        body,
    })
}

/// Local check that `[T(K), B₂]_θ` is in ℓ-position on the sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionCertificate {
    /// `‖log P‖_∞` for the ℓ-position `P` of the interpolant.
    pub identity_deviation: f64,
    pub solver_residual: f64,
    /// Smallest ratio of perturbed to unperturbed `ℓ₂` (≥ 1 when locally
    /// optimal).
    pub min_perturbation_ratio: f64,
    pub perturbations: usize,
}

pub fn position_certificate<R: Rng + ?Sized>(
    k: &ConvexBody,
    t: &PositionMap,
    theta: f64,
    sample: &GaussianSample,
    perturbations: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<PositionCertificate> {
    let kt = interpolate(&InterpolationPair::new(
        diagonal_image(k, &diagonal_of(t)?)?,
        ConvexBody::euclidean_ball(k.dim()),
        theta,
    )?)?;
    let res = solve_ell_position(&kt, sample, &position_opts(1e-6, None))?;
    let identity_deviation = log_diag(&res.map).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = k.dim();
    let base = ell2_at(&kt, &PositionMap::identity(n), sample)?;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..perturbations {
        let mut s: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        s.iter_mut().for_each(|v| *v -= mean);
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let s: Vec<f64> = s.iter().map(|v| v * epsilon / norm).collect();
        let p = PositionMap::from_log_diagonal(&s)?;
        min_ratio = min_ratio.min(ell2_at(&kt, &p, sample)? / base);
    }
    Ok(PositionCertificate {
        identity_deviation,
        solver_residual: res.residual,
        min_perturbation_ratio: min_ratio,
        perturbations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GelfandOptions {
    /// Constant `c` in the exceedance level `exp(−c k)`.
    pub c: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
    pub ascent: AscentOptions,
    pub bootstrap: usize,
}

impl Default for GelfandOptions {
    fn default() -> Self {
        Self {
            c: 0.5,
            samples: 1000,
            seed: 0,
            stream: 0,
            ascent: AscentOptions::sweep(),
            bootstrap: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GelfandEstimate {
    pub n: usize,
    pub k: usize,
    /// Exceedance probability actually used.
    pub level: f64,
    /// `exp(−c k)`.
    pub nominal_level: f64,
    pub clamped: bool,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Smallest sampled radius, an upper bound for `c_k`.
    pub min_radius: f64,
    pub samples: usize,
    /// All radii from closed forms; otherwise ascent lower bounds.
    pub exact: bool,
}

/// Out-radii `R(K ∩ F)` over Haar `F` of dimension `n − k + 1`.
pub fn section_radii(body: &ConvexBody, k: usize, opts: &GelfandOptions) -> Result<(Vec<f64>, bool)> {
    let n = body.dim();
    if k == 0 || k > n {
        return Err(GeomError::InvalidParameter(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    if k == 1 && body.radii().exact {
        return Ok((vec![body.out_radius(); opts.samples], true));
    }
    let base = opts.stream.wrapping_mul(1 << 40).wrapping_add((k as u64) << 24);
    let out: Vec<(f64, bool)> = (0..opts.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(opts.seed, base + i as u64);
            let f = if k == 1 {
                Subspace::full(n)
            } else {
                haar_grassmannian(&mut rng, n, n - k + 1)?
            };
            let r = SectionBody::section(body, &f)?.out_radius(&opts.ascent, &mut rng)?;
            Ok((r.value, r.exact))
        })
        .collect::<Result<_>>()?;
    let exact = out.iter().all(|v| v.1);
    Ok((out.into_iter().map(|v| v.0).collect(), exact))
}

fn upper_quantile(sorted: &[f64], level: f64) -> f64 {
    let m = sorted.len();
    let i = ((1.0 - level) * m as f64).ceil() as usize;
    sorted[i.clamp(1, m) - 1]
}

/// Radius exceeded by a Haar section with empirical probability at most
/// `max(exp(−c k), 10/samples)`, from given radii.
pub fn gelfand_from_radii(n: usize, k: usize, radii: &[f64], exact: bool, opts: &GelfandOptions) -> Result<GelfandEstimate> {
    let m = radii.len();
    if m < 100 {
        return Err(GeomError::InvalidParameter(format!("need at least 100 samples, got {m}")));
    }
    let nominal = (-opts.c * k as f64).exp();
    let floor = 10.0 / m as f64;
    let level = nominal.max(floor);
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let value = upper_quantile(&sorted, level);
    let mut rng = substream(opts.seed, u64::MAX - k as u64);
    let mut boot: Vec<f64> = (0..opts.bootstrap)
        .map(|_| {
            let mut s: Vec<f64> = (0..m).map(|_| sorted[rng.random_range(0..m)]).collect();
            s.sort_by(f64::total_cmp);
            upper_quantile(&s, level)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if boot.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let at = |q: f64| boot[((q * boot.len() as f64) as usize).min(boot.len() - 1)];
        (at(0.025), at(0.975))
    };
    Ok(GelfandEstimate {
        n,
        k,
        level,
        nominal_level: nominal,
        clamped: floor > nominal,
        value,
        ci_low,
        ci_high,
        min_radius: sorted[0],
        samples: m,
        exact,
    })
}

/// Random Gelfand number `cr_k(K)`.
pub fn random_gelfand(body: &ConvexBody, k: usize, opts: &GelfandOptions) -> Result<GelfandEstimate> {
    let (radii, exact) = section_radii(body, k, opts)?;
    gelfand_from_radii(body.dim(), k, &radii, exact, opts)
}

/// Smallest sampled section out-radius, an upper bound for `c_k(K)`.
pub fn gelfand_upper(body: &ConvexBody, k: usize, opts: &GelfandOptions) -> Result<f64> {
    let (radii, _) = section_radii(body, k, opts)?;
    Ok(radii.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Powers of two in `[1, n/2]`.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let mut out = vec![1];
    while out.last().unwrap() * 2 <= n / 2 {
        out.push(out.last().unwrap() * 2);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityRow {
    pub k: usize,
    pub body: GelfandEstimate,
    pub polar: GelfandEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n: usize,
    pub alpha: f64,
    pub c: f64,
    pub rows: Vec<RegularityRow>,
    /// Least-squares slope of `log cr_k` against `log(n/k)`.
    pub slope_body: f64,
    pub slope_polar: f64,
    /// `max_k k^α cr_k / n^α` over both bodies.
    pub p_bar_emp: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `cr_k` of `K̄` and `K̄°` over `k_grid` on common subspaces.
pub fn regularity_report(body: &ConvexBody, alpha: f64, k_grid: &[usize], opts: &GelfandOptions) -> Result<RegularityReport> {
    let n = body.dim();
    let polar = body.polar()?;
    let mut rows = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        rows.push(RegularityRow {
            k,
            body: random_gelfand(body, k, opts)?,
            polar: random_gelfand(&polar, k, opts)?,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (n as f64 / r.k as f64).ln()).collect();
    let yb: Vec<f64> = rows.iter().map(|r| r.body.value.ln()).collect();
    let yp: Vec<f64> = rows.iter().map(|r| r.polar.value.ln()).collect();
    let p_bar_emp = rows
        .iter()
        .flat_map(|r| [r.body.value, r.polar.value].map(|v| (r.k as f64 / n as f64).powf(alpha) * v))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RegularityReport {
        n,
        alpha,
        c: opts.c,
        rows,
        slope_body: fit_slope(&x, &yb),
        slope_polar: fit_slope(&x, &yp),
        p_bar_emp,
    })
}
