//! Truncated Poincaré series `Σ_γ γ'(z) Φ(γz)` of a bounded integrand over a
//! Schottky group, with geometric tail estimates, automorphy residuals and a
//! Monte-Carlo integral test.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::moebius::{chordal, ComplexPoint, MoebiusError, MoebiusMap};
use crate::polylog::bloch_wigner;
use crate::psmeasure::{sphere_point, NayataniDensity, PsError, SINGULAR_DISTANCE};
use crate::schottky::{DeltaEstimate, GroupError, GroupKind, Letter, SchottkyGroup, DEFAULT_REDUCTION_STEPS};
use crate::sum::{CompensatedSum, ComplexSum};

/// Declared bound of the default integrand, `max |D|` rounded up.
pub const BLOCH_WIGNER_BOUND: f64 = 1.015;
/// Number of trailing shell ratios used for the tail extrapolation.
pub const RATIO_WINDOW: usize = 3;
/// Safety factor applied to the geometric tail.
pub const TAIL_SAFETY: f64 = 2.0;
/// Relative residual indistinguishable from double-precision rounding.
pub const ROUNDING_FLOOR: f64 = 256.0 * f64::EPSILON;
/// Largest fraction of singular hits tolerated by the Monte-Carlo test.
pub const MAX_SINGULAR_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("point {0} is numerically on the limit set")]
    OnLimitSet(ComplexPoint),
    #[error("integrand |{name}({point})| = {value} exceeds its declared bound {bound}")]
    BoundViolated { name: String, point: ComplexPoint, value: f64, bound: f64 },
    #[error("holomorphic weight undefined: {0}")]
    Weight(#[from] MoebiusError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Measure(#[from] PsError),
    #[error("{resamples} of {samples} samples hit the atom support; measure too coarse")]
    TooManySingular { resamples: usize, samples: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type Evaluator = dyn Fn(ComplexPoint) -> f64 + Send + Sync;

/// A real function on the sphere together with a global bound on `|f|`.
#[derive(Clone)]
pub struct SeriesIntegrand {
    name: String,
    bound: f64,
    f: Arc<Evaluator>,
}

impl fmt::Debug for SeriesIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeriesIntegrand").field("name", &self.name).field("bound", &self.bound).finish()
    }
}

impl SeriesIntegrand {
    pub fn new(name: impl Into<String>, bound: f64, f: impl Fn(ComplexPoint) -> f64 + Send + Sync + 'static) -> Self {
        SeriesIntegrand { name: name.into(), bound, f: Arc::new(f) }
    }

    pub fn bloch_wigner() -> Self {
        Self::new("D", BLOCH_WIGNER_BOUND, bloch_wigner)
    }

    pub fn zero() -> Self {
        Self::new("0", 0.0, |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), c.abs(), move |_| c)
    }

    /// `k · self`.
    pub fn scaled(&self, k: f64) -> Self {
        let f = Arc::clone(&self.f);
        Self::new(format!("{k}*{}", self.name), k.abs() * self.bound, move |z| k * f(z))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval(&self, z: ComplexPoint) -> f64 {
        (self.f)(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `γ'(z)`, complex.
    #[default]
    Holomorphic,
    /// Chordal stretch factor of `γ` at `z`, real.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Inconclusive,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesEvaluation {
    pub z: ComplexPoint,
    pub value: Complex64,
    /// Partial sum of each shell `|γ| = n`.
    pub shells: Vec<Complex64>,
    /// `Σ_{|γ| = n} |weight|`.
    pub weight_sums: Vec<f64>,
    pub ratios: Vec<f64>,
    pub tail_ratio: Option<f64>,
    pub tail_estimate: f64,
    pub weight_mode: WeightMode,
    pub verdict: Verdict,
    pub max_len: usize,
    pub tol: f64,
    /// `max_γ max(|γ'(z)| / s_γ(z), s_γ(z) / |γ'(z)|)` over the evaluated orbit.
    pub comparability: f64,
    pub terms: u64,
}

#[derive(Clone, Default)]
struct ShellAcc {
    shells: Vec<ComplexSum>,
    weights: Vec<CompensatedSum>,
    comparability: f64,
    violation: Option<(ComplexPoint, f64)>,
    error: Option<MoebiusError>,
}

fn check_in_domain(group: &SchottkyGroup, z: ComplexPoint) -> Result<(), SeriesError> {
    match group.kind() {
        GroupKind::Classical if group.rank() > 0 => match group.reduce_to_fundamental_domain(z, DEFAULT_REDUCTION_STEPS) {
            Ok(_) => Ok(()),
            Err(GroupError::NearLimitSet(_)) => Err(SeriesError::OnLimitSet(z)),
            Err(e) => Err(e.into()),
        },
        _ => {
            for g in group.generators() {
                let fp = g.fixed_points_multiplier()?;
                if chordal(z, fp.attracting) < 1e-9 || chordal(z, fp.repelling) < 1e-9 {
                    return Err(SeriesError::OnLimitSet(z));
                }
            }
            Ok(())
        }
    }
}

/// `D_Γ(z) = Σ_{|γ| <= max_len} weight_γ(z) Φ(γz)`, shell by shell.
pub fn evaluate(
    group: &SchottkyGroup,
    integrand: &SeriesIntegrand,
    z: ComplexPoint,
    mode: WeightMode,
    max_len: usize,
    tol: f64,
    exec: Exec,
) -> Result<SeriesEvaluation, SeriesError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SeriesError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    check_in_domain(group, z)?;
    if mode == WeightMode::Holomorphic && z.is_infinite() {
        return Err(MoebiusError::AtInfinity.into());
    }
    let n = max_len + 1;
    let bound = integrand.bound;
    let mut acc = group.fold_words(
        max_len,
        exec,
        || ShellAcc {
            shells: vec![ComplexSum::new(); n],
            weights: vec![CompensatedSum::new(); n],
            comparability: 1.0,
            ..Default::default()
        },
        |acc: &mut ShellAcc, letters, map| {
            let gz = map.apply(z);
            let phi = integrand.eval(gz);
            if phi.abs() > bound * (1.0 + 1e-12) && acc.violation.is_none() {
                acc.violation = Some((gz, phi));
            }
            let s = map.spherical_derivative(z);
            let w = match mode {
                WeightMode::Absolute => Complex64::new(s, 0.0),
                WeightMode::Holomorphic => match map.derivative(z) {
                    Ok(d) => d,
                    Err(e) => {
                        acc.error.get_or_insert(e);
                        return;
                    }
                },
            };
            if mode == WeightMode::Holomorphic && s > 0.0 {
                let r = w.norm() / s;
                acc.comparability = acc.comparability.max(r).max(1.0 / r);
            }
            acc.shells[letters.len()].add(w * phi);
            acc.weights[letters.len()].add(w.norm());
        },
        |acc, part| {
            for (a, b) in acc.shells.iter_mut().zip(&part.shells) {
                a.merge(b);
            }
            for (a, b) in acc.weights.iter_mut().zip(&part.weights) {
                a.merge(b);
            }
            acc.comparability = acc.comparability.max(part.comparability);
            if acc.violation.is_none() {
                acc.violation = part.violation;
            }
            if acc.error.is_none() {
                acc.error = part.error;
            }
        },
    );
    if let Some(e) = acc.error {
        return Err(e.into());
    }
    if let Some((point, value)) = acc.violation {
        return Err(SeriesError::BoundViolated { name: integrand.name.clone(), point, value, bound });
    }
    if mode == WeightMode::Absolute {
        // comparability is a property of the orbit, not of the weight mode
        let mut c: f64 = 1.0;
        if !z.is_infinite() {
            for w in group.enumerate(max_len.min(6)) {
                let r = (1.0 + w.map().apply(z).finite().map_or(f64::INFINITY, |p| p.norm_sqr()))
                    / (1.0 + z.finite().map_or(0.0, |p| p.norm_sqr()));
                c = c.max(r).max(1.0 / r);
            }
        }
        acc.comparability = c;
    }
    let shells: Vec<Complex64> = acc.shells.iter().map(|s| s.value()).collect();
    let weight_sums: Vec<f64> = acc.weights.iter().map(|s| s.value()).collect();
    let mut total = ComplexSum::new();
    for s in &shells {
        total.add(*s);
    }
    let ratios: Vec<f64> = weight_sums.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    let (tail_ratio, tail_estimate, verdict) = tail(&weight_sums, &ratios, bound, tol);
    let terms = (0..=max_len).map(|k| group.shell_size(k)).sum();
    Ok(SeriesEvaluation {
        z,
        value: total.value(),
        shells,
        weight_sums,
        ratios,
        tail_ratio,
        tail_estimate,
        weight_mode: mode,
        verdict,
        max_len,
        tol,
        comparability: acc.comparability,
        terms,
    })
}

fn tail(weight_sums: &[f64], ratios: &[f64], bound: f64, tol: f64) -> (Option<f64>, f64, Verdict) {
    let last = *weight_sums.last().expect("identity shell");
    if weight_sums.len() == 1 || last == 0.0 || bound == 0.0 {
        // nothing beyond the computed shells can contribute
        let exhausted = weight_sums.len() == 1 || last == 0.0;
        if exhausted || bound == 0.0 {
            return (None, 0.0, Verdict::Converged);
        }
    }
    if ratios.len() < RATIO_WINDOW {
        return (None, f64::INFINITY, Verdict::Inconclusive);
    }
    let r = ratios[ratios.len() - RATIO_WINDOW..].iter().copied().fold(0.0, f64::max);
    if !(r < 1.0) {
        return (Some(r), f64::INFINITY, Verdict::Diverging);
    }
    let t = TAIL_SAFETY * bound * last * r / (1.0 - r);
    let verdict = if t <= tol { Verdict::Converged } else { Verdict::Inconclusive };
    (Some(r), t, verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutomorphySample {
    pub z: ComplexPoint,
    pub value: Complex64,
    pub translated: Complex64,
    pub residual: f64,
    /// `(2 tail + 1e-9) / (|value| + tol)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutomorphyReport {
    pub word: Vec<Letter>,
    pub residual: f64,
    pub samples: Vec<AutomorphySample>,
    pub max_len: usize,
}

/// `max_z |g'(z) D_Γ(gz) − D_Γ(z)| / (|D_Γ(z)| + tol)`, both series
/// truncated at `max_len`.
#[allow(clippy::too_many_arguments)]
pub fn automorphy_residual(
    group: &SchottkyGroup,
    integrand: &SeriesIntegrand,
    samples: &[ComplexPoint],
    g: &[Letter],
    mode: WeightMode,
    max_len: usize,
    tol: f64,
    exec: Exec,
) -> Result<AutomorphyReport, SeriesError> {
    let word = group.word(g)?;
    let gmap: &MoebiusMap = word.map();
    let mut out = Vec::with_capacity(samples.len());
    for &z in samples {
        let base = evaluate(group, integrand, z, mode, max_len, tol, exec)?;
        let gz = gmap.apply(z);
        let moved = evaluate(group, integrand, gz, mode, max_len, tol, exec)?;
        let w = match mode {
            WeightMode::Absolute => Complex64::new(gmap.spherical_derivative(z), 0.0),
            WeightMode::Holomorphic => gmap.derivative(z)?,
        };
        let translated = w * moved.value;
        let denom = base.value.norm() + tol;
        out.push(AutomorphySample {
            z,
            value: base.value,
            translated,
            residual: (translated - base.value).norm() / denom,
            bound: (2.0 * base.tail_estimate + 1e-9) / denom,
        });
    }
    let residual = out.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(AutomorphyReport { word: g.to_vec(), residual, samples: out, max_len })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BersEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub resamples: usize,
    pub exponent: f64,
    /// Share of the total in each decile of the sorted integrand values,
    /// lowest first.
    pub decile_shares: Vec<f64>,
    pub top_decile_share: f64,
    /// Hill estimate of the upper tail index of the integrand values.
    pub tail_index: f64,
    /// Tail index below 1: the sample mean has no finite expectation.
    pub heavy_tail: bool,
}

/// Monte-Carlo estimate of `∫_{S²} F(ζ)^{exponent} |Φ(ζ)| dA` with uniform
/// sphere samples; `exponent` defaults to `2/δ`.
pub fn bers_integral(
    density: &NayataniDensity,
    integrand: &SeriesIntegrand,
    n_samples: usize,
    seed: u64,
    exponent: Option<f64>,
    exec: Exec,
) -> Result<BersEstimate, SeriesError> {
    if n_samples < 1000 {
        return Err(SeriesError::InvalidParameter(format!("need at least 1000 samples, got {n_samples}")));
    }
    let exponent = exponent.unwrap_or(2.0 / density.delta());
    if !exponent.is_finite() {
        return Err(SeriesError::InvalidParameter("exponent 2/δ is infinite for δ = 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<ComplexPoint> = (0..n_samples).map(|_| sphere_point(rng.gen(), rng.gen())).collect();
    let eval = |x: &ComplexPoint| -> Option<f64> {
        let phi = integrand.eval(*x).abs();
        if phi == 0.0 {
            return Some(0.0);
        }
        match density.f(*x) {
            Ok(f) => Some(f.powf(exponent) * phi),
            Err(_) => None,
        }
    };
    let mut values: Vec<Option<f64>> = if exec.threads <= 1 {
        points.iter().map(eval).collect()
    } else {
        use rayon::prelude::*;
        exec.install(|| points.par_iter().map(eval).collect())
    };
    let mut resamples = 0usize;
    for v in values.iter_mut() {
        while v.is_none() {
            resamples += 1;
            if resamples as f64 > MAX_SINGULAR_FRACTION * n_samples as f64 {
                return Err(SeriesError::TooManySingular { resamples, samples: n_samples });
            }
            let x = sphere_point(rng.gen(), rng.gen());
            if density.nearest_atom_distance(x) > SINGULAR_DISTANCE {
                *v = eval(&x);
            }
        }
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.expect("resampled")).collect();
    let area = 4.0 * std::f64::consts::PI;
    let n = values.len() as f64;
    let sum: CompensatedSum = values.iter().copied().collect();
    let mean = sum.value() / n;
    let var: CompensatedSum = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let stderr = area * (var.value() / (n - 1.0)).sqrt() / n.sqrt();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let total = sum.value();
    let decile_shares: Vec<f64> = (0..10)
        .map(|k| {
            let lo = k * sorted.len() / 10;
            let hi = (k + 1) * sorted.len() / 10;
            let s: CompensatedSum = sorted[lo..hi].iter().copied().collect();
            if total > 0.0 { s.value() / total } else { 0.0 }
        })
        .collect();
    let tail_index = hill_index(&sorted);
    Ok(BersEstimate {
        estimate: area * mean,
        stderr,
        samples: values.len(),
        resamples,
        exponent,
        top_decile_share: decile_shares[9],
        decile_shares,
        heavy_tail: tail_index < 1.0,
        tail_index,
    })
}

/// Hill estimator over the top 1% (at least 10) of ascending `sorted`.
fn hill_index(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let k = (n / 100).max(10).min(n.saturating_sub(1));
    let threshold = sorted[n - k - 1];
    if k == 0 || threshold <= 0.0 {
        return f64::INFINITY;
    }
    let s: f64 = sorted[n - k..].iter().map(|x| (x / threshold).ln()).sum();
    if s <= 0.0 { f64::INFINITY } else { k as f64 / s }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub exponent: f64,
    /// `P_n(s)` at the evaluation point.
    pub shells: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub z: ComplexPoint,
    pub delta: f64,
    pub bracket: (f64, f64),
    pub ratio_tolerance: f64,
    pub rows: Vec<ReportRow>,
}

/// Shell sums of the spherical weight at `z` for `s = δ̂, (1 + δ̂)/2, 1`.
pub fn convergence_report(
    group: &SchottkyGroup,
    z: ComplexPoint,
    max_len: usize,
    estimate: &DeltaEstimate,
    exec: Exec,
) -> Result<ConvergenceReport, SeriesError> {
    check_in_domain(group, z)?;
    let delta = estimate.delta;
    let rows = [delta, 0.5 * (1.0 + delta), 1.0]
        .iter()
        .map(|&s| {
            let shells = group.shell_sums(s, max_len, z, exec);
            let ratios = shells.windows(2).map(|w| w[1] / w[0]).collect();
            ReportRow { exponent: s, shells, ratios }
        })
        .collect();
    Ok(ConvergenceReport {
        z,
        delta,
        bracket: estimate.bracket,
        ratio_tolerance: estimate.ratio_tolerance,
        rows,
    })
}
