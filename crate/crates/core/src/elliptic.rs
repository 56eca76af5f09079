//! Bloch's elliptic dilogarithm, the bilateral average
//! `D_q(x) = sum_{k in Z} D(q^k x)` of the Bloch–Wigner function over the
//! Tate curve `C* / q^Z`.

use num_complex::Complex64;
use thiserror::Error;

use crate::moebius::ComplexPoint;
use crate::polylog::{bloch_wigner, PolylogResult, BLOCH_WIGNER_MAX};
use crate::sum::CompensatedSum;

/// Largest admissible `|q|`.
pub const MAX_NOME: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EllipticError {
    #[error("|q| = {0} is outside the convergence regime 0 < |q| < 1 - 1e-12")]
    ConvergenceRegime(f64),
    #[error("x must be finite and non-zero")]
    SingularArgument,
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticParams {
    q: Complex64,
    x: Complex64,
    tol: f64,
}

impl EllipticParams {
    pub fn new(q: Complex64, x: ComplexPoint, tol: f64) -> Result<Self, EllipticError> {
        let r = q.norm();
        if !(r > 0.0 && r < MAX_NOME) {
            return Err(EllipticError::ConvergenceRegime(r));
        }
        let x = match x.finite() {
            Some(x) if x.norm() > 0.0 => x,
            _ => return Err(EllipticError::SingularArgument),
        };
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(EllipticError::InvalidTolerance(tol));
        }
        Ok(EllipticParams { q, x, tol })
    }

    pub fn q(&self) -> Complex64 {
        self.q
    }

    pub fn x(&self) -> Complex64 {
        self.x
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Per-term bound valid for `|w| <= 1/2`: `|D(w)| <= 2|w|(1 + |log|w||)`.
fn small_sum_from(rho: f64, t0: f64, k0: i64) -> f64 {
    // sum_{k >= k0} 2 t0 rho^k (1 - log t0 + k L),  L = -log rho
    let l = -rho.ln();
    let rk = rho.powf(k0 as f64);
    let s0 = rk / (1.0 - rho);
    let s1 = rk * (k0 as f64 - (k0 as f64 - 1.0) * rho) / ((1.0 - rho) * (1.0 - rho));
    2.0 * t0 * ((1.0 - t0.ln()) * s0 + l * s1)
}

/// Bound on `sum_{k > K} |D(w_k)|` with `|w_k| = t0 rho^k`.
fn one_sided_tail(rho: f64, t0: f64, k: u64) -> f64 {
    let l = -rho.ln();
    // first index with t0 rho^k <= 1/2
    let mut k0 = ((2.0 * t0).ln() / l).ceil().max(0.0) as i64;
    while k0 > 0 && t0 * rho.powf((k0 - 1) as f64) <= 0.5 {
        k0 -= 1;
    }
    while t0 * rho.powf(k0 as f64) > 0.5 {
        k0 += 1;
    }
    let first = k as i64 + 1;
    let large_terms = (k0 - first).max(0) as f64;
    BLOCH_WIGNER_MAX * large_terms + small_sum_from(rho, t0, k0.max(first))
}

/// Upper bound on `sum_{|k| > K} |D(q^k x)|`; non-increasing in `K` and
/// tending to zero.
pub fn elliptic_tail_bound(q: Complex64, x: Complex64, k: u64) -> f64 {
    let rho = q.norm();
    let t = x.norm();
    // k -> -inf uses D(w) = -D(1/w)
    one_sided_tail(rho, t, k) + one_sided_tail(rho, 1.0 / t, k)
}

fn truncation_order(q: Complex64, x: Complex64, tol: f64) -> u64 {
    let mut hi = 1u64;
    while elliptic_tail_bound(q, x, hi) > tol {
        hi *= 2;
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return hi;
    }
    // invariant: bound(lo) > tol >= bound(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if elliptic_tail_bound(q, x, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `sum_{k in Z} D(q^k x)` truncated symmetrically at the smallest `K` whose
/// tail bound is below `tol / 2`.
pub fn elliptic_d2(p: &EllipticParams) -> PolylogResult<f64> {
    let EllipticParams { q, x, tol } = *p;
    let k_max = truncation_order(q, x, 0.5 * tol);
    let mut acc = CompensatedSum::new();
    let mut mag = 0.0;
    let d0 = bloch_wigner(x.into());
    acc.add(d0);
    mag += d0.abs();
    let qinv = q.inv();
    let mut up = x;
    let mut down = x;
    for _ in 1..=k_max {
        up *= q;
        down *= qinv;
        let pair = bloch_wigner(up.into()) + bloch_wigner(down.into());
        acc.add(pair);
        mag += pair.abs();
    }
    let tail = elliptic_tail_bound(q, x, k_max);
    PolylogResult {
        value: acc.value(),
        error_bound: tail + 8.0 * f64::EPSILON * mag.max(1.0),
        terms_used: 2 * k_max as usize + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(q: Complex64, x: Complex64, tol: f64) -> EllipticParams {
        EllipticParams::new(q, x.into(), tol).unwrap()
    }

    /// Direct bilateral summation over a fixed window.
    fn brute(q: Complex64, x: Complex64, window: i32) -> f64 {
        let s: CompensatedSum = (-window..=window)
            .map(|k| bloch_wigner((q.powi(k) * x).into()))
            .collect();
        s.value()
    }

    #[test]
    fn matches_brute_force_window() {
        let q = Complex64::new(0.1, 0.0);
        let x = Complex64::from_polar(1.0, PI / 3.0);
        let got = elliptic_d2(&params(q, x, 1e-12));
        assert!((got.value - brute(q, x, 40)).abs() < 1e-10);
        assert!((got.value - 1.724_361_936_592_467_9).abs() < 1e-10);
        assert!(got.error_bound <= 1e-12);
    }

    #[test]
    fn q_periodicity_and_conjugation() {
        let q = Complex64::new(0.3, 0.0);
        let x = Complex64::new(0.4, 1.3);
        let tol = 1e-10;
        let a = elliptic_d2(&params(q, x, tol)).value;
        let b = elliptic_d2(&params(q, q * x, tol)).value;
        assert!((a - b).abs() <= 2.0 * tol);
        let c = elliptic_d2(&params(q, x.conj(), tol)).value;
        assert!((a + c).abs() <= 2.0 * tol);
    }

    #[test]
    fn tail_bound_examples() {
        let i = Complex64::new(0.0, 1.0);
        assert!(elliptic_tail_bound(Complex64::new(0.1, 0.0), i, 30) < 1e-25);
        // true discarded tail at K = 5 (independent 40-digit summation): 0.36573854904164182
        let true_tail: f64 = (6..400)
            .flat_map(|k| [k, -k])
            .map(|k| bloch_wigner((Complex64::new(0.5, 0.0).powi(k) * i).into()).abs())
            .sum();
        assert!((true_tail - 0.365_738_549_041_641_8).abs() < 1e-12);
        assert!(elliptic_tail_bound(Complex64::new(0.5, 0.0), i, 5) >= true_tail);
    }

    #[test]
    fn tail_bound_monotone_and_vanishing() {
        let cases = [
            (Complex64::new(0.9, 0.1), Complex64::new(30.0, -4.0)),
            (Complex64::new(-0.5, 0.5), Complex64::new(1e-6, 1e-6)),
            (Complex64::new(0.05, 0.0), Complex64::new(0.2, 0.9)),
        ];
        for (q, x) in cases {
            let mut prev = f64::INFINITY;
            for k in 1..400 {
                let b = elliptic_tail_bound(q, x, k);
                assert!(b <= prev && b >= 0.0, "q={q} x={x} K={k}");
                prev = b;
            }
            assert!(prev < 1e-12);
        }
    }

    #[test]
    fn degenerates_to_bloch_wigner() {
        let x = Complex64::new(0.6, 0.7);
        for q in [1e-3, 1e-6, 1e-9] {
            let r = elliptic_d2(&params(Complex64::new(q, 0.0), x, 1e-12));
            let d = bloch_wigner(x.into());
            let gap = (r.value - d).abs();
            assert!(gap <= elliptic_tail_bound(Complex64::new(q, 0.0), x, 0) + 1e-12);
        }
    }

    #[test]
    fn halving_tol_stays_within_previous_bound() {
        let q = Complex64::new(0.45, -0.3);
        let x = Complex64::new(-0.7, 2.1);
        let mut tol = 1e-4;
        let mut prev = elliptic_d2(&params(q, x, tol));
        for _ in 0..20 {
            tol *= 0.5;
            let next = elliptic_d2(&params(q, x, tol));
            assert!((next.value - prev.value).abs() <= prev.error_bound);
            prev = next;
        }
    }

    #[test]
    fn parameter_errors() {
        let x: ComplexPoint = Complex64::new(1.0, 1.0).into();
        assert!(matches!(
            EllipticParams::new(Complex64::new(1.0, 0.0), x, 1e-10),
            Err(EllipticError::ConvergenceRegime(_))
        ));
        assert!(matches!(
            EllipticParams::new(Complex64::new(0.0, 0.0), x, 1e-10),
            Err(EllipticError::ConvergenceRegime(_))
        ));
        assert_eq!(
            EllipticParams::new(Complex64::new(0.5, 0.0), ComplexPoint::ZERO, 1e-10),
            Err(EllipticError::SingularArgument)
        );
        assert_eq!(
            EllipticParams::new(Complex64::new(0.5, 0.0), ComplexPoint::Infinity, 1e-10),
            Err(EllipticError::SingularArgument)
        );
        assert!(EllipticParams::new(Complex64::new(0.5, 0.0), x, 0.0).is_err());
    }
}
