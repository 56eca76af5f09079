//! Classical polylogarithms `Li_n`, the Bloch–Wigner dilogarithm and the
//! Ramakrishnan single-valued polylogarithms `L_m`, `D_m`.
//!
//! `Li_n` is evaluated by argument reduction so every path converges at
//! least geometrically:
//!
//! * `|z| <= 1/2`: the defining power series;
//! * `|z| >= 2`: the inversion relation, reducing to `|1/z| <= 1/2`;
//! * otherwise: the expansion in `mu = log z` around `z = 1`, valid for
//!   `|mu| < 2 pi`.
//!
//! Every result carries a bound on the truncation error plus a rounding
//! allowance proportional to the magnitude of the summed terms.
//!
//! Branches are principal (`arg` in `(-pi, pi]`). On the cut `(1, inf)` the
//! value is the limit from the lower half plane, `Im Li_n(x) = -pi
//! log(x)^(n-1)/(n-1)!`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::moebius::ComplexPoint;
use crate::sum::ComplexSum;

/// Global maximum of `|D|`, attained at `e^{i pi/3}`.
pub const BLOCH_WIGNER_MAX: f64 = 1.014_941_606_409_653_6;

const ROUNDING: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolylogError {
    #[error("Li_1 has a pole at z = 1")]
    Pole,
    #[error("order must be at least 1, got {0}")]
    InvalidOrder(u32),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("singular argument {0}")]
    SingularArgument(String),
    #[error("requested tolerance {requested:e} is below the attainable bound {attainable:e}")]
    ToleranceUnattainable { requested: f64, attainable: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolylogResult<T> {
    pub value: T,
    pub error_bound: f64,
    pub terms_used: usize,
}

/// Which denominator to use for the odd-order correction term of `D_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum OddCorrection {
    /// `(log|z|)^m / (2 * m!)`
    #[default]
    TwiceFactorial,
    /// `(log|z|)^m / (2m)!`
    DoubledArgumentFactorial,
}

struct Raw {
    value: Complex64,
    trunc: f64,
    mag: f64,
    terms: usize,
}

/// Turns a negative zero imaginary part into a positive one so that the
/// principal logarithm of a negative real number is `+i pi`.
#[inline]
fn clean(z: Complex64) -> Complex64 {
    Complex64::new(z.re, z.im + 0.0)
}

fn zeta_euler_maclaurin(s: u32) -> f64 {
    const N: f64 = 12.0;
    const BERNOULLI: [f64; 7] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ];
    let sf = s as f64;
    let mut acc: crate::sum::CompensatedSum = (1..12).map(|k| (k as f64).powf(-sf)).collect();
    acc.add(N.powf(1.0 - sf) / (sf - 1.0));
    acc.add(0.5 * N.powf(-sf));
    let mut rising = sf;
    let mut fact = 2.0;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let j = (j + 1) as f64;
        acc.add(b / fact * rising * N.powf(-sf - 2.0 * j + 1.0));
        rising *= (sf + 2.0 * j - 1.0) * (sf + 2.0 * j);
        fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
    }
    acc.value()
}

const ZETA_TABLE_LEN: usize = 96;

/// Riemann zeta at integers `s >= 2`.
pub fn zeta(s: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    assert!(s >= 2, "zeta(s) requires s >= 2");
    if s as usize >= ZETA_TABLE_LEN {
        let sf = s as f64;
        return 1.0 + 2f64.powf(-sf) + 3f64.powf(-sf);
    }
    let table = TABLE.get_or_init(|| {
        (0..ZETA_TABLE_LEN as u32)
            .map(|s| match s {
                0 | 1 => f64::NAN,
                2 => PI * PI / 6.0,
                _ => zeta_euler_maclaurin(s),
            })
            .collect()
    });
    table[s as usize]
}

fn check_tol(tol: f64) -> Result<(), PolylogError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(PolylogError::InvalidTolerance(tol))
    }
}

/// `Li_n(z)` for finite `z`, `n >= 1`, with truncation bound below `tol`.
fn li_raw(n: u32, z: Complex64, tol: f64) -> Raw {
    debug_assert!(n >= 1);
    if z.norm_sqr() == 0.0 {
        return Raw { value: Complex64::new(0.0, 0.0), trunc: 0.0, mag: 0.0, terms: 0 };
    }
    if n == 1 {
        let value = -clean(Complex64::new(1.0, 0.0) - z).ln();
        return Raw { value, trunc: 0.0, mag: value.norm(), terms: 1 };
    }
    let r = z.norm();
    if r <= 0.5 {
        li_series(n, z, tol)
    } else if r >= 2.0 {
        li_inverted(n, z, tol)
    } else {
        li_log_expansion(n, z, tol)
    }
}

fn li_series(n: u32, z: Complex64, tol: f64) -> Raw {
    let r = z.norm();
    let mut acc = ComplexSum::new();
    let mut mag = 0.0;
    let mut p = z;
    let mut k = 1u32;
    loop {
        let kf = k as f64;
        let term = p / kf.powi(n as i32);
        acc.add(term);
        mag += term.norm();
        let next = (kf + 1.0).powi(n as i32);
        let bound = p.norm() * r / (next * (1.0 - r));
        if bound <= tol || k > 100_000 {
            return Raw { value: acc.value(), trunc: bound, mag, terms: k as usize };
        }
        p *= z;
        k += 1;
    }
}

/// `mu^k / k!` for `k = 0..=n`.
fn scaled_powers(mu: Complex64, n: u32) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut p = Complex64::new(1.0, 0.0);
    out.push(p);
    for k in 1..=n {
        p = p * mu / k as f64;
        out.push(p);
    }
    out
}

fn li_inverted(n: u32, z: Complex64, tol: f64) -> Raw {
    let inner = li_series(n, z.inv(), tol);
    let mu = clean(-z).ln();
    let pw = scaled_powers(mu, n);
    let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
    let mut acc = ComplexSum::new();
    let mut mag = inner.mag;
    acc.add(inner.value * sign);
    acc.add(-pw[n as usize]);
    mag += pw[n as usize].norm();
    for k in 1..=(n / 2) {
        let eta = (1.0 - 2f64.powi(1 - 2 * k as i32)) * zeta(2 * k);
        let t = -pw[(n - 2 * k) as usize] * (2.0 * eta);
        acc.add(t);
        mag += t.norm();
    }
    Raw { value: acc.value(), trunc: inner.trunc, mag, terms: inner.terms + 1 + n as usize / 2 }
}

fn li_log_expansion(n: u32, z: Complex64, tol: f64) -> Raw {
    let mu = clean(z).ln();
    if mu.norm_sqr() == 0.0 {
        let v = zeta(n);
        return Raw { value: v.into(), trunc: 0.0, mag: v, terms: 1 };
    }
    let pw = scaled_powers(mu, n);
    let mut acc = ComplexSum::new();
    let mut mag = 0.0;
    let mut push = |t: Complex64, acc: &mut ComplexSum| {
        acc.add(t);
        mag += t.norm();
    };
    for k in 0..=(n - 2) {
        push(pw[k as usize] * zeta(n - k), &mut acc);
    }
    let harmonic: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    push(pw[(n - 1) as usize] * (harmonic - clean(-mu).ln()), &mut acc);
    push(-pw[n as usize] * 0.5, &mut acc);

    // zeta(1 - 2j) mu^(n-1+2j) / (n-1+2j)!
    //   = (-1)^j 2 zeta(2j) (mu/2pi)^(2j) mu^(n-1) / [(2j)(2j+1)...(2j+n-1)]
    let q = (mu / (2.0 * PI)) * (mu / (2.0 * PI));
    let r2 = q.norm();
    let lead = mu.powu(n - 1);
    let lead_norm = lead.norm();
    let mut qj = Complex64::new(1.0, 0.0);
    let mut terms = n as usize + 1;
    let mut trunc;
    let mut j = 1u32;
    loop {
        qj *= q;
        let prod: f64 = (0..n).map(|i| (2 * j + i) as f64).product();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        push(qj * lead * (sign * 2.0 * zeta(2 * j) / prod), &mut acc);
        terms += 1;
        let next = 2.0 * (j + 1) as f64;
        trunc = 2.0 * zeta(2) * lead_norm * qj.norm() * r2 / (next.powi(n as i32) * (1.0 - r2));
        if trunc <= tol || j > 10_000 {
            break;
        }
        j += 1;
    }
    Raw { value: acc.value(), trunc, mag, terms }
}

fn finalize(raw: Raw, tol: f64) -> Result<PolylogResult<Complex64>, PolylogError> {
    let error_bound = raw.trunc + ROUNDING * (raw.mag + raw.value.norm());
    if error_bound > tol {
        return Err(PolylogError::ToleranceUnattainable { requested: tol, attainable: error_bound });
    }
    Ok(PolylogResult { value: raw.value, error_bound, terms_used: raw.terms })
}

/// `Li_n(z)` on the principal branch.
pub fn li(n: u32, z: ComplexPoint, tol: f64) -> Result<PolylogResult<Complex64>, PolylogError> {
    if n == 0 {
        return Err(PolylogError::InvalidOrder(n));
    }
    check_tol(tol)?;
    let z = z
        .finite()
        .ok_or_else(|| PolylogError::SingularArgument("Li_n is unbounded at infinity".into()))?;
    if n == 1 && z == Complex64::new(1.0, 0.0) {
        return Err(PolylogError::Pole);
    }
    finalize(li_raw(n, z, tol * 0.5), tol)
}

/// Bloch–Wigner dilogarithm `D(z) = Im Li_2(z) + arg(1 - z) log|z|`,
/// extended by zero to `0`, `1` and `inf`.
pub fn bloch_wigner(z: ComplexPoint) -> f64 {
    match z {
        ComplexPoint::Infinity => 0.0,
        ComplexPoint::Finite(z) => {
            let r2 = z.norm_sqr();
            if r2 == 0.0 {
                0.0
            } else if r2 > 1.0 {
                -bloch_wigner_unit_disk(z.inv())
            } else {
                bloch_wigner_unit_disk(z)
            }
        }
    }
}

fn bloch_wigner_unit_disk(z: Complex64) -> f64 {
    let one_minus = clean(Complex64::new(1.0, 0.0) - z);
    if one_minus.norm_sqr() == 0.0 || z.norm_sqr() == 0.0 {
        return 0.0;
    }
    let li2 = li_raw(2, z, 1e-17).value;
    let d = li2.im + one_minus.arg() * z.norm().ln();
    debug_assert!(d.abs() <= BLOCH_WIGNER_MAX + 1e-9, "D({z}) = {d}");
    d
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Ramakrishnan's `L_m(z) = sum_{j=1}^m (-log|z|)^(m-j)/(m-j)! Li_j(z)`.
pub fn ramakrishnan_l(m: u32, z: ComplexPoint, tol: f64) -> Result<PolylogResult<Complex64>, PolylogError> {
    if m == 0 {
        return Err(PolylogError::InvalidOrder(m));
    }
    check_tol(tol)?;
    let zf = match z.finite() {
        Some(w) if w.norm_sqr() != 0.0 && w != Complex64::new(1.0, 0.0) => w,
        _ => return Err(PolylogError::SingularArgument(format!("L_m undefined at {z}"))),
    };
    let neg_log = -zf.norm().ln();
    let mut acc = ComplexSum::new();
    let mut error_bound = 0.0;
    let mut terms_used = 0;
    for j in 1..=m {
        let coef = neg_log.powi((m - j) as i32) / factorial(m - j);
        let term_tol = tol / (m as f64 * coef.abs().max(1.0));
        let lij = finalize(li_raw(j, zf, term_tol * 0.5), term_tol)?;
        acc.add(lij.value * coef);
        error_bound += coef.abs() * lij.error_bound;
        terms_used += lij.terms_used;
    }
    Ok(PolylogResult { value: acc.value(), error_bound, terms_used })
}

/// Single-valued `D_m`: `Im L_m` for even `m`, `Re L_m + (log|z|)^m / (2 m!)`
/// for odd `m`.
pub fn ramakrishnan_d(m: u32, z: ComplexPoint, tol: f64) -> Result<PolylogResult<f64>, PolylogError> {
    ramakrishnan_d_with(m, z, tol, OddCorrection::default())
}

pub fn ramakrishnan_d_with(
    m: u32,
    z: ComplexPoint,
    tol: f64,
    correction: OddCorrection,
) -> Result<PolylogResult<f64>, PolylogError> {
    let l = ramakrishnan_l(m, z, tol)?;
    let value = if m % 2 == 0 {
        l.value.im
    } else {
        let log_abs = z.finite().expect("checked by ramakrishnan_l").norm().ln();
        let denom = match correction {
            OddCorrection::TwiceFactorial => 2.0 * factorial(m),
            OddCorrection::DoubledArgumentFactorial => factorial(2 * m),
        };
        l.value.re + log_abs.powi(m as i32) / denom
    };
    Ok(PolylogResult { value, error_bound: l.error_bound, terms_used: l.terms_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(re: f64, im: f64) -> ComplexPoint {
        ComplexPoint::new(re, im)
    }

    /// Partial sums of `sum z^k / k^n` for `|z| <= 1`; independent of the
    /// reduction machinery.
    fn brute_series(n: u32, z: Complex64, terms: u32) -> Complex64 {
        let mut acc = ComplexSum::new();
        let mut pw = Complex64::new(1.0, 0.0);
        for k in 1..=terms {
            pw *= z;
            acc.add(pw / (k as f64).powi(n as i32));
        }
        acc.value()
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(3) - 1.202_056_903_159_594_3).abs() < 1e-15);
        assert!((zeta(5) - 1.036_927_755_143_37).abs() < 1e-14);
        assert!((zeta(4) - PI.powi(4) / 90.0).abs() < 1e-15);
        assert!((zeta(40) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn li_at_zero() {
        for n in 1..6 {
            assert_eq!(li(n, ComplexPoint::ZERO, 1e-12).unwrap().value, c(0.0, 0.0));
        }
    }

    #[test]
    fn li2_special_values() {
        // partial sums up to 1e6 with tail in (1/(K+1), 1/K)
        let k = 1_000_000u32;
        let head: crate::sum::CompensatedSum = (1..=k).map(|i| 1.0 / (i as f64 * i as f64)).collect();
        let oracle = head.value() + 1.0 / (k as f64 + 0.5);
        let got = li(2, ComplexPoint::ONE, 1e-12).unwrap().value;
        assert!((got.re - oracle).abs() < 1e-10 && got.im == 0.0);
        assert!((got.re - 1.644_934_066_848_226_4).abs() < 1e-14);

        let alt = brute_series(2, c(-1.0, 0.0), 1_000_000);
        let got = li(2, p(-1.0, 0.0), 1e-12).unwrap().value;
        assert!((got - alt).norm() < 1e-10);
        assert!((got.re + 0.822_467_033_424_113_2).abs() < 1e-14);

        let half = brute_series(2, c(0.5, 0.0), 80);
        let got = li(2, p(0.5, 0.0), 1e-12).unwrap().value;
        assert!((got - half).norm() < 1e-12);
        assert!((got.re - 0.582_240_526_465_012_5).abs() < 1e-12);
    }

    #[test]
    fn li_matches_reference_values() {
        let cases = [
            (3, c(0.5, 0.0), c(0.537_213_193_608_040_2, 0.0)),
            (2, c(1.5, 0.0), c(2.374_395_270_272_480_2, -1.273_806_204_919_600_5)),
            (3, c(1.5, 0.0), c(2.060_877_507_320_280_9, -0.258_241_985_293_288_2)),
            (4, c(0.7, 0.6), c(0.699_385_286_406_898_4, 0.660_504_101_296_889_2)),
            (5, c(-3.0, 1.0), c(-2.802_737_702_302_983_6, 0.872_723_502_780_836_7)),
            (6, c(0.9, 0.3), c(0.911_956_696_358_551_5, 0.309_659_763_062_545_4)),
            (2, c(-0.6, 0.01), c(-0.528_120_368_855_964_6, 0.007_833_355_717_725_644)),
            (3, c(2.5, 0.0), c(3.309_135_608_640_704_9, -1.318_822_854_332_743)),
        ];
        for (n, z, want) in cases {
            let got = li(n, z.into(), 1e-13).unwrap();
            assert!((got.value - want).norm() < 1e-12, "Li_{n}({z}) = {} want {want}", got.value);
        }
    }

    #[test]
    fn li_errors() {
        assert_eq!(li(1, ComplexPoint::ONE, 1e-10), Err(PolylogError::Pole));
        assert_eq!(li(0, ComplexPoint::ZERO, 1e-10), Err(PolylogError::InvalidOrder(0)));
        assert!(matches!(li(2, ComplexPoint::I, 0.0), Err(PolylogError::InvalidTolerance(_))));
        assert!(matches!(li(2, ComplexPoint::I, -1.0), Err(PolylogError::InvalidTolerance(_))));
        assert!(matches!(li(2, ComplexPoint::Infinity, 1e-10), Err(PolylogError::SingularArgument(_))));
        assert!(matches!(
            li(2, ComplexPoint::I, 1e-30),
            Err(PolylogError::ToleranceUnattainable { .. })
        ));
    }

    #[test]
    fn bloch_wigner_examples() {
        assert_eq!(bloch_wigner(p(0.5, 0.0)), 0.0);
        // Catalan: alternating series with |tail| below the first omitted term
        let catalan: crate::sum::CompensatedSum = (0..2_000_000u32)
            .map(|k| {
                let t = 1.0 / ((2 * k + 1) as f64).powi(2);
                if k % 2 == 0 { t } else { -t }
            })
            .collect();
        assert!((bloch_wigner(ComplexPoint::I) - catalan.value()).abs() < 1e-10);
        assert!((bloch_wigner(ComplexPoint::I) - 0.915_965_594_177_219).abs() < 1e-14);

        // sum sin(k pi/3)/k^2; Abel summation bounds the tail by 4/K^2
        let k_max = 2_000_000u32;
        let s: crate::sum::CompensatedSum =
            (1..=k_max).map(|k| (k as f64 * PI / 3.0).sin() / (k as f64).powi(2)).collect();
        let z = Complex64::from_polar(1.0, PI / 3.0);
        let got = bloch_wigner(z.into());
        assert!((got - s.value()).abs() < 1e-10);
        assert!((got - BLOCH_WIGNER_MAX).abs() < 1e-14);

        assert_eq!(bloch_wigner(ComplexPoint::ZERO), 0.0);
        assert_eq!(bloch_wigner(ComplexPoint::ONE), 0.0);
        assert_eq!(bloch_wigner(ComplexPoint::Infinity), 0.0);
    }

    #[test]
    fn ramakrishnan_examples() {
        let l1 = ramakrishnan_l(1, p(-1.0, 0.0), 1e-12).unwrap();
        assert!((l1.value - c(-(2f64.ln()), 0.0)).norm() < 1e-15);

        let z = Complex64::from_polar(1.0, 0.7);
        let l2 = ramakrishnan_l(2, z.into(), 1e-12).unwrap();
        let li2 = li(2, z.into(), 1e-12).unwrap();
        assert!((l2.value - li2.value).norm() < 1e-12);

        // L_3(1/2) term by term from independent partial sums
        let half = c(0.5, 0.0);
        let lg = -(0.5f64.ln());
        let oracle = brute_series(1, half, 80) * (lg * lg / 2.0)
            + brute_series(2, half, 80) * lg
            + brute_series(3, half, 80);
        let l3 = ramakrishnan_l(3, half.into(), 1e-12).unwrap();
        assert!((l3.value - oracle).norm() < 1e-10);
        assert!((l3.value.re - 1.107_303_898_929_466_6).abs() < 1e-12);

        let z = p(0.3, 0.4);
        let d2 = ramakrishnan_d(2, z, 1e-12).unwrap().value;
        assert!((d2 - bloch_wigner(z)).abs() < 1e-10);
        assert!((d2 - 0.821_207_557_207_737_6).abs() < 1e-12);

        let d1 = ramakrishnan_d(1, p(-1.0, 0.0), 1e-12).unwrap().value;
        assert!((d1 + 2f64.ln()).abs() < 1e-15);

        // D_3(2i) = Re L_3(2i) + log(2)^3 / 12; oracle Li_j(2i) values at 40 digits
        let d3 = ramakrishnan_d(3, p(0.0, 2.0), 1e-12).unwrap().value;
        assert!((d3 + 0.125_771_959_249_727_38).abs() < 1e-11);
        let alt = ramakrishnan_d_with(3, p(0.0, 2.0), 1e-12, OddCorrection::DoubledArgumentFactorial)
            .unwrap()
            .value;
        let l3 = ramakrishnan_l(3, p(0.0, 2.0), 1e-12).unwrap().value;
        assert!((alt - (l3.re + 2f64.ln().powi(3) / 720.0)).abs() < 1e-14);
    }

    #[test]
    fn ramakrishnan_errors() {
        assert!(ramakrishnan_l(2, ComplexPoint::ZERO, 1e-10).is_err());
        assert!(ramakrishnan_l(2, ComplexPoint::ONE, 1e-10).is_err());
        assert!(ramakrishnan_d(3, ComplexPoint::Infinity, 1e-10).is_err());
        assert_eq!(ramakrishnan_l(0, ComplexPoint::I, 1e-10).unwrap_err(), PolylogError::InvalidOrder(0));
    }

    #[test]
    fn real_axis_vanishing() {
        for i in 1..2000 {
            let x = i as f64 / 2000.0;
            assert!(bloch_wigner(p(x, 0.0)).abs() < 1e-12, "D({x})");
            assert!(bloch_wigner(p(1.0 / x, 0.0)).abs() < 1e-12);
            assert!(bloch_wigner(p(-3.0 * x, 0.0)).abs() < 1e-12);
        }
    }

    fn off_axis() -> impl Strategy<Value = Complex64> {
        (0.1f64..10.0, 0.05f64..3.09, prop::bool::ANY).prop_map(|(r, th, flip)| {
            Complex64::from_polar(r, if flip { -th } else { th })
        })
    }

    fn in_disk() -> impl Strategy<Value = Complex64> {
        (0.05f64..0.95, 0.05f64..3.09, prop::bool::ANY).prop_map(|(r, th, flip)| {
            Complex64::from_polar(r, if flip { -th } else { th })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn inversion_antisymmetry(z in off_axis()) {
            let a = bloch_wigner(z.into());
            let b = bloch_wigner(z.inv().into());
            prop_assert!((a + b).abs() < 1e-10);
        }

        #[test]
        fn conjugation_antisymmetry(z in off_axis()) {
            prop_assert!((bloch_wigner(z.into()) + bloch_wigner(z.conj().into())).abs() < 1e-12);
        }

        #[test]
        fn small_argument_growth(lr in -8.0f64..-2.0, th in -PI..PI) {
            let r = 10f64.powf(lr);
            let d = bloch_wigner(Complex64::from_polar(r, th).into());
            prop_assert!(d.abs() <= 2.0 * r * (1.0 + r.ln().abs()));
        }

        #[test]
        fn five_term_relation(x in in_disk(), y in in_disk()) {
            let one = Complex64::new(1.0, 0.0);
            let xy = one - x * y;
            let s = bloch_wigner(x.into())
                + bloch_wigner(y.into())
                + bloch_wigner(((one - x) / xy).into())
                + bloch_wigner(xy.into())
                + bloch_wigner(((one - y) / xy).into());
            prop_assert!(s.abs() < 1e-9);
        }

        #[test]
        fn ramakrishnan_d2_is_bloch_wigner(z in off_axis()) {
            let d2 = ramakrishnan_d(2, z.into(), 1e-12).unwrap().value;
            prop_assert!((d2 - bloch_wigner(z.into())).abs() < 1e-10);
        }

        #[test]
        fn error_bound_honesty(n in 1u32..6, z in (-4.0f64..4.0, -4.0f64..4.0)) {
            let z = Complex64::new(z.0, z.1);
            prop_assume!((z - 1.0).norm() > 1e-3);
            let coarse = li(n, z.into(), 1e-9).unwrap();
            let fine = li(n, z.into(), 1e-11).unwrap();
            prop_assert!(coarse.error_bound <= 1e-9);
            prop_assert!((coarse.value - fine.value).norm() <= coarse.error_bound);
        }

        #[test]
        fn li_agrees_with_brute_series_in_disk(n in 2u32..5, z in in_disk()) {
            let brute = brute_series(n, z, 2000);
            let got = li(n, z.into(), 1e-13).unwrap().value;
            prop_assert!((got - brute).norm() < 1e-11);
        }
    }
}
