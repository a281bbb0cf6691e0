//! Modified Bessel functions of integer order, ₀F₁ and the Gamma function.
//!
//! Arguments up to `|x| = 25` use the positive power series. Larger
//! arguments use the asymptotic expansion of `I₀` combined with a continued
//! fraction for `I_{n+1}/I_n` and Miller's backward recurrence. Negative
//! arguments go through parity.

use std::f64::consts::PI;

use thiserror::Error;

/// Largest order accepted by the Bessel routines.
pub const MAX_ORDER: i64 = 1_000_000;

/// Boundary between the power series and the asymptotic branch.
pub const SERIES_LIMIT: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecfunError {
    #[error("range error: e^|x| overflows for x = {x}")]
    Range { x: f64 },
    #[error("series did not converge within {terms} terms")]
    Truncation { terms: usize },
    #[error("pole of the Gamma function at z = {z}")]
    Pole { z: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SpecfunError>;

/// Truncation policy shared by every series in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl { max_terms: 100_000, rel_tol: 1e-12, abs_tol: 1e-300 }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_terms == 0 {
            return Err(SpecfunError::Invalid("max_terms must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(SpecfunError::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Counts consecutive negligible terms; a series stops after three.
struct Stopper {
    quiet: usize,
}

impl Stopper {
    fn new() -> Self {
        Stopper { quiet: 0 }
    }

    fn done(&mut self, term: f64, sum: f64, ctl: &SeriesControl) -> bool {
        if term.abs() <= ctl.rel_tol * sum.abs() || term.abs() <= ctl.abs_tol {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= 3
    }
}

fn check_args(n: i64, x: f64) -> Result<()> {
    if n.abs() > MAX_ORDER {
        return Err(SpecfunError::Invalid(format!("order {n} exceeds {MAX_ORDER}")));
    }
    if !x.is_finite() {
        return Err(SpecfunError::Invalid(format!("argument {x} is not finite")));
    }
    Ok(())
}

/// `Iₙ(x)`.
pub fn bessel_i(n: i64, x: f64, ctl: &SeriesControl) -> Result<f64> {
    let scaled = bessel_i_log_scaled(n, x, ctl)?;
    if scaled == 0.0 {
        return Ok(0.0);
    }
    let v = scaled * x.abs().exp();
    if !v.is_finite() {
        return Err(SpecfunError::Range { x });
    }
    Ok(v)
}

/// `e^{−|x|} Iₙ(x)`, finite for every admissible argument.
pub fn bessel_i_log_scaled(n: i64, x: f64, ctl: &SeriesControl) -> Result<f64> {
    ctl.validate()?;
    check_args(n, x)?;
    let n = n.unsigned_abs() as usize;
    let v = scaled_nonneg(n, x.abs(), ctl)?;
    Ok(if x < 0.0 && n % 2 == 1 { -v } else { v })
}

/// `[e^{−|x|} I_k(x)]` for `k = 0..=nmax`.
pub fn bessel_i_scaled_orders(nmax: usize, x: f64, ctl: &SeriesControl) -> Result<Vec<f64>> {
    ctl.validate()?;
    check_args(nmax as i64, x)?;
    let ax = x.abs();
    let mut out = vec![0.0; nmax + 1];
    if ax == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let i0 = scaled_nonneg(0, ax, ctl)?;
    out[0] = i0;
    if nmax > 0 {
        let ratio = ratio_cf(nmax, ax, ctl)?;
        // Backward recurrence from the top; values grow towards order zero.
        let mut hi = ratio; // I_{nmax+1}, unnormalised
        let mut cur = 1.0; // I_{nmax}
        out[nmax] = cur;
        for k in (1..=nmax).rev() {
            let lo = hi + (2.0 * k as f64 / ax) * cur;
            hi = cur;
            cur = lo;
            if k - 1 > 0 {
                out[k - 1] = cur;
            }
            if cur.abs() > 1e250 {
                let s = 1e-250;
                cur *= s;
                hi *= s;
                for v in out[k - 1..=nmax].iter_mut() {
                    *v *= s;
                }
            }
        }
        // `cur` now holds the unnormalised I_0.
        let norm = i0 / cur;
        for v in out[1..].iter_mut() {
            *v *= norm;
        }
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    Ok(out)
}

fn scaled_nonneg(n: usize, x: f64, ctl: &SeriesControl) -> Result<f64> {
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if x <= SERIES_LIMIT {
        series_scaled(n, x, ctl)
    } else {
        large_scaled(n, x, ctl)
    }
}

/// Power series, scaled by e^{−x}, evaluated relative to its leading term.
pub(crate) fn series_scaled(n: usize, x: f64, ctl: &SeriesControl) -> Result<f64> {
    let h = 0.5 * x;
    let lead = n as f64 * h.ln() - ln_gamma(n as f64 + 1.0) - x;
    if lead < -760.0 {
        return Ok(0.0);
    }
    let q = h * h;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut stop = Stopper::new();
    for k in 0..ctl.max_terms {
        term *= q / ((k + 1) as f64 * (k + 1 + n) as f64);
        sum += term;
        if stop.done(term, sum, ctl) {
            return Ok(lead.exp() * sum);
        }
    }
    Err(SpecfunError::Truncation { terms: ctl.max_terms })
}

/// Asymptotic expansion of e^{−x} I₀(x); the terms shrink until k ≈ 2x.
pub(crate) fn asymptotic_i0_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0usize;
    loop {
        let next = term * ((2 * k + 1) as f64).powi(2) / ((k + 1) as f64 * 8.0 * x);
        if next >= term || next < 1e-18 * sum {
            break;
        }
        term = next;
        sum += term;
        k += 1;
    }
    sum / (2.0 * PI * x).sqrt()
}

fn large_scaled(n: usize, x: f64, ctl: &SeriesControl) -> Result<f64> {
    let i0 = asymptotic_i0_scaled(x);
    if n == 0 {
        return Ok(i0);
    }
    let ratio = ratio_cf(n, x, ctl)?;
    let mut hi = ratio;
    let mut cur = 1.0;
    let mut log_scale = 0.0;
    for k in (1..=n).rev() {
        let lo = hi + (2.0 * k as f64 / x) * cur;
        hi = cur;
        cur = lo;
        if cur > 1e250 {
            cur *= 1e-250;
            hi *= 1e-250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
    }
    // I_n / I_0 = 1 / (cur · 10^{scale})
    Ok((i0.ln() - cur.ln() - log_scale).exp())
}

/// `I_{n+1}(x)/I_n(x)` by the modified Lentz method.
fn ratio_cf(n: usize, x: f64, ctl: &SeriesControl) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let xi = 1.0 / x;
    let mut b = 2.0 * (n as f64 + 1.0) * xi;
    let mut f = b.max(TINY);
    let mut c = f;
    let mut d = 0.0;
    let limit = ctl.max_terms.max(1000);
    for _ in 0..limit {
        b += 2.0 * xi;
        d += b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(1.0 / f);
        }
    }
    Err(SpecfunError::Truncation { terms: limit })
}

/// Confluent hypergeometric limit function ₀F₁(; b; z).
pub fn hyp0f1(b: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    ctl.validate()?;
    if b <= 0.0 && b == b.round() {
        return Err(SpecfunError::Pole { z: b });
    }
    if !z.is_finite() {
        return Err(SpecfunError::Invalid(format!("argument {z} is not finite")));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut stop = Stopper::new();
    for k in 0..ctl.max_terms {
        term *= z / ((b + k as f64) * (k + 1) as f64);
        sum += term;
        if !sum.is_finite() {
            return Err(SpecfunError::Range { x: z });
        }
        if stop.done(term, sum, ctl) {
            return Ok(sum);
        }
    }
    Err(SpecfunError::Truncation { terms: ctl.max_terms })
}

/// Γ(z). Integer arguments are computed as exact products.
pub fn gamma_fn(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(SpecfunError::Invalid(format!("argument {z} is not finite")));
    }
    if z <= 0.0 && z == z.round() {
        return Err(SpecfunError::Pole { z });
    }
    if z == z.round() && z <= 171.0 {
        let mut p = 1.0;
        let mut k = 2.0;
        while k < z {
            p *= k;
            k += 1.0;
        }
        return Ok(p);
    }
    if z < 0.5 {
        let g = gamma_fn(1.0 - z)?;
        return Ok(PI / ((PI * z).sin() * g));
    }
    let v = ln_gamma(z).exp();
    if !v.is_finite() {
        return Err(SpecfunError::Range { x: z });
    }
    Ok(v)
}

/// ln Γ(z) for z > 0.
pub fn ln_gamma(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    let mut shift = 0.0;
    let mut z = z;
    if z < 10.0 {
        let mut p = 1.0;
        while z < 10.0 {
            p *= z;
            z += 1.0;
        }
        shift = -p.ln();
    }
    let zi = 1.0 / z;
    let zi2 = zi * zi;
    let corr = zi * (1.0 / 12.0 - zi2 * (1.0 / 360.0 - zi2 * (1.0 / 1260.0 - zi2 * (1.0 / 1680.0 - zi2 / 1188.0))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + corr + shift
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    // Independent oracle: Σ (x/2)^{2k+n} / (k! (k+n)!) summed directly.
    fn naive_series(n: u32, x: f64) -> f64 {
        let mut s = 0.0;
        let mut fk = 1.0;
        for k in 0..200u32 {
            if k > 0 {
                fk *= k as f64;
            }
            let mut fkn = 1.0;
            for j in 2..=(k + n) {
                fkn *= j as f64;
            }
            s += (x / 2.0).powi((2 * k + n) as i32) / (fk * fkn);
        }
        s
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i(0, 0.0, &ctl()).unwrap(), 1.0);
        assert_eq!(bessel_i(4, 0.0, &ctl()).unwrap(), 0.0);
        assert_eq!(bessel_i(3, 1.7, &ctl()).unwrap(), bessel_i(-3, 1.7, &ctl()).unwrap());
    }

    #[test]
    fn i1_at_two_matches_power_series() {
        let oracle = naive_series(1, 2.0);
        assert_relative_eq!(oracle, 1.590_636_854_637_329, max_relative = 1e-15);
        assert_relative_eq!(bessel_i(1, 2.0, &ctl()).unwrap(), oracle, max_relative = 1e-13);
    }

    #[test]
    fn scaled_i2_at_minus_four() {
        let oracle = naive_series(2, 4.0) * (-4.0f64).exp();
        let v = bessel_i_log_scaled(2, -4.0, &ctl()).unwrap();
        assert_relative_eq!(v, oracle, max_relative = 1e-13);
    }

    #[test]
    fn scaled_i0_at_fifty_against_leading_asymptotics() {
        let v = bessel_i_log_scaled(0, 50.0, &ctl()).unwrap();
        let lead = 1.0 / (2.0 * PI * 50.0).sqrt();
        // The leading term alone is off by the first correction, 1/(8x).
        assert!((v / lead - 1.0).abs() < 1.0 / 400.0 + 1e-4);
        // Two more terms of the expansion pin it much tighter.
        let refined = lead * (1.0 + 1.0 / 400.0 + 9.0 / (2.0 * 400.0 * 400.0));
        assert_relative_eq!(v, refined, max_relative = 1e-6);
    }

    #[test]
    fn branches_agree_across_the_boundary() {
        for &x in &[20.0, 22.5, 25.0, 27.0, 30.0] {
            for n in [0usize, 1, 2, 5, 10, 20] {
                let s = series_scaled(n, x, &ctl()).unwrap();
                let a = large_scaled(n, x, &ctl()).unwrap();
                assert_relative_eq!(s, a, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn order_sequence_matches_pointwise() {
        for &x in &[0.3, 4.0, 24.0, 40.0, -7.5] {
            let seq = bessel_i_scaled_orders(30, x, &ctl()).unwrap();
            for (k, v) in seq.iter().enumerate() {
                let p = bessel_i_log_scaled(k as i64, x, &ctl()).unwrap();
                assert_relative_eq!(*v, p, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn overflow_is_a_range_error() {
        assert!(matches!(bessel_i(0, 800.0, &ctl()), Err(SpecfunError::Range { .. })));
        assert!(bessel_i_log_scaled(0, 800.0, &ctl()).unwrap().is_finite());
    }

    #[test]
    fn truncation_is_reported() {
        let tight = SeriesControl { max_terms: 2, ..ctl() };
        assert!(matches!(bessel_i(0, 10.0, &tight), Err(SpecfunError::Truncation { .. })));
    }

    #[test]
    fn hyp0f1_identities() {
        assert_eq!(hyp0f1(2.0, 0.0, &ctl()).unwrap(), 1.0);
        let i1_2 = bessel_i(1, 2.0, &ctl()).unwrap();
        assert_relative_eq!(hyp0f1(2.0, 1.0, &ctl()).unwrap(), i1_2, max_relative = 1e-12);
        let i1_4 = bessel_i(1, 4.0, &ctl()).unwrap();
        assert_relative_eq!(hyp0f1(2.0, 4.0, &ctl()).unwrap(), i1_4 / 2.0, max_relative = 1e-12);
        assert!(hyp0f1(-2.0, 1.0, &ctl()).is_err());
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_fn(2.0).unwrap(), 1.0);
        assert_eq!(gamma_fn(5.0).unwrap(), 24.0);
        assert_relative_eq!(gamma_fn(0.5).unwrap(), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma_fn(-0.5).unwrap(), -2.0 * PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma_fn(7.3).unwrap(), 1271.423633663909, max_relative = 1e-13);
        assert!(matches!(gamma_fn(0.0), Err(SpecfunError::Pole { .. })));
        assert!(matches!(gamma_fn(-3.0), Err(SpecfunError::Pole { .. })));
    }

    #[test]
    fn ln_gamma_matches_log_factorial() {
        let mut lf = 0.0;
        for k in 1..60u32 {
            lf += (k as f64).ln();
            assert_relative_eq!(ln_gamma(k as f64 + 1.0), lf, max_relative = 1e-14, epsilon = 1e-13);
        }
    }
}
