//! Clebsch–Gordan coefficients in the Condon–Shortley convention.
//!
//! Coefficients come from the Racah single-sum formula. Every term is
//! evaluated as a signed exponential of log-factorials, so nothing overflows
//! for large spins. When the alternating sum cancels badly the same sum is
//! recomputed in exact rational arithmetic.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::half::Half;

const TABLE_LEN: usize = 2048;

/// Ratio `Σ|term| / |Σ term|` above which the float sum is not trusted.
const CANCELLATION_LIMIT: f64 = 1.0e4;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Compensated summation keeps the table accurate to a few ulps.
        let mut t = Vec::with_capacity(TABLE_LEN);
        let (mut acc, mut carry) = (0.0_f64, 0.0_f64);
        t.push(0.0);
        for k in 1..TABLE_LEN {
            let x = (k as f64).ln() - carry;
            let next = acc + x;
            carry = (next - acc) - x;
            acc = next;
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < TABLE_LEN {
        return ln_factorial_table()[n as usize];
    }
    // Stirling series; the first omitted term is negligible for n >= 2048.
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (std::f64::consts::TAU * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn check_pair(j: Half, m: Half) -> Result<()> {
    if j.twice() < 0 {
        return Err(Error::InvalidQuantumNumbers(format!("negative spin j = {j}")));
    }
    if m.abs() > j {
        return Err(Error::InvalidQuantumNumbers(format!("|m| = {} exceeds j = {j}", m.abs())));
    }
    if !(j + m).is_integer() {
        return Err(Error::InvalidQuantumNumbers(format!("j = {j} and m = {m} differ by a half")));
    }
    Ok(())
}

/// Nonnegative integer from a half-integer expression known to be integral.
fn nat(h: Half) -> u64 {
    debug_assert!(h.is_integer() && h.twice() >= 0);
    (h.twice() / 2) as u64
}

/// `⟨j1 m1 j2 m2 | J M⟩`.
///
/// Returns zero when `M ≠ m1 + m2` or when `J` violates the triangle rule;
/// rejects quantum numbers that do not describe states.
pub fn clebsch_gordan(j1: Half, m1: Half, j2: Half, m2: Half, j: Half, m: Half) -> Result<f64> {
    check_pair(j1, m1)?;
    check_pair(j2, m2)?;
    check_pair(j, m)?;
    if m != m1 + m2 {
        return Ok(0.0);
    }
    if j < (j1 - j2).abs() || j > j1 + j2 || !(j1 + j2 + j).is_integer() {
        return Ok(0.0);
    }

    // Arguments of the six factorials in the denominator of term k are
    // k, a-k, b-k, c-k, d+k, e+k.
    let a = nat(j1 + j2 - j);
    let b = nat(j1 - m1);
    let c = nat(j2 + m2);
    let d = (j - j2 + m1).twice() / 2;
    let e = (j - j1 - m2).twice() / 2;
    let k_min = 0.max(-d).max(-e) as u64;
    let k_max = a.min(b).min(c);
    if k_min > k_max {
        return Ok(0.0);
    }

    let ln_prefactor = 0.5
        * (((j.twice() + 1) as f64).ln()
            + ln_factorial(nat(j + j1 - j2))
            + ln_factorial(nat(j - j1 + j2))
            + ln_factorial(a)
            - ln_factorial(nat(j1 + j2 + j) + 1)
            + ln_factorial(nat(j + m))
            + ln_factorial(nat(j - m))
            + ln_factorial(b)
            + ln_factorial(nat(j1 + m1))
            + ln_factorial(nat(j2 - m2))
            + ln_factorial(c));

    let ln_first = -(ln_factorial(k_min)
        + ln_factorial(a - k_min)
        + ln_factorial(b - k_min)
        + ln_factorial(c - k_min)
        + ln_factorial((d + k_min as i64) as u64)
        + ln_factorial((e + k_min as i64) as u64));

    // Successive terms differ by a ratio of small integers, so the sum is
    // accumulated relative to the first term with no further logarithms.
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut abs_sum = 1.0_f64;
    let mut scale = 0.0_f64;
    for k in k_min..k_max {
        let num = ((a - k) * (b - k) * (c - k)) as f64;
        let den = ((k + 1) as i64 * (d + k as i64 + 1) * (e + k as i64 + 1)) as f64;
        term *= -num / den;
        if term.abs() > 1e200 {
            term *= 1e-200;
            sum *= 1e-200;
            abs_sum *= 1e-200;
            scale += 200.0 * std::f64::consts::LN_10;
        }
        sum += term;
        abs_sum += term.abs();
    }
    let ln_max = ln_first + scale;
    if k_min % 2 == 1 {
        sum = -sum;
    }

    if sum.abs() * CANCELLATION_LIMIT >= abs_sum {
        return Ok(sum.signum() * (ln_prefactor + ln_max + sum.abs().ln()).exp());
    }
    Ok(exact_coefficient(
        j.twice() as u64 + 1,
        [nat(j + j1 - j2), nat(j - j1 + j2), a],
        nat(j1 + j2 + j) + 1,
        [nat(j + m), nat(j - m), b, nat(j1 + m1), nat(j2 - m2), c],
        (a, b, c, d, e),
        (k_min, k_max),
    ))
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Same formula as above in rational arithmetic.
fn exact_coefficient(
    two_j_plus_1: u64,
    triangle: [u64; 3],
    big: u64,
    projections: [u64; 6],
    (a, b, c, d, e): (u64, u64, u64, i64, i64),
    (k_min, k_max): (u64, u64),
) -> f64 {
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = factorial(k)
            * factorial(a - k)
            * factorial(b - k)
            * factorial(c - k)
            * factorial((d + k as i64) as u64)
            * factorial((e + k as i64) as u64);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let num: BigInt = triangle.iter().chain(projections.iter()).map(|&n| factorial(n)).product::<BigInt>()
        * BigInt::from(two_j_plus_1);
    let squared = BigRational::new(num, factorial(big)) * &sum * &sum;
    let sign = if sum.is_negative() { -1.0 } else { 1.0 };
    sign * ratio_to_f64(&squared).sqrt()
}

/// Ratio to `f64` without overflowing on huge numerators and denominators.
fn ratio_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    let shift = num.bits() as i64 - den.bits() as i64;
    // Align to about 60 significant bits before dividing.
    let (n, d) = if shift > 0 {
        (num.clone(), den.clone() << shift as u64)
    } else {
        (num.clone() << (-shift) as u64, den.clone())
    };
    let scaled = BigRational::new(n << 60u32, d);
    let mantissa = scaled.to_integer().to_f64().unwrap_or(f64::NAN);
    mantissa * 2f64.powi((shift - 60) as i32)
}
