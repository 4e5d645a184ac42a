//! Special functions evaluated in log space.
//!
//! `log_bessel_k` follows the classical Temme / Steed construction: the
//! fractional order `mu = nu - round(nu)` in `[-1/2, 1/2)` is evaluated by
//! Temme's series for `x < 2` and by Steed's continued fraction (CF2) otherwise,
//! and the integer part of the order is reached by the forward recurrence
//! `K_{v+1} = K_{v-1} + (2v/x) K_v`, which is stable for `K`. The recurrence is
//! carried on the ratios `K_{v+1}/K_v` so nothing overflows for large orders or
//! underflows for large arguments.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const MAX_ITER: usize = 15_000;

// Chebyshev coefficients for Temme's auxiliary gamma functions on |mu| <= 1/2.
const G1_COEFFS: [f64; 14] = [
    -1.145_164_083_662_683_1,
    0.006_360_853_113_470_842,
    0.001_862_451_930_072_068_5,
    0.000_152_833_085_873_453_5,
    0.000_017_017_464_011_802_04,
    -6.459_750_292_334_725e-7,
    -5.181_984_843_251_938e-8,
    4.518_909_289_485_818e-10,
    3.243_322_737_102_087_3e-11,
    6.830_943_402_494_752e-13,
    2.835_350_275_517_21e-14,
    -7.988_390_576_932_359e-16,
    -3.372_667_730_077_195e-17,
    -3.658_633_480_921_052e-20,
];

const G2_COEFFS: [f64; 15] = [
    1.882_645_524_949_671_8,
    -0.077_490_658_396_167_52,
    -0.018_256_714_847_324_93,
    0.000_633_803_020_907_489_6,
    0.000_076_229_054_350_872_9,
    -9.550_164_756_172_044e-7,
    -8.892_726_810_788_635e-8,
    -1.952_133_477_231_961_4e-9,
    -9.400_305_273_588_516e-11,
    4.687_513_384_953_239e-12,
    2.265_853_574_692_576e-13,
    -1.172_550_969_848_801_5e-15,
    -7.044_133_820_024_522e-17,
    -2.437_787_831_010_769_3e-18,
    -7.522_524_321_825_39e-20,
];

fn chebyshev(coeffs: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let (mut d, mut dd) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let tmp = d;
        d = y2 * d - dd + c;
        dd = tmp;
    }
    x * d - dd + 0.5 * coeffs[0]
}

/// Returns `(g1, g2, 1/Gamma(1+mu), 1/Gamma(1-mu))` for `|mu| <= 1/2`.
fn temme_gamma(mu: f64) -> (f64, f64, f64, f64) {
    let t = 4.0 * mu.abs() - 1.0;
    let g1 = chebyshev(&G1_COEFFS, t);
    let g2 = chebyshev(&G2_COEFFS, t);
    (g1, g2, g2 - mu * g1, g2 + mu * g1)
}

/// Temme series for `x < 2`: `(ln K_mu(x), K_{mu+1}(x) / K_mu(x))`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let pi_mu = PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_mu.abs() < f64::EPSILON {
        1.0
    } else {
        pi_mu / pi_mu.sin()
    };
    let sinhrat = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let (g1, g2, inv_gamma_1p, inv_gamma_1m) = temme_gamma(mu);
    // (x/2)^mu
    let half_x_mu = (-sigma).exp();

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_mu / inv_gamma_1p;
    let mut qk = 0.5 * half_x_mu / inv_gamma_1m;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..MAX_ITER {
        let k = k as f64;
        fk = (k * fk + pk + qk) / (k * k - mu * mu);
        ck *= half_x * half_x / k;
        pk /= k - mu;
        qk /= k + mu;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * (pk - k * fk);
        if del0.abs() < 0.5 * sum0.abs() * f64::EPSILON {
            break;
        }
    }
    (sum0.ln(), sum1 * 2.0 / x / sum0)
}

/// Steed's continued fraction for `x >= 2`: `(ln K_mu(x), K_{mu+1}(x) / K_mu(x))`.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;
    for i in 2..MAX_ITER {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi *= bi * di - 1.0;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    hi *= -a1;
    let ln_k = 0.5 * (PI / (2.0 * x)).ln() - x - s.ln();
    (ln_k, (mu + x + 0.5 - hi) / x)
}

/// Natural log of the modified Bessel function of the second kind, `ln K_order(x)`.
///
/// Accepts any real `order` (`K` is even in its order) and `x > 0`.
pub fn log_bessel_k(order: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_bessel_k requires finite x > 0, got {x}")));
    }
    if !order.is_finite() {
        return Err(Error::Domain(format!(
            "log_bessel_k requires a finite order, got {order}"
        )));
    }
    let nu = order.abs();
    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let (mut ln_k, mut ratio) = if x < 2.0 { temme_series(mu, x) } else { steed_cf2(mu, x) };
    // ratio holds K_{mu+i+1} / K_{mu+i}
    for i in 0..n as usize {
        ln_k += ratio.ln();
        ratio = 2.0 * (mu + i as f64 + 1.0) / x + 1.0 / ratio;
    }
    Ok(ln_k)
}

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(n!)` for a non-negative integer-valued `n`.
pub fn ln_factorial(n: f64) -> f64 {
    libm::lgamma(n + 1.0)
}
