//! Exact sampler for the Pólya-Gamma PG(1, c) law.
//!
//! Devroye-style alternating-series rejection: PG(1, c) = J*(1, |c|/2) / 4,
//! where J* is proposed from a mixture of a truncated exponential (right of
//! the truncation point) and a truncated inverse Gaussian (left of it), then
//! accepted by the alternating series of the Jacobi density coefficients.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use std::f64::consts::PI;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;

/// One draw from PG(1, c).
pub fn sample_pg<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_texp = mass_texpon(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_texp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Mean of PG(1, c).
pub fn pg_mean(c: f64) -> f64 {
    if c.abs() < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Variance of PG(1, c).
pub fn pg_variance(c: f64) -> f64 {
    if c.abs() < 1e-3 {
        // Series: 1/24 - c^2/240 + O(c^4).
        1.0 / 24.0 - c * c / 240.0
    } else {
        let ch = (0.5 * c).cosh();
        (c.sinh() - c) / (4.0 * c.powi(3) * ch * ch)
    }
}

fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

fn log_std_normal_cdf(x: f64) -> f64 {
    (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// Probability of proposing from the exponential tail.
fn mass_texpon(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_std_normal_cdf(b);
    let xa = x0 + z + log_std_normal_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse Gaussian IG(1/z, 1) truncated to (0, TRUNC).
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if TRUNC_RECIP > z {
        // Mean above the truncation point: propose from the truncated Lévy part.
        let mut x;
        loop {
            let (mut e1, mut e2): (f64, f64) = (Exp1.sample(rng), Exp1.sample(rng));
            while e1 * e1 > 2.0 * e2 / t {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
            }
            x = 1.0 + e1 * t;
            x = t / (x * x);
            let accept = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= accept {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        let mut x = t + 1.0;
        while x > t {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mu_y = mu * y;
            x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
        x
    }
}
