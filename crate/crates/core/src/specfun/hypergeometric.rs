use super::gamma::{gamma, recip_gamma};
use crate::error::{Error, Result};

const MAX_TERMS: usize = 5_000_000;
const INTEGER_GAP: f64 = 1e-6;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x.fract() == 0.0
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < INTEGER_GAP
}

fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut quiet = 0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        if term.abs() <= f64::EPSILON * 0.25 * sum.abs() {
            quiet += 1;
            if quiet >= 2 {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Convergence { terms: MAX_TERMS })
}

fn pfaff(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    Ok((1.0 - z).powf(-a) * series(a, c - b, c, z / (z - 1.0))?)
}

fn reciprocal_argument(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let w = 1.0 / z;
    let first = gamma(c)?
        * gamma(b - a)?
        * recip_gamma(b)
        * recip_gamma(c - a)
        * (-z).powf(-a)
        * series(a, a - c + 1.0, a - b + 1.0, w)?;
    let second = gamma(c)?
        * gamma(a - b)?
        * recip_gamma(a)
        * recip_gamma(c - b)
        * (-z).powf(-b)
        * series(b, b - c + 1.0, b - a + 1.0, w)?;
    Ok(first + second)
}

/// Gauss hypergeometric function 2F1(a, b; c; z) for real z < 1.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if ![a, b, c, z].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("2F1 arguments must be finite".into()));
    }
    if z >= 1.0 {
        return Err(Error::Domain(format!("2F1 requires z < 1, got {z}")));
    }
    if is_nonpositive_integer(c) {
        return Err(Error::Pole(format!("2F1 with c = {c}")));
    }
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if z == 0.0 {
        return Ok(1.0);
    }
    if is_nonpositive_integer(a) || is_nonpositive_integer(b) || z.abs() <= 0.5 || z > 0.0 {
        return series(a, b, c, z);
    }
    if z >= -2.0 || near_integer(a - b) {
        return pfaff(a, b, c, z);
    }
    reciprocal_argument(a, b, c, z)
}
