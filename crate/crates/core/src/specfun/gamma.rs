use crate::error::{Error, Result};

const DIRECT_PRODUCT_LIMIT: usize = 30;

/// Natural log of the gamma function for positive arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Gamma function on the real line; non-positive integers are poles.
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 && x.fract() == 0.0 {
        return Err(Error::Pole(format!("gamma at non-positive integer {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// 1/Γ(x), which is entire: zero at the non-positive integers.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        0.0
    } else {
        1.0 / statrs::function::gamma::gamma(x)
    }
}

/// Rising factorial a(a+1)...(a+m-1).
pub fn pochhammer(a: f64, m: usize) -> f64 {
    if m <= DIRECT_PRODUCT_LIMIT || a <= 0.0 {
        return (0..m).map(|k| a + k as f64).product();
    }
    let ln = statrs::function::gamma::ln_gamma(a + m as f64) - statrs::function::gamma::ln_gamma(a);
    ln.exp()
}
