use crate::error::{Error, Result};

pub const MAX_HERMITE_ORDER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HermiteConvention {
    /// H_m, orthogonal under exp(-x^2).
    Physicists,
    /// He_m, orthogonal under exp(-x^2/2).
    #[default]
    Probabilists,
}

/// Hermite polynomial of order `m` at `x` by three-term recurrence.
pub fn hermite(m: usize, x: f64, convention: HermiteConvention) -> Result<f64> {
    Ok(*hermite_table(m, x, convention)?.last().expect("table has m+1 entries"))
}

/// All polynomials of order 0..=m at `x`.
pub fn hermite_table(m: usize, x: f64, convention: HermiteConvention) -> Result<Vec<f64>> {
    if m > MAX_HERMITE_ORDER {
        return Err(Error::Range(format!("hermite order {m} exceeds {MAX_HERMITE_ORDER}")));
    }
    let scale = match convention {
        HermiteConvention::Physicists => 2.0,
        HermiteConvention::Probabilists => 1.0,
    };
    let mut values = Vec::with_capacity(m + 1);
    values.push(1.0);
    if m >= 1 {
        values.push(scale * x);
    }
    for k in 1..m {
        let next = scale * (x * values[k] - k as f64 * values[k - 1]);
        values.push(next);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use HermiteConvention::*;

    #[test]
    fn low_orders() {
        for x in [-1.3, 0.0, 0.4, 2.7] {
            assert!((hermite(2, x, Probabilists).unwrap() - (x * x - 1.0)).abs() < 1e-14);
            assert!((hermite(2, x, Physicists).unwrap() - (4.0 * x * x - 2.0)).abs() < 1e-13);
        }
        assert_eq!(hermite(1, 3.0, Physicists).unwrap(), 6.0);
        assert_eq!(hermite(0, 3.0, Probabilists).unwrap(), 1.0);
    }

    #[test]
    fn probabilists_order_four_matches_rodrigues_derivative() {
        // He_4(x) = (-1)^4 e^{x^2/2} d^4/dx^4 e^{-x^2/2}, fourth derivative by a 9-point stencil
        let x = 0.7;
        let g = |t: f64| (-t * t / 2.0).exp();
        let step = 5e-2;
        let weights = [
            -1.0 / 560.0,
            8.0 / 315.0,
            -1.0 / 5.0,
            8.0 / 5.0,
            -205.0 / 72.0,
            8.0 / 5.0,
            -1.0 / 5.0,
            8.0 / 315.0,
            -1.0 / 560.0,
        ];
        let second = |t: f64| {
            weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * g(t + (i as f64 - 4.0) * step))
                .sum::<f64>()
                / (step * step)
        };
        let fourth = weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * second(x + (i as f64 - 4.0) * step))
            .sum::<f64>()
            / (step * step);
        let rodrigues = fourth / g(x);
        let value = hermite(4, x, Probabilists).unwrap();
        assert!((value - rodrigues).abs() < 1e-8, "{value} vs {rodrigues}");
        assert!((value - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn conventions_are_related_by_scaling() {
        // H_m(x) = 2^{m/2} He_m(sqrt(2) x)
        let x = 0.83;
        for m in 0..12 {
            let h = hermite(m, x, Physicists).unwrap();
            let he = hermite(m, std::f64::consts::SQRT_2 * x, Probabilists).unwrap();
            assert!((h - 2f64.powf(m as f64 / 2.0) * he).abs() < 1e-9 * h.abs().max(1.0));
        }
    }

    #[test]
    fn order_guard() {
        assert!(hermite(200, 0.1, Probabilists).is_ok());
        assert!(matches!(hermite(201, 0.1, Probabilists), Err(Error::Range(_))));
    }
}
