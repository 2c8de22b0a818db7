//! Line-of-sight Lambertian gain, the mobility-induced gain distribution and its order statistics.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::factorial::{binomial, factorial};

use crate::error::{Error, Result};
use crate::specfun::{integrate, integrate_with_breaks, QuadratureSpec};

/// m = −ln 2 / ln cos Θ½.
pub fn lambertian_order(half_angle: f64) -> Result<f64> {
    if !(half_angle > 0.0 && half_angle < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "half-power angle must lie in (0, pi/2), got {half_angle}"
        )));
    }
    Ok(-(2f64.ln()) / half_angle.cos().ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedGeometry {
    pub pd_area: f64,
    pub distance: f64,
    pub led_angle: f64,
    pub incidence_angle: f64,
    pub fov: f64,
    pub half_angle: f64,
}

impl LedGeometry {
    pub fn new(
        pd_area: f64,
        distance: f64,
        led_angle: f64,
        incidence_angle: f64,
        fov: f64,
        half_angle: f64,
    ) -> Result<Self> {
        let all_positive = [pd_area, distance, led_angle, incidence_angle, fov, half_angle]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::Argument("geometry values must be positive and finite".into()));
        }
        if fov > FRAC_PI_2 {
            return Err(Error::Argument(format!(
                "field of view must be at most pi/2, got {fov}"
            )));
        }
        if half_angle >= FRAC_PI_2 {
            return Err(Error::Argument(format!(
                "half-power angle must be below pi/2, got {half_angle}"
            )));
        }
        Ok(Self {
            pd_area,
            distance,
            led_angle,
            incidence_angle,
            fov,
            half_angle,
        })
    }

    pub fn lambertian_order(&self) -> f64 {
        lambertian_order(self.half_angle).expect("validated at construction")
    }
}

/// A_e/(d² sin²Ψ) · (m+1)cos^m(Θ)/(2π) · cos θ inside the field of view, zero outside.
pub fn los_gain(geom: &LedGeometry) -> f64 {
    if !(geom.led_angle > 0.0 && geom.led_angle < geom.fov) {
        return 0.0;
    }
    let m = geom.lambertian_order();
    let radiant = (m + 1.0) * geom.led_angle.cos().powf(m) / (2.0 * PI);
    let sin_fov = geom.fov.sin();
    geom.pd_area / (geom.distance * geom.distance * sin_fov * sin_fov) * radiant * geom.incidence_angle.cos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageGeometry {
    pub pd_area: f64,
    pub led_height: f64,
    pub r_max: f64,
    pub k1: f64,
}

/// Stationary gain density K·h^{−2/(m+3)−1} on [h_min, h_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    lambertian_m: f64,
    h_min: f64,
    h_max: f64,
    k_norm: f64,
    geometry: Option<CoverageGeometry>,
}

impl MobilityModel {
    /// Bounds from a receiver moving uniformly over a disc of radius `r_max` under the LED.
    pub fn from_geometry(pd_area: f64, led_height: f64, r_max: f64, lambertian_m: f64) -> Result<Self> {
        if ![pd_area, led_height, r_max, lambertian_m]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            return Err(Error::Argument(
                "coverage parameters must be positive and finite".into(),
            ));
        }
        let m = lambertian_m;
        let k1 = pd_area / (2.0 * PI);
        let c = k1 * (m + 1.0) * led_height.powf(m + 1.0);
        let h_min = c / (r_max * r_max + led_height * led_height).powf(0.5 * (m + 3.0));
        let h_max = c / led_height.powf(m + 3.0);
        let k_norm = 2.0 * c.powf(2.0 / (m + 3.0)) / ((m + 3.0) * r_max * r_max);
        Ok(Self {
            lambertian_m: m,
            h_min,
            h_max,
            k_norm,
            geometry: Some(CoverageGeometry {
                pd_area,
                led_height,
                r_max,
                k1,
            }),
        })
    }

    /// Explicit gain bounds; K is recomputed so the density integrates to one.
    pub fn from_bounds(h_min: f64, h_max: f64, lambertian_m: f64) -> Result<Self> {
        if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
            return Err(Error::Argument(format!(
                "need 0 < h_min < h_max, got [{h_min}, {h_max}]"
            )));
        }
        if !(lambertian_m > 0.0 && lambertian_m.is_finite()) {
            return Err(Error::Argument(format!(
                "lambertian order must be positive, got {lambertian_m}"
            )));
        }
        let a = 2.0 / (lambertian_m + 3.0);
        let k_norm = a / (-h_min.powf(-a) * (-a * (h_max / h_min).ln()).exp_m1());
        Ok(Self {
            lambertian_m,
            h_min,
            h_max,
            k_norm,
            geometry: None,
        })
    }

    pub fn lambertian_m(&self) -> f64 {
        self.lambertian_m
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn k_norm(&self) -> f64 {
        self.k_norm
    }

    pub fn geometry(&self) -> Option<&CoverageGeometry> {
        self.geometry.as_ref()
    }

    /// 2/(m+3).
    pub fn exponent(&self) -> f64 {
        2.0 / (self.lambertian_m + 3.0)
    }

    /// f₁ = −(m+3)K h_min^{−2/(m+3)}/2, so that the CDF reads −f₁ + f₂h^{−2/(m+3)}.
    pub fn f1(&self) -> f64 {
        -self.k_norm * self.h_min.powf(-self.exponent()) / self.exponent()
    }

    /// f₂ = −(m+3)K/2.
    pub fn f2(&self) -> f64 {
        -self.k_norm / self.exponent()
    }

    pub fn inverse_cdf(&self, q: f64) -> f64 {
        let a = self.exponent();
        (self.h_min.powf(-a) - a * q / self.k_norm).powf(-1.0 / a)
    }

    /// `n` log-spaced points spanning the support.
    pub fn log_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = (self.h_min.ln(), self.h_max.ln());
        (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                (lo + t * (hi - lo)).exp().clamp(self.h_min, self.h_max)
            })
            .collect()
    }

    fn support_breaks(&self) -> Vec<f64> {
        let mut grid = self.log_grid(9);
        grid.dedup();
        grid
    }
}

pub fn mobility_pdf(model: &MobilityModel, h: f64) -> f64 {
    if h < model.h_min || h > model.h_max {
        return 0.0;
    }
    model.k_norm * h.powf(-model.exponent() - 1.0)
}

pub fn mobility_cdf(model: &MobilityModel, h: f64) -> f64 {
    if h <= model.h_min {
        return 0.0;
    }
    if h >= model.h_max {
        return 1.0;
    }
    let a = model.exponent();
    (model.k_norm * (model.h_min.powf(-a) - h.powf(-a)) / a).clamp(0.0, 1.0)
}

/// Inverse-CDF draws from the mobility density.
pub fn sample_gains(model: &MobilityModel, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| model.inverse_cdf(rng.random::<f64>())).collect()
}

fn check_layer(total_users: usize, layer: usize) -> Result<()> {
    if total_users == 0 || layer == 0 || layer > total_users {
        return Err(Error::Range(format!("layer {layer} outside 1..={total_users}")));
    }
    Ok(())
}

fn order_statistic_scale(total_users: usize, layer: usize) -> f64 {
    factorial(total_users as u64) / (factorial(layer as u64 - 1) * factorial((total_users - layer) as u64))
}

/// Density of the `layer`-th smallest of `total_users` i.i.d. gains.
pub fn ordered_pdf(model: &MobilityModel, total_users: usize, layer: usize, h: f64) -> Result<f64> {
    check_layer(total_users, layer)?;
    let cdf = mobility_cdf(model, h);
    Ok(order_statistic_scale(total_users, layer)
        * mobility_pdf(model, h)
        * cdf.powi(layer as i32 - 1)
        * (1.0 - cdf).powi((total_users - layer) as i32))
}

/// Coefficients c_k of the power-law expansion Σ_k c_k h^{−a k − 1}, k = 1..=U.
pub fn ordered_pdf_terms(model: &MobilityModel, total_users: usize, layer: usize) -> Result<Vec<(usize, f64)>> {
    check_layer(total_users, layer)?;
    let (f1, f2) = (model.f1(), model.f2());
    let scale = order_statistic_scale(total_users, layer) * model.k_norm;
    let mut terms = Vec::with_capacity(layer * (total_users - layer + 1));
    for i in 0..layer {
        for j in 0..=(total_users - layer) {
            let sign = if (total_users - layer - j).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            let coefficient = scale
                * binomial((layer - 1) as u64, i as u64)
                * binomial((total_users - layer) as u64, j as u64)
                * (-f1).powi(i as i32)
                * (1.0 + f1).powi(j as i32)
                * f2.powi((total_users - 1 - i - j) as i32)
                * sign;
            terms.push((total_users - j - i, coefficient));
        }
    }
    Ok(terms)
}

/// Ordered density through the double binomial expansion in powers of h.
pub fn ordered_pdf_expanded(model: &MobilityModel, total_users: usize, layer: usize, h: f64) -> Result<f64> {
    if h < model.h_min || h > model.h_max {
        check_layer(total_users, layer)?;
        return Ok(0.0);
    }
    let a = model.exponent();
    Ok(ordered_pdf_terms(model, total_users, layer)?
        .into_iter()
        .map(|(k, c)| c * h.powf(-a * k as f64 - 1.0))
        .sum())
}

fn support_integral<F: Fn(f64) -> f64>(model: &MobilityModel, f: F) -> Result<f64> {
    let spec = QuadratureSpec::default().with_tolerances(1e-13, 1e-12);
    Ok(integrate_with_breaks(f, &model.support_breaks(), &spec)?.value)
}

/// E[h²] under the mobility density.
pub fn mean_square_gain(model: &MobilityModel) -> Result<f64> {
    support_integral(model, |h| h * h * mobility_pdf(model, h))
}

/// E[h_(u)²] for the `layer`-th smallest gain, integrated over the quantile of a Beta(u, U−u+1) variate.
pub fn ordered_mean_square_gain(model: &MobilityModel, total_users: usize, layer: usize) -> Result<f64> {
    check_layer(total_users, layer)?;
    let scale = order_statistic_scale(total_users, layer);
    let spec = QuadratureSpec::default().with_tolerances(1e-14, 1e-12);
    let value = integrate(
        |q: f64| {
            let h = model.inverse_cdf(q);
            scale * h * h * q.powi(layer as i32 - 1) * (1.0 - q).powi((total_users - layer) as i32)
        },
        0.0,
        1.0,
        &spec,
    )?
    .value;
    Ok(value)
}

pub fn mean_gain(model: &MobilityModel) -> Result<f64> {
    support_integral(model, |h| h * mobility_pdf(model, h))
}
