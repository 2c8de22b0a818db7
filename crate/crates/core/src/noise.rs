//! Composite additive distortion φ = α·n + β·(w − ν)/√(2ν) with n ~ N(0,1), w ~ χ²_ν.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::specfun::{
    hermite_table, integrate_with_breaks, log_gamma, pochhammer, HermiteConvention, QuadratureSpec, MAX_HERMITE_ORDER,
};

const SUM_OF_SQUARES_LIMIT: u32 = 64;
const SERIES_HALF_WIDTH: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    alpha: f64,
    beta: f64,
    nu: u32,
    truncation_m: usize,
}

impl NoiseParams {
    pub fn new(alpha: f64, beta: f64, nu: u32, truncation_m: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Argument(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be non-negative, got {beta}")));
        }
        if nu == 0 {
            return Err(Error::Argument("nu must be at least 1".into()));
        }
        if truncation_m == 0 {
            return Err(Error::Argument("truncation_m must be at least 1".into()));
        }
        Ok(Self {
            alpha,
            beta,
            nu,
            truncation_m,
        })
    }

    /// α = 2, β = α/3, ν = 10, M = 10.
    pub fn reference() -> Self {
        Self::new(2.0, 2.0 / 3.0, 10, 10).expect("reference parameters are valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn truncation_m(&self) -> usize {
        self.truncation_m
    }

    /// Weight of the raw chi-squared variate: β/√(2ν).
    pub fn beta_prime(&self) -> f64 {
        self.beta / (2.0 * self.nu as f64).sqrt()
    }

    /// var[φ] = α² + β².
    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha + self.beta * self.beta
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.beta, self.nu, self.truncation_m)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.alpha, beta, self.nu, self.truncation_m)
    }

    pub fn with_truncation(&self, truncation_m: usize) -> Result<Self> {
        Self::new(self.alpha, self.beta, self.nu, truncation_m)
    }

    fn check_series(&self) -> Result<()> {
        if self.beta >= self.alpha {
            return Err(Error::Divergence {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

pub(crate) fn normal_pdf(x: f64, sd: f64) -> f64 {
    let z = x / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

pub(crate) fn chi_squared_draw<R: Rng>(rng: &mut R, nu: u32, gamma_sampler: Option<&ChiSquared<f64>>) -> f64 {
    match gamma_sampler {
        Some(dist) => dist.sample(rng),
        None => (0..nu)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                g * g
            })
            .sum(),
    }
}

pub(crate) fn chi_squared_sampler(nu: u32) -> Option<ChiSquared<f64>> {
    (nu > SUM_OF_SQUARES_LIMIT).then(|| ChiSquared::new(nu as f64).expect("nu is positive"))
}

/// `n` independent draws of φ, reproducible from `seed`.
pub fn sample_phi(params: &NoiseParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = chi_squared_sampler(params.nu);
    let nu = params.nu as f64;
    let scale = params.beta_prime();
    (0..n)
        .map(|_| {
            let gauss: f64 = rng.sample(StandardNormal);
            let w = chi_squared_draw(&mut rng, params.nu, sampler.as_ref());
            params.alpha * gauss + scale * (w - nu)
        })
        .collect()
}

/// Moment generating function of the unshifted sum ψ = α·n + β·w.
pub fn mgf(params: &NoiseParams, t: f64) -> Result<f64> {
    if params.beta > 0.0 && t >= 1.0 / (2.0 * params.beta) {
        return Err(Error::Domain(format!(
            "mgf requires t < 1/(2 beta) = {}, got {t}",
            1.0 / (2.0 * params.beta)
        )));
    }
    let a = params.alpha;
    Ok((0.5 * t * t * a * a).exp() * (1.0 - 2.0 * params.beta * t).powf(-0.5 * params.nu as f64))
}

/// Truncated Hermite expansion of the density of φ with its normalisation cached.
#[derive(Debug, Clone)]
pub struct HermiteSeriesPdf {
    params: NoiseParams,
    coefficients: Vec<f64>,
    normalisation: f64,
}

impl HermiteSeriesPdf {
    pub fn new(params: &NoiseParams) -> Result<Self> {
        params.check_series()?;
        if params.truncation_m > MAX_HERMITE_ORDER {
            return Err(Error::Range(format!(
                "truncation {} exceeds {MAX_HERMITE_ORDER}",
                params.truncation_m
            )));
        }
        let ratio = 2.0 * params.beta_prime() / params.alpha;
        let half_nu = 0.5 * params.nu as f64;
        let mut coefficients = Vec::with_capacity(params.truncation_m + 1);
        let mut factorial = 1.0;
        for m in 0..=params.truncation_m {
            if m > 0 {
                factorial *= m as f64;
            }
            coefficients.push(pochhammer(half_nu, m) / factorial * ratio.powi(m as i32));
        }
        let mut series = Self {
            params: *params,
            coefficients,
            normalisation: 1.0,
        };
        let breaks: Vec<f64> = (-8..=8).map(|k| k as f64 * SERIES_HALF_WIDTH / 8.0).collect();
        let spec = QuadratureSpec::default().with_tolerances(1e-14, 1e-13);
        let mass = integrate_with_breaks(|z| series.shape(z), &breaks, &spec)?.value;
        series.normalisation = 1.0 / (params.alpha * mass);
        Ok(series)
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    /// Multiplier that makes the truncated series integrate to one; analytically 1/(α√(2π)).
    pub fn normalisation(&self) -> f64 {
        self.normalisation
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn standardise(&self, phi: f64) -> f64 {
        (phi + self.params.beta_prime() * self.params.nu as f64) / self.params.alpha
    }

    fn shape(&self, z: f64) -> f64 {
        let he = hermite_table(self.params.truncation_m, z, HermiteConvention::Probabilists)
            .expect("truncation within hermite guard");
        let poly: f64 = self.coefficients.iter().zip(&he).map(|(c, h)| c * h).sum();
        poly * (-0.5 * z * z).exp()
    }

    pub fn pdf(&self, phi: f64) -> f64 {
        self.normalisation * self.shape(self.standardise(phi))
    }

    pub fn cdf(&self, phi: f64) -> f64 {
        let z = self.standardise(phi);
        let he = hermite_table(self.params.truncation_m, z, HermiteConvention::Probabilists)
            .expect("truncation within hermite guard");
        let tail: f64 = self.coefficients[1..].iter().zip(&he).map(|(c, h)| c * h).sum();
        let gauss = (-0.5 * z * z).exp();
        self.normalisation
            * self.params.alpha
            * ((2.0 * PI).sqrt() * self.coefficients[0] * normal_cdf(z) - gauss * tail)
    }
}

pub fn pdf_series(params: &NoiseParams, phi: f64) -> Result<f64> {
    Ok(HermiteSeriesPdf::new(params)?.pdf(phi))
}

pub fn cdf_series(params: &NoiseParams, phi: f64) -> Result<f64> {
    Ok(HermiteSeriesPdf::new(params)?.cdf(phi))
}

/// Large-ν closed form with partition function Z = exp(ν²β′²/2α²)·√(2πα²).
pub fn pdf_high_nu(params: &NoiseParams, phi: f64) -> f64 {
    let a2 = params.alpha * params.alpha;
    let bp = params.beta_prime();
    let nu = params.nu as f64;
    let shifted = phi + bp * nu;
    let exponent = (2.0 * nu * bp * shifted - shifted * shifted - nu * nu * bp * bp) / (2.0 * a2);
    exponent.exp() / (2.0 * PI * a2).sqrt()
}

/// Density of φ by direct convolution of the Gaussian and scaled chi-squared densities.
pub fn pdf_oracle(params: &NoiseParams, phi: f64) -> Result<f64> {
    if params.beta == 0.0 {
        return Ok(normal_pdf(phi, params.alpha));
    }
    let nu = params.nu as f64;
    let bp = params.beta_prime();
    let alpha = params.alpha;
    let log_norm = 0.5 * nu * 2f64.ln() + log_gamma(0.5 * nu)?;
    // substitution w = t² removes the w^{ν/2-1} singularity at the origin
    let integrand = |t: f64| {
        if t <= 0.0 {
            return if params.nu == 1 {
                2.0 * (-log_norm).exp() * normal_pdf(phi + bp * nu, alpha)
            } else {
                0.0
            };
        }
        let w = t * t;
        let log_chi = (nu - 1.0) * t.ln() - 0.5 * w - log_norm;
        2.0 * log_chi.exp() * normal_pdf(phi - bp * (w - nu), alpha)
    };
    let centre = nu + phi / bp;
    let reach = 40.0 * alpha / bp;
    let w_max = (nu + 30.0 * (2.0 * nu).sqrt() + 60.0).max(centre + reach);
    let t_max = w_max.sqrt();
    let mut breaks = vec![0.0, t_max];
    for w in [nu - 1.0, centre - reach / 8.0, centre, centre + reach / 8.0] {
        if w > 0.0 && w.sqrt() < t_max {
            breaks.push(w.sqrt());
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let spec = QuadratureSpec::default().with_tolerances(1e-15, 1e-11);
    Ok(integrate_with_breaks(integrand, &breaks, &spec)?.value)
}

/// Integration range holding all but a negligible fraction of the mass of φ.
pub fn support_window(params: &NoiseParams) -> (f64, f64) {
    let nu = params.nu as f64;
    let bp = params.beta_prime();
    let lo = -bp * nu - 12.0 * params.alpha;
    let hi = bp * (30.0 * (2.0 * nu).sqrt() + 60.0) + 12.0 * params.alpha;
    (lo, hi)
}

/// Differential entropy of φ in nats, by quadrature of the convolution density.
pub fn oracle_entropy(params: &NoiseParams) -> Result<f64> {
    let (lo, hi) = support_window(params);
    let sd = params.variance().sqrt();
    let mut breaks: Vec<f64> = vec![lo, hi];
    for k in -6..=6 {
        let x = k as f64 * sd;
        if x > lo && x < hi {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let spec = QuadratureSpec::default().with_tolerances(1e-11, 1e-10);
    let integral = integrate_with_breaks(
        |x| {
            let p = pdf_oracle(params, x).unwrap_or(0.0);
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        },
        &breaks,
        &spec,
    )?;
    Ok(integral.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPdf {
    bin_edges: Vec<f64>,
    densities: Vec<f64>,
    sample_count: usize,
}

impl EmpiricalPdf {
    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.bin_edges
            .windows(2)
            .zip(&self.densities)
            .map(|(w, &d)| (w[0], w[1], d))
    }

    pub fn centres(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Piecewise-constant density; zero outside the binned range.
    pub fn density_at(&self, x: f64) -> f64 {
        let first = self.bin_edges[0];
        let last = *self.bin_edges.last().expect("at least two edges");
        if x < first || x > last {
            return 0.0;
        }
        let idx = self.bin_edges.partition_point(|&e| e <= x).saturating_sub(1);
        self.densities[idx.min(self.densities.len() - 1)]
    }

    /// Σ width·|density − f(centre)|: L1 distance with `f` sampled at bin centres.
    pub fn l1_distance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.bins()
            .map(|(lo, hi, d)| (hi - lo) * (d - f(0.5 * (lo + hi))).abs())
            .sum()
    }

    /// Plug-in differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.bins()
            .filter(|&(_, _, d)| d > 0.0)
            .map(|(lo, hi, d)| -(hi - lo) * d * d.ln())
            .sum()
    }

    /// CSV with header `bin_left,bin_right,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_left,bin_right,density")?;
        for (lo, hi, d) in self.bins() {
            writeln!(out, "{lo},{hi},{d}")?;
        }
        Ok(())
    }
}

/// Equal-width normalised histogram over the sample range.
pub fn histogram(samples: &[f64], bins: usize) -> Result<EmpiricalPdf> {
    if samples.is_empty() {
        return Err(Error::Argument("histogram of an empty sample".into()));
    }
    if bins < 2 {
        return Err(Error::Argument(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("histogram samples must be finite".into()));
    }
    let (mut lo, mut hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect();
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, w)| c as f64 / (n * (w[1] - w[0])))
        .collect();
    Ok(EmpiricalPdf {
        bin_edges,
        densities,
        sample_count: samples.len(),
    })
}

/// Histogram entropy estimate with a cube-root bin rule.
pub fn entropy_estimate(samples: &[f64]) -> Result<f64> {
    let bins = ((samples.len() as f64).cbrt().round() as usize).max(2);
    Ok(histogram(samples, bins)?.entropy())
}
