//! Per-user rates with the ambient-light penalty, entropy terms, mobility-averaged rates and
//! their quadrature and Monte Carlo twins.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{ordered_pdf, ordered_pdf_terms, sample_gains, MobilityModel};
use crate::error::{Error, Result};
use crate::noise::{chi_squared_draw, chi_squared_sampler, entropy_estimate, oracle_entropy, NoiseParams};
use crate::specfun::{gauss_2f1, integrate, integrate_with_breaks, QuadratureSpec};

const POLE_GAP: f64 = 1e-6;
pub const MIN_ENTROPY_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector {
    powers: Vec<f64>,
    total: f64,
}

impl PowerVector {
    /// Powers with the budget taken as their sum.
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::Argument("power vector must be non-empty".into()));
        }
        if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Argument("powers must be finite and non-negative".into()));
        }
        let total = powers.iter().sum();
        Ok(Self { powers, total })
    }

    /// Powers that must exhaust `total` to within 1e-9 (relative for budgets above one).
    pub fn with_total(powers: Vec<f64>, total: f64) -> Result<Self> {
        let v = Self::new(powers)?;
        if (v.total - total).abs() > 1e-9 * total.max(1.0) {
            return Err(Error::Argument(format!(
                "powers sum to {} but the budget is {total}",
                v.total
            )));
        }
        Ok(Self { total, ..v })
    }

    /// Equal split of `total` across `users`.
    pub fn uniform(users: usize, total: f64) -> Result<Self> {
        Self::with_total(vec![total / users as f64; users], total)
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    /// Power of a 1-based SIC layer.
    pub fn layer(&self, layer: usize) -> f64 {
        self.powers[layer - 1]
    }

    /// Σ_{l > layer} P_l: the power still undecoded at `layer`.
    pub fn interference_power(&self, layer: usize) -> f64 {
        self.powers[layer..].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    Analytic,
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for RateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMethod::Analytic => "analytic",
            RateMethod::Quadrature => "quadrature",
            RateMethod::MonteCarlo => "monte_carlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_user: Vec<f64>,
    pub sum: f64,
    pub method: RateMethod,
    pub diagnostics: BTreeMap<String, f64>,
}

impl RateReport {
    pub fn new(per_user: Vec<f64>, method: RateMethod) -> Self {
        let sum = sum_rate(&per_user);
        Self {
            per_user,
            sum,
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    /// CSV `user,rate_bpcu,method` with a trailing `sum` row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "user,rate_bpcu,method")?;
        for (u, r) in self.per_user.iter().enumerate() {
            writeln!(out, "{},{r},{}", u + 1, self.method)?;
        }
        writeln!(out, "sum,{},{}", self.sum, self.method)
    }

    /// Diagnostics as `key=value` lines.
    pub fn write_diagnostics<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.diagnostics {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn sum_rate(per_user: &[f64]) -> f64 {
    per_user.iter().sum()
}

pub(crate) fn check_gains(gains: &[f64]) -> Result<()> {
    if gains.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::Domain("channel gains must be positive and finite".into()));
    }
    if gains.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Ordering);
    }
    Ok(())
}

fn check_inputs(layer: usize, p: &PowerVector, gains: &[f64]) -> Result<()> {
    if gains.len() != p.len() {
        return Err(Error::Argument(format!("{} gains for {} powers", gains.len(), p.len())));
    }
    if layer == 0 || layer > p.len() {
        return Err(Error::Range(format!("layer {layer} outside 1..={}", p.len())));
    }
    check_gains(gains)
}

/// Interference-plus-noise power I = Σ_{l>u} P_l + α²/h².
pub fn interference(layer: usize, p: &PowerVector, gain: f64, alpha: f64) -> f64 {
    p.interference_power(layer) + alpha * alpha / (gain * gain)
}

/// Ambient-corrected rate in bits at an arbitrary gain for `layer`, without ordering checks.
pub fn rate_at_gain(layer: usize, p: &PowerVector, gain: f64, noise: &NoiseParams) -> f64 {
    let own = p.layer(layer);
    if own == 0.0 {
        return 0.0;
    }
    let i = interference(layer, p, gain, noise.alpha());
    let b2 = noise.beta() * noise.beta();
    (0.5 * (own / i).ln_1p() - b2 * own / (i * (own + i))) / LN_2
}

/// Shannon-Hartley rate with ambient light ignored, at an arbitrary gain.
pub fn sh_rate_at_gain(layer: usize, p: &PowerVector, gain: f64, alpha: f64) -> f64 {
    let own = p.layer(layer);
    0.5 * (own / interference(layer, p, gain, alpha)).ln_1p() / LN_2
}

/// Ambient-corrected rate of SIC `layer` (1-based) in bits per channel use.
pub fn rate_static(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    Ok(rate_at_gain(layer, p, gains[layer - 1], noise))
}

/// ½log₂(1 + P/I).
pub fn rate_sh(layer: usize, p: &PowerVector, gains: &[f64], alpha: f64) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    Ok(sh_rate_at_gain(layer, p, gains[layer - 1], alpha))
}

pub fn static_rates(p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<RateReport> {
    let per_user = (1..=p.len())
        .map(|u| rate_static(u, p, gains, noise))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport::new(per_user, RateMethod::Analytic))
}

pub fn sh_rates(p: &PowerVector, gains: &[f64], alpha: f64) -> Result<Vec<f64>> {
    (1..=p.len()).map(|u| rate_sh(u, p, gains, alpha)).collect()
}

/// Entropy of the received mixture at `layer`, nats.
pub fn entropy_y(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    let total = p.layer(layer) + interference(layer, p, gains[layer - 1], noise.alpha());
    Ok(0.5 * (2.0 * PI * total).ln() + 0.5 + noise.beta().powi(2) / total)
}

/// Entropy of the interference-plus-distortion term at `layer`, nats.
pub fn entropy_p(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    let i = interference(layer, p, gains[layer - 1], noise.alpha());
    Ok(0.5 * (2.0 * PI * i).ln() + 0.5 + noise.beta().powi(2) / i)
}

/// −E[log p(φ)] = (α²+β²)/(2α²) + ½ln(2πα²), nats.
pub fn entropy_phi(noise: &NoiseParams) -> f64 {
    let a2 = noise.alpha() * noise.alpha();
    noise.variance() / (2.0 * a2) + 0.5 * (2.0 * PI * a2).ln()
}

fn near(theta: f64, k: f64) -> bool {
    (theta - k).abs() < POLE_GAP
}

/// Antiderivative of x^{−θ}·ln(bx + c).
pub fn lemma_i(x: f64, theta: f64, b: f64, c: f64) -> Result<f64> {
    if !(x > 0.0) || !(c > 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!(
            "lemma_i needs x > 0, b >= 0, c > 0 (x={x}, b={b}, c={c})"
        )));
    }
    if near(theta, 1.0) || near(theta, 2.0) {
        return Err(Error::Domain(format!(
            "lemma_i has a pole at theta = {theta}; integrate numerically instead"
        )));
    }
    let t1 = theta - 1.0;
    let f = gauss_2f1(1.0, 1.0 - theta, 2.0 - theta, -b * x / c)?;
    Ok(x.powf(1.0 - theta) * (f - t1 * (b * x + c).ln() - 1.0) / (t1 * t1))
}

/// Antiderivative of (x^{1−θ}/ζ²)·[(1 + k₁x/ζ²)^{−1} − (1 + k₂x/ζ²)^{−1}]; multiply by β² for the penalty.
pub fn lemma_b(x: f64, theta: f64, k1: f64, k2: f64, zeta: f64) -> Result<f64> {
    if !(x > 0.0) || !(zeta > 0.0) || !(k1 >= 0.0) || !(k2 >= 0.0) {
        return Err(Error::Domain(format!(
            "lemma_b needs x > 0, k >= 0, zeta > 0 (x={x}, k1={k1}, k2={k2}, zeta={zeta})"
        )));
    }
    if near(theta, 2.0) {
        return Err(Error::Domain(format!(
            "lemma_b has a pole at theta = {theta}; integrate numerically instead"
        )));
    }
    if k1 == k2 {
        return Ok(0.0);
    }
    let z2 = zeta * zeta;
    let s = 2.0 - theta;
    let f1 = gauss_2f1(1.0, s, s + 1.0, -k1 * x / z2)?;
    let f2 = gauss_2f1(1.0, s, s + 1.0, -k2 * x / z2)?;
    Ok(x.powf(s) / (z2 * s) * (f1 - f2))
}

fn rate_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_tolerances(1e-13, 1e-11)
}

fn log_breaks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / n as f64).exp())
        .collect();
    pts[0] = lo;
    pts[n] = hi;
    pts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaIntegral {
    /// Lemma combination evaluated at h_min², h_max²: ∫ x^{−θ} R(√x) dx, bits.
    pub lemma_form: f64,
    /// ∫ h^{−θ} R(h) dh over [h_min, h_max], bits.
    pub quadrature_twin: f64,
    /// The lemma form hit a pole and was integrated numerically.
    pub pole_fallback: bool,
}

impl ThetaIntegral {
    pub fn relative_deviation(&self) -> f64 {
        ((self.lemma_form - self.quadrature_twin) / self.quadrature_twin).abs()
    }
}

fn check_mobility_inputs(layer: usize, p: &PowerVector) -> Result<()> {
    if layer == 0 || layer > p.len() {
        return Err(Error::Range(format!("layer {layer} outside 1..={}", p.len())));
    }
    Ok(())
}

/// ∫ x^{−θ} R(√x) dx over [h_min², h_max²] from the lemma antiderivatives; the flag marks a
/// numerical fallback at a pole.
fn lemma_measure(
    theta: f64,
    layer: usize,
    p: &PowerVector,
    noise: &NoiseParams,
    model: &MobilityModel,
) -> Result<(f64, bool)> {
    let (x1, x2) = (model.h_min().powi(2), model.h_max().powi(2));
    if near(theta, 1.0) || near(theta, 2.0) {
        let value = integrate_with_breaks(
            |x: f64| x.powf(-theta) * rate_at_gain(layer, p, x.sqrt(), noise),
            &log_breaks(x1, x2, 8),
            &rate_spec(),
        )?
        .value;
        return Ok((value, true));
    }
    let a2 = noise.alpha() * noise.alpha();
    let undecoded = p.interference_power(layer);
    let with_own = undecoded + p.layer(layer);
    let log_part =
        lemma_i(x2, theta, with_own, a2)? - lemma_i(x1, theta, with_own, a2)? - lemma_i(x2, theta, undecoded, a2)?
            + lemma_i(x1, theta, undecoded, a2)?;
    let penalty = lemma_b(x2, theta, undecoded, with_own, noise.alpha())?
        - lemma_b(x1, theta, undecoded, with_own, noise.alpha())?;
    let b2 = noise.beta() * noise.beta();
    Ok(((0.5 * log_part - b2 * penalty) / LN_2, false))
}

/// Both readings of ρ₁(θ) for `layer` under the mobility model.
pub fn expected_rate_theta(
    theta: f64,
    layer: usize,
    p: &PowerVector,
    noise: &NoiseParams,
    model: &MobilityModel,
) -> Result<ThetaIntegral> {
    check_mobility_inputs(layer, p)?;
    let (lemma_form, pole_fallback) = lemma_measure(theta, layer, p, noise, model)?;
    let quadrature_twin = integrate_with_breaks(
        |h: f64| h.powf(-theta) * rate_at_gain(layer, p, h, noise),
        &log_breaks(model.h_min(), model.h_max(), 8),
        &rate_spec(),
    )?
    .value;
    Ok(ThetaIntegral {
        lemma_form,
        quadrature_twin,
        pole_fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedRate {
    /// ∫ R(h)·p_(u)(h) dh.
    pub quadrature: f64,
    /// Binomial combination of lemma terms with the dh = dx/(2√x) Jacobian.
    pub closed_form: f64,
    /// Same combination without the Jacobian factor.
    pub printed_closed_form: f64,
    pub pole_fallback: bool,
}

/// Mobility-averaged rate of `layer` out of `total_users` ordered users, bits.
pub fn expected_rate_user(
    layer: usize,
    total_users: usize,
    p: &PowerVector,
    noise: &NoiseParams,
    model: &MobilityModel,
) -> Result<ExpectedRate> {
    if total_users != p.len() {
        return Err(Error::Argument(format!("{total_users} users but {} powers", p.len())));
    }
    check_mobility_inputs(layer, p)?;
    let quadrature = integrate_with_breaks(
        |h: f64| rate_at_gain(layer, p, h, noise) * ordered_pdf(model, total_users, layer, h).expect("layer checked"),
        &log_breaks(model.h_min(), model.h_max(), 8),
        &rate_spec(),
    )?
    .value;
    let mut cache: BTreeMap<usize, (f64, bool)> = BTreeMap::new();
    let mut printed = 0.0;
    let mut pole_fallback = false;
    for (k, coefficient) in ordered_pdf_terms(model, total_users, layer)? {
        let (value, flagged) = match cache.entry(k) {
            Entry::Occupied(hit) => *hit.get(),
            Entry::Vacant(slot) => {
                let theta = k as f64 / (model.lambertian_m() + 3.0) + 1.0;
                *slot.insert(lemma_measure(theta, layer, p, noise, model)?)
            }
        };
        pole_fallback |= flagged;
        printed += coefficient * value;
    }
    Ok(ExpectedRate {
        quadrature,
        closed_form: 0.5 * printed,
        printed_closed_form: printed,
        pole_fallback,
    })
}

/// Per-user mobility rates: the quadrature report carries the closed forms as diagnostics.
pub fn mobility_rates(p: &PowerVector, noise: &NoiseParams, model: &MobilityModel) -> Result<RateReport> {
    let u_total = p.len();
    let rates = (1..=u_total)
        .map(|u| expected_rate_user(u, u_total, p, noise, model))
        .collect::<Result<Vec<_>>>()?;
    let mut report = RateReport::new(rates.iter().map(|r| r.quadrature).collect(), RateMethod::Quadrature);
    for (u, r) in rates.iter().enumerate() {
        report
            .diagnostics
            .insert(format!("closed_form.{}", u + 1), r.closed_form);
        report
            .diagnostics
            .insert(format!("printed_closed_form.{}", u + 1), r.printed_closed_form);
        report.diagnostics.insert(
            format!("pole_fallback.{}", u + 1),
            if r.pole_fallback { 1.0 } else { 0.0 },
        );
    }
    Ok(report)
}

/// Average of R over sorted tuples of sampled gains.
pub fn mc_mobility_rates(
    p: &PowerVector,
    noise: &NoiseParams,
    model: &MobilityModel,
    tuples: usize,
    seed: u64,
) -> Result<RateReport> {
    if tuples == 0 {
        return Err(Error::Argument("need at least one sampled tuple".into()));
    }
    let u_total = p.len();
    let draws = sample_gains(model, tuples * u_total, seed);
    let mut sums = vec![0.0; u_total];
    let mut tuple = vec![0.0; u_total];
    for chunk in draws.chunks_exact(u_total) {
        tuple.copy_from_slice(chunk);
        tuple.sort_by(f64::total_cmp);
        for (u, s) in sums.iter_mut().enumerate() {
            *s += rate_at_gain(u + 1, p, tuple[u], noise);
        }
    }
    let mut report = RateReport::new(sums.iter().map(|s| s / tuples as f64).collect(), RateMethod::MonteCarlo);
    report.diagnostics.insert("tuples".into(), tuples as f64);
    Ok(report)
}

/// Histogram-entropy estimate of H(Y) − H(P) in bits, with Y = √P_u·g + P and P a Gaussian of
/// variance I plus the ambient variate.
pub fn mc_rate_entropy(
    layer: usize,
    p: &PowerVector,
    gains: &[f64],
    noise: &NoiseParams,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    if n < MIN_ENTROPY_SAMPLES {
        return Err(Error::Argument(format!(
            "entropy estimates need at least {MIN_ENTROPY_SAMPLES} samples, got {n}"
        )));
    }
    let own = p.layer(layer);
    if own == 0.0 {
        return Ok(0.0);
    }
    let i = interference(layer, p, gains[layer - 1], noise.alpha());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = chi_squared_sampler(noise.nu());
    let nu = noise.nu() as f64;
    let (sd_i, sd_own, bp) = (i.sqrt(), own.sqrt(), noise.beta_prime());
    let mut disturbance = Vec::with_capacity(n);
    let mut received = Vec::with_capacity(n);
    for _ in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        let w = chi_squared_draw(&mut rng, noise.nu(), sampler.as_ref());
        let s: f64 = rng.sample(StandardNormal);
        let d = sd_i * g + bp * (w - nu);
        disturbance.push(d);
        received.push(d + sd_own * s);
    }
    Ok((entropy_estimate(&received)? - entropy_estimate(&disturbance)?) / LN_2)
}

/// H(Y) − H(P) in bits with both entropies integrated from convolution densities.
pub fn mi_rate_quadrature(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    check_inputs(layer, p, gains)?;
    let own = p.layer(layer);
    if own == 0.0 {
        return Ok(0.0);
    }
    let i = interference(layer, p, gains[layer - 1], noise.alpha());
    let mixture = |variance: f64| NoiseParams::new(variance.sqrt(), noise.beta(), noise.nu(), noise.truncation_m());
    Ok((oracle_entropy(&mixture(own + i)?)? - oracle_entropy(&mixture(i)?)?) / LN_2)
}

/// Plain quadrature of a lemma integrand over [x1, x2], for cross-checks.
pub fn integrate_lemma_i(x1: f64, x2: f64, theta: f64, b: f64, c: f64) -> Result<f64> {
    let spec = QuadratureSpec::default().with_tolerances(1e-14, 1e-12);
    Ok(integrate(|x: f64| x.powf(-theta) * (b * x + c).ln(), x1, x2, &spec)?.value)
}

pub fn integrate_lemma_b(x1: f64, x2: f64, theta: f64, k1: f64, k2: f64, zeta: f64) -> Result<f64> {
    let z2 = zeta * zeta;
    let spec = QuadratureSpec::default().with_tolerances(1e-14, 1e-12);
    Ok(integrate(
        |x: f64| x.powf(1.0 - theta) / z2 * (1.0 / (1.0 + k1 * x / z2) - 1.0 / (1.0 + k2 * x / z2)),
        x1,
        x2,
        &spec,
    )?
    .value)
}
