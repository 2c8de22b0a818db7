//! Reference scenarios, SNR sweeps and the per-figure data sets.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::alloc::{allocate_mobility, allocate_sh_baseline, allocate_static, effective_gains, grpa, QosSpec};
use crate::channel::{lambertian_order, los_gain, LedGeometry, MobilityModel};
use crate::error::{Error, Result};
use crate::noise::{histogram, pdf_high_nu, pdf_oracle, sample_phi, HermiteSeriesPdf, NoiseParams};
use crate::rate::{
    mc_mobility_rates, mc_rate_entropy, mi_rate_quadrature, mobility_rates, rate_static, sum_rate, PowerVector,
};

pub const DEFAULT_SEED: u64 = 20_240_917;
pub const REFERENCE_LED_HEIGHT: f64 = 2.25;
pub const REFERENCE_RADII: [f64; 4] = [2.0, 1.5, 1.0, 0.5];
pub const REFERENCE_THRESHOLDS: [f64; 4] = [0.2, 0.6, 2.0, 5.0];
pub const REFERENCE_PD_AREA: f64 = 1e-4;
pub const REFERENCE_FOV_DEG: f64 = 70.0;

/// P_tot giving SNR_dB = 10·log₁₀(P_tot/(α² + β²)).
pub fn total_power_for_snr(snr_db: f64, noise: &NoiseParams) -> f64 {
    10f64.powf(snr_db / 10.0) * noise.variance()
}

/// start, start + step, … up to `stop` inclusive (with a half-step guard against rounding).
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Argument(format!("bad SNR range {start}..{stop} step {step}")));
    }
    let count = ((stop - start) / step + 0.5).floor() as usize;
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

/// Deterministic per-point seed derived from the root seed.
pub fn point_seed(root: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = root.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// LOS gains of receivers at horizontal `radii` under an LED at `led_height`, scaled so the
/// weakest is one and sorted ascending.
pub fn static_gains(half_angle_deg: f64, radii: &[f64], led_height: f64) -> Result<Vec<f64>> {
    let half_angle = half_angle_deg.to_radians();
    lambertian_order(half_angle)?;
    let raw = radii
        .iter()
        .map(|r| {
            let distance = (r * r + led_height * led_height).sqrt();
            let angle = (r / led_height).atan().max(f64::MIN_POSITIVE);
            let geom = LedGeometry::new(
                REFERENCE_PD_AREA,
                distance,
                angle,
                angle,
                REFERENCE_FOV_DEG.to_radians(),
                half_angle,
            )?;
            let g = los_gain(&geom);
            if g > 0.0 {
                Ok(g)
            } else {
                Err(Error::Domain(format!(
                    "receiver at radius {r} m is outside the field of view"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let weakest = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut gains: Vec<f64> = raw.iter().map(|g| g / weakest).collect();
    gains.sort_by(f64::total_cmp);
    Ok(gains)
}

pub fn reference_static_gains(half_angle_deg: f64) -> Result<Vec<f64>> {
    static_gains(half_angle_deg, &REFERENCE_RADII, REFERENCE_LED_HEIGHT)
}

pub fn mobility_model(half_angle_deg: f64, h_min: f64, h_max: f64) -> Result<MobilityModel> {
    MobilityModel::from_bounds(h_min, h_max, lambertian_order(half_angle_deg.to_radians())?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Static { gains: Vec<f64> },
    Mobility { model: MobilityModel, users: usize },
}

impl Scenario {
    pub fn users(&self) -> usize {
        match self {
            Scenario::Static { gains } => gains.len(),
            Scenario::Mobility { users, .. } => *users,
        }
    }

    /// Gains the allocators see: the static gains, or the per-layer effective gains.
    pub fn design_gains(&self) -> Result<Vec<f64>> {
        match self {
            Scenario::Static { gains } => Ok(gains.clone()),
            Scenario::Mobility { model, users } => effective_gains(model, *users),
        }
    }

    /// Sum rate of `powers`: closed form for static users, quadrature average under mobility.
    pub fn sum_rate(&self, powers: &PowerVector, noise: &NoiseParams) -> Result<f64> {
        match self {
            Scenario::Static { gains } => {
                let per_user = (1..=gains.len())
                    .map(|u| rate_static(u, powers, gains, noise))
                    .collect::<Result<Vec<_>>>()?;
                Ok(sum_rate(&per_user))
            }
            Scenario::Mobility { model, .. } => Ok(mobility_rates(powers, noise, model)?.sum),
        }
    }
}

/// Which allocation sets the powers of a rate-validation figure.
#[derive(Debug, Clone, PartialEq)]
pub enum RatePowers {
    Grpa,
    Proposed { thresholds: Vec<f64> },
}

impl RatePowers {
    fn powers(&self, scenario: &Scenario, total: f64, noise: &NoiseParams) -> Result<PowerVector> {
        let gains = scenario.design_gains()?;
        match self {
            RatePowers::Grpa => grpa(&gains, total),
            RatePowers::Proposed { thresholds } => {
                let qos = QosSpec::new(thresholds.clone(), total)?;
                Ok(match scenario {
                    Scenario::Static { gains } => allocate_static(gains, &qos, noise)?,
                    Scenario::Mobility { model, users } => allocate_mobility(model, *users, &qos, noise)?,
                }
                .powers)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub proposed: f64,
    pub grpa: f64,
    pub sh_baseline: f64,
    pub awgn_reference: f64,
    pub converged: bool,
    pub qos_feasible: bool,
}

impl SweepRow {
    pub fn proposed_gap(&self) -> f64 {
        self.awgn_reference - self.proposed
    }

    pub fn sh_gap(&self) -> f64 {
        self.awgn_reference - self.sh_baseline
    }
}

/// One sweep point. The AWGN reference is the ambient-free sum rate of the Shannon-Hartley design.
pub fn sweep_point(scenario: &Scenario, qos: &QosSpec, noise: &NoiseParams, snr_db: f64) -> Result<SweepRow> {
    let total = total_power_for_snr(snr_db, noise);
    let qos = qos.clone().with_total_power(total)?;
    let gains = scenario.design_gains()?;
    let proposed = allocate_static(&gains, &qos, noise)?;
    let baseline = allocate_sh_baseline(&gains, &qos, noise)?;
    let ratio = grpa(&gains, total)?;
    let clean = noise.with_beta(0.0)?;
    Ok(SweepRow {
        snr_db,
        proposed: scenario.sum_rate(&proposed.powers, noise)?,
        grpa: scenario.sum_rate(&ratio, noise)?,
        sh_baseline: scenario.sum_rate(&baseline.powers, noise)?,
        awgn_reference: scenario.sum_rate(&baseline.powers, &clean)?,
        converged: proposed.converged && baseline.converged,
        qos_feasible: proposed.qos_feasible,
    })
}

/// Sweep points evaluated in parallel, returned in SNR order.
pub fn sum_rate_sweep(scenario: &Scenario, qos: &QosSpec, noise: &NoiseParams, snrs: &[f64]) -> Result<Vec<SweepRow>> {
    snrs.par_iter()
        .map(|&snr| sweep_point(scenario, qos, noise, snr))
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "snr_db,proposed,grpa,sh_baseline,awgn_reference")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.snr_db, r.proposed, r.grpa, r.sh_baseline, r.awgn_reference
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub snr_db: f64,
    pub user: usize,
    pub rate_analytic: f64,
    pub rate_quadrature: f64,
    pub rate_mc: f64,
}

/// Static rates per SNR: closed form, information rate by quadrature, histogram-entropy MC.
pub fn static_rate_rows(
    gains: &[f64],
    noise: &NoiseParams,
    powers: &RatePowers,
    snrs: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    let scenario = Scenario::Static { gains: gains.to_vec() };
    let per_point = snrs
        .par_iter()
        .enumerate()
        .map(|(k, &snr)| {
            let p = powers.powers(&scenario, total_power_for_snr(snr, noise), noise)?;
            (1..=gains.len())
                .map(|u| {
                    Ok(RateRow {
                        snr_db: snr,
                        user: u,
                        rate_analytic: rate_static(u, &p, gains, noise)?,
                        rate_quadrature: mi_rate_quadrature(u, &p, gains, noise)?,
                        rate_mc: mc_rate_entropy(u, &p, gains, noise, mc_samples, point_seed(seed, k * 64 + u))?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Mobility rates per SNR: lemma closed form, quadrature, sorted-sample MC.
pub fn mobility_rate_rows(
    model: &MobilityModel,
    users: usize,
    noise: &NoiseParams,
    powers: &RatePowers,
    snrs: &[f64],
    tuples: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    let scenario = Scenario::Mobility { model: *model, users };
    let per_point = snrs
        .par_iter()
        .enumerate()
        .map(|(k, &snr)| {
            let p = powers.powers(&scenario, total_power_for_snr(snr, noise), noise)?;
            let quad = mobility_rates(&p, noise, model)?;
            let mc = mc_mobility_rates(&p, noise, model, tuples, point_seed(seed, k))?;
            Ok((1..=users)
                .map(|u| RateRow {
                    snr_db: snr,
                    user: u,
                    rate_analytic: quad.diagnostics[&format!("closed_form.{u}")],
                    rate_quadrature: quad.per_user[u - 1],
                    rate_mc: mc.per_user[u - 1],
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut out: W) -> io::Result<()> {
    writeln!(out, "snr_db,user,rate_analytic,rate_quadrature,rate_mc")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.snr_db, r.user, r.rate_analytic, r.rate_quadrature, r.rate_mc
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfRow {
    pub phi: f64,
    pub empirical: f64,
    pub series: f64,
    pub high_nu: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfComparison {
    pub rows: Vec<PdfRow>,
    /// L1 between the sample histogram and the series over all histogram bins.
    pub l1_empirical_series: f64,
    pub l1_empirical_oracle: f64,
    /// Largest |series − oracle| on the grid.
    pub sup_series_oracle: f64,
}

/// Four density estimates of φ on `grid_points` points of [lo, hi].
pub fn pdf_comparison(
    noise: &NoiseParams,
    samples: usize,
    bins: usize,
    range: (f64, f64),
    grid_points: usize,
    seed: u64,
) -> Result<PdfComparison> {
    if grid_points < 2 || !(range.1 > range.0) {
        return Err(Error::Argument(
            "need at least two grid points on a non-empty range".into(),
        ));
    }
    let series = HermiteSeriesPdf::new(noise)?;
    let draws = sample_phi(noise, samples, seed);
    let empirical = histogram(&draws, bins)?;
    let step = (range.1 - range.0) / (grid_points - 1) as f64;
    let rows = (0..grid_points)
        .into_par_iter()
        .map(|i| {
            let phi = range.0 + step * i as f64;
            Ok(PdfRow {
                phi,
                empirical: empirical.density_at(phi),
                series: series.pdf(phi),
                high_nu: pdf_high_nu(noise, phi),
                oracle: pdf_oracle(noise, phi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_series_oracle = rows.iter().map(|r| (r.series - r.oracle).abs()).fold(0.0, f64::max);
    let l1_empirical_oracle = empirical.l1_distance(|x| pdf_oracle(noise, x).unwrap_or(f64::NAN));
    Ok(PdfComparison {
        rows,
        l1_empirical_series: empirical.l1_distance(|x| series.pdf(x)),
        l1_empirical_oracle,
        sup_series_oracle,
    })
}

pub fn write_pdf_csv<W: Write>(rows: &[PdfRow], mut out: W) -> io::Result<()> {
    writeln!(out, "phi,empirical,series_m10,high_nu,oracle")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.phi, r.empirical, r.series, r.high_nu, r.oracle)?;
    }
    Ok(())
}
