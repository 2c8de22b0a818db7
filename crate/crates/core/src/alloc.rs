//! QoS-constrained sum-rate power allocation, the printed fixed-point recursion, and the GRPA
//! and Shannon-Hartley baselines.

use std::fmt;
use std::io::{self, Write};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::channel::{ordered_mean_square_gain, MobilityModel};
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::rate::{check_gains, rate_at_gain, PowerVector};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
/// Largest user count the exact polytope projection accepts.
pub const MAX_USERS: usize = 12;

const ARMIJO: f64 = 1e-4;
const MAX_STEP: f64 = 1e6;
const MIN_STEP: f64 = 1e-14;
const FEASIBILITY_TOL: f64 = 1e-12;
// a later start must beat the incumbent by this much (normalised nats) to replace it
const START_TIE: f64 = 1e-8;

/// How a per-user threshold R_th becomes an SINR floor κ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QosMetric {
    /// ½log₂(1 + SINR) ≥ R_th, the Shannon-Hartley rate.
    #[default]
    HalfLog2,
    /// log₂(1 + SINR) ≥ R_th, i.e. κ = 2^{R_th} − 1.
    Log2,
}

impl QosMetric {
    pub fn sinr_floor(self, threshold: f64) -> f64 {
        match self {
            QosMetric::HalfLog2 => (2.0 * threshold).exp2() - 1.0,
            QosMetric::Log2 => threshold.exp2() - 1.0,
        }
    }

    pub fn rate(self, sinr: f64) -> f64 {
        match self {
            QosMetric::HalfLog2 => 0.5 * sinr.ln_1p() / std::f64::consts::LN_2,
            QosMetric::Log2 => sinr.ln_1p() / std::f64::consts::LN_2,
        }
    }
}

impl fmt::Display for QosMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QosMetric::HalfLog2 => "half_log2",
            QosMetric::Log2 => "log2",
        })
    }
}

/// Sum-rate objective handed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Σ of the ambient-corrected rates.
    #[default]
    Exact,
    /// Σ of ½ln(1 + P/I) − β²/I, the high-SINR simplification.
    Approximate,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Exact => "exact",
            Objective::Approximate => "approximate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    thresholds: Vec<f64>,
    total_power: f64,
    epsilon: f64,
    max_iterations: usize,
    metric: QosMetric,
    objective: Objective,
}

impl QosSpec {
    pub fn new(thresholds: Vec<f64>, total_power: f64) -> Result<Self> {
        if thresholds.is_empty() || thresholds.len() > MAX_USERS {
            return Err(Error::Argument(format!(
                "between 1 and {MAX_USERS} users supported, got {}",
                thresholds.len()
            )));
        }
        if thresholds.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Argument(
                "rate thresholds must be finite and non-negative".into(),
            ));
        }
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(Error::Argument(format!(
                "total power must be positive, got {total_power}"
            )));
        }
        Ok(Self {
            thresholds,
            total_power,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            metric: QosMetric::default(),
            objective: Objective::default(),
        })
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, ..self })
    }

    pub fn with_max_iterations(self, max_iterations: usize) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be positive".into()));
        }
        Ok(Self { max_iterations, ..self })
    }

    pub fn with_total_power(self, total_power: f64) -> Result<Self> {
        let checked = Self::new(self.thresholds.clone(), total_power)?;
        Ok(Self {
            total_power: checked.total_power,
            ..self
        })
    }

    pub fn with_metric(self, metric: QosMetric) -> Self {
        Self { metric, ..self }
    }

    pub fn with_objective(self, objective: Objective) -> Self {
        Self { objective, ..self }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn metric(&self) -> QosMetric {
        self.metric
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn users(&self) -> usize {
        self.thresholds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub powers: PowerVector,
    pub iterations: usize,
    pub converged: bool,
    /// QoS-metric rate minus threshold per user; negative entries are unmet floors.
    pub constraint_residuals: Vec<f64>,
    /// Ambient-corrected rates at the returned powers, bits.
    pub achieved_rates: Vec<f64>,
    /// Rates under the QoS metric at the returned powers, bits.
    pub qos_rates: Vec<f64>,
    pub qos_feasible: bool,
    /// First (1-based) user whose floor was enforced.
    pub served_from: usize,
    /// Projected-gradient stationarity residual in budget-normalised units.
    pub stationarity: f64,
}

impl AllocationResult {
    pub fn sum_rate(&self) -> f64 {
        self.achieved_rates.iter().sum()
    }

    /// `#`-prefixed metadata followed by `user,power,achieved_rate_bpcu`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# iterations={}", self.iterations)?;
        writeln!(out, "# converged={}", self.converged)?;
        writeln!(out, "# qos_feasible={}", self.qos_feasible)?;
        writeln!(out, "# served_from={}", self.served_from)?;
        writeln!(out, "# stationarity={:e}", self.stationarity)?;
        for (u, r) in self.constraint_residuals.iter().enumerate() {
            writeln!(out, "# constraint_residual.{}={r}", u + 1)?;
        }
        writeln!(out, "user,power,achieved_rate_bpcu")?;
        for (u, (p, r)) in self.powers.powers().iter().zip(&self.achieved_rates).enumerate() {
            writeln!(out, "{},{p},{r}", u + 1)?;
        }
        Ok(())
    }
}

/// Gain-ratio allocation with weights (h₁/h_u)^u.
pub fn grpa(gains: &[f64], total_power: f64) -> Result<PowerVector> {
    if gains.is_empty() {
        return Err(Error::Argument("no users".into()));
    }
    check_gains(gains)?;
    let weights: Vec<f64> = gains
        .iter()
        .enumerate()
        .map(|(i, h)| (gains[0] / h).powi(i as i32 + 1))
        .collect();
    let norm: f64 = weights.iter().sum();
    let mut powers: Vec<f64> = weights.iter().map(|w| total_power * w / norm).collect();
    let drift = total_power - powers.iter().sum::<f64>();
    powers[0] += drift;
    PowerVector::with_total(powers, total_power)
}

/// Iteration state of the printed recursion: current powers, slacks η and Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionState {
    pub powers: Vec<f64>,
    pub slack: Vec<f64>,
    pub omega: Vec<f64>,
}

impl RecursionState {
    pub fn uniform(users: usize, total_power: f64) -> Self {
        Self {
            powers: vec![total_power / users as f64; users],
            slack: vec![0.0; users],
            omega: vec![0.0; users],
        }
    }
}

/// The closed-form recursion for P_u (u ≥ 2) in terms of the weaker users' powers, before Ω.
pub fn recursion_power(layer: usize, state: &RecursionState, qos: &QosSpec, noise: &NoiseParams) -> Result<f64> {
    let users = qos.users();
    if layer < 2 || layer > users {
        return Err(Error::Range(format!(
            "recursion defined for layers 2..={users}, got {layer}"
        )));
    }
    let b2 = noise.beta() * noise.beta();
    let level = |u: usize| qos.thresholds[u - 1] + state.slack[u - 1];
    let denominator: f64 = (1..layer)
        .map(|q| {
            let k = level(q).exp2() - 1.0;
            let p = state.powers[q - 1];
            k / (2.0 * p) - b2 * k * k / (p * p)
        })
        .sum();
    if !(denominator > 0.0) {
        return Err(Error::Degenerate(format!(
            "recursion denominator {denominator} at layer {layer}"
        )));
    }
    let t = level(layer);
    Ok((t.exp2() - 1.0) / (t + 1.0).exp2() / denominator)
}

/// Orthogonal projection onto 1ᵀp = P_tot.
pub fn project_budget(p: &[f64], total_power: f64) -> Vec<f64> {
    let shift = (p.iter().sum::<f64>() - total_power) / p.len() as f64;
    p.iter().map(|x| x - shift).collect()
}

/// Minimum-norm Ω solving (I − 11ᵀ/U)Ω = p_proj − (I − 11ᵀ/U)p − P_tot·1/U.
pub fn omega_update(p: &[f64], p_proj: &[f64], total_power: f64) -> Vec<f64> {
    let users = p.len() as f64;
    let mean_p = p.iter().sum::<f64>() / users;
    let bracket: Vec<f64> = p_proj
        .iter()
        .zip(p)
        .map(|(pp, x)| pp - (x - mean_p) - total_power / users)
        .collect();
    let mean_b = bracket.iter().sum::<f64>() / users;
    bracket.iter().map(|b| b - mean_b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintedLoop {
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Layers whose recursion denominator went non-positive at least once.
    pub degenerate_layers: Vec<usize>,
}

/// The printed loop: recursion for u ≥ 2 in SIC order (user 1 absorbs the budget), budget
/// projection, Ω update, clamp, repeated until ‖p − p_prev‖∞ ≤ ε.
pub fn printed_recursion_loop(qos: &QosSpec, noise: &NoiseParams) -> Result<PrintedLoop> {
    let users = qos.users();
    let total = qos.total_power();
    let mut state = RecursionState::uniform(users, total);
    let mut degenerate_layers = Vec::new();
    for iteration in 1..=qos.max_iterations() {
        let previous = state.powers.clone();
        for u in 2..=users {
            match recursion_power(u, &state, qos, noise) {
                Ok(p) => state.powers[u - 1] = p + state.omega[u - 1],
                Err(Error::Degenerate(_)) => {
                    if !degenerate_layers.contains(&u) {
                        degenerate_layers.push(u);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let projected = project_budget(&state.powers, total);
        state.omega = omega_update(&state.powers, &projected, total);
        state.powers = clamp_to_budget(&projected, total);
        let step = max_abs_diff(&state.powers, &previous);
        if step <= qos.epsilon() {
            return Ok(PrintedLoop {
                powers: state.powers,
                iterations: iteration,
                converged: true,
                degenerate_layers,
            });
        }
    }
    Ok(PrintedLoop {
        powers: state.powers,
        iterations: qos.max_iterations(),
        converged: false,
        degenerate_layers,
    })
}

/// [·]₊ followed by re-projection restricted to the positive support.
fn clamp_to_budget(p: &[f64], total_power: f64) -> Vec<f64> {
    let mut out: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    loop {
        let support: Vec<usize> = (0..out.len()).filter(|&i| out[i] > 0.0).collect();
        if support.is_empty() {
            return vec![total_power / out.len() as f64; out.len()];
        }
        let shift = (out.iter().sum::<f64>() - total_power) / support.len() as f64;
        if shift.abs() <= f64::EPSILON * total_power {
            return out;
        }
        let mut clipped = false;
        for &i in &support {
            out[i] -= shift;
            if out[i] < 0.0 {
                out[i] = 0.0;
                clipped = true;
            }
        }
        if !clipped {
            return out;
        }
    }
}

/// Residual of the zero-gradient condition with SINR written through κ_u = 2^{R_th} − 1:
/// max over u ≥ 2 of |2^{R_u} − (κ_u/2P_u) / Σ_{q<u}[κ_q/2P_q − β²κ_q²/P_q²]|.
pub fn recursion_residual(powers: &[f64], qos: &QosSpec, noise: &NoiseParams) -> f64 {
    let b2 = noise.beta() * noise.beta();
    let kappa: Vec<f64> = qos.thresholds().iter().map(|r| r.exp2() - 1.0).collect();
    let mut denominator = 0.0;
    let mut worst: f64 = 0.0;
    for u in 0..powers.len() {
        if u > 0 {
            let lhs = qos.thresholds()[u].exp2();
            let rhs = kappa[u] / (2.0 * powers[u]) / denominator;
            worst = worst.max((lhs - rhs).abs());
        }
        denominator += kappa[u] / (2.0 * powers[u]) - b2 * kappa[u] * kappa[u] / (powers[u] * powers[u]);
    }
    worst
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// ∂/∂P_u of Σ(½ln(1 + P/I) − β²/I), nats per unit power.
pub fn sum_rate_gradient(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    gradient_component(layer, p, gains, noise, Objective::Approximate)
}

/// ∂/∂P_u of the sum of ambient-corrected rates, nats per unit power.
pub fn exact_sum_rate_gradient(layer: usize, p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    gradient_component(layer, p, gains, noise, Objective::Exact)
}

/// Σ(½ln(1 + P/I) − β²/I) in nats.
pub fn approximate_sum_rate(p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    let problem = Problem::unconstrained(p, gains, noise, Objective::Approximate)?;
    Ok(problem.value(&normalised(p)))
}

/// Sum of ambient-corrected rates in nats.
pub fn exact_sum_rate(p: &PowerVector, gains: &[f64], noise: &NoiseParams) -> Result<f64> {
    let problem = Problem::unconstrained(p, gains, noise, Objective::Exact)?;
    Ok(problem.value(&normalised(p)))
}

fn normalised(p: &PowerVector) -> DVector<f64> {
    DVector::from_iterator(p.len(), p.powers().iter().map(|x| x / p.total()))
}

fn gradient_component(
    layer: usize,
    p: &PowerVector,
    gains: &[f64],
    noise: &NoiseParams,
    objective: Objective,
) -> Result<f64> {
    if layer == 0 || layer > p.len() {
        return Err(Error::Range(format!("layer {layer} outside 1..={}", p.len())));
    }
    let problem = Problem::unconstrained(p, gains, noise, objective)?;
    Ok(problem.gradient(&normalised(p))[layer - 1] / p.total())
}

/// Sum-rate problem in budget-normalised powers x = p/P_tot over {1ᵀx = 1, x_u − κ_u Σ_{l>u} x_l ≥ κ_u n_u}.
#[derive(Debug, Clone)]
struct Problem {
    noise_floor: Vec<f64>,
    penalty: f64,
    objective: Objective,
}

impl Problem {
    fn new(gains: &[f64], noise: &NoiseParams, total_power: f64, objective: Objective) -> Self {
        let a2 = noise.alpha() * noise.alpha();
        Self {
            noise_floor: gains.iter().map(|h| a2 / (h * h * total_power)).collect(),
            penalty: noise.beta() * noise.beta() / total_power,
            objective,
        }
    }

    fn unconstrained(p: &PowerVector, gains: &[f64], noise: &NoiseParams, objective: Objective) -> Result<Self> {
        if gains.len() != p.len() {
            return Err(Error::Argument(format!("{} gains for {} powers", gains.len(), p.len())));
        }
        check_gains(gains)?;
        if !(p.total() > 0.0) {
            return Err(Error::Argument("total power must be positive".into()));
        }
        Ok(Self::new(gains, noise, p.total(), objective))
    }

    /// (I_u, T_u) for every user.
    fn levels<'a>(&'a self, x: &'a DVector<f64>) -> impl Iterator<Item = (f64, f64)> + 'a {
        let mut tail: f64 = x.iter().sum();
        x.iter().zip(&self.noise_floor).map(move |(xu, n)| {
            tail -= xu;
            let i = tail.max(0.0) + n;
            (i, xu + i)
        })
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let c = self.penalty;
        self.levels(x)
            .map(|(i, t)| {
                let log = 0.5 * (t / i).ln();
                match self.objective {
                    Objective::Exact => log - c * (1.0 / i - 1.0 / t),
                    Objective::Approximate => log - c / i,
                }
            })
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.penalty;
        let mut carried = 0.0;
        let mut g = DVector::zeros(x.len());
        for (u, (i, t)) in self.levels(x).enumerate() {
            let d_t = match self.objective {
                Objective::Exact => 0.5 / t - c / (t * t),
                Objective::Approximate => 0.5 / t,
            };
            let d_i = -0.5 / i + c / (i * i);
            g[u] = carried + d_t;
            carried += d_t + d_i;
        }
        g
    }
}

/// Euclidean projection onto {1ᵀx = 1, A x ≥ b} by active-set enumeration with a KKT check.
#[derive(Debug, Clone)]
struct QosPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    warm: Vec<usize>,
}

impl QosPolytope {
    fn new(kappa: &[f64], noise_floor: &[f64]) -> Self {
        let users = kappa.len();
        let a = DMatrix::from_fn(users, users, |r, c| match c.cmp(&r) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => -kappa[r],
            std::cmp::Ordering::Less => 0.0,
        });
        let b = DVector::from_iterator(users, kappa.iter().zip(noise_floor).map(|(k, n)| k * n));
        Self { a, b, warm: Vec::new() }
    }

    fn violation(&self, x: &DVector<f64>) -> f64 {
        (&self.b - &self.a * x).iter().fold(0.0, |m, v| m.max(*v))
    }

    /// Candidate projection for one active set: (point, KKT violation), or None if degenerate.
    fn try_active(&self, y: &DVector<f64>, active: &[usize]) -> Option<(DVector<f64>, f64)> {
        let users = y.len();
        let rows = active.len() + 1;
        let m = DMatrix::from_fn(
            rows,
            users,
            |r, c| if r == 0 { 1.0 } else { self.a[(active[r - 1], c)] },
        );
        let rhs = DVector::from_fn(rows, |r, _| if r == 0 { 1.0 } else { self.b[active[r - 1]] });
        let gram = &m * m.transpose();
        let multipliers = gram.cholesky()?.solve(&(rhs - &m * y));
        let x = y + m.transpose() * &multipliers;
        let dual = multipliers.iter().skip(1).fold(0.0, |w: f64, mu| w.max(-mu));
        let scale = 1.0 + self.b.amax();
        let primal = self.violation(&x) / scale;
        Some((x, primal.max(dual)))
    }

    fn project(&mut self, y: &DVector<f64>) -> DVector<f64> {
        let users = y.len();
        if let Some((x, v)) = self.try_active(y, &self.warm.clone()) {
            if v <= FEASIBILITY_TOL {
                return x;
            }
        }
        let mut best: Option<(DVector<f64>, f64, Vec<usize>)> = None;
        for size in 0..users {
            for active in (0..users).combinations(size) {
                if let Some((x, v)) = self.try_active(y, &active) {
                    if v <= FEASIBILITY_TOL {
                        self.warm = active;
                        return x;
                    }
                    if best.as_ref().is_none_or(|(_, bv, _)| v < *bv) {
                        best = Some((x, v, active));
                    }
                }
            }
        }
        let (x, _, active) = best.expect("the empty active set is never degenerate");
        self.warm = active;
        x
    }
}

/// SINR floors with the weakest users' floors dropped until the rest fit the budget.
/// Returns (κ, 0-based index of the first served user).
fn feasible_floors(qos: &QosSpec, noise_floor: &[f64]) -> (Vec<f64>, usize) {
    let users = qos.users();
    let mut kappa: Vec<f64> = qos.thresholds().iter().map(|r| qos.metric().sinr_floor(*r)).collect();
    // minimal normalised power held by users u.. when every floor from u on is tight
    let mut minimal = vec![0.0; users + 1];
    for u in (0..users).rev() {
        minimal[u] = (1.0 + kappa[u]) * minimal[u + 1] + kappa[u] * noise_floor[u];
    }
    let first = (0..users).find(|&u| minimal[u] <= 1.0).unwrap_or(users);
    kappa[..first].iter_mut().for_each(|k| *k = 0.0);
    (kappa, first)
}

struct Run {
    x: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn ascend(problem: &Problem, polytope: &mut QosPolytope, start: DVector<f64>, qos: &QosSpec) -> Run {
    let mut x = polytope.project(&start);
    let mut step: f64 = 1.0;
    let mut value = problem.value(&x);
    for iteration in 1..=qos.max_iterations() {
        let g = problem.gradient(&x);
        step = (2.0 * step).min(MAX_STEP);
        let (next, next_value) = loop {
            let candidate = polytope.project(&(&x + step * &g));
            let candidate_value = problem.value(&candidate);
            if candidate_value >= value + ARMIJO * g.dot(&(&candidate - &x)) || step < MIN_STEP {
                break (candidate, candidate_value);
            }
            step *= 0.5;
        };
        let moved = (&next - &x).amax();
        x = next;
        value = next_value;
        if moved <= qos.epsilon() {
            return Run {
                x,
                value,
                iterations: iteration,
                converged: true,
            };
        }
    }
    Run {
        x,
        value,
        iterations: qos.max_iterations(),
        converged: false,
    }
}

/// Sum-rate maximisation over the QoS polytope for ascending `gains`.
pub fn allocate_static(gains: &[f64], qos: &QosSpec, noise: &NoiseParams) -> Result<AllocationResult> {
    let design = solve(gains, qos, noise)?;
    Ok(finish(design, gains, qos, noise))
}

/// Shannon-Hartley baseline: designed with the ambient term ignored, evaluated with it.
pub fn allocate_sh_baseline(gains: &[f64], qos: &QosSpec, noise: &NoiseParams) -> Result<AllocationResult> {
    let blind = noise.with_beta(0.0)?;
    let design = solve(gains, qos, &blind)?;
    Ok(finish(design, gains, qos, noise))
}

/// Per-layer effective gains √E[h_(u)²] of the ordered mobility model.
pub fn effective_gains(model: &MobilityModel, users: usize) -> Result<Vec<f64>> {
    (1..=users)
        .map(|u| ordered_mean_square_gain(model, users, u).map(f64::sqrt))
        .collect()
}

/// Mobility allocation: the static solver on the effective gains.
pub fn allocate_mobility(
    model: &MobilityModel,
    users: usize,
    qos: &QosSpec,
    noise: &NoiseParams,
) -> Result<AllocationResult> {
    if users != qos.users() {
        return Err(Error::Argument(format!("{users} users but {} thresholds", qos.users())));
    }
    allocate_static(&effective_gains(model, users)?, qos, noise)
}

struct Design {
    x: DVector<f64>,
    iterations: usize,
    converged: bool,
    served_from: usize,
    stationarity: f64,
}

fn solve(gains: &[f64], qos: &QosSpec, noise: &NoiseParams) -> Result<Design> {
    let users = qos.users();
    if gains.len() != users {
        return Err(Error::Argument(format!("{} gains for {users} thresholds", gains.len())));
    }
    check_gains(gains)?;
    let problem = Problem::new(gains, noise, qos.total_power(), qos.objective());
    let (kappa, served_from) = feasible_floors(qos, &problem.noise_floor);
    let mut polytope = QosPolytope::new(&kappa, &problem.noise_floor);
    let starts = std::iter::once(DVector::from_element(users, 1.0 / users as f64))
        .chain((0..users).map(|u| DVector::from_fn(users, |i, _| if i == u { 1.0 } else { 0.0 })));
    let mut best: Option<Run> = None;
    for start in starts {
        let run = ascend(&problem, &mut polytope, start, qos);
        if best.as_ref().is_none_or(|b| run.value > b.value + START_TIE) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let g = problem.gradient(&best.x);
    let stationarity = (polytope.project(&(&best.x + &g)) - &best.x).amax();
    Ok(Design {
        x: best.x,
        iterations: best.iterations,
        converged: best.converged,
        served_from,
        stationarity,
    })
}

fn finish(design: Design, gains: &[f64], qos: &QosSpec, noise: &NoiseParams) -> AllocationResult {
    let total = qos.total_power();
    let mut powers: Vec<f64> = design.x.iter().map(|x| (x * total).max(0.0)).collect();
    let drift = total - powers.iter().sum::<f64>();
    if let Some(top) = powers.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *top += drift;
    }
    let powers = PowerVector::with_total(powers, total).expect("projected powers exhaust the budget");
    let a2 = noise.alpha() * noise.alpha();
    let qos_rates: Vec<f64> = (1..=powers.len())
        .map(|u| {
            let interference = powers.interference_power(u) + a2 / (gains[u - 1] * gains[u - 1]);
            qos.metric().rate(powers.layer(u) / interference)
        })
        .collect();
    let constraint_residuals = qos_rates.iter().zip(qos.thresholds()).map(|(r, t)| r - t).collect();
    let achieved_rates = (1..=powers.len())
        .map(|u| rate_at_gain(u, &powers, gains[u - 1], noise))
        .collect();
    AllocationResult {
        powers,
        iterations: design.iterations,
        converged: design.converged,
        constraint_residuals,
        achieved_rates,
        qos_rates,
        qos_feasible: design.served_from == 0,
        served_from: design.served_from + 1,
        stationarity: design.stationarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_gains() -> Vec<f64> {
        vec![1.0, 1.632_478_19, 2.505_037_24, 3.387_036_9]
    }

    #[test]
    fn grpa_examples() {
        let p = grpa(&[1.0, 2.0], 1.0).unwrap();
        assert!((p.powers()[0] - 0.8).abs() < 1e-15 && (p.powers()[1] - 0.2).abs() < 1e-15);
        assert_eq!(grpa(&[3.0], 5.0).unwrap().powers(), &[5.0]);
        let flat = grpa(&[2.0, 2.0, 2.0], 3.0).unwrap();
        assert!(flat.powers().iter().all(|p| (p - 1.0).abs() < 1e-15));
        assert!(matches!(grpa(&[0.0, 1.0], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn budget_projection_examples() {
        assert_eq!(project_budget(&[0.0; 4], 1.0), vec![0.25; 4]);
        let on = [0.1, 0.2, 0.7];
        assert!(max_abs_diff(&project_budget(&on, 1.0), &on) < 1e-16);
        let once = project_budget(&[3.0, -1.0, 0.5], 2.0);
        assert_eq!(project_budget(&once, 2.0), once);
    }

    #[test]
    fn omega_examples() {
        let p = [0.4, 0.1, 0.5];
        let proj = project_budget(&p, 1.0);
        assert!(omega_update(&p, &proj, 1.0).iter().all(|w| w.abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = b.iter().sum::<f64>() / 5.0;
        b.iter_mut().for_each(|x| *x -= mean);
        // p = 0, P_tot = 0 makes the bracket equal to p_proj itself
        let omega = omega_update(&[0.0; 5], &b, 0.0);
        assert!(max_abs_diff(&omega, &b) < 1e-15);
        let ones = omega_update(&[0.0; 3], &[1.0; 3], 0.0);
        assert!(ones.iter().all(|w| w.abs() < 1e-15));
    }

    #[test]
    fn recursion_examples() {
        let qos = QosSpec::new(vec![0.5, 1.0], 1.0).unwrap();
        let clean = NoiseParams::reference().with_beta(0.0).unwrap();
        let mut state = RecursionState::uniform(2, 1.0);
        state.powers[0] = 0.7;
        let p2 = recursion_power(2, &state, &qos, &clean).unwrap();
        let expected = ((1f64.exp2() - 1.0) / 2f64.exp2()) / ((0.5f64.exp2() - 1.0) / (2.0 * 0.7));
        assert!((p2 - expected).abs() < 1e-15);
        let shaded = NoiseParams::new(2.0, 0.1, 10, 10).unwrap();
        assert!(recursion_power(2, &state, &qos, &shaded).unwrap() > p2);
        assert!(matches!(recursion_power(1, &state, &qos, &clean), Err(Error::Range(_))));
        state.powers[0] = 1e-4;
        let heavy = NoiseParams::reference();
        assert!(matches!(
            recursion_power(2, &state, &qos, &heavy),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn printed_loop_reaches_its_fixed_point() {
        let qos = QosSpec::new(vec![0.2, 0.6, 1.0, 1.5], 10.0).unwrap();
        let noise = NoiseParams::new(2.0, 0.1, 10, 10).unwrap();
        let run = printed_recursion_loop(&qos, &noise).unwrap();
        assert!(run.converged, "{run:?}");
        assert!((run.powers.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        assert!(recursion_residual(&run.powers, &qos, &noise) < 1e-6);
    }

    #[test]
    fn approximate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let noise = NoiseParams::reference();
        let gains = static_gains();
        for _ in 0..20 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..5.0)).collect();
            for u in 1..=4 {
                for objective in [Objective::Approximate, Objective::Exact] {
                    let f = |delta: f64| {
                        let mut q = raw.clone();
                        q[u - 1] += delta;
                        let pv = PowerVector::new(q).unwrap();
                        match objective {
                            Objective::Approximate => approximate_sum_rate(&pv, &gains, &noise).unwrap(),
                            Objective::Exact => exact_sum_rate(&pv, &gains, &noise).unwrap(),
                        }
                    };
                    let step = 1e-5;
                    let fd = (f(step) - f(-step)) / (2.0 * step);
                    let p = PowerVector::new(raw.clone()).unwrap();
                    let g = gradient_component(u, &p, &gains, &noise, objective).unwrap();
                    assert!((fd - g).abs() < 1e-6, "{objective} u={u}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn first_layer_gradient_is_single_term() {
        let p = PowerVector::new(vec![1.0, 0.5]).unwrap();
        let noise = NoiseParams::reference();
        let g = sum_rate_gradient(1, &p, &[1.0, 2.0], &noise).unwrap();
        assert!((g - 0.5 / (1.0 + 0.5 + 4.0)).abs() < 1e-14);
        let clean = noise.with_beta(0.0).unwrap();
        assert!(
            sum_rate_gradient(2, &p, &[1.0, 2.0], &clean).unwrap()
                <= g.max(sum_rate_gradient(2, &p, &[1.0, 2.0], &noise).unwrap())
        );
    }

    #[test]
    fn polytope_projection_is_nearest_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let kappa = [0.3, 0.5, 0.2, 1.0];
        let floor = [0.1, 0.05, 0.02, 0.01];
        let mut poly = QosPolytope::new(&kappa, &floor);
        for _ in 0..50 {
            let y = DVector::from_fn(4, |_, _| rng.random_range(-1.0..2.0));
            let x = poly.project(&y);
            assert!((x.sum() - 1.0).abs() < 1e-12);
            assert!(poly.violation(&x) < 1e-12);
            let d = (&x - &y).norm();
            // random feasible points are never closer
            for _ in 0..200 {
                let z = poly.project(&DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0)));
                assert!((&z - &y).norm() >= d - 1e-12);
            }
        }
    }

    #[test]
    fn single_user_gets_everything() {
        let qos = QosSpec::new(vec![0.5], 3.0).unwrap();
        let r = allocate_static(&[1.0], &qos, &NoiseParams::reference()).unwrap();
        assert_eq!(r.powers.powers(), &[3.0]);
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn zero_beta_matches_sh_baseline() {
        let qos = QosSpec::new(vec![0.2, 0.6, 1.0, 1.5], 100.0).unwrap();
        let clean = NoiseParams::reference().with_beta(0.0).unwrap();
        let a = allocate_static(&static_gains(), &qos, &clean).unwrap();
        let b = allocate_sh_baseline(&static_gains(), &qos, &clean).unwrap();
        assert!(max_abs_diff(a.powers.powers(), b.powers.powers()) < 1e-6);
    }

    #[test]
    fn infeasible_floors_drop_weakest_users() {
        let qos = QosSpec::new(vec![0.2, 0.6, 2.0, 5.0], 4.444).unwrap();
        let r = allocate_static(&static_gains(), &qos, &NoiseParams::reference()).unwrap();
        assert!(!r.qos_feasible);
        assert!(r.served_from > 1);
        for u in r.served_from..=4 {
            assert!(r.constraint_residuals[u - 1] >= -1e-6);
        }
        assert!((r.powers.powers().iter().sum::<f64>() - 4.444).abs() < 1e-9);
    }

    #[test]
    fn proposed_beats_baselines_on_reference_gains() {
        let noise = NoiseParams::reference();
        for snr_db in [0.0, 10.0, 20.0, 30.0] {
            let total = 10f64.powf(snr_db / 10.0) * noise.variance();
            let qos = QosSpec::new(vec![0.2, 0.6, 2.0, 5.0], total).unwrap();
            let proposed = allocate_static(&static_gains(), &qos, &noise).unwrap();
            let baseline = allocate_sh_baseline(&static_gains(), &qos, &noise).unwrap();
            let gain_ratio = grpa(&static_gains(), total).unwrap();
            let g_rate: f64 = (1..=4)
                .map(|u| rate_at_gain(u, &gain_ratio, static_gains()[u - 1], &noise))
                .sum();
            assert!(
                proposed.sum_rate() >= g_rate - 1e-9,
                "{snr_db} dB: {} vs {g_rate}",
                proposed.sum_rate()
            );
            assert!(proposed.sum_rate() >= baseline.sum_rate() - 1e-9);
            assert!(proposed.stationarity < 1e-5);
        }
    }

    #[test]
    fn degenerate_mobility_support_matches_static() {
        let c = 2.0;
        let model = MobilityModel::from_bounds(c, c * (1.0 + 1e-9), 1.0).unwrap();
        let qos = QosSpec::new(vec![0.1, 0.2, 0.3], 50.0).unwrap();
        let noise = NoiseParams::reference();
        let mobile = allocate_mobility(&model, 3, &qos, &noise).unwrap();
        let fixed = allocate_static(&[c, c, c], &qos, &noise).unwrap();
        assert!(
            max_abs_diff(mobile.powers.powers(), fixed.powers.powers()) < 1e-6,
            "{mobile:?} {fixed:?}"
        );
        assert!((mobile.sum_rate() - fixed.sum_rate()).abs() < 1e-6);
    }

    #[test]
    fn csv_has_metadata_and_rows() {
        let qos = QosSpec::new(vec![0.1, 0.2], 10.0).unwrap();
        let r = allocate_static(&[1.0, 2.0], &qos, &NoiseParams::reference()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l == "user,power,achieved_rate_bpcu"));
        assert!(text.lines().filter(|l| l.starts_with('#')).count() >= 5);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }
}
