//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noma_vlc::alloc::{allocate_static, effective_gains, grpa, QosSpec};
use noma_vlc::channel::{mobility_pdf, ordered_pdf, ordered_pdf_expanded};
use noma_vlc::experiment::{
    mobility_model, pdf_comparison, reference_static_gains, snr_grid, sum_rate_sweep, total_power_for_snr,
    write_sweep_csv, Scenario, SweepRow, REFERENCE_THRESHOLDS,
};
use noma_vlc::noise::{entropy_estimate, pdf_high_nu, pdf_oracle, pdf_series, sample_phi, HermiteSeriesPdf};
use noma_vlc::rate::{
    entropy_p, entropy_phi, entropy_y, integrate_lemma_b, integrate_lemma_i, lemma_b, lemma_i, mc_mobility_rates,
    mobility_rates, rate_sh, rate_static,
};
use noma_vlc::specfun::{gauss_2f1, hermite, integrate, HermiteConvention, QuadratureSpec};
use noma_vlc::{Error, NoiseParams, PowerVector};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn gaussian(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt())
}

fn noise_pdf_reproduction() -> Outcome {
    let noise = NoiseParams::new(2.0, 2.0 / 3.0, 10, 10).unwrap();
    let start = Instant::now();
    let cmp = pdf_comparison(&noise, 1_000_000, 200, (-15.0, 15.0), 601, 1).unwrap();
    let elapsed = start.elapsed();
    let passed = cmp.l1_empirical_series <= 0.05 && cmp.sup_series_oracle <= 1e-2 && elapsed.as_secs_f64() <= 10.0;
    Outcome::new(
        passed,
        format!(
            "L1(hist, series) = {:.4} (<= 0.05), sup|series - oracle| = {:.2e} (<= 1e-2), {:.2} s (<= 10 s)",
            cmp.l1_empirical_series,
            cmp.sup_series_oracle,
            elapsed.as_secs_f64()
        ),
    )
}

fn gaussian_collapse() -> Outcome {
    let noise = NoiseParams::new(2.0, 0.0, 10, 10).unwrap();
    let series = HermiteSeriesPdf::new(&noise).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let phi = -12.0 + 24.0 * i as f64 / 99.0;
        let exact = gaussian(phi, 2.0);
        for value in [
            series.pdf(phi),
            pdf_high_nu(&noise, phi),
            pdf_oracle(&noise, phi).unwrap(),
        ] {
            worst = worst.max((value - exact).abs());
        }
    }
    let mut rate_gap: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p = PowerVector::new((0..4).map(|_| rng.random_range(0.01..50.0)).collect()).unwrap();
        let mut h: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..4.0)).collect();
        h.sort_by(f64::total_cmp);
        for u in 1..=4 {
            rate_gap = rate_gap.max((rate_static(u, &p, &h, &noise).unwrap() - rate_sh(u, &p, &h, 2.0).unwrap()).abs());
        }
    }
    Outcome::new(
        worst <= 1e-10 && rate_gap <= 1e-12,
        format!("max density error {worst:.2e} (<= 1e-10), max |rate - rate_sh| {rate_gap:.2e} (<= 1e-12)"),
    )
}

fn divergence_guard() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut raised = 0;
    for _ in 0..50 {
        let alpha = rng.random_range(0.1..5.0);
        let beta = alpha * rng.random_range(1.0..4.0);
        let nu = rng.random_range(1..60);
        let params = NoiseParams::new(alpha, beta, nu, rng.random_range(1..30)).unwrap();
        let phi = rng.random_range(-20.0..20.0);
        let pdf = matches!(pdf_series(&params, phi), Err(Error::Divergence { .. }));
        let build = matches!(HermiteSeriesPdf::new(&params), Err(Error::Divergence { .. }));
        if pdf && build {
            raised += 1;
        }
    }
    Outcome::new(raised == 50, format!("{raised}/50 random beta >= alpha draws rejected"))
}

fn entropy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let users = rng.random_range(1..=6);
        let noise = NoiseParams::new(
            rng.random_range(0.2..4.0),
            rng.random_range(0.0..2.0),
            rng.random_range(1..40),
            10,
        )
        .unwrap();
        let p = PowerVector::new((0..users).map(|_| rng.random_range(0.0..20.0)).collect()).unwrap();
        let mut h: Vec<f64> = (0..users).map(|_| rng.random_range(0.2..5.0)).collect();
        h.sort_by(f64::total_cmp);
        let u = rng.random_range(1..=users);
        let diff = entropy_y(u, &p, &h, &noise).unwrap() - entropy_p(u, &p, &h, &noise).unwrap();
        worst = worst.max((diff - std::f64::consts::LN_2 * rate_static(u, &p, &h, &noise).unwrap()).abs());
    }
    let reference = NoiseParams::reference();
    let closed = 0.5 + 0.5 / 9.0 + 0.5 * (8.0 * PI).ln();
    let exact = entropy_phi(&reference) == closed;
    let mc = entropy_estimate(&sample_phi(&reference, 1_000_000, 4)).unwrap();
    let mc_gap = (mc - entropy_phi(&reference)).abs();
    Outcome::new(
        worst <= 1e-12 && exact && mc_gap <= 0.02,
        format!(
            "max identity error {worst:.2e} (<= 1e-12), closed form exact: {exact}, |MC - H(phi)| = {mc_gap:.4} nats (<= 0.02)"
        ),
    )
}

fn lemma_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 50 {
        let theta: f64 = rng.random_range(1.05..1.95);
        if (theta - 1.5).abs() < 1e-9 {
            continue;
        }
        let x1: f64 = rng.random_range(0.2..3.0);
        let x2 = x1 * rng.random_range(1.5..30.0);
        let (b, c) = (rng.random_range(0.01..20.0), rng.random_range(0.05..10.0));
        let (k1, k2, zeta) = (
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..10.0),
            rng.random_range(0.2..4.0),
        );
        let li = lemma_i(x2, theta, b, c).unwrap() - lemma_i(x1, theta, b, c).unwrap();
        let qi = integrate_lemma_i(x1, x2, theta, b, c).unwrap();
        let lb = lemma_b(x2, theta, k1, k2, zeta).unwrap() - lemma_b(x1, theta, k1, k2, zeta).unwrap();
        let qb = integrate_lemma_b(x1, x2, theta, k1, k2, zeta).unwrap();
        worst = worst.max(((li - qi) / qi).abs()).max(((lb - qb) / qb).abs());
        draws += 1;
    }
    Outcome::new(
        worst <= 1e-8,
        format!("max relative error {worst:.2e} over 50 draws (<= 1e-8)"),
    )
}

fn mobility_rate() -> Outcome {
    let noise = NoiseParams::reference();
    let mut passed = true;
    let mut detail = String::new();
    for (half_angle, h_max) in [(50.0, 3.0), (50.0, 5.0), (60.0, 3.0), (60.0, 5.0)] {
        let start = Instant::now();
        let model = mobility_model(half_angle, 1.0, h_max).unwrap();
        let powers = grpa(&effective_gains(&model, 4).unwrap(), total_power_for_snr(30.0, &noise)).unwrap();
        let quad = mobility_rates(&powers, &noise, &model).unwrap();
        let mc = mc_mobility_rates(&powers, &noise, &model, 100_000, 6).unwrap();
        let worst = quad
            .per_user
            .iter()
            .zip(&mc.per_user)
            .map(|(q, m)| ((q - m) / q).abs())
            .fold(0.0, f64::max);
        let secs = start.elapsed().as_secs_f64();
        passed &= worst <= 0.02 && secs <= 60.0;
        let _ = write!(detail, "[{half_angle}deg (1,{h_max}): {worst:.2e}, {secs:.2} s] ");
    }
    Outcome::new(
        passed,
        format!("max relative error at 30 dB GRPA powers (<= 2e-2) {detail}"),
    )
}

fn mobility_rate_low_snr_diagnostic() -> String {
    let noise = NoiseParams::reference();
    let mut out = String::new();
    for snr in [10.0, 20.0] {
        for h_max in [3.0, 5.0] {
            let model = mobility_model(50.0, 1.0, h_max).unwrap();
            let powers = grpa(&effective_gains(&model, 4).unwrap(), total_power_for_snr(snr, &noise)).unwrap();
            let quad = mobility_rates(&powers, &noise, &model).unwrap();
            let mc = mc_mobility_rates(&powers, &noise, &model, 100_000, 6).unwrap();
            let rel: Vec<String> = quad
                .per_user
                .iter()
                .zip(&mc.per_user)
                .map(|(q, m)| format!("{:.1e}", ((q - m) / q).abs()))
                .collect();
            let _ = write!(out, "[{snr} dB (1,{h_max}): {}] ", rel.join("/"));
        }
    }
    out
}

fn order_statistics() -> Outcome {
    let spec = QuadratureSpec::default().with_tolerances(1e-13, 1e-12);
    let (mut sum_err, mut norm_err, mut expand_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (half_angle, h_max) in [(50.0, 3.0), (50.0, 5.0), (60.0, 3.0), (60.0, 5.0)] {
        let model = mobility_model(half_angle, 1.0, h_max).unwrap();
        for users in 1..=5 {
            for i in 0..=200 {
                let h = 1.0 + (h_max - 1.0) * i as f64 / 200.0;
                let total: f64 = (1..=users).map(|u| ordered_pdf(&model, users, u, h).unwrap()).sum();
                sum_err = sum_err.max((total - users as f64 * mobility_pdf(&model, h)).abs());
                for u in 1..=users {
                    let direct = ordered_pdf(&model, users, u, h).unwrap();
                    let expanded = ordered_pdf_expanded(&model, users, u, h).unwrap();
                    expand_err = expand_err.max((direct - expanded).abs());
                }
            }
            for u in 1..=users {
                let mass = integrate(|h| ordered_pdf(&model, users, u, h).unwrap(), 1.0, h_max, &spec)
                    .unwrap()
                    .value;
                norm_err = norm_err.max((mass - 1.0).abs());
            }
        }
    }
    Outcome::new(
        sum_err <= 1e-8 && norm_err <= 1e-6 && expand_err <= 1e-9,
        format!(
            "sum identity {sum_err:.2e} (<= 1e-8), unit mass {norm_err:.2e} (<= 1e-6), expanded vs direct {expand_err:.2e} (<= 1e-9)"
        ),
    )
}

fn allocator_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise_choices = [NoiseParams::reference(), NoiseParams::new(1.0, 0.3, 20, 10).unwrap()];
    let (mut instances, mut failures) = (0, 0);
    let (mut worst_budget, mut worst_floor, mut worst_kkt, mut worst_iter): (f64, f64, f64, usize) = (0.0, 0.0, 0.0, 0);
    while instances < 200 {
        let users = rng.random_range(1..=6);
        let noise = noise_choices[instances % 2];
        let mut h: Vec<f64> = (0..users).map(|_| rng.random_range(0.5..4.0)).collect();
        h.sort_by(f64::total_cmp);
        let total = total_power_for_snr(rng.random_range(0.0..30.0), &noise);
        let thresholds: Vec<f64> = (0..users).map(|_| rng.random_range(0.0..1.5)).collect();
        let qos = QosSpec::new(thresholds.clone(), total).unwrap();
        let result = allocate_static(&h, &qos, &noise).unwrap();
        if !result.qos_feasible {
            continue;
        }
        instances += 1;
        let p = result.powers.powers();
        let budget = (p.iter().sum::<f64>() - total).abs();
        let floor = result
            .constraint_residuals
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let sh_ok =
            (1..=users).all(|u| rate_sh(u, &result.powers, &h, noise.alpha()).unwrap() >= thresholds[u - 1] - 1e-6);
        worst_budget = worst_budget.max(budget);
        worst_floor = worst_floor.min(floor);
        worst_kkt = worst_kkt.max(result.stationarity);
        worst_iter = worst_iter.max(result.iterations);
        let ok = result.converged
            && result.iterations <= 10_000
            && budget <= 1e-9
            && p.iter().all(|x| *x >= 0.0)
            && sh_ok
            && result.stationarity <= 1e-5;
        if !ok {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!(
            "{failures}/200 violations; worst budget {worst_budget:.1e}, min QoS surplus {worst_floor:.1e}, worst stationarity {worst_kkt:.1e}, max iterations {worst_iter}"
        ),
    )
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

/// Compares against the frozen sweep, writing it if absent. Returns (matches, note).
fn check_golden(name: &str, rows: &[SweepRow]) -> (bool, String) {
    let mut fresh = Vec::new();
    write_sweep_csv(rows, &mut fresh).unwrap();
    let path = golden_path(name);
    match std::fs::read_to_string(&path) {
        Ok(frozen) => {
            let parse = |text: &str| -> Vec<Vec<f64>> {
                text.lines()
                    .skip(1)
                    .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                    .collect()
            };
            let (a, b) = (parse(&frozen), parse(std::str::from_utf8(&fresh).unwrap()));
            let worst = a
                .iter()
                .flatten()
                .zip(b.iter().flatten())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let ok = a.len() == b.len() && worst <= 1e-9;
            (ok, format!("golden {name}: max drift {worst:.1e}"))
        }
        Err(_) => {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &fresh).unwrap();
            (true, format!("golden {name}: written"))
        }
    }
}

fn baseline_comparison() -> Outcome {
    let noise = NoiseParams::reference();
    let qos = QosSpec::new(REFERENCE_THRESHOLDS.to_vec(), 1.0).unwrap();
    let snrs = snr_grid(0.0, 30.0, 2.0).unwrap();
    let scenario = Scenario::Static {
        gains: reference_static_gains(50.0).unwrap(),
    };
    let rows = sum_rate_sweep(&scenario, &qos, &noise, &snrs).unwrap();
    let beats_grpa = rows.iter().filter(|r| r.proposed >= r.grpa).count();
    let smaller_gap = rows.iter().filter(|r| r.proposed_gap() <= r.sh_gap()).count();
    let (golden_ok, note) = check_golden("sweep_static_50deg.csv", &rows);
    let min_margin = rows.iter().map(|r| r.proposed - r.grpa).fold(f64::INFINITY, f64::min);
    Outcome::new(
        beats_grpa == rows.len() && smaller_gap == rows.len() && golden_ok,
        format!(
            "proposed >= GRPA at {beats_grpa}/{n}, gap <= SH gap at {smaller_gap}/{n}, min margin over GRPA {min_margin:.4} bpcu; {note}",
            n = rows.len()
        ),
    )
}

fn mobility_comparison_diagnostic() -> String {
    let noise = NoiseParams::reference();
    let qos = QosSpec::new(REFERENCE_THRESHOLDS.to_vec(), 1.0).unwrap();
    let snrs = snr_grid(0.0, 30.0, 2.0).unwrap();
    let scenario = Scenario::Mobility {
        model: mobility_model(50.0, 1.0, 3.0).unwrap(),
        users: 4,
    };
    let rows = sum_rate_sweep(&scenario, &qos, &noise, &snrs).unwrap();
    let (golden_ok, note) = check_golden("sweep_mobility_50deg_1_3.csv", &rows);
    let beats_grpa = rows.iter().filter(|r| r.proposed >= r.grpa).count();
    let smaller_gap = rows.iter().filter(|r| r.proposed_gap() <= r.sh_gap()).count();
    let worst = rows
        .iter()
        .map(|r| r.proposed - r.sh_baseline)
        .fold(f64::INFINITY, f64::min);
    format!(
        "mobility (1,3) 50deg: proposed >= GRPA at {beats_grpa}/16, gap <= SH gap at {smaller_gap}/16 (worst proposed - SH {worst:.4} bpcu); {note} (match: {golden_ok})"
    )
}

fn special_functions() -> Outcome {
    let mut log_err: f64 = 0.0;
    for i in 0..=1099 {
        let z = -10.0 + 10.99 * i as f64 / 1099.0;
        if z.abs() < 1e-12 {
            continue;
        }
        let f = gauss_2f1(1.0, 1.0, 2.0, z).unwrap();
        let exact = -(-z).ln_1p() / z;
        log_err = log_err.max(((f - exact) / exact).abs());
    }
    let mut herm_err: f64 = 0.0;
    for i in 0..=40 {
        let x = -3.0 + 0.15 * i as f64;
        for n in 1..=12u32 {
            let he = |m: u32, t: f64| hermite(m as usize, t, HermiteConvention::Probabilists).unwrap();
            let h = |m: u32, t: f64| hermite(m as usize, t, HermiteConvention::Physicists).unwrap();
            let step = 1e-5;
            let d_he = (he(n, x + step) - he(n, x - step)) / (2.0 * step);
            let d_h = (h(n, x + step) - h(n, x - step)) / (2.0 * step);
            let scale_he = 1.0 + (n as f64 * he(n - 1, x)).abs();
            let scale_h = 1.0 + (2.0 * n as f64 * h(n - 1, x)).abs();
            herm_err = herm_err
                .max((d_he - n as f64 * he(n - 1, x)).abs() / scale_he)
                .max((d_h - 2.0 * n as f64 * h(n - 1, x)).abs() / scale_h);
            if n >= 1 {
                let rec = he(n + 1, x) - (x * he(n, x) - n as f64 * he(n - 1, x));
                herm_err = herm_err.max(rec.abs() / (1.0 + he(n + 1, x).abs()));
            }
        }
    }
    Outcome::new(
        log_err <= 1e-10 && herm_err <= 1e-6,
        format!("2F1 log identity {log_err:.2e} (<= 1e-10), Hermite identities {herm_err:.2e} (<= 1e-6)"),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("noise pdf reproduction", noise_pdf_reproduction),
        ("gaussian collapse", gaussian_collapse),
        ("divergence guard", divergence_guard),
        ("entropy identity", entropy_identity),
        ("lemma oracles", lemma_oracles),
        ("mobility rate", mobility_rate),
        ("order statistics", order_statistics),
        ("allocator invariants", allocator_invariants),
        ("baseline comparison", baseline_comparison),
        ("special functions", special_functions),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (outcome, elapsed) = timed(check);
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.2} s]",
            i + 1,
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "diagnostic mobility rate at lower SNR: {}",
        mobility_rate_low_snr_diagnostic()
    );
    println!("diagnostic {}", mobility_comparison_diagnostic());
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
