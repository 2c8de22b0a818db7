use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use noma_vlc::alloc::{allocate_mobility, allocate_static, QosSpec};
use noma_vlc::experiment::{
    mobility_model, mobility_rate_rows, pdf_comparison, snr_grid, static_gains, static_rate_rows, sum_rate_sweep,
    total_power_for_snr, write_pdf_csv, write_rate_csv, write_sweep_csv, RatePowers, Scenario,
};
use thiserror::Error;

use crate::config::{ChannelMode, ConfigError, ExperimentConfig, RateAllocation};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(#[from] noma_vlc::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::NotConverged(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    fill(&mut out).and_then(|_| out.flush()).map_err(io_error(path))
}

/// Creates the output directory and writes the effective configuration next to the results.
pub fn prepare_output(cfg: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_error(&cfg.output_dir))?;
    let path = cfg.output_dir.join("config_echo.toml");
    write_file(&path, |out| out.write_all(cfg.echo().as_bytes()))
}

fn plot_stub(
    cfg: &ExperimentConfig,
    stem: &str,
    x_label: &str,
    y_label: &str,
    series: &[(usize, &str)],
) -> Result<(), CliError> {
    let path = cfg.output_dir.join(format!("{stem}.gp"));
    let body: Vec<String> = series
        .iter()
        .map(|(col, title)| format!("'{stem}.csv' using 1:{col} with linespoints title '{title}'"))
        .collect();
    write_file(&path, |out| {
        writeln!(out, "set datafile separator ','")?;
        writeln!(out, "set key autotitle columnhead")?;
        writeln!(out, "set xlabel '{x_label}'")?;
        writeln!(out, "set ylabel '{y_label}'")?;
        writeln!(out, "plot {}", body.join(", \\\n     "))
    })
}

pub fn noise_pdf(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let noise = cfg.noise()?;
    let cmp = pdf_comparison(
        &noise,
        cfg.pdf_samples,
        cfg.pdf_bins,
        (cfg.phi_min, cfg.phi_max),
        cfg.pdf_grid_points,
        cfg.seed,
    )?;
    let path = cfg.output_dir.join("pdf_comparison.csv");
    write_file(&path, |out| write_pdf_csv(&cmp.rows, out))?;
    plot_stub(
        cfg,
        "pdf_comparison",
        "phi",
        "density",
        &[(2, "empirical"), (3, "series"), (4, "high nu"), (5, "oracle")],
    )?;
    println!("L1(empirical, series) = {:.6}", cmp.l1_empirical_series);
    println!("L1(empirical, oracle) = {:.6}", cmp.l1_empirical_oracle);
    println!("sup|series - oracle| = {:.3e}", cmp.sup_series_oracle);
    Ok(())
}

fn snrs(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    Ok(snr_grid(cfg.snr_start_db, cfg.snr_stop_db, cfg.snr_step_db)?)
}

fn rate_powers(cfg: &ExperimentConfig) -> RatePowers {
    match cfg.rate_allocation {
        RateAllocation::Grpa => RatePowers::Grpa,
        RateAllocation::Proposed => RatePowers::Proposed {
            thresholds: cfg.thresholds.clone(),
        },
    }
}

fn rate_plot(cfg: &ExperimentConfig, stem: &str) -> Result<(), CliError> {
    plot_stub(
        cfg,
        stem,
        "SNR (dB)",
        "rate (bpcu)",
        &[(3, "analytic"), (4, "quadrature"), (5, "monte carlo")],
    )
}

pub fn rate_static(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let gains = static_gains(cfg.half_angle_deg, &cfg.radii, cfg.led_height)?;
    let rows = static_rate_rows(
        &gains,
        &cfg.noise()?,
        &rate_powers(cfg),
        &snrs(cfg)?,
        cfg.rate_samples,
        cfg.seed,
    )?;
    let path = cfg.output_dir.join("rates_static.csv");
    write_file(&path, |out| write_rate_csv(&rows, out))?;
    rate_plot(cfg, "rates_static")?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

pub fn rate_mobility(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = mobility_model(cfg.half_angle_deg, cfg.h_min, cfg.h_max)?;
    let rows = mobility_rate_rows(
        &model,
        cfg.users,
        &cfg.noise()?,
        &rate_powers(cfg),
        &snrs(cfg)?,
        cfg.mobility_tuples,
        cfg.seed,
    )?;
    let path = cfg.output_dir.join("rates_mobility.csv");
    write_file(&path, |out| write_rate_csv(&rows, out))?;
    rate_plot(cfg, "rates_mobility")?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn qos(cfg: &ExperimentConfig, total_power: f64) -> Result<QosSpec, CliError> {
    Ok(QosSpec::new(cfg.thresholds.clone(), total_power)?
        .with_epsilon(cfg.epsilon)?
        .with_max_iterations(cfg.max_iterations)?
        .with_metric(cfg.qos_metric)
        .with_objective(cfg.objective))
}

fn scenario(cfg: &ExperimentConfig) -> Result<Scenario, CliError> {
    Ok(match cfg.channel_mode {
        ChannelMode::Static => Scenario::Static {
            gains: static_gains(cfg.half_angle_deg, &cfg.radii, cfg.led_height)?,
        },
        ChannelMode::Mobility => Scenario::Mobility {
            model: mobility_model(cfg.half_angle_deg, cfg.h_min, cfg.h_max)?,
            users: cfg.users,
        },
    })
}

pub fn allocate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let noise = cfg.noise()?;
    let qos = qos(cfg, total_power_for_snr(cfg.allocate_snr_db, &noise))?;
    let result = match scenario(cfg)? {
        Scenario::Static { gains } => allocate_static(&gains, &qos, &noise)?,
        Scenario::Mobility { model, users } => allocate_mobility(&model, users, &qos, &noise)?,
    };
    let path = cfg.output_dir.join("allocation.csv");
    write_file(&path, |out| result.write_csv(out))?;
    println!(
        "sum rate {:.6} bpcu after {} iterations (qos_feasible={}, served_from={})",
        result.sum_rate(),
        result.iterations,
        result.qos_feasible,
        result.served_from
    );
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "allocation did not converge within {} iterations; best iterate written to {}",
            cfg.max_iterations,
            path.display()
        )));
    }
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let noise = cfg.noise()?;
    let rows = sum_rate_sweep(&scenario(cfg)?, &qos(cfg, 1.0)?, &noise, &snrs(cfg)?)?;
    let path = cfg.output_dir.join("sumrate_sweep.csv");
    let flagged: Vec<f64> = rows.iter().filter(|r| !r.converged).map(|r| r.snr_db).collect();
    write_file(&path, |out| {
        write_sweep_csv(&rows, &mut *out)?;
        for snr in &flagged {
            writeln!(out, "# not_converged snr_db={snr}")?;
        }
        Ok(())
    })?;
    plot_stub(
        cfg,
        "sumrate_sweep",
        "SNR (dB)",
        "sum rate (bpcu)",
        &[(2, "proposed"), (3, "GRPA"), (4, "SH baseline"), (5, "AWGN reference")],
    )?;
    println!("wrote {} sweep points to {}", rows.len(), path.display());
    if !flagged.is_empty() {
        return Err(CliError::NotConverged(format!(
            "allocator did not converge at SNR points {flagged:?}"
        )));
    }
    Ok(())
}
