//! `tglab geometry`: closed-form risk curves, per-eigenvalue conditional
//! variances, and effective ranks over a time grid.

use std::time::Instant;

use tglab_core::geometry::{conditional_variance, effective_rank_with, risk_curve, target_covariance};
use tglab_core::types::{CorruptionTime, TargetKind};

use crate::commands::Outcome;
use crate::config::{GeometryConfig, KeyValues, OutputFormat};
use crate::plot::LinePlot;
use crate::report::{fmt_f64, RunReport, Table};
use crate::CliError;

pub fn run(kv: &KeyValues) -> Result<Outcome, CliError> {
    let config = GeometryConfig::resolve(kv)?;
    let start = Instant::now();
    let spectrum = &config.spectrum.spectrum;

    let times: Vec<CorruptionTime> = config
        .t_grid
        .iter()
        .map(|&t| CorruptionTime::new(t).map_err(|e| CliError::config(format!("t_grid: {e}"))))
        .collect::<Result<_, _>>()?;
    if times.is_empty() {
        return Err(CliError::config("t_grid must contain at least one time"));
    }
    if times.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(CliError::config("t_grid must be strictly increasing"));
    }

    let erank = |target| {
        effective_rank_with(&target_covariance(spectrum, target), config.effective_rank)
    };
    let er_clean = erank(TargetKind::Clean)?;
    let er_noise = erank(TargetKind::Noise)?;
    let er_velocity = erank(TargetKind::Velocity)?;

    let mut columns = vec![
        "t[1]".to_string(),
        "target[kind]".to_string(),
        "aggregate_risk[var]".to_string(),
    ];
    for i in 0..spectrum.dim() {
        columns.push(format!("cond_var_{i}[var]"));
    }
    columns.extend([
        "erank_clean[count]".to_string(),
        "erank_noise[count]".to_string(),
        "erank_velocity[count]".to_string(),
    ]);
    let mut table = Table::new(columns);

    let mut plot = LinePlot::new("Bayes residual risk", "t", "aggregate risk");
    for &target in &config.targets {
        let curve = risk_curve(spectrum, &times, target)?;
        plot.add_series(
            &target.to_string(),
            curve
                .times
                .iter()
                .zip(&curve.values)
                .map(|(t, &v)| (t.value(), v))
                .collect(),
        );
        for (&t, &risk) in curve.times.iter().zip(&curve.values) {
            let mut row = vec![fmt_f64(t.value()), target.to_string(), fmt_f64(risk)];
            for &lambda in spectrum.eigenvalues() {
                row.push(fmt_f64(conditional_variance(lambda, t, target)?));
            }
            row.extend([fmt_f64(er_clean), fmt_f64(er_noise), fmt_f64(er_velocity)]);
            table.push(row);
        }
    }

    let mut report = RunReport::new("geometry", config.common.seed, config.echo());
    report.add_table("geometry", table);
    report.duration_ms = start.elapsed().as_millis();
    let mut written = report.write(&config.common.out, config.common.format)?;

    if config.common.format == OutputFormat::Csv {
        let svg_path = config.common.out.join("risk_curves.svg");
        std::fs::write(&svg_path, plot.render())
            .map_err(|e| CliError::config(format!("cannot write plot: {e}")))?;
        written.push(svg_path);
    }

    Ok(Outcome::new(written, config.common.strict))
}
