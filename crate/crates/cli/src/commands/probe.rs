//! `tglab probe`: matched clean-vs-velocity probe training with loss
//! history, final normalized MSEs, and recovered coefficients.

use std::time::Instant;

use tglab_core::geometry::bayes_coefficient;
use tglab_core::probe::{compare_target_difficulty, TimeDistribution};
use tglab_core::types::CorruptionTime;

use crate::commands::Outcome;
use crate::config::{KeyValues, OutputFormat, ProbeCmdConfig};
use crate::plot::LinePlot;
use crate::report::{fmt_f64, RunReport, Table};
use crate::CliError;

pub fn run(kv: &KeyValues) -> Result<Outcome, CliError> {
    let config = ProbeCmdConfig::resolve(kv)?;
    let start = Instant::now();
    let spectrum = &config.spectrum.spectrum;

    let probe_report = compare_target_difficulty(&config.probe, spectrum)?;

    let mut metrics = Table::new(
        ["target[kind]", "normalized_mse[ratio]", "first_batch_digest[hex]"]
            .map(String::from)
            .to_vec(),
    );
    let mut losses = Table::new(
        ["step[count]", "target[kind]", "loss[sq-err]"]
            .map(String::from)
            .to_vec(),
    );
    let mut plot = LinePlot::new("Training loss", "step", "minibatch loss");
    for (target, outcome) in &probe_report.targets {
        metrics.push(vec![
            target.to_string(),
            fmt_f64(outcome.normalized_mse),
            outcome.first_batch_digest.clone(),
        ]);
        plot.add_series(
            &target.to_string(),
            outcome
                .loss_history
                .iter()
                .map(|r| (r.step as f64, r.loss))
                .collect(),
        );
        for record in &outcome.loss_history {
            losses.push(vec![
                record.step.to_string(),
                target.to_string(),
                fmt_f64(record.loss),
            ]);
        }
    }

    let mut report = RunReport::new("probe", config.common.seed, config.echo());
    report.add_table("probe", metrics);
    report.add_table("probe_loss", losses);

    // Linear probes report coefficient recovery; at a fixed training time
    // the analytic Bayes coefficients are the reference.
    let fixed_t = match config.probe.time_distribution {
        TimeDistribution::Fixed { t } => Some(CorruptionTime::new(t).map_err(CliError::from)?),
        TimeDistribution::Uniform { .. } => None,
    };
    let mut coeff_table = Table::new(
        ["coord[index]", "target[kind]", "recovered[1]", "analytic[1]"]
            .map(String::from)
            .to_vec(),
    );
    let mut have_coefficients = false;
    for (target, outcome) in &probe_report.targets {
        if let Some(coeffs) = &outcome.recovered_coefficients {
            have_coefficients = true;
            for (j, (&c, &lambda)) in coeffs.iter().zip(spectrum.eigenvalues()).enumerate() {
                let analytic = match fixed_t {
                    Some(t) => fmt_f64(bayes_coefficient(lambda, t, *target)?),
                    None => String::new(),
                };
                coeff_table.push(vec![j.to_string(), target.to_string(), fmt_f64(c), analytic]);
            }
        }
    }
    if have_coefficients {
        report.add_table("probe_coefficients", coeff_table);
    }

    let lower = probe_report.lower_mse_target;
    report.extra = serde_json::to_value(&probe_report)
        .map_err(|e| CliError::config(format!("probe report serialization failed: {e}")))?;
    report.duration_ms = start.elapsed().as_millis();
    let mut written = report.write(&config.common.out, config.common.format)?;

    if config.common.format == OutputFormat::Csv {
        let svg_path = config.common.out.join("training_curves.svg");
        std::fs::write(&svg_path, plot.render())
            .map_err(|e| CliError::config(format!("cannot write plot: {e}")))?;
        written.push(svg_path);
    }

    eprintln!("lower normalized MSE: {lower}");
    Ok(Outcome::new(written, config.common.strict))
}
