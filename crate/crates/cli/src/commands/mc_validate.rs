//! `tglab mc-validate`: every empirical estimator against its closed form,
//! with standard-error bands and a PASS/FAIL verdict per row.
//!
//! Bands: covariance and Bayes-risk estimates get 5 standard errors; kNN
//! conditional-variance traces get 10% of the analytic value, absorbing the
//! estimator's neighborhood-width bias. The kNN diagnostic is evaluated at
//! the origin and at one sampled z (the batch's first row).

use std::time::Instant;

use tglab_core::geometry::{aggregate_risk, target_covariance};
use tglab_core::montecarlo::{
    empirical_bayes_risk_with_se, empirical_target_covariance_with_se, knn_conditional_variance,
    sample_batch,
};
use tglab_core::types::{CorruptionTime, TargetKind};

use crate::commands::Outcome;
use crate::config::{KeyValues, McValidateConfig};
use crate::report::{fmt_f64, RunReport, Table};
use crate::CliError;

const PASS: &str = "PASS";
const FAIL: &str = "FAIL";

pub fn run(kv: &KeyValues) -> Result<Outcome, CliError> {
    let config = McValidateConfig::resolve(kv)?;
    let start = Instant::now();
    let spectrum = &config.spectrum.spectrum;

    let times: Vec<CorruptionTime> = config
        .t_values
        .iter()
        .map(|&t| CorruptionTime::new(t).map_err(|e| CliError::config(format!("t_values: {e}"))))
        .collect::<Result<_, _>>()?;
    if times.is_empty() {
        return Err(CliError::config("t_values must contain at least one time"));
    }

    let mut table = Table::new(
        [
            "check[name]",
            "t[1]",
            "target[kind]",
            "coord[index]",
            "estimate[var]",
            "reference[var]",
            "band[var]",
            "status[pass-fail]",
        ]
        .map(String::from)
        .to_vec(),
    );
    let mut failed = 0usize;
    let mut check = |table: &mut Table,
                     name: &str,
                     t: f64,
                     target: TargetKind,
                     coord: String,
                     estimate: f64,
                     reference: f64,
                     band: f64| {
        let ok = (estimate - reference).abs() <= band;
        if !ok {
            failed += 1;
        }
        table.push(vec![
            name.to_string(),
            fmt_f64(t),
            target.to_string(),
            coord,
            fmt_f64(estimate),
            fmt_f64(reference),
            fmt_f64(band),
            (if ok { PASS } else { FAIL }).to_string(),
        ]);
    };

    for (ti, &t) in times.iter().enumerate() {
        let batch = sample_batch(
            spectrum,
            t,
            config.n,
            config.common.seed.wrapping_add(ti as u64),
        )?;
        let sampled_query: Vec<f64> = batch.zs().row(0).to_vec();
        for target in TargetKind::ALL {
            let (est, se) = empirical_target_covariance_with_se(&batch, target)?;
            let analytic = target_covariance(spectrum, target);
            for (j, ((e, s), a)) in est
                .iter()
                .zip(&se)
                .zip(analytic.eigenvalues())
                .enumerate()
            {
                check(
                    &mut table,
                    "covariance",
                    t.value(),
                    target,
                    j.to_string(),
                    *e,
                    *a,
                    5.0 * s,
                );
            }

            let (risk, risk_se) = empirical_bayes_risk_with_se(&batch, target)?;
            let risk_ref = aggregate_risk(spectrum, t, target)?;
            check(
                &mut table,
                "bayes_risk",
                t.value(),
                target,
                "-".to_string(),
                risk,
                risk_ref,
                5.0 * risk_se,
            );

            for (name, query) in [
                ("knn_trace_origin", vec![0.0; spectrum.dim()]),
                ("knn_trace_sample", sampled_query.clone()),
            ] {
                let est = knn_conditional_variance(&batch, &query, config.k, target)?;
                check(
                    &mut table,
                    name,
                    t.value(),
                    target,
                    "-".to_string(),
                    est.trace(),
                    risk_ref,
                    0.10 * risk_ref,
                );
            }
        }
    }

    let mut report = RunReport::new("mc_validate", config.common.seed, config.echo());
    report.add_table("mc_validate", table);
    report.duration_ms = start.elapsed().as_millis();
    let written = report.write(&config.common.out, config.common.format)?;

    let mut outcome = Outcome::new(written, config.common.strict);
    outcome.failed_checks = failed;
    Ok(outcome)
}
