//! Residual diagnostics: normality and unit-root tests.

mod adf;
mod normality;

pub use adf::{adf_p_value, adf_test, default_lags};
pub use normality::{dagostino_pearson, jarque_bera, shapiro_wilk};

use std::fmt::Write as _;

use crate::metrics::RunLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Test-specific settings, `key=value` pairs separated by `;`.
    pub detail: String,
}

impl TestReport {
    pub(crate) fn new(name: &str, statistic: f64, p_value: f64, n: usize, detail: String) -> Self {
        Self { test_name: name.to_string(), statistic, p_value: p_value.clamp(0.0, 1.0), n, detail }
    }
}

/// Runs all four tests; tests whose preconditions fail are reported as warnings.
pub fn battery(sample: &[f64], adf_lags: Option<usize>) -> (Vec<TestReport>, Vec<String>) {
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    type Run<'a> = Box<dyn Fn() -> crate::Result<TestReport> + 'a>;
    let runs: [(&str, Run); 4] = [
        ("ADF", Box::new(|| adf_test(sample, adf_lags))),
        ("Shapiro-Wilk", Box::new(|| shapiro_wilk(sample))),
        ("D'Agostino-Pearson", Box::new(|| dagostino_pearson(sample))),
        ("Jarque-Bera", Box::new(|| jarque_bera(sample))),
    ];
    for (name, run) in runs {
        match run() {
            Ok(r) => reports.push(r),
            Err(e) => warnings.push(format!("{name} skipped: {e}")),
        }
    }
    (reports, warnings)
}

/// `country,gender,period,test,statistic,p_value`.
pub fn diagnostics_table_csv(label: &RunLabel, reports: &[TestReport]) -> String {
    let mut out = String::from("country,gender,period,test,statistic,p_value\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            label.country, label.gender, label.period, r.test_name, r.statistic, r.p_value
        );
    }
    out
}
