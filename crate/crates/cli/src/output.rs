//! Serialization of draws, summaries and experiment reports.
//!
//! Floats are written with Rust's `Display`, which is the shortest string
//! that parses back to the same value.

use std::io::{Read, Write};

use fhshrink::posterior::{
    interval_from_column, summarize_columns, summary_levels, CredibleInterval, QuantileValue,
};
use fhshrink::{DicResult, ExperimentReport, ModelKind, PosteriorDraws};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<QuantileValue<f64>>,
    pub intervals: Vec<CredibleInterval<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    pub n_draws: usize,
    pub levels: Vec<f64>,
    pub parameters: Vec<ParamReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dic: Option<DicResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mh_accept_rate: Option<f64>,
}

/// Means, SDs, median and tail quantiles, and equal-tailed intervals at
/// each credible level.
pub fn summary_report(columns: &[(String, Vec<f64>)], levels: &[f64]) -> Result<SummaryReport, CliError> {
    let summary = summarize_columns(columns, &summary_levels(levels))?;
    let parameters = summary
        .parameters
        .into_iter()
        .zip(columns)
        .map(|(s, (_, xs))| {
            let intervals = levels
                .iter()
                .map(|&l| interval_from_column(xs, l))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ParamReport { name: s.name, mean: s.mean, sd: s.sd, quantiles: s.quantiles, intervals })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SummaryReport {
        model: None,
        n_draws: summary.n_draws,
        levels: levels.to_vec(),
        parameters,
        dic: None,
        mh_accept_rate: None,
    })
}

/// One row per retained draw: `draw`, then every parameter column.
pub fn write_draws<W: Write>(draws: &PosteriorDraws, out: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(out);
    let params = draws.params();
    let mut header = vec!["draw".to_string()];
    header.extend(params.iter().map(|p| p.to_string()));
    wtr.write_record(&header).map_err(csv_err)?;
    for (d, state) in draws.states().iter().enumerate() {
        let mut row = Vec::with_capacity(header.len());
        row.push((d + 1).to_string());
        row.extend(params.iter().map(|p| p.get(state).to_string()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::Io { context: "writing draws".into(), source: e })?;
    Ok(())
}

/// Reads a draws CSV back into named columns (the `draw` column is dropped).
pub fn read_draws<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read draws header: {e}")))?
        .clone();
    let keep: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| *h != "draw")
        .map(|(j, h)| (j, h.to_string()))
        .collect();
    if keep.is_empty() {
        return Err(CliError::Input("draws file has no parameter columns".into()));
    }
    let mut columns: Vec<(String, Vec<f64>)> = keep.iter().map(|(_, h)| (h.clone(), Vec::new())).collect();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| CliError::Input(format!("malformed draws CSV (row {row}): {e}")))?;
        for ((j, name), (_, col)) in keep.iter().zip(columns.iter_mut()) {
            let raw = record.get(*j).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                CliError::Input(format!("non-numeric value {raw:?} (row {row}, column {name})"))
            })?;
            col.push(v);
        }
    }
    if columns[0].1.is_empty() {
        return Err(CliError::Input("draws file has no rows".into()));
    }
    Ok(columns)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io { context: "writing CSV".into(), source: std::io::Error::other(e) }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `method, mse_theta, bias_theta, mse_sigma2, bias_sigma2, cp95, cp99`;
/// coverage cells are empty for methods without intervals.
pub fn write_report_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["method", "mse_theta", "bias_theta", "mse_sigma2", "bias_sigma2", "cp95", "cp99"])
        .map_err(csv_err)?;
    for r in &report.rows {
        wtr.write_record([
            r.method.clone(),
            r.mse_theta.to_string(),
            r.bias_theta.to_string(),
            r.mse_sigma2.to_string(),
            r.bias_sigma2.to_string(),
            opt(r.cp95),
            opt(r.cp99),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::Io { context: "writing report".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fhshrink::ParameterState;

    #[test]
    fn draws_round_trip_exactly() {
        let vals = [0.1 + 0.2, 1e-300, -123456.789e10, std::f64::consts::PI];
        let states = vals
            .iter()
            .map(|&v| ParameterState {
                theta: vec![v],
                sigma2: vec![v.abs()],
                beta: vec![v / 3.0],
                tau2: 1.0,
                gamma: 2.0,
                eta: vec![],
            })
            .collect();
        let draws = PosteriorDraws::new(states, ModelKind::Stk1, 1, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_draws(&draws, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("draw,theta_1,sigma2_1,beta_1,tau2,gamma\n"));
        let cols = read_draws(buf.as_slice()).unwrap();
        assert_eq!(cols, draws.columns());
    }

    #[test]
    fn report_intervals_match_quantiles() {
        let xs: Vec<f64> = (0..101).map(|i| (i as f64).sqrt()).collect();
        let r = summary_report(&[("a".into(), xs)], &[0.9]).unwrap();
        let p = &r.parameters[0];
        let q = |l: f64| p.quantiles.iter().find(|q| q.level == l).unwrap().value;
        let (lo, hi) = fhshrink::posterior::tail_levels(0.9);
        assert_eq!(p.intervals[0].lower, q(lo));
        assert_eq!(p.intervals[0].upper, q(hi));
        assert_eq!(q(0.5), 50f64.sqrt());
    }

    #[test]
    fn bad_draws_rejected() {
        assert!(read_draws("draw,theta_1\n1,x\n".as_bytes()).is_err());
        assert!(read_draws("draw,theta_1\n".as_bytes()).is_err());
        assert!(read_draws("draw\n1\n".as_bytes()).is_err());
    }
}
