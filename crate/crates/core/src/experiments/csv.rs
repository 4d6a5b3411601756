//! CSV encoding of campaign tables and summation traces.
//!
//! Floats are written with 17 significant digits so that every binary64
//! value survives a write/parse round trip.

use std::io::{BufRead, Write};

use crate::scalar::Scalar;
use crate::summation::SummationTrace;

use super::{Curves, ErrorCurves, ErrorTrend, ExperimentError, Figure, ProductCurves, Quartiles, SeriesRow, SeriesTable};

const COMMON: [&str; 5] = ["n", "p25", "p50", "p75", "max"];
const ERROR_COLS: [&str; 7] = [
    "bound_thm51",
    "bound_thm52",
    "bound_classical",
    "violations_thm51",
    "violations_thm52",
    "trials",
    "failed_trials",
];
const ERROR_TREND_COLS: [&str; 3] = ["bound_thm51_lambda1", "bound_thm52_lambda1", "ratio_thm51_p50"];
const PRODUCT_COLS: [&str; 5] = ["env_lo", "env_hi", "violations_env", "trials", "failed_trials"];
const PRODUCT_TREND_COLS: [&str; 2] = ["env_lo_lambda1", "env_hi_lambda1"];

fn header(figure: Figure, extended: bool) -> Vec<&'static str> {
    let mut cols: Vec<&str> = COMMON.to_vec();
    match (figure, extended) {
        (Figure::ErrorBounds, ext) => {
            cols.extend(ERROR_COLS);
            if ext {
                cols.extend(ERROR_TREND_COLS);
            }
        }
        (Figure::ProductGrowth, ext) => {
            cols.extend(PRODUCT_COLS);
            if ext {
                cols.extend(PRODUCT_TREND_COLS);
            }
        }
    }
    cols
}

fn num<T: Scalar>(x: T) -> String {
    format!("{x:.16e}")
}

fn row_fields<T: Scalar>(row: &SeriesRow<T>) -> Vec<String> {
    let s = &row.stats;
    let mut f = vec![row.n.to_string(), num(s.p25), num(s.p50), num(s.p75), num(s.max)];
    match &row.curves {
        Curves::Error(c) => {
            f.extend([num(c.thm51), num(c.thm52), num(c.classical)]);
            f.extend([c.violations_thm51, c.violations_thm52, row.trials, row.failed_trials].map(|v| v.to_string()));
            if let Some(t) = &c.trend {
                f.extend([num(t.thm51_lambda1), num(t.thm52_lambda1), num(t.ratio_thm51_p50)]);
            }
        }
        Curves::Product(c) => {
            f.extend([num(c.env_lo), num(c.env_hi)]);
            f.extend([c.violations_env, row.trials, row.failed_trials].map(|v| v.to_string()));
            if let Some((lo, hi)) = c.trend {
                f.extend([num(lo), num(hi)]);
            }
        }
    }
    f
}

/// Writes the header and one line per row; returns the number of rows.
pub fn emit_csv<T: Scalar, W: Write + ?Sized>(table: &SeriesTable<T>, out: &mut W) -> Result<usize, ExperimentError> {
    writeln!(out, "{}", header(table.figure, table.extended).join(","))?;
    for row in &table.rows {
        writeln!(out, "{}", row_fields(row).join(","))?;
    }
    out.flush()?;
    Ok(table.rows.len())
}

struct Fields<'a> {
    line: usize,
    items: std::str::Split<'a, char>,
}

impl Fields<'_> {
    fn next_str(&mut self) -> Result<&str, ExperimentError> {
        let line = self.line;
        self.items.next().ok_or(ExperimentError::Parse { line, message: "too few fields".into() })
    }

    fn float<T: Scalar>(&mut self) -> Result<T, ExperimentError> {
        let (line, s) = (self.line, self.next_str()?);
        s.parse::<T>().map_err(|_| ExperimentError::Parse { line, message: format!("bad number '{s}'") })
    }

    fn count(&mut self) -> Result<usize, ExperimentError> {
        let (line, s) = (self.line, self.next_str()?);
        s.parse::<usize>().map_err(|_| ExperimentError::Parse { line, message: format!("bad count '{s}'") })
    }
}

/// Reads a table written by [`emit_csv`]. Trial failures are not part of
/// the CSV, so the result has an empty `failures` list.
pub fn parse_csv<T: Scalar, R: BufRead>(input: R) -> Result<SeriesTable<T>, ExperimentError> {
    let mut lines = input.lines();
    let head = lines.next().ok_or(ExperimentError::Parse { line: 1, message: "missing header".into() })??;
    let (figure, extended) = [
        (Figure::ErrorBounds, false),
        (Figure::ErrorBounds, true),
        (Figure::ProductGrowth, false),
        (Figure::ProductGrowth, true),
    ]
    .into_iter()
    .find(|&(f, e)| header(f, e).join(",") == head)
    .ok_or_else(|| ExperimentError::Parse { line: 1, message: format!("unrecognized header '{head}'") })?;

    let mut table = SeriesTable { figure, extended, rows: Vec::new(), failures: Vec::new() };
    for (i, text) in lines.enumerate() {
        let text = text?;
        let line = i + 2;
        let mut f = Fields { line, items: text.split(',') };
        let n = f.count()?;
        let stats = Quartiles { p25: f.float()?, p50: f.float()?, p75: f.float()?, max: f.float()? };
        let (curves, trials, failed_trials) = match figure {
            Figure::ErrorBounds => {
                let (thm51, thm52, classical) = (f.float()?, f.float()?, f.float()?);
                let (v51, v52, trials, failed) = (f.count()?, f.count()?, f.count()?, f.count()?);
                let trend = if extended {
                    Some(ErrorTrend { thm51_lambda1: f.float()?, thm52_lambda1: f.float()?, ratio_thm51_p50: f.float()? })
                } else {
                    None
                };
                let c = ErrorCurves { thm51, thm52, classical, violations_thm51: v51, violations_thm52: v52, trend };
                (Curves::Error(c), trials, failed)
            }
            Figure::ProductGrowth => {
                let (env_lo, env_hi) = (f.float()?, f.float()?);
                let (violations_env, trials, failed) = (f.count()?, f.count()?, f.count()?);
                let trend = if extended { Some((f.float()?, f.float()?)) } else { None };
                (Curves::Product(ProductCurves { env_lo, env_hi, violations_env, trend }), trials, failed)
            }
        };
        if f.items.next().is_some() {
            return Err(ExperimentError::Parse { line, message: "too many fields".into() });
        }
        table.rows.push(SeriesRow { n, stats, curves, trials, failed_trials });
    }
    Ok(table)
}

/// Per-step trace: `k,x,exact_partial,computed_partial,delta,delta_lo,delta_hi,forward_error`.
pub fn write_trace_csv<T: Scalar, W: Write + ?Sized>(trace: &SummationTrace<T>, out: &mut W) -> Result<usize, ExperimentError> {
    writeln!(out, "k,x,exact_partial,computed_partial,delta,delta_lo,delta_hi,forward_error")?;
    for i in 0..trace.len() {
        let vals = [
            trace.data[i],
            trace.exact_partial[i],
            trace.computed_partial[i],
            trace.delta[i],
            trace.delta_lo[i],
            trace.delta_hi[i],
            trace.forward_error[i],
        ];
        let fields: Vec<String> = vals.iter().map(|&v| num(v)).collect();
        writeln!(out, "{},{}", i + 1, fields.join(","))?;
    }
    out.flush()?;
    Ok(trace.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_experiment, ExperimentConfig};
    use crate::fpemu::{FloatFormat, RoundingMode};
    use crate::summation::recursive_sum;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn table(figure: Figure, extended: bool, seed: u64) -> SeriesTable<f64> {
        let mut cfg = ExperimentConfig::new(figure, FloatFormat::BF16, RoundingMode::Stochastic);
        cfg.trials = 5;
        cfg.n_grid = vec![2, 40, 900];
        cfg.master_seed = seed;
        cfg.extended = extended;
        run_experiment(&cfg).unwrap()
    }

    fn round_trip(t: &SeriesTable<f64>) -> (SeriesTable<f64>, String) {
        let mut buf = Vec::new();
        let rows = emit_csv(t, &mut buf).unwrap();
        assert_eq!(rows, t.rows.len());
        let text = String::from_utf8(buf).unwrap();
        (parse_csv(text.as_bytes()).unwrap(), text)
    }

    #[test]
    fn schemas() {
        let (_, text) = round_trip(&table(Figure::ErrorBounds, false, 0));
        assert_eq!(
            text.lines().next().unwrap(),
            "n,p25,p50,p75,max,bound_thm51,bound_thm52,bound_classical,violations_thm51,violations_thm52,trials,failed_trials"
        );
        let (_, text) = round_trip(&table(Figure::ProductGrowth, false, 0));
        assert_eq!(text.lines().next().unwrap(), "n,p25,p50,p75,max,env_lo,env_hi,violations_env,trials,failed_trials");
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn empty_and_single_row_tables() {
        let mut t = table(Figure::ErrorBounds, false, 0);
        t.rows.clear();
        let mut buf = Vec::new();
        assert_eq!(emit_csv(&t, &mut buf).unwrap(), 0);
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
        let mut t = table(Figure::ErrorBounds, false, 0);
        t.rows.truncate(1);
        let (_, text) = round_trip(&t);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse_csv::<f64, _>("a,b\n".as_bytes()).is_err());
        assert!(parse_csv::<f64, _>("".as_bytes()).is_err());
        let (_, text) = round_trip(&table(Figure::ProductGrowth, false, 0));
        let truncated = text.replacen(",5,0\n", ",5\n", 1);
        assert!(parse_csv::<f64, _>(truncated.as_bytes()).is_err());
        let padded = text.replacen(",5,0\n", ",5,0,1\n", 1);
        assert!(parse_csv::<f64, _>(padded.as_bytes()).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let fmt = FloatFormat::BF16;
        let trace = recursive_sum(&[1.0f64, 0.5, 0.25], &fmt, RoundingMode::NearestEven, 0).unwrap();
        let mut buf = Vec::new();
        assert_eq!(write_trace_csv(&trace, &mut buf).unwrap(), 3);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x,exact_partial,computed_partial,delta,delta_lo,delta_hi,forward_error");
        assert!(lines[3].starts_with("3,2.5000000000000000e-1,1.7500000000000000e0,1.7500000000000000e0,"));
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn tables_round_trip_bit_exactly(seed in any::<u64>(), extended in any::<bool>(), product in any::<bool>()) {
            let figure = if product { Figure::ProductGrowth } else { Figure::ErrorBounds };
            let t = table(figure, extended, seed);
            let (back, _) = round_trip(&t);
            prop_assert_eq!(back, t);
        }

        #[test]
        fn floats_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            if x.is_finite() {
                prop_assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), bits);
            }
        }
    }
}
