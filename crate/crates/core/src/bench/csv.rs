//! CSV output.
//!
//! Trial experiments write one `aggregate` row per `(algo, grid point)` and,
//! on request, one `trial` row per trial, under the columns in
//! [`CSV_COLUMNS`]. Empty cells mean "not measured". Wall-clock time is only
//! written when asked for, so that reruns produce identical bytes.

use std::io::{self, Write};

use super::{aggregate, ExperimentConfig, GramReport, TrialResult};

pub const CSV_COLUMNS: [&str; 14] = [
    "kind",
    "experiment",
    "algo",
    "cf",
    "eta",
    "k",
    "seed",
    "trials",
    "success",
    "l2_error",
    "accuracy",
    "auc",
    "steps",
    "converged",
];

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn header<W: Write>(w: &mut W, config: &ExperimentConfig) -> io::Result<()> {
    writeln!(w, "# config: {}", config.fingerprint())
}

pub fn write_results_csv<W: Write>(
    mut w: W,
    config: &ExperimentConfig,
    results: &[TrialResult],
    per_trial: bool,
    timing: bool,
) -> io::Result<()> {
    header(&mut w, config)?;
    let mut cols = CSV_COLUMNS.join(",");
    if timing {
        cols.push_str(",wall_ms");
    }
    writeln!(w, "{cols}")?;
    let exp = config.experiment.name();
    for a in aggregate(results) {
        write!(
            w,
            "aggregate,{exp},{},{},{},{},,{},{},{},{},{},{},{}",
            a.algo,
            num(a.cf),
            num(a.eta),
            a.k,
            a.trials,
            num(a.success),
            num(a.l2_error),
            num(a.accuracy),
            num(a.auc),
            num(a.steps),
            num(a.converged),
        )?;
        if timing {
            write!(w, ",{}", num(a.wall_ms))?;
        }
        writeln!(w)?;
    }
    if per_trial {
        for r in results {
            write!(
                w,
                "trial,{exp},{},{},{},{},{},1,{},{},{},{},{},{}",
                r.algo,
                num(r.cf),
                num(r.eta),
                r.k,
                r.seed,
                r.success as u8,
                num(r.l2_error),
                num(r.accuracy),
                num(r.auc),
                r.steps,
                r.converged as u8,
            )?;
            if timing {
                write!(w, ",{}", r.wall_ms)?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// One `trial` row per trial and a closing `summary` row.
pub fn write_gram_csv<W: Write>(mut w: W, config: &ExperimentConfig, report: &GramReport) -> io::Result<()> {
    header(&mut w, config)?;
    writeln!(w, "kind,trial,seed,p,m,d,expected,mean_eig,min_nonzero_eig,max_eig,nonzero,eps")?;
    let (p, m, d) = (report.p, report.m, report.d);
    let expected = report.expected();
    for t in &report.trials {
        writeln!(
            w,
            "trial,{},{},{p},{m},{d},{expected},{},{},{},{},{}",
            t.trial, t.seed, t.mean_eig, t.min_nonzero_eig, t.max_eig, t.nonzero, t.eps
        )?;
    }
    writeln!(
        w,
        "summary,,,{p},{m},{d},{expected},{},,,,{}",
        report.mean_eig(),
        report.eps_mean()
    )
}
