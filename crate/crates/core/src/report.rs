//! CSV readers and writers. Every table starts with a header row and floats
//! are written in shortest round-trip scientific notation.

use std::io::{Read, Write};

use csv::{ReaderBuilder, Trim, Writer};
use nalgebra::DMatrix;

use crate::amplitude::DiagonalReport;
use crate::error::{Error, Result};
use crate::factor::FactorizationReport;
use crate::opcore::Operator;
use crate::stability::{ChannelAssembly, ConvergenceReport, CounterexampleRow, UniformityTable};

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write_diagonal_csv<W: Write>(out: W, report: &DiagonalReport) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record(["step", "intervals", "range", "cauchy_defect", "norm", "source_norm", "intertwining"])?;
    for (k, s) in report.steps.iter().enumerate() {
        w.write_record([
            k.to_string(),
            s.partition.intervals().to_string(),
            num(s.partition.range()),
            opt(s.cauchy_defect),
            num(s.norm),
            num(report.source_norm),
            opt(s.intertwining),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_factorization_csv<W: Write>(out: W, report: &FactorizationReport) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record([
        "step",
        "intervals",
        "range",
        "residual",
        "isometry_defect",
        "rank_defect",
        "triangularity",
        "cholesky_distance",
    ])?;
    for (k, r) in report.sweep.iter().enumerate() {
        w.write_record([
            k.to_string(),
            r.intervals.to_string(),
            num(r.range),
            num(r.residual),
            num(r.admissibility.isometry_defect),
            r.admissibility.rank_defect.to_string(),
            num(r.triangularity),
            opt(r.cholesky_distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence_csv<W: Write>(out: W, report: &ConvergenceReport) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record([
        "alpha",
        "op_defect",
        "proj_defect",
        "proj_defect_at",
        "max_pairing",
        "term_i",
        "term_ii",
        "term_iii",
        "term_iv",
        "bound_slack",
    ])?;
    for r in &report.rows {
        let t = r.terms.as_ref();
        w.write_record([
            num(r.alpha),
            num(r.op_defect),
            num(r.proj_defect),
            num(r.proj_defect_at),
            opt(r.max_pairing),
            opt(t.map(|t| t.i)),
            opt(t.map(|t| t.ii)),
            opt(t.map(|t| t.iii)),
            opt(t.map(|t| t.iv)),
            opt(r.bound_slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per refinement step: the range, the supremum over the family,
/// then one Cauchy defect column per family member.
pub fn write_uniformity_csv<W: Write>(out: W, table: &UniformityTable) -> Result<()> {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["range".to_string(), "sup".to_string()];
    header.extend(table.alphas.iter().map(|a| format!("alpha={a}")));
    w.write_record(&header)?;
    for ((range, sup), row) in table.ranges.iter().zip(table.sup_per_step()).zip(&table.defects) {
        let mut rec = vec![num(*range), num(sup)];
        rec.extend(row.iter().copied().map(num));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_counterexample_csv<W: Write>(out: W, rows: &[CounterexampleRow]) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record([
        "n",
        "perturbation_norm",
        "perturbation_bound",
        "phi1_defect",
        "closed_form_phi1_defect",
        "projection_agreement",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            num(r.perturbation_norm),
            num(2.0 / r.n as f64),
            num(r.phi1_defect),
            num(r.closed_form_phi1_defect),
            num(r.projection_agreement),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_channels_csv<W: Write>(out: W, assembly: &ChannelAssembly) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record(["channel", "dim", "residual", "isometry_defect", "rank_defect", "triangularity"])?;
    for (l, r) in assembly.channels.iter().enumerate() {
        w.write_record([
            (l + 1).to_string(),
            r.c.dim().to_string(),
            num(r.residual),
            num(r.admissibility.isometry_defect),
            r.admissibility.rank_defect.to_string(),
            num(r.triangularity_defect),
        ])?;
    }
    w.write_record([
        "all".to_string(),
        assembly.c.dim().to_string(),
        num(assembly.residual),
        num(assembly.admissibility.isometry_defect),
        assembly.admissibility.rank_defect.to_string(),
        num(assembly.triangularity_defect),
    ])?;
    w.flush()?;
    Ok(())
}

/// One checked operator of the positive-definite projection experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct PosdefRow {
    pub case: usize,
    pub dim: usize,
    /// Largest `‖P_formula − P_range‖` over the grid.
    pub agreement: f64,
    pub idempotence: f64,
    pub symmetry: f64,
}

pub fn write_posdef_csv<W: Write>(out: W, rows: &[PosdefRow]) -> Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record(["case", "dim", "agreement", "idempotence", "symmetry"])?;
    for r in rows {
        w.write_record([
            r.case.to_string(),
            r.dim.to_string(),
            num(r.agreement),
            num(r.idempotence),
            num(r.symmetry),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix: first record `n`, then `n` records of `n` reals.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<Operator> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut records = reader.records();
    let first = records.next().ok_or(Error::Parse {
        line: 1,
        message: "empty matrix file".into(),
    })??;
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line() as usize);
    if first.len() != 1 {
        return Err(Error::Parse {
            line: line_of(&first),
            message: format!("expected the dimension alone on the first line, found {} fields", first.len()),
        });
    }
    let n: usize = first[0].parse().map_err(|_| Error::Parse {
        line: line_of(&first),
        message: format!("invalid dimension `{}`", &first[0]),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line: line_of(&first),
            message: "dimension must be positive".into(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let rec = records.next().ok_or_else(|| Error::Parse {
            line: line_of(&first) + i + 1,
            message: format!("expected {n} rows, found {i}"),
        })??;
        let line = line_of(&rec);
        if rec.len() != n {
            return Err(Error::Parse {
                line,
                message: format!("expected {n} values, found {}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            m[(i, j)] = match field.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("invalid value `{field}` in column {}", j + 1),
                    })
                }
            };
        }
    }
    if let Some(extra) = records.next() {
        let extra = extra?;
        return Err(Error::Parse {
            line: line_of(&extra),
            message: format!("unexpected data after {n} rows"),
        });
    }
    Operator::new(m)
}

/// Writes a matrix in the format read by [`read_matrix_csv`].
pub fn write_matrix_csv<W: Write>(mut out: W, op: &Operator) -> Result<()> {
    writeln!(out, "{}", op.dim())?;
    for row in op.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
