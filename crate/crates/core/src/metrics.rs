//! Per-round diagnostics and their CSV form.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the identical `f64`. Cells that do not apply to a run are left empty.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ode;
use crate::schedules::LimitingWeights;
use crate::tasks::softmax::{evaluate, LabeledSamples, SoftmaxParams};
use crate::tasks::RegressionTask;
use crate::vector;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    pub global_step: u64,
    pub t_n: Option<f64>,
    pub w_bar: Option<Vec<f64>>,
    pub param_error: Option<f64>,
    pub agg_grad_norm: Option<f64>,
    pub per_client_grad_norms: Vec<f64>,
    pub delta_wbar: Option<f64>,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub rare_class_acc: Option<f64>,
    pub tracking_error: Option<f64>,
}

/// Column layout of a metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSchema {
    /// `wbar_dim` appends `wbar_1..wbar_d` when set.
    Regression { clients: usize, wbar_dim: Option<usize> },
    Classification,
}

impl CsvSchema {
    pub fn header(&self) -> Vec<String> {
        match *self {
            CsvSchema::Regression { clients, wbar_dim } => {
                let mut h: Vec<String> = ["round", "global_step", "T_n", "param_error", "agg_grad_norm"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                h.extend((1..=clients).map(|i| format!("grad_norm_c{i}")));
                h.push("delta_wbar".into());
                h.push("tracking_error".into());
                if let Some(d) = wbar_dim {
                    h.extend((1..=d).map(|j| format!("wbar_{j}")));
                }
                h
            }
            CsvSchema::Classification => [
                "round",
                "global_step",
                "train_loss",
                "train_acc",
                "test_loss",
                "test_acc",
                "rare_class_acc",
                "delta_wbar",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// Compute the regression diagnostics for a freshly aggregated `w_bar`.
#[allow(clippy::too_many_arguments)]
pub fn record_round(
    round: usize,
    global_step: u64,
    t_n: Option<f64>,
    w_bar: &[f64],
    prev_w_bar: Option<&[f64]>,
    tasks: &[RegressionTask],
    p: &LimitingWeights,
    w_star: Option<&[f64]>,
) -> MetricsRecord {
    MetricsRecord {
        round,
        global_step,
        t_n,
        w_bar: Some(w_bar.to_vec()),
        param_error: w_star.map(|w| vector::dist(w_bar, w)),
        agg_grad_norm: Some(vector::norm(&ode::ode_rhs(p, tasks, w_bar))),
        per_client_grad_norms: tasks.iter().map(|t| vector::norm(&t.population_h(w_bar))).collect(),
        delta_wbar: prev_w_bar.map(|prev| vector::dist(w_bar, prev)),
        ..Default::default()
    }
}

/// Classification diagnostics of the global model.
pub fn record_classification_round(
    round: usize,
    global_step: u64,
    params: &SoftmaxParams,
    delta_wbar: Option<f64>,
    train: &LabeledSamples,
    test: &LabeledSamples,
    rare_class: Option<usize>,
) -> MetricsRecord {
    let train_eval = evaluate(params, train, None);
    let test_eval = evaluate(params, test, None);
    let rare = rare_class.and_then(|r| evaluate(params, test, Some(r)));
    MetricsRecord {
        round,
        global_step,
        w_bar: Some(params.to_flat()),
        delta_wbar,
        train_loss: train_eval.map(|e| e.0),
        train_acc: train_eval.map(|e| e.1),
        test_loss: test_eval.map(|e| e.0),
        test_acc: test_eval.map(|e| e.1),
        rare_class_acc: rare.map(|e| e.1),
        ..Default::default()
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl MetricsRecord {
    fn row(&self, schema: &CsvSchema) -> Vec<String> {
        let mut row = vec![self.round.to_string(), self.global_step.to_string()];
        match *schema {
            CsvSchema::Regression { clients, wbar_dim } => {
                row.push(cell(self.t_n));
                row.push(cell(self.param_error));
                row.push(cell(self.agg_grad_norm));
                row.extend((0..clients).map(|i| cell(self.per_client_grad_norms.get(i).copied())));
                row.push(cell(self.delta_wbar));
                row.push(cell(self.tracking_error));
                if let Some(d) = wbar_dim {
                    row.extend((0..d).map(|j| cell(self.w_bar.as_ref().and_then(|w| w.get(j).copied()))));
                }
            }
            CsvSchema::Classification => {
                row.push(cell(self.train_loss));
                row.push(cell(self.train_acc));
                row.push(cell(self.test_loss));
                row.push(cell(self.test_acc));
                row.push(cell(self.rare_class_acc));
                row.push(cell(self.delta_wbar));
            }
        }
        row
    }

    /// All recorded norms are finite and non-negative.
    pub fn norms_valid(&self) -> bool {
        [self.param_error, self.agg_grad_norm, self.delta_wbar, self.tracking_error]
            .iter()
            .flatten()
            .chain(&self.per_client_grad_norms)
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Streams records to a writer, header first.
pub struct CsvSink<W: Write> {
    out: W,
    schema: CsvSchema,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, schema: CsvSchema) -> Result<Self> {
        writeln!(out, "{}", schema.header().join(","))?;
        Ok(Self { out, schema })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", record.row(&self.schema).join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], schema: CsvSchema, out: W) -> Result<()> {
    let mut sink = CsvSink::new(out, schema)?;
    for r in records {
        sink.write(r)?;
    }
    sink.flush()
}

fn parse_cell(path: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::validation(path.to_string(), format!("bad number `{s}`: {e}")))
}

/// Parses a metrics file written with `schema`.
pub fn read_csv<R: BufRead>(input: R, schema: CsvSchema) -> Result<Vec<MetricsRecord>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let expected = schema.header().join(",");
    if header != expected {
        return Err(Error::validation("csv.header", format!("expected `{expected}`, found `{header}`")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let cells: Vec<&str> = line.split(',').collect();
        let path = format!("csv.row{}", lineno + 1);
        let mut it = cells.iter();
        let mut next = |name: &str| -> Result<Option<f64>> {
            let c = it
                .next()
                .ok_or_else(|| Error::validation(path.clone(), format!("missing column {name}")))?;
            parse_cell(&path, c)
        };
        let round = next("round")?.unwrap_or_default() as usize;
        let global_step = next("global_step")?.unwrap_or_default() as u64;
        let mut r = MetricsRecord {
            round,
            global_step,
            ..Default::default()
        };
        match schema {
            CsvSchema::Regression { clients, wbar_dim } => {
                r.t_n = next("T_n")?;
                r.param_error = next("param_error")?;
                r.agg_grad_norm = next("agg_grad_norm")?;
                for _ in 0..clients {
                    if let Some(v) = next("grad_norm")? {
                        r.per_client_grad_norms.push(v);
                    }
                }
                r.delta_wbar = next("delta_wbar")?;
                r.tracking_error = next("tracking_error")?;
                if let Some(d) = wbar_dim {
                    let w = (0..d).map(|_| next("wbar")).collect::<Result<Vec<_>>>()?;
                    r.w_bar = w.into_iter().collect();
                }
            }
            CsvSchema::Classification => {
                r.train_loss = next("train_loss")?;
                r.train_acc = next("train_acc")?;
                r.test_loss = next("test_loss")?;
                r.test_acc = next("test_acc")?;
                r.rare_class_acc = next("rare_class_acc")?;
                r.delta_wbar = next("delta_wbar")?;
            }
        }
        if cells.len() != schema.header().len() {
            return Err(Error::validation(
                path,
                format!("expected {} cells, found {}", schema.header().len(), cells.len()),
            ));
        }
        out.push(r);
    }
    Ok(out)
}

/// One row per `(n_start, m)` of a tracking-error series.
pub fn write_tracking_csv<W: Write>(series: &[(usize, Vec<f64>)], times: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "n_start,m,T,tracking_error")?;
    for (n_start, errors) in series {
        for (m, e) in errors.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                n_start,
                m,
                format_float(times[n_start + m]),
                format_float(*e)
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
