//! CSV and JSON formats for models, meeting times, curves and draws.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::couplings::MeetingRecord;
use crate::diagnostics::TVBoundCurve;
use crate::error::{Error, Result};
use crate::model::{PriorSpec, ProbitModel};
use crate::samplers::ChainState;

fn parse_rows<R: Read>(reader: R, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidModel(format!("row {}: cannot parse '{field}' as a number", k + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidModel("design rows have unequal lengths".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

fn response_value(v: f64) -> Result<bool> {
    match v {
        1.0 => Ok(true),
        0.0 => Ok(false),
        other => Err(Error::InvalidModel(format!("response {other} is not 0 or 1"))),
    }
}

pub fn read_design_csv<R: Read>(reader: R, has_header: bool) -> Result<DMatrix<f64>> {
    rows_to_matrix(&parse_rows(reader, has_header)?)
}

pub fn read_responses_csv<R: Read>(reader: R, has_header: bool) -> Result<Vec<bool>> {
    parse_rows(reader, has_header)?
        .into_iter()
        .map(|row| match row.as_slice() {
            [v] => response_value(*v),
            _ => Err(Error::InvalidModel("responses file must have exactly one column".into())),
        })
        .collect()
}

pub fn write_design_csv<W: Write>(writer: W, x: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_responses_csv<W: Write>(writer: W, y: &[bool]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for &v in y {
        w.write_record([if v { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

/// Self-describing model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub prior: PriorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_true: Option<Vec<f64>>,
}

impl ModelBundle {
    pub fn from_model(model: &ProbitModel, beta_true: Option<&DVector<f64>>) -> Self {
        Self {
            x: (0..model.n()).map(|i| model.x.row(i).iter().copied().collect()).collect(),
            y: model.y.iter().map(|&v| u8::from(v)).collect(),
            prior: model.prior.clone(),
            beta_true: beta_true.map(|b| b.iter().copied().collect()),
        }
    }

    pub fn into_model(self) -> Result<ProbitModel> {
        let x = rows_to_matrix(&self.x)?;
        let y = self
            .y
            .iter()
            .map(|&v| response_value(f64::from(v)))
            .collect::<Result<Vec<_>>>()?;
        ProbitModel::new(x, y, self.prior)
    }
}

pub fn read_model_bundle(path: &Path) -> Result<ProbitModel> {
    let bundle: ModelBundle = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
    bundle.into_model()
}

pub fn write_model_bundle(path: &Path, model: &ProbitModel, beta_true: Option<&DVector<f64>>) -> Result<()> {
    let file = std::io::BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, &ModelBundle::from_model(model, beta_true))?;
    Ok(())
}

/// Columns `replicate, seed, L, tau, censored`.
pub fn write_meeting_csv<W: Write>(writer: W, records: &[MeetingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_meeting_csv<R: Read>(reader: R) -> Result<Vec<MeetingRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

#[derive(Serialize)]
struct CurveRow {
    t: usize,
    dbar: f64,
    se: f64,
}

/// Columns `t, dbar, se`.
pub fn write_curve_csv<W: Write>(writer: W, curve: &TVBoundCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for k in 0..curve.t_grid.len() {
        w.serialize(CurveRow {
            t: curve.t_grid[k],
            dbar: curve.dbar[k],
            se: curve.se[k],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One row per retained state: `iteration, beta_1..beta_p[, z_1..z_n]`.
pub fn write_draws_csv<W: Write>(writer: W, draws: &[(usize, ChainState)], include_z: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let Some((_, first)) = draws.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=first.beta.len()).map(|j| format!("beta_{j}")));
    if include_z {
        header.extend((1..=first.z.len()).map(|i| format!("z_{i}")));
    }
    w.write_record(&header)?;
    for (it, s) in draws {
        let mut row = vec![it.to_string()];
        row.extend(s.beta.iter().map(|v| v.to_string()));
        if include_z {
            row.extend(s.z.iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
