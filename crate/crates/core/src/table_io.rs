//! JSON persistence for [`ValueTable`] and 17-significant-digit float output.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::action_models::DisturbanceModel;
use crate::error::{Error, Result};
use crate::geometry::CostParams;
use crate::value_solver::{PartitionGrid, ValueTable};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Compact JSON with every float written at 17 significant digits.
struct SigDigitsFormatter;

impl Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as compact JSON with 17-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    lambda: f64,
    #[serde(rename = "R")]
    radius: f64,
    epsilon: f64,
    n1: usize,
    n2: usize,
    disturbance: DisturbanceModel,
    d_edges: Vec<f64>,
    e_edges: Vec<f64>,
    theta_edges: Vec<f64>,
    coefficients: Vec<f64>,
}

pub fn table_to_json(table: &ValueTable) -> Result<String> {
    table.validate()?;
    let file = TableFile {
        lambda: table.cost_params.lambda,
        radius: table.cost_params.radius,
        epsilon: table.cost_params.epsilon,
        n1: table.n1,
        n2: table.n2,
        disturbance: table.disturbance.clone(),
        d_edges: table.grid.d_edges.clone(),
        e_edges: table.grid.e_edges.clone(),
        theta_edges: table.grid.theta_edges.clone(),
        coefficients: table.coefficients.clone(),
    };
    to_json_string(&file)
}

pub fn table_from_json(text: &str) -> Result<ValueTable> {
    let f: TableFile = serde_json::from_str(text)?;
    let table = ValueTable {
        grid: PartitionGrid {
            d_edges: f.d_edges,
            e_edges: f.e_edges,
            theta_edges: f.theta_edges,
        },
        coefficients: f.coefficients,
        cost_params: CostParams {
            lambda: f.lambda,
            radius: f.radius,
            epsilon: f.epsilon,
        },
        n1: f.n1,
        n2: f.n2,
        disturbance: f.disturbance,
    };
    table.validate()?;
    Ok(table)
}

pub fn write_table(path: &Path, table: &ValueTable) -> Result<()> {
    let mut text = table_to_json(table)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<ValueTable> {
    let text = fs::read_to_string(path)?;
    table_from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::TableMismatch(format!("{}: {j}", path.display())),
        other => other,
    })
}
