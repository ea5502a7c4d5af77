//! CSV, JSON and gnuplot artifacts.
//!
//! Field CSV: header `x1,…,xn,value[,extra…]`, one row per grid node in node
//! order. Recurrence CSV: `node,x1,…,xn,class,strong_0,…,slack_0,…,
//! bottleneck_0,…` with one column per ladder level. Numbers are written in
//! shortest round-trip form, so parsing gives back the same bits; NaN and
//! `inf` are spelled as Rust prints them.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::recurrence::{RecurrenceClass, RecurrenceReport};
use crate::scalar::ScalarField;

/// Rows of a field CSV: coordinates and one or more value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub columns: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

fn coord_headers(dims: usize) -> Vec<String> {
    (1..=dims).map(|j| format!("x{j}")).collect()
}

/// Write `field` with optional extra columns of the same length.
pub fn write_field_csv<W: Write>(
    w: W,
    field: &ScalarField,
    extra: &[(&str, &[f64])],
) -> Result<()> {
    let grid = field.grid();
    if extra.iter().any(|(_, v)| v.len() != grid.len()) {
        return Err(Error::Internal("extra column length differs from grid".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = coord_headers(grid.dims());
    header.push("value".into());
    header.extend(extra.iter().map(|(n, _)| n.to_string()));
    out.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..grid.len() {
        rec.clear();
        rec.extend(grid.coords(i).iter().map(|c| c.to_string()));
        rec.push(field.value(i).to_string());
        rec.extend(extra.iter().map(|(_, v)| v[i].to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Input(format!("not a number in CSV: {s:?}")))
}

pub fn read_field_csv<R: Read>(r: R) -> Result<FieldTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let vpos = header
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Input("field CSV has no value column".into()))?;
    if header[..vpos] != coord_headers(vpos)[..] {
        return Err(Error::Input("field CSV must start with x1..xn".into()));
    }
    let mut t = FieldTable {
        columns: header[vpos..].to_vec(),
        coords: Vec::new(),
        values: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let nums = rec.iter().map(parse_num).collect::<Result<Vec<f64>>>()?;
        t.coords.push(nums[..vpos].to_vec());
        t.values.push(nums[vpos..].to_vec());
    }
    Ok(t)
}

/// One node of a recurrence CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceRow {
    pub node: usize,
    pub coords: Vec<f64>,
    pub class: RecurrenceClass,
    pub strong: Vec<f64>,
    pub slack: Vec<f64>,
    pub bottleneck: Vec<f64>,
}

pub fn write_recurrence_csv<W: Write>(w: W, rep: &RecurrenceReport) -> Result<()> {
    let levels = rep.levels.len();
    let dims = rep.levels.first().map_or(0, |l| l.counts.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["node".to_string()];
    header.extend(coord_headers(dims));
    header.push("class".into());
    for name in ["strong", "slack", "bottleneck"] {
        header.extend((0..levels).map(|l| format!("{name}_{l}")));
    }
    out.write_record(&header)?;
    for n in &rep.nodes {
        let mut rec = vec![n.node.to_string()];
        rec.extend(n.coords.iter().map(|c| c.to_string()));
        rec.push(n.class.as_str().to_string());
        for col in [&n.strong, &n.strong_slack, &n.bottleneck] {
            rec.extend(col.iter().map(|v| v.to_string()));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_class(s: &str) -> Result<RecurrenceClass> {
    [
        RecurrenceClass::Scr,
        RecurrenceClass::CrOnly,
        RecurrenceClass::NonRecurrent,
    ]
    .into_iter()
    .find(|c| c.as_str() == s)
    .ok_or_else(|| Error::Input(format!("unknown recurrence class {s:?}")))
}

pub fn read_recurrence_csv<R: Read>(r: R) -> Result<Vec<RecurrenceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cpos = header
        .iter()
        .position(|h| h == "class")
        .ok_or_else(|| Error::Input("recurrence CSV has no class column".into()))?;
    let dims = cpos - 1;
    let rest = header.len() - cpos - 1;
    if header.first().map(String::as_str) != Some("node") || rest % 3 != 0 {
        return Err(Error::Input("malformed recurrence CSV header".into()));
    }
    let levels = rest / 3;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let node = field(0)
            .parse()
            .map_err(|_| Error::Input(format!("bad node index {:?}", field(0))))?;
        let nums = |from: usize, len: usize| {
            (from..from + len)
                .map(|i| parse_num(field(i)))
                .collect::<Result<Vec<f64>>>()
        };
        rows.push(RecurrenceRow {
            node,
            coords: nums(1, dims)?,
            class: parse_class(field(cpos))?,
            strong: nums(cpos + 1, levels)?,
            slack: nums(cpos + 1 + levels, levels)?,
            bottleneck: nums(cpos + 1 + 2 * levels, levels)?,
        });
    }
    Ok(rows)
}

/// Gnuplot script plotting `columns` (1-based, after the coordinates) of a
/// field CSV against its coordinates.
pub fn gnuplot_script(data_file: &str, dims: usize, title: &str, columns: &[(usize, &str)]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title \"{}\"\n", title.replace('"', "'")));
    match dims {
        1 => {
            s.push_str("set xlabel 'x1'\n");
            let parts: Vec<String> = columns
                .iter()
                .map(|(c, name)| format!("'{data_file}' using 1:{} with lines title '{name}'", c + 1))
                .collect();
            s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        }
        _ => {
            s.push_str("set xlabel 'x1'\nset ylabel 'x2'\nset view map\n");
            s.push_str("set pm3d at b\nunset surface\n");
            let (c, name) = columns.first().copied().unwrap_or((1, "value"));
            s.push_str(&format!("splot '{data_file}' using 1:2:{} with pm3d title '{name}'\n", c + 2));
        }
    }
    s.push_str("pause mouse close\n");
    s
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}
