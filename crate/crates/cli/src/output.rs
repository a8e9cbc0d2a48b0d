//! Table and JSON writers shared by all subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use magnonsim::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Numeric table with one unit per column.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Self {
            columns: columns
                .iter()
                .map(|(n, u)| (n.to_string(), u.to_string()))
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header cells in the form `name [unit]`.
    pub fn header(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|(n, u)| format!("{n} [{u}]"))
            .collect()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Formats a value so that it parses back to the same number.
pub fn number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Writes `<dir>/<stem>.<ext>` and returns the file name.
pub fn write_table(dir: &Path, stem: &str, table: &Table, format: Format) -> Result<String> {
    let name = format!("{stem}.{}", format.extension());
    let path = dir.join(&name);
    match format {
        Format::Csv => {
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(file));
            let csv_err = |e: csv::Error| Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            };
            w.write_record(table.header()).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|&v| number(v))).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        Format::Json => {
            let records: Vec<serde_json::Map<String, serde_json::Value>> = table
                .rows
                .iter()
                .map(|row| {
                    table
                        .header()
                        .into_iter()
                        .zip(row)
                        .map(|(h, &v)| (h, json_number(v)))
                        .collect()
                })
                .collect();
            write_json(&path, &records)?;
        }
    }
    Ok(name)
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| serde_json::Value::String(number(v)))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.to_path_buf())
}

/// Matplotlib script that draws every CSV written by a command.
pub fn plot_script(command: &str, files: &[String]) -> String {
    let mut s = String::from(
        "#!/usr/bin/env python3\n\
         # Plots the tables written next to this script. Requires pandas and matplotlib.\n\
         import pathlib\n\
         import matplotlib.pyplot as plt\n\
         import pandas as pd\n\n\
         here = pathlib.Path(__file__).resolve().parent\n",
    );
    s.push_str(&format!("files = {:?}\n", files));
    s.push_str(&format!("command = {command:?}\n"));
    s.push_str(
        "for name in files:\n\
         \x20   if not name.endswith('.csv'):\n\
         \x20       continue\n\
         \x20   df = pd.read_csv(here / name)\n\
         \x20   x, ys = df.columns[0], df.columns[1:]\n\
         \x20   fig, ax = plt.subplots()\n\
         \x20   if command in ('cool-map', 'spectrum') and name.startswith(('cool_map', 'spectrum')):\n\
         \x20       piv = df.pivot(index=df.columns[1], columns=df.columns[0], values=df.columns[2])\n\
         \x20       m = ax.pcolormesh(piv.columns, piv.index, piv.values, shading='auto')\n\
         \x20       fig.colorbar(m, ax=ax, label=df.columns[2])\n\
         \x20       ax.set_xlabel(df.columns[0])\n\
         \x20       ax.set_ylabel(df.columns[1])\n\
         \x20   else:\n\
         \x20       for y in ys:\n\
         \x20           ax.plot(df[x], df[y], label=y)\n\
         \x20       ax.set_xlabel(x)\n\
         \x20       ax.legend()\n\
         \x20   ax.set_title(name)\n\
         \x20   fig.savefig(here / (name[:-4] + '.png'), dpi=150)\n",
    );
    s
}
