//! Delimited-text files: `#` comment header, one header row, LF endings.

use crate::error::CliError;
use lpme::cloud::Point;
use std::collections::BTreeMap;
use std::path::Path;

/// Run-wide facts written at the top of every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command_line: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn header(&self, extra: &[(&str, String)]) -> String {
        let mut h = format!(
            "# lpme {}\n# command: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command_line
        );
        match self.seed {
            Some(s) => h.push_str(&format!("# seed: {s}\n")),
            None => h.push_str("# seed: none\n"),
        }
        for (k, v) in extra {
            h.push_str(&format!("# {k}: {v}\n"));
        }
        h
    }
}

/// Shortest text that parses back to the same bits.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// A table with a provenance header, written in one go.
pub struct Table {
    header: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: String, columns: &[String]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Self { header, writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let mut out = self.header.into_bytes();
        out.extend(self.writer.into_inner().expect("in-memory flush"));
        write_file(path, &out)
    }
}

/// One observation row of a cloud file.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudRow {
    pub t: f64,
    pub x: Point,
    pub truth: bool,
}

#[derive(Debug, Clone)]
pub struct CloudFile {
    pub ambient_dim: usize,
    pub has_truth_column: bool,
    /// `key: value` pairs from the comment header.
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<CloudRow>,
}

impl CloudFile {
    pub fn intrinsic_dim_hint(&self) -> Option<usize> {
        self.meta.get("intrinsic_dim").and_then(|v| v.parse().ok())
    }

    /// Sorted distinct times and their points, truth rows or observed rows.
    pub fn groups(&self, truth: bool) -> (Vec<f64>, Vec<Vec<Point>>) {
        let mut by_time: Vec<(f64, Vec<Point>)> = Vec::new();
        let mut rows: Vec<&CloudRow> = self.rows.iter().filter(|r| r.truth == truth).collect();
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        for r in rows {
            match by_time.last_mut() {
                Some((t, pts)) if *t == r.t => pts.push(r.x.clone()),
                _ => by_time.push((r.t, vec![r.x.clone()])),
            }
        }
        by_time.into_iter().unzip()
    }

    pub fn count(&self, truth: bool) -> usize {
        self.rows.iter().filter(|r| r.truth == truth).count()
    }
}

pub fn read_cloud(path: &Path) -> Result<CloudFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_cloud(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

pub fn parse_cloud(text: &str) -> Result<CloudFile, String> {
    let mut meta = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').split_once(':') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let names = reader
        .headers()
        .map_err(|e| format!("unreadable header: {e}"))?
        .clone();
    let cols: Vec<&str> = names.iter().collect();
    let has_truth_column = cols.last() == Some(&"truth");
    let ambient_dim = cols.len() - 1 - usize::from(has_truth_column);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=ambient_dim).map(|l| format!("x{l}")))
        .collect();
    if ambient_dim == 0
        || cols[..=ambient_dim] != expected.iter().map(String::as_str).collect::<Vec<_>>()[..]
    {
        return Err(format!(
            "header must be t,x1..xD[,truth], got '{}'",
            cols.join(",")
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format!("line {}: {e}", e.position().map_or(0, |p| p.line())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.len() {
            return Err(format!(
                "line {line}: expected {} fields, found {}",
                cols.len(),
                rec.len()
            ));
        }
        let field = |i: usize| -> Result<f64, String> {
            let v: f64 = rec[i].parse().map_err(|_| {
                format!(
                    "line {line}: column '{}' is not a number: '{}'",
                    cols[i], &rec[i]
                )
            })?;
            if !v.is_finite() {
                return Err(format!("line {line}: column '{}' is not finite", cols[i]));
            }
            Ok(v)
        };
        let t = field(0)?;
        let x = (1..=ambient_dim)
            .map(field)
            .collect::<Result<Vec<_>, _>>()?;
        let truth = if has_truth_column {
            match &rec[ambient_dim + 1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(format!(
                        "line {line}: truth flag must be 0 or 1, got '{other}'"
                    ))
                }
            }
        } else {
            false
        };
        rows.push(CloudRow { t, x, truth });
    }
    Ok(CloudFile {
        ambient_dim,
        has_truth_column,
        meta,
        rows,
    })
}

/// Serialize rows as a cloud file; `with_truth` adds the flag column.
pub fn cloud_text(
    header: String,
    ambient_dim: usize,
    rows: &[CloudRow],
    with_truth: bool,
) -> Vec<u8> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=ambient_dim).map(|l| format!("x{l}")));
    if with_truth {
        cols.push("truth".into());
    }
    let mut table = Table::new(header, &cols);
    for r in rows {
        let mut f: Vec<String> = std::iter::once(num(r.t))
            .chain(r.x.iter().map(|v| num(*v)))
            .collect();
        if with_truth {
            f.push(if r.truth { "1" } else { "0" }.into());
        }
        table.row(f);
    }
    let mut out = table.header.into_bytes();
    out.extend(table.writer.into_inner().expect("in-memory flush"));
    out
}
