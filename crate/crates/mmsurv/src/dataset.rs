//! Dataset directories.
//!
//! ```text
//! <dir>/manifest.json           dimensions, sample and gene names
//! <dir>/patches/<sample>.csv    p × f patch features of one sample
//! <dir>/pathways.csv            n × G gene features, one row per sample
//! <dir>/membership.csv          gene → pathway grouping (G rows)
//! <dir>/labels.csv              time and event per sample
//! ```
//!
//! Every CSV starts with `#schema=1,rows=R,cols=C` describing its data
//! rows (column-name lines excluded). Pathway tokens are formed by
//! grouping gene columns by pathway, in order of first appearance in the
//! membership file; all pathways must have the same number of genes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mmsurv_core::dataio::SyntheticDomain;
use mmsurv_core::fusion::ModalityBatch;
use mmsurv_core::survival::SurvivalRecord;
use mmsurv_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub domain_id: String,
    pub n_samples: usize,
    pub patches_per_sample: usize,
    pub patch_dim: usize,
    pub pathways: usize,
    pub pathway_dim: usize,
    pub samples: Vec<String>,
}

/// A loaded domain with names for its samples, genes and pathways.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub batch: ModalityBatch,
    pub samples: Vec<String>,
    /// Gene names in the order of the pathway token features.
    pub genes: Vec<String>,
    pub pathways: Vec<String>,
}

impl Dataset {
    /// Names a generated domain: samples `s0000…`, pathways `pw000…` and
    /// genes `pw000_g00…`.
    pub fn from_synthetic(id: &str, domain: SyntheticDomain) -> Self {
        let batch = domain.batch;
        let samples = (0..batch.len()).map(|i| format!("s{i:04}")).collect();
        let pathways: Vec<String> = (0..batch.pathways_per_sample())
            .map(|k| format!("pw{k:03}"))
            .collect();
        let genes = pathways
            .iter()
            .flat_map(|p| (0..batch.pathway_dim()).map(move |j| format!("{p}_g{j:02}")))
            .collect();
        Self {
            id: id.to_string(),
            batch,
            samples,
            genes,
            pathways,
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema: SCHEMA_VERSION,
            domain_id: self.id.clone(),
            n_samples: self.batch.len(),
            patches_per_sample: self.batch.patches_per_sample(),
            patch_dim: self.batch.patch_dim(),
            pathways: self.batch.pathways_per_sample(),
            pathway_dim: self.batch.pathway_dim(),
            samples: self.samples.clone(),
        }
    }

    /// Writes the dataset directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let b = &self.batch;
        fs::create_dir_all(dir.join("patches")).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serialises");
        write(&dir.join("manifest.json"), &(manifest + "\n"))?;

        let (p, f) = (b.patches_per_sample(), b.patch_dim());
        for (s, name) in self.samples.iter().enumerate() {
            let mut out = header(p, f);
            for row in b.sample_patches(s).chunks(f) {
                push_row(&mut out, None, row);
            }
            write(&dir.join("patches").join(format!("{name}.csv")), &out)?;
        }

        let g = self.genes.len();
        let mut out = header(b.len(), g);
        out.push_str("sample");
        for gene in &self.genes {
            out.push(',');
            out.push_str(gene);
        }
        out.push('\n');
        for (s, name) in self.samples.iter().enumerate() {
            push_row(&mut out, Some(name), b.sample_pathways(s));
        }
        write(&dir.join("pathways.csv"), &out)?;

        let mut out = header(g, 2);
        out.push_str("gene,pathway\n");
        let per = b.pathway_dim();
        for (i, gene) in self.genes.iter().enumerate() {
            let _ = writeln!(out, "{gene},{}", self.pathways[i / per]);
        }
        write(&dir.join("membership.csv"), &out)?;

        let mut out = header(b.len(), 2);
        out.push_str("sample,time,event\n");
        for (name, r) in self.samples.iter().zip(b.labels()) {
            let _ = writeln!(out, "{name},{:?},{}", r.time, u8::from(r.event));
        }
        write(&dir.join("labels.csv"), &out)
    }

    /// Reads and validates a dataset directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.to_string()))?;
        if m.schema != SCHEMA_VERSION {
            return Err(Error::schema(&path, format!("schema version {}", m.schema)));
        }
        if m.samples.len() != m.n_samples {
            return Err(Error::schema(
                &path,
                "samples length differs from n_samples",
            ));
        }
        let (n, p, f) = (m.n_samples, m.patches_per_sample, m.patch_dim);

        let mut patches = Vec::with_capacity(n * p * f);
        for name in &m.samples {
            let file = dir.join("patches").join(format!("{name}.csv"));
            let t = read_table(&file, Some((p, f)), Layout::Bare)?;
            for row in t.rows {
                patches.extend(parse_floats(&file, row.index, &row.fields)?);
            }
        }

        let file = dir.join("membership.csv");
        let membership = read_table(&file, None, Layout::Named)?;
        if membership.cols != 2 {
            return Err(Error::schema(&file, "cols must be 2"));
        }
        let mut groups: Vec<(String, Vec<String>)> = Vec::new();
        for row in &membership.rows {
            let (gene, pathway) = (&row.fields[0], &row.fields[1]);
            match groups.iter_mut().find(|(name, _)| name == pathway) {
                Some((_, genes)) => genes.push(gene.clone()),
                None => groups.push((pathway.clone(), vec![gene.clone()])),
            }
        }
        if groups.len() != m.pathways {
            return Err(Error::schema(
                &file,
                format!("{} pathways, manifest says {}", groups.len(), m.pathways),
            ));
        }
        if let Some((name, genes)) = groups.iter().find(|(_, g)| g.len() != m.pathway_dim) {
            return Err(Error::schema(
                &file,
                format!(
                    "pathway {name} has {} genes, expected pathway_dim {}",
                    genes.len(),
                    m.pathway_dim
                ),
            ));
        }

        let file = dir.join("pathways.csv");
        let table = read_table(&file, Some((n, membership.rows.len())), Layout::Keyed)?;
        let columns = &table.column_names;
        if columns.first().map(String::as_str) != Some("sample") {
            return Err(Error::schema(&file, "first column must be `sample`"));
        }
        let mut column_of = BTreeMap::new();
        for (i, c) in columns.iter().enumerate().skip(1) {
            if column_of.insert(c.as_str(), i - 1).is_some() {
                return Err(Error::schema(&file, format!("duplicate gene column {c}")));
            }
        }
        let mut order = Vec::with_capacity(membership.rows.len());
        for (_, genes) in &groups {
            for g in genes {
                match column_of.get(g.as_str()) {
                    Some(&c) => order.push(c),
                    None => return Err(Error::schema(&file, format!("missing gene column {g}"))),
                }
            }
        }
        let mut pathways = Vec::with_capacity(n * order.len());
        for (row, name) in table.rows.iter().zip(&m.samples) {
            if &row.fields[0] != name {
                return Err(Error::Data {
                    file: file.clone(),
                    row: row.index,
                    message: format!("sample {} where {name} was expected", row.fields[0]),
                });
            }
            let values = parse_floats(&file, row.index, &row.fields[1..])?;
            pathways.extend(order.iter().map(|&c| values[c]));
        }

        let file = dir.join("labels.csv");
        let table = read_table(&file, Some((n, 2)), Layout::Keyed)?;
        let mut labels = Vec::with_capacity(n);
        for (row, name) in table.rows.iter().zip(&m.samples) {
            if &row.fields[0] != name {
                return Err(Error::Data {
                    file: file.clone(),
                    row: row.index,
                    message: format!("sample {} where {name} was expected", row.fields[0]),
                });
            }
            let time = parse_floats(&file, row.index, &row.fields[1..2])?[0];
            if time < 0.0 {
                return Err(Error::Data {
                    file: file.clone(),
                    row: row.index,
                    message: "negative time".into(),
                });
            }
            let event = match row.fields[2].as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Data {
                        file: file.clone(),
                        row: row.index,
                        message: format!("event must be 0 or 1, got {other}"),
                    })
                }
            };
            labels.push(SurvivalRecord::new(time, event));
        }

        let batch = ModalityBatch::new(
            Tensor::matrix(n * p, f, patches)?,
            p,
            Tensor::matrix(n * m.pathways, m.pathway_dim, pathways)?,
            m.pathways,
            labels,
        )?;
        Ok(Self {
            id: m.domain_id,
            batch,
            samples: m.samples,
            genes: groups.iter().flat_map(|(_, g)| g.iter().cloned()).collect(),
            pathways: groups.into_iter().map(|(name, _)| name).collect(),
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn header(rows: usize, cols: usize) -> String {
    format!("#schema={SCHEMA_VERSION},rows={rows},cols={cols}\n")
}

fn push_row(out: &mut String, name: Option<&str>, values: &[f64]) {
    let mut first = true;
    if let Some(name) = name {
        out.push_str(name);
        first = false;
    }
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

struct Row {
    /// 0-based data row index.
    index: usize,
    fields: Vec<String>,
}

struct Table {
    cols: usize,
    column_names: Vec<String>,
    rows: Vec<Row>,
}

fn parse_header(file: &Path, line: &str) -> Result<(usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::schema(file, "missing `#schema=…` header"))?;
    let mut schema = None;
    let mut rows = None;
    let mut cols = None;
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::schema(file, format!("malformed header field `{part}`")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::schema(file, format!("header field {k} is not an integer")))?;
        match k.trim() {
            "schema" => schema = Some(v),
            "rows" => rows = Some(v),
            "cols" => cols = Some(v),
            other => return Err(Error::schema(file, format!("unknown header field {other}"))),
        }
    }
    match schema {
        Some(s) if s == SCHEMA_VERSION as usize => {}
        Some(s) => return Err(Error::schema(file, format!("schema version {s}"))),
        None => return Err(Error::schema(file, "header lacks schema")),
    }
    let rows = rows.ok_or_else(|| Error::schema(file, "header lacks rows"))?;
    let cols = cols.ok_or_else(|| Error::schema(file, "header lacks cols"))?;
    Ok((rows, cols))
}

/// How a table lays out its columns.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// Numbers only.
    Bare,
    /// A column-name line; `cols` counts every column.
    Named,
    /// A column-name line and a leading sample column not counted in `cols`.
    Keyed,
}

/// Reads a headed CSV; `expect` checks the header's `(rows, cols)`.
fn read_table(file: &Path, expect: Option<(usize, usize)>, layout: Layout) -> Result<Table> {
    let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let (rows, cols) = parse_header(file, first)?;
    if let Some((r, c)) = expect {
        if rows != r {
            return Err(Error::schema(file, format!("rows={rows}, expected {r}")));
        }
        if cols != c {
            return Err(Error::schema(file, format!("cols={cols}, expected {c}")));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(layout != Layout::Bare)
        .flexible(true)
        .from_reader(rest.as_bytes());
    let column_names: Vec<String> = if layout != Layout::Bare {
        reader
            .headers()
            .map_err(|e| Error::schema(file, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let width = if layout == Layout::Keyed {
        cols + 1
    } else {
        cols
    };
    if layout != Layout::Bare && column_names.len() != width {
        return Err(Error::schema(
            file,
            format!("{} column names, expected {width}", column_names.len()),
        ));
    }
    let mut out = Vec::with_capacity(rows);
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::schema(file, e.to_string()))?;
        if record.len() != width {
            return Err(Error::Data {
                file: file.to_path_buf(),
                row: index,
                message: format!("{} fields, expected {width}", record.len()),
            });
        }
        out.push(Row {
            index,
            fields: record.iter().map(str::to_string).collect(),
        });
    }
    if out.len() != rows {
        return Err(Error::schema(
            file,
            format!("{} data rows, header says rows={rows}", out.len()),
        ));
    }
    Ok(Table {
        cols,
        column_names,
        rows: out,
    })
}

fn parse_floats(file: &Path, row: usize, fields: &[String]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|s| {
            let v: f64 = s.trim().parse().map_err(|_| Error::Data {
                file: PathBuf::from(file),
                row,
                message: format!("`{s}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    file: PathBuf::from(file),
                    row,
                    message: format!("non-finite value {s}"),
                });
            }
            Ok(v)
        })
        .collect()
}
