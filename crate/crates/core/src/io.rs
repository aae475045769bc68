//! File formats: response and constraint CSVs, raw tables with one-hot
//! encoding, run configuration, draw files and the posterior summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchors::AnchorSelection;
use crate::diagnostics::credible_interval;
use crate::error::{IrtmError, Result};
use crate::model::{
    ChainDraws, ConstraintSet, Hyperparameters, IdentificationReport, ParamGroup, PosteriorDraws, Response,
    ResponseMatrix, SigmaNormalization,
};

fn is_missing_cell(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| IrtmError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(f))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IrtmError::io(parent, e))?;
    }
    let f = File::create(path).map_err(|e| IrtmError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn flush<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| IrtmError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| IrtmError::io(path, e))
}

/// Read a header row and the remaining records, checking every row has the
/// header's width. Row numbers in errors are 1-based file lines.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(IrtmError::Parse {
                row: r + 2,
                column: rec.len().min(header.len()),
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Responses: first column unit id, then one column per item; cells "0",
/// "1", or empty / "NA" for missing.
pub fn read_responses(path: &Path) -> Result<ResponseMatrix> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(IrtmError::Validation(format!(
            "{}: need a unit id column and at least one item",
            path.display()
        )));
    }
    let k = header.len() - 1;
    let mut values = Array2::from_elem((rows.len(), k), Response::Missing);
    let mut units = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        units.push(row[0].trim().to_string());
        for (j, cell) in row[1..].iter().enumerate() {
            values[[r, j]] = match cell.trim() {
                "0" => Response::No,
                "1" => Response::Yes,
                s if is_missing_cell(s) => Response::Missing,
                other => {
                    return Err(IrtmError::Parse {
                        row: r + 2,
                        column: j + 2,
                        message: format!("response must be 0, 1, NA or empty, got '{other}'"),
                    })
                }
            };
        }
    }
    ResponseMatrix::new(values, units, header[1..].to_vec())
}

pub fn write_responses(path: &Path, data: &ResponseMatrix) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["unit".to_string()];
    header.extend(data.item_ids().iter().cloned());
    w.write_record(&header)?;
    for (i, id) in data.unit_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..data.n_items()).map(|k| {
            match data.get(i, k) {
                Response::No => "0",
                Response::Yes => "1",
                Response::Missing => "NA",
            }
            .to_string()
        }));
        w.write_record(&rec)?;
    }
    flush(w, path)
}

/// M-matrix table: first column item id, header gives dimension names;
/// cells are reals or NA.
pub fn read_constraints(path: &Path) -> Result<ConstraintSet> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(IrtmError::Validation(format!(
            "{}: need an item id column and at least one dimension",
            path.display()
        )));
    }
    let d = header.len() - 1;
    let mut codes = Array2::from_elem((rows.len(), d), None);
    let mut items = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        items.push(row[0].trim().to_string());
        for (j, cell) in row[1..].iter().enumerate() {
            let s = cell.trim();
            codes[[r, j]] = if s == "NA" {
                None
            } else {
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(IrtmError::Parse {
                            row: r + 2,
                            column: j + 2,
                            message: format!("code must be a real number or NA, got '{s}'"),
                        })
                    }
                }
            };
        }
    }
    ConstraintSet::new(codes, items, header[1..].to_vec())
}

/// Read an M-matrix and order its rows to match the data's item ids.
pub fn load_constraints(path: &Path, data: &ResponseMatrix) -> Result<ConstraintSet> {
    let c = read_constraints(path)?;
    for (r, id) in c.item_ids().iter().enumerate() {
        if !data.item_ids().contains(id) {
            return Err(IrtmError::Parse {
                row: r + 2,
                column: 1,
                message: format!("item '{id}' does not appear in the response data"),
            });
        }
    }
    c.aligned_to(data.item_ids())
}

fn format_code(c: Option<f64>) -> String {
    c.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn write_constraints(path: &Path, c: &ConstraintSet) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["item".to_string()];
    header.extend(c.dimension_names().iter().cloned());
    w.write_record(&header)?;
    for (k, id) in c.item_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..c.n_dims()).map(|j| format_code(c.code(k, j))));
        w.write_record(&rec)?;
    }
    flush(w, path)
}

/// Column kinds of a raw survey table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical { categories: Vec<String> },
    Ordinal { levels: Vec<String> },
    Continuous { threshold: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// N rows × Q columns of raw cells; `None` is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub unit_ids: Vec<String>,
    pub schema: Vec<ColumnSchema>,
    pub cells: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn new(unit_ids: Vec<String>, schema: Vec<ColumnSchema>, cells: Vec<Vec<Option<String>>>) -> Result<Self> {
        if cells.len() != unit_ids.len() {
            return Err(IrtmError::Validation(format!(
                "{} unit ids for {} rows",
                unit_ids.len(),
                cells.len()
            )));
        }
        if let Some(r) = cells.iter().position(|row| row.len() != schema.len()) {
            return Err(IrtmError::Parse {
                row: r + 1,
                column: cells[r].len(),
                message: format!("schema covers {} columns, row has {}", schema.len(), cells[r].len()),
            });
        }
        Ok(Self {
            unit_ids,
            schema,
            cells,
        })
    }

    /// Read a CSV (first column unit id) plus a JSON schema listing every
    /// other column.
    pub fn read(data_path: &Path, schema_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(schema_path).map_err(|e| IrtmError::io(schema_path, e))?;
        let schema: Vec<ColumnSchema> = serde_json::from_str(&text)?;
        let (header, rows) = read_table(data_path)?;
        let names: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
        if header.len() < 1 || header[1..].iter().map(String::as_str).ne(names.iter().copied()) {
            return Err(IrtmError::Validation(format!(
                "schema columns {names:?} do not match the table header {:?}",
                header.get(1..).unwrap_or(&[])
            )));
        }
        let mut units = Vec::with_capacity(rows.len());
        let mut cells = Vec::with_capacity(rows.len());
        for row in rows {
            units.push(row[0].trim().to_string());
            cells.push(
                row[1..]
                    .iter()
                    .map(|c| if is_missing_cell(c) { None } else { Some(c.trim().to_string()) })
                    .collect(),
            );
        }
        Self::new(units, schema, cells)
    }
}

/// Provenance of one encoded column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub item_id: String,
    pub source_column: String,
    pub category: Option<String>,
    pub threshold: Option<f64>,
}

/// Expand each L-category column into L indicators and threshold each
/// continuous column into one indicator.
pub fn one_hot_encode(raw: &RawTable) -> Result<(ResponseMatrix, Vec<EncodedColumn>)> {
    let mut map = Vec::new();
    for col in &raw.schema {
        match &col.kind {
            ColumnKind::Categorical { categories: cats } | ColumnKind::Ordinal { levels: cats } => {
                if cats.is_empty() {
                    return Err(IrtmError::Validation(format!("column '{}' lists no categories", col.name)));
                }
                for c in cats {
                    map.push(EncodedColumn {
                        item_id: format!("{}={}", col.name, c),
                        source_column: col.name.clone(),
                        category: Some(c.clone()),
                        threshold: None,
                    });
                }
            }
            ColumnKind::Continuous { threshold } => {
                let t = threshold.ok_or_else(|| {
                    IrtmError::Validation(format!("continuous column '{}' has no threshold", col.name))
                })?;
                map.push(EncodedColumn {
                    item_id: format!("{}>{}", col.name, t),
                    source_column: col.name.clone(),
                    category: None,
                    threshold: Some(t),
                });
            }
        }
    }
    let n = raw.cells.len();
    let mut values = Array2::from_elem((n, map.len()), Response::Missing);
    for (i, row) in raw.cells.iter().enumerate() {
        let mut out = 0;
        for (q, col) in raw.schema.iter().enumerate() {
            let cell = row[q].as_deref();
            match &col.kind {
                ColumnKind::Categorical { categories: cats } | ColumnKind::Ordinal { levels: cats } => {
                    if let Some(v) = cell {
                        let hit = cats.iter().position(|c| c == v).ok_or_else(|| IrtmError::Parse {
                            row: i + 1,
                            column: q + 1,
                            message: format!("category '{v}' is not listed for column '{}'", col.name),
                        })?;
                        for l in 0..cats.len() {
                            values[[i, out + l]] = Response::from_bool(l == hit);
                        }
                    }
                    out += cats.len();
                }
                ColumnKind::Continuous { threshold } => {
                    if let Some(v) = cell {
                        let x: f64 = v.parse().map_err(|_| IrtmError::Parse {
                            row: i + 1,
                            column: q + 1,
                            message: format!("'{v}' is not a number"),
                        })?;
                        values[[i, out]] = Response::from_bool(x > threshold.expect("checked above"));
                    }
                    out += 1;
                }
            }
        }
    }
    let items = map.iter().map(|m| m.item_id.clone()).collect();
    Ok((ResponseMatrix::new(values, raw.unit_ids.clone(), items)?, map))
}

pub fn write_column_map(path: &Path, map: &[EncodedColumn]) -> Result<()> {
    let mut w = writer(path)?;
    for m in map {
        w.serialize(m)?;
    }
    flush(w, path)
}

/// Everything needed to reproduce a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub data: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub method: String,
    pub dims: Option<usize>,
    /// "all", "none" or comma-separated dimension names.
    pub anchors: String,
    pub force: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::for_dims(1),
            data: None,
            constraints: None,
            method: "irtm".into(),
            dims: None,
            anchors: "all".into(),
            force: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(IrtmError::Validation(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| IrtmError::Validation(format!("{key}: cannot parse '{v}'")))
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut s0: Option<Vec<Vec<f64>>> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| IrtmError::Parse {
                row: lineno + 1,
                column: 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            let h = &mut c.hyper;
            match key {
                "data" => c.data = Some(PathBuf::from(v)),
                "constraints" => c.constraints = Some(PathBuf::from(v)),
                "method" => c.method = v.to_string(),
                "dims" => c.dims = Some(parse_num(key, v)?),
                "anchors" => c.anchors = v.to_string(),
                "force" => c.force = parse_bool(key, v)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                "nu0" => h.nu0 = parse_num(key, v)?,
                "s0" => {
                    s0 = Some(
                        v.split(';')
                            .map(|row| row.split(',').map(|x| parse_num(key, x.trim())).collect())
                            .collect::<Result<_>>()?,
                    )
                }
                "anchor_d" => h.anchor_d = parse_num(key, v)?,
                "iterations" => h.n_iterations = parse_num(key, v)?,
                "burnin" => h.n_burnin = parse_num(key, v)?,
                "thin" => h.thin = parse_num(key, v)?,
                "chains" => h.n_chains = parse_num(key, v)?,
                "correlated" => h.correlated_factors = parse_bool(key, v)?,
                "inner_sweeps" => h.inner_tmvn_sweeps = parse_num(key, v)?,
                "seed" => h.seed = parse_num(key, v)?,
                "sigma_normalization" => {
                    h.sigma_normalization = match v {
                        "symmetric" => SigmaNormalization::Symmetric,
                        "literal" => SigmaNormalization::Literal,
                        _ => return Err(IrtmError::Validation(format!("unknown normalization '{v}'"))),
                    }
                }
                _ => {
                    return Err(IrtmError::Parse {
                        row: lineno + 1,
                        column: 1,
                        message: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        if let Some(s0) = s0 {
            c.hyper.s0 = s0;
        }
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IrtmError::io(path, e))?;
        Self::parse(&text)
    }

    fn semantic_fields(&self) -> BTreeMap<&'static str, String> {
        let h = &self.hyper;
        let mut m = BTreeMap::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        m.insert("data", path(&self.data));
        m.insert("constraints", path(&self.constraints));
        m.insert("method", self.method.clone());
        m.insert("dims", self.dims.map_or(String::new(), |d| d.to_string()));
        m.insert("anchors", self.anchors.clone());
        m.insert("force", self.force.to_string());
        m.insert("nu0", h.nu0.to_string());
        m.insert(
            "s0",
            h.s0.iter()
                .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join(";"),
        );
        m.insert("anchor_d", h.anchor_d.to_string());
        m.insert("iterations", h.n_iterations.to_string());
        m.insert("burnin", h.n_burnin.to_string());
        m.insert("thin", h.thin.to_string());
        m.insert("chains", h.n_chains.to_string());
        m.insert("correlated", h.correlated_factors.to_string());
        m.insert("inner_sweeps", h.inner_tmvn_sweeps.to_string());
        m.insert("seed", h.seed.to_string());
        m.insert(
            "sigma_normalization",
            match h.sigma_normalization {
                SigmaNormalization::Symmetric => "symmetric",
                SigmaNormalization::Literal => "literal",
            }
            .to_string(),
        );
        m
    }

    /// Canonical text form; `parse(to_text())` restores the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.semantic_fields() {
            if !v.is_empty() {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        out
    }

    /// Digest over every field that affects results (the output directory
    /// does not).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.semantic_fields() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Resolve the anchor selection against dimension names.
    pub fn anchor_selection(&self, dimension_names: &[String]) -> Result<AnchorSelection> {
        parse_anchor_selection(&self.anchors, dimension_names)
    }
}

pub fn parse_anchor_selection(spec: &str, dimension_names: &[String]) -> Result<AnchorSelection> {
    match spec.trim() {
        "all" => Ok(AnchorSelection::All),
        "none" | "" => Ok(AnchorSelection::None),
        list => list
            .split(',')
            .map(|name| {
                let name = name.trim();
                dimension_names
                    .iter()
                    .position(|d| d == name)
                    .ok_or_else(|| IrtmError::Validation(format!("unknown dimension '{name}' in anchor list")))
            })
            .collect::<Result<Vec<_>>>()
            .map(AnchorSelection::Dims),
    }
}

/// Metadata stored next to draw CSVs so they can be read back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub unit_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub dimension_names: Vec<String>,
    pub n_chains: usize,
    pub n_draws: usize,
    pub hyper: Hyperparameters,
    pub constraint_digest: String,
    pub config_digest: String,
}

pub const DRAWS_META: &str = "draws.json";

/// One CSV per parameter group: theta.csv (unit,dim,chain,draw,value),
/// lambda.csv (item,dim,...), b.csv (item,chain,draw,value) and
/// sigma.csv (row,col,...), plus draws.json.
pub fn write_draws(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IrtmError::io(dir, e))?;
    let dims = &draws.dimension_names;
    let write3 = |name: &str, cols: [&str; 2], labels: &[String], col_labels: &[String], pick: fn(&ChainDraws) -> &Array3<f64>| -> Result<()> {
        let path = dir.join(name);
        let mut w = writer(&path)?;
        w.write_record([cols[0], cols[1], "chain", "draw", "value"])?;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in col_labels.iter().enumerate() {
                for (c, chain) in draws.chains.iter().enumerate() {
                    let a = pick(chain);
                    for s in 0..chain.n_draws() {
                        w.write_record([li.as_str(), lj.as_str(), &c.to_string(), &s.to_string(), &a[[s, i, j]].to_string()])?;
                    }
                }
            }
        }
        flush(w, &path)
    };
    write3("theta.csv", ["unit", "dim"], &draws.unit_ids, dims, |c| &c.theta)?;
    write3("lambda.csv", ["item", "dim"], &draws.item_ids, dims, |c| &c.lambda)?;
    write3("sigma.csv", ["row", "col"], dims, dims, |c| &c.sigma)?;
    let path = dir.join("b.csv");
    let mut w = writer(&path)?;
    w.write_record(["item", "chain", "draw", "value"])?;
    for (k, id) in draws.item_ids.iter().enumerate() {
        for (c, chain) in draws.chains.iter().enumerate() {
            for s in 0..chain.n_draws() {
                w.write_record([id.as_str(), &c.to_string(), &s.to_string(), &chain.b[[s, k]].to_string()])?;
            }
        }
    }
    flush(w, &path)?;
    let meta = DrawsMeta {
        unit_ids: draws.unit_ids.clone(),
        item_ids: draws.item_ids.clone(),
        dimension_names: draws.dimension_names.clone(),
        n_chains: draws.n_chains(),
        n_draws: draws.n_draws(),
        hyper: draws.hyper.clone(),
        constraint_digest: draws.constraint_digest.clone(),
        config_digest: draws.config_digest.clone(),
    };
    let path = dir.join(DRAWS_META);
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| IrtmError::io(&path, e))
}

fn index_of(labels: &[String], value: &str, path: &Path, row: usize, column: usize) -> Result<usize> {
    labels.iter().position(|l| l == value).ok_or_else(|| IrtmError::Parse {
        row,
        column,
        message: format!("{}: unknown label '{value}'", path.display()),
    })
}

/// Read draws written by [`write_draws`].
pub fn read_draws(dir: &Path) -> Result<PosteriorDraws> {
    let meta_path = dir.join(DRAWS_META);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| IrtmError::io(&meta_path, e))?;
    let meta: DrawsMeta = serde_json::from_str(&text)?;
    let (nc, ns) = (meta.n_chains, meta.n_draws);
    let (n, k, d) = (meta.unit_ids.len(), meta.item_ids.len(), meta.dimension_names.len());
    let mut chains: Vec<ChainDraws> = (0..nc)
        .map(|_| ChainDraws {
            theta: Array3::zeros((ns, n, d)),
            lambda: Array3::zeros((ns, k, d)),
            b: Array2::zeros((ns, k)),
            sigma: Array3::zeros((ns, d, d)),
        })
        .collect();
    let parse_idx = |s: &str, limit: usize, path: &Path, row: usize, col: usize| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v < limit => Ok(v),
            _ => Err(IrtmError::Parse {
                row,
                column: col,
                message: format!("{}: index '{s}' out of range", path.display()),
            }),
        }
    };
    let parse_val = |s: &str, path: &Path, row: usize, col: usize| -> Result<f64> {
        s.parse().map_err(|_| IrtmError::Parse {
            row,
            column: col,
            message: format!("{}: '{s}' is not a number", path.display()),
        })
    };
    for (name, rows_l, cols_l) in [
        ("theta.csv", &meta.unit_ids, &meta.dimension_names),
        ("lambda.csv", &meta.item_ids, &meta.dimension_names),
        ("sigma.csv", &meta.dimension_names, &meta.dimension_names),
    ] {
        let path = dir.join(name);
        let (_, rows) = read_table(&path)?;
        for (r, rec) in rows.iter().enumerate() {
            let line = r + 2;
            let i = index_of(rows_l, &rec[0], &path, line, 1)?;
            let j = index_of(cols_l, &rec[1], &path, line, 2)?;
            let c = parse_idx(&rec[2], nc, &path, line, 3)?;
            let s = parse_idx(&rec[3], ns, &path, line, 4)?;
            let v = parse_val(&rec[4], &path, line, 5)?;
            let target = match name {
                "theta.csv" => &mut chains[c].theta,
                "lambda.csv" => &mut chains[c].lambda,
                _ => &mut chains[c].sigma,
            };
            target[[s, i, j]] = v;
        }
    }
    let path = dir.join("b.csv");
    let (_, rows) = read_table(&path)?;
    for (r, rec) in rows.iter().enumerate() {
        let line = r + 2;
        let kk = index_of(&meta.item_ids, &rec[0], &path, line, 1)?;
        let c = parse_idx(&rec[1], nc, &path, line, 2)?;
        let s = parse_idx(&rec[2], ns, &path, line, 3)?;
        chains[c].b[[s, kk]] = parse_val(&rec[3], &path, line, 4)?;
    }
    Ok(PosteriorDraws {
        chains,
        unit_ids: meta.unit_ids,
        item_ids: meta.item_ids,
        dimension_names: meta.dimension_names,
        hyper: meta.hyper,
        constraint_digest: meta.constraint_digest,
        config_digest: meta.config_digest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub id: String,
    pub theta_mean: Vec<f64>,
    /// Absent for PCA.
    pub theta_lower: Option<Vec<f64>>,
    pub theta_upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub id: String,
    pub lambda_mean: Vec<f64>,
    pub b_mean: Option<f64>,
}

/// Contents of summary.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub method: String,
    pub config_digest: String,
    pub constraint_digest: Option<String>,
    pub dimensions: Vec<String>,
    pub n_chains: usize,
    pub n_draws: usize,
    pub ci_level: Option<f64>,
    pub units: Vec<UnitSummary>,
    pub items: Vec<ItemSummary>,
    pub sigma_mean: Option<Vec<Vec<f64>>>,
    pub identification: Option<IdentificationReport>,
    /// PCA only: eigenvalues, descending.
    pub eigenvalues: Option<Vec<f64>>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Posterior means and equal-tailed intervals from draws.
pub fn summarize_draws(
    method: &str,
    draws: &PosteriorDraws,
    level: f64,
    identification: Option<IdentificationReport>,
) -> PosteriorSummary {
    let theta_mean = draws.theta_mean();
    let lambda_mean = draws.lambda_mean();
    let b_mean = draws.b_mean();
    let d = draws.n_dims();
    let coords = draws.coordinate_chains(ParamGroup::Theta);
    let units = draws
        .unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
            for j in 0..d {
                let (l, h) = credible_interval(&coords[i * d + j].1.concat(), level);
                lo.push(l);
                hi.push(h);
            }
            UnitSummary {
                id: id.clone(),
                theta_mean: theta_mean.row(i).to_vec(),
                theta_lower: Some(lo),
                theta_upper: Some(hi),
            }
        })
        .collect();
    let items = draws
        .item_ids
        .iter()
        .enumerate()
        .map(|(k, id)| ItemSummary {
            id: id.clone(),
            lambda_mean: lambda_mean.row(k).to_vec(),
            b_mean: Some(b_mean[k]),
        })
        .collect();
    PosteriorSummary {
        method: method.to_string(),
        config_digest: draws.config_digest.clone(),
        constraint_digest: Some(draws.constraint_digest.clone()),
        dimensions: draws.dimension_names.clone(),
        n_chains: draws.n_chains(),
        n_draws: draws.n_draws(),
        ci_level: Some(level),
        units,
        items,
        sigma_mean: Some(rows(&draws.sigma_mean())),
        identification,
        eigenvalues: None,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IrtmError::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IrtmError::io(path, e))
}

/// Write an N×d or K×d labelled matrix (e.g. true θ from a simulation).
pub fn write_matrix(path: &Path, id_header: &str, ids: &[String], cols: &[String], m: &Array2<f64>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![id_header.to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    flush(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> RawTable {
        RawTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                ColumnSchema {
                    name: "q1".into(),
                    kind: ColumnKind::Categorical {
                        categories: vec!["good".into(), "bad".into()],
                    },
                },
                ColumnSchema {
                    name: "age".into(),
                    kind: ColumnKind::Continuous { threshold: Some(40.0) },
                },
            ],
            vec![
                vec![Some("bad".into()), Some("35".into())],
                vec![Some("good".into()), None],
                vec![None, Some("41".into())],
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_examples() {
        let (y, map) = one_hot_encode(&raw()).unwrap();
        assert_eq!(y.item_ids(), &["q1=good", "q1=bad", "age>40"]);
        assert_eq!(y.get(0, 0), Response::No);
        assert_eq!(y.get(0, 1), Response::Yes);
        assert_eq!(y.get(0, 2), Response::No);
        assert_eq!(y.get(1, 2), Response::Missing);
        assert!(y.get(2, 0).is_missing() && y.get(2, 1).is_missing());
        assert_eq!(y.get(2, 2), Response::Yes);
        assert_eq!(map[1].category.as_deref(), Some("bad"));
    }

    #[test]
    fn unseen_category_reports_position() {
        let mut r = raw();
        r.cells[1][0] = Some("meh".into());
        match one_hot_encode(&r) {
            Err(IrtmError::Parse { row, column, .. }) => assert_eq!((row, column), (2, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_threshold_is_schema_error() {
        let mut r = raw();
        r.schema[1].kind = ColumnKind::Continuous { threshold: None };
        assert!(matches!(one_hot_encode(&r), Err(IrtmError::Validation(_))));
    }

    #[test]
    fn config_roundtrip_and_digest() {
        let mut c = RunConfig::default();
        c.hyper = Hyperparameters::for_dims(2);
        c.data = Some("y.csv".into());
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        let mut moved = c.clone();
        moved.out_dir = "elsewhere".into();
        assert_eq!(moved.digest(), c.digest());
        let mut reseeded = c.clone();
        reseeded.hyper.seed = 1;
        assert_ne!(reseeded.digest(), c.digest());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(RunConfig::parse("colour = blue").is_err());
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn anchor_selection_by_name() {
        let names = vec!["econ".to_string(), "social".to_string()];
        assert_eq!(parse_anchor_selection("social", &names).unwrap(), AnchorSelection::Dims(vec![1]));
        assert_eq!(parse_anchor_selection("all", &names).unwrap(), AnchorSelection::All);
        assert!(parse_anchor_selection("other", &names).is_err());
    }
}
