//! Plain-text file formats for tensors, labels, models, scans, events,
//! metadata, and schemas.
//!
//! Every format is line oriented and ASCII. Floats are written with Rust's
//! shortest round-trip formatting, so write-then-read is lossless and two
//! runs that compute identical values produce byte-identical files. Writes
//! go through a temp file in the target directory followed by a rename, so
//! a crash never leaves a half-written file at the destination path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::MetadataTable;
use crate::decomp::CpModel;
use crate::diagnostics::RankScan;
use crate::error::{Error, Result};
use crate::featurize::{
    EventRecord, FeatureKind, FeatureSchema, Stream, TensorDataset, TimeBin, VariableDef,
};
use crate::tensor::{Matrix, Tensor3};

/// A fitted model plus the axis labels and fit provenance stored alongside it.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: CpModel,
    pub individuals: Vec<String>,
    pub variables: Vec<String>,
    pub days: Vec<String>,
    pub meta: ModelMeta,
}

/// Optional provenance recorded in a model file.
#[derive(Debug, Clone, Default)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
    pub relative_error: Option<f64>,
    pub core_consistency: Option<f64>,
}

/// Writes `content` to `path` atomically: temp file in the same directory,
/// then rename. The temp file is removed if any step fails.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("output path {} has no file name", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::parse(path, line, msg)
}

fn parse_usize(path: &Path, line: usize, s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{s}'")))
}

fn parse_u64(path: &Path, line: usize, s: &str, what: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{s}'")))
}

fn parse_i64(path: &Path, line: usize, s: &str, what: &str) -> Result<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{s}'")))
}

fn parse_f64(path: &Path, line: usize, s: &str, what: &str) -> Result<f64> {
    let v = s
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{s}'")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} '{s}' is not finite")));
    }
    Ok(v)
}

/// Numbered, `\r`-stripped lines of a text file. Line numbers are 1-based.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

// ---------------------------------------------------------------------------
// Tensor files
// ---------------------------------------------------------------------------

/// Writes a tensor as `# dims I J K` followed by one `i,j,k,value` line per
/// cell. Masked cells carry the literal `NA`. Cells are emitted in storage
/// order (i fastest, then j, then k).
pub fn write_tensor(path: &Path, tensor: &Tensor3) -> Result<()> {
    let (i_dim, j_dim, k_dim) = tensor.dims();
    let mut out = String::with_capacity(16 * tensor.values().len() + 32);
    let _ = writeln!(out, "# dims {i_dim} {j_dim} {k_dim}");
    for k in 0..k_dim {
        for j in 0..j_dim {
            for i in 0..i_dim {
                if tensor.observed(i, j, k) {
                    let v = tensor.get(i, j, k);
                    let _ = writeln!(out, "{i},{j},{k},{v}");
                } else {
                    let _ = writeln!(out, "{i},{j},{k},NA");
                }
            }
        }
    }
    write_atomic(path, &out)
}

/// Reads a tensor file. Every (i,j,k) triple must appear exactly once;
/// duplicates, out-of-range indices, and missing cells are errors.
pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty tensor file"))?;
    let rest = header
        .strip_prefix("# dims")
        .ok_or_else(|| parse_err(path, line_no, "expected '# dims I J K' header"))?;
    let dims: Vec<&str> = rest.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(path, line_no, "expected '# dims I J K' header"));
    }
    let i_dim = parse_usize(path, line_no, dims[0], "dimension")?;
    let j_dim = parse_usize(path, line_no, dims[1], "dimension")?;
    let k_dim = parse_usize(path, line_no, dims[2], "dimension")?;
    if i_dim == 0 || j_dim == 0 || k_dim == 0 {
        return Err(parse_err(path, line_no, "tensor dimensions must be positive"));
    }
    let mut tensor = Tensor3::new((i_dim, j_dim, k_dim))?;
    let total = i_dim * j_dim * k_dim;
    let mut seen = vec![false; total];
    let mut count = 0usize;
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 'i,j,k,value', got '{line}'"),
            ));
        }
        let i = parse_usize(path, line_no, fields[0], "index i")?;
        let j = parse_usize(path, line_no, fields[1], "index j")?;
        let k = parse_usize(path, line_no, fields[2], "index k")?;
        if i >= i_dim || j >= j_dim || k >= k_dim {
            return Err(parse_err(
                path,
                line_no,
                format!("cell ({i},{j},{k}) is outside dims {i_dim} {j_dim} {k_dim}"),
            ));
        }
        let flat = i + i_dim * (j + j_dim * k);
        if seen[flat] {
            return Err(parse_err(path, line_no, format!("duplicate cell ({i},{j},{k})")));
        }
        seen[flat] = true;
        count += 1;
        if fields[3].trim() == "NA" {
            tensor.set_observed(i, j, k, false);
        } else {
            let v = parse_f64(path, line_no, fields[3], "cell value")?;
            tensor.set(i, j, k, v);
        }
    }
    if count != total {
        return Err(Error::data(format!(
            "{}: tensor file lists {count} of {total} cells",
            path.display()
        )));
    }
    Ok(tensor)
}

// ---------------------------------------------------------------------------
// Label sidecar files
// ---------------------------------------------------------------------------

/// Writes the axis labels of a dataset: individuals, variables, and the
/// number of days.
pub fn write_labels(path: &Path, individuals: &[String], variables: &[String], n_days: usize) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# labels");
    let _ = writeln!(out, "individuals {}", individuals.len());
    for l in individuals {
        let _ = writeln!(out, "{l}");
    }
    let _ = writeln!(out, "variables {}", variables.len());
    for l in variables {
        let _ = writeln!(out, "{l}");
    }
    let _ = writeln!(out, "days {n_days}");
    write_atomic(path, &out)
}

/// Reads a label sidecar. Returns (individuals, variables, n_days).
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<String>, usize)> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty label file"))?;
    if header != "# labels" {
        return Err(parse_err(path, line_no, "expected '# labels' header"));
    }
    let mut read_block = |name: &str| -> Result<Vec<String>> {
        let (line_no, decl) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing '{name} N' section")))?;
        let rest = decl
            .strip_prefix(name)
            .ok_or_else(|| parse_err(path, line_no, format!("expected '{name} N', got '{decl}'")))?;
        let n = parse_usize(path, line_no, rest, "count")?;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (line_no, label) = lines
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("{name} section ended early")))?;
            if label.is_empty() {
                return Err(parse_err(path, line_no, "empty label"));
            }
            labels.push(label.to_string());
        }
        Ok(labels)
    };
    let individuals = read_block("individuals")?;
    let variables = read_block("variables")?;
    let (line_no, days_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing 'days N' line"))?;
    let rest = days_line
        .strip_prefix("days")
        .ok_or_else(|| parse_err(path, line_no, format!("expected 'days N', got '{days_line}'")))?;
    let n_days = parse_usize(path, line_no, rest, "day count")?;
    Ok((individuals, variables, n_days))
}

/// Writes the tensor and label sidecar of a dataset side by side.
pub fn write_dataset(tensor_path: &Path, labels_path: &Path, ds: &TensorDataset) -> Result<()> {
    write_tensor(tensor_path, ds.tensor())?;
    write_labels(labels_path, ds.individuals(), ds.variables(), ds.days().len())
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

fn join_f64(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_factor_block(out: &mut String, name: &str, labels: &[String], factor: &Matrix) {
    let _ = writeln!(out, "factor {name}");
    let mut header = String::from("label");
    for r in 0..factor.cols() {
        let _ = write!(header, ",c{}", r + 1);
    }
    let _ = writeln!(out, "{header}");
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        for r in 0..factor.cols() {
            let _ = write!(out, ",{}", factor.get(i, r));
        }
        out.push('\n');
    }
}

/// Writes a model file: a key/value preamble (rank, dims, lambda, and any
/// provenance present in `meta`) followed by one labeled CSV block per
/// factor matrix.
pub fn write_model(path: &Path, stored: &StoredModel) -> Result<()> {
    let m = &stored.model;
    let (i_dim, j_dim, k_dim) = m.dims();
    if stored.individuals.len() != i_dim
        || stored.variables.len() != j_dim
        || stored.days.len() != k_dim
    {
        return Err(Error::invalid("label counts do not match model dimensions"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# cp model");
    let _ = writeln!(out, "rank {}", m.rank());
    let _ = writeln!(out, "dims {i_dim} {j_dim} {k_dim}");
    if let Some(seed) = stored.meta.seed {
        let _ = writeln!(out, "seed {seed}");
    }
    if let Some(sweeps) = stored.meta.sweeps {
        let _ = writeln!(out, "sweeps {sweeps}");
    }
    if let Some(converged) = stored.meta.converged {
        let _ = writeln!(out, "converged {converged}");
    }
    if let Some(rel) = stored.meta.relative_error {
        let _ = writeln!(out, "relative_error {rel}");
    }
    if let Some(cc) = stored.meta.core_consistency {
        let _ = writeln!(out, "core_consistency {cc}");
    }
    let _ = writeln!(out, "lambda {}", join_f64(m.lambda()));
    write_factor_block(&mut out, "individuals", &stored.individuals, m.u());
    write_factor_block(&mut out, "variables", &stored.variables, m.v());
    write_factor_block(&mut out, "days", &stored.days, m.t());
    write_atomic(path, &out)
}

struct FactorBlock {
    labels: Vec<String>,
    data: Matrix,
}

fn read_factor_block<'a>(
    path: &Path,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    name: &str,
    rows: usize,
    rank: usize,
) -> Result<FactorBlock> {
    let (line_no, decl) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, format!("missing 'factor {name}' block")))?;
    if decl != format!("factor {name}") {
        return Err(parse_err(path, line_no, format!("expected 'factor {name}', got '{decl}'")));
    }
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, line_no, "factor block missing column header"))?;
    let mut expect = String::from("label");
    for r in 0..rank {
        let _ = write!(expect, ",c{}", r + 1);
    }
    if header != expect {
        return Err(parse_err(path, line_no, format!("expected header '{expect}', got '{header}'")));
    }
    let mut labels = Vec::with_capacity(rows);
    let mut data = Matrix::zeros(rows, rank);
    for row in 0..rows {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, line_no, format!("factor {name} block ended early")))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != rank + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, got {}", rank + 1, fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(parse_err(path, line_no, "empty label"));
        }
        labels.push(fields[0].to_string());
        for r in 0..rank {
            data.set(row, r, parse_f64(path, line_no, fields[r + 1], "factor entry")?);
        }
    }
    Ok(FactorBlock { labels, data })
}

/// Reads a model file back. Factor entries are validated (finite,
/// non-negative) when the model is reassembled.
pub fn read_model(path: &Path) -> Result<StoredModel> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text).peekable();
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty model file"))?;
    if header != "# cp model" {
        return Err(parse_err(path, line_no, "expected '# cp model' header"));
    }
    let mut rank: Option<usize> = None;
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut lambda: Option<Vec<f64>> = None;
    let mut meta = ModelMeta::default();
    while let Some((line_no, line)) = lines.peek().copied() {
        if line.starts_with("factor ") {
            break;
        }
        lines.next();
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(path, line_no, format!("expected 'key value', got '{line}'")))?;
        match key {
            "rank" => rank = Some(parse_usize(path, line_no, value, "rank")?),
            "dims" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(path, line_no, "dims needs three values"));
                }
                dims = Some((
                    parse_usize(path, line_no, parts[0], "dimension")?,
                    parse_usize(path, line_no, parts[1], "dimension")?,
                    parse_usize(path, line_no, parts[2], "dimension")?,
                ));
            }
            "seed" => meta.seed = Some(parse_u64(path, line_no, value, "seed")?),
            "sweeps" => meta.sweeps = Some(parse_usize(path, line_no, value, "sweep count")?),
            "converged" => {
                meta.converged = Some(match value.trim() {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(parse_err(path, line_no, format!("invalid converged flag '{other}'")))
                    }
                })
            }
            "relative_error" => {
                meta.relative_error = Some(parse_f64(path, line_no, value, "relative error")?)
            }
            "core_consistency" => {
                meta.core_consistency = Some(parse_f64(path, line_no, value, "core consistency")?)
            }
            "lambda" => {
                let mut vals = Vec::new();
                for piece in value.split(',') {
                    vals.push(parse_f64(path, line_no, piece, "lambda")?);
                }
                lambda = Some(vals);
            }
            other => return Err(parse_err(path, line_no, format!("unknown key '{other}'"))),
        }
    }
    let rank = rank.ok_or_else(|| Error::data(format!("{}: missing rank", path.display())))?;
    let (i_dim, j_dim, k_dim) =
        dims.ok_or_else(|| Error::data(format!("{}: missing dims", path.display())))?;
    let lambda = lambda.ok_or_else(|| Error::data(format!("{}: missing lambda", path.display())))?;
    if lambda.len() != rank {
        return Err(Error::data(format!(
            "{}: lambda has {} entries for rank {rank}",
            path.display(),
            lambda.len()
        )));
    }
    let individuals = read_factor_block(path, &mut lines, "individuals", i_dim, rank)?;
    let variables = read_factor_block(path, &mut lines, "variables", j_dim, rank)?;
    let days = read_factor_block(path, &mut lines, "days", k_dim, rank)?;
    let model = CpModel::from_parts(lambda, individuals.data, variables.data, days.data)?;
    Ok(StoredModel {
        model,
        individuals: individuals.labels,
        variables: variables.labels,
        days: days.labels,
        meta,
    })
}

// ---------------------------------------------------------------------------
// Rank scan files
// ---------------------------------------------------------------------------

/// Writes a rank scan as CSV: `rank,mean_cc,std_cc,n_init`. A missing
/// standard deviation (every sample clamped) leaves the field empty.
pub fn write_rank_scan(path: &Path, scan: &RankScan) -> Result<()> {
    let mut out = String::from("rank,mean_cc,std_cc,n_init\n");
    for (idx, &rank) in scan.ranks.iter().enumerate() {
        let mean = scan.mean_cc[idx];
        let _ = write!(out, "{rank},{mean},");
        if let Some(std) = scan.std_cc[idx] {
            let _ = write!(out, "{std}");
        }
        let _ = writeln!(out, ",{}", scan.n_init[idx]);
    }
    write_atomic(path, &out)
}

// ---------------------------------------------------------------------------
// Event CSV files
// ---------------------------------------------------------------------------

const EVENTS_HEADER: &str = "user_id,stream,state,start_unix,end_unix";

/// Writes event records as CSV with the canonical header.
pub fn write_events(path: &Path, records: &[EventRecord]) -> Result<()> {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.user_id, r.stream.name(), r.state, r.start, r.end);
    }
    write_atomic(path, &out)
}

/// Reads an event CSV. The header line is required; malformed rows are
/// reported with their line number.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty events file"))?;
    if header != EVENTS_HEADER {
        return Err(parse_err(path, line_no, format!("expected header '{EVENTS_HEADER}'")));
    }
    let mut records = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, line_no, format!("expected 5 fields, got {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(parse_err(path, line_no, "empty user_id"));
        }
        let stream = Stream::parse(fields[1])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let start = parse_i64(path, line_no, fields[3], "start_unix")?;
        let end = parse_i64(path, line_no, fields[4], "end_unix")?;
        let record = EventRecord {
            user_id: fields[0].to_string(),
            stream,
            state: fields[2].to_string(),
            start,
            end,
        };
        record
            .validate()
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Metadata CSV files
// ---------------------------------------------------------------------------

const METADATA_HEADER: &str = "user_id,metric,value";

/// Reads a metadata CSV (`user_id,metric,value`) into a table keyed by
/// metric. Duplicate (user, metric) pairs are errors.
pub fn read_metadata(path: &Path) -> Result<MetadataTable> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty metadata file"))?;
    if header != METADATA_HEADER {
        return Err(parse_err(path, line_no, format!("expected header '{METADATA_HEADER}'")));
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(path, line_no, "empty user_id or metric"));
        }
        let value = parse_f64(path, line_no, fields[2], "metric value")?;
        rows.push((fields[0].to_string(), fields[1].to_string(), value));
    }
    MetadataTable::from_rows(rows)
}

/// Writes a metadata CSV; rows are sorted by (metric, user) for determinism.
pub fn write_metadata(path: &Path, table: &MetadataTable) -> Result<()> {
    let mut out = String::from(METADATA_HEADER);
    out.push('\n');
    for (metric, user, value) in table.rows() {
        let _ = writeln!(out, "{user},{metric},{value}");
    }
    write_atomic(path, &out)
}

// ---------------------------------------------------------------------------
// Schema files
// ---------------------------------------------------------------------------

fn format_offset(seconds: i32) -> String {
    let sign = if seconds < 0 { '-' } else { '+' };
    let abs = seconds.unsigned_abs();
    format!("{sign}{:02}:{:02}", abs / 3600, (abs % 3600) / 60)
}

fn parse_offset(path: &Path, line_no: usize, s: &str) -> Result<i32> {
    let s = s.trim();
    let bytes = s.as_bytes();
    let bad = || parse_err(path, line_no, format!("invalid timezone offset '{s}', expected like -04:00"));
    if bytes.len() != 6 || (bytes[0] != b'+' && bytes[0] != b'-') || bytes[3] != b':' {
        return Err(bad());
    }
    let hours: i32 = s[1..3].parse().map_err(|_| bad())?;
    let minutes: i32 = s[4..6].parse().map_err(|_| bad())?;
    if hours > 23 || minutes > 59 {
        return Err(bad());
    }
    let total = hours * 3600 + minutes * 60;
    Ok(if bytes[0] == b'-' { -total } else { total })
}

/// Writes a feature schema: study start date, day count, UTC offset, and the
/// ordered variable list.
pub fn write_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# feature schema");
    let _ = writeln!(out, "start_date {}", schema.start_date.format("%Y-%m-%d"));
    let _ = writeln!(out, "n_days {}", schema.n_days);
    let _ = writeln!(out, "timezone {}", format_offset(schema.utc_offset_secs));
    let _ = writeln!(out, "variables {}", schema.variables.len());
    let _ = writeln!(out, "stream,state,kind,bin");
    for v in &schema.variables {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            v.stream.name(),
            v.state.as_deref().unwrap_or(""),
            v.kind.name(),
            v.bin.name()
        );
    }
    write_atomic(path, &out)
}

/// Reads a feature schema file.
pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let text = read_to_string(path)?;
    let mut lines = numbered_lines(&text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty schema file"))?;
    if header != "# feature schema" {
        return Err(parse_err(path, line_no, "expected '# feature schema' header"));
    }
    let mut expect_kv = |key: &str| -> Result<(usize, String)> {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing '{key}' line")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(path, line_no, format!("expected '{key} value', got '{line}'")))?;
        if k != key {
            return Err(parse_err(path, line_no, format!("expected '{key}', got '{k}'")));
        }
        Ok((line_no, v.to_string()))
    };
    let (line_no, start) = expect_kv("start_date")?;
    let start_date = chrono::NaiveDate::parse_from_str(start.trim(), "%Y-%m-%d")
        .map_err(|_| parse_err(path, line_no, format!("invalid start_date '{start}'")))?;
    let (line_no, n_days_s) = expect_kv("n_days")?;
    let n_days = parse_usize(path, line_no, &n_days_s, "n_days")?;
    if n_days == 0 {
        return Err(parse_err(path, line_no, "n_days must be positive"));
    }
    let (line_no, tz) = expect_kv("timezone")?;
    let utc_offset_secs = parse_offset(path, line_no, &tz)?;
    let (line_no, nvars_s) = expect_kv("variables")?;
    let n_vars = parse_usize(path, line_no, &nvars_s, "variable count")?;
    let (line_no, var_header) = lines
        .next()
        .ok_or_else(|| parse_err(path, line_no, "missing variable header"))?;
    if var_header != "stream,state,kind,bin" {
        return Err(parse_err(path, line_no, "expected header 'stream,state,kind,bin'"));
    }
    let mut variables = Vec::with_capacity(n_vars);
    for _ in 0..n_vars {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, line_no, "variable list ended early"))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let stream = Stream::parse(fields[0])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let state = if fields[1].is_empty() {
            None
        } else {
            Some(fields[1].to_string())
        };
        let kind = FeatureKind::parse(fields[2])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let bin = TimeBin::parse(fields[3])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        variables.push(VariableDef { stream, state, kind, bin });
    }
    FeatureSchema::new(variables, start_date, n_days, utc_offset_secs)
}
