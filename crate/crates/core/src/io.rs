//! File formats: binary and CSV feature tables, semantic CSV, split and prior
//! JSON, prediction CSV, and dataset directories.
//!
//! Binary feature layout (all integers little-endian):
//!
//! ```text
//! "ZSF1" | u32 version = 1 | u64 rows | u32 dim | rows*dim f32 (row-major)
//!        | u32 label-block length | labels joined by '\n'
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{ClassId, ClassSplit, DatasetBundle, FeatureTable, PseudoLabelSet, SemanticTable};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"ZSF1";
pub const FEATURE_VERSION: u32 = 1;

pub const TRAIN_SEEN_FILE: &str = "train_seen.zsf";
pub const TEST_UNSEEN_FILE: &str = "test_unseen.zsf";
pub const TEST_SEEN_FILE: &str = "test_seen.zsf";
pub const SEMANTICS_FILE: &str = "semantics.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const PRIORS_FILE: &str = "priors.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl FeatureFormat {
    /// `.csv` selects CSV; anything else is treated as binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Binary,
        }
    }
}

pub fn encode_binary(table: &FeatureTable) -> Vec<u8> {
    let labels = table
        .labels()
        .iter()
        .map(ClassId::as_str)
        .collect::<Vec<_>>()
        .join("\n");
    let mut out = Vec::with_capacity(24 + table.features().len() * 4 + labels.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    out.extend_from_slice(&(table.dim() as u32).to_le_bytes());
    for x in table.features() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    out.extend_from_slice(labels.as_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_binary(bytes: &[u8], source: &str) -> Result<FeatureTable> {
    let header = |reason: &str| Error::Header {
        path: source.to_string(),
        reason: reason.to_string(),
    };
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4) != Some(FEATURE_MAGIC.as_slice()) {
        return Err(header("missing ZSF1 magic"));
    }
    let version = cur.u32().ok_or_else(|| header("truncated version"))?;
    if version != FEATURE_VERSION {
        return Err(header(&format!("unsupported version {version}")));
    }
    let rows = cur.u64().ok_or_else(|| header("truncated row count"))?;
    let dim = cur.u32().ok_or_else(|| header("truncated dimension"))? as usize;
    if dim == 0 {
        return Err(header("dimension must be at least 1"));
    }
    let rows = usize::try_from(rows).map_err(|_| header("row count overflows"))?;
    let n_values = rows
        .checked_mul(dim)
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| header("row count and dimension exceed file size"))?;
    let raw = cur.take(n_values * 4).ok_or_else(|| header("truncated feature block"))?;
    let features: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    for row in 0..rows {
        if features[row * dim..(row + 1) * dim].iter().any(|x| !x.is_finite()) {
            return Err(Error::Load {
                path: source.to_string(),
                row,
                reason: "non-finite feature value".into(),
            });
        }
    }
    let label_len = cur.u32().ok_or_else(|| header("truncated label block length"))? as usize;
    let label_bytes = cur.take(label_len).ok_or_else(|| header("truncated label block"))?;
    if cur.pos != bytes.len() {
        return Err(header("trailing bytes after label block"));
    }
    let text = std::str::from_utf8(label_bytes).map_err(|_| header("label block is not UTF-8"))?;
    let labels: Vec<ClassId> = if rows == 0 {
        if !text.is_empty() {
            return Err(header("labels present for an empty table"));
        }
        Vec::new()
    } else {
        text.split('\n').map(ClassId::from).collect()
    };
    if labels.len() != rows {
        return Err(header(&format!("{} labels for {rows} rows", labels.len())));
    }
    if let Some(row) = labels.iter().position(|l| l.as_str().is_empty()) {
        return Err(Error::Load {
            path: source.to_string(),
            row,
            reason: "empty label".into(),
        });
    }
    FeatureTable::new(dim, features, labels)
}

pub fn parse_feature_csv(text: &str, source: &str) -> Result<FeatureTable> {
    let mut dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let load_err = |reason: String| Error::Load {
            path: source.to_string(),
            row,
            reason,
        };
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default().trim();
        if label.is_empty() {
            return Err(load_err("empty label".into()));
        }
        let values = fields
            .map(|f| {
                let v: f32 = f.trim().parse().map_err(|_| load_err(format!("bad float {f:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(load_err("non-finite feature value".into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(load_err(format!("{} values, expected {expected}", values.len())));
        }
        features.extend(values);
        labels.push(ClassId::from(label));
    }
    let dim = dim.ok_or_else(|| Error::Header {
        path: source.to_string(),
        reason: "CSV feature file has no rows, so its dimension is unknown".into(),
    })?;
    FeatureTable::new(dim, features, labels)
}

pub fn format_feature_csv(table: &FeatureTable) -> String {
    let mut out = String::new();
    for i in 0..table.len() {
        out.push_str(table.label(i).as_str());
        for x in table.row(i) {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_feature_table(path: &Path, format: FeatureFormat) -> Result<FeatureTable> {
    let source = path.display().to_string();
    match format {
        FeatureFormat::Binary => decode_binary(&read(path)?, &source),
        FeatureFormat::Csv => parse_feature_csv(&read_text(path)?, &source),
    }
}

pub fn write_feature_table(path: &Path, table: &FeatureTable, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Binary => write_atomic(path, &encode_binary(table)),
        FeatureFormat::Csv => write_atomic(path, format_feature_csv(table).as_bytes()),
    }
}

pub fn parse_semantics_csv(text: &str, source: &str) -> Result<SemanticTable> {
    let mut entries = Vec::new();
    for (row, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_string();
        let values = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Load {
                    path: source.to_string(),
                    row,
                    reason: format!("bad float {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push((ClassId::from(id), values));
    }
    SemanticTable::new(entries)
}

pub fn format_semantics_csv(table: &SemanticTable) -> String {
    let mut out = String::new();
    for (id, v) in table.iter() {
        out.push_str(id.as_str());
        for x in v {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn load_semantics(path: &Path) -> Result<SemanticTable> {
    parse_semantics_csv(&read_text(path)?, &path.display().to_string())
}

pub fn load_split(path: &Path) -> Result<ClassSplit> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn load_priors(path: &Path) -> Result<BTreeMap<ClassId, f64>> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn format_predictions_csv(preds: &PseudoLabelSet) -> String {
    let mut out = String::from("row_index,predicted_class\n");
    for (i, y) in preds.iter().enumerate() {
        out.push_str(&format!("{i},{y}\n"));
    }
    out
}

/// Parses `row_index,predicted_class` rows. Indices must cover `0..n` exactly
/// once, in any order.
pub fn parse_predictions_csv(text: &str, source: &str) -> Result<PseudoLabelSet> {
    let mut rows: Vec<(usize, ClassId)> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (line_no == 0 && line.starts_with("row_index")) {
            continue;
        }
        let bad = |reason: &str| Error::Load {
            path: source.to_string(),
            row: line_no,
            reason: reason.to_string(),
        };
        let (idx, label) = line.split_once(',').ok_or_else(|| bad("expected row_index,predicted_class"))?;
        let idx: usize = idx.trim().parse().map_err(|_| bad("bad row index"))?;
        rows.push((idx, ClassId::from(label.trim())));
    }
    rows.sort_by_key(|(i, _)| *i);
    for (expected, (i, _)) in rows.iter().enumerate() {
        if *i != expected {
            return Err(Error::Load {
                path: source.to_string(),
                row: expected,
                reason: format!("row indices must cover 0..{} exactly once", rows.len()),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, y)| y).collect())
}

pub fn load_predictions(path: &Path) -> Result<PseudoLabelSet> {
    parse_predictions_csv(&read_text(path)?, &path.display().to_string())
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn feature_path(dir: &Path, binary_name: &str) -> Option<PathBuf> {
    let bin = dir.join(binary_name);
    if bin.exists() {
        return Some(bin);
    }
    let csv = bin.with_extension("csv");
    csv.exists().then_some(csv)
}

/// Loads a dataset directory and validates it.
///
/// Expected files: `train_seen.zsf`, `test_unseen.zsf`, `semantics.csv`,
/// `split.json`, optionally `test_seen.zsf` and `priors.json`. Each feature
/// file may instead be given as `.csv`.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let table = |name: &str| -> Result<Option<FeatureTable>> {
        feature_path(dir, name)
            .map(|p| load_feature_table(&p, FeatureFormat::from_path(&p)))
            .transpose()
    };
    let missing = |name: &str| Error::io(dir.join(name), std::io::ErrorKind::NotFound.into());
    let train_seen = table(TRAIN_SEEN_FILE)?.ok_or_else(|| missing(TRAIN_SEEN_FILE))?;
    let test_unseen = table(TEST_UNSEEN_FILE)?.ok_or_else(|| missing(TEST_UNSEEN_FILE))?;
    let test_seen = table(TEST_SEEN_FILE)?;
    let priors_path = dir.join(PRIORS_FILE);
    let class_priors = if priors_path.exists() {
        Some(load_priors(&priors_path)?)
    } else {
        None
    };
    DatasetBundle {
        train_seen,
        test_unseen,
        test_seen,
        semantics: load_semantics(&dir.join(SEMANTICS_FILE))?,
        split: load_split(&dir.join(SPLIT_FILE))?,
        class_priors,
    }
    .validate()
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    write_feature_table(&dir.join(TRAIN_SEEN_FILE), &bundle.train_seen, FeatureFormat::Binary)?;
    write_feature_table(&dir.join(TEST_UNSEEN_FILE), &bundle.test_unseen, FeatureFormat::Binary)?;
    if let Some(t) = &bundle.test_seen {
        write_feature_table(&dir.join(TEST_SEEN_FILE), t, FeatureFormat::Binary)?;
    }
    write_atomic(&dir.join(SEMANTICS_FILE), format_semantics_csv(&bundle.semantics).as_bytes())?;
    write_json(&dir.join(SPLIT_FILE), &bundle.split)?;
    if let Some(p) = &bundle.class_priors {
        write_json(&dir.join(PRIORS_FILE), p)?;
    }
    Ok(())
}
