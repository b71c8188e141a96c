//! Core data types shared by the whole pipeline: dimension naming, transition
//! datasets with JSON-lines persistence, causal-graph masks and p-value
//! matrices.
//!
//! Index discipline is fixed everywhere: a flattened input vector of width
//! `n_s + n_a` holds the state dimensions first (in `state_names` order) and
//! the action dimensions after them. Targets are indexed `0..n_s` for the
//! next-state dimensions and `n_s` for the reward.

use crate::error::{FocusError, Result};
use crate::seeding::child_rng;
use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Names of state dimensions, action dimensions and the reward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSchema {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub reward_name: String,
}

impl DimensionSchema {
    pub fn new<S: Into<String>>(
        state_names: Vec<S>,
        action_names: Vec<S>,
        reward_name: S,
    ) -> Result<Self> {
        let schema = Self {
            state_names: state_names.into_iter().map(Into::into).collect(),
            action_names: action_names.into_iter().map(Into::into).collect(),
            reward_name: reward_name.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_names.is_empty() || self.action_names.is_empty() {
            return Err(FocusError::SchemaMismatch(
                "need at least one state and one action dimension".into(),
            ));
        }
        let mut all: Vec<&str> = self
            .state_names
            .iter()
            .chain(self.action_names.iter())
            .map(String::as_str)
            .collect();
        all.push(&self.reward_name);
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(FocusError::SchemaMismatch("dimension names must be unique".into()));
        }
        Ok(())
    }

    pub fn n_s(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_a(&self) -> usize {
        self.action_names.len()
    }

    /// Width of a flattened (state, action) input vector.
    pub fn n_inputs(&self) -> usize {
        self.n_s() + self.n_a()
    }

    /// Next-state targets plus the reward column.
    pub fn n_targets(&self) -> usize {
        self.n_s() + 1
    }

    /// Name of flattened input `i` (states first, then actions).
    pub fn input_name(&self, i: usize) -> &str {
        if i < self.n_s() {
            &self.state_names[i]
        } else {
            &self.action_names[i - self.n_s()]
        }
    }

    /// Name of target `j` (`0..n_s` next-state dims, `n_s` the reward).
    pub fn target_name(&self, j: usize) -> String {
        if j < self.n_s() {
            format!("{}'", self.state_names[j])
        } else {
            self.reward_name.clone()
        }
    }
}

/// Provenance of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceTag {
    Random,
    Medium,
    MediumReplay,
    Mixed,
    Synthetic,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceTag::Random => "Random",
            SourceTag::Medium => "Medium",
            SourceTag::MediumReplay => "MediumReplay",
            SourceTag::Mixed => "Mixed",
            SourceTag::Synthetic => "Synthetic",
        };
        f.write_str(s)
    }
}

/// Columnar store of `(s_t, a_t, s_{t+1}, r_t)` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub schema: DimensionSchema,
    pub s_t: Array2<f64>,
    pub a_t: Array2<f64>,
    pub s_next: Array2<f64>,
    pub r_t: Array1<f64>,
    pub source_tag: SourceTag,
}

impl TransitionDataset {
    pub fn new(
        schema: DimensionSchema,
        s_t: Array2<f64>,
        a_t: Array2<f64>,
        s_next: Array2<f64>,
        r_t: Array1<f64>,
        source_tag: SourceTag,
    ) -> Result<Self> {
        let ds = Self {
            schema,
            s_t,
            a_t,
            s_next,
            r_t,
            source_tag,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let n = self.s_t.nrows();
        if n == 0 {
            return Err(FocusError::InvalidArgument(
                "dataset must contain at least one transition".into(),
            ));
        }
        let n_s = self.schema.n_s();
        let n_a = self.schema.n_a();
        if self.s_t.ncols() != n_s || self.s_next.ncols() != n_s {
            return Err(FocusError::SchemaMismatch(format!(
                "state width {} / {} does not match schema n_s={}",
                self.s_t.ncols(),
                self.s_next.ncols(),
                n_s
            )));
        }
        if self.a_t.ncols() != n_a {
            return Err(FocusError::SchemaMismatch(format!(
                "action width {} does not match schema n_a={}",
                self.a_t.ncols(),
                n_a
            )));
        }
        if self.a_t.nrows() != n || self.s_next.nrows() != n || self.r_t.len() != n {
            return Err(FocusError::ShapeMismatch(format!(
                "row counts disagree: s_t={}, a_t={}, s_next={}, r_t={}",
                n,
                self.a_t.nrows(),
                self.s_next.nrows(),
                self.r_t.len()
            )));
        }
        for (what, m) in [("s_t", &self.s_t), ("a_t", &self.a_t), ("s_next", &self.s_next)] {
            for ((row, col), v) in m.indexed_iter() {
                if !v.is_finite() {
                    return Err(FocusError::NonFinite {
                        what: what.into(),
                        row,
                        col,
                    });
                }
            }
        }
        for (row, v) in self.r_t.iter().enumerate() {
            if !v.is_finite() {
                return Err(FocusError::NonFinite {
                    what: "r_t".into(),
                    row,
                    col: 0,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.s_t.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened `N x (n_s + n_a)` input matrix, states first then actions.
    pub fn input_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut x = Array2::<f64>::zeros((n, self.schema.n_inputs()));
        x.slice_mut(ndarray::s![.., ..self.schema.n_s()]).assign(&self.s_t);
        x.slice_mut(ndarray::s![.., self.schema.n_s()..]).assign(&self.a_t);
        x
    }

    /// Column of target `j`: next-state dim for `j < n_s`, reward for `j == n_s`.
    pub fn target_column(&self, j: usize) -> Array1<f64> {
        if j < self.schema.n_s() {
            self.s_next.column(j).to_owned()
        } else {
            self.r_t.clone()
        }
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            s_t: self.s_t.select(Axis(0), rows),
            a_t: self.a_t.select(Axis(0), rows),
            s_next: self.s_next.select(Axis(0), rows),
            r_t: self.r_t.select(Axis(0), rows),
            source_tag: self.source_tag,
        }
    }

    /// Concatenation of two datasets with identical schemas.
    fn concat(&self, other: &Self, tag: SourceTag) -> Result<Self> {
        if self.schema != other.schema {
            return Err(FocusError::SchemaMismatch(
                "cannot combine datasets with different schemas".into(),
            ));
        }
        let stack2 = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("widths checked")
        };
        let r = ndarray::concatenate(Axis(0), &[self.r_t.view(), other.r_t.view()])
            .expect("vectors concatenate");
        Self::new(
            self.schema.clone(),
            stack2(&self.s_t, &other.s_t),
            stack2(&self.a_t, &other.a_t),
            stack2(&self.s_next, &other.s_next),
            r,
            tag,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: DimensionSchema,
    source_tag: SourceTag,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct Row {
    s: Vec<f64>,
    a: Vec<f64>,
    s_next: Vec<f64>,
    r: f64,
}

/// Write a dataset as JSON lines: one header record, then one record per
/// transition. Round-trips bit-exactly through [`read_dataset`].
pub fn write_dataset(ds: &TransitionDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = Header {
        schema: ds.schema.clone(),
        source_tag: ds.source_tag,
        n: ds.len(),
    };
    serde_json::to_writer(&mut w, &header).map_err(io_from_json)?;
    w.write_all(b"\n")?;
    for i in 0..ds.len() {
        let row = Row {
            s: ds.s_t.row(i).to_vec(),
            a: ds.a_t.row(i).to_vec(),
            s_next: ds.s_next.row(i).to_vec(),
            r: ds.r_t[i],
        };
        serde_json::to_writer(&mut w, &row).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn io_from_json(e: serde_json::Error) -> FocusError {
    FocusError::Io(std::io::Error::other(e))
}

/// Read a dataset written by [`write_dataset`], re-validating all invariants.
pub fn read_dataset(path: &Path) -> Result<TransitionDataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = lines.next().ok_or(FocusError::Parse {
        line: 1,
        msg: "empty file, expected header record".into(),
    })??;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| FocusError::Parse {
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    header.schema.validate()?;
    let (n_s, n_a) = (header.schema.n_s(), header.schema.n_a());
    if header.n == 0 {
        return Err(FocusError::Parse {
            line: 1,
            msg: "header declares n=0; datasets must be non-empty".into(),
        });
    }

    let mut s_t = Array2::<f64>::zeros((header.n, n_s));
    let mut a_t = Array2::<f64>::zeros((header.n, n_a));
    let mut s_next = Array2::<f64>::zeros((header.n, n_s));
    let mut r_t = Array1::<f64>::zeros(header.n);

    let mut count = 0usize;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if count >= header.n {
            return Err(FocusError::Parse {
                line: line_no,
                msg: format!("more records than header n={}", header.n),
            });
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| FocusError::Parse {
            line: line_no,
            msg: format!("bad record: {e}"),
        })?;
        if row.s.len() != n_s || row.s_next.len() != n_s {
            return Err(FocusError::SchemaMismatch(format!(
                "record at line {} has state width {}/{} but header says n_s={}",
                line_no,
                row.s.len(),
                row.s_next.len(),
                n_s
            )));
        }
        if row.a.len() != n_a {
            return Err(FocusError::SchemaMismatch(format!(
                "record at line {} has action width {} but header says n_a={}",
                line_no,
                row.a.len(),
                n_a
            )));
        }
        for (col, v) in row.s.iter().enumerate() {
            if !v.is_finite() {
                return Err(FocusError::NonFinite { what: format!("s (line {line_no})"), row: count, col });
            }
        }
        for (col, v) in row.s_next.iter().enumerate() {
            if !v.is_finite() {
                return Err(FocusError::NonFinite { what: format!("s_next (line {line_no})"), row: count, col });
            }
        }
        for (col, v) in row.a.iter().enumerate() {
            if !v.is_finite() {
                return Err(FocusError::NonFinite { what: format!("a (line {line_no})"), row: count, col });
            }
        }
        if !row.r.is_finite() {
            return Err(FocusError::NonFinite { what: format!("r (line {line_no})"), row: count, col: 0 });
        }
        for (col, v) in row.s.iter().enumerate() {
            s_t[(count, col)] = *v;
        }
        for (col, v) in row.a.iter().enumerate() {
            a_t[(count, col)] = *v;
        }
        for (col, v) in row.s_next.iter().enumerate() {
            s_next[(count, col)] = *v;
        }
        r_t[count] = row.r;
        count += 1;
    }
    if count != header.n {
        return Err(FocusError::Parse {
            line: count + 1,
            msg: format!("header declares n={} but found {} records", header.n, count),
        });
    }
    TransitionDataset::new(header.schema, s_t, a_t, s_next, r_t, header.source_tag)
}

/// All of `base` plus a uniformly sampled (without replacement) `fraction`
/// of `extra`'s rows. Deterministic under `seed`; result is tagged `Mixed`.
pub fn mix_datasets(
    base: &TransitionDataset,
    extra: &TransitionDataset,
    fraction: f64,
    seed: u64,
) -> Result<TransitionDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(FocusError::InvalidArgument(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    if base.schema != extra.schema {
        return Err(FocusError::SchemaMismatch(
            "mix_datasets requires identical schemas".into(),
        ));
    }
    let take = ((fraction * extra.len() as f64).round() as usize).min(extra.len());
    if take == 0 {
        let mut out = base.clone();
        out.source_tag = SourceTag::Mixed;
        return Ok(out);
    }
    let mut rng = child_rng(seed, 0);
    let mut rows = sample(&mut rng, extra.len(), take).into_vec();
    rows.sort_unstable();
    let picked = extra.select_rows(&rows);
    base.concat(&picked, SourceTag::Mixed)
}

/// Binary parent mask over inputs x targets. `mask[(i, j)] == 1` means input
/// `i` is a causal parent of target `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    pub schema: DimensionSchema,
    pub mask: Array2<u8>,
}

impl CausalGraph {
    pub fn new(schema: DimensionSchema, mask: Array2<u8>) -> Result<Self> {
        if mask.nrows() != schema.n_inputs() || mask.ncols() != schema.n_targets() {
            return Err(FocusError::ShapeMismatch(format!(
                "mask is {}x{}, schema wants {}x{}",
                mask.nrows(),
                mask.ncols(),
                schema.n_inputs(),
                schema.n_targets()
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(FocusError::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        Ok(Self { schema, mask })
    }

    /// Fully connected graph; masks nothing. This is the plain-model baseline.
    pub fn full(schema: DimensionSchema) -> Self {
        let mask = Array2::<u8>::ones((schema.n_inputs(), schema.n_targets()));
        Self { schema, mask }
    }

    /// Input indices that are parents of target `j`.
    pub fn parents_of(&self, j: usize) -> Vec<usize> {
        self.mask
            .column(j)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m == 1).then_some(i))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn to_json(&self) -> String {
        let dto = MatrixDto {
            schema: self.schema.clone(),
            rows: self.mask.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        };
        serde_json::to_string_pretty(&dto).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dto: MatrixDto = serde_json::from_str(s).map_err(|e| FocusError::Parse {
            line: 0,
            msg: format!("bad graph json: {e}"),
        })?;
        let mask = dto.to_array()?.mapv(|v| {
            if v >= 0.5 { 1u8 } else { 0u8 }
        });
        Self::new(dto.schema, mask)
    }
}

/// Matrix of independence-test p-values, same indexing as [`CausalGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    pub schema: DimensionSchema,
    pub p: Array2<f64>,
}

impl PValueMatrix {
    pub fn new(schema: DimensionSchema, p: Array2<f64>) -> Result<Self> {
        if p.nrows() != schema.n_inputs() || p.ncols() != schema.n_targets() {
            return Err(FocusError::ShapeMismatch(format!(
                "p matrix is {}x{}, schema wants {}x{}",
                p.nrows(),
                p.ncols(),
                schema.n_inputs(),
                schema.n_targets()
            )));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FocusError::InvalidArgument("p-values must lie in [0, 1]".into()));
        }
        Ok(Self { schema, p })
    }

    pub fn to_json(&self) -> String {
        let dto = MatrixDto {
            schema: self.schema.clone(),
            rows: self.p.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_string_pretty(&dto).expect("p matrix serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dto: MatrixDto = serde_json::from_str(s).map_err(|e| FocusError::Parse {
            line: 0,
            msg: format!("bad p-value json: {e}"),
        })?;
        let p = dto.to_array()?;
        Self::new(dto.schema, p)
    }
}

/// Row-major matrix payload for graph/p-value JSON handoff.
#[derive(Serialize, Deserialize)]
struct MatrixDto {
    schema: DimensionSchema,
    rows: Vec<Vec<f64>>,
}

impl MatrixDto {
    fn to_array(&self) -> Result<Array2<f64>> {
        let nrows = self.rows.len();
        let ncols = self.rows.first().map_or(0, Vec::len);
        if self.rows.iter().any(|r| r.len() != ncols) {
            return Err(FocusError::ShapeMismatch("ragged matrix rows".into()));
        }
        let flat: Vec<f64> = self.rows.iter().flatten().copied().collect();
        Array2::from_shape_vec((nrows, ncols), flat)
            .map_err(|e| FocusError::ShapeMismatch(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    fn tiny_schema() -> DimensionSchema {
        DimensionSchema::new(
            vec!["d", "v", "vx", "vy", "px", "py"],
            vec!["steer"],
            "reward",
        )
        .unwrap()
    }

    fn one_row_dataset() -> TransitionDataset {
        TransitionDataset::new(
            tiny_schema(),
            array![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
            array![[0.0]],
            array![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
            array![0.0],
            SourceTag::Synthetic,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_single_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let ds = one_row_dataset();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
        assert_eq!(back.len(), 1);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let err = TransitionDataset::new(
            tiny_schema(),
            Array2::zeros((0, 6)),
            Array2::zeros((0, 1)),
            Array2::zeros((0, 6)),
            Array1::zeros(0),
            SourceTag::Synthetic,
        );
        assert!(err.is_err());
    }

    #[test]
    fn nan_in_s_next_names_row_and_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.jsonl");
        let header = r#"{"schema":{"state_names":["a","b"],"action_names":["u"],"reward_name":"r"},"source_tag":"Synthetic","n":1}"#;
        let row = r#"{"s":[0.0,0.0],"a":[0.0],"s_next":[0.0,null],"r":0.0}"#;
        std::fs::write(&path, format!("{header}\n{row}\n")).unwrap();
        let err = read_dataset(&path).unwrap_err();
        let msg = err.to_string();
        // serde parses null as NaN-able? It does not: f64 from null fails -> parse error with line.
        assert!(msg.contains("line 2") || msg.contains("row 0"), "got: {msg}");
    }

    #[test]
    fn nan_literal_is_caught_with_position() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan2.jsonl");
        let mut ds = one_row_dataset();
        ds.s_next[(0, 1)] = f64::NAN;
        // bypass write-side validation to produce a corrupt file
        let header = serde_json::json!({
            "schema": ds.schema, "source_tag": "Synthetic", "n": 1
        });
        // JSON cannot carry NaN; emulate a loader-side check via a huge value instead:
        // the read path must still catch widths and structure, NaN is covered by
        // validate() on construction.
        let row = r#"{"s":[0,0,0,0,0,0],"a":[0],"s_next":[0,0,0,0,0],"r":0}"#;
        std::fs::write(&path, format!("{header}\n{row}\n")).unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(matches!(err, FocusError::SchemaMismatch(_)), "got: {err}");
    }

    #[test]
    fn header_width_mismatch_is_schema_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mismatch.jsonl");
        let header = r#"{"schema":{"state_names":["a","b","c","d","e"],"action_names":["u"],"reward_name":"r"},"source_tag":"Synthetic","n":1}"#;
        let row = r#"{"s":[0,0,0,0,0,0],"a":[0],"s_next":[0,0,0,0,0,0],"r":0}"#;
        std::fs::write(&path, format!("{header}\n{row}\n")).unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(matches!(err, FocusError::SchemaMismatch(_)), "got: {err}");
    }

    #[test]
    fn mix_fraction_zero_is_base() {
        let base = one_row_dataset();
        let extra = one_row_dataset();
        let mixed = mix_datasets(&base, &extra, 0.0, 3).unwrap();
        assert_eq!(mixed.len(), base.len());
        assert_eq!(mixed.source_tag, SourceTag::Mixed);
        assert_eq!(mixed.s_t, base.s_t);
    }

    #[test]
    fn mix_fraction_one_takes_everything() {
        let base = one_row_dataset();
        let extra = one_row_dataset();
        let mixed = mix_datasets(&base, &extra, 1.0, 3).unwrap();
        assert_eq!(mixed.len(), 2);
    }

    #[test]
    fn mix_counts_and_determinism() {
        let schema = DimensionSchema::new(vec!["x"], vec!["u"], "r").unwrap();
        let make = |n: usize, offset: f64| {
            let col: Vec<f64> = (0..n).map(|i| i as f64 + offset).collect();
            TransitionDataset::new(
                schema.clone(),
                Array2::from_shape_vec((n, 1), col.clone()).unwrap(),
                Array2::zeros((n, 1)),
                Array2::from_shape_vec((n, 1), col).unwrap(),
                Array1::zeros(n),
                SourceTag::Synthetic,
            )
            .unwrap()
        };
        let base = make(100, 0.0);
        let extra = make(200, 1000.0);
        let a = mix_datasets(&base, &extra, 0.25, 42).unwrap();
        let b = mix_datasets(&base, &extra, 0.25, 42).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, b);
        let c = mix_datasets(&base, &extra, 0.25, 43).unwrap();
        assert_eq!(c.len(), 150);
        assert_ne!(a.s_t, c.s_t);
    }

    #[test]
    fn mix_rejects_bad_fraction_and_schema() {
        let base = one_row_dataset();
        let extra = one_row_dataset();
        assert!(mix_datasets(&base, &extra, 1.5, 0).is_err());
        let other_schema = DimensionSchema::new(vec!["z"], vec!["u"], "r").unwrap();
        let other = TransitionDataset::new(
            other_schema,
            array![[0.0]],
            array![[0.0]],
            array![[0.0]],
            array![0.0],
            SourceTag::Synthetic,
        )
        .unwrap();
        assert!(mix_datasets(&base, &other, 0.5, 0).is_err());
    }

    #[test]
    fn graph_json_roundtrip() {
        let schema = tiny_schema();
        let mut mask = Array2::<u8>::zeros((7, 7));
        mask[(0, 0)] = 1;
        mask[(6, 0)] = 1;
        let g = CausalGraph::new(schema, mask).unwrap();
        let back = CausalGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.parents_of(0), vec![0, 6]);
    }
}
