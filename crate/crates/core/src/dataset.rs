//! Immutable numeric tables bound to a [`FeatureSchema`], CSV ingestion and
//! seeded train/test splitting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::FeatureSchema;

/// Optional leading CSV column carrying stable row identifiers.
pub const ROW_ID_COLUMN: &str = "row_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Full,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub row_id: u64,
    pub column: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

/// Row-major `n × d` table, `d` = number of schema columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
    row_ids: Vec<u64>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<Vec<f64>>, row_ids: Vec<u64>) -> Result<Self> {
        let d = schema.len();
        if rows.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if rows.len() != row_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} row ids",
                rows.len(),
                row_ids.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (row, &id) in rows.iter().zip(&row_ids) {
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row {id} has {} cells, schema has {d} columns",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Row {
                        row_id: id,
                        column: schema.columns[j].name.clone(),
                        message: format!("non-finite value {v}"),
                    });
                }
            }
            values.extend_from_slice(row);
        }
        check_unique(&row_ids)?;
        Ok(Self {
            schema,
            values,
            row_ids,
            provenance: Provenance {
                source: "memory".into(),
                split: SplitTag::Full,
            },
        })
    }

    /// Rows numbered `0..n`.
    pub fn from_rows(schema: Arc<FeatureSchema>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..rows.len() as u64).collect();
        Self::new(schema, rows, ids)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.provenance.source = source.into();
        self
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.schema.require(name)?))
    }

    /// Row-major matrix of the named columns, in the given order.
    pub fn matrix(&self, columns: &[String]) -> Result<Vec<f64>> {
        let idx = columns
            .iter()
            .map(|c| self.schema.require(c))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.n_rows() * idx.len());
        for r in self.rows() {
            out.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(out)
    }

    /// Rows at the given positions, in the given order.
    pub fn select_rows(&self, positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty("row selection is empty".into()));
        }
        let d = self.n_cols();
        let mut values = Vec::with_capacity(positions.len() * d);
        let mut ids = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= self.n_rows() {
                return Err(Error::InvalidArgument(format!(
                    "row position {p} out of bounds ({} rows)",
                    self.n_rows()
                )));
            }
            values.extend_from_slice(self.row(p));
            ids.push(self.row_ids[p]);
        }
        check_unique(&ids)?;
        Ok(Self {
            schema: Arc::clone(&self.schema),
            values,
            row_ids: ids,
            provenance: self.provenance.clone(),
        })
    }

    /// Keeps rows whose id is in `ids`, preserving this dataset's row order.
    pub fn select_ids(&self, ids: &[u64]) -> Result<Self> {
        let wanted: HashSet<u64> = ids.iter().copied().collect();
        let found: HashSet<u64> = self.row_ids.iter().copied().collect();
        if let Some(missing) = ids.iter().find(|id| !found.contains(id)) {
            return Err(Error::InvalidArgument(format!(
                "row id {missing} not present"
            )));
        }
        let positions: Vec<usize> = (0..self.n_rows())
            .filter(|&i| wanted.contains(&self.row_ids[i]))
            .collect();
        self.select_rows(&positions)
    }

    pub fn without_ids(&self, ids: &[u64]) -> Result<Self> {
        let drop: HashSet<u64> = ids.iter().copied().collect();
        let positions: Vec<usize> = (0..self.n_rows())
            .filter(|&i| !drop.contains(&self.row_ids[i]))
            .collect();
        self.select_rows(&positions)
    }

    /// Same rows and ids with a transformed value matrix.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            schema: Arc::clone(&self.schema),
            values,
            row_ids: self.row_ids.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn tagged(mut self, tag: SplitTag) -> Self {
        self.provenance.split = tag;
        self
    }

    pub fn range_violations(&self) -> Vec<RangeViolation> {
        let mut out = Vec::new();
        for (i, r) in self.rows().enumerate() {
            for (spec, &v) in self.schema.columns.iter().zip(r) {
                if !spec.in_range(v) {
                    out.push(RangeViolation {
                        row_id: self.row_ids[i],
                        column: spec.name.clone(),
                        value: v,
                        min: spec.observed_min,
                        max: spec.observed_max,
                    });
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![ROW_ID_COLUMN.to_string()];
        header.extend(self.schema.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (i, r) in self.rows().enumerate() {
            let mut rec = vec![self.row_ids[i].to_string()];
            // `Display` for f64 prints the shortest representation that parses back exactly.
            rec.extend(r.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

fn check_unique(ids: &[u64]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidArgument(format!("duplicate row id {id}")));
        }
    }
    Ok(())
}

/// Reads a UTF-8 CSV with a header row. Column order in the file is free; an
/// optional `row_id` column supplies identifiers, otherwise rows are numbered
/// from 0. In strict mode any value outside a column's observed range fails.
pub fn load_dataset(path: &Path, schema: Arc<FeatureSchema>, strict: bool) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset(file, schema, strict).map(|d| d.with_source(path.display().to_string()))
}

pub fn read_dataset<R: Read>(
    reader: R,
    schema: Arc<FeatureSchema>,
    strict: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty("file has no header row".into()));
    }
    let positions: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut source_cols = Vec::with_capacity(schema.len());
    for c in &schema.columns {
        match positions.get(c.name.as_str()) {
            Some(&p) => source_cols.push(p),
            None => {
                return Err(Error::Schema(format!("missing column \"{}\"", c.name)));
            }
        }
    }
    for h in headers.iter() {
        if h != ROW_ID_COLUMN && schema.index_of(h).is_none() {
            log::warn!("ignoring column \"{h}\" not present in schema");
        }
    }
    let id_col = positions.get(ROW_ID_COLUMN).copied();

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_id = match id_col {
            Some(p) => rec
                .get(p)
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::Row {
                    row_id: line as u64,
                    column: ROW_ID_COLUMN.into(),
                    message: "row id is not a non-negative integer".into(),
                })?,
            None => line as u64,
        };
        let mut row = Vec::with_capacity(schema.len());
        for (spec, &p) in schema.columns.iter().zip(&source_cols) {
            let cell = rec.get(p).unwrap_or("");
            let v = parse_cell(cell).ok_or_else(|| Error::Row {
                row_id,
                column: spec.name.clone(),
                message: if cell.is_empty() {
                    "missing value".into()
                } else {
                    format!("cannot parse \"{cell}\" as a number")
                },
            })?;
            if !spec.in_range(v) {
                if strict {
                    return Err(Error::Range {
                        row_id,
                        column: spec.name.clone(),
                        value: v,
                        min: spec.observed_min,
                        max: spec.observed_max,
                    });
                }
                log::warn!(
                    "row {row_id}: {} = {v} outside observed range [{}, {}]",
                    spec.name,
                    spec.observed_min,
                    spec.observed_max
                );
            }
            row.push(v);
        }
        rows.push(row);
        ids.push(row_id);
    }
    if rows.is_empty() {
        return Err(Error::Empty("file contains no data rows".into()));
    }
    Dataset::new(schema, rows, ids)
}

fn parse_cell(cell: &str) -> Option<f64> {
    let v: f64 = cell.parse().ok()?;
    v.is_finite().then_some(v)
}

/// Uniform seeded partition into `round(train_fraction · n)` training rows and
/// the remainder. Each part keeps the parent's row order.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} leaves an empty part for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut train_pos = order[..n_train].to_vec();
    let mut test_pos = order[n_train..].to_vec();
    train_pos.sort_unstable();
    test_pos.sort_unstable();
    Ok((
        data.select_rows(&train_pos)?.tagged(SplitTag::Train),
        data.select_rows(&test_pos)?.tagged(SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    fn tiny_schema() -> Arc<FeatureSchema> {
        Arc::new(
            FeatureSchema::new(
                "tiny",
                vec![
                    ColumnSpec::input("a", "", 0.0, 10.0),
                    ColumnSpec::target("y", "", 0.0, 100.0),
                ],
            )
            .unwrap(),
        )
    }

    fn uhpc_csv(rows: &[Vec<f64>], drop: Option<&str>) -> String {
        let schema = FeatureSchema::uhpc();
        let names: Vec<&str> = schema
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| Some(*n) != drop)
            .collect();
        let mut s = names.join(",");
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = schema
                .columns
                .iter()
                .zip(r)
                .filter(|(c, _)| Some(c.name.as_str()) != drop)
                .map(|(_, v)| v.to_string())
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn mean_row() -> Vec<f64> {
        FeatureSchema::uhpc()
            .columns
            .iter()
            .map(|c| c.mean.unwrap())
            .collect()
    }

    #[test]
    fn loads_three_valid_rows() {
        let rows = vec![mean_row(), mean_row(), mean_row()];
        let text = uhpc_csv(&rows, None);
        let d = read_dataset(text.as_bytes(), Arc::new(FeatureSchema::uhpc()), true).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.row_ids(), &[0, 1, 2]);
    }

    #[test]
    fn strict_mode_rejects_out_of_range_cement() {
        let mut row = mean_row();
        row[0] = 1200.0;
        let text = uhpc_csv(&[row], None);
        let err = read_dataset(text.as_bytes(), Arc::new(FeatureSchema::uhpc()), true).unwrap_err();
        match &err {
            Error::Range { column, .. } => assert_eq!(column, "Cement content"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("Cement content"));
    }

    #[test]
    fn lenient_mode_keeps_out_of_range_rows() {
        let mut row = mean_row();
        row[0] = 1200.0;
        let text = uhpc_csv(&[row], None);
        let d = read_dataset(text.as_bytes(), Arc::new(FeatureSchema::uhpc()), false).unwrap();
        assert_eq!(d.range_violations().len(), 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = uhpc_csv(&[mean_row()], Some("Porosity"));
        let err =
            read_dataset(text.as_bytes(), Arc::new(FeatureSchema::uhpc()), false).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("Porosity")));
    }

    #[test]
    fn unparseable_cell_names_row_and_column() {
        let text = "a,y\n1,2\n3,abc\n";
        let err = read_dataset(text.as_bytes(), tiny_schema(), false).unwrap_err();
        match err {
            Error::Row { row_id, column, .. } => {
                assert_eq!(row_id, 1);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cell_rejected() {
        let text = "a,y\n1,\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), tiny_schema(), false),
            Err(Error::Row { .. })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(read_dataset("".as_bytes(), tiny_schema(), false).is_err());
        assert!(matches!(
            read_dataset("a,y\n".as_bytes(), tiny_schema(), false),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn header_order_is_free_and_row_ids_are_read() {
        let text = "y,row_id,a\n5,10,1\n6,20,2\n";
        let d = read_dataset(text.as_bytes(), tiny_schema(), false).unwrap();
        assert_eq!(d.row_ids(), &[10, 20]);
        assert_eq!(d.row(1), &[2.0, 6.0]);
    }

    #[test]
    fn write_then_read_is_bit_identical() {
        let rows = vec![
            vec![0.1 + 0.2, 1.0 / 3.0],
            vec![9.999_999_999_999_998, 1e-300],
        ];
        let d = Dataset::from_rows(tiny_schema(), rows).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), tiny_schema(), false).unwrap();
        assert_eq!(back.row_ids(), d.row_ids());
        for (a, b) in d.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn numbered(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64 % 10.0, i as f64]).collect();
        Dataset::from_rows(tiny_schema(), rows).unwrap()
    }

    #[test]
    fn split_sizes_for_reference_dataset() {
        let (tr, te) = split(&numbered(1201), 0.7, 3).unwrap();
        assert_eq!(tr.n_rows(), 841);
        assert_eq!(te.n_rows(), 360);
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let d = numbered(10);
        let (tr, te) = split(&d, 0.7, 42).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (7, 3));
        let mut all: Vec<u64> = tr.row_ids().iter().chain(te.row_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u64>>());
        let (tr2, te2) = split(&d, 0.7, 42).unwrap();
        assert_eq!(tr.row_ids(), tr2.row_ids());
        assert_eq!(te.row_ids(), te2.row_ids());
        assert_eq!(tr.provenance().split, SplitTag::Train);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = numbered(10);
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
        assert!(split(&d, -0.5, 1).is_err());
    }

    #[test]
    fn filtered_ids_are_subset() {
        let d = numbered(20);
        let f = d.without_ids(&[3, 4, 5]).unwrap();
        assert_eq!(f.n_rows(), 17);
        assert!(f.row_ids().iter().all(|id| d.row_ids().contains(id)));
        assert!(d.select_ids(&[99]).is_err());
    }
}
