//! Competing-risks dataset representation, validation, CSV I/O and covariate
//! standardization.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};

/// Observed outcome of a subject. Every cause other than the one of interest
/// is folded into [`Status::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Censored,
    Cause1,
    Other,
}

impl Status {
    pub fn from_code(code: u8) -> Option<Status> {
        match code {
            0 => Some(Status::Censored),
            1 => Some(Status::Cause1),
            2 => Some(Status::Other),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Status::Censored => 0,
            Status::Cause1 => 1,
            Status::Other => 2,
        }
    }
}

/// `n` subjects with observed time, status code and time-fixed covariates.
///
/// Status codes are kept raw so that malformed input can be reported by
/// [`CompetingRisksData::validate`] instead of rejected on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetingRisksData {
    times: Array1<f64>,
    status: Vec<u8>,
    covariates: Array2<f64>,
    horizon: f64,
    ids: Option<Vec<String>>,
    names: Vec<String>,
}

impl CompetingRisksData {
    /// Builds a dataset. With `horizon = None` the study end is the largest
    /// observed time; otherwise subjects observed past the horizon are
    /// administratively censored at it.
    pub fn new(
        times: Array1<f64>,
        status: Vec<u8>,
        covariates: Array2<f64>,
        horizon: Option<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if status.len() != n || covariates.nrows() != n {
            return Err(FgError::Dimension(format!(
                "{} times, {} statuses, {} covariate rows",
                n,
                status.len(),
                covariates.nrows()
            )));
        }
        if n == 0 {
            return Err(FgError::Dimension("dataset has no subjects".into()));
        }
        if covariates.ncols() == 0 {
            return Err(FgError::Dimension("dataset has no covariates".into()));
        }
        let names = (1..=covariates.ncols()).map(|j| format!("z{j}")).collect();
        let mut data = CompetingRisksData {
            times,
            status,
            covariates,
            horizon: 0.0,
            ids: None,
            names,
        };
        match horizon {
            Some(h) => data.truncate_at(h)?,
            None => data.horizon = data.times.iter().cloned().fold(0.0, f64::max),
        }
        Ok(data)
    }

    fn truncate_at(&mut self, horizon: f64) -> Result<()> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FgError::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        for (t, s) in self.times.iter_mut().zip(self.status.iter_mut()) {
            if *t > horizon {
                *t = horizon;
                *s = 0;
            }
        }
        self.horizon = horizon;
        Ok(())
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(FgError::Dimension(format!(
                "{} ids for {} subjects",
                ids.len(),
                self.n()
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(FgError::Dimension(format!(
                "{} names for {} covariates",
                names.len(),
                self.p()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn times(&self) -> ArrayView1<'_, f64> {
        self.times.view()
    }

    pub fn status_codes(&self) -> &[u8] {
        &self.status
    }

    /// Status of subject `i`. Invalid codes map to `Censored`; callers that
    /// care run [`validate`](Self::validate) first.
    pub fn status(&self, i: usize) -> Status {
        Status::from_code(self.status[i]).unwrap_or(Status::Censored)
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_cause1(&self) -> usize {
        self.status.iter().filter(|&&s| s == 1).count()
    }

    /// Dataset restricted to the given subjects, horizon kept.
    pub fn subset(&self, rows: &[usize]) -> CompetingRisksData {
        CompetingRisksData {
            times: rows.iter().map(|&i| self.times[i]).collect(),
            status: rows.iter().map(|&i| self.status[i]).collect(),
            covariates: self.covariates.select(Axis(0), rows),
            horizon: self.horizon,
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&i| ids[i].clone()).collect()),
            names: self.names.clone(),
        }
    }

    /// Same subjects with a replacement covariate matrix.
    pub fn with_covariates(&self, covariates: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if covariates.nrows() != self.n() || names.len() != covariates.ncols() {
            return Err(FgError::Dimension("replacement covariates".into()));
        }
        Ok(CompetingRisksData {
            covariates,
            names,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.n() < 2 {
            violations.push(Violation::TooFewSubjects(self.n()));
        }
        for (i, (&t, &s)) in self.times.iter().zip(&self.status).enumerate() {
            if Status::from_code(s).is_none() {
                violations.push(Violation::InvalidStatus { row: i, code: s });
            }
            if !t.is_finite() {
                violations.push(Violation::NonFiniteTime { row: i });
            } else if t < 0.0 {
                violations.push(Violation::NegativeTime { row: i, time: t });
            } else if t > self.horizon {
                violations.push(Violation::BeyondHorizon { row: i, time: t });
            }
        }
        for ((i, j), &z) in self.covariates.indexed_iter() {
            if !z.is_finite() {
                violations.push(Violation::NonFiniteCovariate { row: i, column: j });
            }
        }
        if self.n_cause1() == 0 {
            violations.push(Violation::NoCause1Events);
        }
        ValidationReport { violations }
    }

    /// Errors with the first violation unless the data can be fitted.
    pub fn ensure_fit_ready(&self) -> Result<()> {
        let report = self.validate();
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(FgError::Validation(v.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewSubjects(usize),
    InvalidStatus { row: usize, code: u8 },
    NegativeTime { row: usize, time: f64 },
    NonFiniteTime { row: usize },
    BeyondHorizon { row: usize, time: f64 },
    NonFiniteCovariate { row: usize, column: usize },
    NoCause1Events,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewSubjects(n) => write!(f, "too few subjects ({n}, need at least 2)"),
            Violation::InvalidStatus { row, code } => {
                write!(f, "invalid status code {code} at row {}", row + 1)
            }
            Violation::NegativeTime { row, time } => {
                write!(f, "negative time {time} at row {}", row + 1)
            }
            Violation::NonFiniteTime { row } => write!(f, "non-finite time at row {}", row + 1),
            Violation::BeyondHorizon { row, time } => {
                write!(f, "time {time} beyond horizon at row {}", row + 1)
            }
            Violation::NonFiniteCovariate { row, column } => write!(
                f,
                "non-finite covariate at row {}, column {}",
                row + 1,
                column + 1
            ),
            Violation::NoCause1Events => write!(f, "no cause-1 events"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// How [`standardize`] treats columns with zero sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstantColumns {
    #[default]
    Reject,
    Drop,
}

/// Column centering and scaling applied to the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Indices (into the original columns) that were kept.
    pub kept: Vec<usize>,
    /// Indices of constant columns that were dropped.
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub applied: bool,
}

impl Standardization {
    /// Coefficients on the standardized scale mapped back to the original
    /// covariate units (dropped columns get zero).
    pub fn to_original(&self, beta_std: ArrayView1<'_, f64>) -> Array1<f64> {
        let p = self.kept.len() + self.dropped.len();
        let mut out = Array1::zeros(p);
        for (k, &j) in self.kept.iter().enumerate() {
            out[j] = beta_std[k] / self.scales[k];
        }
        out
    }

    pub fn to_standardized(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        self.kept
            .iter()
            .zip(&self.scales)
            .map(|(&j, &s)| beta[j] * s)
            .collect()
    }

    pub fn scale_of(&self, kept_index: usize) -> f64 {
        self.scales[kept_index]
    }
}

/// Centers every covariate to mean zero and scales it to unit sample SD
/// (denominator `n - 1`).
pub fn standardize(
    data: &CompetingRisksData,
    constant: ConstantColumns,
) -> Result<(CompetingRisksData, Standardization)> {
    let z = data.covariates();
    let n = data.n();
    if n < 2 {
        return Err(FgError::Validation("standardization needs n >= 2".into()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for (j, col) in z.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|&x| (x - mean) * (x - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
            match constant {
                ConstantColumns::Reject => return Err(FgError::ConstantColumn(j)),
                ConstantColumns::Drop => {
                    log::warn!("dropping constant covariate column {}", data.names()[j]);
                    dropped.push(j);
                    continue;
                }
            }
        }
        kept.push(j);
        means.push(mean);
        scales.push(sd);
    }
    if kept.is_empty() {
        return Err(FgError::Validation("every covariate column is constant".into()));
    }
    let mut out = Array2::zeros((n, kept.len()));
    for (k, &j) in kept.iter().enumerate() {
        let (m, s) = (means[k], scales[k]);
        out.column_mut(k)
            .iter_mut()
            .zip(z.column(j))
            .for_each(|(o, &x)| *o = (x - m) / s);
    }
    let names = kept.iter().map(|&j| data.names()[j].clone()).collect();
    let std_data = data.with_covariates(out, names)?;
    Ok((
        std_data,
        Standardization {
            kept,
            dropped,
            means,
            scales,
            applied: true,
        },
    ))
}

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub time_col: String,
    pub status_col: String,
    pub id_col: Option<String>,
    pub horizon: Option<f64>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            time_col: "time".into(),
            status_col: "status".into(),
            id_col: None,
            horizon: None,
        }
    }
}

/// Reads a dataset; every column other than time, status and id is a
/// covariate. Rows are numbered from 1 (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CompetingRisksData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<CompetingRisksData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let csv_err = |row: usize, column: &str, e: &dyn fmt::Display| FgError::Csv {
        row,
        column: column.to_string(),
        message: e.to_string(),
    };
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(0, "", &e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let time_idx = find(&schema.time_col)
        .ok_or_else(|| FgError::Schema(format!("missing time column '{}'", schema.time_col)))?;
    let status_idx = find(&schema.status_col).ok_or_else(|| {
        FgError::Schema(format!("missing status column '{}'", schema.status_col))
    })?;
    let id_idx = match &schema.id_col {
        Some(c) => Some(find(c).ok_or_else(|| FgError::Schema(format!("missing id column '{c}'")))?),
        None => None,
    };
    let cov_idx: Vec<usize> = (0..headers.len())
        .filter(|&k| k != time_idx && k != status_idx && Some(k) != id_idx)
        .collect();
    if cov_idx.is_empty() {
        return Err(FgError::Schema("no covariate columns".into()));
    }

    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut ids = Vec::new();
    let mut cov = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_err(row, "", &e))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                row,
                "",
                &format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let field = |k: usize| record[k].trim();
        let number = |k: usize| -> Result<f64> {
            let s = field(k);
            if s.is_empty() {
                return Err(csv_err(row, &headers[k], &"missing value"));
            }
            s.parse::<f64>().map_err(|e| csv_err(row, &headers[k], &e))
        };
        times.push(number(time_idx)?);
        let code: u8 = field(status_idx)
            .parse()
            .map_err(|e| csv_err(row, &headers[status_idx], &e))?;
        if Status::from_code(code).is_none() {
            return Err(csv_err(
                row,
                &headers[status_idx],
                &format!("invalid status code {code} (expected 0, 1 or 2)"),
            ));
        }
        status.push(code);
        if let Some(k) = id_idx {
            ids.push(field(k).to_string());
        }
        for &k in &cov_idx {
            cov.push(number(k)?);
        }
    }
    let n = times.len();
    let covariates = Array2::from_shape_vec((n, cov_idx.len()), cov)
        .map_err(|e| FgError::Dimension(e.to_string()))?;
    let names = cov_idx.iter().map(|&k| headers[k].clone()).collect();
    let mut data =
        CompetingRisksData::new(Array1::from(times), status, covariates, schema.horizon)?
            .with_names(names)?;
    if id_idx.is_some() {
        data = data.with_ids(ids)?;
    }
    Ok(data)
}

pub fn save_csv(data: &CompetingRisksData, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(data, file)
}

/// Writes `[id,]time,status,<covariates>`. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<W: std::io::Write>(data: &CompetingRisksData, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| FgError::Io(std::io::Error::other(e));
    let mut header = Vec::new();
    if data.ids.is_some() {
        header.push("id".to_string());
    }
    header.push("time".into());
    header.push("status".into());
    header.extend(data.names.iter().cloned());
    wtr.write_record(&header).map_err(io)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        rec.clear();
        if let Some(ids) = &data.ids {
            rec.push(ids[i].clone());
        }
        rec.push(format!("{}", data.times[i]));
        rec.push(data.status[i].to_string());
        rec.extend(data.covariates.row(i).iter().map(|z| format!("{z}")));
        wtr.write_record(&rec).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> CompetingRisksData {
        CompetingRisksData::new(
            array![1.0, 2.0, 3.0],
            vec![1, 0, 2],
            array![[1.0, 0.5], [2.0, -0.5], [3.0, 0.0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_passes() {
        assert!(small().validate().is_pass());
        assert_eq!(small().horizon(), 3.0);
    }

    #[test]
    fn invalid_status_is_reported() {
        let d = CompetingRisksData::new(
            array![1.0, 2.0],
            vec![1, 3],
            array![[0.0], [1.0]],
            None,
        )
        .unwrap();
        let report = d.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.to_string().contains("invalid status code")));
    }

    #[test]
    fn no_cause1_events_is_reported() {
        let d = CompetingRisksData::new(array![1.0, 2.0], vec![0, 0], array![[0.0], [1.0]], None)
            .unwrap();
        assert_eq!(d.validate().violations, vec![Violation::NoCause1Events]);
        assert!(d.ensure_fit_ready().is_err());
    }

    #[test]
    fn nan_and_negative_are_reported() {
        let d = CompetingRisksData::new(
            array![-1.0, 2.0],
            vec![1, 0],
            array![[f64::NAN], [1.0]],
            None,
        )
        .unwrap();
        let v = d.validate().violations;
        assert!(v.contains(&Violation::NegativeTime { row: 0, time: -1.0 }));
        assert!(v.contains(&Violation::NonFiniteCovariate { row: 0, column: 0 }));
    }

    #[test]
    fn horizon_censors_administratively() {
        let d = CompetingRisksData::new(
            array![1.0, 5.0],
            vec![1, 1],
            array![[0.0], [1.0]],
            Some(4.0),
        )
        .unwrap();
        assert_eq!(d.times()[1], 4.0);
        assert_eq!(d.status(1), Status::Censored);
    }

    #[test]
    fn standardize_simple_column() {
        let d = CompetingRisksData::new(
            array![1.0, 2.0, 3.0],
            vec![1, 0, 2],
            array![[1.0], [2.0], [3.0]],
            None,
        )
        .unwrap();
        let (s, tr) = standardize(&d, ConstantColumns::Reject).unwrap();
        assert_eq!(s.covariates().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(tr.means, vec![2.0]);
        assert_eq!(tr.scales, vec![1.0]);
    }

    #[test]
    fn constant_column_rejected_or_dropped() {
        let d = CompetingRisksData::new(
            array![1.0, 2.0, 3.0],
            vec![1, 0, 2],
            array![[1.0, 4.0], [2.0, 4.0], [3.0, 4.0]],
            None,
        )
        .unwrap();
        assert!(matches!(
            standardize(&d, ConstantColumns::Reject),
            Err(FgError::ConstantColumn(1))
        ));
        let (s, tr) = standardize(&d, ConstantColumns::Drop).unwrap();
        assert_eq!(s.p(), 1);
        assert_eq!(tr.dropped, vec![1]);
        let back = tr.to_original(array![2.0].view());
        assert_eq!(back.to_vec(), vec![2.0, 0.0]);
    }

    #[test]
    fn csv_parse_and_errors() {
        let text = "time,status,z1,z2\n1.5,1,0.1,0.2\n2.5,0,-1,3\n";
        let d = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!((d.n(), d.p()), (2, 2));
        assert_eq!(d.names(), &["z1".to_string(), "z2".to_string()]);

        let missing = "time,z1\n1,2\n";
        assert!(matches!(
            read_csv(missing.as_bytes(), &CsvSchema::default()),
            Err(FgError::Schema(_))
        ));

        let bad = "time,status,z1\n1,1,0\n2,5,0\n";
        match read_csv(bad.as_bytes(), &CsvSchema::default()) {
            Err(FgError::Csv { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "status");
            }
            other => panic!("unexpected {other:?}"),
        }

        let empty = "time,status,z1\n1,1,\n";
        assert!(matches!(
            read_csv(empty.as_bytes(), &CsvSchema::default()),
            Err(FgError::Csv { row: 1, .. })
        ));
    }
}
