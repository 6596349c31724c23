//! Containers for Monte Carlo output.

use std::fmt::Write as _;
use std::path::Path;

use crate::inference::InferenceError;

/// A matrix of posterior draws together with the chain metadata needed
/// to reproduce and assess them.
///
/// Rows are draws, columns are named quantities. Only finite values are
/// accepted, so every statistic derived from a stored set is finite.
#[derive(Debug, Clone)]
pub struct SampleSet {
    names: Vec<String>,
    /// Row-major storage, `names.len()` entries per draw.
    values: Vec<f64>,
    seed: u64,
    burn_in: usize,
    thin: usize,
    acceptance_rate: Option<f64>,
}

impl SampleSet {
    /// Creates an empty set for the given column names.
    pub fn new(names: Vec<String>, seed: u64) -> Self {
        SampleSet {
            names,
            values: Vec::new(),
            seed,
            burn_in: 0,
            thin: 1,
            acceptance_rate: None,
        }
    }

    /// Records how many initial iterations were discarded and the
    /// thinning stride, for the record only; the stored rows are the
    /// retained draws.
    pub fn set_chain_info(&mut self, burn_in: usize, thin: usize) {
        self.burn_in = burn_in;
        self.thin = thin.max(1);
    }

    pub fn set_acceptance_rate(&mut self, rate: f64) {
        self.acceptance_rate = Some(rate);
    }

    /// Appends one draw. Fails if the width is wrong or any value is
    /// not finite.
    pub fn push_row(&mut self, row: &[f64]) -> Result<(), InferenceError> {
        if row.len() != self.names.len() {
            return Err(InferenceError::DimensionMismatch(format!(
                "row has {} values for {} columns",
                row.len(),
                self.names.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::NonFiniteDensity(
                "sample row contains a non-finite value".into(),
            ));
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Number of stored draws.
    pub fn len(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.values.len() / self.names.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of columns.
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_rate
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Index of a named column.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Iterator over one column.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.dim();
        self.values.iter().skip(j).step_by(d).copied()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let n = self.len();
        if n == 0 {
            return f64::NAN;
        }
        self.column(j).sum::<f64>() / n as f64
    }

    /// Unbiased sample variance of a column.
    pub fn variance(&self, j: usize) -> f64 {
        let n = self.len();
        if n < 2 {
            return f64::NAN;
        }
        let mean = self.mean(j);
        let ss: f64 = self.column(j).map(|v| (v - mean) * (v - mean)).sum();
        ss / (n - 1) as f64
    }

    /// Monte Carlo standard error of the column mean, estimated by the
    /// batch-means method with roughly sqrt(n) batches. Accounts for
    /// autocorrelation, unlike sd/sqrt(n).
    pub fn mcse(&self, j: usize) -> f64 {
        let n = self.len();
        if n < 4 {
            return f64::NAN;
        }
        let batches = (n as f64).sqrt().floor() as usize;
        let size = n / batches;
        let used = batches * size;
        let col: Vec<f64> = self.column(j).take(used).collect();
        let grand = col.iter().sum::<f64>() / used as f64;
        let mut ss = 0.0;
        for b in 0..batches {
            let m = col[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64;
            ss += (m - grand) * (m - grand);
        }
        let var_of_mean = size as f64 * ss / ((batches - 1) as f64 * used as f64);
        var_of_mean.sqrt()
    }

    /// Renders the draws as CSV with a header row of column names.
    /// Formatting is locale-independent, so equal sets produce
    /// byte-identical output.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.names.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let row = self.row(i);
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv_string())
    }
}
