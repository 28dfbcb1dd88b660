//! Snapshot counts `N_k` = number of nodes with at least `k` children.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub n_nodes: u64,
    /// `N_0..=N_maxdeg`
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_stamp: Option<f64>,
}

impl DegreeHistogram {
    /// Builds `N_k` from per-degree counts `count(d)` (exact degrees).
    pub fn from_degree_counts(per_degree: &[u64]) -> Self {
        let mut counts = per_degree.to_vec();
        for d in (0..counts.len().saturating_sub(1)).rev() {
            counts[d] += counts[d + 1];
        }
        let n_nodes = counts.first().copied().unwrap_or(0);
        Self {
            n_nodes,
            counts,
            time_stamp: None,
        }
    }

    /// Builds the histogram of a tree given each node's out-degree.
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>) -> Self {
        let mut per_degree: Vec<u64> = Vec::new();
        for d in degrees {
            if per_degree.len() <= d {
                per_degree.resize(d + 1, 0);
            }
            per_degree[d] += 1;
        }
        Self::from_degree_counts(&per_degree)
    }

    /// `N_k`, zero past the maximum degree.
    pub fn at_least(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn ratio(&self, k: usize) -> f64 {
        self.at_least(k) as f64 / self.n_nodes as f64
    }

    pub fn max_degree(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    /// Checks `N_0 = n`, monotonicity and the edge identity `Σ_{k≥1} N_k = n - 1`.
    pub fn check(&self) -> Result<()> {
        if self.at_least(0) != self.n_nodes {
            return Err(Error::Inconsistent(format!(
                "N_0={} differs from n={}",
                self.at_least(0),
                self.n_nodes
            )));
        }
        if self.counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Inconsistent("N_k is not nonincreasing".into()));
        }
        let edges: u64 = self.counts.iter().skip(1).sum();
        if edges + 1 != self.n_nodes {
            return Err(Error::Inconsistent(format!(
                "sum of N_k for k>=1 is {edges}, expected {}",
                self.n_nodes - 1
            )));
        }
        Ok(())
    }

    /// CSV with header `k,N_k`, one row per `k` up to the maximum degree.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "N_k"])?;
        for (k, n) in self.counts.iter().enumerate() {
            w.write_record([k.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["k", "N_k"] {
            return Err(Error::InvalidInput(format!(
                "histogram header must be k,N_k, got {:?}",
                headers
            )));
        }
        let mut counts = Vec::new();
        for (row, rec) in r.deserialize::<(usize, u64)>().enumerate() {
            let (k, n) = rec?;
            if k != row {
                return Err(Error::InvalidInput(format!(
                    "histogram row {row} has k={k}"
                )));
            }
            counts.push(n);
        }
        let hist = Self {
            n_nodes: counts.first().copied().unwrap_or(0),
            counts,
            time_stamp: None,
        };
        hist.check()?;
        Ok(hist)
    }
}
