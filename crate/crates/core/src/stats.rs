use std::fmt;

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

/// Summary of per-video feature counts over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub videos: usize,
    pub sum: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub median: f64,
    pub max: usize,
    pub min: usize,
    /// `sum × record bytes / 1024³`.
    pub memory_gb: f64,
}

pub fn dataset_stats(manifest: &DatasetManifest) -> Result<DatasetStats> {
    let counts: Vec<usize> = manifest.videos.iter().map(|v| v.feature_count).collect();
    count_stats(&counts, manifest.layout.record_gb())
}

/// Statistics over raw feature counts, `record_gb` being the size of one
/// stored feature in gigabytes.
pub fn count_stats(counts: &[usize], record_gb: f64) -> Result<DatasetStats> {
    if counts.is_empty() {
        return Err(Error::Empty("manifest has no videos"));
    }
    let n = counts.len();
    let sum: u64 = counts.iter().map(|&c| c as u64).sum();
    let mean = sum as f64 / n as f64;
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    Ok(DatasetStats {
        videos: n,
        sum,
        mean,
        std_dev: var.sqrt(),
        median,
        max: sorted[n - 1],
        min: sorted[0],
        memory_gb: sum as f64 * record_gb,
    })
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "videos\t{}", self.videos)?;
        writeln!(f, "sum\t{}", self.sum)?;
        writeln!(f, "mean\t{:.2}", self.mean)?;
        writeln!(f, "std_dev\t{:.2}", self.std_dev)?;
        writeln!(f, "median\t{}", self.median)?;
        writeln!(f, "max\t{}", self.max)?;
        writeln!(f, "min\t{}", self.min)?;
        write!(f, "memory_gb\t{:.3}", self.memory_gb)
    }
}
