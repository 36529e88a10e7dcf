use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::Relation;

/// One-dimensional summary of a column: exact min/max/distinct count and an
/// equi-width histogram of relative frequencies over `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub min: f64,
    pub max: f64,
    pub distinct_count: usize,
    pub row_count: usize,
    pub histogram: Vec<f64>,
}

impl AttributeStats {
    pub fn from_values(values: &[f64], buckets: usize) -> Result<Self> {
        if buckets == 0 {
            return Err(Error::config("buckets", "bucket count must be at least 1"));
        }
        if values.is_empty() {
            return Ok(Self {
                min: 0.0,
                max: 0.0,
                distinct_count: 0,
                row_count: 0,
                histogram: vec![0.0; buckets],
            });
        }
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let distinct_count = values
            .iter()
            .map(|v| if *v == 0.0 { 0 } else { v.to_bits() })
            .collect::<BTreeSet<_>>()
            .len();
        let mut stats = Self {
            min,
            max,
            distinct_count,
            row_count: values.len(),
            histogram: vec![0.0; buckets],
        };
        let mut counts = vec![0usize; buckets];
        for &v in values {
            counts[stats.bucket_of(v)] += 1;
        }
        let n = values.len() as f64;
        stats.histogram = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok(stats)
    }

    pub fn buckets(&self) -> usize {
        self.histogram.len()
    }

    fn width(&self) -> f64 {
        (self.max - self.min) / self.buckets() as f64
    }

    /// Bucket index for `v`. The maximum lands in the last bucket; a
    /// single-point domain puts everything in bucket 0.
    pub fn bucket_of(&self, v: f64) -> usize {
        let b = self.buckets();
        if self.max <= self.min || v <= self.min {
            return 0;
        }
        let idx = ((v - self.min) / (self.max - self.min) * b as f64).floor();
        (idx as usize).min(b - 1)
    }

    /// Half-open value range `[lo, hi)` of bucket `j` (the last one is closed).
    pub fn bucket_bounds(&self, j: usize) -> (f64, f64) {
        let w = self.width();
        let lo = self.min + j as f64 * w;
        let hi = if j + 1 == self.buckets() {
            self.max
        } else {
            self.min + (j + 1) as f64 * w
        };
        (lo, hi)
    }

    /// `v` mapped into `[0, 1]` relative to this attribute's range.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max <= self.min {
            return if v >= self.max { 1.0 } else { 0.0 };
        }
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Statistics for every attribute of `rel`, keyed by attribute name.
pub fn compute_stats(rel: &Relation, buckets: usize) -> Result<BTreeMap<String, AttributeStats>> {
    rel.columns()
        .iter()
        .map(|c| Ok((c.name.clone(), AttributeStats::from_values(&c.data, buckets)?)))
        .collect()
}
