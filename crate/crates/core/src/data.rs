//! Grouped concentration measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day of the input (engraftment) measurement.
pub const INPUT_DAY: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: f64,
    pub value: f64,
    pub mouse_id: String,
    pub sgrna_id: Option<String>,
}

impl Record {
    pub fn new(time: f64, value: f64, mouse_id: impl Into<String>) -> Self {
        Self {
            time,
            value,
            mouse_id: mouse_id.into(),
            sgrna_id: None,
        }
    }

    pub fn with_sgrna(mut self, sgrna: impl Into<String>) -> Self {
        self.sgrna_id = Some(sgrna.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub input_day: f64,
    pub output_days: Vec<f64>,
}

/// A set of measurements `y_i` at days `t_i`, with the paired mouse labels
/// needed by the t-test and the per-day strata used by the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    design: Design,
    // Derived, kept in sync with `records`.
    distinct_times: Vec<f64>,
    time_index: Vec<usize>,
    log_values: Vec<f64>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !(r.time.is_finite() && r.time >= 0.0) {
                return Err(Error::Validation(format!(
                    "record {i}: time must be a finite day >= 0, got {}",
                    r.time
                )));
            }
            if !(r.value.is_finite() && r.value > 0.0) {
                return Err(Error::Validation(format!(
                    "record {i}: value must be finite and > 0, got {}",
                    r.value
                )));
            }
        }
        let mut distinct_times: Vec<f64> = records.iter().map(|r| r.time).collect();
        distinct_times.sort_by(f64::total_cmp);
        distinct_times.dedup();
        let time_index = records
            .iter()
            .map(|r| {
                distinct_times
                    .binary_search_by(|t| t.total_cmp(&r.time))
                    .expect("time present")
            })
            .collect();
        let log_values = records.iter().map(|r| r.value.ln()).collect();
        let design = Design {
            input_day: INPUT_DAY,
            output_days: distinct_times
                .iter()
                .copied()
                .filter(|&t| t != INPUT_DAY)
                .collect(),
        };
        Ok(Self {
            records,
            design,
            distinct_times,
            time_index,
            log_values,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn distinct_times(&self) -> &[f64] {
        &self.distinct_times
    }

    /// Index into [`Dataset::distinct_times`] for each record.
    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.value)
    }

    /// Record indices grouped by measurement day, in day order.
    pub fn strata(&self) -> Vec<(f64, Vec<usize>)> {
        let mut groups: Vec<(f64, Vec<usize>)> = self
            .distinct_times
            .iter()
            .map(|&t| (t, Vec::new()))
            .collect();
        for (i, &ti) in self.time_index.iter().enumerate() {
            groups[ti].1.push(i);
        }
        groups
    }

    pub fn count_at(&self, day: f64) -> usize {
        self.records.iter().filter(|r| r.time == day).count()
    }

    pub fn mean_at(&self, day: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.time == day)
            .map(|r| r.value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Check that each mouse has exactly one input record and at most one
    /// output record.
    pub fn validate_pairing(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = seen.entry(r.mouse_id.as_str()).or_default();
            if r.time == INPUT_DAY {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        for (mouse, (inputs, outputs)) in seen {
            if inputs != 1 {
                return Err(Error::Validation(format!(
                    "mouse {mouse} has {inputs} input records, expected exactly 1"
                )));
            }
            if outputs > 1 {
                return Err(Error::Validation(format!(
                    "mouse {mouse} has {outputs} output records, expected at most 1"
                )));
            }
        }
        Ok(())
    }

    /// `(mouse, input value, output day, output value)` for every mouse with
    /// both an input and an output record.
    pub fn pairs(&self) -> Vec<Pair> {
        let mut by_mouse: BTreeMap<&str, (Option<f64>, Option<(f64, f64)>)> = BTreeMap::new();
        for r in &self.records {
            let e = by_mouse.entry(r.mouse_id.as_str()).or_default();
            if r.time == INPUT_DAY {
                e.0 = Some(r.value);
            } else {
                e.1 = Some((r.time, r.value));
            }
        }
        by_mouse
            .into_iter()
            .filter_map(|(m, (input, out))| {
                let (day, output) = out?;
                Some(Pair {
                    mouse_id: m.to_string(),
                    input: input?,
                    output_day: day,
                    output,
                })
            })
            .collect()
    }

    /// New dataset built from a subset (or multiset) of record indices.
    pub fn resampled(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub mouse_id: String,
    pub input: f64,
    pub output_day: f64,
    pub output: f64,
}
