use serde::{Deserialize, Serialize};

/// `n` evenly spaced points from `a` to `b` inclusive (`[a]` when `n == 1`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|k| if k == n - 1 { b } else { a + h * k as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

/// Location and value of the largest entry of the primary series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub index: usize,
    pub coords: Vec<f64>,
    pub value: f64,
}

/// Values on the Cartesian product of the axes, row-major (first axis slowest).
///
/// The first series is the primary one and defines the optimum. `mask[k]`
/// holds the failure reason for cells that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub series: Vec<Series>,
    pub mask: Vec<Option<String>>,
}

impl SweepResult {
    pub fn new(axes: Vec<Axis>, series: Vec<Series>, mask: Vec<Option<String>>) -> Self {
        let n = axes.iter().map(|a| a.values.len()).product::<usize>();
        debug_assert!(series.iter().all(|s| s.values.len() == n));
        debug_assert_eq!(mask.len(), n);
        Self { axes, series, mask }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Axis coordinates of flat index `k`.
    pub fn coords(&self, mut k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[d] = axis.values[k % n];
            k /= n;
        }
        out
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Largest unmasked primary value, lowest index on ties.
    pub fn optimum(&self) -> Option<Optimum> {
        let primary = self.series.first()?;
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in primary.values.iter().enumerate() {
            if self.mask[k].is_some() || !v.is_finite() {
                continue;
            }
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.map(|(index, value)| Optimum {
            index,
            coords: self.coords(index),
            value,
        })
    }
}
