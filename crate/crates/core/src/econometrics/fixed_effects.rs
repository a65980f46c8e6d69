use std::collections::HashMap;

use crate::error::{Error, Result};

/// Group structure of one or more fixed-effect dimensions over a sample.
#[derive(Debug, Clone)]
pub struct FixedEffects {
    /// Group index of every observation, per dimension.
    groups: Vec<Vec<usize>>,
    n_groups: Vec<usize>,
    weights: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
}

/// Rows retained after iteratively dropping singleton groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingletonReport {
    pub kept: Vec<usize>,
    pub dropped: usize,
}

fn encode<K: std::hash::Hash + Eq + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<K, usize> = HashMap::new();
    let codes = keys
        .iter()
        .map(|k| {
            let next = ids.len();
            *ids.entry(k.clone()).or_insert(next)
        })
        .collect();
    (codes, ids.len())
}

impl FixedEffects {
    /// One key vector per dimension, all of the same length.
    pub fn new<K: std::hash::Hash + Eq + Clone>(dims: &[Vec<K>]) -> Result<Self> {
        let n = dims.first().map_or(0, Vec::len);
        if dims.iter().any(|d| d.len() != n) {
            return Err(Error::Data("fixed-effect dimensions have different lengths".into()));
        }
        let (groups, n_groups) = dims.iter().map(|d| encode(d)).unzip();
        Ok(Self {
            groups,
            n_groups,
            weights: None,
            tol: 1e-12,
            max_iter: 100_000,
        })
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.len() || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Data("weights must be positive and match the sample".into()));
        }
        self.weights = Some(w);
        Ok(self)
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }

    pub fn len(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.groups.len()
    }

    /// Levels per dimension.
    pub fn levels(&self) -> &[usize] {
        &self.n_groups
    }

    /// Rows that survive repeated removal of observations alone in a group.
    pub fn singletons(&self) -> SingletonReport {
        let n = self.len();
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for (g, &ng) in self.groups.iter().zip(&self.n_groups) {
                let mut count = vec![0usize; ng];
                for k in (0..n).filter(|&k| alive[k]) {
                    count[g[k]] += 1;
                }
                for k in 0..n {
                    if alive[k] && count[g[k]] == 1 {
                        alive[k] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&k| alive[k]).collect();
        SingletonReport {
            dropped: n - kept.len(),
            kept,
        }
    }

    /// Restrict to a subset of rows, re-encoding groups.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let (groups, n_groups) = self
            .groups
            .iter()
            .map(|g| encode(&rows.iter().map(|&k| g[k]).collect::<Vec<_>>()))
            .unzip();
        Self {
            groups,
            n_groups,
            weights: self.weights.as_ref().map(|w| rows.iter().map(|&k| w[k]).collect()),
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    fn sweep_dim(&self, d: usize, v: &mut [f64], sums: &mut Vec<f64>, mass: &mut Vec<f64>) -> f64 {
        let g = &self.groups[d];
        sums.clear();
        sums.resize(self.n_groups[d], 0.0);
        mass.clear();
        mass.resize(self.n_groups[d], 0.0);
        match &self.weights {
            Some(w) => {
                for k in 0..v.len() {
                    sums[g[k]] += w[k] * v[k];
                    mass[g[k]] += w[k];
                }
            }
            None => {
                for k in 0..v.len() {
                    sums[g[k]] += v[k];
                    mass[g[k]] += 1.0;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (s, m) in sums.iter_mut().zip(mass.iter()) {
            *s /= m;
            worst = worst.max(s.abs());
        }
        for k in 0..v.len() {
            v[k] -= sums[g[k]];
        }
        worst
    }

    /// Remove group means by alternating projections until every group mean
    /// is below tolerance (relative to the largest input magnitude when that
    /// exceeds one). Returns the number of sweeps.
    pub fn demean(&self, v: &mut [f64]) -> Result<usize> {
        if v.len() != self.len() {
            return Err(Error::Data("vector length does not match the fixed-effect sample".into()));
        }
        if self.groups.is_empty() {
            return Ok(0);
        }
        let (mut sums, mut mass) = (Vec::new(), Vec::new());
        if self.groups.len() == 1 {
            self.sweep_dim(0, v, &mut sums, &mut mass);
            return Ok(1);
        }
        let threshold = self.tol * v.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for iter in 1..=self.max_iter {
            for d in 0..self.groups.len() {
                self.sweep_dim(d, v, &mut sums, &mut mass);
            }
            let mut worst: f64 = 0.0;
            for d in 0..self.groups.len() {
                worst = worst.max(self.group_mean_max(d, v, &mut sums, &mut mass));
            }
            if worst <= threshold {
                return Ok(iter);
            }
            if iter == self.max_iter {
                return Err(Error::NoConvergence {
                    what: "fixed-effect alternating projections".into(),
                    iterations: iter,
                    residual: worst,
                });
            }
        }
        unreachable!()
    }

    fn group_mean_max(&self, d: usize, v: &[f64], sums: &mut Vec<f64>, mass: &mut Vec<f64>) -> f64 {
        let g = &self.groups[d];
        sums.clear();
        sums.resize(self.n_groups[d], 0.0);
        mass.clear();
        mass.resize(self.n_groups[d], 0.0);
        for k in 0..v.len() {
            let w = self.weights.as_ref().map_or(1.0, |w| w[k]);
            sums[g[k]] += w * v[k];
            mass[g[k]] += w;
        }
        sums.iter().zip(mass.iter()).fold(0.0f64, |a, (s, m)| a.max((s / m).abs()))
    }
}

/// Demean every column in place; returns the largest sweep count used.
pub fn within_transform(columns: &mut [Vec<f64>], fe: &FixedEffects) -> Result<usize> {
    let mut most = 0;
    for c in columns.iter_mut() {
        most = most.max(fe.demean(c)?);
    }
    Ok(most)
}
