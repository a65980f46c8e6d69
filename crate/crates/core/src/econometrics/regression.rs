use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fixed_effects::FixedEffects;
use crate::error::{Error, Result};

/// A named column of a [`Table`].
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Cat(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Cat(v) => v.len(),
        }
    }
}

/// Column-oriented data for regressions.
#[derive(Debug, Clone, Default)]
pub struct Table {
    columns: BTreeMap<String, Column>,
    rows: usize,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn insert(&mut self, name: &str, col: Column) -> Result<()> {
        if !self.columns.is_empty() && col.len() != self.rows {
            return Err(Error::Data(format!(
                "column {name} has {} rows, table has {}",
                col.len(),
                self.rows
            )));
        }
        self.rows = col.len();
        self.columns.insert(name.to_string(), col);
        Ok(())
    }

    pub fn push_num(&mut self, name: &str, v: Vec<f64>) -> Result<()> {
        self.insert(name, Column::Num(v))
    }

    pub fn push_cat(&mut self, name: &str, v: Vec<String>) -> Result<()> {
        self.insert(name, Column::Cat(v))
    }

    fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .get(name)
            .ok_or_else(|| Error::Data(format!("unknown column {name}")))
    }

    pub fn num(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Num(v) => Ok(v),
            Column::Cat(_) => Err(Error::Data(format!("column {name} is categorical"))),
        }
    }

    /// Values of a regressor term; `a*b` is the elementwise product.
    pub fn term(&self, term: &str) -> Result<Vec<f64>> {
        let mut out = vec![1.0; self.rows];
        for part in term.split('*') {
            for (o, v) in out.iter_mut().zip(self.num(part.trim())?) {
                *o *= v;
            }
        }
        Ok(out)
    }

    /// Group labels of a fixed-effect or cluster term; `a#b` crosses columns.
    pub fn keys(&self, term: &str) -> Result<Vec<String>> {
        let mut out = vec![String::new(); self.rows];
        for (p, part) in term.split('#').enumerate() {
            let col = self.column(part.trim())?;
            for (k, o) in out.iter_mut().enumerate() {
                if p > 0 {
                    o.push('\u{1f}');
                }
                match col {
                    Column::Num(v) => o.push_str(&v[k].to_string()),
                    Column::Cat(v) => o.push_str(&v[k]),
                }
            }
        }
        Ok(out)
    }
}

/// Linear model with absorbed fixed effects.
///
/// `regressors` are exogenous terms. For 2SLS, `endogenous` lists the
/// instrumented terms and `instruments` the excluded instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSpec {
    pub dependent: String,
    pub regressors: Vec<String>,
    pub endogenous: Vec<String>,
    pub instruments: Vec<String>,
    pub fixed_effects: Vec<String>,
    /// Zero, one or two cluster dimensions.
    pub clusters: Vec<String>,
    pub weights: Option<String>,
    /// Adds a constant when no fixed effects are absorbed.
    pub intercept: bool,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            dependent: String::new(),
            regressors: Vec::new(),
            endogenous: Vec::new(),
            instruments: Vec::new(),
            fixed_effects: Vec::new(),
            clusters: Vec::new(),
            weights: None,
            intercept: true,
        }
    }
}

impl RegressionSpec {
    pub fn new(dependent: &str, regressors: &[&str]) -> Self {
        Self {
            dependent: dependent.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn fe(mut self, dims: &[&str]) -> Self {
        self.fixed_effects = dims.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn cluster(mut self, dims: &[&str]) -> Self {
        self.clusters = dims.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn weighted(mut self, column: &str) -> Self {
        self.weights = Some(column.into());
        self
    }

    pub fn instrument(mut self, endogenous: &[&str], instruments: &[&str]) -> Self {
        self.endogenous = endogenous.iter().map(|s| s.to_string()).collect();
        self.instruments = instruments.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Strength of the excluded instruments for one endogenous regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub endogenous: String,
    /// Robust Wald F on the excluded instruments.
    pub f_stat: f64,
    /// Sanderson–Windmeijer conditional F; equals `f_stat` with one endogenous regressor.
    pub conditional_f: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub r2: f64,
    pub nobs: usize,
    pub dropped_missing: usize,
    pub dropped_singletons: usize,
    /// Degrees of freedom absorbed by the fixed effects.
    pub fe_dof: usize,
    /// Cluster counts per dimension; empty for heteroskedasticity-robust (HC1).
    pub n_clusters: Vec<usize>,
    pub first_stage: Vec<FirstStage>,
}

impl FitResult {
    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("no coefficient named {name}")))
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        Ok(self.coef[self.index(name)?])
    }

    pub fn std_error(&self, name: &str) -> Result<f64> {
        Ok(self.se[self.index(name)?])
    }
}

struct Prepared {
    y: DVector<f64>,
    /// Exogenous columns followed by endogenous ones.
    x: DMatrix<f64>,
    /// Exogenous columns followed by excluded instruments.
    z: Option<DMatrix<f64>>,
    names: Vec<String>,
    n_exog: usize,
    sqrt_w: Vec<f64>,
    clusters: Vec<Vec<usize>>,
    fe_dof: usize,
    dropped_missing: usize,
    dropped_singletons: usize,
}

fn encode(keys: &[String]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let codes = keys
        .iter()
        .map(|k| {
            let next = ids.len();
            *ids.entry(k).or_insert(next)
        })
        .collect();
    (codes, ids.len())
}

/// Rank of the fixed-effect dummy space: exact for one or two dimensions
/// (via connected components), a lower bound beyond.
fn fe_rank(codes: &[(Vec<usize>, usize)]) -> usize {
    match codes {
        [] => 0,
        [(_, l)] => *l,
        [(a, la), (b, lb)] => {
            let mut parent: Vec<usize> = (0..la + lb).collect();
            fn find(p: &mut [usize], mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            for (&i, &j) in a.iter().zip(b) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, la + j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
            let comps = (0..la + lb).filter(|&i| find(&mut parent, i) == i).count();
            la + lb - comps
        }
        many => many.iter().map(|(_, l)| l).sum::<usize>() + 1 - many.len(),
    }
}

fn prepare(spec: &RegressionSpec, data: &Table, iv: bool) -> Result<Prepared> {
    if spec.clusters.len() > 2 {
        return Err(Error::Config("at most two cluster dimensions are supported".into()));
    }
    if iv {
        if spec.endogenous.is_empty() {
            return Err(Error::Config("2SLS needs at least one endogenous regressor".into()));
        }
        if spec.instruments.len() < spec.endogenous.len() {
            return Err(Error::Config(format!(
                "{} excluded instruments for {} endogenous regressors",
                spec.instruments.len(),
                spec.endogenous.len()
            )));
        }
    }
    let n = data.len();
    let y = data.term(&spec.dependent)?;
    let mut exog: Vec<Vec<f64>> = spec.regressors.iter().map(|t| data.term(t)).collect::<Result<_>>()?;
    let mut names: Vec<String> = spec.regressors.clone();
    let endog: Vec<Vec<f64>> = if iv {
        spec.endogenous.iter().map(|t| data.term(t)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let excl: Vec<Vec<f64>> = if iv {
        spec.instruments.iter().map(|t| data.term(t)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let w = match &spec.weights {
        Some(c) => data.num(c)?.to_vec(),
        None => vec![1.0; n],
    };
    let fe_keys: Vec<Vec<String>> = spec.fixed_effects.iter().map(|t| data.keys(t)).collect::<Result<_>>()?;
    let cl_keys: Vec<Vec<String>> = spec.clusters.iter().map(|t| data.keys(t)).collect::<Result<_>>()?;

    let mut rows: Vec<usize> = (0..n)
        .filter(|&k| {
            y[k].is_finite()
                && w[k] > 0.0
                && w[k].is_finite()
                && exog.iter().chain(&endog).chain(&excl).all(|c| c[k].is_finite())
        })
        .collect();
    let dropped_missing = n - rows.len();

    let pick = |v: &[String], rows: &[usize]| rows.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
    let mut dropped_singletons = 0;
    if !fe_keys.is_empty() {
        let sub: Vec<Vec<String>> = fe_keys.iter().map(|v| pick(v, &rows)).collect();
        let rep = FixedEffects::new(&sub)?.singletons();
        dropped_singletons = rep.dropped;
        rows = rep.kept.iter().map(|&k| rows[k]).collect();
    }
    if rows.is_empty() {
        return Err(Error::Data("no usable observations".into()));
    }
    let take = |v: &[f64]| rows.iter().map(|&k| v[k]).collect::<Vec<f64>>();
    let mut y = take(&y);
    for c in exog.iter_mut() {
        *c = take(c);
    }
    let mut endog: Vec<Vec<f64>> = endog.iter().map(|c| take(c)).collect();
    let mut excl: Vec<Vec<f64>> = excl.iter().map(|c| take(c)).collect();
    let w = take(&w);

    let mut fe_dof = 0;
    if !fe_keys.is_empty() {
        let sub: Vec<Vec<String>> = fe_keys.iter().map(|v| pick(v, &rows)).collect();
        let codes: Vec<(Vec<usize>, usize)> = sub.iter().map(|v| encode(v)).collect();
        fe_dof = fe_rank(&codes);
        let mut fe = FixedEffects::new(&sub)?;
        if spec.weights.is_some() {
            fe = fe.with_weights(w.clone())?;
        }
        fe.demean(&mut y)?;
        for c in exog.iter_mut().chain(endog.iter_mut()).chain(excl.iter_mut()) {
            fe.demean(c)?;
        }
    } else if spec.intercept {
        exog.push(vec![1.0; rows.len()]);
        names.push("_cons".into());
    }
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let scale = |c: &mut Vec<f64>| {
        for (v, s) in c.iter_mut().zip(&sqrt_w) {
            *v *= s;
        }
    };
    scale(&mut y);
    exog.iter_mut().chain(endog.iter_mut()).chain(excl.iter_mut()).for_each(scale);

    let n_exog = exog.len();
    names.extend(spec.endogenous.iter().cloned().filter(|_| iv));
    let nr = rows.len();
    let x_cols: Vec<&Vec<f64>> = exog.iter().chain(&endog).collect();
    if x_cols.is_empty() {
        return Err(Error::Config("model has no regressors".into()));
    }
    let x = DMatrix::from_fn(nr, x_cols.len(), |i, j| x_cols[j][i]);
    let z = iv.then(|| {
        let z_cols: Vec<&Vec<f64>> = exog.iter().chain(&excl).collect();
        DMatrix::from_fn(nr, z_cols.len(), |i, j| z_cols[j][i])
    });
    let clusters = cl_keys.iter().map(|v| encode(&pick(v, &rows)).0).collect();
    Ok(Prepared {
        y: DVector::from_vec(y),
        x,
        z,
        names,
        n_exog,
        sqrt_w,
        clusters,
        fe_dof,
        dropped_missing,
        dropped_singletons,
    })
}

/// Inverse of a symmetric positive definite cross-product matrix, with a
/// scale-free rank check that names the offending columns.
fn spd_inverse(a: &DMatrix<f64>, names: &[String], what: &str) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
    if let Some(i) = d.iter().position(|v| !(*v > 1e-300)) {
        return Err(Error::RankDeficient(format!(
            "{what}: column {} has no variation after absorbing fixed effects",
            names.get(i).map_or("?", String::as_str)
        )));
    }
    let c = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = c.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo > 1e-12 * hi) {
        return Err(Error::RankDeficient(format!(
            "{what}: columns {names:?} are collinear (condition {:.3e})",
            hi / lo.max(0.0)
        )));
    }
    let inv_c = c
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(format!("{what}: cross-product is not positive definite")))?
        .inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| inv_c[(i, j)] / (d[i] * d[j])))
}

struct LinearFit {
    beta: DVector<f64>,
    resid: DVector<f64>,
    bread: DMatrix<f64>,
    /// Regressors used in the score (projected ones for 2SLS).
    xs: DMatrix<f64>,
}

fn linear_fit(y: &DVector<f64>, x: &DMatrix<f64>, z: Option<&DMatrix<f64>>, names: &[String]) -> Result<LinearFit> {
    let xs = match z {
        None => x.clone(),
        Some(z) => {
            let zz = spd_inverse(&(z.transpose() * z), names, "instruments")?;
            z * (zz * (z.transpose() * x))
        }
    };
    let bread = spd_inverse(&(xs.transpose() * &xs), names, "regressors")?;
    let beta = &bread * (xs.transpose() * y);
    let resid = y - x * &beta;
    Ok(LinearFit { beta, resid, bread, xs })
}

fn cluster_meat(scores: &DMatrix<f64>, groups: &[usize]) -> (DMatrix<f64>, usize) {
    let k = scores.ncols();
    let g = groups.iter().max().map_or(0, |m| m + 1);
    let mut sums = DMatrix::<f64>::zeros(g, k);
    for (i, &gi) in groups.iter().enumerate() {
        for j in 0..k {
            sums[(gi, j)] += scores[(i, j)];
        }
    }
    (sums.transpose() * &sums, g)
}

/// Sandwich covariance: HC1 without clusters; one- or two-way
/// cluster-robust otherwise, with G/(G−1)·(N−1)/(N−K) per component and
/// negative eigenvalues of the two-way combination truncated at zero.
fn robust_cov(fit: &LinearFit, clusters: &[Vec<usize>], k_dof: usize) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = fit.resid.len();
    if n <= k_dof {
        return Err(Error::Data(format!("{n} observations for {k_dof} parameters")));
    }
    let mut scores = fit.xs.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= fit.resid[i];
    }
    let sandwich = |meat: &DMatrix<f64>| &fit.bread * meat * &fit.bread;
    let (nf, kf) = (n as f64, k_dof as f64);
    if clusters.is_empty() {
        let meat = scores.transpose() * &scores;
        return Ok((sandwich(&meat) * (nf / (nf - kf)), Vec::new()));
    }
    let one_way = |groups: &[usize]| -> Result<(DMatrix<f64>, usize)> {
        let (meat, g) = cluster_meat(&scores, groups);
        if g < 2 {
            return Err(Error::Data(format!("{g} cluster(s); at least two are required")));
        }
        let gf = g as f64;
        Ok((sandwich(&meat) * (gf / (gf - 1.0) * (nf - 1.0) / (nf - kf)), g))
    };
    let (v1, g1) = one_way(&clusters[0])?;
    if clusters.len() == 1 {
        return Ok((v1, vec![g1]));
    }
    let (v2, g2) = one_way(&clusters[1])?;
    let pairs: Vec<String> = clusters[0]
        .iter()
        .zip(&clusters[1])
        .map(|(a, b)| format!("{a}:{b}"))
        .collect();
    let (v12, _) = one_way(&encode(&pairs).0)?;
    let v = v1 + v2 - v12;
    let v = (&v + v.transpose()) * 0.5;
    let eig = v.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|e| e.max(0.0));
    let v = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok((v, vec![g1, g2]))
}

fn r_squared(y: &DVector<f64>, resid: &DVector<f64>, sqrt_w: &[f64]) -> f64 {
    let wsum: f64 = sqrt_w.iter().map(|s| s * s).sum();
    let mean = y.iter().zip(sqrt_w).map(|(v, s)| v * s).sum::<f64>() / wsum;
    let tss: f64 = y.iter().zip(sqrt_w).map(|(v, s)| (v - s * mean).powi(2)).sum();
    1.0 - resid.norm_squared() / tss
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Robust Wald F for the trailing `q` coefficients of a regression of `v` on `z`.
fn excluded_f(v: &DVector<f64>, z: &DMatrix<f64>, q: usize, df: usize, prep: &Prepared) -> Result<f64> {
    let names: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    let fit = linear_fit(v, z, None, &names)?;
    let (cov, _) = robust_cov(&fit, &prep.clusters, z.ncols() + prep.fe_dof)?;
    let k = z.ncols();
    let b = fit.beta.rows(k - q, q).into_owned();
    let vq = cov.view((k - q, k - q), (q, q)).into_owned();
    Ok(match vq.try_inverse() {
        Some(inv) => (b.transpose() * inv * &b)[(0, 0)] / df as f64,
        None => f64::NAN,
    })
}

fn first_stages(spec: &RegressionSpec, prep: &Prepared) -> Result<Vec<FirstStage>> {
    let z = prep.z.as_ref().expect("2SLS has instruments");
    let q = spec.instruments.len();
    let ke = spec.endogenous.len();
    let mut out = Vec::with_capacity(ke);
    for e in 0..ke {
        let col = prep.n_exog + e;
        let v = prep.x.column(col).into_owned();
        let f_stat = excluded_f(&v, z, q, q, prep)?;
        let conditional_f = if ke == 1 {
            f_stat
        } else {
            // Partial out the other endogenous regressors by 2SLS, then test
            // the residual on the instruments with q − (ke − 1) numerator df.
            let others: Vec<usize> = (0..prep.x.ncols()).filter(|&c| c != col).collect();
            let xo = prep.x.select_columns(&others);
            let names: Vec<String> = others.iter().map(|&c| prep.names[c].clone()).collect();
            let aux = linear_fit(&v, &xo, Some(z), &names)?;
            excluded_f(&aux.resid, z, q, q + 1 - ke, prep)?
        };
        out.push(FirstStage {
            endogenous: spec.endogenous[e].clone(),
            f_stat,
            conditional_f,
            df: q,
        });
    }
    Ok(out)
}

fn finish(spec: &RegressionSpec, prep: Prepared, iv: bool) -> Result<FitResult> {
    let fit = linear_fit(&prep.y, &prep.x, prep.z.as_ref(), &prep.names)?;
    let (cov, n_clusters) = robust_cov(&fit, &prep.clusters, prep.x.ncols() + prep.fe_dof)?;
    let first_stage = if iv { first_stages(spec, &prep)? } else { Vec::new() };
    Ok(FitResult {
        coef: fit.beta.iter().copied().collect(),
        se: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        cov: to_rows(&cov),
        r2: r_squared(&prep.y, &fit.resid, &prep.sqrt_w),
        nobs: prep.y.len(),
        names: prep.names,
        dropped_missing: prep.dropped_missing,
        dropped_singletons: prep.dropped_singletons,
        fe_dof: prep.fe_dof,
        n_clusters,
        first_stage,
    })
}

/// Least squares with absorbed fixed effects. Rows with non-finite values
/// and singleton fixed-effect groups are dropped and counted.
pub fn ols(spec: &RegressionSpec, data: &Table) -> Result<FitResult> {
    let prep = prepare(spec, data, false)?;
    finish(spec, prep, false)
}

/// Two-stage least squares with absorbed fixed effects.
pub fn tsls(spec: &RegressionSpec, data: &Table) -> Result<FitResult> {
    let prep = prepare(spec, data, true)?;
    finish(spec, prep, true)
}
