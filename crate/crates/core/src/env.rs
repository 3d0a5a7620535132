//! The task environment: truncated-Gaussian task means, per-task Gaussian
//! datasets, support/query splits and minibatch draws.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{arg, Error, Result};
use crate::rng::RngStream;

/// A data point.
pub type Point = Vec<f64>;

/// Box-truncated isotropic Gaussian over task means, plus the isotropic
/// per-task data variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub env_mean: Vec<f64>,
    pub env_var: f64,
    pub trunc_lo: Vec<f64>,
    pub trunc_hi: Vec<f64>,
    pub task_var: f64,
}

impl EnvironmentSpec {
    /// `N((-4,-4), 5 I)` truncated to `[-12, 4]^2`, task variance 0.1.
    pub fn synthetic() -> Self {
        Self {
            env_mean: vec![-4.0, -4.0],
            env_var: 5.0,
            trunc_lo: vec![-12.0, -12.0],
            trunc_hi: vec![4.0, 4.0],
            task_var: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.env_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Config("environment dimension must be >= 1".into()));
        }
        if self.trunc_lo.len() != d || self.trunc_hi.len() != d {
            return Err(Error::Config(format!(
                "truncation bounds must have length {d}"
            )));
        }
        if !(self.env_var > 0.0 && self.env_var.is_finite()) {
            return Err(Error::Config("env_var must be positive".into()));
        }
        if !(self.task_var >= 0.0 && self.task_var.is_finite()) {
            return Err(Error::Config("task_var must be non-negative".into()));
        }
        for i in 0..d {
            let (lo, hi, mu) = (self.trunc_lo[i], self.trunc_hi[i], self.env_mean[i]);
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "trunc_lo[{i}] = {lo} must be < trunc_hi[{i}] = {hi}"
                )));
            }
            if !(lo <= mu && mu <= hi) {
                return Err(Error::Config(format!(
                    "env_mean[{i}] = {mu} lies outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Largest squared norm of a point in the truncation box.
    pub fn max_sq_norm(&self) -> f64 {
        self.trunc_lo
            .iter()
            .zip(&self.trunc_hi)
            .map(|(lo, hi)| (lo * lo).max(hi * hi))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub mu: Vec<f64>,
}

/// One task's samples and its support (`tr`) / query (`va`) split.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub samples: Vec<Point>,
    pub tr: Vec<usize>,
    pub va: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Tr,
    Va,
    Union,
}

impl TaskDataset {
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    /// Indices of `source`. The union lists support indices first, then
    /// query indices, so that with an empty query split it is identical to
    /// the support split element for element.
    pub fn indices(&self, source: Source) -> Vec<usize> {
        match source {
            Source::Tr => self.tr.clone(),
            Source::Va => self.va.clone(),
            Source::Union => self.tr.iter().chain(&self.va).copied().collect(),
        }
    }

    pub fn source_len(&self, source: Source) -> usize {
        match source {
            Source::Tr => self.tr.len(),
            Source::Va => self.va.len(),
            Source::Union => self.tr.len() + self.va.len(),
        }
    }

    pub fn points(&self, indices: &[usize]) -> Vec<&[f64]> {
        indices
            .iter()
            .map(|&i| self.samples[i].as_slice())
            .collect()
    }

    pub fn source_points(&self, source: Source) -> Vec<&[f64]> {
        self.points(&self.indices(source))
    }
}

/// Box mass below which a coordinate is sampled by inverse CDF instead of
/// rejection.
const REJECTION_MIN_MASS: f64 = 1e-3;
const MAX_REJECTIONS: usize = 100_000;

fn sample_truncated_coord(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    // work in the lower tail where the CDF keeps relative precision
    let flip = a > 0.0;
    let (a, b) = if flip { (-b, -a) } else { (a, b) };
    let (pa, pb) = (std_normal.cdf(a), std_normal.cdf(b));
    let mass = pb - pa;
    if !(mass > 0.0) {
        return Err(Error::Config(format!(
            "truncation box [{lo}, {hi}] carries no numerical mass under N({mean}, {sd}^2)"
        )));
    }
    if mass >= REJECTION_MIN_MASS {
        for _ in 0..MAX_REJECTIONS {
            let x = mean + sd * rng.normal();
            if lo <= x && x <= hi {
                return Ok(x);
            }
        }
        return Err(Error::Config(format!(
            "rejection sampling on [{lo}, {hi}] did not accept within {MAX_REJECTIONS} draws"
        )));
    }
    let u = pa + rng.uniform() * mass;
    let z = std_normal
        .inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0))
        .clamp(a, b);
    let z = if flip { -z } else { z };
    Ok((mean + sd * z).clamp(lo, hi))
}

/// Draws a task mean from the truncated environment Gaussian.
///
/// An isotropic Gaussian restricted to a box factorises over coordinates, so
/// each coordinate is drawn independently: by rejection when its interval
/// holds a reasonable share of the mass, by inverse CDF when it does not.
pub fn sample_task(env: &EnvironmentSpec, rng: &mut RngStream) -> Result<TaskSpec> {
    env.validate()?;
    let sd = env.env_var.sqrt();
    let mu = (0..env.dim())
        .map(|i| sample_truncated_coord(env.env_mean[i], sd, env.trunc_lo[i], env.trunc_hi[i], rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSpec { mu })
}

/// Draws `m` points from `N(mu, task_var I)` and splits them uniformly into
/// `m_tr` support and `m - m_tr` query points.
pub fn sample_dataset(
    task: &TaskSpec,
    env: &EnvironmentSpec,
    m: usize,
    m_tr: usize,
    rng: &mut RngStream,
) -> Result<TaskDataset> {
    if m == 0 {
        return Err(arg("dataset size m must be >= 1"));
    }
    if m_tr > m {
        return Err(arg(format!("m_tr ({m_tr}) exceeds m ({m})")));
    }
    if task.mu.len() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: task.mu.len(),
        });
    }
    let sd = env.task_var.sqrt();
    let samples: Vec<Point> = (0..m)
        .map(|_| task.mu.iter().map(|mu| mu + sd * rng.normal()).collect())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut tr = order[..m_tr].to_vec();
    let mut va = order[m_tr..].to_vec();
    tr.sort_unstable();
    va.sort_unstable();
    Ok(TaskDataset { samples, tr, va })
}

/// Uniform subset of `b` indices from `source` without replacement;
/// `b = 0` returns the whole source.
pub fn sample_minibatch(
    ds: &TaskDataset,
    source: Source,
    b: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let all = ds.indices(source);
    if b == 0 {
        return Ok(all);
    }
    if b > all.len() {
        return Err(arg(format!(
            "minibatch size {b} exceeds {source:?} size {}",
            all.len()
        )));
    }
    let mut picked = rand::seq::index::sample(rng, all.len(), b).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|p| all[p]).collect())
}

/// Writes datasets as `task_id,split,x0,..,x{d-1}` rows.
pub fn write_datasets_csv<W: Write>(w: W, datasets: &[TaskDataset]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let dim = datasets
        .iter()
        .flat_map(|d| d.samples.first())
        .map(|p| p.len())
        .next()
        .unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["task_id".to_string(), "split".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    out.write_record(&header).map_err(io)?;
    for (id, ds) in datasets.iter().enumerate() {
        for (tag, idx) in [("tr", &ds.tr), ("va", &ds.va)] {
            for &i in idx {
                let mut row = vec![id.to_string(), tag.to_string()];
                row.extend(ds.samples[i].iter().map(|v| v.to_string()));
                out.write_record(&row).map_err(io)?;
            }
        }
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Reads datasets written by [`write_datasets_csv`]. Samples are stored in
/// row order, so support points precede query points within each task.
pub fn read_datasets_csv<R: Read>(r: R) -> Result<Vec<TaskDataset>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<TaskDataset> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let bad = |what: &str| Error::Io(format!("row {}: {what}", line + 2));
        let id: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad task_id"))?;
        let tag = rec.get(1).ok_or_else(|| bad("missing split"))?;
        let point: Point = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<_>>()?;
        while out.len() <= id {
            out.push(TaskDataset {
                samples: Vec::new(),
                tr: Vec::new(),
                va: Vec::new(),
            });
        }
        let ds = &mut out[id];
        let idx = ds.samples.len();
        ds.samples.push(point);
        match tag {
            "tr" => ds.tr.push(idx),
            "va" => ds.va.push(idx),
            other => return Err(bad(&format!("unknown split tag {other:?}"))),
        }
    }
    Ok(out)
}
