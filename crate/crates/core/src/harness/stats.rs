//! Fitness functions, score buckets and significance testing.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Variant;
use crate::error::{Error, Result};

/// Mean of the per-frame reconstruction errors of an episode's decision
/// frames; zero for an empty episode.
pub fn novelty_fitness(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Mean score, or for the consistency-rewarding variant
/// `5·mean/3 − std_dev`.
pub fn survival_fitness(scores: &[f64], variant: Variant) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::config("survival fitness needs at least one score"));
    }
    let m = mean(scores);
    Ok(match variant {
        Variant::E => 5.0 * m / 3.0 - std_dev(scores),
        _ => m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bucket {
    Solved,
    Good,
    Mediocre,
    Bad,
}

/// Solved is exactly 2000; Good `[1000, 2000)`; Mediocre `[500, 1000)`;
/// Bad `[0, 500)`.
pub fn bucket(score: u32) -> Result<Bucket> {
    Ok(match score {
        2000 => Bucket::Solved,
        1000..=1999 => Bucket::Good,
        500..=999 => Bucket::Mediocre,
        0..=499 => Bucket::Bad,
        _ => return Err(Error::config(format!("score {score} outside [0, 2000]"))),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub solved: usize,
    pub good: usize,
    pub mediocre: usize,
    pub bad: usize,
}

impl EvalSummary {
    pub fn from_scores(scores: &[u32]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::config("evaluation needs at least one episode"));
        }
        let values: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let mut summary = Self {
            episodes: scores.len(),
            mean: mean(&values),
            std_dev: std_dev(&values),
            solved: 0,
            good: 0,
            mediocre: 0,
            bad: 0,
        };
        for &s in scores {
            match bucket(s)? {
                Bucket::Solved => summary.solved += 1,
                Bucket::Good => summary.good += 1,
                Bucket::Mediocre => summary.mediocre += 1,
                Bucket::Bad => summary.bad += 1,
            }
        }
        Ok(summary)
    }

    pub fn csv_row(&self, network: &str) -> String {
        format!(
            "{network},{:.2},{:.2},{},{},{},{}",
            self.mean, self.std_dev, self.solved, self.good, self.mediocre, self.bad
        )
    }
}

pub const CSV_HEADER: &str = "Network,Mean,std dev,Solved,Good,Mediocre,Bad";

/// Table with the header row followed by one row per named summary.
pub fn summary_csv(rows: &[(String, EvalSummary)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (name, s) in rows {
        out.push_str(&s.csv_row(name));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// One-sided p-value for the first sample tending to be larger.
    pub p_value: f64,
}

/// One-sided Mann-Whitney U test that `a` is stochastically greater than
/// `b`, using the normal approximation with tie and continuity corrections.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::config("Mann-Whitney test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Mann-Whitney samples must be finite".into()));
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += all[i..=j].iter().filter(|x| x.1).count() as f64 * rank;
        i = j + 1;
    }
    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_sum_a - f1 * (f1 + 1.0) / 2.0;
    let mu = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    if var <= 0.0 {
        return Ok(MannWhitney { u, z: 0.0, p_value: 0.5 });
    }
    let z = (u - mu - 0.5) / var.sqrt();
    let normal = Normal::standard();
    Ok(MannWhitney {
        u,
        z,
        p_value: normal.sf(z),
    })
}
