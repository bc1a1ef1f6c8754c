//! Covariance Matrix Adaptation Evolution Strategy with an ask/tell
//! interface.
//!
//! The strategy minimizes. Learning rates and recombination weights use the
//! standard default constants as functions of the dimension and the
//! variance-effective selection mass. A separable mode keeps only the
//! diagonal of the covariance matrix for large dimensions.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::rng::{read_rng, rng_from, stream, write_rng, Rng};

/// Eigenvalues below this are clamped when the covariance is decomposed.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// Dimensions above this use the diagonal covariance in `Auto` mode.
pub const AUTO_DIAGONAL_ABOVE: usize = 1000;

const MAGIC: &[u8; 4] = b"CMAS";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    #[default]
    Auto,
    Full,
    Diagonal,
}

impl CovarianceMode {
    fn tag(self) -> u8 {
        match self {
            CovarianceMode::Auto => 0,
            CovarianceMode::Full => 1,
            CovarianceMode::Diagonal => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => CovarianceMode::Auto,
            1 => CovarianceMode::Full,
            2 => CovarianceMode::Diagonal,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaesConfig {
    pub dimension: usize,
    /// λ; `None` selects `4 + ⌊3 ln n⌋`.
    pub population_size: Option<usize>,
    /// µ; `None` selects `λ / 2`.
    pub parents: Option<usize>,
    pub sigma0: f64,
    /// `None` starts at the origin.
    pub initial_mean: Option<Vec<f64>>,
    pub seed: u64,
    pub mode: CovarianceMode,
}

impl CmaesConfig {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            population_size: None,
            parents: None,
            sigma0: 0.5,
            initial_mean: None,
            seed,
            mode: CovarianceMode::Auto,
        }
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Self {
        self.initial_mean = Some(mean);
        self
    }

    pub fn with_sigma(mut self, sigma0: f64) -> Self {
        self.sigma0 = sigma0;
        self
    }

    pub fn with_mode(mut self, mode: CovarianceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_population(mut self, lambda: usize) -> Self {
        self.population_size = Some(lambda);
        self
    }

    pub fn default_population(n: usize) -> usize {
        4 + (3.0 * (n as f64).ln()).floor() as usize
    }

    pub fn lambda(&self) -> usize {
        self.population_size
            .unwrap_or_else(|| Self::default_population(self.dimension))
    }

    pub fn mu(&self) -> usize {
        self.parents.unwrap_or(self.lambda() / 2)
    }

    pub fn diagonal(&self) -> bool {
        match self.mode {
            CovarianceMode::Auto => self.dimension > AUTO_DIAGONAL_ABOVE,
            CovarianceMode::Full => false,
            CovarianceMode::Diagonal => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, lambda, mu) = (self.dimension, self.lambda(), self.mu());
        if n == 0 {
            return Err(Error::config("CMA-ES dimension must be at least 1"));
        }
        if lambda < 2 {
            return Err(Error::config(format!("population size {lambda} is below 2")));
        }
        if mu < 1 || mu > lambda {
            return Err(Error::config(format!("parent count {mu} not in 1..={lambda}")));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::config(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if let Some(m) = &self.initial_mean {
            if m.len() != n {
                return Err(Error::config(format!(
                    "initial mean has {} entries, dimension is {n}",
                    m.len()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("initial mean is not finite"));
            }
        }
        Ok(())
    }
}

/// Strategy constants derived from the configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Constants {
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    /// Generations between eigendecompositions.
    pub eigen_interval: u64,
}

impl Constants {
    pub fn new(n: usize, mu: usize, diagonal: bool) -> Self {
        let nf = n as f64;
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let mut c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let mut c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        if diagonal {
            let scale = (nf + 2.0) / 3.0;
            c_1 = (c_1 * scale).min(1.0);
            c_mu = (c_mu * scale).min(1.0 - c_1);
        }
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        let eigen_interval = if diagonal {
            1
        } else {
            ((1.0 / (10.0 * nf * (c_1 + c_mu))).floor() as u64).max(1)
        };
        Self {
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            eigen_interval,
        }
    }
}

/// A genome with its fitness and its rank within one generation (0 = best).
#[derive(Clone, Debug, PartialEq)]
pub struct RankedSample {
    pub genome: Vec<f64>,
    pub fitness: f64,
    pub rank: usize,
}

/// Sample indices ordered from best to worst; ties go to the lower index.
pub fn rank_order(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    order
}

/// Pairs genomes with fitness and rank, sorted best first.
pub fn rank_samples(genomes: &[Vec<f64>], fitness: &[f64]) -> Vec<RankedSample> {
    rank_order(fitness)
        .into_iter()
        .enumerate()
        .map(|(rank, i)| RankedSample {
            genome: genomes[i].clone(),
            fitness: fitness[i],
            rank,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Covariance {
    /// Full matrix with eigenvectors `b`.
    Full { c: DMatrix<f64>, b: DMatrix<f64> },
    Diagonal { c: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cmaes {
    config: CmaesConfig,
    constants: Constants,
    lambda: usize,
    mean: Vec<f64>,
    sigma: f64,
    cov: Covariance,
    /// Square roots of the eigenvalues (or diagonal entries) of C.
    d: Vec<f64>,
    p_sigma: Vec<f64>,
    p_c: Vec<f64>,
    generation: u64,
    eigen_generation: u64,
    evaluations: u64,
    repairs: u64,
    best: Option<(Vec<f64>, f64)>,
    rng: Rng,
}

impl Cmaes {
    pub fn new(mut config: CmaesConfig) -> Result<Self> {
        config.validate()?;
        config.population_size = Some(config.lambda());
        config.parents = Some(config.mu());
        let n = config.dimension;
        let diagonal = config.diagonal();
        let constants = Constants::new(n, config.mu(), diagonal);
        let cov = if diagonal {
            Covariance::Diagonal { c: vec![1.0; n] }
        } else {
            Covariance::Full {
                c: DMatrix::identity(n, n),
                b: DMatrix::identity(n, n),
            }
        };
        Ok(Self {
            lambda: config.lambda(),
            mean: config.initial_mean.clone().unwrap_or_else(|| vec![0.0; n]),
            sigma: config.sigma0,
            cov,
            d: vec![1.0; n],
            p_sigma: vec![0.0; n],
            p_c: vec![0.0; n],
            generation: 0,
            eigen_generation: 0,
            evaluations: 0,
            repairs: 0,
            best: None,
            rng: rng_from(config.seed, &[stream::CMAES]),
            constants,
            config,
        })
    }

    pub fn config(&self) -> &CmaesConfig {
        &self.config
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.cov, Covariance::Diagonal { .. })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// How often a degenerate covariance had to be repaired.
    pub fn repairs(&self) -> u64 {
        self.repairs
    }

    /// C as a dense row-major `n × n` matrix.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.dimension();
        match &self.cov {
            Covariance::Full { c, .. } => (0..n * n).map(|k| c[(k / n, k % n)]).collect(),
            Covariance::Diagonal { c } => {
                let mut out = vec![0.0; n * n];
                for (i, v) in c.iter().enumerate() {
                    out[i * n + i] = *v;
                }
                out
            }
        }
    }

    /// Overwrites C, for tests and external warm starts. The eigen cache is
    /// refreshed on the next `ask`.
    pub fn set_covariance(&mut self, row_major: &[f64]) -> Result<()> {
        let n = self.dimension();
        if row_major.len() != n * n {
            return Err(Error::config(format!("covariance needs {} values", n * n)));
        }
        match &mut self.cov {
            Covariance::Full { c, .. } => *c = DMatrix::from_row_slice(n, n, row_major),
            Covariance::Diagonal { c } => {
                for (i, v) in c.iter_mut().enumerate() {
                    *v = row_major[i * n + i];
                }
            }
        }
        self.eigen_generation = u64::MAX;
        Ok(())
    }

    /// Best genome and fitness seen in any `tell`.
    pub fn best(&self) -> Result<(&[f64], f64)> {
        self.best
            .as_ref()
            .map(|(g, f)| (g.as_slice(), *f))
            .ok_or_else(|| Error::state("best() called before any tell"))
    }

    /// Samples λ genomes `m + σ·B·D·z`.
    pub fn ask(&mut self) -> Result<Vec<Vec<f64>>> {
        self.ensure_eigen()?;
        let n = self.dimension();
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let dz: Vec<f64> = self
                .d
                .iter()
                .map(|d| { let z: f64 = StandardNormal.sample(&mut self.rng); d * z })
                .collect();
            let x = match &self.cov {
                Covariance::Diagonal { .. } => {
                    (0..n).map(|i| self.mean[i] + self.sigma * dz[i]).collect()
                }
                Covariance::Full { b, .. } => {
                    let y = b * DVector::from_vec(dz);
                    (0..n).map(|i| self.mean[i] + self.sigma * y[i]).collect()
                }
            };
            out.push(x);
        }
        Ok(out)
    }

    /// Updates the distribution from one generation of evaluated samples.
    pub fn tell(&mut self, genomes: &[Vec<f64>], fitness: &[f64]) -> Result<()> {
        let n = self.dimension();
        if genomes.len() != self.lambda || fitness.len() != self.lambda {
            return Err(Error::config(format!(
                "tell needs exactly {} samples, got {} genomes and {} fitness values",
                self.lambda,
                genomes.len(),
                fitness.len()
            )));
        }
        for (i, (g, f)) in genomes.iter().zip(fitness).enumerate() {
            if !f.is_finite() {
                return Err(Error::Numeric(format!("fitness of sample {i} is {f}")));
            }
            if g.len() != n {
                return Err(Error::config(format!("sample {i} has {} genes, expected {n}", g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("sample {i} has a non-finite gene")));
            }
        }
        self.ensure_eigen()?;

        let order = rank_order(fitness);
        let top = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[top] < *f) {
            self.best = Some((genomes[top].clone(), fitness[top]));
        }
        self.evaluations += self.lambda as u64;

        let k = &self.constants;
        let weights = k.weights.clone();
        let parents: Vec<&Vec<f64>> = order[..weights.len()].iter().map(|&i| &genomes[i]).collect();
        let old_mean = std::mem::take(&mut self.mean);
        let new_mean: Vec<f64> = (0..n)
            .map(|j| weights.iter().zip(&parents).map(|(w, x)| w * x[j]).sum())
            .collect();
        let sigma = self.sigma;
        let y_w: Vec<f64> = (0..n).map(|j| (new_mean[j] - old_mean[j]) / sigma).collect();
        let ys: Vec<Vec<f64>> = parents
            .iter()
            .map(|x| (0..n).map(|j| (x[j] - old_mean[j]) / sigma).collect())
            .collect();
        self.mean = new_mean;

        let inv_sqrt_y = self.inv_sqrt_c(&y_w);
        let cs = k.c_sigma;
        let norm_cs = (cs * (2.0 - cs) * k.mu_eff).sqrt();
        for (p, v) in self.p_sigma.iter_mut().zip(&inv_sqrt_y) {
            *p = (1.0 - cs) * *p + norm_cs * v;
        }
        let ps_norm = norm(&self.p_sigma);
        let decay = 1.0 - (1.0 - cs).powf(2.0 * (self.generation + 1) as f64);
        let h_sigma = ps_norm / decay.sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * k.chi_n;
        let cc = k.c_c;
        let norm_cc = (cc * (2.0 - cc) * k.mu_eff).sqrt();
        let h = if h_sigma { 1.0 } else { 0.0 };
        for (p, v) in self.p_c.iter_mut().zip(&y_w) {
            *p = (1.0 - cc) * *p + h * norm_cc * v;
        }

        let (c1, cmu) = (k.c_1, k.c_mu);
        let keep = 1.0 - c1 - cmu + (1.0 - h) * c1 * cc * (2.0 - cc);
        match &mut self.cov {
            Covariance::Diagonal { c } => {
                for j in 0..n {
                    let rank_mu: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y[j] * y[j]).sum();
                    c[j] = keep * c[j] + c1 * self.p_c[j] * self.p_c[j] + cmu * rank_mu;
                }
            }
            Covariance::Full { c, .. } => {
                *c *= keep;
                let pc = DVector::from_column_slice(&self.p_c);
                c.ger(c1, &pc, &pc, 1.0);
                for (w, y) in weights.iter().zip(&ys) {
                    let y = DVector::from_column_slice(y);
                    c.ger(cmu * w, &y, &y, 1.0);
                }
                symmetrize(c);
            }
        }

        let exponent = ((cs / k.d_sigma) * (ps_norm / k.chi_n - 1.0)).min(1.0);
        self.sigma *= exponent.exp();
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Numeric(format!("step size degenerated to {}", self.sigma)));
        }
        self.generation += 1;
        Ok(())
    }

    /// Convenience loop: ask, evaluate, tell until `max_evaluations` or
    /// `target` is reached. Returns the best fitness.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(
        &mut self,
        mut f: F,
        max_evaluations: u64,
        target: f64,
    ) -> Result<f64> {
        while self.evaluations < max_evaluations {
            let xs = self.ask()?;
            let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
            self.tell(&xs, &fs)?;
            if self.best()?.1 < target {
                break;
            }
        }
        Ok(self.best()?.1)
    }

    fn inv_sqrt_c(&self, v: &[f64]) -> Vec<f64> {
        match &self.cov {
            Covariance::Diagonal { .. } => v.iter().zip(&self.d).map(|(x, d)| x / d).collect(),
            Covariance::Full { b, .. } => {
                let mut t: DVector<f64> = b.tr_mul(&DVector::from_column_slice(v));
                for (x, d) in t.iter_mut().zip(&self.d) {
                    *x /= d;
                }
                (b * t).iter().copied().collect()
            }
        }
    }

    fn ensure_eigen(&mut self) -> Result<()> {
        let stale = self.eigen_generation == u64::MAX
            || self.generation - self.eigen_generation >= self.constants.eigen_interval;
        if stale {
            self.refresh_eigen()?;
            self.eigen_generation = self.generation;
        }
        Ok(())
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        match &mut self.cov {
            Covariance::Diagonal { c } => {
                for (v, d) in c.iter_mut().zip(self.d.iter_mut()) {
                    if !v.is_finite() {
                        return Err(Error::Numeric("covariance diagonal is not finite".into()));
                    }
                    if *v < EIGEN_FLOOR {
                        *v = EIGEN_FLOOR;
                        self.repairs += 1;
                    }
                    *d = v.sqrt();
                }
            }
            Covariance::Full { c, b } => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("covariance matrix is not finite".into()));
                }
                symmetrize(c);
                let n = c.nrows();
                let eig = match SymmetricEigen::try_new(c.clone(), f64::EPSILON, 0) {
                    Some(e) => e,
                    None => {
                        self.repairs += 1;
                        let ridge = EIGEN_FLOOR * c.trace().abs().max(1.0);
                        for i in 0..n {
                            c[(i, i)] += ridge;
                        }
                        SymmetricEigen::try_new(c.clone(), f64::EPSILON, 0).ok_or_else(|| {
                            Error::Numeric("covariance eigendecomposition failed after repair".into())
                        })?
                    }
                };
                let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
                if values.iter().any(|&v| v < EIGEN_FLOOR) {
                    self.repairs += 1;
                    for v in values.iter_mut() {
                        *v = v.max(EIGEN_FLOOR);
                    }
                    let vecs = &eig.eigenvectors;
                    let scaled = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * values[j]);
                    *c = &scaled * vecs.transpose();
                    symmetrize(c);
                }
                *b = eig.eigenvectors;
                for (d, v) in self.d.iter_mut().zip(&values) {
                    *d = v.sqrt();
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(Vec::new());
        self.write_to(&mut enc).expect("writing to memory cannot fail");
        enc.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes);
        let state = Self::read_from(&mut dec)?;
        dec.finish()?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }

    fn write_to<W: Write>(&self, enc: &mut Encoder<W>) -> Result<()> {
        let cfg = &self.config;
        enc.bytes(MAGIC)?;
        enc.u32(VERSION)?;
        enc.usize(cfg.dimension)?;
        enc.usize(self.lambda)?;
        enc.usize(cfg.mu())?;
        enc.f64(cfg.sigma0)?;
        enc.u64(cfg.seed)?;
        enc.u8(cfg.mode.tag())?;
        match &cfg.initial_mean {
            None => enc.u8(0)?,
            Some(m) => {
                enc.u8(1)?;
                enc.f64s(m)?;
            }
        }
        write_rng(enc, &self.rng)?;
        enc.f64s(&self.mean)?;
        enc.f64(self.sigma)?;
        match &self.cov {
            Covariance::Diagonal { c } => {
                enc.u8(0)?;
                enc.f64s(c)?;
            }
            Covariance::Full { c, b } => {
                enc.u8(1)?;
                enc.f64s(c.as_slice())?;
                enc.f64s(b.as_slice())?;
            }
        }
        enc.f64s(&self.d)?;
        enc.f64s(&self.p_sigma)?;
        enc.f64s(&self.p_c)?;
        enc.u64(self.generation)?;
        enc.u64(self.eigen_generation)?;
        enc.u64(self.evaluations)?;
        enc.u64(self.repairs)?;
        match &self.best {
            None => enc.u8(0),
            Some((g, f)) => {
                enc.u8(1)?;
                enc.f64s(g)?;
                enc.f64(*f)
            }
        }
    }

    fn read_from<R: Read>(dec: &mut Decoder<R>) -> Result<Self> {
        let magic: [u8; 4] = dec.bytes()?;
        if &magic != MAGIC {
            return Err(Error::config("not a CMA-ES checkpoint"));
        }
        let version = dec.u32()?;
        if version != VERSION {
            return Err(Error::config(format!("unsupported CMA-ES checkpoint version {version}")));
        }
        let dimension = dec.usize()?;
        let lambda = dec.usize()?;
        let mu = dec.usize()?;
        let sigma0 = dec.f64()?;
        let seed = dec.u64()?;
        let mode = CovarianceMode::from_tag(dec.u8()?)
            .ok_or_else(|| Error::config("unknown covariance mode"))?;
        let initial_mean = match dec.u8()? {
            0 => None,
            _ => Some(dec.f64s()?),
        };
        let config = CmaesConfig {
            dimension,
            population_size: Some(lambda),
            parents: Some(mu),
            sigma0,
            initial_mean,
            seed,
            mode,
        };
        let mut state = Self::new(config)?;
        state.rng = read_rng(dec)?;
        let n = dimension;
        state.mean = vec_of(dec, n)?;
        state.sigma = dec.f64()?;
        let full = dec.u8()? == 1;
        if full == state.is_diagonal() {
            return Err(Error::config("covariance layout does not match mode"));
        }
        state.cov = if full {
            let c = vec_of(dec, n * n)?;
            let b = vec_of(dec, n * n)?;
            Covariance::Full {
                c: DMatrix::from_vec(n, n, c),
                b: DMatrix::from_vec(n, n, b),
            }
        } else {
            Covariance::Diagonal { c: vec_of(dec, n)? }
        };
        state.d = vec_of(dec, n)?;
        state.p_sigma = vec_of(dec, n)?;
        state.p_c = vec_of(dec, n)?;
        state.generation = dec.u64()?;
        state.eigen_generation = dec.u64()?;
        state.evaluations = dec.u64()?;
        state.repairs = dec.u64()?;
        state.best = match dec.u8()? {
            0 => None,
            _ => Some((vec_of(dec, n)?, dec.f64()?)),
        };
        Ok(state)
    }
}

fn vec_of<R: Read>(dec: &mut Decoder<R>, len: usize) -> Result<Vec<f64>> {
    let v = dec.f64s()?;
    if v.len() != len {
        return Err(Error::config(format!("expected {len} values, found {}", v.len())));
    }
    Ok(v)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn symmetrize(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

/// Test functions with their minimum at zero.
pub mod benchmarks {
    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    pub fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::benchmarks::{rosenbrock, sphere};
    use super::*;
    use proptest::prelude::*;

    fn full(n: usize, seed: u64) -> CmaesConfig {
        CmaesConfig::new(n, seed).with_mode(CovarianceMode::Full)
    }

    #[test]
    fn default_constants() {
        let c = CmaesConfig::new(10, 0);
        assert_eq!(c.lambda(), 10);
        assert_eq!(c.mu(), 5);
        assert_eq!(CmaesConfig::new(2208, 0).lambda(), 27);
        let k = Constants::new(10, 5, false);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(k.weights.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
        assert!(k.c_1 + k.c_mu <= 1.0);
        assert!(!CmaesConfig::new(1000, 0).diagonal());
        assert!(CmaesConfig::new(1001, 0).diagonal());
    }

    #[test]
    fn invalid_configs() {
        assert!(Cmaes::new(CmaesConfig::new(0, 0)).is_err());
        assert!(Cmaes::new(CmaesConfig::new(3, 0).with_sigma(0.0)).is_err());
        let mut c = CmaesConfig::new(3, 0);
        c.parents = Some(20);
        assert!(Cmaes::new(c).is_err());
        assert!(Cmaes::new(CmaesConfig::new(3, 0).with_mean(vec![0.0; 2])).is_err());
    }

    #[test]
    fn tiny_sigma_samples_the_mean() {
        let mean = vec![0.3, -1.2, 4.0];
        let mut es = Cmaes::new(full(3, 1).with_mean(mean.clone()).with_sigma(1e-300)).unwrap();
        for x in es.ask().unwrap() {
            for (a, b) in x.iter().zip(&mean) {
                assert!((a - b).abs() <= 1e-290);
            }
        }
    }

    #[test]
    fn identical_seeds_identical_samples() {
        let mut a = Cmaes::new(full(2, 9)).unwrap();
        let mut b = Cmaes::new(full(2, 9)).unwrap();
        assert_eq!(a.ask().unwrap(), b.ask().unwrap());
        let mut c = Cmaes::new(full(2, 10)).unwrap();
        assert_ne!(a.ask().unwrap(), c.ask().unwrap());
    }

    #[test]
    fn unit_covariance_sample_variance() {
        let mut es = Cmaes::new(full(10, 3).with_sigma(1.0).with_population(100)).unwrap();
        let mut sum = [0.0; 10];
        let mut sq = [0.0; 10];
        for _ in 0..100 {
            for x in es.ask().unwrap() {
                for j in 0..10 {
                    sum[j] += x[j];
                    sq[j] += x[j] * x[j];
                }
            }
        }
        for j in 0..10 {
            let m = sum[j] / 10_000.0;
            let var = sq[j] / 10_000.0 - m * m;
            assert!((0.9..=1.1).contains(&var), "coordinate {j} variance {var}");
        }
    }

    #[test]
    fn equal_fitness_gives_weighted_parent_average() {
        let mut es = Cmaes::new(full(4, 5)).unwrap();
        let xs = es.ask().unwrap();
        let fs = vec![1.0; xs.len()];
        let w = es.constants().weights.clone();
        es.tell(&xs, &fs).unwrap();
        for (j, &m) in es.mean().iter().enumerate() {
            let expected: f64 = w.iter().zip(&xs).map(|(w, x)| w * x[j]).sum();
            assert!((m - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn tell_rejects_bad_input() {
        let mut es = Cmaes::new(full(3, 5)).unwrap();
        let xs = es.ask().unwrap();
        let mut fs = vec![0.0; xs.len()];
        fs[2] = f64::NAN;
        let err = es.tell(&xs, &fs).unwrap_err().to_string();
        assert!(err.contains("sample 2"), "{err}");
        assert!(es.tell(&xs[1..], &fs[1..]).is_err());
        assert_eq!(es.generation(), 0);
    }

    #[test]
    fn best_before_tell_is_a_state_error() {
        let es = Cmaes::new(full(3, 5)).unwrap();
        assert!(matches!(es.best(), Err(Error::State(_))));
    }

    #[test]
    fn best_picks_lowest_fitness() {
        let mut es = Cmaes::new(full(3, 5)).unwrap();
        let xs = es.ask().unwrap();
        let mut fs: Vec<f64> = (0..xs.len()).map(|i| i as f64 + 2.0).collect();
        fs[0] = 3.0;
        fs[1] = 1.0;
        fs[2] = 2.0;
        es.tell(&xs, &fs).unwrap();
        let (g, f) = es.best().unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(g, xs[1].as_slice());
    }

    #[test]
    fn ranks_are_stable() {
        assert_eq!(rank_order(&[2.0, 1.0, 2.0, 0.5]), vec![3, 1, 0, 2]);
        let r = rank_samples(&[vec![0.0], vec![1.0]], &[5.0, 4.0]);
        assert_eq!(r[0].genome, vec![1.0]);
        assert_eq!(r[1].rank, 1);
    }

    #[test]
    fn sphere_converges() {
        let mut es = Cmaes::new(full(10, 11).with_mean(vec![1.0; 10])).unwrap();
        let mut last_best = f64::INFINITY;
        while es.evaluations() < 2000 {
            let xs = es.ask().unwrap();
            let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
            es.tell(&xs, &fs).unwrap();
            let b = es.best().unwrap().1;
            assert!(b <= last_best);
            last_best = b;
            let c = es.covariance();
            for i in 0..10 {
                for j in 0..10 {
                    assert!((c[i * 10 + j] - c[j * 10 + i]).abs() <= 1e-12);
                }
            }
            assert!(es.sigma() > 1e-30 && es.sigma() < 1e30);
            if b < 1e-10 {
                break;
            }
        }
        assert!(last_best < 1e-10, "best {last_best} after {} evals", es.evaluations());
        let g = es.best().unwrap().0;
        assert!(sphere(g).sqrt() < 1e-5);
    }

    #[test]
    fn diagonal_mode_converges_on_sphere() {
        let cfg = CmaesConfig::new(10, 4)
            .with_mean(vec![1.0; 10])
            .with_mode(CovarianceMode::Diagonal);
        let mut es = Cmaes::new(cfg).unwrap();
        assert!(es.is_diagonal());
        let best = es.minimize(sphere, 4000, 1e-10).unwrap();
        assert!(best < 1e-10, "{best}");
    }

    #[test]
    fn rosenbrock_converges() {
        let mut es = Cmaes::new(full(5, 2)).unwrap();
        let best = es.minimize(rosenbrock, 15_000, 1e-6).unwrap();
        assert!(best < 1e-6, "{best}");
    }

    #[test]
    fn near_singular_covariance_is_repaired() {
        let n = 4;
        let mut es = Cmaes::new(full(n, 8)).unwrap();
        // Rank one: every eigenvalue but one is zero.
        let v = [1.0, 2.0, -1.0, 0.5];
        let c: Vec<f64> = (0..n * n).map(|k| v[k / n] * v[k % n]).collect();
        es.set_covariance(&c).unwrap();
        let xs = es.ask().unwrap();
        assert!(es.repairs() > 0);
        assert!(xs.iter().flatten().all(|x| x.is_finite()));
        let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
        es.tell(&xs, &fs).unwrap();
        let m = DMatrix::from_row_slice(n, n, &es.covariance());
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn scale_equivariant_ranks() {
        let scale = 7.5;
        let m = vec![0.4, -0.3, 1.2];
        let mut a = Cmaes::new(full(3, 21).with_mean(m.clone())).unwrap();
        let scaled: Vec<f64> = m.iter().map(|v| v * scale).collect();
        let mut b = Cmaes::new(full(3, 21).with_mean(scaled).with_sigma(0.5 * scale)).unwrap();
        let fa: Vec<f64> = a.ask().unwrap().iter().map(|x| rosenbrock(x)).collect();
        let fb: Vec<f64> = b
            .ask()
            .unwrap()
            .iter()
            .map(|x| rosenbrock(&x.iter().map(|v| v / scale).collect::<Vec<_>>()))
            .collect();
        assert_eq!(rank_order(&fa), rank_order(&fb));
    }

    fn run(es: &mut Cmaes, generations: usize) {
        for _ in 0..generations {
            let xs = es.ask().unwrap();
            let fs: Vec<f64> = xs.iter().map(|x| rosenbrock(x)).collect();
            es.tell(&xs, &fs).unwrap();
        }
    }

    #[test]
    fn fifty_generations_are_bitwise_reproducible() {
        let mut a = Cmaes::new(full(6, 77)).unwrap();
        let mut b = Cmaes::new(full(6, 77)).unwrap();
        run(&mut a, 50);
        run(&mut b, 50);
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn checkpoint_resumes_bit_exactly() {
        for mode in [CovarianceMode::Full, CovarianceMode::Diagonal] {
            let mut a = Cmaes::new(CmaesConfig::new(5, 3).with_mode(mode)).unwrap();
            run(&mut a, 7);
            let mut b = Cmaes::from_bytes(&a.to_bytes()).unwrap();
            assert_eq!(a, b);
            run(&mut a, 9);
            run(&mut b, 9);
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
        assert!(Cmaes::from_bytes(b"nope").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tell_ignores_sample_order(seed in any::<u64>(), rotate in 0usize..6, diagonal in any::<bool>()) {
            let mode = if diagonal { CovarianceMode::Diagonal } else { CovarianceMode::Full };
            let cfg = CmaesConfig::new(4, seed).with_mode(mode);
            let mut a = Cmaes::new(cfg.clone()).unwrap();
            let mut b = Cmaes::new(cfg).unwrap();
            for _ in 0..3 {
                let xs = a.ask().unwrap();
                prop_assert_eq!(&xs, &b.ask().unwrap());
                prop_assert!(xs.iter().flatten().all(|v| v.is_finite()));
                let fs: Vec<f64> = xs.iter().map(|x| sphere(x)).collect();
                let mut ys = xs.clone();
                let mut gs = fs.clone();
                ys.rotate_left(rotate);
                gs.rotate_left(rotate);
                a.tell(&xs, &fs).unwrap();
                b.tell(&ys, &gs).unwrap();
                prop_assert_eq!(a.mean(), b.mean());
                prop_assert_eq!(a.sigma(), b.sigma());
            }
        }
    }
}
