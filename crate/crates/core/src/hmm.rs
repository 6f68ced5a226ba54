//! Continuous-density HMMs with diagonal-covariance Gaussian-mixture
//! emissions: log-domain forward and Viterbi recursions, Baum-Welch training
//! and the two-class Bayes posterior used to verify text candidates.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phog::FeatureSequence;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAGIC_STEM: &[u8; 5] = b"OTHMM";
const FORMAT_VERSION: u8 = b'1';

/// Which side of the verification decision a model stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Text,
    NonText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Each state either stays or advances to the next; starts in state 0.
    #[default]
    LeftToRight,
    /// Every transition allowed.
    Ergodic,
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn mixtures(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }
}

/// Per-component constants for fast log-density evaluation.
struct GmmCache {
    /// `ln w_k - 0.5 * sum(ln 2 pi var)`; `-inf` for zero-weight components.
    log_norm: Vec<f64>,
    inv_var: Vec<Vec<f64>>,
}

impl GmmCache {
    fn new(g: &Gmm) -> Self {
        let log_norm = g
            .weights
            .iter()
            .zip(&g.variances)
            .map(|(&w, var)| {
                if w <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
                }
            })
            .collect();
        let inv_var = g
            .variances
            .iter()
            .map(|v| v.iter().map(|x| 1.0 / x).collect())
            .collect();
        GmmCache { log_norm, inv_var }
    }

    /// Weighted log-density of each component at `x`.
    fn component_logs(&self, g: &Gmm, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for k in 0..g.weights.len() {
            if self.log_norm[k] == f64::NEG_INFINITY {
                out.push(f64::NEG_INFINITY);
                continue;
            }
            let q: f64 = x
                .iter()
                .zip(&g.means[k])
                .zip(&self.inv_var[k])
                .map(|((xi, mi), iv)| (xi - mi) * (xi - mi) * iv)
                .sum();
            out.push(self.log_norm[k] - 0.5 * q);
        }
    }
}

/// `ln(sum(exp(v)))`, safe for all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[inline]
fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// HMM `lambda = {A, B, pi}` with its class label and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub pi: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub a: Vec<Vec<f64>>,
    pub emissions: Vec<Gmm>,
    pub label: ClassLabel,
    pub prior: f64,
}

impl HmmModel {
    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn mixtures(&self) -> usize {
        self.emissions.first().map_or(0, Gmm::mixtures)
    }

    pub fn dim(&self) -> usize {
        self.emissions.first().map_or(0, Gmm::dim)
    }

    /// Checks the probability constraints: `pi`, rows of `A` and mixture
    /// weights sum to 1 within `tol`, variances are positive.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.states();
        let bad = |what: String| Err(Error::Model(what));
        if n == 0 || self.a.len() != n || self.emissions.len() != n {
            return bad(format!("inconsistent state count {n}"));
        }
        if (self.pi.iter().sum::<f64>() - 1.0).abs() > tol {
            return bad("initial probabilities do not sum to 1".into());
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n || (row.iter().sum::<f64>() - 1.0).abs() > tol {
                return bad(format!("transition row {i} is not stochastic"));
            }
        }
        let (m, d) = (self.mixtures(), self.dim());
        for (j, g) in self.emissions.iter().enumerate() {
            if g.mixtures() != m || g.means.iter().chain(&g.variances).any(|v| v.len() != d) {
                return bad(format!("state {j} emission shape mismatch"));
            }
            if (g.weights.iter().sum::<f64>() - 1.0).abs() > tol {
                return bad(format!("state {j} mixture weights do not sum to 1"));
            }
            if g.variances.iter().flatten().any(|&v| !(v > 0.0)) {
                return bad(format!("state {j} has a non-positive variance"));
            }
        }
        if !(0.0..=1.0).contains(&self.prior) {
            return bad(format!("prior {} outside [0, 1]", self.prior));
        }
        Ok(())
    }

    fn check_sequence(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Empty("feature sequence"));
        }
        let d = self.dim();
        if let Some(f) = seq.frames.iter().find(|f| f.len() != d) {
            return Err(Error::Dimension(format!(
                "frame of dimension {} for a {d}-dimensional model",
                f.len()
            )));
        }
        Ok(())
    }

    /// `ln b_j(o_t)` for every frame and state, plus (optionally) the
    /// per-component terms.
    fn emission_logs(&self, seq: &FeatureSequence, keep_components: bool) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let caches: Vec<GmmCache> = self.emissions.iter().map(GmmCache::new).collect();
        let mut buf = Vec::new();
        let mut comps = Vec::new();
        let logb = seq
            .frames
            .iter()
            .map(|x| {
                let mut row = Vec::with_capacity(self.states());
                let mut crow = Vec::new();
                for (g, cache) in self.emissions.iter().zip(&caches) {
                    cache.component_logs(g, x, &mut buf);
                    row.push(log_sum_exp(&buf));
                    if keep_components {
                        crow.push(buf.clone());
                    }
                }
                if keep_components {
                    comps.push(crow);
                }
                row
            })
            .collect();
        (logb, comps)
    }

    fn log_params(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        (
            self.pi.iter().map(|&p| ln(p)).collect(),
            self.a.iter().map(|r| r.iter().map(|&p| ln(p)).collect()).collect(),
        )
    }

    fn forward(&self, logb: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.states();
        let (lpi, la) = self.log_params();
        let mut alpha = Vec::with_capacity(logb.len());
        alpha.push((0..n).map(|j| lpi[j] + logb[0][j]).collect::<Vec<_>>());
        let mut terms = vec![0.0; n];
        for b in &logb[1..] {
            let prev = alpha.last().unwrap();
            let row = (0..n)
                .map(|j| {
                    for i in 0..n {
                        terms[i] = prev[i] + la[i][j];
                    }
                    log_sum_exp(&terms) + b[j]
                })
                .collect();
            alpha.push(row);
        }
        alpha
    }

    fn backward(&self, logb: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.states();
        let (_, la) = self.log_params();
        let t_len = logb.len();
        let mut beta = vec![vec![0.0; n]; t_len];
        let mut terms = vec![0.0; n];
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                for j in 0..n {
                    terms[j] = la[i][j] + logb[t + 1][j] + beta[t + 1][j];
                }
                beta[t][i] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// `ln P(O | lambda)` by the forward algorithm.
    pub fn forward_loglik(&self, seq: &FeatureSequence) -> Result<f64> {
        self.check_sequence(seq)?;
        let (logb, _) = self.emission_logs(seq, false);
        Ok(log_sum_exp(self.forward(&logb).last().unwrap()))
    }

    /// Most likely state path and its log probability. Ties go to the lower
    /// state index.
    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<(Vec<usize>, f64)> {
        self.check_sequence(seq)?;
        let n = self.states();
        let (logb, _) = self.emission_logs(seq, false);
        let (lpi, la) = self.log_params();
        let mut delta: Vec<f64> = (0..n).map(|j| lpi[j] + logb[0][j]).collect();
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(logb.len());
        for b in &logb[1..] {
            let mut next = vec![f64::NEG_INFINITY; n];
            let mut arg = vec![0; n];
            for j in 0..n {
                for i in 0..n {
                    let v = delta[i] + la[i][j];
                    if v > next[j] {
                        next[j] = v;
                        arg[j] = i;
                    }
                }
                next[j] += b[j];
            }
            back.push(arg);
            delta = next;
        }
        let mut best = 0;
        for j in 1..n {
            if delta[j] > delta[best] {
                best = j;
            }
        }
        let score = delta[best];
        let mut path = vec![best];
        for arg in back.iter().rev() {
            path.push(arg[*path.last().unwrap()]);
        }
        path.reverse();
        Ok((path, score))
    }

    /// Little-endian binary form: `OTHMM1`, `u32` states, mixtures and
    /// dimension, then pi, A, mixture weights, means, variances (state-major,
    /// then component), a label byte (0 text, 1 non-text) and the prior.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC_STEM)?;
        w.write_all(&[FORMAT_VERSION])?;
        for n in [self.states(), self.mixtures(), self.dim()] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        for &p in &self.pi {
            put(p)?;
        }
        for &p in self.a.iter().flatten() {
            put(p)?;
        }
        for g in &self.emissions {
            for &p in &g.weights {
                put(p)?;
            }
        }
        for g in &self.emissions {
            for &p in g.means.iter().flatten() {
                put(p)?;
            }
        }
        for g in &self.emissions {
            for &p in g.variances.iter().flatten() {
                put(p)?;
            }
        }
        w.write_all(&[match self.label {
            ClassLabel::Text => 0,
            ClassLabel::NonText => 1,
        }])?;
        w.write_all(&self.prior.to_le_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<HmmModel> {
        let truncated = |_| Error::Format("truncated model file".into());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic[..5] != MAGIC_STEM || !magic[5].is_ascii_digit() {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        if magic[5] != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {})",
                magic[5] as char, FORMAT_VERSION as char
            )));
        }
        let mut u = [0u8; 4];
        let mut counts = [0usize; 3];
        for c in &mut counts {
            r.read_exact(&mut u).map_err(truncated)?;
            *c = u32::from_le_bytes(u) as usize;
        }
        let [n, m, d] = counts;
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::Format(format!("empty model shape {n}x{m}x{d}")));
        }
        let mut f = [0u8; 8];
        let mut take = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    r.read_exact(&mut f).map_err(truncated)?;
                    Ok(f64::from_le_bytes(f))
                })
                .collect()
        };
        let pi = take(n)?;
        let a: Vec<Vec<f64>> = take(n * n)?.chunks(n).map(<[f64]>::to_vec).collect();
        let weights = take(n * m)?;
        let means = take(n * m * d)?;
        let vars = take(n * m * d)?;
        let mut lb = [0u8; 1];
        r.read_exact(&mut lb).map_err(truncated)?;
        let label = match lb[0] {
            0 => ClassLabel::Text,
            1 => ClassLabel::NonText,
            other => return Err(Error::Format(format!("unknown class label {other}"))),
        };
        r.read_exact(&mut f).map_err(truncated)?;
        let prior = f64::from_le_bytes(f);
        let emissions = (0..n)
            .map(|j| Gmm {
                weights: weights[j * m..(j + 1) * m].to_vec(),
                means: (0..m)
                    .map(|k| means[(j * m + k) * d..(j * m + k + 1) * d].to_vec())
                    .collect(),
                variances: (0..m)
                    .map(|k| vars[(j * m + k) * d..(j * m + k + 1) * d].to_vec())
                    .collect(),
            })
            .collect();
        let model = HmmModel {
            pi,
            a,
            emissions,
            label,
            prior,
        };
        model
            .validate(1e-6)
            .map_err(|e| Error::Format(format!("inconsistent model file: {e}")))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<HmmModel> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// How the two class log-likelihoods become a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Bayes posterior computed from per-frame log scores.
    #[default]
    LengthNormalized,
    /// Bayes posterior of the whole sequence.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub loglik_text: f64,
    pub loglik_nontext: f64,
    pub frames: usize,
    /// `P(text | O)`.
    pub score: f64,
}

/// Two-class posterior `P(text | O)` with the models' priors.
pub fn classify(text: &HmmModel, nontext: &HmmModel, seq: &FeatureSequence) -> Result<ScoredSequence> {
    classify_with(text, nontext, seq, ScoreMode::LengthNormalized)
}

pub fn classify_with(
    text: &HmmModel,
    nontext: &HmmModel,
    seq: &FeatureSequence,
    mode: ScoreMode,
) -> Result<ScoredSequence> {
    let lt = text.forward_loglik(seq)?;
    let ln_ = nontext.forward_loglik(seq)?;
    let t = seq.len() as f64;
    let norm = match mode {
        ScoreMode::LengthNormalized => t,
        ScoreMode::Raw => 1.0,
    };
    let st = (lt + ln(text.prior)) / norm;
    let sn = (ln_ + ln(nontext.prior)) / norm;
    let score = match (st.is_finite(), sn.is_finite()) {
        (true, true) => 1.0 / (1.0 + (sn - st).exp()),
        (false, true) => 0.0,
        (true, false) => 1.0,
        (false, false) => 0.5,
    };
    Ok(ScoredSequence {
        loglik_text: lt,
        loglik_nontext: ln_,
        frames: seq.len(),
        score,
    })
}

/// The text / non-text model pair used for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub text: HmmModel,
    pub nontext: HmmModel,
}

impl ModelPair {
    pub const TEXT_FILE: &'static str = "text.hmm";
    pub const NONTEXT_FILE: &'static str = "nontext.hmm";

    pub fn classify(&self, seq: &FeatureSequence, mode: ScoreMode) -> Result<ScoredSequence> {
        classify_with(&self.text, &self.nontext, seq, mode)
    }

    /// Writes `text.hmm` and `nontext.hmm` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.text.save(dir.join(Self::TEXT_FILE))?;
        self.nontext.save(dir.join(Self::NONTEXT_FILE))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<ModelPair> {
        let dir = dir.as_ref();
        let pair = ModelPair {
            text: HmmModel::load(dir.join(Self::TEXT_FILE))?,
            nontext: HmmModel::load(dir.join(Self::NONTEXT_FILE))?,
        };
        if pair.text.dim() != pair.nontext.dim() {
            return Err(Error::Model(
                "text and non-text models differ in feature dimension".into(),
            ));
        }
        Ok(pair)
    }
}

/// Baum-Welch settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub states: usize,
    pub mixtures: usize,
    pub topology: Topology,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tolerance: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_ratio: f64,
    /// Absolute lower bound on every variance.
    pub min_variance: f64,
    pub kmeans_iterations: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            states: 6,
            mixtures: 32,
            topology: Topology::LeftToRight,
            max_iterations: 100,
            tolerance: 1e-6,
            variance_floor_ratio: 1e-3,
            min_variance: 1e-6,
            kmeans_iterations: 20,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.mixtures == 0 {
            return Err(Error::Config("states and mixtures must be positive".into()));
        }
        if !(self.variance_floor_ratio >= 0.0) || !(self.min_variance > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::Config(
                "variance floor and tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a training run besides the model itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total training log-likelihood before each M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sequences dropped for being shorter than the state count.
    pub skipped: usize,
    pub used: usize,
}

/// Sufficient statistics of one E-step.
#[derive(Clone)]
struct Accum {
    loglik: f64,
    pi: Vec<f64>,
    a_num: Vec<Vec<f64>>,
    /// Per state and component: occupancy, sum x, sum x^2.
    occ: Vec<Vec<f64>>,
    sx: Vec<Vec<Vec<f64>>>,
    sxx: Vec<Vec<Vec<f64>>>,
}

impl Accum {
    fn zeros(n: usize, m: usize, d: usize) -> Self {
        Accum {
            loglik: 0.0,
            pi: vec![0.0; n],
            a_num: vec![vec![0.0; n]; n],
            occ: vec![vec![0.0; m]; n],
            sx: vec![vec![vec![0.0; d]; m]; n],
            sxx: vec![vec![vec![0.0; d]; m]; n],
        }
    }

    fn add(&mut self, o: &Accum) {
        self.loglik += o.loglik;
        let add_vec = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add_vec(&mut self.pi, &o.pi);
        for (a, b) in self.a_num.iter_mut().zip(&o.a_num) {
            add_vec(a, b);
        }
        for (a, b) in self.occ.iter_mut().zip(&o.occ) {
            add_vec(a, b);
        }
        for (sa, sb) in self.sx.iter_mut().zip(&o.sx) {
            for (a, b) in sa.iter_mut().zip(sb) {
                add_vec(a, b);
            }
        }
        for (sa, sb) in self.sxx.iter_mut().zip(&o.sxx) {
            for (a, b) in sa.iter_mut().zip(sb) {
                add_vec(a, b);
            }
        }
    }
}

fn e_step(model: &HmmModel, seq: &FeatureSequence) -> Accum {
    let (n, m, d) = (model.states(), model.mixtures(), model.dim());
    let mut acc = Accum::zeros(n, m, d);
    let (logb, comps) = model.emission_logs(seq, true);
    let alpha = model.forward(&logb);
    let beta = model.backward(&logb);
    let total = log_sum_exp(alpha.last().unwrap());
    if !total.is_finite() {
        return acc;
    }
    acc.loglik = total;
    let (_, la) = model.log_params();
    for t in 0..logb.len() {
        for j in 0..n {
            let g = (alpha[t][j] + beta[t][j] - total).exp();
            if t == 0 {
                acc.pi[j] += g;
            }
            if g <= 0.0 || logb[t][j] == f64::NEG_INFINITY {
                continue;
            }
            let x = &seq.frames[t];
            for (k, &ck) in comps[t][j].iter().enumerate() {
                let gk = g * (ck - logb[t][j]).exp();
                if gk <= 0.0 {
                    continue;
                }
                acc.occ[j][k] += gk;
                let (sx, sxx) = (&mut acc.sx[j][k], &mut acc.sxx[j][k]);
                for (i, &xi) in x.iter().enumerate() {
                    sx[i] += gk * xi;
                    sxx[i] += gk * xi * xi;
                }
            }
        }
        if t + 1 < logb.len() {
            for i in 0..n {
                for j in 0..n {
                    if la[i][j] == f64::NEG_INFINITY {
                        continue;
                    }
                    acc.a_num[i][j] += (alpha[t][i] + la[i][j] + logb[t + 1][j] + beta[t + 1][j] - total).exp();
                }
            }
        }
    }
    acc
}

fn m_step(model: &mut HmmModel, acc: &Accum, floor: &[f64]) {
    let n = model.states();
    let pi_sum: f64 = acc.pi.iter().sum();
    if pi_sum > 0.0 {
        model.pi = acc.pi.iter().map(|p| p / pi_sum).collect();
    }
    for i in 0..n {
        let row: f64 = acc.a_num[i].iter().sum();
        if row > 0.0 {
            model.a[i] = acc.a_num[i].iter().map(|p| p / row).collect();
        }
    }
    for (j, g) in model.emissions.iter_mut().enumerate() {
        let occ_j: f64 = acc.occ[j].iter().sum();
        if occ_j <= 0.0 {
            continue;
        }
        for k in 0..g.weights.len() {
            let o = acc.occ[j][k];
            g.weights[k] = o / occ_j;
            // Components with negligible support keep their Gaussian.
            if o < 1e-10 {
                continue;
            }
            for (i, &fl) in floor.iter().enumerate() {
                let mean = acc.sx[j][k][i] / o;
                let var = acc.sxx[j][k][i] / o - mean * mean;
                g.means[k][i] = mean;
                g.variances[k][i] = var.max(fl);
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain k-means over `points`, seeded with distinct random points.
fn kmeans(points: &[&[f64]], k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut centers: Vec<Vec<f64>> = sample(rng, points.len(), k.min(points.len()))
        .into_iter()
        .map(|i| points[i].to_vec())
        .collect();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..iters {
        let mut changed = false;
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let best = (0..centers.len())
                .min_by(|&x, &y| sq_dist(p, &centers[x]).total_cmp(&sq_dist(p, &centers[y])))
                .unwrap();
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }
        for (c, (s, &cnt)) in centers.iter_mut().zip(sums.into_iter().zip(&counts)) {
            if cnt > 0 {
                *c = s.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
    }
    centers
}

fn initial_model(seqs: &[&FeatureSequence], p: &TrainParams, floor: &[f64], label: ClassLabel) -> HmmModel {
    let (n, m) = (p.states, p.mixtures);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // Uniform segmentation: frame t of a length-T sequence goes to state
    // floor(t * n / T).
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for s in seqs {
        let t_len = s.len();
        for (t, f) in s.frames.iter().enumerate() {
            per_state[t * n / t_len].push(f.as_slice());
        }
    }
    let emissions = per_state
        .iter()
        .map(|frames| {
            let d = floor.len();
            let mean: Vec<f64> = (0..d)
                .map(|i| frames.iter().map(|f| f[i]).sum::<f64>() / frames.len() as f64)
                .collect();
            let var: Vec<f64> = (0..d)
                .map(|i| {
                    let v = frames.iter().map(|f| (f[i] - mean[i]).powi(2)).sum::<f64>() / frames.len() as f64;
                    v.max(floor[i])
                })
                .collect();
            let mut means = kmeans(frames, m, p.kmeans_iterations, &mut rng);
            // Fewer distinct frames than components: replicate centres.
            let mut i = 0;
            while means.len() < m {
                means.push(means[i % means.len()].clone());
                i += 1;
            }
            Gmm {
                weights: vec![1.0 / m as f64; m],
                variances: vec![var; m],
                means,
            }
        })
        .collect();
    let (pi, a) = match p.topology {
        Topology::LeftToRight => {
            let mut pi = vec![0.0; n];
            pi[0] = 1.0;
            let a = (0..n)
                .map(|i| {
                    let mut row = vec![0.0; n];
                    if i + 1 < n {
                        row[i] = 0.5;
                        row[i + 1] = 0.5;
                    } else {
                        row[i] = 1.0;
                    }
                    row
                })
                .collect();
            (pi, a)
        }
        Topology::Ergodic => (vec![1.0 / n as f64; n], vec![vec![1.0 / n as f64; n]; n]),
    };
    HmmModel {
        pi,
        a,
        emissions,
        label,
        prior: 0.5,
    }
}

/// Baum-Welch training of one class model.
///
/// Sequences shorter than the state count cannot traverse a left-to-right
/// model and are skipped (and counted). `prior` is stored on the model as
/// `P(lambda)`. E-steps run in parallel; statistics are summed in sequence
/// order, so results do not depend on the thread count.
pub fn train(
    sequences: &[FeatureSequence],
    label: ClassLabel,
    prior: f64,
    p: &TrainParams,
) -> Result<(HmmModel, TrainReport)> {
    p.validate()?;
    if sequences.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let usable: Vec<&FeatureSequence> = sequences.iter().filter(|s| s.len() >= p.states).collect();
    let skipped = sequences.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::Empty("training sequences at least as long as the state count"));
    }
    let d = usable[0].dim;
    if let Some(s) = usable.iter().find(|s| s.frames.iter().any(|f| f.len() != d)) {
        return Err(Error::Dimension(format!(
            "sequence dimension {} differs from {d}",
            s.dim
        )));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} training sequences shorter than {} frames", p.states);
    }
    let frames = usable.iter().map(|s| s.len()).sum::<usize>() as f64;
    let floor: Vec<f64> = (0..d)
        .map(|i| {
            let mean = usable.iter().flat_map(|s| &s.frames).map(|f| f[i]).sum::<f64>() / frames;
            let var = usable
                .iter()
                .flat_map(|s| &s.frames)
                .map(|f| (f[i] - mean).powi(2))
                .sum::<f64>()
                / frames;
            (p.variance_floor_ratio * var).max(p.min_variance)
        })
        .collect();
    let mut model = initial_model(&usable, p, &floor, label);
    model.prior = prior;
    let mut lls = Vec::new();
    let mut converged = false;
    for it in 0..p.max_iterations {
        let parts: Vec<Accum> = usable.par_iter().map(|s| e_step(&model, s)).collect();
        let mut acc = Accum::zeros(model.states(), model.mixtures(), d);
        for part in &parts {
            acc.add(part);
        }
        log::debug!("{label:?} iteration {it}: log-likelihood {:.6}", acc.loglik);
        let prev = lls.last().copied();
        lls.push(acc.loglik);
        if let Some(prev) = prev {
            let gain = (acc.loglik - prev) / prev.abs().max(1e-300);
            if gain < p.tolerance {
                converged = true;
                break;
            }
        }
        m_step(&mut model, &acc, &floor);
    }
    let report = TrainReport {
        iterations: lls.len(),
        log_likelihoods: lls,
        converged,
        skipped,
        used: usable.len(),
    };
    Ok((model, report))
}

/// Trains both class models; priors are the class fractions of all patches.
pub fn train_pair(
    text: &[FeatureSequence],
    nontext: &[FeatureSequence],
    p: &TrainParams,
) -> Result<(ModelPair, TrainReport, TrainReport)> {
    let total = (text.len() + nontext.len()) as f64;
    if total == 0.0 {
        return Err(Error::Empty("training set"));
    }
    let (t, rt) = train(text, ClassLabel::Text, text.len() as f64 / total, p)?;
    let (n, rn) = train(nontext, ClassLabel::NonText, nontext.len() as f64 / total, p)?;
    Ok((ModelPair { text: t, nontext: n }, rt, rn))
}
