//! MMV problem data: mixing matrices, row-sparse ground truth, Poisson
//! observations, synthetic generation and RIP-constant estimation.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::to_json_string;
use crate::rng::{self, Rng, Stream};

/// Schema tag written into every instance document.
pub const INSTANCE_SCHEMA: &str = "ccjs-instance/1";

const COLUMN_NORM_TOL: f64 = 1e-12;

/// The N known nonnegative mixing matrices `A_i`, each M×K with unit-norm
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSet {
    matrices: Vec<Array2<f64>>,
}

impl MixingSet {
    /// Validates and wraps a list of mixing matrices.
    pub fn new(matrices: Vec<Array2<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Dimension("at least one mixing matrix is required".into()))?;
        let shape = first.dim();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Dimension(format!("empty mixing matrix {shape:?}")));
        }
        for (i, a) in matrices.iter().enumerate() {
            if a.dim() != shape {
                return Err(Error::Dimension(format!(
                    "mixing matrix {i} has shape {:?}, expected {shape:?}",
                    a.dim()
                )));
            }
            if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "mixing matrix {i} has a negative or non-finite entry {v}"
                )));
            }
            for (l, col) in a.axis_iter(Axis(1)).enumerate() {
                let norm = col.dot(&col).sqrt();
                if (norm - 1.0).abs() >= COLUMN_NORM_TOL {
                    return Err(Error::Domain(format!(
                        "column {l} of mixing matrix {i} has norm {norm}, expected 1"
                    )));
                }
            }
        }
        Ok(Self { matrices })
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    /// `(M, K, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (m, k) = self.matrices[0].dim();
        (m, k, self.matrices.len())
    }

    pub fn into_inner(self) -> Vec<Array2<f64>> {
        self.matrices
    }
}

/// Draws N mixing matrices with i.i.d. Bernoulli(`bernoulli_p`) entries and
/// rescales every column to unit Euclidean norm.
///
/// A column whose trials all fail is redrawn until it has a nonzero entry.
pub fn generate_mixing(
    m: usize,
    k: usize,
    n: usize,
    bernoulli_p: f64,
    rng: &mut Rng,
) -> Result<MixingSet> {
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "mixing dimensions must be positive, got M={m}, K={k}, N={n}"
        )));
    }
    if !(bernoulli_p > 0.0 && bernoulli_p <= 1.0) {
        return Err(Error::Argument(format!(
            "Bernoulli probability must lie in (0, 1], got {bernoulli_p}"
        )));
    }
    let trial = Bernoulli::new(bernoulli_p).map_err(|e| Error::Argument(e.to_string()))?;
    let mut matrices = Vec::with_capacity(n);
    let mut successes = vec![false; m];
    for _ in 0..n {
        let mut a = Array2::<f64>::zeros((m, k));
        for l in 0..k {
            let count = loop {
                let mut count = 0usize;
                for hit in successes.iter_mut() {
                    *hit = trial.sample(rng);
                    count += usize::from(*hit);
                }
                if count > 0 {
                    break count;
                }
            };
            let entry = 1.0 / (count as f64).sqrt();
            for (j, &hit) in successes.iter().enumerate() {
                if hit {
                    a[[j, l]] = entry;
                }
            }
        }
        matrices.push(a);
    }
    MixingSet::new(matrices)
}

/// The true s-row-sparse nonnegative K×N matrix and the intensity it was
/// scaled by.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    matrix: Array2<f64>,
    target_row_sparsity: usize,
    intensity: f64,
}

impl GroundTruth {
    pub fn new(matrix: Array2<f64>, intensity: f64) -> Result<Self> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::Argument(format!(
                "intensity must be positive, got {intensity}"
            )));
        }
        if let Some(v) = matrix.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "ground truth has a negative or non-finite entry {v}"
            )));
        }
        let target_row_sparsity = row_sparsity(&matrix);
        Ok(Self {
            matrix,
            target_row_sparsity,
            intensity,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row_sparsity(&self) -> usize {
        self.target_row_sparsity
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// The same pattern rescaled to intensity `theta`.
    pub fn with_intensity(&self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Argument(format!("intensity must be positive, got {theta}")));
        }
        let factor = theta / self.intensity;
        Ok(Self {
            matrix: &self.matrix * factor,
            target_row_sparsity: self.target_row_sparsity,
            intensity: theta,
        })
    }
}

/// Number of rows with at least one nonzero entry.
pub fn row_sparsity(x: &Array2<f64>) -> usize {
    x.axis_iter(Axis(0))
        .filter(|row| row.iter().any(|v| *v != 0.0))
        .count()
}

/// Picks `s` distinct rows uniformly, fills them with |N(0,1)| draws and
/// multiplies the whole matrix by `theta`.
pub fn generate_truth(k: usize, n: usize, s: usize, theta: f64, rng: &mut Rng) -> Result<GroundTruth> {
    if k == 0 || n == 0 {
        return Err(Error::Dimension(format!("truth dimensions must be positive, got K={k}, N={n}")));
    }
    if s == 0 || s > k {
        return Err(Error::Argument(format!("row sparsity must satisfy 1 <= s <= K, got s={s}, K={k}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Argument(format!("intensity must be positive, got {theta}")));
    }
    let mut rows = index::sample(rng, k, s).into_vec();
    rows.sort_unstable();
    let mut x = Array2::<f64>::zeros((k, n));
    for &row in &rows {
        for col in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            x[[row, col]] = z.abs() * theta;
        }
    }
    GroundTruth::new(x, theta)
}

/// Poisson counts and the rates they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    counts: Array2<u64>,
    rates: Array2<f64>,
}

impl Observations {
    /// M×N matrix of counts `Y`.
    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    /// M×N matrix whose column i is `A_i x̃_i`.
    pub fn rates(&self) -> &Array2<f64> {
        &self.rates
    }

    /// Total count ψ.
    pub fn total(&self) -> f64 {
        self.counts.iter().map(|&c| c as f64).sum()
    }
}

/// Column-wise rates `A_i x_i` as an M×N matrix.
pub fn rates_of(mixing: &MixingSet, x: &Array2<f64>) -> Result<Array2<f64>> {
    let (m, k, n) = mixing.dims();
    if x.dim() != (k, n) {
        return Err(Error::Dimension(format!(
            "matrix has shape {:?}, expected ({k}, {n})",
            x.dim()
        )));
    }
    let mut rates = Array2::<f64>::zeros((m, n));
    for (i, a) in mixing.matrices().iter().enumerate() {
        rates.column_mut(i).assign(&a.dot(&x.column(i)));
    }
    Ok(rates)
}

/// Draws `y_i(j) ~ Poisson((A_i x̃_i)(j))` independently. A zero rate yields
/// a zero count without consuming randomness.
pub fn sample_observations(mixing: &MixingSet, truth: &GroundTruth, rng: &mut Rng) -> Result<Observations> {
    let rates = rates_of(mixing, truth.matrix())?;
    let counts = sample_counts(&rates, rng)?;
    Ok(Observations { counts, rates })
}

fn sample_counts(rates: &Array2<f64>, rng: &mut Rng) -> Result<Array2<u64>> {
    let (m, n) = rates.dim();
    let mut counts = Array2::<u64>::zeros((m, n));
    for i in 0..n {
        for j in 0..m {
            let rate = rates[[j, i]];
            counts[[j, i]] = poisson_draw(rate, rng)?;
        }
    }
    Ok(counts)
}

pub(crate) fn poisson_draw(rate: f64, rng: &mut Rng) -> Result<u64> {
    if rate == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(rate).map_err(|e| Error::Domain(format!("Poisson rate {rate}: {e}")))?;
    let draw: f64 = dist.sample(rng);
    Ok(draw as u64)
}

/// Generation parameters of a synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub s: usize,
    pub theta: f64,
    pub bernoulli_p: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            m: 30,
            k: 50,
            n: 10,
            s: 3,
            theta: 1e3,
            bernoulli_p: 0.7,
        }
    }
}

/// Full state of one synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    mixing: MixingSet,
    truth: GroundTruth,
    obs: Observations,
    seed: u64,
    rip_delta_2s: Option<f64>,
}

impl ProblemInstance {
    /// Generates mixing matrices, truth and counts from independent streams
    /// of `seed`.
    pub fn generate(params: &InstanceParams, seed: u64) -> Result<Self> {
        let mixing = generate_mixing(
            params.m,
            params.k,
            params.n,
            params.bernoulli_p,
            &mut rng::stream(seed, Stream::Mixing),
        )?;
        let truth = generate_truth(
            params.k,
            params.n,
            params.s,
            params.theta,
            &mut rng::stream(seed, Stream::Truth),
        )?;
        Self::observe(mixing, truth, seed)
    }

    /// Samples fresh counts for the given mixing matrices and truth from the
    /// observation stream of `seed`.
    pub fn observe(mixing: MixingSet, truth: GroundTruth, seed: u64) -> Result<Self> {
        let obs = sample_observations(&mixing, &truth, &mut rng::stream(seed, Stream::Observations))?;
        Ok(Self {
            mixing,
            truth,
            obs,
            seed,
            rip_delta_2s: None,
        })
    }

    /// Assembles an instance from explicit parts; rates are recomputed.
    pub fn from_parts(mixing: MixingSet, truth: GroundTruth, counts: Array2<u64>, seed: u64) -> Result<Self> {
        let rates = rates_of(&mixing, truth.matrix())?;
        if counts.dim() != rates.dim() {
            return Err(Error::Dimension(format!(
                "counts have shape {:?}, expected {:?}",
                counts.dim(),
                rates.dim()
            )));
        }
        Ok(Self {
            mixing,
            truth,
            obs: Observations { counts, rates },
            seed,
            rip_delta_2s: None,
        })
    }

    /// Same mixing matrices and truth pattern at intensity `theta`, with
    /// counts redrawn from the observation stream of `seed`.
    pub fn rescaled(&self, theta: f64, seed: u64) -> Result<Self> {
        let truth = self.truth.with_intensity(theta)?;
        let mut out = Self::observe(self.mixing.clone(), truth, seed)?;
        out.rip_delta_2s = self.rip_delta_2s;
        Ok(out)
    }

    /// Same mixing matrices and truth with counts redrawn under `seed`.
    pub fn resampled(&self, seed: u64) -> Result<Self> {
        self.rescaled(self.truth.intensity(), seed)
    }

    pub fn with_rip_delta(mut self, delta: f64) -> Self {
        self.rip_delta_2s = Some(delta);
        self
    }

    pub fn mixing(&self) -> &MixingSet {
        &self.mixing
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn observations(&self) -> &Observations {
        &self.obs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rip_delta_2s(&self) -> Option<f64> {
        self.rip_delta_2s
    }

    /// `(M, K, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.mixing.dims()
    }

    /// Measurement system (mixing matrices and counts) seen by the solvers.
    pub fn system(&self) -> MmvSystem {
        MmvSystem {
            matrices: self.mixing.matrices().to_vec(),
            counts: self.obs.counts.mapv(|c| c as f64),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let (m, k, n) = self.dims();
        let doc = InstanceDoc {
            schema: INSTANCE_SCHEMA.to_string(),
            dims: DimsDoc { m, k, n },
            seed: self.seed,
            theta: self.truth.intensity(),
            s: self.truth.row_sparsity(),
            mixing: self
                .mixing
                .matrices()
                .iter()
                .map(|a| a.iter().copied().collect())
                .collect(),
            truth: self.truth.matrix().iter().copied().collect(),
            counts: self.obs.counts.iter().copied().collect(),
            rip_delta_2s: self.rip_delta_2s,
        };
        Ok(to_json_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        if doc.schema != INSTANCE_SCHEMA {
            return Err(Error::Format(format!(
                "unsupported schema {:?}, expected {INSTANCE_SCHEMA:?}",
                doc.schema
            )));
        }
        let DimsDoc { m, k, n } = doc.dims;
        if doc.mixing.len() != n {
            return Err(Error::Format(format!("expected {n} mixing matrices, found {}", doc.mixing.len())));
        }
        let matrices = doc
            .mixing
            .into_iter()
            .map(|flat| reshape(flat, (m, k), "mixing matrix"))
            .collect::<Result<Vec<_>>>()?;
        let mixing = MixingSet::new(matrices)?;
        let truth = GroundTruth::new(reshape(doc.truth, (k, n), "truth")?, doc.theta)?;
        if truth.row_sparsity() != doc.s {
            return Err(Error::Format(format!(
                "truth has {} nonzero rows but the document declares s={}",
                truth.row_sparsity(),
                doc.s
            )));
        }
        let counts = reshape(doc.counts, (m, n), "counts")?;
        let mut instance = Self::from_parts(mixing, truth, counts, doc.seed)?;
        instance.rip_delta_2s = doc.rip_delta_2s;
        Ok(instance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn reshape<T>(flat: Vec<T>, shape: (usize, usize), what: &str) -> Result<Array2<T>> {
    let len = flat.len();
    Array2::from_shape_vec(shape, flat)
        .map_err(|_| Error::Format(format!("{what} has {len} entries, expected {}×{}", shape.0, shape.1)))
}

#[derive(Serialize, Deserialize)]
struct DimsDoc {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    schema: String,
    dims: DimsDoc,
    seed: u64,
    theta: f64,
    s: usize,
    mixing: Vec<Vec<f64>>,
    truth: Vec<f64>,
    counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rip_delta_2s: Option<f64>,
}

/// Mixing matrices and counts (as doubles): the data the constraint
/// functions and solvers operate on.
///
/// Unlike [`MixingSet`] this does not require unit-norm columns, so small
/// hand-built systems can be used directly.
#[derive(Debug, Clone, PartialEq)]
pub struct MmvSystem {
    matrices: Vec<Array2<f64>>,
    counts: Array2<f64>,
}

impl MmvSystem {
    pub fn new(matrices: Vec<Array2<f64>>, counts: Array2<f64>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Dimension("at least one mixing matrix is required".into()))?;
        let (m, k) = first.dim();
        if matrices.iter().any(|a| a.dim() != (m, k)) {
            return Err(Error::Dimension("mixing matrices differ in shape".into()));
        }
        if counts.dim() != (m, matrices.len()) {
            return Err(Error::Dimension(format!(
                "counts have shape {:?}, expected ({m}, {})",
                counts.dim(),
                matrices.len()
            )));
        }
        let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
        if matrices.iter().any(|a| a.iter().any(bad)) || counts.iter().any(bad) {
            return Err(Error::Domain("mixing matrices and counts must be finite and nonnegative".into()));
        }
        Ok(Self { matrices, counts })
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    /// M×N counts.
    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }

    /// `(M, K, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (m, k) = self.matrices[0].dim();
        (m, k, self.matrices.len())
    }

    /// Total count ψ.
    pub fn total_count(&self) -> f64 {
        self.counts.sum()
    }

    /// ‖y_i‖₁ per column.
    pub fn column_masses(&self) -> Vec<f64> {
        self.counts.axis_iter(Axis(1)).map(|c| c.sum()).collect()
    }

    pub fn count_column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.counts.column(i)
    }

    pub(crate) fn check_shape(&self, x: &Array2<f64>) -> Result<()> {
        let (_, k, n) = self.dims();
        if x.dim() != (k, n) {
            return Err(Error::Dimension(format!("matrix has shape {:?}, expected ({k}, {n})", x.dim())));
        }
        Ok(())
    }
}

/// RIP constant of one support: `max(1 − σ_min, σ_max − 1)` over the
/// singular values of the selected columns (un-squared norms).
fn support_delta(a: &Array2<f64>, support: &[usize]) -> f64 {
    let s = support.len();
    let gram = DMatrix::from_fn(s, s, |p, q| a.column(support[p]).dot(&a.column(support[q])));
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma_min = lo.max(0.0).sqrt();
    let sigma_max = hi.max(0.0).sqrt();
    (1.0 - sigma_min).max(sigma_max - 1.0)
}

/// Number of s-subsets of K columns, saturating at `u128::MAX`.
fn binomial(k: usize, s: usize) -> u128 {
    let s = s.min(k - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        acc = match acc.checked_mul((k - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact δ_s of one matrix by enumerating every s-column support.
pub fn rip_constant_exact(a: &Array2<f64>, s: usize) -> Result<f64> {
    let k = a.ncols();
    check_rip_order(k, s)?;
    let mut support: Vec<usize> = (0..s).collect();
    let mut worst = 0.0f64;
    loop {
        worst = worst.max(support_delta(a, &support));
        // advance to the next combination in lexicographic order
        let mut i = s;
        loop {
            if i == 0 {
                return Ok(worst);
            }
            i -= 1;
            if support[i] < k - s + i {
                break;
            }
        }
        support[i] += 1;
        for j in i + 1..s {
            support[j] = support[j - 1] + 1;
        }
    }
}

/// Lower bound on δ_s of one matrix from `num_supports` random supports.
pub fn rip_constant_sampled(a: &Array2<f64>, s: usize, num_supports: usize, rng: &mut Rng) -> Result<f64> {
    check_rip_order(a.ncols(), s)?;
    let mut worst = 0.0f64;
    for _ in 0..num_supports {
        let mut support = index::sample(rng, a.ncols(), s).into_vec();
        support.sort_unstable();
        worst = worst.max(support_delta(a, &support));
    }
    Ok(worst)
}

fn check_rip_order(k: usize, s: usize) -> Result<()> {
    if s == 0 || s > k {
        Err(Error::Argument(format!("RIP order must satisfy 1 <= s <= K, got s={s}, K={k}")))
    } else {
        Ok(())
    }
}

/// Lower bound on the s-restricted isometry constant, maximized over all
/// mixing matrices.
///
/// Supports are enumerated exhaustively when there are at most
/// `num_supports` of them, otherwise `num_supports` random supports are
/// examined per matrix. The result never exceeds the true constant.
pub fn estimate_rip_constant(mixing: &MixingSet, s: usize, num_supports: usize, rng: &mut Rng) -> Result<f64> {
    let (_, k, _) = mixing.dims();
    check_rip_order(k, s)?;
    let exhaustive = binomial(k, s) <= num_supports as u128;
    let mut worst = 0.0f64;
    for a in mixing.matrices() {
        let delta = if exhaustive {
            rip_constant_exact(a, s)?
        } else {
            rip_constant_sampled(a, s, num_supports, rng)?
        };
        worst = worst.max(delta);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rng(seed: u64) -> Rng {
        rng::stream(seed, Stream::Analysis)
    }

    fn max_column_norm_error(set: &MixingSet) -> f64 {
        set.matrices()
            .iter()
            .flat_map(|a| a.axis_iter(Axis(1)).map(|c| (c.dot(&c).sqrt() - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mixing_default_dims() {
        let set = generate_mixing(30, 50, 10, 0.7, &mut rng(1)).unwrap();
        assert_eq!(set.dims(), (30, 50, 10));
        assert!(max_column_norm_error(&set) < 1e-12);
        assert!(set.matrices().iter().all(|a| a.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn mixing_certain_trials() {
        let set = generate_mixing(2, 2, 1, 1.0, &mut rng(2)).unwrap();
        let expected = 1.0 / 2f64.sqrt();
        assert!(set.matrices()[0].iter().all(|v| (*v - expected).abs() < 1e-15));
    }

    #[test]
    fn mixing_low_probability_redraws_empty_columns() {
        let set = generate_mixing(3, 40, 2, 0.05, &mut rng(3)).unwrap();
        assert!(max_column_norm_error(&set) < 1e-12);
    }

    #[test]
    fn mixing_rejects_bad_arguments() {
        assert!(matches!(generate_mixing(0, 5, 1, 0.5, &mut rng(0)), Err(Error::Dimension(_))));
        assert!(matches!(generate_mixing(3, 5, 1, 0.0, &mut rng(0)), Err(Error::Argument(_))));
    }

    #[test]
    fn truth_has_exact_row_sparsity() {
        let t = generate_truth(50, 10, 3, 100.0, &mut rng(4)).unwrap();
        assert_eq!(row_sparsity(t.matrix()), 3);
        assert!(t.matrix().iter().all(|v| *v >= 0.0));
        let full = generate_truth(5, 2, 5, 1.0, &mut rng(5)).unwrap();
        assert_eq!(full.row_sparsity(), 5);
        assert!(matches!(generate_truth(4, 2, 5, 1.0, &mut rng(0)), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_truth_gives_zero_counts() {
        let mixing = generate_mixing(4, 6, 2, 0.7, &mut rng(6)).unwrap();
        let truth = GroundTruth::new(Array2::zeros((6, 2)), 1.0).unwrap();
        let obs = sample_observations(&mixing, &truth, &mut rng(7)).unwrap();
        assert!(obs.counts().iter().all(|c| *c == 0));
    }

    #[test]
    fn generation_is_deterministic() {
        let p = InstanceParams::default();
        let a = ProblemInstance::generate(&p, 11).unwrap();
        let b = ProblemInstance::generate(&p, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = ProblemInstance::generate(&p, 12).unwrap();
        assert_ne!(a.observations().counts(), c.observations().counts());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let p = InstanceParams { m: 4, k: 6, n: 2, s: 2, theta: 10.0, bernoulli_p: 0.7 };
        let inst = ProblemInstance::generate(&p, 3).unwrap().with_rip_delta(0.25);
        let text = inst.to_json().unwrap();
        assert!(text.starts_with(r#"{"schema":"ccjs-instance/1","dims":{"M":4,"K":6,"N":2},"seed":3,"#));
        let back = ProblemInstance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        let wrong = text.replace("ccjs-instance/1", "ccjs-instance/9");
        assert!(matches!(ProblemInstance::from_json(&wrong), Err(Error::Format(_))));
    }

    #[test]
    fn rip_of_identity_is_zero() {
        let eye = Array2::<f64>::eye(5);
        for s in 1..=5 {
            assert!(rip_constant_exact(&eye, s).unwrap().abs() < 1e-12);
        }
        let set = MixingSet::new(vec![eye]).unwrap();
        assert!(estimate_rip_constant(&set, 3, 5, &mut rng(0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rip_of_orthonormal_columns_order_one() {
        let s = 0.5f64.sqrt();
        let a = array![[s, s, 0.0], [s, -s, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
        assert!(rip_constant_exact(&a, 1).unwrap().abs() < 1e-12);
        assert!(rip_constant_exact(&a, 3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rip_known_pair() {
        // two unit columns with inner product c: singular values sqrt(1 ± c)
        let c: f64 = 0.6;
        let a = array![[1.0, c], [0.0, (1.0 - c * c).sqrt()]];
        let delta = rip_constant_exact(&a, 2).unwrap();
        let expected = (1.0 - (1.0 - c).sqrt()).max((1.0 + c).sqrt() - 1.0);
        assert!((delta - expected).abs() < 1e-12);
    }

    #[test]
    fn rip_rejects_bad_order() {
        let eye = Array2::<f64>::eye(3);
        assert!(matches!(rip_constant_exact(&eye, 4), Err(Error::Argument(_))));
        assert!(matches!(rip_constant_exact(&eye, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(12, 6), 924);
        assert_eq!(binomial(50, 6), 15_890_700);
        assert_eq!(binomial(5, 5), 1);
    }
}
