//! Probabilistic linear discriminant analysis.
//!
//! Generative model (Ioffe 2006): a feature vector is `x = m + A·u`, where the
//! latent `u = v + ε` has a class center `v ~ N(0, Ψ)` with diagonal `Ψ` and
//! within-class noise `ε ~ N(0, I)`. Training follows the closed-form recipe:
//!
//! 1. within- and between-class scatter `S_w`, `S_b` (both normalized by `N`);
//! 2. `W` solves `S_b w = λ S_w w`;
//! 3. `Λ_b = Wᵀ S_b W`, `Λ_w = Wᵀ S_w W`, `A = W⁻ᵀ (n/(n−1) Λ_w)^½`;
//! 4. `Ψ = max(0, (n−1)/n · Λ_b/Λ_w − 1/n)`;
//! 5. keep the `q` directions with the largest `Ψ`.
//!
//! With unequal class sizes `n` is the harmonic mean of the sizes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::featstore::{FeatureStore, Split};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Pivot ratio below which the within-class scatter is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-12;
const RIDGE_FACTOR: f64 = 1e-6;

/// A point in the latent space of a [`PldaModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    m: DVector<f64>,
    /// dim × q
    a: DMatrix<f64>,
    /// q × dim
    a_inv: DMatrix<f64>,
    psi: Vec<f64>,
    n_per_class: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    m: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "A_inv")]
    a_inv: Vec<f64>,
    psi: Vec<f64>,
    q: usize,
    dim: usize,
    n_per_class: f64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl PldaModel {
    /// Assembles a model from raw parameters, checking shapes and invariants.
    pub fn from_parts(
        m: Vec<f64>,
        a: DMatrix<f64>,
        a_inv: DMatrix<f64>,
        psi: Vec<f64>,
        n_per_class: f64,
    ) -> Result<Self> {
        let dim = m.len();
        let q = psi.len();
        if q == 0 || dim == 0 {
            return Err(Error::InvalidModel("empty model".into()));
        }
        if a.shape() != (dim, q) || a_inv.shape() != (q, dim) {
            return Err(Error::InvalidModel(format!(
                "A is {:?} and A_inv is {:?}, expected ({dim}, {q}) and ({q}, {dim})",
                a.shape(),
                a_inv.shape()
            )));
        }
        if psi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("psi must be finite and non-negative".into()));
        }
        if !(n_per_class.is_finite() && n_per_class > 1.0) {
            return Err(Error::InvalidModel("n_per_class must exceed 1".into()));
        }
        let model = Self {
            m: DVector::from_vec(m),
            a,
            a_inv,
            psi,
            n_per_class,
        };
        let err = model.left_inverse_error();
        if !(err <= 1e-8) {
            return Err(Error::InvalidModel(format!(
                "A_inv·A deviates from identity by {err:e}"
            )));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn q(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn shift(&self) -> &[f64] {
        self.m.as_slice()
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inverse_transform(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn n_per_class(&self) -> f64 {
        self.n_per_class
    }

    /// Max-abs deviation of `A_inv·A` from the identity.
    pub fn left_inverse_error(&self) -> f64 {
        let prod = &self.a_inv * &self.a;
        let q = self.q();
        let mut worst: f64 = 0.0;
        for i in 0..q {
            for j in 0..q {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `u = A_inv·(x − m)`.
    pub fn to_latent(&self, x: &[f64]) -> Result<LatentVector> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let q = self.q();
        let mut u = vec![0.0; q];
        for (k, (&xk, &mk)) in x.iter().zip(self.m.iter()).enumerate() {
            let d = xk - mk;
            if d == 0.0 {
                continue;
            }
            let col = self.a_inv.column(k);
            for (uj, &aj) in u.iter_mut().zip(col.iter()) {
                *uj += aj * d;
            }
        }
        Ok(LatentVector(u))
    }

    /// `x = m + A·u`.
    pub fn from_latent(&self, u: &LatentVector) -> Result<Vec<f64>> {
        self.check_latent(u)?;
        let x = &self.m + &self.a * DVector::from_column_slice(u.as_slice());
        Ok(x.as_slice().to_vec())
    }

    fn check_latent(&self, u: &LatentVector) -> Result<()> {
        if u.len() != self.q() {
            return Err(Error::DimensionMismatch {
                expected: self.q(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Log predictive density of `u_star` belonging to the class that produced
    /// the pair `(u1, u2)`:
    /// `N(u* | Ψ/(2Ψ+I)·(u1+u2), Ψ/(2Ψ+I) + I)`.
    pub fn pair_logdensity(
        &self,
        u_star: &LatentVector,
        u1: &LatentVector,
        u2: &LatentVector,
    ) -> Result<f64> {
        self.check_latent(u_star)?;
        self.check_latent(u1)?;
        self.check_latent(u2)?;
        Ok(self.group_logdensity_sum(u_star.as_slice(), 2.0, |j| u1.0[j] + u2.0[j]))
    }

    /// Log predictive density of `u_star` given `count` exemplars of a class
    /// whose latent coordinates sum to `sum(j)`.
    fn group_logdensity_sum(&self, u_star: &[f64], count: f64, sum: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (j, (&psi, &us)) in self.psi.iter().zip(u_star).enumerate() {
            let shrink = psi / (count * psi + 1.0);
            let mean = shrink * sum(j);
            let var = shrink + 1.0;
            let r = us - mean;
            acc += -0.5 * (LN_2PI + var.ln() + r * r / var);
        }
        acc
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            m: self.m.as_slice().to_vec(),
            a: row_major(&self.a),
            a_inv: row_major(&self.a_inv),
            psi: self.psi.clone(),
            q: self.q(),
            dim: self.dim(),
            n_per_class: self.n_per_class,
        };
        let json = serde_json::to_vec_pretty(&file).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let f: ModelFile = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        if f.m.len() != f.dim
            || f.psi.len() != f.q
            || f.a.len() != f.dim * f.q
            || f.a_inv.len() != f.dim * f.q
        {
            return Err(Error::InvalidModel(format!(
                "{}: array lengths disagree with dim={} q={}",
                path.display(),
                f.dim,
                f.q
            )));
        }
        let a = DMatrix::from_row_slice(f.dim, f.q, &f.a);
        let a_inv = DMatrix::from_row_slice(f.q, f.dim, &f.a_inv);
        Self::from_parts(f.m, a, a_inv, f.psi, f.n_per_class)
    }
}

/// Largest admissible latent dimensionality for `store`: `min(dim, #categories − 1)`.
pub fn default_q(store: &FeatureStore) -> usize {
    let cats = training_groups(store).len();
    store.dim().min(cats.saturating_sub(1))
}

fn training_groups(store: &FeatureStore) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (cat, idx) in store.categories() {
        let train: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| store.item(i).split == Split::Train)
            .collect();
        groups.insert(cat.as_str(), train);
    }
    groups
}

/// Fits a PLDA model on the training split of `store`, keeping `q` latent dimensions.
pub fn fit_plda(store: &FeatureStore, q: usize) -> Result<PldaModel> {
    let groups = training_groups(store);
    for (cat, idx) in &groups {
        if idx.len() < 2 {
            return Err(Error::TooFewItems {
                category: cat.to_string(),
                count: idx.len(),
            });
        }
    }
    if groups.len() < 2 {
        return Err(Error::LatentDimOutOfRange { q, max: 0 });
    }
    let dim = store.dim();
    let max_q = dim.min(groups.len() - 1);
    if q == 0 || q > max_q {
        return Err(Error::LatentDimOutOfRange { q, max: max_q });
    }

    let total: usize = groups.values().map(Vec::len).sum();
    let n_total = total as f64;
    let n = groups.len() as f64 / groups.values().map(|g| 1.0 / g.len() as f64).sum::<f64>();

    let mut grand = DVector::<f64>::zeros(dim);
    let mut class_means = Vec::with_capacity(groups.len());
    for idx in groups.values() {
        let mut mean = DVector::<f64>::zeros(dim);
        for &i in idx {
            mean += DVector::from_column_slice(&store.item(i).vector);
        }
        grand += &mean;
        mean /= idx.len() as f64;
        class_means.push(mean);
    }
    grand /= n_total;

    let mut s_w = DMatrix::<f64>::zeros(dim, dim);
    let mut s_b = DMatrix::<f64>::zeros(dim, dim);
    for (idx, mean) in groups.values().zip(&class_means) {
        for &i in idx {
            let d = DVector::from_column_slice(&store.item(i).vector) - mean;
            s_w.ger(1.0, &d, &d, 1.0);
        }
        let d = mean - &grand;
        s_b.ger(idx.len() as f64, &d, &d, 1.0);
    }
    s_w /= n_total;
    s_b /= n_total;

    let (s_w, chol) = regularized_cholesky(s_w)?;
    let l = chol.l();

    // C = L⁻¹ S_b L⁻ᵀ shares its eigenvalues with the generalized problem.
    let l_inv_sb = l
        .solve_lower_triangular(&s_b)
        .ok_or(Error::SingularScatter)?;
    let c = l
        .solve_lower_triangular(&l_inv_sb.transpose())
        .ok_or(Error::SingularScatter)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let lt = l.transpose();
    let scale = n / (n - 1.0);
    let mut a = DMatrix::<f64>::zeros(dim, q);
    let mut a_inv = DMatrix::<f64>::zeros(q, dim);
    let mut psi = Vec::with_capacity(q);
    for (col, &k) in order.iter().take(q).enumerate() {
        let w = lt
            .solve_upper_triangular(&eig.eigenvectors.column(k).into_owned())
            .ok_or(Error::SingularScatter)?;
        let sw_w = &s_w * &w;
        let lambda_w = w.dot(&sw_w);
        let lambda_b = w.dot(&(&s_b * &w));
        let d = (scale * lambda_w).sqrt();
        a.set_column(col, &(sw_w * (d / lambda_w)));
        a_inv.set_row(col, &(w / d).transpose());
        psi.push(((n - 1.0) / n * lambda_b / lambda_w - 1.0 / n).max(0.0));
    }

    Ok(PldaModel {
        m: grand,
        a,
        a_inv,
        psi,
        n_per_class: n,
    })
}

fn regularized_cholesky(
    mut s_w: DMatrix<f64>,
) -> Result<(DMatrix<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let dim = s_w.nrows();
    let trace = s_w.trace();
    if !(trace > 0.0) {
        return Err(Error::SingularScatter);
    }
    if let Some(chol) = s_w.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p * p), hi.max(p * p)));
        if lo > SINGULAR_PIVOT_RATIO * hi {
            return Ok((s_w, chol));
        }
    }
    let ridge = RIDGE_FACTOR * trace / dim as f64;
    for i in 0..dim {
        s_w[(i, i)] += ridge;
    }
    let chol = s_w.clone().cholesky().ok_or(Error::SingularScatter)?;
    Ok((s_w, chol))
}

/// Per-class latent summaries used to classify new feature vectors with the
/// multi-exemplar PLDA predictive.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    classes: Vec<(String, f64, Vec<f64>)>,
}

impl ClassIndex {
    /// Summarizes every category's training items.
    pub fn build(model: &PldaModel, store: &FeatureStore) -> Result<Self> {
        let mut classes = Vec::new();
        for (cat, idx) in training_groups(store) {
            if idx.is_empty() {
                continue;
            }
            let mut sum = vec![0.0; model.q()];
            for i in &idx {
                let u = model.to_latent(&store.item(*i).vector)?;
                for (s, v) in sum.iter_mut().zip(u.0) {
                    *s += v;
                }
            }
            classes.push((cat.to_string(), idx.len() as f64, sum));
        }
        Ok(Self { classes })
    }

    /// Log predictive density of `u` under every class, in category-id order.
    pub fn logdensities(&self, model: &PldaModel, u: &LatentVector) -> Result<Vec<(String, f64)>> {
        model.check_latent(u)?;
        Ok(self
            .classes
            .iter()
            .map(|(cat, n, sum)| {
                (
                    cat.clone(),
                    model.group_logdensity_sum(u.as_slice(), *n, |j| sum[j]),
                )
            })
            .collect())
    }

    /// Most probable category; ties go to the lower category id.
    pub fn predict(&self, model: &PldaModel, x: &[f64]) -> Result<String> {
        let u = model.to_latent(x)?;
        let scores = self.logdensities(model, &u)?;
        let mut best: Option<(String, f64)> = None;
        for (cat, s) in scores {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((cat, s));
            }
        }
        best.map(|(c, _)| c)
            .ok_or(Error::EmptyInput("class index has no classes"))
    }
}

/// Log density of a univariate normal.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}
