//! Soft-basket nutrition regularizer.
//!
//! A user's scores over mapped products become a temperature-scaled softmax
//! ("soft basket"). Four penalties act on the basket's expected nutrients:
//! macro ratio (L1 to a target share), protein density (hinge below a
//! g/100 kcal floor), quantity (absolute gap to a protein total) and protein
//! variance. Their weighted sum is the regularizer added to the ranking loss.

mod train;

use serde::{Deserialize, Serialize};

use crate::catalog::{Dataset, NutrientVector};
use crate::error::{Error, Result};
use crate::neural::Embeddings;
use crate::physio::PhysioParams;

pub use train::{
    expected_density, objective_grad, thermo_term, train, BatchObjective, EpochLog, TrainConfig, TrainOutcome, LOG_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoTargets {
    /// protein, carb, fat shares
    pub r_star: [f64; 3],
    /// g protein per 100 kcal
    pub rho_star: f64,
    /// grams
    pub pi_star: f64,
    pub beta_size: f64,
    /// ratio, density, quantity, variance
    pub weights: [f64; 4],
}

impl Default for ThermoTargets {
    fn default() -> Self {
        Self {
            r_star: [0.30, 0.40, 0.30],
            rho_star: 5.0,
            pi_star: 100.0,
            beta_size: 8.0,
            weights: [1.0, 1.0, 0.02, 0.001],
        }
    }
}

impl ThermoTargets {
    /// Defaults with `pi_star` set to the cohort-mean protein target.
    pub fn for_cohort(dataset: &Dataset, physio: &PhysioParams) -> Self {
        let n = dataset.users.len().max(1) as f64;
        let mean = dataset
            .users
            .iter()
            .map(|u| physio.protein_target(u))
            .sum::<f64>()
            / n;
        Self {
            pi_star: mean,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let sum: f64 = self.r_star.iter().sum();
        if self.r_star.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "r_star {:?} must be non-negative and sum to 1",
                self.r_star
            )));
        }
        if self.rho_star <= 0.0 || self.beta_size < 1.0 {
            return Err(Error::InvalidConfig(
                "rho_star must be > 0 and beta_size >= 1".into(),
            ));
        }
        if self.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig("thermo weights must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self {
            tau_start: 2.0,
            tau_end: 0.5,
        }
    }
}

impl TemperatureSchedule {
    pub fn check(&self) -> Result<()> {
        if !(self.tau_start >= self.tau_end && self.tau_end > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need tau_start >= tau_end > 0, got {} / {}",
                self.tau_start, self.tau_end
            )));
        }
        Ok(())
    }

    /// Linear interpolation, first epoch at `tau_start`, last at `tau_end`.
    pub fn tau(&self, epoch: usize, epochs: usize) -> f64 {
        if epochs <= 1 {
            return self.tau_start;
        }
        let t = epoch as f64 / (epochs - 1) as f64;
        self.tau_start + (self.tau_end - self.tau_start) * t
    }
}

/// Numerically stable temperature softmax.
pub fn soft_basket(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("soft basket over no products".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be > 0")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

fn expectation(dist: &[f64], table: &[NutrientVector]) -> NutrientVector {
    let mut acc = [0.0; 6];
    for (p, n) in dist.iter().zip(table) {
        for (a, v) in acc.iter_mut().zip(n.to_array()) {
            *a += p * v;
        }
    }
    NutrientVector::from_array(acc)
}

/// Component-wise expectation. Every product carrying probability mass must
/// have nutrients.
pub fn expected_nutrients(dist: &[f64], table: &[Option<NutrientVector>]) -> Result<NutrientVector> {
    if dist.len() != table.len() {
        return Err(Error::DimensionMismatch {
            expected: table.len(),
            actual: dist.len(),
        });
    }
    let mut acc = NutrientVector::default();
    for (i, (p, n)) in dist.iter().zip(table).enumerate() {
        match n {
            Some(n) => acc = acc.add(n.scaled(*p)),
            None if *p > 0.0 => return Err(Error::Unmapped(i)),
            None => {}
        }
    }
    Ok(acc)
}

fn macro_sum(e: &NutrientVector) -> f64 {
    e.prot + e.carb + e.fat
}

pub fn ratio_loss(e: &NutrientVector, r_star: &[f64; 3]) -> Result<f64> {
    let s = macro_sum(e);
    if !(s > 0.0) {
        return Err(Error::Degenerate("expected macro sum is zero".into()));
    }
    let shares = [e.prot / s, e.carb / s, e.fat / s];
    Ok(shares.iter().zip(r_star).map(|(a, b)| (a - b).abs()).sum())
}

pub fn density_loss(e: &NutrientVector, rho_star: f64) -> Result<f64> {
    if !(e.cal > 0.0) {
        return Err(Error::Degenerate("expected calories are zero".into()));
    }
    Ok((rho_star - 100.0 * e.prot / e.cal).max(0.0))
}

pub fn quantity_loss(e: &NutrientVector, beta_size: f64, pi_star: f64) -> f64 {
    (e.prot * beta_size - pi_star).abs()
}

pub fn variance_loss(dist: &[f64], protein: &[f64]) -> f64 {
    let (m1, m2) = dist
        .iter()
        .zip(protein)
        .fold((0.0, 0.0), |(a, b), (p, x)| (a + p * x, b + p * x * x));
    (m2 - m1 * m1).max(0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermoBreakdown {
    pub ratio: f64,
    pub density: f64,
    pub quantity: f64,
    pub variance: f64,
    /// Weighted sum.
    pub total: f64,
}

impl ThermoBreakdown {
    pub fn weighted(terms: [f64; 4], w: &[f64; 4]) -> Self {
        Self {
            ratio: terms[0],
            density: terms[1],
            quantity: terms[2],
            variance: terms[3],
            total: terms.iter().zip(w).map(|(t, w)| t * w).sum(),
        }
    }

    fn accumulate(&mut self, other: &Self, k: f64) {
        self.ratio += k * other.ratio;
        self.density += k * other.density;
        self.quantity += k * other.quantity;
        self.variance += k * other.variance;
        self.total += k * other.total;
    }
}

pub fn thermo_loss(
    dist: &[f64],
    table: &[Option<NutrientVector>],
    targets: &ThermoTargets,
) -> Result<ThermoBreakdown> {
    let e = expected_nutrients(dist, table)?;
    let protein: Vec<f64> = table.iter().map(|n| n.map_or(0.0, |n| n.prot)).collect();
    Ok(ThermoBreakdown::weighted(
        [
            ratio_loss(&e, &targets.r_star)?,
            density_loss(&e, targets.rho_star)?,
            quantity_loss(&e, targets.beta_size, targets.pi_star),
            variance_loss(dist, &protein),
        ],
        &targets.weights,
    ))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Regularizer for one score vector over mapped products, with its gradient
/// with respect to those scores. Kinks (|·| at 0, hinge at 0) take the zero
/// subgradient.
pub fn thermo_with_score_grad(
    scores: &[f64],
    tau: f64,
    table: &[NutrientVector],
    targets: &ThermoTargets,
) -> Result<(ThermoBreakdown, Vec<f64>)> {
    let dist = soft_basket(scores, tau)?;
    let e = expectation(&dist, table);
    let s = macro_sum(&e);
    if !(s > 0.0 && e.cal > 0.0) {
        return Err(Error::Degenerate("soft basket has no macros or calories".into()));
    }
    let w = &targets.weights;

    // dT/dE for each nutrient slot [cal, prot, carb, fat], plus dT/dE[prot²].
    let mut d_e = [0.0f64; 4];
    let macros = [e.prot, e.carb, e.fat];
    let shares = macros.map(|m| m / s);
    let signs: [f64; 3] = std::array::from_fn(|k| sign(shares[k] - targets.r_star[k]));
    let ratio: f64 = (0..3).map(|k| (shares[k] - targets.r_star[k]).abs()).sum();
    let weighted_signs: f64 = (0..3).map(|k| signs[k] * shares[k]).sum();
    for k in 0..3 {
        d_e[k + 1] += w[0] * (signs[k] - weighted_signs) / s;
    }

    let gap = targets.rho_star - 100.0 * e.prot / e.cal;
    let density = gap.max(0.0);
    if gap > 0.0 {
        d_e[1] += w[1] * (-100.0 / e.cal);
        d_e[0] += w[1] * (100.0 * e.prot / (e.cal * e.cal));
    }

    let q = e.prot * targets.beta_size - targets.pi_star;
    d_e[1] += w[2] * sign(q) * targets.beta_size;

    let m2: f64 = dist.iter().zip(table).map(|(p, n)| p * n.prot * n.prot).sum();
    let var = m2 - e.prot * e.prot;
    let mut d_m2 = 0.0;
    if var > 0.0 {
        d_m2 = w[3];
        d_e[1] += w[3] * (-2.0 * e.prot);
    }

    let breakdown =
        ThermoBreakdown::weighted([ratio, density, q.abs(), var.max(0.0)], w);

    // dT/dp_i, then softmax Jacobian.
    let g: Vec<f64> = table
        .iter()
        .map(|n| {
            d_e[0] * n.cal + d_e[1] * n.prot + d_e[2] * n.carb + d_e[3] * n.fat
                + d_m2 * n.prot * n.prot
        })
        .collect();
    let mean_g: f64 = dist.iter().zip(&g).map(|(p, g)| p * g).sum();
    let d_scores = dist
        .iter()
        .zip(&g)
        .map(|(p, g)| p * (g - mean_g) / tau)
        .collect();
    Ok((breakdown, d_scores))
}

/// Mapped-product view used by training and evaluation.
#[derive(Clone, Debug)]
pub struct MappedTable {
    pub products: Vec<usize>,
    pub nutrients: Vec<NutrientVector>,
}

impl MappedTable {
    pub fn from_graph(graph: &crate::kgraph::SemanticGraph) -> Self {
        let products = graph.mapped_products();
        let nutrients = products
            .iter()
            .map(|&p| graph.resolved_nutrients[p].unwrap())
            .collect();
        Self { products, nutrients }
    }

    pub fn scores(&self, emb: &Embeddings, user_vec: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
        self.products
            .iter()
            .map(|&p| crate::neural::score_vec(user_vec, emb, p))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub user: usize,
    pub products: Vec<usize>,
}

/// Top-`k` products by score, ties by ascending index. With `mapped` given,
/// only products flagged true are eligible.
pub fn candidates(user: usize, scores: &[f64], k: usize, mapped: Option<&[bool]>) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len())
        .filter(|&p| mapped.map_or(true, |m| m[p]))
        .collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(CandidateSet { user, products: idx })
}
