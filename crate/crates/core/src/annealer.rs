//! Bundle search: a hybrid candidate pool, elastic-quantity bundles, the
//! physics-minus-desire energy, Metropolis annealing with swap / adjust /
//! reset moves, and an exhaustive oracle for small instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::NutrientVector;
use crate::error::{Error, Result};
use crate::physio::PhysioTargets;

/// Bundle size bounds accepted by the command line and service.
pub const K_RANGE: (usize, usize) = (5, 10);

/// Contiguous integer quantity range `min..=max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantityDomain {
    pub min: u32,
    pub max: u32,
}

impl QuantityDomain {
    pub const ELASTIC: Self = Self { min: 1, max: 3 };
    pub const BINARY: Self = Self { min: 0, max: 1 };

    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min > max {
            return Err(Error::InvalidConfig(format!("empty quantity domain {min}..={max}")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, q: u32) -> bool {
        (self.min..=self.max).contains(&q)
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        self.min..=self.max
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

impl Default for QuantityDomain {
    fn default() -> Self {
        Self::ELASTIC
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub quantities: QuantityDomain,
    pub t0: f64,
    /// Geometric factor per iteration. The default keeps the final
    /// temperature near `t0 * e^-5` over 5000 iterations.
    pub cooling: f64,
    pub iterations: usize,
    pub p_swap: f64,
    pub p_adjust: f64,
    pub p_reset: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            beta: 1.0,
            k: 8,
            quantities: QuantityDomain::ELASTIC,
            t0: 1.0,
            cooling: 0.999,
            iterations: 5000,
            p_swap: 0.5,
            p_adjust: 0.4,
            p_reset: 0.1,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!("alpha {} and beta {} must be >= 0", self.alpha, self.beta));
        }
        if self.k == 0 {
            return bad("bundle size k must be >= 1".into());
        }
        let probs = [self.p_swap, self.p_adjust, self.p_reset];
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("move probabilities {probs:?} must be >= 0 and sum to 1"));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad(format!("cooling {} not in (0, 1)", self.cooling));
        }
        if !(self.t0 > 0.0) {
            return bad(format!("initial temperature {} must be > 0", self.t0));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub k_score: usize,
    pub k_density: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            k_score: 40,
            k_density: 20,
        }
    }
}

/// `(product index, quantity)` pairs with distinct products.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BundleState {
    pub items: Vec<(usize, u32)>,
}

impl BundleState {
    pub fn new(items: Vec<(usize, u32)>) -> Self {
        Self { items }
    }

    pub fn products(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|(p, _)| *p)
    }

    pub fn contains(&self, product: usize) -> bool {
        self.items.iter().any(|(p, _)| *p == product)
    }

    /// Items sorted by product, for order-free comparison.
    pub fn canonical(&self) -> Self {
        let mut items = self.items.clone();
        items.sort_unstable();
        Self { items }
    }

    pub fn check(&self, k: usize, q: &QuantityDomain) -> Result<()> {
        if self.items.len() != k {
            return Err(Error::InvalidArgument(format!(
                "bundle has {} items, expected {k}",
                self.items.len()
            )));
        }
        let mut seen: Vec<usize> = self.products().collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate product in bundle".into()));
        }
        if let Some((p, bad)) = self.items.iter().find(|(_, x)| !q.contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "quantity {bad} of product {p} outside {}..={}",
                q.min, q.max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub l_phys: f64,
    pub l_des: f64,
    pub l_opt: f64,
    pub total_cal: f64,
    pub total_prot: f64,
}

/// What the energy of a bundle depends on. Both slices are indexed by
/// product.
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    pub nutrients: &'a [Option<NutrientVector>],
    pub scores: &'a [f64],
    pub targets: PhysioTargets,
    pub alpha: f64,
    pub beta: f64,
}

fn totals(state: &BundleState, nutrients: &[Option<NutrientVector>]) -> Result<(f64, f64)> {
    let mut cal = 0.0;
    let mut prot = 0.0;
    for &(p, q) in &state.items {
        let n = nutrients
            .get(p)
            .copied()
            .flatten()
            .ok_or(Error::Unmapped(p))?;
        cal += q as f64 * n.cal;
        prot += q as f64 * n.prot;
    }
    Ok((cal, prot))
}

fn relative_penalty(cal: f64, prot: f64, targets: &PhysioTargets, beta: f64) -> f64 {
    (cal - targets.tdee).abs() / targets.tdee
        + beta * (prot - targets.protein_target).abs() / targets.protein_target
}

fn check_targets(targets: &PhysioTargets) -> Result<()> {
    if !(targets.tdee > 0.0 && targets.protein_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "targets must be positive (tdee {}, protein {})",
            targets.tdee, targets.protein_target
        )));
    }
    Ok(())
}

/// Relative calorie gap plus `beta` times the relative protein gap.
pub fn phys_penalty(
    state: &BundleState,
    nutrients: &[Option<NutrientVector>],
    targets: &PhysioTargets,
    beta: f64,
) -> Result<f64> {
    check_targets(targets)?;
    let (cal, prot) = totals(state, nutrients)?;
    Ok(relative_penalty(cal, prot, targets, beta))
}

/// `alpha` times the quantity-weighted mean score. Zero when every
/// quantity is zero.
pub fn desire_reward(state: &BundleState, scores: &[f64], alpha: f64) -> Result<f64> {
    if state.items.is_empty() {
        return Err(Error::InvalidArgument("empty bundle".into()));
    }
    let mut weighted = 0.0;
    let mut count = 0.0;
    for &(p, q) in &state.items {
        let s = *scores
            .get(p)
            .ok_or_else(|| Error::Dangling(format!("no score for product {p}")))?;
        weighted += q as f64 * s;
        count += q as f64;
    }
    if count == 0.0 {
        return Ok(0.0);
    }
    Ok(alpha * weighted / count)
}

pub fn energy(state: &BundleState, obj: &Objective<'_>) -> Result<EnergyBreakdown> {
    check_targets(&obj.targets)?;
    let (total_cal, total_prot) = totals(state, obj.nutrients)?;
    let l_phys = relative_penalty(total_cal, total_prot, &obj.targets, obj.beta);
    let l_des = desire_reward(state, obj.scores, obj.alpha)?;
    Ok(EnergyBreakdown {
        l_phys,
        l_des,
        l_opt: l_phys - l_des,
        total_cal,
        total_prot,
    })
}

fn rank_desc(values: &[(usize, f64)], take: usize) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(take).map(|(i, _)| i).collect()
}

/// Protein density in g per 100 kcal; zero-calorie items rank last.
pub fn density(n: &NutrientVector) -> f64 {
    if n.cal > 0.0 {
        100.0 * n.prot / n.cal
    } else {
        0.0
    }
}

/// Score block (top `k_score` mapped products by score) followed by the
/// density block (top `k_density` mapped products by protein density),
/// with repeats dropped from the second block.
pub fn build_pool(
    scores: &[f64],
    nutrients: &[Option<NutrientVector>],
    config: &PoolConfig,
    k: usize,
) -> Result<Vec<usize>> {
    if config.k_score + config.k_density < k {
        return Err(Error::InvalidConfig(format!(
            "pool sizes {} + {} smaller than bundle size {k}",
            config.k_score, config.k_density
        )));
    }
    let mapped: Vec<(usize, NutrientVector)> = nutrients
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.map(|n| (i, n)))
        .collect();
    if mapped.len() < k {
        return Err(Error::InvalidArgument(format!(
            "only {} mapped products for a bundle of {k}",
            mapped.len()
        )));
    }
    let by_score: Vec<(usize, f64)> = mapped.iter().map(|&(i, _)| (i, scores[i])).collect();
    let by_density: Vec<(usize, f64)> = mapped.iter().map(|&(i, n)| (i, density(&n))).collect();
    let mut pool = rank_desc(&by_score, config.k_score);
    for p in rank_desc(&by_density, config.k_density) {
        if !pool.contains(&p) {
            pool.push(p);
        }
    }
    Ok(pool)
}

/// `size` distinct mapped products drawn uniformly at random.
pub fn random_pool(nutrients: &[Option<NutrientVector>], size: usize, seed: u64) -> Result<Vec<usize>> {
    let mut mapped: Vec<usize> = (0..nutrients.len()).filter(|&i| nutrients[i].is_some()).collect();
    if mapped.len() < size {
        return Err(Error::InvalidArgument(format!(
            "only {} mapped products for a pool of {size}",
            mapped.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mapped.shuffle(&mut rng);
    mapped.truncate(size);
    Ok(mapped)
}

/// One proposal. A clamped adjust is re-drawn once and then returned
/// unchanged; a swap with no free pool product is the identity.
pub fn mutate<R: Rng>(state: &BundleState, pool: &[usize], config: &OptConfig, rng: &mut R) -> BundleState {
    let mut next = state.clone();
    if next.items.is_empty() {
        return next;
    }
    let q = &config.quantities;
    let u: f64 = rng.gen();
    if u < config.p_swap {
        let free: Vec<usize> = pool.iter().copied().filter(|p| !state.contains(*p)).collect();
        let slot = rng.gen_range(0..next.items.len());
        if let Some(&p) = free.choose(rng) {
            next.items[slot] = (p, q.draw(rng));
        }
    } else if u < config.p_swap + config.p_adjust {
        for _ in 0..2 {
            let slot = rng.gen_range(0..next.items.len());
            let cur = next.items[slot].1 as i64;
            let step = if rng.gen_bool(0.5) { 1 } else { -1 };
            let to = (cur + step).clamp(q.min as i64, q.max as i64);
            if to != cur {
                next.items[slot].1 = to as u32;
                break;
            }
        }
    } else {
        let slot = rng.gen_range(0..next.items.len());
        next.items[slot].1 = q.draw(rng);
    }
    next
}

/// Top-`k` pool items by score, unit quantities (clamped into the domain).
pub fn initial_state(pool: &[usize], scores: &[f64], k: usize, q: &QuantityDomain) -> Result<BundleState> {
    if pool.len() < k {
        return Err(Error::InvalidArgument(format!(
            "pool of {} cannot fill a bundle of {k}",
            pool.len()
        )));
    }
    let ranked: Vec<(usize, f64)> = pool.iter().map(|&p| (p, scores[p])).collect();
    let unit = 1u32.clamp(q.min, q.max);
    Ok(BundleState::new(
        rank_desc(&ranked, k).into_iter().map(|p| (p, unit)).collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub initial: BundleState,
    pub initial_energy: EnergyBreakdown,
    pub best: BundleState,
    pub energy: EnergyBreakdown,
    /// Best energy after each iteration.
    pub trace: Vec<f64>,
    /// Strictly worsening proposals accepted, per tenth of the run.
    pub uphill_accepts: Vec<usize>,
}

pub fn anneal(pool: &[usize], obj: &Objective<'_>, config: &OptConfig) -> Result<AnnealResult> {
    config.check()?;
    let mut dedup = pool.to_vec();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != pool.len() {
        return Err(Error::InvalidArgument("pool has repeated products".into()));
    }
    if let Some(&p) = pool.iter().find(|&&p| obj.nutrients.get(p).copied().flatten().is_none()) {
        return Err(Error::Unmapped(p));
    }
    let initial = initial_state(pool, obj.scores, config.k, &config.quantities)?;
    let initial_energy = energy(&initial, obj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = initial.clone();
    let mut current_e = initial_energy.l_opt;
    let mut best = initial.clone();
    let mut best_e = initial_energy;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut uphill = vec![0usize; 10];
    let mut t = config.t0;
    for it in 0..config.iterations {
        let proposal = mutate(&current, pool, config, &mut rng);
        let e = energy(&proposal, obj)?;
        let delta = e.l_opt - current_e;
        let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp();
        if accept {
            if delta > 0.0 {
                uphill[it * 10 / config.iterations.max(1)] += 1;
            }
            current = proposal;
            current_e = e.l_opt;
            if e.l_opt < best_e.l_opt {
                best = current.clone();
                best_e = e;
            }
        }
        trace.push(best_e.l_opt);
        t *= config.cooling;
    }
    Ok(AnnealResult {
        initial,
        initial_energy,
        best,
        energy: best_e,
        trace,
        uphill_accepts: uphill,
    })
}

/// Largest instance the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 10_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive minimum of the energy over all `k`-subsets of `pool` and all
/// quantity assignments. Ties go to the lexicographically smallest
/// canonical state.
pub fn brute_force_oracle(
    pool: &[usize],
    k: usize,
    q: &QuantityDomain,
    obj: &Objective<'_>,
) -> Result<(BundleState, EnergyBreakdown)> {
    let states = binomial(pool.len(), k).saturating_mul((q.len() as u128).saturating_pow(k as u32));
    if states > ORACLE_LIMIT {
        return Err(Error::TooLarge(states));
    }
    if k == 0 || pool.len() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot choose {k} of {} pool products",
            pool.len()
        )));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let qs: Vec<u32> = q.values().collect();
    let mut best: Option<(BundleState, EnergyBreakdown)> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let mut digits = vec![0usize; k];
        loop {
            let state = BundleState::new(
                combo.iter().zip(&digits).map(|(&i, &d)| (sorted[i], qs[d])).collect(),
            );
            let e = energy(&state, obj)?;
            let better = match &best {
                None => true,
                Some((s, b)) => e.l_opt < b.l_opt || (e.l_opt == b.l_opt && state < *s),
            };
            if better {
                best = Some((state, e));
            }
            // odometer over quantity digits
            let mut i = k;
            let wrapped = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < qs.len() {
                    break false;
                }
                digits[i] = 0;
            };
            if wrapped {
                break;
            }
        }
        // next combination in lexicographic order
        let n = sorted.len();
        let mut i = k;
        while i > 0 && combo[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(best.unwrap())
}
