//! Serving path over frozen artifacts: profile -> targets -> user vector
//! (cold start for unseen profiles) -> candidate pool -> annealed bundle.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annealer::{anneal, build_pool, EnergyBreakdown, Objective, OptConfig, PoolConfig, QuantityDomain, K_RANGE};
use crate::catalog::{Dataset, Goal, UserProfile};
use crate::error::{Error, Result};
use crate::kgraph::SemanticGraph;
use crate::neural::{forward, Checkpoint, Embeddings, ModelParams};
use crate::physio::{PhysioParams, PhysioTargets};

/// Longest energy trace returned to clients.
pub const MAX_TRACE_POINTS: usize = 100;

/// Tunable defaults a service or CLI run starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceDefaults {
    pub physio: PhysioParams,
    pub opt: OptConfig,
    pub pool: PoolConfig,
    pub lambda: f64,
    pub theta_sim: f64,
}

impl Default for ServiceDefaults {
    fn default() -> Self {
        Self {
            physio: PhysioParams::default(),
            opt: OptConfig::default(),
            pool: PoolConfig::default(),
            lambda: crate::thermo::TrainConfig::default().lambda,
            theta_sim: crate::kgraph::GraphConfig::default().theta_sim,
        }
    }
}

/// What `GET /api/config` returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta_sim: f64,
    pub tolerance: f64,
    pub k: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub quantity_min: u32,
    pub quantity_max: u32,
    pub iterations: usize,
}

impl ServiceDefaults {
    pub fn document(&self) -> ConfigDocument {
        ConfigDocument {
            lambda: self.lambda,
            alpha: self.opt.alpha,
            beta: self.opt.beta,
            theta_sim: self.theta_sim,
            tolerance: self.physio.tolerance,
            k: self.opt.k,
            k_min: K_RANGE.0,
            k_max: K_RANGE.1,
            quantity_min: self.opt.quantities.min,
            quantity_max: self.opt.quantities.max,
            iterations: self.opt.iterations,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity_max: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub profile: UserProfile,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl RecommendRequest {
    pub fn new(profile: UserProfile) -> Self {
        Self {
            profile,
            overrides: Overrides::default(),
        }
    }

    /// Every bound violation, keyed by request field.
    pub fn violations(&self) -> Vec<FieldError> {
        let mut out: Vec<FieldError> = self
            .profile
            .violations()
            .into_iter()
            .map(|(f, m)| FieldError {
                field: format!("profile.{f}"),
                message: m,
            })
            .collect();
        let mut bad = |field: &str, message: String| {
            out.push(FieldError {
                field: format!("overrides.{field}"),
                message,
            })
        };
        let o = &self.overrides;
        if let Some(a) = o.alpha {
            if !(a.is_finite() && a >= 0.0) {
                bad("alpha", format!("alpha {a} must be finite and >= 0"));
            }
        }
        if let Some(b) = o.beta {
            if !(b.is_finite() && b >= 0.0) {
                bad("beta", format!("beta {b} must be finite and >= 0"));
            }
        }
        if let Some(k) = o.k {
            if !(K_RANGE.0..=K_RANGE.1).contains(&k) {
                bad("k", format!("k {k} outside [{}, {}]", K_RANGE.0, K_RANGE.1));
            }
        }
        if let Some(t) = o.tolerance {
            if !(t > 0.0 && t < 1.0) {
                bad("tolerance", format!("tolerance {t} outside (0, 1)"));
            }
        }
        if let Some(q) = o.quantity_max {
            let max = QuantityDomain::ELASTIC.max;
            if !(1..=max).contains(&q) {
                bad("quantity_max", format!("quantity_max {q} outside [1, {max}]"));
            }
        }
        out
    }

    /// Seed derived from the request with any explicit seed removed, so
    /// identical questions get identical answers.
    pub fn derived_seed(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.overrides.seed = None;
        let json = serde_json::to_vec(&canonical).expect("request serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleItem {
    pub product_id: String,
    pub name: String,
    pub quantity: u32,
    /// Per unit.
    pub cal: f64,
    pub prot: f64,
    pub carb: f64,
    pub fat: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub cal: f64,
    pub prot: f64,
    pub carb: f64,
    pub fat: f64,
}

impl Totals {
    /// `Σ quantity · per-unit value`, in item order.
    pub fn of(items: &[BundleItem]) -> Self {
        let mut t = Totals::default();
        for it in items {
            let q = it.quantity as f64;
            t.cal += q * it.cal;
            t.prot += q * it.prot;
            t.carb += q * it.carb;
            t.fat += q * it.fat;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub targets: PhysioTargets,
    pub bundle: Vec<BundleItem>,
    pub totals: Totals,
    pub energy: EnergyBreakdown,
    pub success: bool,
    pub cold_start: bool,
    pub seed: u64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Evenly spaced samples including both ends.
pub fn downsample(trace: &[f64], max_points: usize) -> Vec<f64> {
    if trace.len() <= max_points {
        return trace.to_vec();
    }
    if max_points < 2 {
        return trace.last().copied().into_iter().take(max_points).collect();
    }
    let last = trace.len() - 1;
    (0..max_points)
        .map(|i| trace[i * last / (max_points - 1)])
        .collect()
}

/// Everything the serving path needs, loaded once and never mutated.
#[derive(Clone)]
pub struct Artifacts {
    pub dataset: Dataset,
    pub graph: SemanticGraph,
    pub embeddings: Embeddings,
    pub checkpoint_hash: String,
    mean_user: Array1<f64>,
    goal_means: Vec<(Goal, Array1<f64>)>,
}

impl Artifacts {
    pub fn load(data_dir: &Path, graph_path: &Path, checkpoint_path: &Path) -> Result<Self> {
        for p in [data_dir, graph_path, checkpoint_path] {
            if !p.exists() {
                return Err(Error::NotFound(p.to_path_buf()));
            }
        }
        let dataset = Dataset::load_dir(data_dir)?;
        let graph = SemanticGraph::load(graph_path, &dataset)?;
        let text = std::fs::read_to_string(checkpoint_path).map_err(|e| Error::io(checkpoint_path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        let hash = checkpoint_hash(&ckpt);
        let params = ckpt.into_params([graph.n_users, graph.n_products, graph.n_foods])?;
        Self::from_parts(dataset, graph, &params, hash)
    }

    pub fn from_parts(dataset: Dataset, graph: SemanticGraph, params: &ModelParams, checkpoint_hash: String) -> Result<Self> {
        if dataset.users.is_empty() {
            return Err(Error::InvalidArgument("dataset has no users".into()));
        }
        let (embeddings, _) = forward(&graph, params)?;
        let users = embeddings.user_matrix();
        let mean_user = users.mean_axis(ndarray::Axis(0)).unwrap();
        let goal_means = Goal::ALL
            .iter()
            .filter_map(|&g| {
                let rows: Vec<usize> = (0..dataset.users.len()).filter(|&u| dataset.users[u].goal == g).collect();
                if rows.is_empty() {
                    return None;
                }
                let mean = users.select(ndarray::Axis(0), &rows).mean_axis(ndarray::Axis(0)).unwrap();
                Some((g, mean))
            })
            .collect();
        Ok(Self {
            dataset,
            graph,
            embeddings,
            checkpoint_hash,
            mean_user,
            goal_means,
        })
    }

    /// A known user id gets its own embedding; anything else is scored with
    /// half the cohort mean plus half the mean of users sharing the goal.
    pub fn user_vector(&self, profile: &UserProfile) -> (Array1<f64>, bool) {
        if !profile.id.is_empty() {
            if let Some(u) = self.dataset.user_idx(&profile.id) {
                return (self.embeddings.user(u).to_owned(), false);
            }
        }
        let goal = self
            .goal_means
            .iter()
            .find(|(g, _)| *g == profile.goal)
            .map(|(_, m)| m)
            .unwrap_or(&self.mean_user);
        (0.5 * &self.mean_user + 0.5 * goal, true)
    }

    pub fn recommend(&self, req: &RecommendRequest, defaults: &ServiceDefaults) -> Result<RecommendResponse> {
        if let Some(v) = req.violations().into_iter().next() {
            return Err(Error::InvalidArgument(format!("{}: {}", v.field, v.message)));
        }
        let o = &req.overrides;
        let tolerance = o.tolerance.unwrap_or(defaults.physio.tolerance);
        let targets = defaults.physio.clone().with_tolerance(tolerance).targets(&req.profile);
        let seed = o.seed.unwrap_or_else(|| req.derived_seed());
        let mut opt = OptConfig {
            alpha: o.alpha.unwrap_or(defaults.opt.alpha),
            beta: o.beta.unwrap_or(defaults.opt.beta),
            k: o.k.unwrap_or(defaults.opt.k),
            seed,
            ..defaults.opt
        };
        if let Some(q) = o.quantity_max {
            opt.quantities = QuantityDomain::new(defaults.opt.quantities.min.min(q), q)?;
        }

        let (user_vec, cold_start) = self.user_vector(&req.profile);
        let scores = self.embeddings.scores_for(user_vec.view());
        let nutrients = &self.graph.resolved_nutrients;
        let pool = build_pool(&scores, nutrients, &defaults.pool, opt.k)?;
        let obj = Objective {
            nutrients,
            scores: &scores,
            targets,
            alpha: opt.alpha,
            beta: opt.beta,
        };
        let result = anneal(&pool, &obj, &opt)?;

        let bundle = result
            .best
            .items
            .iter()
            .map(|&(p, q)| {
                let n = nutrients[p].ok_or(Error::Unmapped(p))?;
                Ok(BundleItem {
                    product_id: self.dataset.products[p].id.clone(),
                    name: self.dataset.products[p].name.clone(),
                    quantity: q,
                    cal: n.cal,
                    prot: n.prot,
                    carb: n.carb,
                    fat: n.fat,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let totals = Totals::of(&bundle);
        Ok(RecommendResponse {
            targets,
            success: targets.satisfied_by(totals.cal, totals.prot),
            bundle,
            totals,
            energy: result.energy,
            cold_start,
            seed,
            iterations: opt.iterations,
            trace: downsample(&result.trace, MAX_TRACE_POINTS),
        })
    }
}

/// Short hex digest of a checkpoint's configuration echo.
pub fn checkpoint_hash(ckpt: &Checkpoint) -> String {
    let doc = serde_json::json!({
        "format": ckpt.format,
        "model": ckpt.model,
        "seed": ckpt.seed,
        "train_config": ckpt.train_config,
        "node_counts": ckpt.node_counts,
    });
    let digest = Sha256::digest(serde_json::to_vec(&doc).expect("json"));
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
