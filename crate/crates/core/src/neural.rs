//! Heterogeneous message passing, affinity scores, the pairwise ranking loss
//! and exact reverse-mode gradients.
//!
//! One layer: each node averages its own state with every neighbor's state
//! (all edge kinds pooled, self included), multiplies by the weight matrix of
//! its own node kind and applies `tanh`. After `layers` rounds the rows of the
//! final state matrix are the user and product embeddings.

use std::path::Path;

use ndarray::{s, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgraph::{NodeKind, SemanticGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub layers: usize,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_emb: 128,
            layers: 2,
            init_scale: 0.3,
        }
    }
}

/// Trainable state: one base row per node and one `d × d` matrix per
/// (layer, node kind).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// users, products, foods
    pub node_counts: [usize; 3],
    pub base: Array2<f64>,
    pub weights: Vec<[Array2<f64>; 3]>,
    version: u64,
}

/// Same layout as [`ModelParams`], holding derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub base: Array2<f64>,
    pub weights: Vec<[Array2<f64>; 3]>,
}

impl ModelParams {
    pub fn init(config: ModelConfig, node_counts: [usize; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = config.init_scale;
        let n: usize = node_counts.iter().sum();
        let d = config.d_emb;
        let mut draw = |rows, cols| Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..=a));
        let base = draw(n, d);
        let weights = (0..config.layers)
            .map(|_| [draw(d, d), draw(d, d), draw(d, d)])
            .collect();
        Self {
            config,
            node_counts,
            base,
            weights,
            version: 0,
        }
    }

    pub fn for_graph(config: ModelConfig, graph: &SemanticGraph, seed: u64) -> Self {
        Self::init(config, [graph.n_users, graph.n_products, graph.n_foods], seed)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn n_nodes(&self) -> usize {
        self.node_counts.iter().sum()
    }

    /// Marks outstanding traces stale after an external edit.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn zero_grads(&self) -> Gradients {
        let d = self.config.d_emb;
        Gradients {
            base: Array2::zeros(self.base.raw_dim()),
            weights: (0..self.config.layers)
                .map(|_| std::array::from_fn(|_| Array2::zeros((d, d))))
                .collect(),
        }
    }

    /// Plain gradient-descent step.
    pub fn descend(&mut self, grads: &Gradients, lr: f64) {
        self.base.scaled_add(-lr, &grads.base);
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for k in 0..3 {
                w[k].scaled_add(-lr, &g[k]);
            }
        }
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.base.iter().all(|v| v.is_finite())
            && self.weights.iter().flatten().flatten().all(|v| v.is_finite())
    }

    fn check_graph(&self, graph: &SemanticGraph) -> Result<()> {
        let counts = [graph.n_users, graph.n_products, graph.n_foods];
        if counts != self.node_counts {
            return Err(Error::Shape(format!(
                "params sized for {:?} nodes, graph has {:?}",
                self.node_counts, counts
            )));
        }
        let d = self.config.d_emb;
        if self.base.dim() != (self.n_nodes(), d)
            || self.weights.len() != self.config.layers
            || self.weights.iter().flatten().any(|w| w.dim() != (d, d))
        {
            return Err(Error::Shape("parameter arrays inconsistent with config".into()));
        }
        Ok(())
    }
}

impl Gradients {
    pub fn add_scaled(&mut self, k: f64, other: &Gradients) {
        self.base.scaled_add(k, &other.base);
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            for i in 0..3 {
                w[i].scaled_add(k, &g[i]);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.base
            .iter()
            .chain(self.weights.iter().flatten().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Row-normalized neighborhood operator with self-loops, in CSR form.
/// Neighbor lists are sorted so results do not depend on edge storage order.
#[derive(Clone, Debug)]
pub struct Propagation {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    inv_size: Vec<f64>,
    kind_ranges: [std::ops::Range<usize>; 3],
}

impl Propagation {
    pub fn new(graph: &SemanticGraph) -> Self {
        let n = graph.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut inv_size = Vec::with_capacity(n);
        offsets.push(0);
        for v in 0..n {
            let start = indices.len();
            indices.push(v);
            indices.extend(graph.neighbors(v));
            indices[start..].sort_unstable();
            inv_size.push(1.0 / (indices.len() - start) as f64);
            offsets.push(indices.len());
        }
        Self {
            offsets,
            indices,
            inv_size,
            kind_ranges: graph.kind_ranges(),
        }
    }

    fn n_nodes(&self) -> usize {
        self.inv_size.len()
    }

    /// `out[v] = mean over {v} ∪ N(v) of h[u]`.
    fn aggregate(&self, h: &Array2<f64>) -> Array2<f64> {
        let d = h.ncols();
        let src = h.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros(h.raw_dim());
        let dst = out.as_slice_mut().unwrap();
        for v in 0..self.n_nodes() {
            let row = &mut dst[v * d..(v + 1) * d];
            for &u in &self.indices[self.offsets[v]..self.offsets[v + 1]] {
                for (o, x) in row.iter_mut().zip(&src[u * d..(u + 1) * d]) {
                    *o += x;
                }
            }
            let k = self.inv_size[v];
            row.iter_mut().for_each(|o| *o *= k);
        }
        out
    }

    /// Adjoint of [`aggregate`](Self::aggregate). Adjacency is symmetric,
    /// so `out[u] = Σ_{v ∈ {u} ∪ N(u)} g[v] / |{v} ∪ N(v)|`.
    fn aggregate_adjoint(&self, g: &Array2<f64>) -> Array2<f64> {
        let d = g.ncols();
        let src = g.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros(g.raw_dim());
        let dst = out.as_slice_mut().unwrap();
        for u in 0..self.n_nodes() {
            let row = &mut dst[u * d..(u + 1) * d];
            for &v in &self.indices[self.offsets[u]..self.offsets[u + 1]] {
                let k = self.inv_size[v];
                for (o, x) in row.iter_mut().zip(&src[v * d..(v + 1) * d]) {
                    *o += k * x;
                }
            }
        }
        out
    }
}

/// Everything backward needs: per-layer inputs, pooled inputs and outputs.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `states[0]` is the base matrix, `states[l + 1]` the output of layer `l`.
    pub states: Vec<Array2<f64>>,
    /// `pooled[l]` is the neighborhood mean fed into layer `l`.
    pub pooled: Vec<Array2<f64>>,
    version: u64,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.states.last().unwrap()
    }

    /// Recomputes every layer output from the cached pooled inputs.
    pub fn replay(&self, params: &ModelParams, prop: &Propagation) -> Vec<Array2<f64>> {
        (0..self.pooled.len())
            .map(|l| transform(&self.pooled[l], &params.weights[l], prop))
            .collect()
    }
}

fn transform(pooled: &Array2<f64>, w: &[Array2<f64>; 3], prop: &Propagation) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros(pooled.raw_dim());
    for kind in NodeKind::ALL {
        let r = prop.kind_ranges[kind.slot()].clone();
        if r.is_empty() {
            continue;
        }
        let zk = pooled.slice(s![r.clone(), ..]).dot(&w[kind.slot()].t());
        z.slice_mut(s![r, ..]).assign(&zk);
    }
    z.mapv_inplace(f64::tanh);
    z
}

/// Final node states. Rows: users, then products, then foods.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub h: Array2<f64>,
    pub n_users: usize,
    pub n_products: usize,
}

impl Embeddings {
    pub fn new(h: Array2<f64>, n_users: usize, n_products: usize) -> Self {
        Self { h, n_users, n_products }
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn user(&self, u: usize) -> ArrayView1<'_, f64> {
        self.h.row(u)
    }

    pub fn product(&self, p: usize) -> ArrayView1<'_, f64> {
        self.h.row(self.n_users + p)
    }

    pub fn product_row(&self, p: usize) -> usize {
        self.n_users + p
    }

    /// Affinity `e_u · e_p`.
    pub fn score(&self, u: usize, p: usize) -> f64 {
        score_vec(self.user(u), self, p)
    }

    /// Scores of one user vector against every product.
    pub fn scores_for(&self, user_vec: ArrayView1<'_, f64>) -> Vec<f64> {
        (0..self.n_products).map(|p| score_vec(user_vec, self, p)).collect()
    }

    pub fn user_scores(&self, u: usize) -> Vec<f64> {
        self.scores_for(self.user(u))
    }

    /// User rows only.
    pub fn user_matrix(&self) -> ndarray::ArrayView2<'_, f64> {
        self.h.slice(s![0..self.n_users, ..])
    }
}

pub fn score_vec(user_vec: ArrayView1<'_, f64>, emb: &Embeddings, p: usize) -> f64 {
    user_vec.dot(&emb.product(p))
}

pub fn forward(graph: &SemanticGraph, params: &ModelParams) -> Result<(Embeddings, ForwardTrace)> {
    params.check_graph(graph)?;
    let prop = Propagation::new(graph);
    let trace = forward_with(&prop, params);
    Ok((
        Embeddings::new(trace.output().clone(), graph.n_users, graph.n_products),
        trace,
    ))
}

/// Forward pass over a prepared operator; shapes are the caller's concern.
pub fn forward_with(prop: &Propagation, params: &ModelParams) -> ForwardTrace {
    let mut states = vec![params.base.clone()];
    let mut pooled = Vec::with_capacity(params.config.layers);
    for w in &params.weights {
        let m = prop.aggregate(states.last().unwrap());
        states.push(transform(&m, w, prop));
        pooled.push(m);
    }
    ForwardTrace {
        states,
        pooled,
        version: params.version,
    }
}

/// Reverse-mode pass: `upstream` is dL/d(final states), same shape as the
/// output. Returns dL/d(every parameter).
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    prop: &Propagation,
    upstream: &Array2<f64>,
) -> Result<Gradients> {
    if trace.version != params.version {
        return Err(Error::StaleTrace {
            trace: trace.version,
            params: params.version,
        });
    }
    if upstream.dim() != trace.output().dim() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} vs output {:?}",
            upstream.dim(),
            trace.output().dim()
        )));
    }
    let mut grads = params.zero_grads();
    let mut g = upstream.clone();
    for l in (0..params.config.layers).rev() {
        let out = &trace.states[l + 1];
        let dz = &g * &out.mapv(|h| 1.0 - h * h);
        let m = &trace.pooled[l];
        let mut dm = Array2::<f64>::zeros(m.raw_dim());
        for kind in NodeKind::ALL {
            let r = prop.kind_ranges[kind.slot()].clone();
            if r.is_empty() {
                continue;
            }
            let dzk = dz.slice(s![r.clone(), ..]);
            grads.weights[l][kind.slot()] = dzk.t().dot(&m.slice(s![r.clone(), ..]));
            dm.slice_mut(s![r, ..])
                .assign(&dzk.dot(&params.weights[l][kind.slot()]));
        }
        g = prop.aggregate_adjoint(&dm);
    }
    grads.base = g;
    Ok(grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of `-ln σ(score(u, p⁺) - score(u, p⁻))` over the batch.
pub fn bpr_loss(batch: &[Triple], emb: &Embeddings) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty triple batch".into()));
    }
    let total: f64 = batch
        .iter()
        .map(|t| -log_sigmoid(emb.score(t.user, t.pos) - emb.score(t.user, t.neg)))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Loss plus its gradient with respect to the embedding matrix.
pub fn bpr_loss_grad(batch: &[Triple], emb: &Embeddings) -> Result<(f64, Array2<f64>)> {
    let loss = bpr_loss(batch, emb)?;
    let mut grad = Array2::<f64>::zeros(emb.h.raw_dim());
    let n = batch.len() as f64;
    for t in batch {
        let x = emb.score(t.user, t.pos) - emb.score(t.user, t.neg);
        let dx = -sigmoid(-x) / n;
        let eu = emb.user(t.user).to_owned();
        let diff = &emb.product(t.pos) - &emb.product(t.neg);
        grad.row_mut(t.user).scaled_add(dx, &diff);
        grad.row_mut(emb.product_row(t.pos)).scaled_add(dx, &eu);
        grad.row_mut(emb.product_row(t.neg)).scaled_add(-dx, &eu);
    }
    Ok((loss, grad))
}

/// Uniform draw without replacement from products the user never bought.
/// `purchased` must be sorted. Returns `min(count, available)` items.
pub fn sample_negatives_with<R: Rng>(
    purchased: &[usize],
    n_products: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available: Vec<usize> = (0..n_products)
        .filter(|p| purchased.binary_search(p).is_err())
        .collect();
    if available.is_empty() {
        return Err(Error::Degenerate("user purchased the entire catalog".into()));
    }
    let k = count.min(available.len());
    Ok(index::sample(rng, available.len(), k)
        .into_iter()
        .map(|i| available[i])
        .collect())
}

pub fn sample_negatives(
    purchased: &[usize],
    n_products: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    sample_negatives_with(purchased, n_products, count, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub const CHECKPOINT_FORMAT: &str = "physrec-checkpoint-v1";

/// JSON checkpoint: config echo, seed and every parameter array row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub seed: u64,
    #[serde(default)]
    pub train_config: serde_json::Value,
    pub node_counts: [usize; 3],
    pub base_embeddings: Vec<f64>,
    /// `[layer][kind]`, each `d × d` row-major.
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, seed: u64, train_config: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            model: params.config,
            seed,
            train_config,
            node_counts: params.node_counts,
            base_embeddings: params.base.iter().copied().collect(),
            weights: params
                .weights
                .iter()
                .map(|ws| ws.iter().map(|w| w.iter().copied().collect()).collect())
                .collect(),
        }
    }

    /// Rebuilds parameters, rejecting any size that disagrees with the
    /// config or with `expected_counts`.
    pub fn into_params(self, expected_counts: [usize; 3]) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        if self.node_counts != expected_counts {
            return Err(Error::Shape(format!(
                "checkpoint has {:?} nodes, expected {:?}",
                self.node_counts, expected_counts
            )));
        }
        let d = self.model.d_emb;
        let n: usize = self.node_counts.iter().sum();
        let base = Array2::from_shape_vec((n, d), self.base_embeddings).map_err(|_| {
            Error::DimensionMismatch {
                expected: n * d,
                actual: 0,
            }
        })?;
        if self.weights.len() != self.model.layers {
            return Err(Error::Shape(format!(
                "{} weight layers for {} configured",
                self.weights.len(),
                self.model.layers
            )));
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for layer in self.weights {
            if layer.len() != 3 {
                return Err(Error::Shape("each layer needs 3 kind matrices".into()));
            }
            let mut mats = Vec::with_capacity(3);
            for w in layer {
                let len = w.len();
                mats.push(Array2::from_shape_vec((d, d), w).map_err(|_| {
                    Error::DimensionMismatch {
                        expected: d * d,
                        actual: len,
                    }
                })?);
            }
            let [a, b, c]: [Array2<f64>; 3] = mats.try_into().unwrap();
            weights.push([a, b, c]);
        }
        let params = ModelParams {
            config: self.model,
            node_counts: self.node_counts,
            base,
            weights,
            version: 0,
        };
        if !params.is_finite() {
            return Err(Error::InvalidArgument("non-finite parameter in checkpoint".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mean of the given rows, used for cold-start user vectors.
pub fn mean_rows(h: ndarray::ArrayView2<'_, f64>, rows: &[usize]) -> Option<ndarray::Array1<f64>> {
    if rows.is_empty() {
        return None;
    }
    let picked = h.select(Axis(0), rows);
    picked.mean_axis(Axis(0))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::catalog::{NutrientVector, ReferenceFood};
    use crate::kgraph::{GraphConfig, MapsEdge};

    pub fn foods(n: usize) -> Vec<ReferenceFood> {
        (0..n)
            .map(|i| ReferenceFood {
                id: format!("f{i}"),
                description: format!("food {i}"),
                nutrients: NutrientVector::from_array([
                    80.0 + 40.0 * i as f64,
                    4.0 + 7.0 * i as f64,
                    10.0 + 3.0 * i as f64,
                    2.0 + i as f64,
                    1.0,
                    10.0,
                ]),
            })
            .collect()
    }

    /// Random small graph: every product mapped to some food.
    pub fn random_graph(seed: u64, users: usize, products: usize, food_n: usize) -> SemanticGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut purchases = Vec::new();
        for u in 0..users {
            for p in 0..products {
                if rng.gen_bool(0.4) {
                    purchases.push((u, p));
                }
            }
        }
        let mut similar = Vec::new();
        for a in 0..products {
            for b in a + 1..products {
                if rng.gen_bool(0.3) {
                    similar.push((a, b));
                }
            }
        }
        let maps = (0..products)
            .map(|p| MapsEdge {
                product: p,
                food: rng.gen_range(0..food_n),
                similarity: 1.0,
            })
            .collect();
        SemanticGraph::from_parts(
            GraphConfig::default(),
            users,
            products,
            food_n,
            purchases,
            similar,
            maps,
            &foods(food_n),
        )
        .unwrap()
    }

    /// Central finite differences of `f` over every parameter entry.
    pub fn finite_difference(
        params: &ModelParams,
        step: f64,
        f: &dyn Fn(&ModelParams) -> f64,
    ) -> Gradients {
        let mut out = params.zero_grads();
        let mut p = params.clone();
        for idx in 0..p.base.len() {
            let (r, c) = (idx / p.base.ncols(), idx % p.base.ncols());
            let orig = p.base[[r, c]];
            p.base[[r, c]] = orig + step;
            let plus = f(&p);
            p.base[[r, c]] = orig - step;
            let minus = f(&p);
            p.base[[r, c]] = orig;
            out.base[[r, c]] = (plus - minus) / (2.0 * step);
        }
        for l in 0..p.weights.len() {
            for k in 0..3 {
                let d = p.weights[l][k].nrows();
                for i in 0..d {
                    for j in 0..d {
                        let orig = p.weights[l][k][[i, j]];
                        p.weights[l][k][[i, j]] = orig + step;
                        let plus = f(&p);
                        p.weights[l][k][[i, j]] = orig - step;
                        let minus = f(&p);
                        p.weights[l][k][[i, j]] = orig;
                        out.weights[l][k][[i, j]] = (plus - minus) / (2.0 * step);
                    }
                }
            }
        }
        out
    }

    /// Largest entry-wise relative error, with an absolute floor so
    /// near-zero entries compare absolutely.
    pub fn max_rel_err(a: &Gradients, b: &Gradients) -> f64 {
        let pairs = a
            .base
            .iter()
            .zip(b.base.iter())
            .chain(
                a.weights
                    .iter()
                    .flatten()
                    .zip(b.weights.iter().flatten())
                    .flat_map(|(x, y)| x.iter().zip(y.iter())),
            );
        pairs.fold(0.0, |m: f64, (x, y)| {
            m.max((x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        })
    }
}
