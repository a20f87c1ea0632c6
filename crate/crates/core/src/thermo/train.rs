use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{thermo_with_score_grad, MappedTable, TemperatureSchedule, ThermoBreakdown, ThermoTargets};
use crate::error::{Error, Result};
use crate::kgraph::SemanticGraph;
use crate::neural::{
    backward, bpr_loss_grad, forward_with, Embeddings, Gradients, ModelConfig, ModelParams,
    Propagation, Triple,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub schedule: TemperatureSchedule,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.03,
            learning_rate: 5.0,
            epochs: 30,
            batch_size: 256,
            negatives_per_positive: 1,
            seed: 7,
            schedule: TemperatureSchedule::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch size and negatives per positive must be >= 1".into(),
            ));
        }
        if self.model.d_emb == 0 {
            return Err(Error::InvalidConfig("d_emb must be >= 1".into()));
        }
        self.schedule.check()
    }
}

pub const LOG_HEADER: &str = "epoch,tau,l_rank,l_ratio,l_density,l_quantity,l_variance,l_total";

/// Batch means, averaged over the batches of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tau: f64,
    pub l_rank: f64,
    pub l_ratio: f64,
    pub l_density: f64,
    pub l_quantity: f64,
    pub l_variance: f64,
    pub l_total: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.tau,
            self.l_rank,
            self.l_ratio,
            self.l_density,
            self.l_quantity,
            self.l_variance,
            self.l_total
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::from(LOG_HEADER);
        text.push('\n');
        for row in &self.log {
            text.push_str(&row.csv_row());
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Objective value on one batch: `rank + lambda * thermo.total`, where
/// `thermo` is the mean over the batch's distinct users.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchObjective {
    pub rank: f64,
    pub thermo: ThermoBreakdown,
    pub total: f64,
}

fn distinct_users(batch: &[Triple]) -> Vec<usize> {
    let mut users: Vec<usize> = batch.iter().map(|t| t.user).collect();
    users.sort_unstable();
    users.dedup();
    users
}

/// Thermo term over the mapped products for each listed user, averaged,
/// plus its gradient with respect to the embedding matrix.
pub fn thermo_term(
    emb: &Embeddings,
    users: &[usize],
    table: &MappedTable,
    tau: f64,
    targets: &ThermoTargets,
) -> Result<(ThermoBreakdown, Array2<f64>)> {
    let mut grad = Array2::<f64>::zeros(emb.h.raw_dim());
    let mut mean = ThermoBreakdown::default();
    if users.is_empty() || table.products.is_empty() {
        return Ok((mean, grad));
    }
    let rows: Vec<usize> = table.products.iter().map(|&p| emb.product_row(p)).collect();
    let prod = emb.h.select(Axis(0), &rows);
    let user_rows = emb.h.select(Axis(0), users);
    let scores = user_rows.dot(&prod.t());
    let k = 1.0 / users.len() as f64;
    let mut ds = Array2::<f64>::zeros(scores.raw_dim());
    for (i, s) in scores.outer_iter().enumerate() {
        let s = s.to_vec();
        let (b, g) = thermo_with_score_grad(&s, tau, &table.nutrients, targets)?;
        mean.accumulate(&b, k);
        ds.row_mut(i).assign(&ndarray::Array1::from(g).mapv(|v| v * k));
    }
    let d_users = ds.dot(&prod);
    let d_prod = ds.t().dot(&user_rows);
    for (i, &u) in users.iter().enumerate() {
        let mut r = grad.row_mut(u);
        r += &d_users.row(i);
    }
    for (j, &row) in rows.iter().enumerate() {
        let mut r = grad.row_mut(row);
        r += &d_prod.row(j);
    }
    Ok((mean, grad))
}

/// Composite objective on one batch and its gradient over every parameter.
#[allow(clippy::too_many_arguments)]
pub fn objective_grad(
    prop: &Propagation,
    params: &ModelParams,
    batch: &[Triple],
    table: &MappedTable,
    tau: f64,
    targets: &ThermoTargets,
    lambda: f64,
) -> Result<(BatchObjective, Gradients)> {
    let trace = forward_with(prop, params);
    let [n_users, n_products, _] = params.node_counts;
    let emb = Embeddings::new(trace.output().clone(), n_users, n_products);
    let (rank, mut upstream) = bpr_loss_grad(batch, &emb)?;
    let (thermo, tgrad) = thermo_term(&emb, &distinct_users(batch), table, tau, targets)?;
    if lambda > 0.0 {
        upstream.scaled_add(lambda, &tgrad);
    }
    let grads = backward(&trace, params, prop, &upstream)?;
    Ok((
        BatchObjective {
            rank,
            thermo,
            total: rank + lambda * thermo.total,
        },
        grads,
    ))
}

/// Minibatch gradient descent on `rank + lambda * thermo`. Positives are the
/// graph's purchase edges, reshuffled every epoch; each gets
/// `negatives_per_positive` uniformly drawn unpurchased products.
pub fn train(graph: &SemanticGraph, targets: &ThermoTargets, config: &TrainConfig) -> Result<TrainOutcome> {
    config.check()?;
    targets.check()?;
    let mut params = ModelParams::for_graph(config.model, graph, config.seed);
    let prop = Propagation::new(graph);
    let table = MappedTable::from_graph(graph);
    if table.products.is_empty() && config.lambda > 0.0 {
        return Err(Error::Degenerate("no product maps to a reference food".into()));
    }
    let mut bought = vec![Vec::new(); graph.n_users];
    for &(u, p) in &graph.purchase_edges {
        bought[u].push(p);
    }
    for (u, items) in bought.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        if items.len() >= graph.n_products {
            return Err(Error::Degenerate(format!("user {u} purchased the entire catalog")));
        }
    }
    let mut positives = graph.purchase_edges.clone();
    if positives.is_empty() {
        return Err(Error::Degenerate("graph has no purchases".into()));
    }
    positives.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a11);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tau = config.schedule.tau(epoch, config.epochs);
        positives.shuffle(&mut rng);
        let mut triples = Vec::with_capacity(positives.len() * config.negatives_per_positive);
        for &(u, p) in &positives {
            for _ in 0..config.negatives_per_positive {
                let neg = loop {
                    let c = rng.gen_range(0..graph.n_products);
                    if bought[u].binary_search(&c).is_err() {
                        break c;
                    }
                };
                triples.push(Triple { user: u, pos: p, neg });
            }
        }
        let mut sums = [0.0f64; 6];
        let mut n_batches = 0usize;
        for batch in triples.chunks(config.batch_size) {
            let (obj, grads) =
                objective_grad(&prop, &params, batch, &table, tau, targets, config.lambda)?;
            params.descend(&grads, config.learning_rate);
            let t = obj.thermo;
            for (s, v) in sums
                .iter_mut()
                .zip([obj.rank, t.ratio, t.density, t.quantity, t.variance, obj.total])
            {
                *s += v;
            }
            n_batches += 1;
        }
        if !params.is_finite() {
            return Err(Error::Degenerate(format!("parameters diverged in epoch {epoch}")));
        }
        let m = sums.map(|s| s / n_batches as f64);
        log.push(EpochLog {
            epoch,
            tau,
            l_rank: m[0],
            l_ratio: m[1],
            l_density: m[2],
            l_quantity: m[3],
            l_variance: m[4],
            l_total: m[5],
        });
    }
    Ok(TrainOutcome { params, log })
}

/// Mean over users of the soft basket's protein density (g per 100 kcal).
pub fn expected_density(emb: &Embeddings, table: &MappedTable, tau: f64) -> Result<f64> {
    let mut total = 0.0;
    for u in 0..emb.n_users {
        let dist = super::soft_basket(&table.scores(emb, emb.user(u)), tau)?;
        let e = super::expectation(&dist, &table.nutrients);
        total += 100.0 * e.prot / e.cal;
    }
    Ok(total / emb.n_users.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::testutil::{finite_difference, max_rel_err, random_graph};

    fn small_config(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            learning_rate: 0.5,
            epochs: 4,
            batch_size: 8,
            model: ModelConfig { d_emb: 4, layers: 2, init_scale: 0.5 },
            ..Default::default()
        }
    }

    #[test]
    fn tau_sequence_in_log() {
        let g = random_graph(3, 3, 6, 3);
        let out = train(&g, &ThermoTargets::default(), &small_config(0.03)).unwrap();
        let taus: Vec<f64> = out.log.iter().map(|r| r.tau).collect();
        assert_eq!(taus, vec![2.0, 1.5, 1.0, 0.5]);
    }

    #[test]
    fn zero_lambda_matches_rank_only_run() {
        let g = random_graph(4, 3, 6, 3);
        let targets = ThermoTargets::default();
        let a = train(&g, &targets, &small_config(0.0)).unwrap();
        // Rank-only reference: the thermo term removed entirely.
        let silent = ThermoTargets { weights: [0.0; 4], ..targets };
        let b = train(&g, &silent, &small_config(0.0)).unwrap();
        assert_eq!(a.params, b.params);
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!((x.epoch, x.tau, x.l_rank, x.l_total), (y.epoch, y.tau, y.l_rank, y.l_total));
            assert_eq!(x.l_total, x.l_rank);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let g = random_graph(5, 3, 6, 3);
        let a = train(&g, &ThermoTargets::default(), &small_config(0.03)).unwrap();
        let b = train(&g, &ThermoTargets::default(), &small_config(0.03)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn config_checks() {
        let g = random_graph(5, 3, 6, 3);
        let t = ThermoTargets::default();
        assert!(train(&g, &t, &TrainConfig { lambda: -0.1, ..small_config(0.0) }).is_err());
        assert!(train(&g, &t, &TrainConfig { batch_size: 0, ..small_config(0.0) }).is_err());
        let bad = ThermoTargets { r_star: [0.5, 0.5, 0.5], ..t };
        assert!(train(&g, &bad, &small_config(0.0)).is_err());
    }

    #[test]
    fn log_csv_shape() {
        let g = random_graph(6, 3, 6, 3);
        let out = train(&g, &ThermoTargets::default(), &small_config(0.03)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        out.write_log(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
    }

    /// True when every absolute-value or hinge argument in the breakdown is
    /// comfortably away from its kink, so finite differences are meaningful.
    fn away_from_kinks(
        params: &ModelParams,
        graph: &SemanticGraph,
        users: &[usize],
        table: &MappedTable,
        tau: f64,
        t: &ThermoTargets,
    ) -> bool {
        let prop = Propagation::new(graph);
        let trace = forward_with(&prop, params);
        let emb = Embeddings::new(trace.output().clone(), graph.n_users, graph.n_products);
        users.iter().all(|&u| {
            let dist = super::super::soft_basket(&table.scores(&emb, emb.user(u)), tau).unwrap();
            let e = super::super::expectation(&dist, &table.nutrients);
            let s = e.prot + e.carb + e.fat;
            let shares = [e.prot / s, e.carb / s, e.fat / s];
            let m2: f64 = dist.iter().zip(&table.nutrients).map(|(p, n)| p * n.prot * n.prot).sum();
            shares.iter().zip(&t.r_star).all(|(a, b)| (a - b).abs() > 1e-4)
                && (t.rho_star - 100.0 * e.prot / e.cal).abs() > 1e-4
                && (e.prot * t.beta_size - t.pi_star).abs() > 1e-4
                && m2 - e.prot * e.prot > 1e-4
        })
    }

    fn check_gradients(lambda: f64, rank_weight_only: bool) -> usize {
        let mut checked = 0;
        for seed in 0..40u64 {
            if checked == 20 {
                break;
            }
            // ≤ 10 nodes: 2 users, 5 products, 3 foods
            let g = random_graph(seed + 1000, 2, 5, 3);
            let d = 2 + (seed % 3) as usize;
            let layers = 1 + (seed % 2) as usize;
            let params = ModelParams::for_graph(ModelConfig { d_emb: d, layers, init_scale: 0.9 }, &g, seed);
            let table = MappedTable::from_graph(&g);
            let targets = ThermoTargets {
                pi_star: 40.0,
                weights: [1.0, 1.0, 0.02, 0.01],
                ..Default::default()
            };
            let tau = 0.7;
            let batch = vec![
                Triple { user: 0, pos: 1, neg: 3 },
                Triple { user: 1, pos: 0, neg: 4 },
                Triple { user: 0, pos: 2, neg: 0 },
            ];
            if !away_from_kinks(&params, &g, &[0, 1], &table, tau, &targets) {
                continue;
            }
            let prop = Propagation::new(&g);
            let (obj, analytic) =
                objective_grad(&prop, &params, &batch, &table, tau, &targets, lambda).unwrap();
            let value = |p: &ModelParams| {
                let (o, _) = objective_grad(&prop, p, &batch, &table, tau, &targets, lambda).unwrap();
                if rank_weight_only { o.thermo.total } else { o.total }
            };
            let analytic = if rank_weight_only {
                // isolate the thermo part: total gradient minus the rank-only gradient
                let (_, rank_only) =
                    objective_grad(&prop, &params, &batch, &table, tau, &targets, 0.0).unwrap();
                let mut g = analytic;
                g.add_scaled(-1.0, &rank_only);
                let mut scaled = params.zero_grads();
                scaled.add_scaled(1.0 / lambda, &g);
                scaled
            } else {
                analytic
            };
            let numeric = finite_difference(&params, 1e-5, &value);
            let err = max_rel_err(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: rel err {err} (objective {obj:?})");
            checked += 1;
        }
        checked
    }

    #[test]
    fn thermo_gradient_matches_finite_differences() {
        assert_eq!(check_gradients(1.0, true), 20);
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        assert_eq!(check_gradients(0.3, false), 20);
    }
}
