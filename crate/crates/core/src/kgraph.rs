//! Heterogeneous semantic graph over users, products and reference foods.
//!
//! Three edge kinds: purchases (user–product), similar (product–product,
//! cosine of name embeddings above a threshold) and maps (product → its
//! best-matching reference food). Mapped products inherit that food's
//! nutrients; unmapped products stay in the graph without them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Dataset, NutrientVector, Product, ReferenceFood};
use crate::error::{Error, Result};
use crate::textenc::{self, EmbeddingVector, EncoderConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub theta_sim: f64,
    pub max_similar_per_product: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            theta_sim: 0.5,
            max_similar_per_product: 10,
        }
    }
}

impl GraphConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.theta_sim > 0.0 && self.theta_sim <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta_sim {} not in (0, 1]",
                self.theta_sim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Product,
    Food,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::User, NodeKind::Product, NodeKind::Food];

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Purchase,
    Similar,
    Maps,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapsEdge {
    pub product: usize,
    pub food: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ProductMapping {
    pub edges: Vec<MapsEdge>,
    pub unmapped: Vec<usize>,
    /// Indexed by product.
    pub nutrients: Vec<Option<NutrientVector>>,
}

impl ProductMapping {
    pub fn food_of(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.nutrients.len()];
        for e in &self.edges {
            out[e.product] = Some(e.food);
        }
        out
    }
}

pub fn encode_all<'a>(
    texts: impl IntoParallelIterator<Item = &'a str>,
    encoder: &EncoderConfig,
) -> Result<Vec<EmbeddingVector>> {
    texts
        .into_par_iter()
        .map(|t| textenc::encode(t, encoder))
        .collect()
}

fn similarity_rows(vecs: &[EmbeddingVector], theta: f64) -> Vec<Vec<(usize, f64)>> {
    (0..vecs.len())
        .into_par_iter()
        .map(|i| {
            (0..vecs.len())
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let c = textenc::cosine(&vecs[i], &vecs[j]).ok()?;
                    (c >= theta).then_some((j, c))
                })
                .collect()
        })
        .collect()
}

/// Unordered product pairs `(i, j)` with `i < j`, sorted.
pub fn build_similar_edges(
    products: &[Product],
    encoder: &EncoderConfig,
    config: &GraphConfig,
) -> Result<Vec<(usize, usize)>> {
    config.check()?;
    if products.len() < 2 {
        return Err(Error::InvalidArgument(
            "similar edges need at least 2 products".into(),
        ));
    }
    let vecs = encode_all(products.par_iter().map(|p| p.name.as_str()), encoder)?;
    Ok(similar_from_vectors(&vecs, config))
}

pub fn similar_from_vectors(vecs: &[EmbeddingVector], config: &GraphConfig) -> Vec<(usize, usize)> {
    let mut rows = similarity_rows(vecs, config.theta_sim);
    let mut edges = std::collections::BTreeSet::new();
    for (i, row) in rows.iter_mut().enumerate() {
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        row.truncate(config.max_similar_per_product);
        for &(j, _) in row.iter() {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges.into_iter().collect()
}

/// Argmax-cosine mapping of product names onto food descriptions. Ties go to
/// the smaller food index; matches below `theta_sim` leave the product
/// unmapped.
pub fn map_products_to_foods(
    products: &[Product],
    foods: &[ReferenceFood],
    encoder: &EncoderConfig,
    config: &GraphConfig,
) -> Result<ProductMapping> {
    config.check()?;
    if foods.is_empty() {
        return Err(Error::InvalidArgument("mapping needs at least 1 food".into()));
    }
    let pv = encode_all(products.par_iter().map(|p| p.name.as_str()), encoder)?;
    let fv = encode_all(foods.par_iter().map(|f| f.description.as_str()), encoder)?;
    let best: Vec<(usize, f64)> = pv
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, f) in fv.iter().enumerate() {
                let c = textenc::cosine(p, f).unwrap_or(f64::NEG_INFINITY);
                if c > best.1 {
                    best = (j, c);
                }
            }
            best
        })
        .collect();

    let mut mapping = ProductMapping {
        nutrients: vec![None; products.len()],
        ..Default::default()
    };
    for (p, (f, sim)) in best.into_iter().enumerate() {
        if sim >= config.theta_sim {
            mapping.edges.push(MapsEdge {
                product: p,
                food: f,
                similarity: sim,
            });
            mapping.nutrients[p] = Some(foods[f].nutrients);
        } else {
            mapping.unmapped.push(p);
        }
    }
    Ok(mapping)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGraph {
    pub config: GraphConfig,
    pub n_users: usize,
    pub n_products: usize,
    pub n_foods: usize,
    pub purchase_edges: Vec<(usize, usize)>,
    pub similar_edges: Vec<(usize, usize)>,
    pub maps_edges: Vec<MapsEdge>,
    pub resolved_nutrients: Vec<Option<NutrientVector>>,
    // per global node, per edge kind (purchase, similar, maps), global ids
    adjacency: Vec<[Vec<usize>; 3]>,
}

impl SemanticGraph {
    pub fn assemble(
        dataset: &Dataset,
        similar: &[(usize, usize)],
        mapping: &ProductMapping,
        config: GraphConfig,
    ) -> Result<Self> {
        let purchases = dataset.interactions()?;
        Self::from_parts(
            config,
            dataset.users.len(),
            dataset.products.len(),
            dataset.foods.len(),
            purchases,
            similar.to_vec(),
            mapping.edges.clone(),
            &dataset.foods,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: GraphConfig,
        n_users: usize,
        n_products: usize,
        n_foods: usize,
        purchase_edges: Vec<(usize, usize)>,
        similar_edges: Vec<(usize, usize)>,
        maps_edges: Vec<MapsEdge>,
        foods: &[ReferenceFood],
    ) -> Result<Self> {
        if foods.len() != n_foods {
            return Err(Error::Shape(format!(
                "{} foods supplied for {n_foods} food nodes",
                foods.len()
            )));
        }
        let mut g = Self {
            config,
            n_users,
            n_products,
            n_foods,
            purchase_edges,
            similar_edges,
            maps_edges,
            resolved_nutrients: vec![None; n_products],
            adjacency: vec![Default::default(); n_users + n_products + n_foods],
        };
        for &(u, p) in &g.purchase_edges {
            if u >= n_users || p >= n_products {
                return Err(Error::Dangling(format!("purchase edge ({u}, {p})")));
            }
        }
        for &(a, b) in &g.similar_edges {
            if a >= n_products || b >= n_products {
                return Err(Error::Dangling(format!("similar edge ({a}, {b})")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self similar edge on {a}")));
            }
        }
        for e in &g.maps_edges {
            if e.product >= n_products || e.food >= n_foods {
                return Err(Error::Dangling(format!("maps edge ({}, {})", e.product, e.food)));
            }
            if g.resolved_nutrients[e.product].is_some() {
                return Err(Error::InvalidArgument(format!(
                    "product {} has two maps edges",
                    e.product
                )));
            }
            g.resolved_nutrients[e.product] = Some(foods[e.food].nutrients);
        }
        let mut link = |a: usize, b: usize, kind: usize| {
            g.adjacency[a][kind].push(b);
            g.adjacency[b][kind].push(a);
        };
        let (pu, pf) = (n_users, n_users + n_products);
        for &(u, p) in &g.purchase_edges {
            link(u, pu + p, 0);
        }
        for &(a, b) in &g.similar_edges {
            link(pu + a, pu + b, 1);
        }
        for e in &g.maps_edges {
            link(pu + e.product, pf + e.food, 2);
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_products + self.n_foods
    }

    pub fn node_id(&self, node: NodeRef) -> usize {
        match node.kind {
            NodeKind::User => node.index,
            NodeKind::Product => self.n_users + node.index,
            NodeKind::Food => self.n_users + self.n_products + node.index,
        }
    }

    pub fn node_ref(&self, id: usize) -> NodeRef {
        if id < self.n_users {
            NodeRef { kind: NodeKind::User, index: id }
        } else if id < self.n_users + self.n_products {
            NodeRef { kind: NodeKind::Product, index: id - self.n_users }
        } else {
            NodeRef { kind: NodeKind::Food, index: id - self.n_users - self.n_products }
        }
    }

    /// Kind-local indices of `node`'s neighbors over one edge kind.
    pub fn adjacency(&self, node: NodeRef, kind: EdgeKind) -> Vec<usize> {
        let slot = match kind {
            EdgeKind::Purchase => 0,
            EdgeKind::Similar => 1,
            EdgeKind::Maps => 2,
        };
        self.adjacency[self.node_id(node)][slot]
            .iter()
            .map(|&id| self.node_ref(id).index)
            .collect()
    }

    /// Global-id neighbors across every edge kind.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[id].iter().flatten().copied()
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adjacency[id].iter().map(Vec::len).sum()
    }

    /// Kind-contiguous global id ranges: users, products, foods.
    pub fn kind_ranges(&self) -> [std::ops::Range<usize>; 3] {
        let (a, b) = (self.n_users, self.n_users + self.n_products);
        [0..a, a..b, b..self.n_nodes()]
    }

    pub fn mapped_products(&self) -> Vec<usize> {
        (0..self.n_products)
            .filter(|&p| self.resolved_nutrients[p].is_some())
            .collect()
    }

    pub fn nutrients(&self, product: usize) -> Result<NutrientVector> {
        self.resolved_nutrients
            .get(product)
            .copied()
            .flatten()
            .ok_or(Error::Unmapped(product))
    }

    /// Same nodes and nutrients, without product–product edges.
    pub fn without_similar(&self, foods: &[ReferenceFood]) -> Result<Self> {
        Self::from_parts(
            self.config,
            self.n_users,
            self.n_products,
            self.n_foods,
            self.purchase_edges.clone(),
            Vec::new(),
            self.maps_edges.clone(),
            foods,
        )
    }

    /// Purchases only; message passing sees no semantic edges.
    pub fn purchases_only(&self, foods: &[ReferenceFood]) -> Result<Self> {
        Self::from_parts(
            self.config,
            self.n_users,
            self.n_products,
            self.n_foods,
            self.purchase_edges.clone(),
            Vec::new(),
            Vec::new(),
            foods,
        )
    }

    /// Same semantic edges over a different purchase set.
    pub fn with_purchases(&self, purchases: Vec<(usize, usize)>, foods: &[ReferenceFood]) -> Result<Self> {
        Self::from_parts(
            self.config,
            self.n_users,
            self.n_products,
            self.n_foods,
            purchases,
            self.similar_edges.clone(),
            self.maps_edges.clone(),
            foods,
        )
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            format: GRAPH_FORMAT.to_string(),
            config: self.config,
            n_users: self.n_users,
            n_products: self.n_products,
            n_foods: self.n_foods,
            purchase_edges: self.purchase_edges.clone(),
            similar_edges: self.similar_edges.clone(),
            maps_edges: self.maps_edges.clone(),
            unmapped: (0..self.n_products)
                .filter(|&p| self.resolved_nutrients[p].is_none())
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Loads a graph document and re-attaches nutrients from `dataset`.
    pub fn load(path: &Path, dataset: &Dataset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GraphFile = serde_json::from_str(&text)?;
        if file.format != GRAPH_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported graph format {:?}",
                file.format
            )));
        }
        if (file.n_users, file.n_products, file.n_foods)
            != (dataset.users.len(), dataset.products.len(), dataset.foods.len())
        {
            return Err(Error::Shape(format!(
                "graph has {}/{}/{} users/products/foods, dataset has {}/{}/{}",
                file.n_users,
                file.n_products,
                file.n_foods,
                dataset.users.len(),
                dataset.products.len(),
                dataset.foods.len()
            )));
        }
        Self::from_parts(
            file.config,
            file.n_users,
            file.n_products,
            file.n_foods,
            file.purchase_edges,
            file.similar_edges,
            file.maps_edges,
            &dataset.foods,
        )
    }
}

pub const GRAPH_FORMAT: &str = "physrec-graph-v1";

/// On-disk graph document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format: String,
    pub config: GraphConfig,
    pub n_users: usize,
    pub n_products: usize,
    pub n_foods: usize,
    pub purchase_edges: Vec<(usize, usize)>,
    pub similar_edges: Vec<(usize, usize)>,
    pub maps_edges: Vec<MapsEdge>,
    pub unmapped: Vec<usize>,
}

/// Full construction: encode, link, map, assemble.
pub fn build_graph(
    dataset: &Dataset,
    encoder: &EncoderConfig,
    config: GraphConfig,
) -> Result<(SemanticGraph, ProductMapping)> {
    let similar = build_similar_edges(&dataset.products, encoder, &config)?;
    let mapping = map_products_to_foods(&dataset.products, &dataset.foods, encoder, &config)?;
    let graph = SemanticGraph::assemble(dataset, &similar, &mapping, config)?;
    Ok((graph, mapping))
}
