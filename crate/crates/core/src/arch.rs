//! Circuit layer ensembles and fixed architectures: the single-layer
//! connected families, brickwork blocks, cluster projectors, the gamma and
//! alpha quantities of the block decomposition, and patchwork assembly.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{op_norm_default, CMatrix, Limits, ReplicaSpace};
use crate::moment::{haar_projector, moment_operator, GateEnsemble, MomentOperator};

/// Two-qudit randomizer attached to a gate placement: either the exact
/// local Haar measure or a discrete ensemble on dimension d^2.
#[derive(Clone, Debug)]
pub enum LocalEnsemble {
    Haar,
    Gates(GateEnsemble),
}

impl LocalEnsemble {
    pub fn is_haar(&self) -> bool {
        matches!(self, LocalEnsemble::Haar)
    }

    /// The two-qudit moment operator of this randomizer (dimension d^{4t}).
    pub fn pair_moment(&self, local_dim: usize, t: usize, limits: &Limits) -> Result<CMatrix> {
        match self {
            LocalEnsemble::Haar => Ok(haar_projector(local_dim * local_dim, t, limits)?.matrix),
            LocalEnsemble::Gates(e) => Ok(moment_operator(e, t, limits)?.matrix),
        }
    }

    /// Two-qudit spectral gap; exactly 1 for the Haar marker.
    pub fn pair_gap(&self, local_dim: usize, t: usize, limits: &Limits) -> Result<f64> {
        match self {
            LocalEnsemble::Haar => Ok(1.0),
            LocalEnsemble::Gates(e) => {
                let m = moment_operator(e, t, limits)?;
                let p = haar_projector(local_dim * local_dim, t, limits)?;
                Ok(crate::moment::spectral_gap(&m, &p)?.gap)
            }
        }
    }
}

/// Assignment of local randomizers to gate placements: one shared ensemble
/// or a per-pair map with an optional shared fallback.
#[derive(Clone, Debug)]
pub enum LocalSpec {
    Shared(LocalEnsemble),
    PerPair {
        overrides: BTreeMap<(usize, usize), LocalEnsemble>,
        default: Option<LocalEnsemble>,
    },
}

impl LocalSpec {
    pub fn haar() -> Self {
        LocalSpec::Shared(LocalEnsemble::Haar)
    }

    pub fn per_pair(overrides: BTreeMap<(usize, usize), LocalEnsemble>) -> Self {
        LocalSpec::PerPair { overrides, default: None }
    }

    fn for_pair(&self, pair: (usize, usize)) -> Result<LocalEnsemble> {
        match self {
            LocalSpec::Shared(e) => Ok(e.clone()),
            LocalSpec::PerPair { overrides, default } => overrides
                .get(&pair)
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "no local ensemble for pair ({}, {})",
                        pair.0, pair.1
                    ))
                }),
        }
    }
}

/// One gate placement pattern inside a layer: disjoint site pairs, each
/// carrying its own two-qudit randomizer, applied with a probability.
#[derive(Clone, Debug)]
pub struct Protocol {
    probability: f64,
    pairs: Vec<(usize, usize)>,
    locals: Vec<LocalEnsemble>,
}

impl Protocol {
    pub fn new(
        probability: f64,
        pairs: Vec<(usize, usize)>,
        locals: Vec<LocalEnsemble>,
    ) -> Result<Self> {
        if !(probability.is_finite() && probability >= 0.0) {
            return Err(Error::InvalidProbabilities {
                reason: format!("protocol probability {probability}"),
            });
        }
        if pairs.len() != locals.len() {
            return Err(Error::invalid("protocol: one local ensemble per pair required"));
        }
        let pairs: Vec<(usize, usize)> =
            pairs.into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect();
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in &pairs {
            if i == j {
                return Err(Error::invalid(format!("protocol: degenerate pair ({i}, {j})")));
            }
            if !seen.insert(i) || !seen.insert(j) {
                return Err(Error::invalid("protocol: pairs must be disjoint"));
            }
        }
        Ok(Protocol { probability, pairs, locals })
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn locals(&self) -> &[LocalEnsemble] {
        &self.locals
    }
}

/// Probability mixture of protocols forming one circuit layer.
#[derive(Clone, Debug)]
pub struct LayerEnsemble {
    n_sites: usize,
    local_dim: usize,
    protocols: Vec<Protocol>,
}

impl LayerEnsemble {
    pub fn new(n_sites: usize, local_dim: usize, protocols: Vec<Protocol>) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::invalid("layer: need at least two sites"));
        }
        if local_dim < 2 {
            return Err(Error::invalid("layer: local dimension must be >= 2"));
        }
        if protocols.is_empty() {
            return Err(Error::invalid("layer: need at least one protocol"));
        }
        let total: f64 = protocols.iter().map(|p| p.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbabilities {
                reason: format!("protocol probabilities sum to {total}"),
            });
        }
        for proto in &protocols {
            for (&(i, j), local) in proto.pairs.iter().zip(&proto.locals) {
                if j >= n_sites {
                    return Err(Error::invalid(format!(
                        "layer: pair ({i}, {j}) out of range for {n_sites} sites"
                    )));
                }
                if let LocalEnsemble::Gates(e) = local {
                    if e.dim() != local_dim * local_dim {
                        return Err(Error::DimensionMismatch {
                            context: "layer: local ensemble dimension",
                            expected: local_dim * local_dim,
                            got: e.dim(),
                        });
                    }
                }
            }
        }
        Ok(LayerEnsemble { n_sites, local_dim, protocols })
    }

    /// Single deterministic placement (probability one).
    pub fn deterministic(
        n_sites: usize,
        local_dim: usize,
        pairs: Vec<(usize, usize)>,
        locals: &LocalSpec,
    ) -> Result<Self> {
        let ens = pairs
            .iter()
            .map(|&(i, j)| locals.for_pair((i.min(j), i.max(j))))
            .collect::<Result<Vec<_>>>()?;
        LayerEnsemble::new(n_sites, local_dim, vec![Protocol::new(1.0, pairs, ens)?])
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn protocols(&self) -> &[Protocol] {
        &self.protocols
    }

    pub fn space(&self, t: usize) -> ReplicaSpace {
        ReplicaSpace::moment(self.n_sites, self.local_dim, t)
    }

    /// Sites touched by any protocol, merged into connected blocks.
    pub fn cluster(&self) -> Cluster {
        let pairs: Vec<(usize, usize)> =
            self.protocols.iter().flat_map(|p| p.pairs.iter().copied()).collect();
        Cluster::from_pairs(&pairs)
    }

    /// True when every local randomizer is the exact Haar marker.
    pub fn is_haar(&self) -> bool {
        self.protocols.iter().all(|p| p.locals.iter().all(|l| l.is_haar()))
    }
}

/// Builds the dense layer moment operator: the probability-weighted sum over
/// protocols of the embedded tensor products of pair moment operators.
pub fn layer_moment(layer: &LayerEnsemble, t: usize, limits: &Limits) -> Result<MomentOperator> {
    let space = layer.space(t);
    let dim = space.dim(limits)?;
    let mut acc = CMatrix::zeros(dim, dim).into_array();
    for proto in layer.protocols() {
        let mats: Vec<CMatrix> = proto
            .pairs
            .iter()
            .zip(&proto.locals)
            .map(|(_, local)| local.pair_moment(layer.local_dim, t, limits))
            .collect::<Result<Vec<_>>>()?;
        let sites: Vec<[usize; 2]> = proto.pairs.iter().map(|&(i, j)| [i, j]).collect();
        let ops: Vec<(&CMatrix, &[usize])> =
            mats.iter().zip(&sites).map(|(m, s)| (m, s.as_slice())).collect();
        let term = space.embed(&ops, limits)?;
        let weight = C64::new(proto.probability, 0.0);
        acc.zip_mut_with(term.array(), |a, &b| *a += weight * b);
    }
    let q = usize::pow(layer.local_dim, layer.n_sites as u32);
    MomentOperator::new(q, t, CMatrix::from_array(acc)?)
}

/// Applies the layer moment operator to a dense matrix from the left,
/// protocol by protocol, without materializing the layer operator.
pub fn apply_layer_left(
    layer: &LayerEnsemble,
    t: usize,
    x: &CMatrix,
    limits: &Limits,
) -> Result<CMatrix> {
    let space = layer.space(t);
    let dim = space.dim(limits)?;
    if x.rows() != dim {
        return Err(Error::DimensionMismatch {
            context: "apply_layer_left",
            expected: dim,
            got: x.rows(),
        });
    }
    let mut acc = CMatrix::zeros(dim, x.cols()).into_array();
    for proto in layer.protocols() {
        let mut cur = x.clone();
        for (&(i, j), local) in proto.pairs.iter().zip(&proto.locals) {
            let m = local.pair_moment(layer.local_dim, t, limits)?;
            cur = space.apply_left(&m, &[i, j], &cur, limits)?;
        }
        let weight = C64::new(proto.probability, 0.0);
        acc.zip_mut_with(cur.array(), |a, &b| *a += weight * b);
    }
    Ok(CMatrix::from_array_unchecked(acc))
}

/// Replaces every local randomizer with the exact local Haar marker,
/// keeping placements and probabilities.
pub fn haarized_layer(layer: &LayerEnsemble) -> LayerEnsemble {
    let protocols = layer
        .protocols
        .iter()
        .map(|p| Protocol {
            probability: p.probability,
            pairs: p.pairs.clone(),
            locals: vec![LocalEnsemble::Haar; p.locals.len()],
        })
        .collect();
    LayerEnsemble { n_sites: layer.n_sites, local_dim: layer.local_dim, protocols }
}

/// Minimum two-qudit spectral gap over every pair of every protocol.
pub fn local_gap(layer: &LayerEnsemble, t: usize, limits: &Limits) -> Result<f64> {
    let mut min_gap = f64::INFINITY;
    for proto in layer.protocols() {
        for local in &proto.locals {
            let gap = local.pair_gap(layer.local_dim, t, limits)?;
            min_gap = min_gap.min(gap);
        }
    }
    if min_gap.is_infinite() {
        // layer with no gates anywhere acts as the identity
        return Ok(0.0);
    }
    Ok(min_gap)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn is_connected(n_sites: usize, edges: &[(usize, usize)]) -> bool {
    if n_sites == 0 {
        return true;
    }
    let mut uf = UnionFind::new(n_sites);
    for &(i, j) in edges {
        uf.union(i, j);
    }
    let root = uf.find(0);
    (1..n_sites).all(|i| uf.find(i) == root)
}

/// Partition of a subset of sites into connected blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    blocks: Vec<Vec<usize>>,
}

impl Cluster {
    pub fn empty() -> Self {
        Cluster { blocks: Vec::new() }
    }

    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut normalized: Vec<Vec<usize>> = Vec::with_capacity(blocks.len());
        for mut block in blocks {
            block.sort_unstable();
            block.dedup();
            if block.is_empty() {
                continue;
            }
            for &s in &block {
                if !seen.insert(s) {
                    return Err(Error::invalid(format!("cluster blocks overlap at site {s}")));
                }
            }
            normalized.push(block);
        }
        normalized.sort();
        Ok(Cluster { blocks: normalized })
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        if pairs.is_empty() {
            return Cluster::empty();
        }
        let max_site = pairs.iter().map(|&(i, j)| i.max(j)).max().unwrap();
        let mut uf = UnionFind::new(max_site + 1);
        let mut touched = vec![false; max_site + 1];
        for &(i, j) in pairs {
            uf.union(i, j);
            touched[i] = true;
            touched[j] = true;
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for s in 0..=max_site {
            if touched[s] {
                groups.entry(uf.find(s)).or_default().push(s);
            }
        }
        Cluster { blocks: groups.into_values().collect() }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Union of two partitions with transitive merging of blocks that share a
/// site (connected components of the combined block graph).
pub fn merge_clusters(a: &Cluster, b: &Cluster) -> Cluster {
    let all_blocks: Vec<&Vec<usize>> = a.blocks.iter().chain(b.blocks.iter()).collect();
    if all_blocks.is_empty() {
        return Cluster::empty();
    }
    let max_site = all_blocks.iter().flat_map(|b| b.iter()).copied().max().unwrap();
    let mut uf = UnionFind::new(max_site + 1);
    let mut touched = vec![false; max_site + 1];
    for block in &all_blocks {
        for window in block.windows(2) {
            uf.union(window[0], window[1]);
        }
        if let Some(&first) = block.first() {
            touched[first] = true;
        }
        for &s in block.iter() {
            touched[s] = true;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in 0..=max_site {
        if touched[s] {
            groups.entry(uf.find(s)).or_default().push(s);
        }
    }
    Cluster { blocks: groups.into_values().collect() }
}

/// Tensor product of block Haar projectors, identity on untouched sites.
pub fn cluster_projector(
    c: &Cluster,
    n_sites: usize,
    local_dim: usize,
    t: usize,
    limits: &Limits,
) -> Result<CMatrix> {
    let space = ReplicaSpace::moment(n_sites, local_dim, t);
    let mut mats = Vec::with_capacity(c.blocks.len());
    for block in &c.blocks {
        if block.iter().any(|&s| s >= n_sites) {
            return Err(Error::invalid("cluster block site out of range"));
        }
        let q = limits.checked_pow(local_dim, block.len() as u32)?;
        mats.push(haar_projector(q, t, limits)?.matrix);
    }
    let ops: Vec<(&CMatrix, &[usize])> =
        mats.iter().zip(&c.blocks).map(|(m, b)| (m, b.as_slice())).collect();
    space.embed(&ops, limits)
}

/// Applies a cluster projector to a dense matrix from the left without
/// materializing it.
fn apply_cluster_left(
    c: &Cluster,
    n_sites: usize,
    local_dim: usize,
    t: usize,
    x: &CMatrix,
    limits: &Limits,
) -> Result<CMatrix> {
    let space = ReplicaSpace::moment(n_sites, local_dim, t);
    let mut cur = x.clone();
    for block in &c.blocks {
        let q = limits.checked_pow(local_dim, block.len() as u32)?;
        let p = haar_projector(q, t, limits)?.matrix;
        cur = space.apply_left(&p, block, &cur, limits)?;
    }
    Ok(cur)
}

/// Detectability quantity for a pair of cluster configurations:
/// `gamma = 1 - ||P_{c(mu)} P_{c(nu)} - P_{c(merge)}||^2`.
///
/// The caller supplies the merged cluster (see [`merge_clusters`]); it is
/// re-validated here.
pub fn gamma(
    c_nu: &Cluster,
    c_mu: &Cluster,
    c_merge: &Cluster,
    n_sites: usize,
    local_dim: usize,
    t: usize,
    limits: &Limits,
) -> Result<f64> {
    let expect = merge_clusters(c_nu, c_mu);
    if &expect != c_merge {
        return Err(Error::invalid(
            "gamma: supplied merge cluster does not equal the shared-site union",
        ));
    }
    let p_nu = cluster_projector(c_nu, n_sites, local_dim, t, limits)?;
    let product = apply_cluster_left(c_mu, n_sites, local_dim, t, &p_nu, limits)?;
    let p_merge = cluster_projector(c_merge, n_sites, local_dim, t, limits)?;
    let diff = product.sub(&p_merge)?;
    let norm = op_norm_default(&diff)?.value;
    let g = 1.0 - norm * norm;
    if !(-1e-8..=1.0 + 1e-8).contains(&g) {
        return Err(Error::Internal(format!("gamma out of range: {g}")));
    }
    Ok(g.clamp(0.0, 1.0))
}

/// Cluster-level contraction of a layer:
/// `alpha = 1 - ||M_layer - P_{c(layer)}||^2`.
///
/// For a deterministic placement the residual is a tensor sum over pairs
/// with mutually orthogonal supports, so the norm equals the largest pair
/// residual norm and the computation stays at the two-qudit level.
pub fn alpha(layer: &LayerEnsemble, t: usize, limits: &Limits) -> Result<f64> {
    if layer.protocols().len() == 1 {
        let r = 1.0 - local_gap(layer, t, limits)?;
        return Ok((1.0 - r * r).clamp(0.0, 1.0));
    }
    let m = layer_moment(layer, t, limits)?;
    let p = cluster_projector(&layer.cluster(), layer.n_sites, layer.local_dim, t, limits)?;
    let diff = m.matrix.sub(&p)?;
    let norm = op_norm_default(&diff)?.value;
    let a = 1.0 - norm * norm;
    if a < -1e-8 {
        return Err(Error::Internal(format!("alpha out of range: {a}")));
    }
    Ok(a.clamp(0.0, 1.0))
}

/// Predetermined gate placements: an ordered list of deterministic layers
/// whose union connects all sites.
#[derive(Clone, Debug)]
pub struct FixedArchitecture {
    n_sites: usize,
    local_dim: usize,
    layers: Vec<LayerEnsemble>,
    connection_depth: usize,
    complete: bool,
}

impl FixedArchitecture {
    pub fn new(
        n_sites: usize,
        local_dim: usize,
        layer_pairs: &[Vec<(usize, usize)>],
        locals: &LocalSpec,
    ) -> Result<Self> {
        if layer_pairs.is_empty() {
            return Err(Error::invalid("fixed architecture: need at least one layer"));
        }
        let all_pairs: Vec<(usize, usize)> =
            layer_pairs.iter().flatten().copied().collect();
        if !is_connected(n_sites, &all_pairs) {
            return Err(Error::DisconnectedGraph { n_sites });
        }
        let layers = layer_pairs
            .iter()
            .map(|pairs| LayerEnsemble::deterministic(n_sites, local_dim, pairs.clone(), locals))
            .collect::<Result<Vec<_>>>()?;
        let complete = layers
            .iter()
            .all(|l| l.protocols()[0].pairs().len() == n_sites / 2);
        let connection_depth = layers.len();
        Ok(FixedArchitecture { n_sites, local_dim, layers, connection_depth, complete })
    }

    /// Unvalidated template, e.g. a patch interior that need not connect all
    /// sites (an empty layer list is the identity patch).
    pub fn template(
        n_sites: usize,
        local_dim: usize,
        layer_pairs: &[Vec<(usize, usize)>],
        locals: &LocalSpec,
    ) -> Result<Self> {
        let layers = layer_pairs
            .iter()
            .map(|pairs| LayerEnsemble::deterministic(n_sites, local_dim, pairs.clone(), locals))
            .collect::<Result<Vec<_>>>()?;
        let complete = !layers.is_empty()
            && layers.iter().all(|l| l.protocols()[0].pairs().len() == n_sites / 2);
        let connection_depth = layers.len();
        Ok(FixedArchitecture { n_sites, local_dim, layers, connection_depth, complete })
    }

    /// The same block repeated `reps` times.
    pub fn repeat(&self, reps: usize) -> FixedArchitecture {
        let mut layers = Vec::with_capacity(self.layers.len() * reps);
        for _ in 0..reps {
            layers.extend(self.layers.iter().cloned());
        }
        FixedArchitecture {
            n_sites: self.n_sites,
            local_dim: self.local_dim,
            connection_depth: layers.len(),
            complete: self.complete,
            layers,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn layers(&self) -> &[LayerEnsemble] {
        &self.layers
    }

    pub fn connection_depth(&self) -> usize {
        self.connection_depth
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// All locals replaced by the exact Haar marker.
    pub fn haarized(&self) -> FixedArchitecture {
        FixedArchitecture {
            n_sites: self.n_sites,
            local_dim: self.local_dim,
            layers: self.layers.iter().map(haarized_layer).collect(),
            connection_depth: self.connection_depth,
            complete: self.complete,
        }
    }

    /// Minimum two-qudit gap over every pair in every layer.
    pub fn local_gap(&self, t: usize, limits: &Limits) -> Result<f64> {
        let mut min_gap = f64::INFINITY;
        for layer in &self.layers {
            min_gap = min_gap.min(local_gap(layer, t, limits)?);
        }
        if min_gap.is_infinite() {
            return Ok(0.0);
        }
        Ok(min_gap)
    }
}

/// Dense moment operator of the whole block: the ordered product of the
/// layer moment operators (later layers applied on the left).
pub fn block_moment(arch: &FixedArchitecture, t: usize, limits: &Limits) -> Result<MomentOperator> {
    let space = ReplicaSpace::moment(arch.n_sites, arch.local_dim, t);
    let dim = space.dim(limits)?;
    let q = usize::pow(arch.local_dim, arch.n_sites as u32);
    let mut acc: Option<CMatrix> = None;
    for layer in &arch.layers {
        acc = Some(match acc {
            None => layer_moment(layer, t, limits)?.matrix,
            Some(x) => apply_layer_left(layer, t, &x, limits)?,
        });
    }
    let matrix = acc.unwrap_or_else(|| CMatrix::identity(dim));
    MomentOperator::new(q, t, matrix)
}

/// 1D local family: one uniformly chosen neighboring pair per layer.
pub fn make_1d_local(n_sites: usize, local_dim: usize, locals: &LocalSpec) -> Result<LayerEnsemble> {
    if n_sites < 2 {
        return Err(Error::invalid("1D local: need at least two sites"));
    }
    let q = 1.0 / (n_sites - 1) as f64;
    let protocols = (0..n_sites - 1)
        .map(|i| Protocol::new(q, vec![(i, i + 1)], vec![locals.for_pair((i, i + 1))?]))
        .collect::<Result<Vec<_>>>()?;
    LayerEnsemble::new(n_sites, local_dim, protocols)
}

/// 1D parallel family: all odd pairs or all even pairs, each with
/// probability one half. Odd site counts leave the trailing site idle.
pub fn make_1d_parallel(
    n_sites: usize,
    local_dim: usize,
    locals: &LocalSpec,
) -> Result<LayerEnsemble> {
    if n_sites < 2 {
        return Err(Error::invalid("1D parallel: need at least two sites"));
    }
    let odd_pairs: Vec<(usize, usize)> =
        (0..).map(|k| (2 * k, 2 * k + 1)).take_while(|&(_, j)| j < n_sites).collect();
    let even_pairs: Vec<(usize, usize)> =
        (0..).map(|k| (2 * k + 1, 2 * k + 2)).take_while(|&(_, j)| j < n_sites).collect();
    let build = |pairs: Vec<(usize, usize)>| -> Result<Protocol> {
        let ens = pairs.iter().map(|&p| locals.for_pair(p)).collect::<Result<Vec<_>>>()?;
        Protocol::new(0.5, pairs, ens)
    };
    LayerEnsemble::new(n_sites, local_dim, vec![build(odd_pairs)?, build(even_pairs)?])
}

/// All-to-all family: one uniformly chosen pair among all pairs.
pub fn make_all_to_all(
    n_sites: usize,
    local_dim: usize,
    locals: &LocalSpec,
) -> Result<LayerEnsemble> {
    if n_sites < 2 {
        return Err(Error::invalid("all-to-all: need at least two sites"));
    }
    let count = n_sites * (n_sites - 1) / 2;
    let q = 1.0 / count as f64;
    let mut protocols = Vec::with_capacity(count);
    for i in 0..n_sites {
        for j in i + 1..n_sites {
            protocols.push(Protocol::new(q, vec![(i, j)], vec![locals.for_pair((i, j))?])?);
        }
    }
    LayerEnsemble::new(n_sites, local_dim, protocols)
}

/// General-connectivity family: one uniformly chosen edge of the graph.
/// The edge set must connect all sites.
pub fn make_graph(
    n_sites: usize,
    local_dim: usize,
    edges: &[(usize, usize)],
    locals: &LocalSpec,
) -> Result<LayerEnsemble> {
    if edges.is_empty() {
        return Err(Error::invalid("graph: need at least one edge"));
    }
    if !is_connected(n_sites, edges) {
        return Err(Error::DisconnectedGraph { n_sites });
    }
    let q = 1.0 / edges.len() as f64;
    let protocols = edges
        .iter()
        .map(|&(i, j)| {
            let pair = (i.min(j), i.max(j));
            Protocol::new(q, vec![pair], vec![locals.for_pair(pair)?])
        })
        .collect::<Result<Vec<_>>>()?;
    LayerEnsemble::new(n_sites, local_dim, protocols)
}

/// Two-layer brickwork block: odd pairs then even pairs.
pub fn make_brickwork_block(
    n_sites: usize,
    local_dim: usize,
    locals: &LocalSpec,
) -> Result<FixedArchitecture> {
    if n_sites < 3 {
        return Err(Error::invalid("brickwork: need at least three sites"));
    }
    let odd: Vec<(usize, usize)> =
        (0..).map(|k| (2 * k, 2 * k + 1)).take_while(|&(_, j)| j < n_sites).collect();
    let even: Vec<(usize, usize)> =
        (0..).map(|k| (2 * k + 1, 2 * k + 2)).take_while(|&(_, j)| j < n_sites).collect();
    FixedArchitecture::new(n_sites, local_dim, &[odd, even], locals)
}

/// Reorders the site digits of a patch operator from its logical site list
/// (circuit order, possibly wrapped) to ascending physical order.
fn permute_patch_sites(
    op: &CMatrix,
    logical_sites: &[usize],
    local_dim: usize,
    t: usize,
) -> (CMatrix, Vec<usize>) {
    crate::linalg::permute_site_digits(op, logical_sites, local_dim, 2 * t)
}

/// Assembles the moment operator of a two-patch-layer circuit: patches of
/// `2 xi` sites tiled from offset 0, then staggered by `xi` with periodic
/// wraparound. Each patch applies the template block once.
pub fn patchwork_assemble(
    n_sites: usize,
    xi: usize,
    patch: &FixedArchitecture,
    t: usize,
    limits: &Limits,
) -> Result<MomentOperator> {
    if xi == 0 {
        return Err(Error::invalid("patchwork: patch half-size xi must be >= 1"));
    }
    let patch_sites = 2 * xi;
    if patch.n_sites() != patch_sites {
        return Err(Error::DimensionMismatch {
            context: "patchwork: patch template size",
            expected: patch_sites,
            got: patch.n_sites(),
        });
    }
    if n_sites % patch_sites != 0 {
        return Err(Error::invalid(format!(
            "patchwork: {n_sites} sites not divisible by patch size {patch_sites}"
        )));
    }
    let d = patch.local_dim();
    let space = ReplicaSpace::moment(n_sites, d, t);
    space.dim(limits)?;
    let m_patch = block_moment(patch, t, limits)?.matrix;
    let n_patches = n_sites / patch_sites;

    let layer_op = |offset: usize| -> Result<CMatrix> {
        let mut mats = Vec::with_capacity(n_patches);
        let mut site_lists = Vec::with_capacity(n_patches);
        for p in 0..n_patches {
            let logical: Vec<usize> =
                (0..patch_sites).map(|j| (offset + p * patch_sites + j) % n_sites).collect();
            let (op, sorted) = permute_patch_sites(&m_patch, &logical, d, t);
            mats.push(op);
            site_lists.push(sorted);
        }
        let ops: Vec<(&CMatrix, &[usize])> =
            mats.iter().zip(&site_lists).map(|(m, s)| (m, s.as_slice())).collect();
        space.embed(&ops, limits)
    };

    let first = layer_op(0)?;
    let second = layer_op(xi % n_sites)?;
    let q = usize::pow(d, n_sites as u32);
    MomentOperator::new(q, t, second.mul(&first)?)
}

/// A circuit description: a repeated random layer, a repeated fixed block,
/// or a two-layer patchwork of template patches.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub n_sites: usize,
    pub local_dim: usize,
    pub kind: ArchKind,
}

#[derive(Clone, Debug)]
pub enum ArchKind {
    SingleLayer(LayerEnsemble),
    FixedBlock(FixedArchitecture),
    Patchwork { xi: usize, patch: FixedArchitecture },
}

impl Architecture {
    pub fn single_layer(layer: LayerEnsemble) -> Self {
        Architecture {
            n_sites: layer.n_sites(),
            local_dim: layer.local_dim(),
            kind: ArchKind::SingleLayer(layer),
        }
    }

    pub fn fixed_block(arch: FixedArchitecture) -> Self {
        Architecture {
            n_sites: arch.n_sites(),
            local_dim: arch.local_dim(),
            kind: ArchKind::FixedBlock(arch),
        }
    }

    pub fn patchwork(n_sites: usize, xi: usize, patch: FixedArchitecture) -> Self {
        Architecture {
            n_sites,
            local_dim: patch.local_dim(),
            kind: ArchKind::Patchwork { xi, patch },
        }
    }

    /// Dense moment operator of the depth-`depth` circuit, formed as an
    /// explicit product of per-layer moment operators.
    pub fn depth_moment(&self, depth: usize, t: usize, limits: &Limits) -> Result<MomentOperator> {
        let space = ReplicaSpace::moment(self.n_sites, self.local_dim, t);
        let dim = space.dim(limits)?;
        let q = usize::pow(self.local_dim, self.n_sites as u32);
        match &self.kind {
            ArchKind::SingleLayer(layer) => {
                let mut acc: Option<CMatrix> = None;
                for _ in 0..depth {
                    acc = Some(match acc {
                        None => layer_moment(layer, t, limits)?.matrix,
                        Some(x) => apply_layer_left(layer, t, &x, limits)?,
                    });
                }
                MomentOperator::new(q, t, acc.unwrap_or_else(|| CMatrix::identity(dim)))
            }
            ArchKind::FixedBlock(arch) => {
                let mut acc: Option<CMatrix> = None;
                for i in 0..depth {
                    let layer = &arch.layers()[i % arch.layers().len()];
                    acc = Some(match acc {
                        None => layer_moment(layer, t, limits)?.matrix,
                        Some(x) => apply_layer_left(layer, t, &x, limits)?,
                    });
                }
                MomentOperator::new(q, t, acc.unwrap_or_else(|| CMatrix::identity(dim)))
            }
            ArchKind::Patchwork { xi, patch } => {
                // depth counts patch layers; a full block is two layers
                let assembled = patchwork_assemble(self.n_sites, *xi, patch, t, limits)?;
                let mut acc = CMatrix::identity(dim);
                let full_blocks = depth / 2;
                for _ in 0..full_blocks {
                    acc = assembled.matrix.mul(&acc)?;
                }
                if depth % 2 == 1 {
                    // one leading unstaggered patch layer
                    let single = {
                        let m_patch = block_moment(patch, t, limits)?.matrix;
                        let n_patches = self.n_sites / (2 * xi);
                        let mut mats = Vec::new();
                        let mut lists = Vec::new();
                        for p in 0..n_patches {
                            let logical: Vec<usize> =
                                (0..2 * xi).map(|j| p * 2 * xi + j).collect();
                            let (op, sorted) =
                                permute_patch_sites(&m_patch, &logical, self.local_dim, t);
                            mats.push(op);
                            lists.push(sorted);
                        }
                        let ops: Vec<(&CMatrix, &[usize])> =
                            mats.iter().zip(&lists).map(|(m, s)| (m, s.as_slice())).collect();
                        space.embed(&ops, limits)?
                    };
                    acc = single.mul(&acc)?;
                }
                MomentOperator::new(q, t, acc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::linalg::{embed_local, haar_sample, SiteEmbedding};
    use crate::moment::spectral_gap;

    fn limits() -> Limits {
        Limits::default()
    }

    fn haar_spec() -> LocalSpec {
        LocalSpec::haar()
    }

    fn random_local(seed: u64) -> LocalSpec {
        LocalSpec::Shared(LocalEnsemble::Gates(gates::random_ensemble(4, 3, seed).unwrap()))
    }

    #[test]
    fn local_1d_structure() {
        let layer = make_1d_local(3, 2, &haar_spec()).unwrap();
        assert_eq!(layer.protocols().len(), 2);
        for (proto, want_pair) in layer.protocols().iter().zip([(0, 1), (1, 2)]) {
            assert!((proto.probability() - 0.5).abs() < 1e-15);
            assert_eq!(proto.pairs(), &[want_pair]);
        }
    }

    #[test]
    fn all_to_all_structure() {
        let layer = make_all_to_all(3, 2, &haar_spec()).unwrap();
        assert_eq!(layer.protocols().len(), 3);
        for proto in layer.protocols() {
            assert!((proto.probability() - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(proto.pairs().len(), 1);
        }
    }

    #[test]
    fn parallel_1d_structure() {
        let layer = make_1d_parallel(4, 2, &haar_spec()).unwrap();
        assert_eq!(layer.protocols().len(), 2);
        assert_eq!(layer.protocols()[0].pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(layer.protocols()[1].pairs(), &[(1, 2)]);
        // odd site count leaves the trailing site idle
        let odd = make_1d_parallel(5, 2, &haar_spec()).unwrap();
        assert_eq!(odd.protocols()[0].pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(odd.protocols()[1].pairs(), &[(1, 2), (3, 4)]);
    }

    #[test]
    fn graph_requires_connectivity() {
        let err = make_graph(4, 2, &[(0, 1), (2, 3)], &haar_spec());
        assert!(matches!(err, Err(Error::DisconnectedGraph { .. })));
        let ok = make_graph(4, 2, &[(0, 1), (1, 2), (2, 3), (0, 3)], &haar_spec());
        assert!(ok.is_ok());
    }

    #[test]
    fn brickwork_structure_and_connectivity() {
        let bw4 = make_brickwork_block(4, 2, &haar_spec()).unwrap();
        assert_eq!(bw4.layers()[0].protocols()[0].pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(bw4.layers()[1].protocols()[0].pairs(), &[(1, 2)]);
        assert_eq!(bw4.connection_depth(), 2);
        assert!(!bw4.is_complete()); // second layer has 1 < 2 pairs

        let bw3 = make_brickwork_block(3, 2, &haar_spec()).unwrap();
        assert_eq!(bw3.layers()[0].protocols()[0].pairs(), &[(0, 1)]);
        assert_eq!(bw3.layers()[1].protocols()[0].pairs(), &[(1, 2)]);
        assert!(bw3.is_complete()); // floor(3/2) = 1 pair per layer

        for n in 3..=8 {
            assert!(make_brickwork_block(n, 2, &haar_spec()).is_ok());
        }
        assert!(make_brickwork_block(2, 2, &haar_spec()).is_err());
    }

    #[test]
    fn layer_moment_single_pair_is_pair_moment() {
        let e = gates::random_ensemble(4, 2, 7).unwrap();
        let spec = LocalSpec::Shared(LocalEnsemble::Gates(e.clone()));
        let layer = make_1d_local(2, 2, &spec).unwrap();
        let m = layer_moment(&layer, 1, &limits()).unwrap();
        let pair = crate::moment::moment_operator(&e, 1, &limits()).unwrap();
        assert!(m.matrix.max_abs_diff(&pair.matrix) < 1e-14);
    }

    #[test]
    fn layer_moment_matches_direct_embedding_sum() {
        // 1D local, N = 3, t = 1, Haar pairs: (P_01 (x) 1 + 1 (x) P_12) / 2
        let layer = make_1d_local(3, 2, &haar_spec()).unwrap();
        let m = layer_moment(&layer, 1, &limits()).unwrap();
        let p_pair = crate::moment::haar_projector(4, 1, &limits()).unwrap().matrix;
        let e01 = embed_local(
            &p_pair,
            &SiteEmbedding::new(3, 2, 1, vec![0, 1]).unwrap(),
            &limits(),
        )
        .unwrap();
        let e12 = embed_local(
            &p_pair,
            &SiteEmbedding::new(3, 2, 1, vec![1, 2]).unwrap(),
            &limits(),
        )
        .unwrap();
        let want = e01.add(&e12).unwrap().scale(C64::new(0.5, 0.0));
        assert!(m.matrix.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn haarized_layer_is_idempotent_and_structural() {
        let layer = make_1d_local(3, 2, &random_local(3)).unwrap();
        let h = haarized_layer(&layer);
        assert!(h.is_haar());
        let hh = haarized_layer(&h);
        let mh = layer_moment(&h, 1, &limits()).unwrap();
        let mhh = layer_moment(&hh, 1, &limits()).unwrap();
        assert_eq!(mh.matrix.max_abs_diff(&mhh.matrix), 0.0);
        for (a, b) in layer.protocols().iter().zip(h.protocols()) {
            assert_eq!(a.pairs(), b.pairs());
            assert_eq!(a.probability(), b.probability());
        }
    }

    #[test]
    fn haarized_gap_matches_projector_embedding_route() {
        let layer = make_1d_local(3, 2, &random_local(11)).unwrap();
        let h = haarized_layer(&layer);
        let m = layer_moment(&h, 1, &limits()).unwrap();
        let p_all = crate::moment::haar_projector(8, 1, &limits()).unwrap();
        let gap_engine = spectral_gap(&m, &p_all).unwrap().gap;

        let p_pair = crate::moment::haar_projector(4, 1, &limits()).unwrap().matrix;
        let e01 = embed_local(
            &p_pair,
            &SiteEmbedding::new(3, 2, 1, vec![0, 1]).unwrap(),
            &limits(),
        )
        .unwrap();
        let e12 = embed_local(
            &p_pair,
            &SiteEmbedding::new(3, 2, 1, vec![1, 2]).unwrap(),
            &limits(),
        )
        .unwrap();
        let direct = e01.add(&e12).unwrap().scale(C64::new(0.5, 0.0));
        let diff = direct.sub(&p_all.matrix).unwrap();
        let gap_direct = 1.0 - op_norm_default(&diff).unwrap().value;
        assert!((gap_engine - gap_direct).abs() < 1e-9);
    }

    #[test]
    fn cluster_merge_examples() {
        // {{1,2},{5,6}} merged with {{1,3}} gives {{1,2,3},{5,6}}
        let a = Cluster::new(vec![vec![1, 2], vec![5, 6]]).unwrap();
        let b = Cluster::new(vec![vec![1, 3]]).unwrap();
        let m = merge_clusters(&a, &b);
        assert_eq!(m.blocks(), &[vec![1, 2, 3], vec![5, 6]]);

        let e = Cluster::empty();
        assert_eq!(merge_clusters(&a, &e), a);
    }

    #[test]
    fn cluster_merge_commutative_associative() {
        let partitions = [
            Cluster::new(vec![vec![0, 1]]).unwrap(),
            Cluster::new(vec![vec![1, 2], vec![3, 4]]).unwrap(),
            Cluster::new(vec![vec![0, 4]]).unwrap(),
            Cluster::empty(),
        ];
        for a in &partitions {
            for b in &partitions {
                assert_eq!(merge_clusters(a, b), merge_clusters(b, a));
                for c in &partitions {
                    let left = merge_clusters(&merge_clusters(a, b), c);
                    let right = merge_clusters(a, &merge_clusters(b, c));
                    assert_eq!(left, right);
                }
            }
        }
    }

    #[test]
    fn cluster_projector_trivial_cases() {
        let empty = cluster_projector(&Cluster::empty(), 2, 2, 1, &limits()).unwrap();
        assert_eq!(empty.max_abs_diff(&CMatrix::identity(16)), 0.0);

        let all = Cluster::new(vec![vec![0, 1, 2]]).unwrap();
        let p = cluster_projector(&all, 3, 2, 1, &limits()).unwrap();
        let want = crate::moment::haar_projector(8, 1, &limits()).unwrap().matrix;
        assert!(p.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn cluster_projector_matches_embedding_oracle() {
        let c = Cluster::new(vec![vec![0, 1]]).unwrap();
        let p = cluster_projector(&c, 3, 2, 1, &limits()).unwrap();
        let p_pair = crate::moment::haar_projector(4, 1, &limits()).unwrap().matrix;
        let want = embed_local(
            &p_pair,
            &SiteEmbedding::new(3, 2, 1, vec![0, 1]).unwrap(),
            &limits(),
        )
        .unwrap();
        assert!(p.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn cluster_projector_is_projector_and_merge_is_finer() {
        let c1 = Cluster::new(vec![vec![0, 1]]).unwrap();
        let c2 = Cluster::new(vec![vec![1, 2]]).unwrap();
        let merged = merge_clusters(&c1, &c2);
        let p1 = cluster_projector(&c1, 3, 2, 1, &limits()).unwrap();
        let pm = cluster_projector(&merged, 3, 2, 1, &limits()).unwrap();
        let idem = p1.mul(&p1).unwrap().sub(&p1).unwrap();
        assert!(op_norm_default(&idem).unwrap().value <= 1e-9);
        let herm = p1.sub(&p1.adjoint()).unwrap();
        assert!(op_norm_default(&herm).unwrap().value <= 1e-10);
        // range(P_merge) inside range(P_1): P_merge = P_1 P_merge
        let prod = p1.mul(&pm).unwrap();
        assert!(prod.max_abs_diff(&pm) < 1e-9);
    }

    #[test]
    fn gamma_trivial_cases() {
        let c = Cluster::new(vec![vec![0, 1]]).unwrap();
        let g = gamma(&c, &c, &c, 3, 2, 1, &limits()).unwrap();
        assert!((g - 1.0).abs() < 1e-9);

        let a = Cluster::new(vec![vec![0, 1]]).unwrap();
        let b = Cluster::new(vec![vec![2, 3]]).unwrap();
        let m = merge_clusters(&a, &b);
        let g2 = gamma(&a, &b, &m, 4, 2, 1, &limits()).unwrap();
        assert!((g2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_matches_dense_oracle_and_is_symmetric() {
        let c1 = Cluster::new(vec![vec![0, 1]]).unwrap();
        let c2 = Cluster::new(vec![vec![1, 2]]).unwrap();
        let merged = merge_clusters(&c1, &c2);
        let g = gamma(&c1, &c2, &merged, 3, 2, 1, &limits()).unwrap();

        // dense route: || P_12 P_01 - P_012 ||^2 with explicit products
        let p1 = cluster_projector(&c1, 3, 2, 1, &limits()).unwrap();
        let p2 = cluster_projector(&c2, 3, 2, 1, &limits()).unwrap();
        let pm = cluster_projector(&merged, 3, 2, 1, &limits()).unwrap();
        let diff = p2.mul(&p1).unwrap().sub(&pm).unwrap();
        let norm = crate::linalg::svd_norm(&diff).unwrap();
        let want = 1.0 - norm * norm;
        assert!((g - want).abs() < 1e-9);

        let g_rev = gamma(&c2, &c1, &merged, 3, 2, 1, &limits()).unwrap();
        assert!((g - g_rev).abs() < 1e-8);
    }

    #[test]
    fn alpha_trivial_and_oracle_cases() {
        // Haar layer: alpha = 1
        let layer = LayerEnsemble::deterministic(3, 2, vec![(0, 1)], &haar_spec()).unwrap();
        let a = alpha(&layer, 1, &limits()).unwrap();
        assert!((a - 1.0).abs() < 1e-9);

        // singleton non-trivial unitary: residual norm 1, alpha = 0
        let u = haar_sample(4, 5).unwrap();
        let single = LocalSpec::Shared(LocalEnsemble::Gates(
            GateEnsemble::singleton(u).unwrap(),
        ));
        let layer1 = LayerEnsemble::deterministic(3, 2, vec![(0, 1)], &single).unwrap();
        let a1 = alpha(&layer1, 1, &limits()).unwrap();
        assert!(a1.abs() < 1e-8);
    }

    #[test]
    fn alpha_pair_route_matches_dense_route() {
        for seed in 0..3 {
            let spec = random_local(2200 + seed);
            let layer =
                LayerEnsemble::deterministic(4, 2, vec![(0, 1), (2, 3)], &spec).unwrap();
            let fast = alpha(&layer, 1, &limits()).unwrap();
            let m = layer_moment(&layer, 1, &limits()).unwrap();
            let p = cluster_projector(&layer.cluster(), 4, 2, 1, &limits()).unwrap();
            let norm = crate::linalg::svd_norm(&m.matrix.sub(&p).unwrap()).unwrap();
            let dense = 1.0 - norm * norm;
            assert!((fast - dense).abs() < 1e-9, "seed {seed}: {fast} vs {dense}");
        }
    }

    #[test]
    fn alpha_dominates_local_gap_bound() {
        // alpha >= 1 - (1 - local_gap)^2 - 1e-8
        for seed in 0..4 {
            let spec = random_local(40 + seed);
            let layer = LayerEnsemble::deterministic(4, 2, vec![(0, 1), (2, 3)], &spec).unwrap();
            let a = alpha(&layer, 1, &limits()).unwrap();
            let lg = local_gap(&layer, 1, &limits()).unwrap();
            assert!(a >= 1.0 - (1.0 - lg).powi(2) - 1e-8, "seed {seed}: {a} vs {lg}");
        }
    }

    #[test]
    fn local_gap_cases() {
        let haar_layer = make_1d_local(3, 2, &haar_spec()).unwrap();
        assert_eq!(local_gap(&haar_layer, 1, &limits()).unwrap(), 1.0);

        // a singleton-unitary pair forces the minimum to zero
        let mut map = BTreeMap::new();
        map.insert((0usize, 1usize), LocalEnsemble::Haar);
        map.insert(
            (1usize, 2usize),
            LocalEnsemble::Gates(GateEnsemble::singleton(haar_sample(4, 3).unwrap()).unwrap()),
        );
        let mixed = make_1d_local(3, 2, &LocalSpec::per_pair(map)).unwrap();
        let gap = local_gap(&mixed, 1, &limits()).unwrap();
        assert!(gap.abs() < 1e-9);
    }

    #[test]
    fn local_gap_matches_svd_oracle_for_product_locals() {
        // single-qubit {I, T, H} tensored on both qudits of the pair
        let pair = gates::product_ensemble(&gates::iht_ensemble(), &gates::iht_ensemble()).unwrap();
        let spec = LocalSpec::Shared(LocalEnsemble::Gates(pair.clone()));
        let layer = make_1d_local(3, 2, &spec).unwrap();
        for t in 1..=2 {
            let engine = local_gap(&layer, t, &limits()).unwrap();
            let m = crate::moment::moment_operator(&pair, t, &limits()).unwrap();
            let p = crate::moment::haar_projector(4, t, &limits()).unwrap();
            let diff = m.matrix.sub(&p.matrix).unwrap();
            let want = 1.0 - crate::linalg::svd_norm(&diff).unwrap();
            assert!((engine - want).abs() < 1e-9, "t={t}: {engine} vs {want}");
        }
    }

    #[test]
    fn block_moment_matches_dense_layer_products() {
        let bw = make_brickwork_block(3, 2, &random_local(21)).unwrap();
        let block = block_moment(&bw, 1, &limits()).unwrap();
        let m0 = layer_moment(&bw.layers()[0], 1, &limits()).unwrap();
        let m1 = layer_moment(&bw.layers()[1], 1, &limits()).unwrap();
        let want = m1.matrix.mul(&m0.matrix).unwrap();
        assert!(block.matrix.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn single_layer_gap_bound_invariant() {
        // layer gap >= (local_gap / 2) * haarized gap - 1e-8
        let p_all = crate::moment::haar_projector(8, 1, &limits()).unwrap();
        for seed in 0..5 {
            let layer = make_1d_local(3, 2, &random_local(900 + seed)).unwrap();
            let m = layer_moment(&layer, 1, &limits()).unwrap();
            let gap = spectral_gap(&m, &p_all).unwrap().gap;
            let mh = layer_moment(&haarized_layer(&layer), 1, &limits()).unwrap();
            let gap_h = spectral_gap(&mh, &p_all).unwrap().gap;
            let lg = local_gap(&layer, 1, &limits()).unwrap();
            assert!(
                gap >= 0.5 * lg * gap_h - 1e-8,
                "seed {seed}: {gap} vs {} * {gap_h}",
                0.5 * lg
            );
        }
    }

    #[test]
    fn patchwork_degenerate_single_patch() {
        // xi = N/2: the two layers are whole-system patches; the assembled
        // operator is the product of the two patch moment operators
        let patch = make_brickwork_block(4, 2, &random_local(70)).unwrap();
        let assembled = patchwork_assemble(4, 2, &patch, 1, &limits()).unwrap();
        let m_patch = block_moment(&patch, 1, &limits()).unwrap();
        // staggered layer wraps to sites (2,3,0,1): same full set
        let want_first = m_patch.matrix.clone();
        let logical: Vec<usize> = vec![2, 3, 0, 1];
        let (rotated, sorted) = permute_patch_sites(&m_patch.matrix, &logical, 2, 1);
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        let want = rotated.mul(&want_first).unwrap();
        assert!(assembled.matrix.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn patchwork_identity_patches() {
        let patch = FixedArchitecture::template(2, 2, &[], &haar_spec()).unwrap();
        let assembled = patchwork_assemble(4, 1, &patch, 1, &limits()).unwrap();
        assert!(assembled.matrix.max_abs_diff(&CMatrix::identity(256)) < 1e-14);
    }

    #[test]
    fn patchwork_haar_gap_matches_direct_construction() {
        // N = 4, xi = 1, t = 1, all-Haar single-layer patches
        let patch =
            FixedArchitecture::template(2, 2, &[vec![(0, 1)]], &haar_spec()).unwrap();
        let assembled = patchwork_assemble(4, 1, &patch, 1, &limits()).unwrap();
        let p_all = crate::moment::haar_projector(16, 1, &limits()).unwrap();
        let gap = spectral_gap(&assembled, &p_all).unwrap().gap;

        // direct construction: P_01 P_23 then P_12 P_30
        let space = ReplicaSpace::moment(4, 2, 1);
        let p_pair = crate::moment::haar_projector(4, 1, &limits()).unwrap().matrix;
        let layer_a = space
            .embed(&[(&p_pair, &[0, 1]), (&p_pair, &[2, 3])], &limits())
            .unwrap();
        // wrapped patch (3, 0): SWAP the two patch qudits before embedding
        let (rot, sorted) = permute_patch_sites(&p_pair, &[3, 0], 2, 1);
        assert_eq!(sorted, vec![0, 3]);
        let layer_b = space
            .embed(&[(&p_pair, &[1, 2]), (&rot, &[0, 3])], &limits())
            .unwrap();
        let direct = layer_b.mul(&layer_a).unwrap();
        let diff = direct.sub(&p_all.matrix).unwrap();
        let want = 1.0 - op_norm_default(&diff).unwrap().value;
        assert!((gap - want).abs() < 1e-9, "{gap} vs {want}");
    }

    #[test]
    fn depth_moment_zero_is_identity_and_powers_compose() {
        let layer = make_1d_local(2, 2, &random_local(81)).unwrap();
        let arch = Architecture::single_layer(layer.clone());
        let d0 = arch.depth_moment(0, 1, &limits()).unwrap();
        assert_eq!(d0.matrix.max_abs_diff(&CMatrix::identity(16)), 0.0);
        let d1 = arch.depth_moment(1, 1, &limits()).unwrap();
        let d3 = arch.depth_moment(3, 1, &limits()).unwrap();
        let want = d1.matrix.mul(&d1.matrix).unwrap().mul(&d1.matrix).unwrap();
        assert!(d3.matrix.max_abs_diff(&want) < 1e-12);
    }
}
