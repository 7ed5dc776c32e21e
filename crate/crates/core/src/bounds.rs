//! Closed-form depth formulas and inequality verifiers relating local
//! randomness to global design formation.

use num_complex::Complex64 as C64;

use crate::arch::{
    alpha, block_moment, cluster_projector, gamma, haarized_layer, layer_moment, local_gap,
    make_brickwork_block, merge_clusters, Cluster, FixedArchitecture, LayerEnsemble, LocalSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{min_eig_hermitian, op_norm_default, CMatrix, Limits};
use crate::moment::{haar_projector, spectral_gap, HaarProjector, MomentOperator};

/// Additive slack applied on top of norm tolerances in inequality checks.
pub const CHECK_SLACK: f64 = 1e-8;
/// Tighter slack for the mixture Gram positivity check.
pub const PSD_SLACK: f64 = 1e-10;

/// Outcome of a single inequality check. The orientation is always
/// `lhs >= rhs - slack`; which side is which is fixed per formula and
/// recorded in `formula`.
#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub formula: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub slack: f64,
    pub passed: bool,
}

impl BoundCheck {
    pub fn geq(formula: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        BoundCheck {
            formula: formula.to_string(),
            lhs,
            rhs,
            margin: lhs - rhs,
            slack,
            passed: lhs >= rhs - slack,
        }
    }
}

/// Evaluated closed-form depth bound with its inputs recorded.
#[derive(Clone, Debug)]
pub struct DepthBound {
    /// Depth with the natural-logarithm convention.
    pub depth: f64,
    /// The same bound with base-2 logarithms (a fixed rescaling).
    pub depth_log2: f64,
    pub formula: String,
    pub inputs: Vec<(String, f64)>,
}

const LN_2: f64 = std::f64::consts::LN_2;

fn design_exponent(n_sites: usize, t: usize, local_dim: usize, eps: f64) -> f64 {
    2.0 * n_sites as f64 * t as f64 * (local_dim as f64).ln() - eps.ln()
}

/// Formation depth of a circuit whose every layer has spectral gap `gap`:
/// `gap^{-1} (2 N t log d - log eps)`.
pub fn haar_depth(
    gap: f64,
    n_sites: usize,
    t: usize,
    local_dim: usize,
    eps: f64,
) -> Result<DepthBound> {
    if !(gap > 0.0) {
        return Err(Error::UnboundedDepth { input: "layer" });
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("depth bound requires eps > 0"));
    }
    let depth = design_exponent(n_sites, t, local_dim, eps) / gap;
    Ok(DepthBound {
        depth,
        depth_log2: depth / LN_2,
        formula: "haar_depth".into(),
        inputs: vec![
            ("gap".into(), gap),
            ("n_sites".into(), n_sites as f64),
            ("t".into(), t as f64),
            ("local_dim".into(), local_dim as f64),
            ("eps".into(), eps),
        ],
    })
}

/// Depth bound for single-layer-connected circuits with non-Haar locals:
/// twice the Haar depth divided by the averaged local gap.
pub fn single_layer_depth(local_gap_avg: f64, haar: &DepthBound) -> Result<DepthBound> {
    if !(local_gap_avg > 0.0) {
        return Err(Error::UnboundedDepth { input: "local" });
    }
    let depth = 2.0 * haar.depth / local_gap_avg;
    let mut inputs = vec![("local_gap_avg".into(), local_gap_avg)];
    inputs.extend(haar.inputs.iter().cloned());
    Ok(DepthBound {
        depth,
        depth_log2: depth / LN_2,
        formula: "single_layer_depth".into(),
        inputs,
    })
}

/// Finite-horizon evaluation of the averaged local gap: the minimum over
/// all prefixes of the running average.
pub fn averaged_local_gap(per_layer_gaps: &[f64]) -> Result<f64> {
    if per_layer_gaps.is_empty() {
        return Err(Error::invalid("averaged_local_gap: empty gap list"));
    }
    let mut best = f64::INFINITY;
    let mut sum = 0.0;
    for (k, g) in per_layer_gaps.iter().enumerate() {
        sum += g;
        best = best.min(sum / (k + 1) as f64);
    }
    Ok(best)
}

/// Single-layer gap lower bound: `gap >= (local_gap / 2) * haarized_gap`.
pub fn single_layer_gap_check(
    layer: &LayerEnsemble,
    t: usize,
    limits: &Limits,
) -> Result<BoundCheck> {
    let q = limits.checked_pow(layer.local_dim(), layer.n_sites() as u32)?;
    let p_all = haar_projector(q, t, limits)?;
    let m = layer_moment(layer, t, limits)?;
    let gap = spectral_gap(&m, &p_all)?.gap;
    let mh = layer_moment(&haarized_layer(layer), t, limits)?;
    let gap_haar = spectral_gap(&mh, &p_all)?.gap;
    let lg = local_gap(layer, t, limits)?;
    Ok(BoundCheck::geq("single_layer_gap", gap, 0.5 * lg * gap_haar, CHECK_SLACK))
}

/// Brickwork two-layer gap lower bound:
/// `gap >= local_gap^2 * haarized_gap`. An already computed haarized-block
/// gap may be supplied to avoid recomputation across seeds.
pub fn brickwork_gap_check(
    arch: &FixedArchitecture,
    t: usize,
    haar_gap: Option<f64>,
    limits: &Limits,
) -> Result<BoundCheck> {
    if arch.layers().len() != 2 {
        return Err(Error::invalid("brickwork check: need a two-layer block"));
    }
    let q = limits.checked_pow(arch.local_dim(), arch.n_sites() as u32)?;
    let p_all = haar_projector(q, t, limits)?;
    let m = block_moment(arch, t, limits)?;
    let gap = spectral_gap(&m, &p_all)?.gap;
    let gap_haar = match haar_gap {
        Some(g) => g,
        None => {
            let mh = block_moment(&arch.haarized(), t, limits)?;
            spectral_gap(&mh, &p_all)?.gap
        }
    };
    let lg = arch.local_gap(t, limits)?;
    Ok(BoundCheck::geq("brickwork_gap", gap, lg * lg * gap_haar, CHECK_SLACK))
}

/// Exact brickwork-floor value: the minimum over block sizes `3..=m_max`
/// of the haarized two-layer brickwork gap.
#[derive(Clone, Debug)]
pub struct GapFloor {
    pub value: f64,
    pub truncated: bool,
    pub evaluated: Vec<(usize, f64)>,
}

/// `f_c(N, t, d)` evaluated exactly for brickwork sizes up to `m_max`;
/// sizes below three are degenerate and contribute gap one. The result is
/// flagged truncated when `m_max < n_sites`.
pub fn brickwork_gap_floor(
    n_sites: usize,
    t: usize,
    local_dim: usize,
    m_max: usize,
    limits: &Limits,
) -> Result<GapFloor> {
    let top = m_max.min(n_sites);
    if top < 3 {
        return Err(Error::invalid(
            "brickwork gap floor: no computable block size m >= 3 within budget",
        ));
    }
    let mut evaluated = Vec::new();
    let mut value = f64::INFINITY;
    for m in 3..=top {
        let bw = make_brickwork_block(m, local_dim, &LocalSpec::haar())?;
        let q = limits.checked_pow(local_dim, m as u32)?;
        let p_all = haar_projector(q, t, limits)?;
        let mm = block_moment(&bw, t, limits)?;
        let gap = spectral_gap(&mm, &p_all)?.gap;
        evaluated.push((m, gap));
        value = value.min(gap);
    }
    Ok(GapFloor { value, truncated: m_max < n_sites, evaluated })
}

/// Exponent for incomplete architectures:
/// `8 * ceil(log2(floor(log2(N + 1)))) + 1`.
pub fn nesting_exponent(n_sites: usize) -> u32 {
    let floor_log2 = |x: usize| -> u32 { usize::BITS - 1 - x.leading_zeros() };
    let fl = floor_log2(n_sites + 1).max(1);
    let ceil_log2 = |x: u32| -> u32 {
        if x <= 1 {
            0
        } else {
            32 - (x - 1).leading_zeros()
        }
    };
    8 * ceil_log2(fl) + 1
}

/// `f_i = f_c^h` for incomplete architectures.
pub fn incomplete_gap_floor(
    n_sites: usize,
    t: usize,
    local_dim: usize,
    m_max: usize,
    limits: &Limits,
) -> Result<GapFloor> {
    let base = brickwork_gap_floor(n_sites, t, local_dim, m_max, limits)?;
    let h = nesting_exponent(n_sites);
    Ok(GapFloor {
        value: base.value.powi(h as i32),
        truncated: base.truncated,
        evaluated: base.evaluated,
    })
}

/// Outcome of the fixed-architecture gap check.
#[derive(Clone, Debug)]
pub struct FixedBlockOutcome {
    pub check: BoundCheck,
    pub floor: GapFloor,
    pub complete: bool,
}

/// Fixed-architecture gap lower bound:
/// `gap >= local_gap^l * floor`, with the floor taken from the complete or
/// incomplete branch as appropriate.
pub fn fixed_block_gap_check(
    arch: &FixedArchitecture,
    t: usize,
    m_max: usize,
    limits: &Limits,
) -> Result<FixedBlockOutcome> {
    let q = limits.checked_pow(arch.local_dim(), arch.n_sites() as u32)?;
    let p_all = haar_projector(q, t, limits)?;
    let m = block_moment(arch, t, limits)?;
    let gap = spectral_gap(&m, &p_all)?.gap;
    let lg = arch.local_gap(t, limits)?;
    let floor = if arch.is_complete() {
        brickwork_gap_floor(arch.n_sites(), t, arch.local_dim(), m_max, limits)?
    } else {
        incomplete_gap_floor(arch.n_sites(), t, arch.local_dim(), m_max, limits)?
    };
    let l = arch.connection_depth() as i32;
    let rhs = lg.powi(l) * floor.value;
    Ok(FixedBlockOutcome {
        check: BoundCheck::geq("fixed_block_gap", gap, rhs, CHECK_SLACK),
        floor,
        complete: arch.is_complete(),
    })
}

/// Depth bound for fixed-architecture circuits:
/// `local_gap^{-l} * floor^{-(l-1)} * l * (2 N t log d - log eps)`.
pub fn fixed_block_depth(
    local_gap_avg: f64,
    connection_depth: usize,
    floor_value: f64,
    n_sites: usize,
    t: usize,
    local_dim: usize,
    eps: f64,
) -> Result<DepthBound> {
    if !(local_gap_avg > 0.0) {
        return Err(Error::UnboundedDepth { input: "local" });
    }
    if !(floor_value > 0.0) {
        return Err(Error::UnboundedDepth { input: "gap floor" });
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("depth bound requires eps > 0"));
    }
    let l = connection_depth as f64;
    let depth = local_gap_avg.powf(-l)
        * floor_value.powf(-(l - 1.0))
        * l
        * design_exponent(n_sites, t, local_dim, eps);
    Ok(DepthBound {
        depth,
        depth_log2: depth / LN_2,
        formula: "fixed_block_depth".into(),
        inputs: vec![
            ("local_gap_avg".into(), local_gap_avg),
            ("connection_depth".into(), l),
            ("gap_floor".into(), floor_value),
            ("n_sites".into(), n_sites as f64),
            ("t".into(), t as f64),
            ("local_dim".into(), local_dim as f64),
            ("eps".into(), eps),
        ],
    })
}

/// Outcome of the block decomposition check.
#[derive(Clone, Debug)]
pub struct BlockDecompositionOutcome {
    pub check: BoundCheck,
    pub gap: f64,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
}

/// Block decomposition inequality:
/// `(1 - gap)^2 <= 1 - (prod alpha_j)(prod gamma_j)`.
pub fn block_decomposition_check(
    arch: &FixedArchitecture,
    t: usize,
    limits: &Limits,
) -> Result<BlockDecompositionOutcome> {
    let q = limits.checked_pow(arch.local_dim(), arch.n_sites() as u32)?;
    let p_all = haar_projector(q, t, limits)?;
    let m = block_moment(arch, t, limits)?;
    let gap = spectral_gap(&m, &p_all)?.gap;

    let mut alphas = Vec::with_capacity(arch.layers().len());
    for layer in arch.layers() {
        alphas.push(alpha(layer, t, limits)?);
    }
    let mut gammas = Vec::new();
    let mut prefix = arch.layers()[0].cluster();
    for layer in &arch.layers()[1..] {
        let c_nu = layer.cluster();
        let merged = merge_clusters(&c_nu, &prefix);
        gammas.push(gamma(&c_nu, &prefix, &merged, arch.n_sites(), arch.local_dim(), t, limits)?);
        prefix = merged;
    }
    let product: f64 =
        alphas.iter().product::<f64>() * gammas.iter().product::<f64>();
    let lhs = 1.0 - product;
    let rhs = (1.0 - gap) * (1.0 - gap);
    Ok(BlockDecompositionOutcome {
        check: BoundCheck::geq("block_decomposition", lhs, rhs, CHECK_SLACK),
        gap,
        alphas,
        gammas,
    })
}

/// Mixture Gram positivity: `sum q_x M_x M_x^dag - M M^dag` is PSD for
/// `M = sum q_x M_x`.
pub fn mixture_gram_check(
    matrices: &[CMatrix],
    probabilities: &[f64],
    limits: &Limits,
) -> Result<BoundCheck> {
    if matrices.is_empty() || matrices.len() != probabilities.len() {
        return Err(Error::invalid("mixture_gram_check: need one probability per matrix"));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbabilities {
            reason: format!("probabilities sum to {total}"),
        });
    }
    let n = matrices[0].rows();
    let mut mean = CMatrix::zeros(n, n);
    let mut second = CMatrix::zeros(n, n);
    for (m, &p) in matrices.iter().zip(probabilities) {
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "mixture_gram_check",
                expected: n,
                got: m.rows(),
            });
        }
        mean = mean.add(&m.scale(C64::new(p, 0.0)))?;
        second = second.add(&m.mul(&m.adjoint())?.scale(C64::new(p, 0.0)))?;
    }
    let diff = second.sub(&mean.mul(&mean.adjoint())?)?;
    let min_eig = min_eig_hermitian(&diff, limits)?;
    Ok(BoundCheck::geq("mixture_gram_psd", min_eig, 0.0, PSD_SLACK))
}

/// Scalar contraction-power inequality:
/// `(1 - (1-x)^l (1-y)^k)^2 >= 1 - (1-x^2)^l (1-y^2)^k` on the unit box.
pub fn contraction_power_check(x: f64, y: f64, l: u32, k: u32) -> Result<BoundCheck> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::invalid("contraction_power_check: x, y must lie in [0, 1]"));
    }
    let lhs = {
        let base = 1.0 - (1.0 - x).powi(l as i32) * (1.0 - y).powi(k as i32);
        base * base
    };
    let rhs = 1.0 - (1.0 - x * x).powi(l as i32) * (1.0 - y * y).powi(k as i32);
    Ok(BoundCheck::geq("contraction_power", lhs, rhs, CHECK_SLACK))
}

/// Protocol Gram bound: for a deterministic placement layer,
/// `M M^dag <= (1-g)^2 I + (1 - (1-g)^2) M_haarized` with `g` the local gap.
pub fn protocol_gram_check(
    layer: &LayerEnsemble,
    t: usize,
    limits: &Limits,
) -> Result<BoundCheck> {
    if layer.protocols().len() != 1 {
        return Err(Error::invalid("protocol_gram_check: need a single-protocol layer"));
    }
    let m = layer_moment(layer, t, limits)?.matrix;
    let mh = layer_moment(&haarized_layer(layer), t, limits)?.matrix;
    let g = 1.0 - local_gap(layer, t, limits)?;
    let dim = m.rows();
    let gram = m.mul(&m.adjoint())?;
    let bound = CMatrix::identity(dim)
        .scale(C64::new(g * g, 0.0))
        .add(&mh.scale(C64::new(1.0 - g * g, 0.0)))?;
    let diff = bound.sub(&gram)?;
    let min_eig = min_eig_hermitian(&diff, limits)?;
    Ok(BoundCheck::geq("protocol_gram", min_eig, 0.0, CHECK_SLACK))
}

/// Cluster-merge operator bound:
/// `M P_{c(mu)} M^dag <= (1 - a g) I + a g P_{c(merge)}` with `a` the layer
/// alpha and `g` the merge gamma.
pub fn cluster_merge_check(
    layer: &LayerEnsemble,
    mu: &Cluster,
    t: usize,
    limits: &Limits,
) -> Result<BoundCheck> {
    let n = layer.n_sites();
    let d = layer.local_dim();
    let c_nu = layer.cluster();
    let merged = merge_clusters(&c_nu, mu);
    let a = alpha(layer, t, limits)?;
    let g = gamma(&c_nu, mu, &merged, n, d, t, limits)?;
    let m = layer_moment(layer, t, limits)?.matrix;
    let p_mu = cluster_projector(mu, n, d, t, limits)?;
    let p_merge = cluster_projector(&merged, n, d, t, limits)?;
    let lhs_op = m.mul(&p_mu)?.mul(&m.adjoint())?;
    let coeff = a * g;
    let bound = CMatrix::identity(m.rows())
        .scale(C64::new(1.0 - coeff, 0.0))
        .add(&p_merge.scale(C64::new(coeff, 0.0)))?;
    let diff = bound.sub(&lhs_op)?;
    let min_eig = min_eig_hermitian(&diff, limits)?;
    Ok(BoundCheck::geq("cluster_merge", min_eig, 0.0, CHECK_SLACK))
}

/// Patch size and patch depth of the two-layer patchwork construction on
/// qubit systems: `xi = ceil(log2(N t^2 / eps))` and
/// `m = local_gap^{-2} * c0 (xi t + ln(N / eps))`. The constant `c0` is
/// order-level configuration.
pub fn patchwork_depth(
    n_sites: usize,
    t: usize,
    eps: f64,
    local_gap: f64,
    c0: f64,
) -> Result<(usize, f64)> {
    if !(eps > 0.0) {
        return Err(Error::invalid("patchwork_depth requires eps > 0"));
    }
    if !(local_gap > 0.0 && local_gap <= 1.0) {
        return Err(Error::UnboundedDepth { input: "local" });
    }
    let arg = n_sites as f64 * (t as f64) * (t as f64) / eps;
    let xi = arg.log2().ceil().max(1.0) as usize;
    let m_haar = c0 * (xi as f64 * t as f64 + (n_sites as f64 / eps).ln());
    let m = m_haar / (local_gap * local_gap);
    Ok((xi, m))
}

/// Smallest depth at which the repeated layer's moment power satisfies the
/// design criterion `||M^L - P|| <= eps / q^{2t}`, or `None` if `max_depth`
/// is reached first. Products are formed explicitly.
pub fn empirical_formation_depth(
    m: &MomentOperator,
    p: &HaarProjector,
    eps: f64,
    max_depth: usize,
) -> Result<Option<usize>> {
    if m.q != p.q || m.t != p.t {
        return Err(Error::DimensionMismatch {
            context: "empirical_formation_depth",
            expected: p.matrix.rows(),
            got: m.matrix.rows(),
        });
    }
    let threshold = eps / m.matrix.rows() as f64;
    let mut power = m.matrix.clone();
    for depth in 1..=max_depth {
        let diff = power.sub(&p.matrix)?;
        if op_norm_default(&diff)?.value <= threshold {
            return Ok(Some(depth));
        }
        power = m.matrix.mul(&power)?;
    }
    Ok(None)
}
