//! Dense complex linear-algebra substrate: matrices, Kronecker products,
//! site embeddings into replicated many-body spaces, operator norms via
//! power iteration, spectral radii, and seeded Haar-unitary sampling.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{EigVals, EigValsh, QR, SVD, UPLO};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance for power iteration.
pub const POWER_TOL: f64 = 1e-10;
/// Iteration cap for power iteration.
pub const POWER_MAX_ITERS: usize = 10_000;
/// Largest dimension for which a dense SVD is used when power iteration stalls.
pub const SVD_FALLBACK_DIM: usize = 1024;
/// Largest dimension handled by the dense Hermitian eigensolver before
/// switching to the shifted power-iteration route.
pub const DENSE_EIG_DIM: usize = 2048;

/// Guardrails for dense allocations and eigensolver calls.
#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Hard cap on the row count of any dense matrix the engine builds.
    pub max_dim: usize,
    /// Hard cap on the dimension passed to the dense eigensolver.
    pub eig_dim: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_dim: 1 << 16, eig_dim: 4096 }
    }
}

impl Limits {
    /// Reads `DESIGNGAP_MAX_DIM` from the environment, if set.
    pub fn from_env() -> Self {
        let mut limits = Limits::default();
        if let Ok(v) = std::env::var("DESIGNGAP_MAX_DIM") {
            if let Ok(n) = v.trim().parse::<usize>() {
                limits.max_dim = n;
            }
        }
        limits
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim > self.max_dim {
            Err(Error::DimensionOverflow { requested: dim, max_dim: self.max_dim })
        } else {
            Ok(())
        }
    }

    pub fn check_eig(&self, dim: usize) -> Result<()> {
        if dim > self.eig_dim {
            Err(Error::EigBudgetExceeded { dim, budget: self.eig_dim })
        } else {
            Ok(())
        }
    }

    /// `base^exp` checked against `max_dim`.
    pub fn checked_pow(&self, base: usize, exp: u32) -> Result<usize> {
        let mut acc: u128 = 1;
        for _ in 0..exp {
            acc *= base as u128;
            if acc > self.max_dim as u128 {
                return Err(Error::DimensionOverflow {
                    requested: acc.min(usize::MAX as u128) as usize,
                    max_dim: self.max_dim,
                });
            }
        }
        Ok(acc as usize)
    }
}

/// Dense complex matrix in row-major order. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    a: Array2<C64>,
}

impl CMatrix {
    pub fn from_vec(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "CMatrix::from_vec",
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let a = Array2::from_shape_vec((rows, cols), entries)
            .map_err(|e| Error::Internal(e.to_string()))?;
        Self::from_array(a)
    }

    pub fn from_array(a: Array2<C64>) -> Result<Self> {
        if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite { context: "CMatrix::from_array" });
        }
        Ok(CMatrix { a })
    }

    pub(crate) fn from_array_unchecked(a: Array2<C64>) -> Self {
        CMatrix { a }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { a: Array2::zeros((rows, cols)) }
    }

    pub fn identity(n: usize) -> Self {
        CMatrix { a: Array2::eye(n) }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn array(&self) -> &Array2<C64> {
        &self.a
    }

    pub fn into_array(self) -> Array2<C64> {
        self.a
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.a[[i, j]]
    }

    /// Matrix product through BLAS.
    pub fn mul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::DimensionMismatch {
                context: "CMatrix::mul",
                expected: self.cols(),
                got: rhs.rows(),
            });
        }
        Ok(CMatrix { a: self.a.dot(&rhs.a) })
    }

    pub fn add(&self, rhs: &CMatrix) -> Result<CMatrix> {
        self.check_same_shape(rhs, "CMatrix::add")?;
        Ok(CMatrix { a: &self.a + &rhs.a })
    }

    pub fn sub(&self, rhs: &CMatrix) -> Result<CMatrix> {
        self.check_same_shape(rhs, "CMatrix::sub")?;
        Ok(CMatrix { a: &self.a - &rhs.a })
    }

    fn check_same_shape(&self, rhs: &CMatrix, context: &'static str) -> Result<()> {
        if self.rows() != rhs.rows() || self.cols() != rhs.cols() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.rows() * self.cols(),
                got: rhs.rows() * rhs.cols(),
            });
        }
        Ok(())
    }

    pub fn scale(&self, z: C64) -> CMatrix {
        CMatrix { a: self.a.mapv(|x| x * z) }
    }

    /// Entrywise complex conjugate in the computational basis.
    pub fn conj(&self) -> CMatrix {
        CMatrix { a: self.a.mapv(|z| z.conj()) }
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix { a: self.a.t().to_owned() }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix { a: self.a.t().mapv(|z| z.conj()) }
    }

    pub fn trace(&self) -> C64 {
        self.a.diag().sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!(self.a.dim(), rhs.a.dim(), "max_abs_diff shape mismatch");
        self.a
            .iter()
            .zip(rhs.a.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

/// Kronecker product; the left factor is the most significant index block.
pub fn kron(a: &CMatrix, b: &CMatrix, limits: &Limits) -> Result<CMatrix> {
    let rows = a
        .rows()
        .checked_mul(b.rows())
        .ok_or(Error::DimensionOverflow { requested: usize::MAX, max_dim: limits.max_dim })?;
    let cols = a
        .cols()
        .checked_mul(b.cols())
        .ok_or(Error::DimensionOverflow { requested: usize::MAX, max_dim: limits.max_dim })?;
    limits.check_dim(rows.max(cols))?;
    let (br, bc) = (b.rows(), b.cols());
    let mut out = Array2::<C64>::zeros((rows, cols));
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a.a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(&b.a, |o, &bb| *o = aij * bb);
        }
    }
    Ok(CMatrix { a: out })
}

/// `factors`-fold replicated N-site space with local dimension `d`.
///
/// Index convention: one digit per (factor, site) pair, flattened
/// factor-major then site-major, most significant first. Moment spaces use
/// `factors = 2t` with the conjugate copies occupying factors `t..2t`;
/// plain unitaries on the circuit level use `factors = 1`.
#[derive(Clone, Copy, Debug)]
pub struct ReplicaSpace {
    pub n_sites: usize,
    pub local_dim: usize,
    pub factors: usize,
}

impl ReplicaSpace {
    pub fn moment(n_sites: usize, local_dim: usize, t: usize) -> Self {
        ReplicaSpace { n_sites, local_dim, factors: 2 * t }
    }

    pub fn plain(n_sites: usize, local_dim: usize) -> Self {
        ReplicaSpace { n_sites, local_dim, factors: 1 }
    }

    pub fn dim(&self, limits: &Limits) -> Result<usize> {
        limits.checked_pow(self.local_dim, (self.factors * self.n_sites) as u32)
    }

    fn stride(&self, factor: usize, site: usize) -> usize {
        let exp = (self.factors - 1 - factor) * self.n_sites + (self.n_sites - 1 - site);
        self.local_dim.pow(exp as u32)
    }

    /// Offsets contributed by a local operator's digits: entry `v` is the
    /// global offset of local basis index `v` on `sites` (ascending),
    /// factor-major then position-major.
    fn local_offsets(&self, sites: &[usize], local_dim_total: usize) -> Vec<usize> {
        let k = sites.len();
        let d = self.local_dim;
        let mut offs = vec![0usize; local_dim_total];
        for (v, off) in offs.iter_mut().enumerate() {
            let mut acc = 0usize;
            for fi in 0..self.factors {
                for (pos, &site) in sites.iter().enumerate() {
                    let exp = (self.factors - 1 - fi) * k + (k - 1 - pos);
                    let digit = (v / d.pow(exp as u32)) % d;
                    acc += digit * self.stride(fi, site);
                }
            }
            *off = acc;
        }
        offs
    }

    /// Global offsets ranging over identity digits on the complement of
    /// `active_sites`.
    fn rest_offsets(&self, active_sites: &[usize]) -> Vec<usize> {
        let rest_sites: Vec<usize> =
            (0..self.n_sites).filter(|site| !active_sites.contains(site)).collect();
        let mut positions = Vec::new();
        for fi in 0..self.factors {
            for &site in &rest_sites {
                positions.push(self.stride(fi, site));
            }
        }
        let d = self.local_dim;
        let count = d.pow(positions.len() as u32);
        let mut offs = Vec::with_capacity(count);
        let mut digits = vec![0usize; positions.len()];
        loop {
            let off: usize = digits.iter().zip(&positions).map(|(&dg, &st)| dg * st).sum();
            offs.push(off);
            // increment mixed-radix counter
            let mut carry = true;
            for dg in digits.iter_mut().rev() {
                if carry {
                    *dg += 1;
                    if *dg == d {
                        *dg = 0;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
        offs
    }

    /// Builds the dense operator acting as each `op` on its (ascending)
    /// target sites across all factors and as the identity elsewhere. Site
    /// lists must be pairwise disjoint.
    pub fn embed(&self, ops: &[(&CMatrix, &[usize])], limits: &Limits) -> Result<CMatrix> {
        let dim = self.dim(limits)?;
        let mut seen = vec![false; self.n_sites];
        for (op, sites) in ops {
            if sites.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("embed: target sites must be strictly ascending"));
            }
            for &site in *sites {
                if site >= self.n_sites {
                    return Err(Error::invalid(format!(
                        "embed: site {site} out of range for {} sites",
                        self.n_sites
                    )));
                }
                if seen[site] {
                    return Err(Error::invalid(format!("embed: site {site} used twice")));
                }
                seen[site] = true;
            }
            let want = self
                .local_dim
                .pow((self.factors * sites.len()) as u32);
            if op.rows() != want || op.cols() != want {
                return Err(Error::DimensionMismatch {
                    context: "embed: local operator",
                    expected: want,
                    got: op.rows(),
                });
            }
        }

        let active: Vec<usize> = ops.iter().flat_map(|(_, sites)| sites.iter().copied()).collect();
        let rest = self.rest_offsets(&active);
        if ops.is_empty() {
            return Ok(CMatrix::identity(dim));
        }

        let offsets: Vec<Vec<usize>> =
            ops.iter().map(|(op, sites)| self.local_offsets(sites, op.rows())).collect();
        let mut out = Array2::<C64>::zeros((dim, dim));
        // mixed-radix iteration over each operator's (row, col) pair
        let radices: Vec<usize> = ops.iter().map(|(op, _)| op.rows()).collect();
        let mut idx = vec![(0usize, 0usize); ops.len()];
        loop {
            let mut val = C64::new(1.0, 0.0);
            let mut row_off = 0usize;
            let mut col_off = 0usize;
            for (o, &(r, c)) in idx.iter().enumerate() {
                val *= ops[o].0.a[[r, c]];
                row_off += offsets[o][r];
                col_off += offsets[o][c];
            }
            if val != C64::new(0.0, 0.0) {
                for &b in &rest {
                    out[[row_off + b, col_off + b]] = val;
                }
            }
            // advance (row, col) counters, column fastest
            let mut done = true;
            for (o, pair) in idx.iter_mut().enumerate().rev() {
                pair.1 += 1;
                if pair.1 == radices[o] {
                    pair.1 = 0;
                    pair.0 += 1;
                    if pair.0 == radices[o] {
                        pair.0 = 0;
                        continue;
                    }
                }
                done = false;
                break;
            }
            if done {
                break;
            }
        }
        Ok(CMatrix { a: out })
    }

    /// Computes `embed(op on sites) . x` without materializing the embedded
    /// operator: rows of `x` are gathered per identity pattern, multiplied by
    /// `op`, and scattered back.
    pub fn apply_left(
        &self,
        op: &CMatrix,
        sites: &[usize],
        x: &CMatrix,
        limits: &Limits,
    ) -> Result<CMatrix> {
        let dim = self.dim(limits)?;
        if x.rows() != dim {
            return Err(Error::DimensionMismatch {
                context: "apply_left: operand rows",
                expected: dim,
                got: x.rows(),
            });
        }
        let local_dim = self.local_dim.pow((self.factors * sites.len()) as u32);
        if op.rows() != local_dim || op.cols() != local_dim {
            return Err(Error::DimensionMismatch {
                context: "apply_left: local operator",
                expected: local_dim,
                got: op.rows(),
            });
        }
        let offs = self.local_offsets(sites, local_dim);
        let rest = self.rest_offsets(sites);
        let cols = x.cols();
        let mut out = Array2::<C64>::zeros((dim, cols));
        let mut buf = Array2::<C64>::zeros((local_dim, cols));
        for &b in &rest {
            for (v, &off) in offs.iter().enumerate() {
                buf.row_mut(v).assign(&x.a.row(b + off));
            }
            let prod = op.a.dot(&buf);
            for (v, &off) in offs.iter().enumerate() {
                out.row_mut(b + off).assign(&prod.row(v));
            }
        }
        Ok(CMatrix { a: out })
    }
}

/// Reorders the per-factor site digits of a local operator from a logical
/// site list (circuit order, possibly wrapped) to ascending physical order.
/// Returns the reordered operator together with the sorted site list.
pub(crate) fn permute_site_digits(
    op: &CMatrix,
    logical_sites: &[usize],
    local_dim: usize,
    factors: usize,
) -> (CMatrix, Vec<usize>) {
    let k = logical_sites.len();
    let mut sorted: Vec<usize> = logical_sites.to_vec();
    sorted.sort_unstable();
    if sorted == logical_sites {
        return (op.clone(), sorted);
    }
    // ascending position m holds the digit of logical position perm[m]
    let perm: Vec<usize> = sorted
        .iter()
        .map(|s| logical_sites.iter().position(|x| x == s).unwrap())
        .collect();
    let dim = op.rows();
    let d = local_dim;
    let remap = |v: usize| -> usize {
        let mut digits = vec![0usize; factors * k];
        let mut rem = v;
        for p in (0..factors * k).rev() {
            digits[p] = rem % d;
            rem /= d;
        }
        let mut out = 0usize;
        for f in 0..factors {
            for m in 0..k {
                out = out * d + digits[f * k + perm[m]];
            }
        }
        out
    };
    let mut remapped = Array2::<C64>::zeros((dim, dim));
    for r in 0..dim {
        let rr = remap(r);
        for c in 0..dim {
            remapped[[rr, remap(c)]] = op.entry(r, c);
        }
    }
    (CMatrix::from_array_unchecked(remapped), sorted)
}

/// Placement of a local replica-space operator inside an N-site system.
#[derive(Clone, Debug)]
pub struct SiteEmbedding {
    pub n_sites: usize,
    pub local_dim: usize,
    pub t: usize,
    pub target_sites: Vec<usize>,
}

impl SiteEmbedding {
    pub fn new(n_sites: usize, local_dim: usize, t: usize, target_sites: Vec<usize>) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("SiteEmbedding: moment order t must be >= 1"));
        }
        if local_dim < 2 {
            return Err(Error::invalid("SiteEmbedding: local dimension must be >= 2"));
        }
        let mut seen = vec![false; n_sites];
        for &s in &target_sites {
            if s >= n_sites {
                return Err(Error::invalid(format!(
                    "SiteEmbedding: site {s} out of range for {n_sites} sites"
                )));
            }
            if seen[s] {
                return Err(Error::invalid(format!("SiteEmbedding: duplicate site {s}")));
            }
            seen[s] = true;
        }
        Ok(SiteEmbedding { n_sites, local_dim, t, target_sites })
    }

    pub fn space(&self) -> ReplicaSpace {
        ReplicaSpace::moment(self.n_sites, self.local_dim, self.t)
    }
}

/// Embeds a replica-space operator on the embedding's target sites, acting
/// as the identity on the remaining qudits. The operator's factors must be
/// ordered forward copies first, then conjugate copies, with sites ascending
/// inside each factor.
pub fn embed_local(op: &CMatrix, emb: &SiteEmbedding, limits: &Limits) -> Result<CMatrix> {
    let sorted = {
        let mut v = emb.target_sites.clone();
        v.sort_unstable();
        v
    };
    if sorted != emb.target_sites {
        return Err(Error::invalid("embed_local: target sites must be ascending"));
    }
    emb.space().embed(&[(op, &emb.target_sites)], limits)
}

/// Outcome of an operator-norm computation.
#[derive(Clone, Copy, Debug)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub used_svd_fallback: bool,
}

const START_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic dense start block for the power iteration.
fn start_block(n: usize, b: usize) -> Array2<C64> {
    let mut state = START_SEED ^ (n as u64);
    Array2::from_shape_fn((n, b), |_| {
        let re = unit_interval(splitmix64(&mut state)) - 0.5;
        let im = unit_interval(splitmix64(&mut state)) - 0.5;
        C64::new(re, im)
    })
}

/// Modified Gram-Schmidt. A column that collapses under projection is
/// reseeded deterministically and re-orthogonalized so the block stays
/// orthonormal.
fn orthonormalize(v: &mut Array2<C64>, reseed: &mut u64) {
    let (n, b) = v.dim();
    for j in 0..b {
        loop {
            let scale: f64 =
                (0..n).map(|k| v[[k, j]].norm_sqr()).sum::<f64>().sqrt().max(1e-300);
            for i in 0..j {
                let mut dot = C64::new(0.0, 0.0);
                for k in 0..n {
                    dot += v[[k, i]].conj() * v[[k, j]];
                }
                for k in 0..n {
                    let vi = v[[k, i]];
                    v[[k, j]] -= dot * vi;
                }
            }
            let norm: f64 = (0..n).map(|k| v[[k, j]].norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-12 * scale && norm > 1e-200 {
                for k in 0..n {
                    v[[k, j]] /= norm;
                }
                break;
            }
            // column became linearly dependent: replace and retry
            for k in 0..n {
                let re = unit_interval(splitmix64(reseed)) - 0.5;
                let im = unit_interval(splitmix64(reseed)) - 0.5;
                v[[k, j]] = C64::new(re, im);
            }
        }
    }
}

/// Largest singular value via dense SVD.
pub(crate) fn svd_norm(a: &CMatrix) -> Result<f64> {
    let (_, sv, _) = a.a.svd(false, false)?;
    Ok(sv.iter().fold(0.0f64, |m, &x| m.max(x)))
}

/// Largest singular value of a square matrix.
///
/// Power iteration on the Gram matrix `a a^dag` (Hermitian PSD) with a
/// small deterministic start block and a Rayleigh-quotient stopping rule at
/// relative tolerance `tol`. When the iteration stalls and the dimension is
/// at most [`SVD_FALLBACK_DIM`], a dense SVD supplies the answer; otherwise
/// the last iterate is reported in the error.
pub fn op_norm(a: &CMatrix, tol: f64, max_iters: usize) -> Result<NormEstimate> {
    if !a.is_square() {
        return Err(Error::invalid("op_norm: matrix must be square"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(NormEstimate { value: 0.0, iterations: 0, used_svd_fallback: false });
    }
    let block = n.min(6).max(1);
    let adj = a.adjoint();
    let mut reseed = START_SEED ^ ((n as u64) << 1) ^ 0xD1B5_4A32_D192_ED03;
    let mut v = start_block(n, block);
    orthonormalize(&mut v, &mut reseed);

    let mut lam_prev = f64::NAN;
    let mut lam = 0.0f64;
    let mut last_change = f64::NAN;
    let mut stable = 0usize;
    for iter in 1..=max_iters {
        // w = a (a^dag v): Gram-matrix action on the block
        let t1 = adj.a.dot(&v);
        let w = a.a.dot(&t1);
        // Rayleigh-Ritz on the block: leading eigenvalue of v^dag w
        let mut h = Array2::<C64>::zeros((block, block));
        for i in 0..block {
            for j in 0..block {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += v[[k, i]].conj() * w[[k, j]];
                }
                h[[i, j]] = acc;
            }
        }
        // Hermitianize against roundoff
        let hh = {
            let ht = h.t().mapv(|z| z.conj());
            (&h + &ht).mapv(|z| 0.5 * z)
        };
        let evals: Array1<f64> = hh.eigvalsh(UPLO::Upper)?;
        lam = evals.iter().fold(0.0f64, |m, &x| m.max(x));

        if lam_prev.is_finite() {
            last_change = (lam - lam_prev).abs() / lam.max(f64::MIN_POSITIVE);
            if last_change <= tol {
                stable += 1;
                if stable >= 3 || lam == 0.0 {
                    return Ok(NormEstimate {
                        value: lam.max(0.0).sqrt(),
                        iterations: iter,
                        used_svd_fallback: false,
                    });
                }
            } else {
                stable = 0;
            }
        }
        lam_prev = lam;
        v = w;
        orthonormalize(&mut v, &mut reseed);
    }

    if n <= SVD_FALLBACK_DIM {
        let value = svd_norm(a)?;
        return Ok(NormEstimate { value, iterations: max_iters, used_svd_fallback: true });
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_estimate: lam.max(0.0).sqrt(),
        last_change,
    })
}

/// [`op_norm`] at the engine's default tolerance and iteration cap.
pub fn op_norm_default(a: &CMatrix) -> Result<NormEstimate> {
    op_norm(a, POWER_TOL, POWER_MAX_ITERS)
}

/// Largest eigenvalue magnitude via the dense nonsymmetric eigensolver.
pub fn spectral_radius(a: &CMatrix, limits: &Limits) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("spectral_radius: matrix must be square"));
    }
    limits.check_eig(a.rows())?;
    let vals = a.a.eigvals()?;
    Ok(vals.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Eigenvalues of a Hermitian matrix (symmetrized against roundoff).
pub fn hermitian_eigenvalues(a: &CMatrix, limits: &Limits) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("hermitian_eigenvalues: matrix must be square"));
    }
    limits.check_eig(a.rows())?;
    let adj = a.adjoint();
    let sym = (&a.a + &adj.a).mapv(|z| 0.5 * z);
    let vals = sym.eigvalsh(UPLO::Upper)?;
    Ok(vals.to_vec())
}

/// Smallest eigenvalue of a Hermitian matrix. Uses the dense solver up to
/// [`DENSE_EIG_DIM`], then a shifted power iteration:
/// `lambda_min(H) = c - ||c I - H||` with `c = ||H||`.
pub fn min_eig_hermitian(a: &CMatrix, limits: &Limits) -> Result<f64> {
    if a.rows() <= DENSE_EIG_DIM {
        let relaxed = Limits { eig_dim: limits.eig_dim.max(DENSE_EIG_DIM), ..*limits };
        let vals = hermitian_eigenvalues(a, &relaxed)?;
        return Ok(vals.iter().fold(f64::INFINITY, |m, &x| m.min(x)));
    }
    let c = op_norm_default(a)?.value;
    let shifted = CMatrix::identity(a.rows()).scale(C64::new(c, 0.0)).sub(a)?;
    let top = op_norm_default(&shifted)?.value;
    Ok(c - top)
}

/// Haar-random unitary on a `q`-dimensional space: QR of a complex Ginibre
/// matrix with the R diagonal phases folded into Q. Deterministic under
/// `seed`.
pub fn haar_sample(q: usize, seed: u64) -> Result<CMatrix> {
    if q == 0 {
        return Err(Error::invalid("haar_sample: dimension must be >= 1"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let g = Array2::from_shape_fn((q, q), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let (mut qmat, r) = g.qr()?;
    for j in 0..q {
        let rjj = r[[j, j]];
        let mag = rjj.norm();
        let phase = if mag > 0.0 { rjj / mag } else { C64::new(1.0, 0.0) };
        for i in 0..q {
            qmat[[i, j]] *= phase;
        }
    }
    Ok(CMatrix { a: qmat })
}

/// `||U^dag U - I||` for unitarity diagnostics (dense SVD; small inputs).
pub fn unitarity_defect(u: &CMatrix) -> Result<f64> {
    let gram = u.adjoint().mul(u)?;
    let dev = gram.sub(&CMatrix::identity(u.rows()))?;
    svd_norm(&dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::SVD;
    use proptest::prelude::*;

    fn limits() -> Limits {
        Limits::default()
    }

    /// Deterministic pseudo-random matrix with entries in the unit square.
    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        CMatrix::from_array(Array2::from_shape_fn((rows, cols), |_| {
            C64::new(
                unit_interval(splitmix64(&mut state)) - 0.5,
                unit_interval(splitmix64(&mut state)) - 0.5,
            )
        }))
        .unwrap()
    }

    /// Matrix with dyadic entries so products of up to three factors are exact.
    fn dyadic_matrix(n: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        CMatrix::from_array(Array2::from_shape_fn((n, n), |_| {
            let grid = [-1.0, -0.5, 0.0, 0.25, 0.5, 1.0];
            let re = grid[(splitmix64(&mut state) % 6) as usize];
            let im = grid[(splitmix64(&mut state) % 6) as usize];
            C64::new(re, im)
        }))
        .unwrap()
    }

    fn pauli_x() -> CMatrix {
        CMatrix::from_vec(
            2,
            2,
            vec![C64::new(0., 0.), C64::new(1., 0.), C64::new(1., 0.), C64::new(0., 0.)],
        )
        .unwrap()
    }

    #[test]
    fn kron_identity_case() {
        let i2 = CMatrix::identity(2);
        let out = kron(&i2, &i2, &limits()).unwrap();
        assert_eq!(out.max_abs_diff(&CMatrix::identity(4)), 0.0);
    }

    #[test]
    fn kron_bit_flip_antidiagonal() {
        let x = pauli_x();
        let out = kron(&x, &x, &limits()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i + j == 3 { 1.0 } else { 0.0 };
                assert_eq!(out.entry(i, j), C64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn kron_matches_index_formula_oracle() {
        // oracle: (a (x) b)[i*p+k, j*q+l] = a[i,j] b[k,l]
        let a = random_matrix(3, 3, 11);
        let b = random_matrix(3, 3, 12);
        let out = kron(&a, &b, &limits()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let want = a.entry(i, j) * b.entry(k, l);
                        assert_eq!(out.entry(i * 3 + k, j * 3 + l), want);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_guardrail_overflow() {
        let tight = Limits { max_dim: 8, ..Limits::default() };
        let a = CMatrix::identity(4);
        let b = CMatrix::identity(4);
        assert!(matches!(
            kron(&a, &b, &tight),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn kron_associative_exactly_on_dyadics() {
        for seed in 0..5 {
            let a = dyadic_matrix(2, 100 + seed);
            let b = dyadic_matrix(2, 200 + seed);
            let c = dyadic_matrix(2, 300 + seed);
            let left = kron(&kron(&a, &b, &limits()).unwrap(), &c, &limits()).unwrap();
            let right = kron(&a, &kron(&b, &c, &limits()).unwrap(), &limits()).unwrap();
            assert_eq!(left.max_abs_diff(&right), 0.0);
        }
    }

    #[test]
    fn kron_mixed_product_rule() {
        for seed in 0..5 {
            let a = random_matrix(3, 3, 1000 + seed);
            let b = random_matrix(2, 2, 2000 + seed);
            let c = random_matrix(3, 3, 3000 + seed);
            let d = random_matrix(2, 2, 4000 + seed);
            let lhs = kron(&a, &b, &limits())
                .unwrap()
                .mul(&kron(&c, &d, &limits()).unwrap())
                .unwrap();
            let rhs = kron(&a.mul(&c).unwrap(), &b.mul(&d).unwrap(), &limits()).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn embed_identity_anywhere_is_identity() {
        let emb = SiteEmbedding::new(3, 2, 1, vec![0, 1]).unwrap();
        let out = embed_local(&CMatrix::identity(16), &emb, &limits()).unwrap();
        assert_eq!(out.max_abs_diff(&CMatrix::identity(64)), 0.0);
    }

    #[test]
    fn embed_full_system_is_unchanged() {
        let emb = SiteEmbedding::new(2, 2, 1, vec![0, 1]).unwrap();
        let op = random_matrix(16, 16, 77);
        let out = embed_local(&op, &emb, &limits()).unwrap();
        assert_eq!(out.max_abs_diff(&op), 0.0);
    }

    /// Brute-force oracle: embedded operator entries by digit bookkeeping.
    fn embed_oracle(
        op: &CMatrix,
        sites: &[usize],
        n: usize,
        d: usize,
        t: usize,
    ) -> CMatrix {
        let factors = 2 * t;
        let dim = d.pow((factors * n) as u32);
        let digits = |g: usize| -> Vec<usize> {
            let mut v = vec![0usize; factors * n];
            let mut rem = g;
            for p in (0..factors * n).rev() {
                v[p] = rem % d;
                rem /= d;
            }
            v
        };
        let mut out = CMatrix::zeros(dim, dim);
        for grow in 0..dim {
            let dr = digits(grow);
            for gcol in 0..dim {
                let dc = digits(gcol);
                // identity on the complement
                let mut rest_match = true;
                for f in 0..factors {
                    for s in 0..n {
                        if !sites.contains(&s) && dr[f * n + s] != dc[f * n + s] {
                            rest_match = false;
                        }
                    }
                }
                if !rest_match {
                    continue;
                }
                let mut lrow = 0usize;
                let mut lcol = 0usize;
                for f in 0..factors {
                    for &s in sites {
                        lrow = lrow * d + dr[f * n + s];
                        lcol = lcol * d + dc[f * n + s];
                    }
                }
                out.a[[grow, gcol]] = op.entry(lrow, lcol);
            }
        }
        out
    }

    #[test]
    fn embed_swap_pair_matches_permutation_oracle() {
        // N = 3, t = 1, d = 2, target (0, 1), op = SWAP (x) SWAP over the
        // forward and conjugate copies
        let swap = CMatrix::from_vec(
            4,
            4,
            vec![
                C64::new(1., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(1., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(1., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(0., 0.),
                C64::new(1., 0.),
            ],
        )
        .unwrap();
        let op = kron(&swap, &swap, &limits()).unwrap();
        let emb = SiteEmbedding::new(3, 2, 1, vec![0, 1]).unwrap();
        let out = embed_local(&op, &emb, &limits()).unwrap();
        let want = embed_oracle(&op, &[0, 1], 3, 2, 1);
        assert_eq!(out.max_abs_diff(&want), 0.0);
    }

    #[test]
    fn embed_random_op_matches_oracle_nontrivial_sites() {
        let op = random_matrix(16, 16, 4242);
        let emb = SiteEmbedding::new(3, 2, 1, vec![0, 2]).unwrap();
        let out = embed_local(&op, &emb, &limits()).unwrap();
        let want = embed_oracle(&op, &[0, 2], 3, 2, 1);
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn embed_preserves_unitarity() {
        let u = haar_sample(16, 9).unwrap();
        let emb = SiteEmbedding::new(3, 2, 1, vec![1, 2]).unwrap();
        let e = embed_local(&u, &emb, &limits()).unwrap();
        assert!(unitarity_defect(&e).unwrap() <= 1e-10);
    }

    #[test]
    fn embed_two_disjoint_ops_match_sequential_kron_products() {
        // two ops on disjoint pairs equal the product of their single embeds
        let space = ReplicaSpace::moment(4, 2, 1);
        let op1 = random_matrix(16, 16, 51);
        let op2 = random_matrix(16, 16, 52);
        let joint = space.embed(&[(&op1, &[0, 1]), (&op2, &[2, 3])], &limits()).unwrap();
        let e1 = space.embed(&[(&op1, &[0, 1])], &limits()).unwrap();
        let e2 = space.embed(&[(&op2, &[2, 3])], &limits()).unwrap();
        let prod = e1.mul(&e2).unwrap();
        assert!(joint.max_abs_diff(&prod) < 1e-13);
    }

    #[test]
    fn apply_left_matches_explicit_embed_multiplication() {
        let space = ReplicaSpace::moment(3, 2, 1);
        let op = random_matrix(16, 16, 61);
        let x = random_matrix(64, 64, 62);
        let embedded = space.embed(&[(&op, &[1, 2])], &limits()).unwrap();
        let want = embedded.mul(&x).unwrap();
        let got = space.apply_left(&op, &[1, 2], &x, &limits()).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn op_norm_identity() {
        let est = op_norm_default(&CMatrix::identity(5)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_diagonal_case() {
        let a = CMatrix::from_vec(
            2,
            2,
            vec![C64::new(0.3, 0.), C64::new(0., 0.), C64::new(0., 0.), C64::new(-0.7, 0.)],
        )
        .unwrap();
        let est = op_norm_default(&a).unwrap();
        assert!((est.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn op_norm_matches_svd_oracle() {
        for seed in 0..10 {
            let a = random_matrix(8, 8, 900 + seed);
            let est = op_norm_default(&a).unwrap();
            let (_, sv, _) = a.array().svd(false, false).unwrap();
            let want = sv.iter().fold(0.0f64, |m, &x| m.max(x));
            assert!(
                (est.value - want).abs() < 1e-8,
                "seed {seed}: power {} vs svd {want}",
                est.value
            );
        }
    }

    #[test]
    fn op_norm_zero_matrix() {
        let est = op_norm_default(&CMatrix::zeros(4, 4)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn op_norm_equals_adjoint_norm() {
        for seed in 0..5 {
            let a = random_matrix(12, 12, 1300 + seed);
            let na = op_norm_default(&a).unwrap().value;
            let nb = op_norm_default(&a.adjoint()).unwrap().value;
            assert!((na - nb).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_radius_identity_and_nilpotent() {
        assert!((spectral_radius(&CMatrix::identity(3), &limits()).unwrap() - 1.0).abs() < 1e-12);
        let nil = CMatrix::from_vec(
            2,
            2,
            vec![C64::new(0., 0.), C64::new(1., 0.), C64::new(0., 0.), C64::new(0., 0.)],
        )
        .unwrap();
        assert!(spectral_radius(&nil, &limits()).unwrap() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_unitary_is_one() {
        let u = haar_sample(8, 3).unwrap();
        let r = spectral_radius(&u, &limits()).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_budget() {
        let tight = Limits { eig_dim: 2, ..Limits::default() };
        assert!(matches!(
            spectral_radius(&CMatrix::identity(3), &tight),
            Err(Error::EigBudgetExceeded { .. })
        ));
    }

    #[test]
    fn spectral_radius_below_norm() {
        for seed in 0..5 {
            let a = random_matrix(10, 10, 7100 + seed);
            let rho = spectral_radius(&a, &limits()).unwrap();
            let norm = op_norm_default(&a).unwrap().value;
            assert!(rho <= norm + 1e-8);
        }
    }

    #[test]
    fn haar_sample_is_unitary_and_deterministic() {
        let u1 = haar_sample(5, 31).unwrap();
        let u2 = haar_sample(5, 31).unwrap();
        assert_eq!(u1.max_abs_diff(&u2), 0.0);
        assert!(unitarity_defect(&u1).unwrap() <= 1e-12);
        let u3 = haar_sample(5, 32).unwrap();
        assert!(u1.max_abs_diff(&u3) > 1e-3);
    }

    #[test]
    fn haar_sample_trace_moment() {
        // E |tr U|^2 = 1 for the Haar measure; check within 3 standard errors
        let n = 10_000usize;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let u = haar_sample(2, 50_000 + i as u64).unwrap();
            vals.push(u.trace().norm_sqr());
        }
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn min_eig_hermitian_matches_dense() {
        let a = random_matrix(16, 16, 88);
        let herm = a.add(&a.adjoint()).unwrap().scale(C64::new(0.5, 0.0));
        let dense = min_eig_hermitian(&herm, &limits()).unwrap();
        let vals = hermitian_eigenvalues(&herm, &limits()).unwrap();
        let want = vals.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        assert!((dense - want).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn prop_kron_mixed_product(seed in 0u64..500) {
            let a = random_matrix(2, 2, seed);
            let b = random_matrix(3, 3, seed + 1);
            let c = random_matrix(2, 2, seed + 2);
            let d = random_matrix(3, 3, seed + 3);
            let lhs = kron(&a, &b, &limits()).unwrap()
                .mul(&kron(&c, &d, &limits()).unwrap()).unwrap();
            let rhs = kron(&a.mul(&c).unwrap(), &b.mul(&d).unwrap(), &limits()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }

        #[test]
        fn prop_op_norm_scale_homogeneous(seed in 0u64..500, scale in 0.1f64..3.0) {
            let a = random_matrix(6, 6, seed);
            let na = op_norm_default(&a).unwrap().value;
            let nb = op_norm_default(&a.scale(C64::new(scale, 0.0))).unwrap().value;
            prop_assert!((nb - scale * na).abs() < 1e-8 * (1.0 + na));
        }
    }
}
