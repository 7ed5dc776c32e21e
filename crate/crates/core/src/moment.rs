//! Gate ensembles, t-th moment operators, permutation-state projectors,
//! residual decompositions, and spectral gaps.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::bounds::BoundCheck;
use crate::error::{Error, Result};
use crate::linalg::{kron, op_norm_default, unitarity_defect, CMatrix, Limits};

/// Tolerance for ensemble probability normalization.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for member unitarity.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance for the invariant-subspace orthogonality of residuals.
pub const ORTHO_TOL: f64 = 1e-9;
/// Largest moment order for which permutation states are enumerated.
pub const MAX_MOMENT_ORDER: usize = 6;

/// Discrete probability-weighted set of unitaries on a `dim`-dimensional
/// space.
#[derive(Clone, Debug)]
pub struct GateEnsemble {
    dim: usize,
    members: Vec<(f64, CMatrix)>,
}

impl GateEnsemble {
    pub fn new(dim: usize, members: Vec<(f64, CMatrix)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidProbabilities { reason: "empty ensemble".into() });
        }
        let mut total = 0.0;
        for (p, _) in &members {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::InvalidProbabilities {
                    reason: format!("probability {p} is negative or non-finite"),
                });
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbabilities {
                reason: format!("probabilities sum to {total}, expected 1"),
            });
        }
        for (index, (_, u)) in members.iter().enumerate() {
            if u.rows() != dim || u.cols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "GateEnsemble member",
                    expected: dim,
                    got: u.rows(),
                });
            }
            let deviation = unitarity_defect(u)?;
            if deviation > UNITARY_TOL {
                return Err(Error::NotUnitary { index, deviation });
            }
        }
        Ok(GateEnsemble { dim, members })
    }

    pub fn singleton(u: CMatrix) -> Result<Self> {
        let dim = u.rows();
        GateEnsemble::new(dim, vec![(1.0, u)])
    }

    /// Uniform mixture of the given unitaries.
    pub fn uniform(dim: usize, gates: Vec<CMatrix>) -> Result<Self> {
        let n = gates.len();
        if n == 0 {
            return Err(Error::InvalidProbabilities { reason: "empty ensemble".into() });
        }
        let p = 1.0 / n as f64;
        let mut members: Vec<(f64, CMatrix)> = gates.into_iter().map(|g| (p, g)).collect();
        // make the probabilities sum to exactly 1
        let total: f64 = members.iter().map(|(p, _)| *p).sum();
        members.last_mut().unwrap().0 += 1.0 - total;
        GateEnsemble::new(dim, members)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[(f64, CMatrix)] {
        &self.members
    }
}

/// Dense t-th moment operator of an ensemble: the average of
/// `U^{(x)t} (x) conj(U)^{(x)t}` over the ensemble.
#[derive(Clone, Debug)]
pub struct MomentOperator {
    pub q: usize,
    pub t: usize,
    pub matrix: CMatrix,
}

impl MomentOperator {
    pub fn new(q: usize, t: usize, matrix: CMatrix) -> Result<Self> {
        let dim = matrix.rows();
        if !matrix.is_square() {
            return Err(Error::invalid("MomentOperator: matrix must be square"));
        }
        let mut want: u128 = 1;
        for _ in 0..2 * t {
            want *= q as u128;
        }
        if want != dim as u128 {
            return Err(Error::DimensionMismatch {
                context: "MomentOperator dimension",
                expected: want.min(usize::MAX as u128) as usize,
                got: dim,
            });
        }
        Ok(MomentOperator { q, t, matrix })
    }

    /// The exact Haar moment operator, i.e. the invariant-subspace projector.
    pub fn haar(p: &HaarProjector) -> Self {
        MomentOperator { q: p.q, t: p.t, matrix: p.matrix.clone() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// `u^{(x)t}` by repeated Kronecker products.
pub fn kron_power(u: &CMatrix, t: usize, limits: &Limits) -> Result<CMatrix> {
    let mut out = CMatrix::identity(1);
    for _ in 0..t {
        out = kron(&out, u, limits)?;
    }
    Ok(out)
}

/// `U^{(x)t} (x) conj(U)^{(x)t}` in the factor-major layout.
pub fn replicated(u: &CMatrix, t: usize, limits: &Limits) -> Result<CMatrix> {
    let fwd = kron_power(u, t, limits)?;
    let cnj = kron_power(&u.conj(), t, limits)?;
    kron(&fwd, &cnj, limits)
}

/// Builds the t-th moment operator of a gate ensemble.
pub fn moment_operator(e: &GateEnsemble, t: usize, limits: &Limits) -> Result<MomentOperator> {
    if t == 0 {
        return Err(Error::invalid("moment order t must be >= 1"));
    }
    let dim = limits.checked_pow(e.dim(), 2 * t as u32)?;
    let mut acc = Array2::<C64>::zeros((dim, dim));
    for (p, u) in e.members() {
        let term = replicated(u, t, limits)?;
        acc.zip_mut_with(term.array(), |a, &b| *a += b * C64::new(*p, 0.0));
    }
    MomentOperator::new(e.dim(), t, CMatrix::from_array(acc)?)
}

/// All permutations of `0..t` in lexicographic order.
pub fn permutations(t: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..t).collect(), &mut out);
    out
}

pub fn perm_inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

/// `(a . b)(i) = a[b[i]]`.
pub fn perm_compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&i| a[i]).collect()
}

pub fn perm_cycles(p: &[usize]) -> usize {
    let mut seen = vec![false; p.len()];
    let mut cycles = 0;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = p[i];
        }
    }
    cycles
}

/// Normalized permutation state on the replicated space: the forward factors
/// hold `(i_1 .. i_t)`, the conjugate factors `(i_{sigma(1)} .. i_{sigma(t)})`.
pub fn permutation_state(q: usize, t: usize, sigma: &[usize]) -> Array1<C64> {
    let dim_half = q.pow(t as u32);
    let dim = dim_half * dim_half;
    let amp = C64::new((q as f64).powf(-(t as f64) / 2.0), 0.0);
    let mut v = Array1::<C64>::zeros(dim);
    let mut tuple = vec![0usize; t];
    loop {
        let fwd: usize = tuple.iter().fold(0, |acc, &i| acc * q + i);
        let cnj: usize = (0..t).fold(0, |acc, j| acc * q + tuple[sigma[j]]);
        v[fwd * dim_half + cnj] += amp;
        // next tuple
        let mut k = t;
        loop {
            if k == 0 {
                return v;
            }
            k -= 1;
            tuple[k] += 1;
            if tuple[k] < q {
                break;
            }
            tuple[k] = 0;
        }
    }
}

/// Orthogonal projector onto the span of the permutation states, with the
/// numerically determined rank.
#[derive(Clone, Debug)]
pub struct HaarProjector {
    pub q: usize,
    pub t: usize,
    pub matrix: CMatrix,
    pub rank: usize,
}

/// Builds the Haar projector by pivoted Gram-Schmidt orthonormalization of
/// the t! permutation states. For `q < t` the states are linearly dependent
/// and the numerical span is used.
pub fn haar_projector(q: usize, t: usize, limits: &Limits) -> Result<HaarProjector> {
    if t == 0 || t > MAX_MOMENT_ORDER {
        return Err(Error::invalid(format!(
            "moment order t = {t} outside supported range 1..={MAX_MOMENT_ORDER}"
        )));
    }
    if q < 2 {
        return Err(Error::invalid("haar_projector: dimension must be >= 2"));
    }
    let dim = limits.checked_pow(q, 2 * t as u32)?;
    let perms = permutations(t);
    let mut cols: Vec<Array1<C64>> = perms.iter().map(|s| permutation_state(q, t, s)).collect();

    let max_norm = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let rank_tol = 1e-10 * max_norm;

    let mut basis: Vec<Array1<C64>> = Vec::new();
    let mut alive: Vec<bool> = vec![true; cols.len()];
    loop {
        // pivot: remaining column of largest norm
        let mut best: Option<(usize, f64)> = None;
        for (i, col) in cols.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if best.map_or(true, |(_, bn)| norm > bn) {
                best = Some((i, norm));
            }
        }
        let (idx, norm) = match best {
            Some(b) => b,
            None => break,
        };
        if norm <= rank_tol {
            break;
        }
        let e = cols[idx].mapv(|z| z / C64::new(norm, 0.0));
        alive[idx] = false;
        for (i, col) in cols.iter_mut().enumerate() {
            if !alive[i] {
                continue;
            }
            let overlap: C64 = e.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
            col.zip_mut_with(&e, |c, &ek| *c -= overlap * ek);
        }
        basis.push(e);
    }

    let rank = basis.len();
    if rank == 0 {
        return Err(Error::Internal(
            "permutation-state Gram matrix is numerically rank zero".into(),
        ));
    }
    let mut v = Array2::<C64>::zeros((dim, rank));
    for (k, e) in basis.iter().enumerate() {
        v.column_mut(k).assign(e);
    }
    let vdag = v.t().mapv(|z| z.conj());
    let p = v.dot(&vdag);
    Ok(HaarProjector { q, t, matrix: CMatrix::from_array(p)?, rank })
}

/// Spectral gap and diagnostics of a moment operator against the projector.
#[derive(Clone, Copy, Debug)]
pub struct GapReport {
    pub gap: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

fn check_compatible(m: &MomentOperator, p: &HaarProjector, context: &'static str) -> Result<()> {
    if m.q != p.q || m.t != p.t {
        return Err(Error::DimensionMismatch {
            context,
            expected: p.matrix.rows(),
            got: m.matrix.rows(),
        });
    }
    Ok(())
}

/// `Delta = 1 - ||M - P||`.
pub fn spectral_gap(m: &MomentOperator, p: &HaarProjector) -> Result<GapReport> {
    check_compatible(m, p, "spectral_gap")?;
    let r = m.matrix.sub(&p.matrix)?;
    let est = op_norm_default(&r)?;
    let gap = 1.0 - est.value;
    if gap < -1e-8 {
        return Err(Error::Internal(format!(
            "residual norm {} exceeds 1; moment operator is not a contraction",
            est.value
        )));
    }
    Ok(GapReport {
        gap: gap.max(0.0),
        residual_norm: est.value,
        iterations: est.iterations,
        tolerance: crate::linalg::POWER_TOL,
    })
}

/// `R = M - P`, with the invariant-subspace orthogonality `P R = R P = 0`
/// asserted. A violation signals that the moment operator was built from
/// non-unitary members.
pub fn residual(m: &MomentOperator, p: &HaarProjector) -> Result<CMatrix> {
    check_compatible(m, p, "residual")?;
    let r = m.matrix.sub(&p.matrix)?;
    let pr = p.matrix.mul(&r)?;
    let rp = r.mul(&p.matrix)?;
    let norm_pr = op_norm_default(&pr)?.value;
    let norm_rp = op_norm_default(&rp)?.value;
    if norm_pr > ORTHO_TOL || norm_rp > ORTHO_TOL {
        return Err(Error::OrthogonalityViolation { norm_pr, norm_rp, tol: ORTHO_TOL });
    }
    Ok(r)
}

/// Checks the L-fold convolution contraction: the residual norm of the
/// composite operator must not exceed `exp(-sum of layer gaps)`.
pub fn convolution_bound_check(
    layers: &[GapReport],
    composite: &MomentOperator,
    p: &HaarProjector,
) -> Result<BoundCheck> {
    check_compatible(composite, p, "convolution_bound_check")?;
    let bound = (-layers.iter().map(|g| g.gap).sum::<f64>()).exp();
    let r = composite.matrix.sub(&p.matrix)?;
    let value = op_norm_default(&r)?.value;
    Ok(BoundCheck::geq("convolution", bound, value, 1e-8))
}
