//! Discrete gate-set diagnostics: adjoint and convolved ensembles, the
//! spectral-radius/gap relation, moment-order sweeps, and the
//! phase-invariant distance between unitaries.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, op_norm_default, unitarity_defect, CMatrix, Limits};
use crate::moment::{haar_projector, moment_operator, spectral_gap, GateEnsemble};

/// Hermiticity tolerance for moment operators of inverse-closed ensembles.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Same probabilities, conjugate-transposed members.
pub fn adjoint_ensemble(e: &GateEnsemble) -> GateEnsemble {
    let members = e.members().iter().map(|(p, u)| (*p, u.adjoint())).collect();
    GateEnsemble::new(e.dim(), members).expect("adjoint of a valid ensemble is valid")
}

/// Product ensemble with members `U_i V_j` and probabilities `p_i p_j`
/// (`a` applied after `b`, so moment operators compose as `M_a M_b`).
pub fn convolve(a: &GateEnsemble, b: &GateEnsemble) -> Result<GateEnsemble> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "convolve",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut members = Vec::with_capacity(a.members().len() * b.members().len());
    for (pa, ua) in a.members() {
        for (pb, ub) in b.members() {
            members.push((pa * pb, ua.mul(ub)?));
        }
    }
    GateEnsemble::new(a.dim(), members)
}

/// One row of the radius/gap relation:
/// `rho(M_{adj * e} - P) = (1 - gap(e))^2`, both sides computed
/// independently.
#[derive(Clone, Copy, Debug)]
pub struct RelationEntry {
    pub t: usize,
    pub gap: f64,
    pub radius: f64,
    pub relation_residual: f64,
}

/// Computes the radius/gap relation at moment order `t`. The convolved
/// moment operator is Hermitian because the adjoint convolution is
/// inverse-closed; its spectral radius comes from a dense Hermitian
/// eigendecomposition, while the gap comes from the norm engine.
pub fn radius_relation_check(e: &GateEnsemble, t: usize, limits: &Limits) -> Result<RelationEntry> {
    let p = haar_projector(e.dim(), t, limits)?;
    let conv = convolve(&adjoint_ensemble(e), e)?;
    let m_conv = moment_operator(&conv, t, limits)?;
    let h = m_conv.matrix.sub(&p.matrix)?;
    let herm_dev = h.sub(&h.adjoint())?;
    let dev = op_norm_default(&herm_dev)?.value;
    if dev > HERMITIAN_TOL {
        return Err(Error::Internal(format!(
            "adjoint-convolved moment operator is not Hermitian (deviation {dev:.3e})"
        )));
    }
    limits.check_eig(h.rows())?;
    let radius = hermitian_eigenvalues(&h, limits)?
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max);

    let m = moment_operator(e, t, limits)?;
    let gap = spectral_gap(&m, &p)?.gap;
    let relation_residual = (radius - (1.0 - gap) * (1.0 - gap)).abs();
    Ok(RelationEntry { t, gap, radius, relation_residual })
}

/// Gap and radius diagnostics across moment orders.
#[derive(Clone, Debug)]
pub struct GateSetDiagnostic {
    pub t_values: Vec<usize>,
    pub gaps: Vec<f64>,
    pub radii: Vec<f64>,
    pub relation_residuals: Vec<f64>,
    /// Set when the sweep stopped early on a dimension budget.
    pub truncated: bool,
}

/// Sweeps the spectral gap and radius relation over `t = 1..=t_max`,
/// stopping early (with a flag) when the eigensolver budget is exceeded.
pub fn gap_sweep(e: &GateEnsemble, t_max: usize, limits: &Limits) -> Result<GateSetDiagnostic> {
    let mut diag = GateSetDiagnostic {
        t_values: Vec::new(),
        gaps: Vec::new(),
        radii: Vec::new(),
        relation_residuals: Vec::new(),
        truncated: false,
    };
    for t in 1..=t_max {
        let mut dim: u128 = 1;
        for _ in 0..2 * t {
            dim *= e.dim() as u128;
        }
        if dim > limits.max_dim as u128 || dim > limits.eig_dim as u128 {
            diag.truncated = true;
            break;
        }
        let entry = radius_relation_check(e, t, limits)?;
        diag.t_values.push(t);
        diag.gaps.push(entry.gap);
        diag.radii.push(entry.radius);
        diag.relation_residuals.push(entry.relation_residual);
    }
    Ok(diag)
}

/// Distance between unitaries modulo global phase:
/// `min over phi of ||v - e^{i phi} u||`.
///
/// Equals the minimax chordal distance from a point on the unit circle to
/// the eigenphases of `v u^dag`; the optimum centers the eigenphase arc, so
/// the distance is `2 sin(span / 4)` with `span` the arc length left after
/// removing the largest circular gap.
pub fn phase_distance(v: &CMatrix, u: &CMatrix, limits: &Limits) -> Result<f64> {
    if v.rows() != u.rows() || !v.is_square() || !u.is_square() {
        return Err(Error::DimensionMismatch {
            context: "phase_distance",
            expected: v.rows(),
            got: u.rows(),
        });
    }
    for (name, m) in [("first", v), ("second", u)] {
        let dev = unitarity_defect(m)?;
        if dev > 1e-10 {
            return Err(Error::invalid(format!(
                "phase_distance: {name} argument is not unitary (deviation {dev:.3e})"
            )));
        }
    }
    let w = v.mul(&u.adjoint())?;
    limits.check_eig(w.rows())?;
    use ndarray_linalg::EigVals;
    let vals = w.array().eigvals()?;
    let mut phases: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = phases.len();
    let tau = 2.0 * std::f64::consts::PI;
    let mut max_gap = 0.0f64;
    for i in 0..n {
        let gap = if i + 1 < n {
            phases[i + 1] - phases[i]
        } else {
            phases[0] + tau - phases[n - 1]
        };
        max_gap = max_gap.max(gap);
    }
    let span = (tau - max_gap).max(0.0);
    Ok(2.0 * (span / 4.0).sin())
}
