//! Experiment configuration files: a TOML document specifying the
//! architecture, the local randomizers, and per-command parameters.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::arch::{
    make_1d_local, make_1d_parallel, make_all_to_all, make_brickwork_block, make_graph,
    Architecture, FixedArchitecture, LocalEnsemble, LocalSpec,
};
use crate::error::{Error, Result};
use crate::gates::parse_gate;
use crate::linalg::CMatrix;
use crate::moment::GateEnsemble;
use num_complex::Complex64 as C64;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub t: Option<usize>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    /// Instances per check for `verify`.
    pub seeds: Option<usize>,
    pub checks: Option<Vec<String>>,
    pub t_min: Option<usize>,
    pub t_max: Option<usize>,
    pub depth: Option<usize>,
    pub samples: Option<usize>,
    /// Order-level constant in the patchwork depth formula.
    pub c0: Option<f64>,
    /// Largest brickwork size used for the exact gap floor.
    pub m_max: Option<usize>,
    pub architecture: Option<ArchConfig>,
    pub ensemble: Option<EnsembleConfig>,
    pub pair_ensembles: Option<Vec<PairEnsembleConfig>>,
    pub gate_set: Option<GateSetConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub family: String,
    pub n_sites: usize,
    pub local_dim: usize,
    pub edges: Option<Vec<[usize; 2]>>,
    pub layers: Option<Vec<Vec<[usize; 2]>>>,
    pub patch_size: Option<usize>,
    pub patch_layers: Option<Vec<Vec<[usize; 2]>>>,
    pub patch_reps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub haar: Option<bool>,
    pub members: Option<Vec<MemberConfig>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub p: f64,
    pub gate: Option<String>,
    /// Row-major matrix of `[re, im]` pairs.
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEnsembleConfig {
    pub pair: [usize; 2],
    pub haar: Option<bool>,
    pub members: Option<Vec<MemberConfig>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSetConfig {
    pub dim: usize,
    pub members: Vec<MemberConfig>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile =
        toml::from_str(text).map_err(|e| Error::invalid(format!("config parse error: {e}")))?;
    if let Some(arch) = &cfg.architecture {
        if arch.local_dim < 2 {
            return Err(Error::invalid(format!(
                "config: local_dim {} must be >= 2",
                arch.local_dim
            )));
        }
        if arch.n_sites < 2 {
            return Err(Error::invalid("config: n_sites must be >= 2"));
        }
    }
    if let Some(t) = cfg.t {
        if t == 0 {
            return Err(Error::invalid("config: t must be >= 1"));
        }
    }
    if let Some(eps) = cfg.eps {
        if !(eps > 0.0) {
            return Err(Error::invalid("config: eps must be > 0"));
        }
    }
    Ok(cfg)
}

fn member_gate(member: &MemberConfig, expected_dim: usize) -> Result<CMatrix> {
    match (&member.gate, &member.matrix) {
        (Some(expr), None) => parse_gate(expr, Some(expected_dim)),
        (None, Some(rows)) => {
            let n = rows.len();
            let mut entries = Vec::with_capacity(n * n);
            for row in rows {
                if row.len() != n {
                    return Err(Error::invalid("config: matrix member must be square"));
                }
                for &[re, im] in row {
                    entries.push(C64::new(re, im));
                }
            }
            if n != expected_dim {
                return Err(Error::DimensionMismatch {
                    context: "config: matrix member dimension",
                    expected: expected_dim,
                    got: n,
                });
            }
            CMatrix::from_vec(n, n, entries)
        }
        _ => Err(Error::invalid(
            "config: each member needs exactly one of `gate` or `matrix`",
        )),
    }
}

fn members_to_ensemble(members: &[MemberConfig], dim: usize) -> Result<GateEnsemble> {
    let parsed = members
        .iter()
        .map(|m| Ok((m.p, member_gate(m, dim)?)))
        .collect::<Result<Vec<_>>>()?;
    GateEnsemble::new(dim, parsed)
}

fn local_from(haar: Option<bool>, members: &Option<Vec<MemberConfig>>, dim: usize) -> Result<LocalEnsemble> {
    match (haar.unwrap_or(false), members) {
        (true, None) => Ok(LocalEnsemble::Haar),
        (false, Some(ms)) => Ok(LocalEnsemble::Gates(members_to_ensemble(ms, dim)?)),
        (true, Some(_)) => {
            Err(Error::invalid("config: ensemble cannot be both haar and explicit members"))
        }
        (false, None) => Err(Error::invalid(
            "config: ensemble needs `haar = true` or a `members` list",
        )),
    }
}

/// Resolves the local randomizer assignment from the shared `[ensemble]`
/// section plus any `[[pair_ensembles]]` overrides.
pub fn build_local_spec(cfg: &ConfigFile, local_dim: usize) -> Result<LocalSpec> {
    let pair_dim = local_dim * local_dim;
    let default = match &cfg.ensemble {
        Some(e) => Some(local_from(e.haar, &e.members, pair_dim)?),
        None => None,
    };
    let overrides = match &cfg.pair_ensembles {
        Some(list) => {
            let mut map = BTreeMap::new();
            for pe in list {
                let key = (pe.pair[0].min(pe.pair[1]), pe.pair[0].max(pe.pair[1]));
                map.insert(key, local_from(pe.haar, &pe.members, pair_dim)?);
            }
            map
        }
        None => BTreeMap::new(),
    };
    match (overrides.is_empty(), default) {
        (true, Some(d)) => Ok(LocalSpec::Shared(d)),
        (false, d) => Ok(LocalSpec::PerPair { overrides, default: d }),
        (true, None) => Err(Error::invalid("config: missing [ensemble] section")),
    }
}

/// Builds the architecture named by the config.
pub fn build_architecture(cfg: &ConfigFile) -> Result<Architecture> {
    let arch = cfg
        .architecture
        .as_ref()
        .ok_or_else(|| Error::invalid("config: missing [architecture] section"))?;
    let locals = build_local_spec(cfg, arch.local_dim)?;
    let n = arch.n_sites;
    let d = arch.local_dim;
    match arch.family.as_str() {
        "local1d" => Ok(Architecture::single_layer(make_1d_local(n, d, &locals)?)),
        "parallel1d" => Ok(Architecture::single_layer(make_1d_parallel(n, d, &locals)?)),
        "alltoall" => Ok(Architecture::single_layer(make_all_to_all(n, d, &locals)?)),
        "graph" => {
            let edges: Vec<(usize, usize)> = arch
                .edges
                .as_ref()
                .ok_or_else(|| Error::invalid("config: graph family needs `edges`"))?
                .iter()
                .map(|&[i, j]| (i, j))
                .collect();
            Ok(Architecture::single_layer(make_graph(n, d, &edges, &locals)?))
        }
        "brickwork" => Ok(Architecture::fixed_block(make_brickwork_block(n, d, &locals)?)),
        "fixed" => {
            let layers: Vec<Vec<(usize, usize)>> = arch
                .layers
                .as_ref()
                .ok_or_else(|| Error::invalid("config: fixed family needs `layers`"))?
                .iter()
                .map(|layer| layer.iter().map(|&[i, j]| (i, j)).collect())
                .collect();
            Ok(Architecture::fixed_block(FixedArchitecture::new(n, d, &layers, &locals)?))
        }
        "patchwork" => {
            let xi = arch
                .patch_size
                .ok_or_else(|| Error::invalid("config: patchwork family needs `patch_size`"))?;
            let patch_sites = 2 * xi;
            let template = match &arch.patch_layers {
                Some(layers) => {
                    let layers: Vec<Vec<(usize, usize)>> = layers
                        .iter()
                        .map(|layer| layer.iter().map(|&[i, j]| (i, j)).collect())
                        .collect();
                    FixedArchitecture::template(patch_sites, d, &layers, &locals)?
                }
                None => {
                    if patch_sites >= 3 {
                        make_brickwork_block(patch_sites, d, &locals)?
                    } else {
                        FixedArchitecture::template(
                            patch_sites,
                            d,
                            &[vec![(0, 1)]],
                            &locals,
                        )?
                    }
                }
            };
            let template = template.repeat(arch.patch_reps.unwrap_or(1));
            Ok(Architecture::patchwork(n, xi, template))
        }
        other => Err(Error::invalid(format!("config: unknown family '{other}'"))),
    }
}

/// Builds the plain gate set named by `[gate_set]` (used by sweeps and the
/// radius relation).
pub fn build_gate_set(cfg: &ConfigFile) -> Result<GateEnsemble> {
    let gs = cfg
        .gate_set
        .as_ref()
        .ok_or_else(|| Error::invalid("config: missing [gate_set] section"))?;
    members_to_ensemble(&gs.members, gs.dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ArchKind;

    #[test]
    fn parses_local1d_with_named_gates() {
        let text = r#"
t = 1
seed = 3

[architecture]
family = "local1d"
n_sites = 3
local_dim = 2

[ensemble]
members = [
    { p = 0.25, gate = "kron(H, I)" },
    { p = 0.25, gate = "kron(I, T)" },
    { p = 0.5, gate = "CNOT" },
]
"#;
        let cfg = parse_config(text).unwrap();
        let arch = build_architecture(&cfg).unwrap();
        assert!(matches!(arch.kind, ArchKind::SingleLayer(_)));
        assert_eq!(arch.n_sites, 3);
    }

    #[test]
    fn rejects_bad_local_dim_and_unknown_family() {
        let text = r#"
[architecture]
family = "local1d"
n_sites = 3
local_dim = 1

[ensemble]
haar = true
"#;
        assert!(parse_config(text).is_err());

        let text2 = r#"
[architecture]
family = "mysterious"
n_sites = 3
local_dim = 2

[ensemble]
haar = true
"#;
        let cfg = parse_config(text2).unwrap();
        assert!(build_architecture(&cfg).is_err());
    }

    #[test]
    fn literal_matrix_members_and_validation() {
        let text = r#"
[architecture]
family = "local1d"
n_sites = 2
local_dim = 2

[ensemble]
members = [
    { p = 1.0, matrix = [
        [[1, 0], [0, 0], [0, 0], [0, 0]],
        [[0, 0], [1, 0], [0, 0], [0, 0]],
        [[0, 0], [0, 0], [1, 0], [0, 0]],
        [[0, 0], [0, 0], [0, 0], [1, 0]],
    ] },
]
"#;
        let cfg = parse_config(text).unwrap();
        assert!(build_architecture(&cfg).is_ok());

        // non-unitary literal matrix is rejected when building
        let bad = text.replace("[[1, 0], [0, 0], [0, 0], [0, 0]]", "[[0.5, 0], [0, 0], [0, 0], [0, 0]]");
        let cfg2 = parse_config(&bad).unwrap();
        assert!(matches!(build_architecture(&cfg2), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn pair_overrides_with_shared_default() {
        let text = r#"
[architecture]
family = "local1d"
n_sites = 3
local_dim = 2

[ensemble]
haar = true

[[pair_ensembles]]
pair = [1, 2]
members = [{ p = 1.0, gate = "SWAP" }]
"#;
        let cfg = parse_config(text).unwrap();
        let arch = build_architecture(&cfg).unwrap();
        let ArchKind::SingleLayer(layer) = &arch.kind else {
            panic!("expected single layer")
        };
        let protos = layer.protocols();
        assert!(protos[0].locals()[0].is_haar());
        assert!(!protos[1].locals()[0].is_haar());
    }

    #[test]
    fn patchwork_and_gate_set_sections() {
        let text = r#"
t = 2
t_max = 3

[architecture]
family = "patchwork"
n_sites = 4
local_dim = 2
patch_size = 1

[ensemble]
haar = true

[gate_set]
dim = 2
members = [
    { p = 0.5, gate = "T" },
    { p = 0.5, gate = "H" },
]
"#;
        let cfg = parse_config(text).unwrap();
        let arch = build_architecture(&cfg).unwrap();
        assert!(matches!(arch.kind, ArchKind::Patchwork { xi: 1, .. }));
        let gs = build_gate_set(&cfg).unwrap();
        assert_eq!(gs.dim(), 2);
        assert_eq!(gs.members().len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
mystery_knob = 3

[architecture]
family = "local1d"
n_sites = 3
local_dim = 2
"#;
        assert!(parse_config(text).is_err());
    }
}
