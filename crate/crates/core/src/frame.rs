//! Monte Carlo frame-potential estimation and circuit-level unitary
//! sampling, cross-validating the exact moment-operator computations.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::arch::{ArchKind, Architecture, LayerEnsemble, LocalEnsemble, Protocol};
use crate::error::{Error, Result};
use crate::linalg::{haar_sample, permute_site_digits, CMatrix, Limits, ReplicaSpace};
use crate::moment::haar_projector;

/// Frame-potential estimate with its statistical contract.
#[derive(Clone, Debug)]
pub struct FrameEstimate {
    pub t: usize,
    pub samples: usize,
    pub mean: f64,
    /// Sample standard deviation over sqrt(samples).
    pub std_error: f64,
    /// `tr(M^dag M)` of the exact depth moment operator, when computable.
    pub exact_reference: Option<f64>,
}

/// Largest replica dimension for which the exact reference is attempted.
const EXACT_REFERENCE_DIM: usize = 4096;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Counter-based stream split: sample `counter` under a base seed gets its
/// own reproducible stream, independent of evaluation order.
fn derived_seed(base: u64, counter: u64) -> u64 {
    let mut z = base ^ counter.wrapping_mul(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_member(e: &crate::moment::GateEnsemble, rng: &mut ChaCha12Rng) -> CMatrix {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (p, u) in e.members() {
        acc += p;
        if x < acc {
            return u.clone();
        }
    }
    e.members().last().expect("ensemble is non-empty").1.clone()
}

fn sample_local(local: &LocalEnsemble, local_dim: usize, rng: &mut ChaCha12Rng) -> Result<CMatrix> {
    match local {
        LocalEnsemble::Haar => haar_sample(local_dim * local_dim, rng.random()),
        LocalEnsemble::Gates(e) => Ok(sample_member(e, rng)),
    }
}

fn sample_protocol<'a>(protocols: &'a [Protocol], rng: &mut ChaCha12Rng) -> &'a Protocol {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for proto in protocols {
        acc += proto.probability();
        if x < acc {
            return proto;
        }
    }
    protocols.last().expect("layer has protocols")
}

fn apply_layer_sample(
    layer: &LayerEnsemble,
    u: CMatrix,
    space: &ReplicaSpace,
    rng: &mut ChaCha12Rng,
    limits: &Limits,
) -> Result<CMatrix> {
    let proto = sample_protocol(layer.protocols(), rng);
    let mut cur = u;
    for (&(i, j), local) in proto.pairs().iter().zip(proto.locals()) {
        let gate = sample_local(local, layer.local_dim(), rng)?;
        cur = space.apply_left(&gate, &[i, j], &cur, limits)?;
    }
    Ok(cur)
}

/// Draws one N-qudit circuit unitary of the given depth. Deterministic
/// under `seed`.
pub fn sample_circuit(
    arch: &Architecture,
    depth: usize,
    seed: u64,
    limits: &Limits,
) -> Result<CMatrix> {
    let space = ReplicaSpace::plain(arch.n_sites, arch.local_dim);
    let dim = space.dim(limits)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut u = CMatrix::identity(dim);
    match &arch.kind {
        ArchKind::SingleLayer(layer) => {
            for _ in 0..depth {
                u = apply_layer_sample(layer, u, &space, &mut rng, limits)?;
            }
        }
        ArchKind::FixedBlock(block) => {
            for i in 0..depth {
                let layer = &block.layers()[i % block.layers().len()];
                u = apply_layer_sample(layer, u, &space, &mut rng, limits)?;
            }
        }
        ArchKind::Patchwork { xi, patch } => {
            let patch_sites = 2 * xi;
            if arch.n_sites % patch_sites != 0 {
                return Err(Error::invalid("patchwork: sites not divisible by patch size"));
            }
            let n_patches = arch.n_sites / patch_sites;
            for layer_idx in 0..depth {
                let offset = if layer_idx % 2 == 0 { 0 } else { xi % arch.n_sites };
                for p in 0..n_patches {
                    // one full pass of the patch template on this patch
                    for tmpl_layer in patch.layers() {
                        let proto = sample_protocol(tmpl_layer.protocols(), &mut rng);
                        for (&(a, b), local) in proto.pairs().iter().zip(proto.locals()) {
                            let gate = sample_local(local, arch.local_dim, &mut rng)?;
                            let pa = (offset + p * patch_sites + a) % arch.n_sites;
                            let pb = (offset + p * patch_sites + b) % arch.n_sites;
                            let (gate, sites) =
                                permute_site_digits(&gate, &[pa, pb], arch.local_dim, 1);
                            u = space.apply_left(&gate, &sites, &u, limits)?;
                        }
                    }
                }
            }
        }
    }
    Ok(u)
}

/// `|tr(U^dag V)|^{2t}`.
fn trace_power(u: &CMatrix, v: &CMatrix, t: usize) -> f64 {
    let mut tr = C64::new(0.0, 0.0);
    for (a, b) in u.array().iter().zip(v.array().iter()) {
        tr += a.conj() * b;
    }
    tr.norm_sqr().powi(t as i32)
}

/// Monte Carlo frame potential over independent circuit pairs:
/// the mean of `|tr(U^dag V)|^{2t}`. When the exact depth moment operator
/// fits the dense budget, `tr(M^dag M)` is attached as the reference.
pub fn frame_potential(
    arch: &Architecture,
    depth: usize,
    t: usize,
    n_samples: usize,
    seed: u64,
    limits: &Limits,
) -> Result<FrameEstimate> {
    if n_samples < 2 {
        return Err(Error::invalid("frame_potential: need at least two samples"));
    }
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let u = sample_circuit(arch, depth, derived_seed(seed, 2 * i as u64), limits)?;
        let v = sample_circuit(arch, depth, derived_seed(seed, 2 * i as u64 + 1), limits)?;
        values.push(trace_power(&u, &v, t));
    }
    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();

    let replica_dim = {
        let mut acc: u128 = 1;
        for _ in 0..2 * t * arch.n_sites {
            acc *= arch.local_dim as u128;
        }
        acc
    };
    let exact_reference = if replica_dim <= EXACT_REFERENCE_DIM as u128
        && replica_dim <= limits.max_dim as u128
    {
        let m = arch.depth_moment(depth, t, limits)?;
        let f = m.matrix.frobenius();
        Some(f * f)
    } else {
        None
    };
    Ok(FrameEstimate { t, samples: n_samples, mean, std_error, exact_reference })
}

/// Monte Carlo frame potential of the plain Haar measure on dimension `q`;
/// converges to the invariant-subspace rank.
pub fn haar_frame_potential(q: usize, t: usize, n_samples: usize, seed: u64) -> Result<FrameEstimate> {
    if n_samples < 2 {
        return Err(Error::invalid("frame_potential: need at least two samples"));
    }
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let u = haar_sample(q, derived_seed(seed, 2 * i as u64))?;
        let v = haar_sample(q, derived_seed(seed, 2 * i as u64 + 1))?;
        values.push(trace_power(&u, &v, t));
    }
    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let exact_reference = haar_projector(q, t, &Limits::default()).ok().map(|p| p.rank as f64);
    Ok(FrameEstimate { t, samples: n_samples, mean, std_error, exact_reference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{make_1d_local, LocalSpec};
    use crate::moment::{replicated, GateEnsemble};
    use ndarray::Array2;

    fn limits() -> Limits {
        Limits::default()
    }

    fn haar_local_arch(n: usize) -> Architecture {
        Architecture::single_layer(make_1d_local(n, 2, &LocalSpec::haar()).unwrap())
    }

    #[test]
    fn depth_zero_is_identity() {
        let arch = haar_local_arch(3);
        let u = sample_circuit(&arch, 0, 5, &limits()).unwrap();
        assert_eq!(u.max_abs_diff(&CMatrix::identity(8)), 0.0);
    }

    #[test]
    fn deterministic_architecture_gives_fixed_product() {
        // singleton locals on a fixed block: the sample is seed-independent
        let u01 = haar_sample(4, 61).unwrap();
        let spec = LocalSpec::Shared(LocalEnsemble::Gates(
            GateEnsemble::singleton(u01.clone()).unwrap(),
        ));
        let block = crate::arch::FixedArchitecture::new(3, 2, &[vec![(0, 1)], vec![(1, 2)]], &spec)
            .unwrap();
        let arch = Architecture::fixed_block(block);
        let a = sample_circuit(&arch, 2, 1, &limits()).unwrap();
        let b = sample_circuit(&arch, 2, 999, &limits()).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
        // oracle: explicit embedded product
        let space = ReplicaSpace::plain(3, 2);
        let e01 = space.embed(&[(&u01, &[0, 1])], &limits()).unwrap();
        let e12 = space.embed(&[(&u01, &[1, 2])], &limits()).unwrap();
        let want = e12.mul(&e01).unwrap();
        assert!(a.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn sampled_replicas_average_to_projector() {
        // 1D local on two sites with a Haar pair: each sample is Haar on
        // dimension 4; the replicated average approaches the projector
        let arch = haar_local_arch(2);
        let p = haar_projector(4, 1, &limits()).unwrap();
        let n = 10_000usize;
        let dim = 16usize;
        let mut sum = Array2::<C64>::zeros((dim, dim));
        let mut sumsq = Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            let u = sample_circuit(&arch, 1, derived_seed(77, i as u64), &limits()).unwrap();
            let rep = replicated(&u, 1, &limits()).unwrap();
            sum.zip_mut_with(rep.array(), |a, &b| *a += b);
            sumsq.zip_mut_with(rep.array(), |a, &b| *a += b.norm_sqr());
        }
        let nf = n as f64;
        for r in 0..dim {
            for c in 0..dim {
                let mean = sum[[r, c]] / C64::new(nf, 0.0);
                let var = (sumsq[[r, c]] / nf - mean.norm_sqr()).max(0.0);
                let se = (var / nf).sqrt().max(1e-12);
                let dev = (mean - p.matrix.entry(r, c)).norm();
                assert!(dev <= 5.0 * se, "entry ({r},{c}): dev {dev} vs se {se}");
            }
        }
    }

    #[test]
    fn identity_circuit_frame_potential_is_exact_constant() {
        let id_spec = LocalSpec::Shared(LocalEnsemble::Gates(
            GateEnsemble::singleton(CMatrix::identity(4)).unwrap(),
        ));
        let arch =
            Architecture::single_layer(make_1d_local(2, 2, &id_spec).unwrap());
        let est = frame_potential(&arch, 0, 1, 100, 3, &limits()).unwrap();
        assert_eq!(est.mean, 16.0); // |tr I_4|^2
        assert_eq!(est.std_error, 0.0);
        assert!((est.exact_reference.unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn haar_frame_potential_matches_projector_rank() {
        let est1 = haar_frame_potential(2, 1, 10_000, 11).unwrap();
        assert!((est1.mean - 1.0).abs() <= 3.0 * est1.std_error, "{est1:?}");
        let est2 = haar_frame_potential(2, 2, 10_000, 12).unwrap();
        assert!((est2.mean - 2.0).abs() <= 3.0 * est2.std_error, "{est2:?}");
    }

    #[test]
    fn frame_potential_matches_exact_reference() {
        let arch = haar_local_arch(2);
        let est = frame_potential(&arch, 1, 1, 10_000, 21, &limits()).unwrap();
        let exact = est.exact_reference.unwrap();
        assert!(
            (est.mean - exact).abs() <= 3.0 * est.std_error,
            "mean {} exact {exact} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn frame_potential_non_increasing_in_depth() {
        let arch = haar_local_arch(2);
        let shallow = frame_potential(&arch, 1, 1, 4000, 31, &limits()).unwrap();
        let deep = frame_potential(&arch, 4, 1, 4000, 32, &limits()).unwrap();
        let combined = (shallow.std_error.powi(2) + deep.std_error.powi(2)).sqrt();
        assert!(
            deep.mean <= shallow.mean + 3.0 * combined,
            "deep {} shallow {}",
            deep.mean,
            shallow.mean
        );
    }

    #[test]
    fn patchwork_sampling_runs_and_wraps() {
        let patch = crate::arch::FixedArchitecture::template(
            2,
            2,
            &[vec![(0, 1)]],
            &LocalSpec::haar(),
        )
        .unwrap();
        let arch = Architecture::patchwork(4, 1, patch);
        let u = sample_circuit(&arch, 2, 9, &limits()).unwrap();
        assert!(crate::linalg::unitarity_defect(&u).unwrap() < 1e-10);
        let est = frame_potential(&arch, 2, 1, 2000, 41, &limits()).unwrap();
        let exact = est.exact_reference.expect("replica dim 256 fits");
        assert!((est.mean - exact).abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn seed_split_is_counter_based() {
        let arch = haar_local_arch(2);
        let a = frame_potential(&arch, 1, 1, 50, 7, &limits()).unwrap();
        let b = frame_potential(&arch, 1, 1, 50, 7, &limits()).unwrap();
        assert_eq!(a.mean, b.mean);
        let c = frame_potential(&arch, 1, 1, 50, 8, &limits()).unwrap();
        assert!(a.mean != c.mean);
    }
}
