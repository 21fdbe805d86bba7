//! Sampling of the Gaussian environment driving the branching: white in
//! time, colored in space with a bounded covariance kernel. Increments over
//! a time step `dt` at positions `x_1..x_m` are centered Gaussians with
//! covariance `dt * G`, `G_ij = g(x_i, x_j)`.
//!
//! The dense path factors `G` afresh whenever the position set changes
//! (particles move every step), which is the dominant cost at `O(m^3)`.
//! Exact structured paths avoid that where the kernel allows it: rank-1 for
//! constant kernels, a Hermite feature expansion for the Gaussian kernel in
//! d = 1, and the Markov (sorted autoregressive) construction for the
//! exponential kernel in d = 1.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{dist, dist2, Dim, Point};

/// Spatial covariance kernel of the environment.
///
/// All variants are symmetric, positive semidefinite, and bounded, matching
/// the standing assumption that the sup norm of the covariance is finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovKernel {
    Zero,
    Constant { level: f64 },
    Gaussian { sigma2: f64, length_scale: f64 },
    Exponential { sigma2: f64, length_scale: f64 },
}

impl CovKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovKernel::Zero => Ok(()),
            CovKernel::Constant { level } if level >= 0.0 => Ok(()),
            CovKernel::Gaussian { sigma2, length_scale }
            | CovKernel::Exponential { sigma2, length_scale }
                if sigma2 >= 0.0 && length_scale > 0.0 =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!("invalid covariance kernel {self:?}"))),
        }
    }

    /// Kernel value `g(x, y)`.
    pub fn eval(&self, x: &Point, y: &Point, d: Dim) -> f64 {
        match *self {
            CovKernel::Zero => 0.0,
            CovKernel::Constant { level } => level,
            CovKernel::Gaussian { sigma2, length_scale } => {
                sigma2 * (-dist2(x, y, d) / (2.0 * length_scale * length_scale)).exp()
            }
            CovKernel::Exponential { sigma2, length_scale } => {
                sigma2 * (-dist(x, y, d) / length_scale).exp()
            }
        }
    }

    /// `sup |g|`, which for these families is the diagonal value.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            CovKernel::Zero => 0.0,
            CovKernel::Constant { level } => level,
            CovKernel::Gaussian { sigma2, .. } | CovKernel::Exponential { sigma2, .. } => sigma2,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_norm() == 0.0
    }
}

/// Covariance matrix `G_ij = g(x_i, x_j)` with positive semidefiniteness
/// enforced by the minimal diagonal jitter (at most `1e-10 * trace`) needed
/// for a Cholesky factorization to succeed.
pub fn covariance_matrix(kernel: &CovKernel, positions: &[Point], d: Dim) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let m = positions.len();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval(&positions[i], &positions[j], d);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    if m == 0 || kernel.is_zero() {
        return Ok(g);
    }
    if g.clone().cholesky().is_some() {
        return Ok(g);
    }
    let trace: f64 = g.diagonal().sum();
    let mut jitter = 1e-14 * trace;
    while jitter <= 1e-10 * trace {
        let mut gj = g.clone();
        for i in 0..m {
            gj[(i, i)] += jitter;
        }
        if gj.clone().cholesky().is_some() {
            return Ok(gj);
        }
        jitter *= 10.0;
    }
    Err(Error::Numeric(format!(
        "covariance kernel not positive semidefinite at this configuration \
         (jitter budget 1e-10 * trace = {:.3e} exceeded)",
        1e-10 * trace
    )))
}

/// A correlated Gaussian increment of the environment over one time step.
#[derive(Clone, Debug)]
pub struct NoiseIncrement {
    pub positions: Vec<Point>,
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Draw the environment increment over `dt` at the given positions:
/// `values = sqrt(dt) * L z` with `L L^T = G` and `z` i.i.d. standard
/// normals. Deterministic given the RNG state.
pub fn sample_increment<R: Rng + ?Sized>(
    kernel: &CovKernel,
    positions: &[Point],
    d: Dim,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    if dt <= 0.0 {
        return Err(Error::Domain(format!("noise increment needs dt > 0, got {dt}")));
    }
    let mut values = vec![0.0; positions.len()];
    sample_unit_field(kernel, positions, d, rng, &mut values)?;
    let scale = dt.sqrt();
    for v in &mut values {
        *v *= scale;
    }
    Ok(NoiseIncrement { positions: positions.to_vec(), dt, values })
}

/// Fill `out` with one draw of the unit-time field (covariance `G`).
pub(crate) fn sample_unit_field<R: Rng + ?Sized>(
    kernel: &CovKernel,
    positions: &[Point],
    d: Dim,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    assert_eq!(out.len(), positions.len());
    match *kernel {
        CovKernel::Zero => {
            out.fill(0.0);
            Ok(())
        }
        CovKernel::Constant { level } => {
            let z: f64 = rng.sample(StandardNormal);
            let v = level.sqrt() * z;
            out.fill(v);
            Ok(())
        }
        CovKernel::Gaussian { sigma2, length_scale } if d == Dim::D1 => {
            let max_u = positions
                .iter()
                .map(|p| (p[0] / length_scale).powi(2))
                .fold(0.0f64, f64::max);
            if max_u < 600.0 {
                gaussian_field_hermite_1d(sigma2, length_scale, positions, rng, out);
                Ok(())
            } else {
                sample_unit_dense(kernel, positions, d, rng, out)
            }
        }
        CovKernel::Exponential { sigma2, length_scale } if d == Dim::D1 => {
            exponential_field_markov_1d(sigma2, length_scale, positions, rng, out);
            Ok(())
        }
        _ => sample_unit_dense(kernel, positions, d, rng, out),
    }
}

fn sample_unit_dense<R: Rng + ?Sized>(
    kernel: &CovKernel,
    positions: &[Point],
    d: Dim,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let g = covariance_matrix(kernel, positions, d)?;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance factorization failed".into()))?;
    let m = positions.len();
    let z = nalgebra::DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = chol.l() * z;
    out.copy_from_slice(v.as_slice());
    Ok(())
}

/// Truncation length for the Hermite feature expansion: smallest `n` with
/// the Poisson(u) tail mass below 1e-16, padded by a few terms.
fn hermite_truncation(u: f64) -> usize {
    if u < 1e-12 {
        return 8;
    }
    let mut term = (-u).exp();
    let mut cum = term;
    let mut k = 0usize;
    while 1.0 - cum > 1e-16 && k < 4000 {
        k += 1;
        term *= u / k as f64;
        cum += term;
    }
    k + 8
}

/// Exact sampler for the Gaussian kernel in d = 1 via the feature expansion
/// `g(x, y) = sum_n f_n(x) f_n(y)` with
/// `f_n(x) = sigma e^{-x^2/(2 l^2)} (x/l)^n / sqrt(n!)`.
///
/// The field `sum_n f_n(x) z_n` has covariance exactly `g` up to the
/// truncation tail (below 1e-16 of sigma^2 by construction), at `O(m N)`
/// per draw instead of a fresh `O(m^3)` factorization.
fn gaussian_field_hermite_1d<R: Rng + ?Sized>(
    sigma2: f64,
    ell: f64,
    positions: &[Point],
    rng: &mut R,
    out: &mut [f64],
) {
    let max_u = positions
        .iter()
        .map(|p| (p[0] / ell).powi(2))
        .fold(0.0f64, f64::max);
    let n_feat = hermite_truncation(max_u);
    let z: Vec<f64> = (0..n_feat).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let sigma = sigma2.sqrt();
    for (slot, p) in out.iter_mut().zip(positions) {
        let w = p[0] / ell;
        let mut term = sigma * (-0.5 * w * w).exp();
        let mut acc = 0.0;
        for (n, zn) in z.iter().enumerate() {
            acc += term * zn;
            term *= w / ((n + 1) as f64).sqrt();
        }
        *slot = acc;
    }
}

/// Exact sampler for the exponential kernel in d = 1: the field is an
/// Ornstein–Uhlenbeck process in space, so after sorting the positions it
/// is generated by the autoregressive recursion
/// `zeta_{i+1} = rho zeta_i + sigma sqrt(1 - rho^2) z`, `rho = e^{-gap/l}`.
fn exponential_field_markov_1d<R: Rng + ?Sized>(
    sigma2: f64,
    ell: f64,
    positions: &[Point],
    rng: &mut R,
    out: &mut [f64],
) {
    let m = positions.len();
    if m == 0 {
        return;
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        positions[a][0]
            .partial_cmp(&positions[b][0])
            .unwrap()
            .then(a.cmp(&b))
    });
    let sigma = sigma2.sqrt();
    let mut prev = sigma * rng.sample::<f64, _>(StandardNormal);
    out[order[0]] = prev;
    for w in order.windows(2) {
        let gap = positions[w[1]][0] - positions[w[0]][0];
        let rho = (-gap / ell).exp();
        let innovation = sigma * (1.0 - rho * rho).max(0.0).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        prev = rho * prev + innovation * z;
        out[w[1]] = prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn zero_kernel_gives_zero_matrix_and_values() {
        let positions = pts(&[0.0, 1.0, -2.5]);
        let g = covariance_matrix(&CovKernel::Zero, &positions, Dim::D1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let inc = sample_increment(&CovKernel::Zero, &positions, Dim::D1, 0.1, &mut rng).unwrap();
        assert!(inc.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let positions = pts(&[0.0, 1.0, 4.0]);
        let c = CovKernel::Constant { level: 0.7 };
        let g = covariance_matrix(&c, &positions, Dim::D1).unwrap();
        assert!(g.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let inc = sample_increment(&c, &positions, Dim::D1, 0.25, &mut rng).unwrap();
        let first = inc.values[0];
        assert!(inc.values.iter().all(|&v| v == first));
    }

    #[test]
    fn gaussian_kernel_matrix_example() {
        let g = covariance_matrix(
            &CovKernel::Gaussian { sigma2: 1.0, length_scale: 1.0 },
            &pts(&[0.0, 1.0]),
            Dim::D1,
        )
        .unwrap();
        let e = (-0.5f64).exp();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((g[(0, 1)] - e).abs() < 1e-15);
        assert!((g[(1, 0)] - e).abs() < 1e-15);
    }

    #[test]
    fn hermite_features_reproduce_kernel_exactly() {
        // The truncated feature inner product must equal g(x, y).
        let sigma2 = 0.8;
        let ell = 0.9;
        let kernel = CovKernel::Gaussian { sigma2, length_scale: ell };
        for &(x, y) in &[(0.0, 0.0), (1.3, -2.2), (4.0, 3.5), (-5.0, 5.0)] {
            let max_u = (x / ell).powi(2).max((y / ell).powi(2));
            let n = hermite_truncation(max_u);
            let feat = |p: f64| -> Vec<f64> {
                let w = p / ell;
                let mut t = sigma2.sqrt() * (-0.5 * w * w).exp();
                (0..n)
                    .map(|k| {
                        let cur = t;
                        t *= w / ((k + 1) as f64).sqrt();
                        cur
                    })
                    .collect()
            };
            let fx = feat(x);
            let fy = feat(y);
            let dot: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
            let want = kernel.eval(&[x, 0.0, 0.0], &[y, 0.0, 0.0], Dim::D1);
            assert!(
                (dot - want).abs() < 1e-12,
                "feature expansion off at ({x},{y}): {dot} vs {want}"
            );
        }
    }

    fn empirical_cov_check(kernel: CovKernel, d: Dim, positions: &[Point], seed: u64) {
        let dt = 0.2;
        let n = 20_000;
        let m = positions.len();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut sums = vec![0.0; m];
        let mut prods = vec![0.0; m * m];
        let mut sq = vec![0.0; m * m];
        for _ in 0..n {
            let inc = sample_increment(&kernel, positions, d, dt, &mut rng).unwrap();
            for i in 0..m {
                sums[i] += inc.values[i];
                for j in 0..m {
                    let p = inc.values[i] * inc.values[j];
                    prods[i * m + j] += p;
                    sq[i * m + j] += p * p;
                }
            }
        }
        let g = covariance_matrix(&kernel, positions, d).unwrap();
        for i in 0..m {
            let mean = sums[i] / n as f64;
            let var = prods[i * m + i] / n as f64;
            let se_mean = (var / n as f64).sqrt().max(1e-12);
            assert!(
                mean.abs() < 4.0 * se_mean,
                "mean at {i} = {mean} exceeds 4 SE = {}",
                4.0 * se_mean
            );
            for j in 0..m {
                let est = prods[i * m + j] / n as f64;
                let second = sq[i * m + j] / n as f64;
                let se = ((second - est * est).max(0.0) / n as f64).sqrt().max(1e-12);
                let want = dt * g[(i, j)];
                assert!(
                    (est - want).abs() < 4.0 * se,
                    "cov[{i},{j}] = {est} vs {want}, 4 SE = {}",
                    4.0 * se
                );
            }
        }
    }

    #[test]
    fn gaussian_kernel_empirical_covariance_matches() {
        empirical_cov_check(
            CovKernel::Gaussian { sigma2: 1.0, length_scale: 1.0 },
            Dim::D1,
            &pts(&[-0.5, 0.3, 1.7]),
            11,
        );
    }

    #[test]
    fn exponential_kernel_empirical_covariance_matches() {
        empirical_cov_check(
            CovKernel::Exponential { sigma2: 0.6, length_scale: 0.8 },
            Dim::D1,
            &pts(&[-1.0, 0.1, 0.9]),
            12,
        );
    }

    #[test]
    fn dense_path_empirical_covariance_matches() {
        // d = 2 forces the dense Cholesky route.
        let positions = vec![[0.0, 0.0, 0.0], [0.6, -0.4, 0.0], [-1.0, 1.0, 0.0]];
        empirical_cov_check(
            CovKernel::Gaussian { sigma2: 0.9, length_scale: 1.2 },
            Dim::D2,
            &positions,
            13,
        );
    }

    #[test]
    fn successive_steps_are_uncorrelated() {
        let kernel = CovKernel::Gaussian { sigma2: 1.0, length_scale: 1.0 };
        let positions = pts(&[0.0, 1.0]);
        let dt = 0.1;
        let n = 20_000;
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut cross = [0.0f64; 4];
        let mut cross_sq = [0.0f64; 4];
        let mut prev: Option<Vec<f64>> = None;
        for _ in 0..n {
            let inc = sample_increment(&kernel, &positions, Dim::D1, dt, &mut rng).unwrap();
            if let Some(p) = prev {
                for i in 0..2 {
                    for j in 0..2 {
                        let v = p[i] * inc.values[j];
                        cross[i * 2 + j] += v;
                        cross_sq[i * 2 + j] += v * v;
                    }
                }
            }
            prev = Some(inc.values);
        }
        let n_pairs = (n - 1) as f64;
        for k in 0..4 {
            let est = cross[k] / n_pairs;
            let var = (cross_sq[k] / n_pairs - est * est).max(0.0);
            let se = (var / n_pairs).sqrt();
            assert!(est.abs() < 4.0 * se, "cross-step cov {est} vs 4 SE {}", 4.0 * se);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let kernel = CovKernel::Gaussian { sigma2: 1.0, length_scale: 0.7 };
        let positions = pts(&[0.2, -0.9, 3.1, 0.2001]);
        let draw = || {
            let mut rng = ChaCha12Rng::seed_from_u64(99);
            sample_increment(&kernel, &positions, Dim::D1, 0.05, &mut rng)
                .unwrap()
                .values
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn duplicate_positions_need_jitter_but_succeed() {
        let kernel = CovKernel::Gaussian { sigma2: 1.0, length_scale: 1.0 };
        let positions = pts(&[0.5, 0.5, 1.0]);
        // Rank-deficient covariance: factorization only passes with jitter.
        let g = covariance_matrix(&kernel, &positions, Dim::D1).unwrap();
        assert!(g.cholesky().is_some());
        // The d=2 dense route must also cope.
        let positions2 = vec![[0.5, 0.1, 0.0], [0.5, 0.1, 0.0]];
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let inc = sample_increment(&kernel, &positions2, Dim::D2, 0.1, &mut rng).unwrap();
        assert!((inc.values[0] - inc.values[1]).abs() < 1e-5);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let kernel = CovKernel::Gaussian { sigma2: 1.0, length_scale: 1.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(sample_increment(&kernel, &pts(&[0.0]), Dim::D1, 0.0, &mut rng).is_err());
        assert!(CovKernel::Gaussian { sigma2: -1.0, length_scale: 1.0 }.validate().is_err());
        assert!(CovKernel::Exponential { sigma2: 1.0, length_scale: 0.0 }.validate().is_err());
        assert!(CovKernel::Constant { level: -0.1 }.validate().is_err());
    }

    #[test]
    fn kernel_serde_roundtrip() {
        let k = CovKernel::Gaussian { sigma2: 0.5, length_scale: 1.0 };
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<CovKernel>(&s).unwrap(), k);
        let z: CovKernel = serde_json::from_str(r#"{"kind":"zero"}"#).unwrap();
        assert_eq!(z, CovKernel::Zero);
    }
}
