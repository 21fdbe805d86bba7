//! Independent numerical oracles for the moment formulas: first moments via
//! the kernel operators, second moments via Feynman–Kac Monte Carlo over
//! independent Brownian pairs carrying the exponential environment weight,
//! and the first conditional-moment field as a mild-form Euler iteration
//! driven by a shared noise realization.
//!
//! Everything here is independent of the particle simulator; agreement
//! between the two is what the verification commands certify. Conditional
//! moments of order n >= 2 satisfy binomial recursions in the same spirit,
//! but their simulation cost explodes with n; only the unconditional n <= 2
//! moments and the n = 1 conditional field are implemented.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::environment::{covariance_matrix, CovKernel};
use crate::error::{Error, Result};
use crate::kernels::{q_bump, q_operator, semigroup_apply, TestFunction};
use crate::occupation::LatticeGrid;
use crate::particle::InitialMeasure;
use crate::space::{Dim, Point};

/// One verified identity: simulator estimate against oracle value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: String,
    pub estimate: f64,
    pub estimate_se: f64,
    pub oracle: f64,
    pub oracle_se: f64,
    pub z_score: f64,
    pub sim_replicates: usize,
    pub oracle_samples: usize,
}

impl MomentReport {
    pub fn new(
        name: impl Into<String>,
        estimate: (f64, f64),
        oracle: (f64, f64),
        sim_replicates: usize,
        oracle_samples: usize,
    ) -> Self {
        let denom = (estimate.1 * estimate.1 + oracle.1 * oracle.1).sqrt();
        let z_score = if denom == 0.0 {
            if estimate.0 == oracle.0 { 0.0 } else { f64::INFINITY }
        } else {
            (estimate.0 - oracle.0) / denom
        };
        MomentReport {
            name: name.into(),
            estimate: estimate.0,
            estimate_se: estimate.1,
            oracle: oracle.0,
            oracle_se: oracle.1,
            z_score,
            sim_replicates,
            oracle_samples,
        }
    }

    pub fn csv_header() -> &'static str {
        "name,estimate,estimate_se,oracle,oracle_se,z_score,sim_replicates,oracle_samples"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.name,
            self.estimate,
            self.estimate_se,
            self.oracle,
            self.oracle_se,
            self.z_score,
            self.sim_replicates,
            self.oracle_samples
        )
    }
}

/// `E[Y_t(phi)] = <mu, Q_t phi>`.
pub fn first_moment_y(mu: &InitialMeasure, phi: &TestFunction, t: f64, d: Dim) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain("first moment needs t >= 0".into()));
    }
    match phi {
        TestFunction::Constant(c) => Ok(c * t * mu.total_mass()),
        _ => mu.integrate(d, |x| q_operator(t, phi, x, d).unwrap_or(f64::NAN)).and_then(|v| {
            if v.is_nan() {
                Err(Error::Numeric("Q_t quadrature failed under the measure".into()))
            } else {
                Ok(v)
            }
        }),
    }
}

/// `E[X_t(phi)] = <mu, P_t phi>`.
pub fn first_moment_x(mu: &InitialMeasure, phi: &TestFunction, t: f64, d: Dim) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain("first moment needs t >= 0".into()));
    }
    match (mu, phi) {
        (_, TestFunction::Constant(c)) => Ok(c * mu.total_mass()),
        (
            InitialMeasure::GaussianDensity { mean, variance, total_mass },
            TestFunction::GaussianBump { center, bandwidth },
        ) => {
            // Gaussian convolution in closed form.
            Ok(total_mass
                * crate::kernels::heat_kernel(t + variance + bandwidth, mean, center, d)?)
        }
        _ => mu
            .integrate(d, |x| semigroup_apply(t, phi, x, d).unwrap_or(f64::NAN))
            .and_then(|v| {
                if v.is_nan() {
                    Err(Error::Numeric("P_t quadrature failed under the measure".into()))
                } else {
                    Ok(v)
                }
            }),
    }
}

/// A pair of independent Brownian paths advanced in lockstep, the state of
/// the Feynman–Kac estimators.
#[derive(Clone, Debug)]
pub struct BmPairPath {
    pub dt: f64,
    pub b: Point,
    pub b_tilde: Point,
}

impl BmPairPath {
    fn advance<R: Rng + ?Sized>(&mut self, d: Dim, rng: &mut R) {
        let s = self.dt.sqrt();
        for axis in 0..d.get() {
            self.b[axis] += s * rng.sample::<f64, _>(StandardNormal);
            self.b_tilde[axis] += s * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// `Q_tau phi(x)` on the fast closed-form paths where available.
fn q_phi(tau: f64, phi: &TestFunction, x: &Point, d: Dim) -> f64 {
    match phi {
        TestFunction::Constant(c) => c * tau,
        TestFunction::GaussianBump { center, bandwidth } => {
            q_bump(tau, *bandwidth, crate::space::dist(x, center, d), d)
        }
        TestFunction::PowerLaw { .. } => q_operator(tau, phi, x, d).unwrap_or(f64::NAN),
    }
}

fn phi_eval(phi: &TestFunction, x: &Point, d: Dim) -> f64 {
    let v = phi.eval(x, d);
    if v.is_finite() { v } else { 0.0 }
}

/// Path functional for the occupation second moment: left-Riemann estimate
/// of `int_0^s [phi(B_r) Q_{s-r} psi(B~_r) + psi(B~_r) Q_{s-r} phi(B_r)]
/// e^{int_0^r g} dr`, symmetrized over the exchangeable pair to make the
/// estimator invariant under swapping `phi` and `psi`.
#[allow(clippy::too_many_arguments)]
fn v_occupation_single_path<R: Rng + ?Sized>(
    phi: &TestFunction,
    psi: &TestFunction,
    s: f64,
    start: (Point, Point),
    kernel: &CovKernel,
    d: Dim,
    dt_fk: f64,
    unit_weight: bool,
    rng: &mut R,
) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let n_steps = (s / dt_fk).ceil().max(1.0) as usize;
    let dt = s / n_steps as f64;
    let mut pair = BmPairPath { dt, b: start.0, b_tilde: start.1 };
    let mut log_weight = 0.0;
    let mut integral = 0.0;
    for k in 0..n_steps {
        let r = k as f64 * dt;
        let tau = s - r;
        let weight = if unit_weight { 1.0 } else { log_weight.exp() };
        let cross = phi_eval(phi, &pair.b, d) * q_phi(tau, psi, &pair.b_tilde, d)
            + phi_eval(psi, &pair.b_tilde, d) * q_phi(tau, phi, &pair.b, d)
            + phi_eval(psi, &pair.b, d) * q_phi(tau, phi, &pair.b_tilde, d)
            + phi_eval(phi, &pair.b_tilde, d) * q_phi(tau, psi, &pair.b, d);
        integral += dt * weight * 0.5 * cross;
        log_weight += dt * kernel.eval(&pair.b, &pair.b_tilde, d);
        pair.advance(d, rng);
    }
    integral
}

/// Path functional for the fixed-time second moment:
/// `e^{int_0^s g} phi(B_s) psi(B~_s)`, symmetrized likewise.
#[allow(clippy::too_many_arguments)]
fn v_terminal_single_path<R: Rng + ?Sized>(
    phi: &TestFunction,
    psi: &TestFunction,
    s: f64,
    start: (Point, Point),
    kernel: &CovKernel,
    d: Dim,
    dt_fk: f64,
    unit_weight: bool,
    rng: &mut R,
) -> f64 {
    let mut pair = BmPairPath { dt: dt_fk, b: start.0, b_tilde: start.1 };
    let mut log_weight = 0.0;
    if s > 0.0 {
        let n_steps = (s / dt_fk).ceil().max(1.0) as usize;
        let dt = s / n_steps as f64;
        pair.dt = dt;
        for _ in 0..n_steps {
            log_weight += dt * kernel.eval(&pair.b, &pair.b_tilde, d);
            pair.advance(d, rng);
        }
    }
    let weight = if unit_weight { 1.0 } else { log_weight.exp() };
    weight
        * 0.5
        * (phi_eval(phi, &pair.b, d) * phi_eval(psi, &pair.b_tilde, d)
            + phi_eval(psi, &pair.b, d) * phi_eval(phi, &pair.b_tilde, d))
}

fn sample_mu_point<R: Rng + ?Sized>(mu: &InitialMeasure, d: Dim, rng: &mut R) -> Point {
    match mu {
        InitialMeasure::Dirac { point } => *point,
        InitialMeasure::WeightedDiracs { atoms } => {
            let total: f64 = atoms.iter().map(|(_, w)| w).sum();
            let mut u = rng.gen::<f64>() * total;
            for (p, w) in atoms {
                if u < *w {
                    return *p;
                }
                u -= w;
            }
            atoms.last().unwrap().0
        }
        InitialMeasure::GaussianDensity { mean, variance, .. } => {
            let sd = variance.sqrt();
            let mut p = *mean;
            for slot in p.iter_mut().take(d.get()) {
                *slot += sd * rng.sample::<f64, _>(StandardNormal);
            }
            p
        }
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy)]
enum MomentKind {
    Occupation,
    Terminal,
}

/// Shared engine for both second moments. The full formula is
/// `E[.] = int int V_t(x, y) mu(dx) mu(dy)
///        + int_0^t ds int mu(dx) int p_{t-s}(x, y) V_s(y, y) dy`,
/// estimated by two Monte Carlo averages: the product term with
/// `(x, y) ~ mu x mu` and one path pair per sample, and the correction term
/// with `s ~ U(0, t)`, `x ~ mu`, `y ~ p_{t-s}(x, .)`.
#[allow(clippy::too_many_arguments)]
fn second_moment<R: Rng + ?Sized>(
    kind: MomentKind,
    mu: &InitialMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &CovKernel,
    d: Dim,
    n_paths: usize,
    dt_fk: f64,
    unit_weight: bool,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if t < 0.0 {
        return Err(Error::Domain("second moment needs t >= 0".into()));
    }
    if n_paths < 2 || dt_fk <= 0.0 {
        return Err(Error::Config("need n_paths >= 2 and dt_fk > 0".into()));
    }
    phi.validate(d)?;
    psi.validate(d)?;
    kernel.validate()?;
    let mass = mu.total_mass();
    let single = |kind, s, start: (Point, Point), rng: &mut R| match kind {
        MomentKind::Occupation => {
            v_occupation_single_path(phi, psi, s, start, kernel, d, dt_fk, unit_weight, rng)
        }
        MomentKind::Terminal => {
            v_terminal_single_path(phi, psi, s, start, kernel, d, dt_fk, unit_weight, rng)
        }
    };

    let n1 = n_paths / 2;
    let n2 = n_paths - n1;

    let mut product_samples = Vec::with_capacity(n1);
    for _ in 0..n1 {
        let x = sample_mu_point(mu, d, rng);
        let y = sample_mu_point(mu, d, rng);
        product_samples.push(mass * mass * single(kind, t, (x, y), rng));
    }
    let (p_mean, p_se) = mean_and_se(&product_samples);

    let mut correction_samples = Vec::with_capacity(n2);
    if t > 0.0 {
        for _ in 0..n2 {
            let s = rng.gen::<f64>() * t;
            let x = sample_mu_point(mu, d, rng);
            let mut y = x;
            let sd = (t - s).sqrt();
            for slot in y.iter_mut().take(d.get()) {
                *slot += sd * rng.sample::<f64, _>(StandardNormal);
            }
            correction_samples.push(t * mass * single(kind, s, (y, y), rng));
        }
    } else {
        correction_samples.push(0.0);
        correction_samples.push(0.0);
    }
    let (c_mean, c_se) = mean_and_se(&correction_samples);

    Ok((p_mean + c_mean, (p_se * p_se + c_se * c_se).sqrt()))
}

/// Feynman–Kac estimate of `E[Y_t(phi) Y_t(psi)]` with standard error.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_y<R: Rng + ?Sized>(
    mu: &InitialMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &CovKernel,
    d: Dim,
    n_paths: usize,
    dt_fk: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    second_moment(MomentKind::Occupation, mu, phi, psi, t, kernel, d, n_paths, dt_fk, false, rng)
}

/// Feynman–Kac estimate of `E[X_t(phi) X_t(psi)]` with standard error.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_x<R: Rng + ?Sized>(
    mu: &InitialMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &CovKernel,
    d: Dim,
    n_paths: usize,
    dt_fk: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    second_moment(MomentKind::Terminal, mu, phi, psi, t, kernel, d, n_paths, dt_fk, false, rng)
}

/// Same estimators with the exponential weight forced to one: the classical
/// environment-free values, sharing the identical path stream so that the
/// zero-kernel runs agree bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_y_unit_weight<R: Rng + ?Sized>(
    mu: &InitialMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &CovKernel,
    d: Dim,
    n_paths: usize,
    dt_fk: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    second_moment(MomentKind::Occupation, mu, phi, psi, t, kernel, d, n_paths, dt_fk, true, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn second_moment_x_unit_weight<R: Rng + ?Sized>(
    mu: &InitialMeasure,
    phi: &TestFunction,
    psi: &TestFunction,
    t: f64,
    kernel: &CovKernel,
    d: Dim,
    n_paths: usize,
    dt_fk: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    second_moment(MomentKind::Terminal, mu, phi, psi, t, kernel, d, n_paths, dt_fk, true, rng)
}

/// First conditional-moment field `V_1(t, .)` on a lattice for one shared
/// noise realization, by the mild-form Euler recursion
/// `V(t + delta) = Q_delta phi + P_delta[ V(t) (1 + dW) ]`,
/// split as `V = Q_t phi + N` so that the deterministic part is exact (and
/// a zero kernel returns exactly `Q_t phi`). The spatial noise is drawn on
/// the same lattice; its correlation resolution is the lattice pitch,
/// reported in the output.
#[derive(Clone, Debug)]
pub struct V1Field {
    pub grid: LatticeGrid,
    pub t: f64,
    pub steps: usize,
    /// Correlation resolution of the discretized noise (= lattice pitch).
    pub noise_resolution: f64,
    pub values: Vec<f64>,
}

pub fn v1_field<R: Rng + ?Sized>(
    phi: &TestFunction,
    kernel: &CovKernel,
    t: f64,
    steps: usize,
    grid: &LatticeGrid,
    rng: &mut R,
) -> Result<V1Field> {
    if t < 0.0 {
        return Err(Error::Domain("V_1 field needs t >= 0".into()));
    }
    let d = grid.d;
    phi.validate(d)?;
    kernel.validate()?;
    let n = grid.len();
    if t == 0.0 || steps == 0 {
        return Ok(V1Field {
            grid: grid.clone(),
            t,
            steps,
            noise_resolution: grid.min_pitch(),
            values: vec![0.0; n],
        });
    }
    let delta = t / steps as f64;
    let pitch = grid.min_pitch();
    if pitch * pitch > delta {
        return Err(Error::Resolution(format!(
            "lattice pitch {pitch:.4} too coarse for time step {delta:.4}: \
             need pitch <= sqrt(delta)"
        )));
    }
    if let TestFunction::GaussianBump { bandwidth, .. } = phi {
        if pitch * pitch > *bandwidth {
            return Err(Error::Resolution(format!(
                "lattice pitch {pitch:.4} too coarse for bump bandwidth {bandwidth:.4}"
            )));
        }
    }

    let nodes: Vec<Point> = (0..n).map(|i| grid.node(i)).collect();
    let vol = grid.cell_volume();
    // Discrete heat propagator over one step.
    let mut propagator = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            propagator[i * n + j] =
                crate::kernels::heat_kernel_r2(delta, crate::space::dist2(&nodes[i], &nodes[j], d), d)
                    * vol;
        }
    }
    // Noise factor on the fixed lattice, computed once.
    let noise_chol = if kernel.is_zero() {
        None
    } else {
        Some(
            covariance_matrix(kernel, &nodes, d)?
                .cholesky()
                .ok_or_else(|| Error::Numeric("noise covariance factorization failed".into()))?,
        )
    };

    let mut stoch = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let sqrt_delta = delta.sqrt();
    for k in 0..steps {
        let t_k = k as f64 * delta;
        // V(t_k) (1 + dW) - Q_{t_k} phi, assembled into scratch.
        if let Some(chol) = &noise_chol {
            let z = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dw = chol.l() * z;
            for i in 0..n {
                let v = q_phi_at(phi, t_k, &nodes[i], d) + stoch[i];
                scratch[i] = stoch[i] + v * sqrt_delta * dw[i];
            }
        } else {
            scratch.copy_from_slice(&stoch);
        }
        // stoch <- P_delta scratch.
        for i in 0..n {
            let row = &propagator[i * n..(i + 1) * n];
            stoch[i] = row.iter().zip(&scratch).map(|(p, s)| p * s).sum();
        }
    }

    let values: Vec<f64> = (0..n)
        .map(|i| q_phi_at(phi, t, &nodes[i], d) + stoch[i])
        .collect();
    Ok(V1Field {
        grid: grid.clone(),
        t,
        steps,
        noise_resolution: pitch,
        values,
    })
}

fn q_phi_at(phi: &TestFunction, tau: f64, x: &Point, d: Dim) -> f64 {
    q_phi(tau, phi, x, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::replicate_rng;
    use crate::space::ORIGIN;

    const D1: Dim = Dim::D1;

    fn delta0() -> InitialMeasure {
        InitialMeasure::Dirac { point: ORIGIN }
    }

    #[test]
    fn first_moment_y_examples() {
        let one = TestFunction::Constant(1.0);
        assert_eq!(first_moment_y(&delta0(), &one, 2.5, D1).unwrap(), 2.5);
        assert_eq!(first_moment_y(&delta0(), &one, 0.0, D1).unwrap(), 0.0);
        let bump = TestFunction::bump(ORIGIN, 0.5);
        let v = first_moment_y(&delta0(), &bump, 1.0, D1).unwrap();
        assert!((v - 0.413_015_440_258_083_6).abs() < 1e-10, "{v}");
    }

    #[test]
    fn first_moment_x_examples() {
        let one = TestFunction::Constant(1.0);
        assert_eq!(first_moment_x(&delta0(), &one, 7.0, D1).unwrap(), 1.0);
        let bump = TestFunction::bump([0.3, 0.0, 0.0], 0.5);
        let v = first_moment_x(&delta0(), &bump, 1.0, D1).unwrap();
        let want = crate::kernels::heat_kernel(1.5, &ORIGIN, &[0.3, 0.0, 0.0], D1).unwrap();
        assert!((v - want).abs() < 1e-14);
        // Gaussian initial measure: closed form against quadrature.
        let mu = InitialMeasure::GaussianDensity { mean: ORIGIN, variance: 0.4, total_mass: 1.5 };
        let closed = first_moment_x(&mu, &bump, 0.7, D1).unwrap();
        let quad = mu
            .integrate(D1, |x| semigroup_apply(0.7, &bump, x, D1).unwrap())
            .unwrap();
        assert!((closed - quad).abs() < 1e-8, "{closed} vs {quad}");
    }

    #[test]
    fn second_moment_x_zero_kernel_matches_classical_value() {
        // E[X_1(1)^2] = 1 + t for a unit Dirac start without environment.
        let one = TestFunction::Constant(1.0);
        let mut rng = replicate_rng(101, 0);
        let (est, se) = second_moment_x(
            &delta0(),
            &one,
            &one,
            1.0,
            &CovKernel::Zero,
            D1,
            20_000,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert!(
            (est - 2.0).abs() < 3.0 * se,
            "E[X_1(1)^2] = {est} +- {se}, want 2"
        );
    }

    #[test]
    fn second_moment_y_zero_kernel_matches_classical_value() {
        // E[Y_1(1)^2] = t^2 + t^3/3 = 4/3.
        let one = TestFunction::Constant(1.0);
        let mut rng = replicate_rng(103, 0);
        let (est, se) = second_moment_y(
            &delta0(),
            &one,
            &one,
            1.0,
            &CovKernel::Zero,
            D1,
            20_000,
            0.01,
            &mut rng,
        )
        .unwrap();
        assert!(
            (est - 4.0 / 3.0).abs() < 3.0 * se.max(1e-4),
            "E[Y_1(1)^2] = {est} +- {se}, want 4/3"
        );
    }

    #[test]
    fn second_moment_constant_kernel_semi_analytic() {
        // c = 0.5, t = 1: the weight is deterministic and the values reduce
        // to exponential-moment quadratures (frozen above at 30 digits).
        let one = TestFunction::Constant(1.0);
        let kernel = CovKernel::Constant { level: 0.5 };
        let mut rng = replicate_rng(107, 0);
        let (est_x, se_x) =
            second_moment_x(&delta0(), &one, &one, 1.0, &kernel, D1, 20_000, 0.01, &mut rng)
                .unwrap();
        assert!(
            (est_x - 2.946_163_812_100_384).abs() < 3.0 * se_x,
            "X: {est_x} +- {se_x}"
        );
        let (est_y, se_y) =
            second_moment_y(&delta0(), &one, &one, 1.0, &kernel, D1, 20_000, 0.01, &mut rng)
                .unwrap();
        assert!(
            (est_y - 1.569_310_496_803_075_5).abs() < 3.0 * se_y,
            "Y: {est_y} +- {se_y}"
        );
    }

    #[test]
    fn zero_kernel_equals_forced_unit_weight_exactly() {
        let bump = TestFunction::bump(ORIGIN, 0.5);
        let one = TestFunction::Constant(1.0);
        for kind in [0, 1] {
            let run = |unit: bool| {
                let mut rng = replicate_rng(111, 7);
                if kind == 0 {
                    if unit {
                        second_moment_y_unit_weight(
                            &delta0(), &bump, &one, 0.8, &CovKernel::Zero, D1, 2_000, 0.02, &mut rng,
                        )
                    } else {
                        second_moment_y(
                            &delta0(), &bump, &one, 0.8, &CovKernel::Zero, D1, 2_000, 0.02, &mut rng,
                        )
                    }
                } else if unit {
                    second_moment_x_unit_weight(
                        &delta0(), &bump, &one, 0.8, &CovKernel::Zero, D1, 2_000, 0.02, &mut rng,
                    )
                } else {
                    second_moment_x(
                        &delta0(), &bump, &one, 0.8, &CovKernel::Zero, D1, 2_000, 0.02, &mut rng,
                    )
                }
            };
            let weighted = run(false).unwrap();
            let unit = run(true).unwrap();
            assert_eq!(weighted, unit, "kind {kind}");
        }
    }

    #[test]
    fn second_moment_symmetric_under_swap() {
        let bump = TestFunction::bump([0.4, 0.0, 0.0], 0.3);
        let one = TestFunction::Constant(0.8);
        let kernel = CovKernel::Gaussian { sigma2: 0.5, length_scale: 1.0 };
        let ab = {
            let mut rng = replicate_rng(113, 0);
            second_moment_y(&delta0(), &bump, &one, 0.6, &kernel, D1, 1_000, 0.02, &mut rng).unwrap()
        };
        let ba = {
            let mut rng = replicate_rng(113, 0);
            second_moment_y(&delta0(), &one, &bump, 0.6, &kernel, D1, 1_000, 0.02, &mut rng).unwrap()
        };
        assert_eq!(ab, ba);
    }

    #[test]
    fn second_moment_monotone_in_constant_level() {
        let one = TestFunction::Constant(1.0);
        let value = |c: f64| {
            let mut rng = replicate_rng(117, 0);
            second_moment_y(
                &delta0(),
                &one,
                &one,
                1.0,
                &CovKernel::Constant { level: c },
                D1,
                4_000,
                0.02,
                &mut rng,
            )
            .unwrap()
            .0
        };
        let v1 = value(0.1);
        let v2 = value(0.4);
        let v3 = value(0.8);
        assert!(v1 <= v2 && v2 <= v3, "not monotone: {v1} {v2} {v3}");
    }

    #[test]
    fn second_moment_t_zero() {
        let one = TestFunction::Constant(1.0);
        let mut rng = replicate_rng(119, 0);
        let (y0, _) = second_moment_y(
            &delta0(), &one, &one, 0.0, &CovKernel::Zero, D1, 100, 0.01, &mut rng,
        )
        .unwrap();
        assert_eq!(y0, 0.0);
        let (x0, se) = second_moment_x(
            &delta0(), &one, &one, 0.0, &CovKernel::Zero, D1, 100, 0.01, &mut rng,
        )
        .unwrap();
        assert_eq!(x0, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn standard_error_shrinks_like_sqrt_n() {
        let one = TestFunction::Constant(1.0);
        let kernel = CovKernel::Constant { level: 0.5 };
        let se_at = |n: usize, stream: u64| {
            let mut rng = replicate_rng(123, stream);
            second_moment_y(&delta0(), &one, &one, 1.0, &kernel, D1, n, 0.02, &mut rng)
                .unwrap()
                .1
        };
        let se_n = se_at(4_000, 0);
        let se_2n = se_at(8_000, 1);
        let ratio = se_n / se_2n;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2,
            "SE ratio {ratio} not ~ sqrt(2)"
        );
    }

    #[test]
    fn v1_field_zero_kernel_is_exact_q() {
        let grid = LatticeGrid::line(-2.0, 2.0, 33).unwrap();
        let bump = TestFunction::bump(ORIGIN, 0.3);
        let mut rng = replicate_rng(131, 0);
        let field = v1_field(&bump, &CovKernel::Zero, 0.5, 25, &grid, &mut rng).unwrap();
        for (i, v) in field.values.iter().enumerate() {
            let x = grid.node(i);
            let want = q_phi(0.5, &bump, &x, D1);
            assert_eq!(*v, want, "node {i}");
        }
    }

    #[test]
    fn v1_field_mean_is_q_phi() {
        let grid = LatticeGrid::line(-1.5, 1.5, 25).unwrap();
        let bump = TestFunction::bump(ORIGIN, 0.3);
        let kernel = CovKernel::Gaussian { sigma2: 0.5, length_scale: 1.0 };
        let reps = 400;
        let mut sums = vec![0.0; grid.len()];
        let mut sq = vec![0.0; grid.len()];
        for rep in 0..reps {
            let mut rng = replicate_rng(137, rep as u64);
            let field = v1_field(&bump, &kernel, 0.4, 25, &grid, &mut rng).unwrap();
            for (i, v) in field.values.iter().enumerate() {
                sums[i] += v;
                sq[i] += v * v;
            }
        }
        let n = reps as f64;
        for i in 0..grid.len() {
            let mean = sums[i] / n;
            let var = (sq[i] / n - mean * mean).max(0.0);
            let se = (var / n).sqrt().max(1e-12);
            let want = q_phi(0.4, &bump, &grid.node(i), D1);
            assert!(
                (mean - want).abs() < 3.5 * se,
                "node {i}: mean {mean} +- {se} vs {want}"
            );
        }
    }

    #[test]
    fn v1_field_t_zero_and_resolution_errors() {
        let grid = LatticeGrid::line(-1.0, 1.0, 9).unwrap();
        let bump = TestFunction::bump(ORIGIN, 0.3);
        let mut rng = replicate_rng(139, 0);
        let field = v1_field(&bump, &CovKernel::Zero, 0.0, 0, &grid, &mut rng).unwrap();
        assert!(field.values.iter().all(|&v| v == 0.0));
        // Pitch 0.25, delta = 0.01 -> pitch^2 > delta: too coarse.
        let err = v1_field(&bump, &CovKernel::Zero, 0.1, 10, &grid, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
        // Narrow bump against a coarse grid.
        let narrow = TestFunction::bump(ORIGIN, 0.01);
        let fine_enough_steps = 4000;
        let err = v1_field(&narrow, &CovKernel::Zero, 1.0, fine_enough_steps, &grid, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
    }

    #[test]
    fn moment_report_z_score() {
        let r = MomentReport::new("test", (1.1, 0.05), (1.0, 0.05), 10, 10);
        assert!((r.z_score - 0.1 / (2.0f64 * 0.0025).sqrt()).abs() < 1e-12);
        let r0 = MomentReport::new("exact", (1.0, 0.0), (1.0, 0.0), 1, 1);
        assert_eq!(r0.z_score, 0.0);
    }
}
