//! Deterministic kernels and operators: the Brownian transition density,
//! its semigroup `P_t` and time integral `Q_t`, resolvents `g_alpha` with
//! optional mollification, Green weights, and a randomized verification
//! suite for the kernel inequalities everything downstream leans on.
//!
//! All operations are pure and reentrant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadTol};
use crate::space::{dist, norm, Dim, Point};
use crate::special::{e1, erfc, erfcx, i0_scaled};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Brownian transition density `(2 pi t)^{-d/2} exp(-|y-x|^2 / (2t))`.
pub fn heat_kernel(t: f64, x: &Point, y: &Point, d: Dim) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(heat_kernel_r2(t, crate::space::dist2(x, y, d), d))
}

/// Same, from the squared distance. No domain check.
#[inline]
pub(crate) fn heat_kernel_r2(t: f64, r2: f64, d: Dim) -> f64 {
    (TWO_PI * t).powi(-(d.get() as i32)).sqrt() * (-r2 / (2.0 * t)).exp()
}

/// Symbolic test function with closed-form operator action where possible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// The Gaussian bump `p_h^a`: heat kernel at bandwidth `h` centered at `a`.
    GaussianBump { center: Point, bandwidth: f64 },
    /// Nonnegative constant.
    Constant(f64),
    /// `|a - x|^{-gamma}` with `0 < gamma < d`.
    PowerLaw { center: Point, exponent: f64 },
}

impl TestFunction {
    pub fn bump(center: Point, bandwidth: f64) -> Self {
        TestFunction::GaussianBump { center, bandwidth }
    }

    pub fn validate(&self, d: Dim) -> Result<()> {
        match *self {
            TestFunction::GaussianBump { bandwidth, .. } if bandwidth <= 0.0 => Err(
                Error::Domain(format!("bump bandwidth must be positive, got {bandwidth}")),
            ),
            TestFunction::Constant(c) if c < 0.0 => {
                Err(Error::Domain(format!("constant must be nonnegative, got {c}")))
            }
            TestFunction::PowerLaw { exponent, .. }
                if exponent <= 0.0 || exponent >= d.get() as f64 =>
            {
                Err(Error::Domain(format!(
                    "power-law exponent must lie in (0, {}), got {exponent}",
                    d.get()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise value. The power law evaluates to `+inf` at its center;
    /// measure integration handles that tie-break explicitly.
    pub fn eval(&self, x: &Point, d: Dim) -> f64 {
        match self {
            TestFunction::GaussianBump { center, bandwidth } => {
                heat_kernel_r2(*bandwidth, crate::space::dist2(x, center, d), d)
            }
            TestFunction::Constant(c) => *c,
            TestFunction::PowerLaw { center, exponent } => {
                let r = dist(x, center, d);
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    r.powf(-exponent)
                }
            }
        }
    }

    /// `(Delta/2) phi`, needed by the martingale tracker. Not available for
    /// the power law (not twice differentiable across its singularity).
    pub fn half_laplacian(&self, x: &Point, d: Dim) -> Result<f64> {
        match self {
            TestFunction::GaussianBump { center, bandwidth } => {
                let h = *bandwidth;
                let r2 = crate::space::dist2(x, center, d);
                Ok(heat_kernel_r2(h, r2, d) * (r2 - d.get() as f64 * h) / (2.0 * h * h))
            }
            TestFunction::Constant(_) => Ok(0.0),
            TestFunction::PowerLaw { .. } => Err(Error::Unsupported(
                "power-law test functions are not twice differentiable".into(),
            )),
        }
    }

    fn radial_profile(&self) -> Option<(f64, RadialProfile)> {
        match self {
            TestFunction::PowerLaw { exponent, .. } => Some((*exponent, RadialProfile::Power(*exponent))),
            _ => None,
        }
    }
}

enum RadialProfile {
    Power(f64),
}

impl RadialProfile {
    fn eval(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Power(g) => r.powf(-g),
        }
    }
}

/// Radial weight of the heat kernel: the density of `|Z - a|` at radius `r`
/// when `Z ~ N(x, t I)` and `rho = |x - a|`, so that
/// `P_t[f(|.-a|)](x) = int_0^inf f(r) w_d(r, rho, t) dr`.
pub(crate) fn radial_heat_weight(r: f64, rho: f64, t: f64, d: Dim) -> f64 {
    match d.get() {
        1 => {
            let a = (-(r - rho) * (r - rho) / (2.0 * t)).exp();
            let b = (-(r + rho) * (r + rho) / (2.0 * t)).exp();
            (a + b) / (TWO_PI * t).sqrt()
        }
        2 => {
            let z = r * rho / t;
            (r / t) * (-(r - rho) * (r - rho) / (2.0 * t)).exp() * i0_scaled(z)
        }
        _ => {
            let w = r * rho / t;
            let norm3 = (TWO_PI * t).powi(3).sqrt();
            if w < 1e-4 {
                // sinh(w)/w ~ 1 + w^2/6 around the radial origin
                let sphere = 4.0 * std::f64::consts::PI * r * r;
                sphere / norm3 * (-(r * r + rho * rho) / (2.0 * t)).exp() * (1.0 + w * w / 6.0)
            } else {
                let a = (-(r - rho) * (r - rho) / (2.0 * t)).exp();
                let b = (-(r + rho) * (r + rho) / (2.0 * t)).exp();
                TWO_PI * r * t / rho / norm3 * (a - b)
            }
        }
    }
}

/// `P_t` applied to a radial function `f(|y - a|)` evaluated at distance
/// `rho` from the center. `singular_exponent` declares an `r^{-gamma}`
/// blow-up of `f` at the origin; that part is substituted to a polynomial
/// with `r = v^{1/(d-gamma)}`.
pub(crate) fn radial_semigroup_apply<F: Fn(f64) -> f64>(
    t: f64,
    rho: f64,
    d: Dim,
    f: F,
    singular_exponent: Option<f64>,
    tol: &QuadTol,
) -> Result<f64> {
    let spread = 13.0 * t.sqrt();
    let upper = rho + spread;
    let lower = (rho - spread).max(0.0);

    let mut total = 0.0;
    if lower == 0.0 {
        if let Some(gamma) = singular_exponent {
            let split = (t.sqrt().min(upper)).min(if rho > 0.0 { rho } else { f64::INFINITY });
            let p = d.get() as f64 - gamma;
            debug_assert!(p > 0.0);
            // r = v^{1/p} turns f(r) w(r) dr into a bounded integrand.
            total += integrate(
                |v: f64| {
                    if v <= 0.0 {
                        return 0.0;
                    }
                    let r = v.powf(1.0 / p);
                    f(r) * radial_heat_weight(r, rho, t, d) * r / (p * v)
                },
                0.0,
                split.powf(p),
                tol,
            )?;
            total += integrate(|r| f(r) * radial_heat_weight(r, rho, t, d), split, upper, tol)?;
            return Ok(total);
        }
    }
    total += integrate(|r| f(r) * radial_heat_weight(r, rho, t, d), lower, upper, tol)?;
    Ok(total)
}

/// Heat semigroup `P_t phi(x)`.
///
/// `P_0 phi = phi`; the Gaussian bump uses `P_t p_h^a = p_{t+h}^a`; constants
/// are preserved; power laws go through adaptive radial quadrature.
pub fn semigroup_apply(t: f64, phi: &TestFunction, x: &Point, d: Dim) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("semigroup needs t >= 0, got {t}")));
    }
    phi.validate(d)?;
    if t == 0.0 {
        return Ok(phi.eval(x, d));
    }
    match phi {
        TestFunction::GaussianBump { center, bandwidth } => {
            Ok(heat_kernel_r2(t + bandwidth, crate::space::dist2(x, center, d), d))
        }
        TestFunction::Constant(c) => Ok(*c),
        TestFunction::PowerLaw { center, exponent } => {
            let rho = dist(x, center, d);
            let profile = RadialProfile::Power(*exponent);
            radial_semigroup_apply(
                t,
                rho,
                d,
                |r| profile.eval(r),
                Some(*exponent),
                &QuadTol::default(),
            )
        }
    }
}

/// Time-integrated semigroup `Q_t phi(x) = int_0^t P_s phi(x) ds`.
pub fn q_operator(t: f64, phi: &TestFunction, x: &Point, d: Dim) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("Q_t needs t >= 0, got {t}")));
    }
    phi.validate(d)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    match phi {
        TestFunction::Constant(c) => Ok(c * t),
        TestFunction::GaussianBump { center, bandwidth } => {
            Ok(q_bump(t, *bandwidth, dist(x, center, d), d))
        }
        TestFunction::PowerLaw { center, exponent } => {
            // P_s phi(x) ~ s^{-gamma/2} as s -> 0 when x sits at the center;
            // s = v^p with p = 2/(2-gamma) makes the time integrand bounded.
            let gamma = *exponent;
            let rho = dist(x, center, d);
            let p = 2.0 / (2.0 - gamma.min(1.999));
            let profile = RadialProfile::Power(gamma);
            let tol = QuadTol::default();
            let inner_tol = QuadTol {
                abs_tol: 1e-11,
                rel_tol: 1e-9,
                ..tol
            };
            integrate(
                |v: f64| {
                    if v <= 0.0 {
                        return 0.0;
                    }
                    let s = v.powf(p);
                    let ps = radial_semigroup_apply(
                        s,
                        rho,
                        d,
                        |r| profile.eval(r),
                        Some(gamma),
                        &inner_tol,
                    )
                    .unwrap_or(f64::NAN);
                    ps * p * s / v
                },
                0.0,
                t.powf(1.0 / p),
                &tol,
            )
            .and_then(|v| {
                if v.is_nan() {
                    Err(Error::Numeric("inner radial quadrature failed".into()))
                } else {
                    Ok(v)
                }
            })
        }
    }
}

/// `int_0^s p_u(r) du` for the d-dimensional heat kernel, in closed form.
///
/// d=1 uses the erfc antiderivative, d=2 the exponential integral, d=3 the
/// erfc form; each has a stable `r -> 0` branch.
pub(crate) fn heat_time_integral(s: f64, r: f64, d: Dim) -> f64 {
    debug_assert!(s >= 0.0);
    if s == 0.0 {
        return 0.0;
    }
    match d.get() {
        1 => {
            if r < 1e-300 {
                return (2.0 * s / std::f64::consts::PI).sqrt();
            }
            let a = r * r / 2.0;
            let c = (a / s).sqrt();
            // int_0^s u^{-1/2} e^{-a/u} du = 2 sqrt(a) [e^{-c^2}/c - sqrt(pi) erfc(c)]
            let bracket = (-c * c).exp() * (1.0 / c - SQRT_PI * erfcx(c));
            2.0 * a.sqrt() * bracket / TWO_PI.sqrt()
        }
        2 => {
            if r * r < 1e-280 * s {
                // Degenerates to int (2 pi u)^{-1} du which diverges at u = 0;
                // callers only use differences where the divergence cancels.
                return f64::INFINITY;
            }
            e1(r * r / (2.0 * s)) / TWO_PI
        }
        _ => {
            if r < 1e-9 * s.sqrt() {
                // Limit of erfc(r/sqrt(2s))/(2 pi r) minus the same at smaller s
                // is handled by the caller; the raw integral is
                // (2pi)^{-3/2} * 2/sqrt(s) at r = 0 measured from u = s downward,
                // i.e. int_0^s u^{-3/2} e^{0} du diverges. Use the difference form.
                return f64::INFINITY;
            }
            erfc(r / (2.0 * s).sqrt()) / (TWO_PI * r)
        }
    }
}

/// `Q_t p_h^a(x)` with the `r -> 0` divergences of the pieces cancelled.
pub(crate) fn q_bump(t: f64, h: f64, r: f64, d: Dim) -> f64 {
    match d.get() {
        1 => heat_time_integral(t + h, r, Dim::D1) - heat_time_integral(h, r, Dim::D1),
        2 => {
            if r * r < 1e-12 * h {
                // int_h^{t+h} (2 pi u)^{-1} e^{-r^2/2u} du ~ ln((t+h)/h)/(2 pi)
                ((t + h) / h).ln() / TWO_PI
            } else {
                (e1(r * r / (2.0 * (t + h))) - e1(r * r / (2.0 * h))) / TWO_PI
            }
        }
        _ => {
            if r < 1e-7 * h.sqrt() {
                // erfc(x) = 1 - (2/sqrt(pi)) x + O(x^3), so the difference
                // quotient tends to int_h^{t+h} (2 pi u)^{-3/2} du.
                2.0 * (1.0 / h.sqrt() - 1.0 / (t + h).sqrt()) / (TWO_PI.powi(3)).sqrt()
            } else {
                (erfc(r / (2.0 * (t + h)).sqrt()) - erfc(r / (2.0 * h).sqrt())) / (TWO_PI * r)
            }
        }
    }
}

/// Resolvent specification: rate `alpha`, center, and mollification `eps`.
///
/// `eps = 0` is the unmollified kernel; `alpha > 0` is required in d <= 2
/// whenever the defining integral is used (`alpha = 0` in d <= 2 refers to
/// the conventional Green weights instead).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResolventSpec {
    pub alpha: f64,
    pub center: Point,
    pub eps: f64,
}

impl ResolventSpec {
    pub fn new(alpha: f64, center: Point, eps: f64) -> Result<Self> {
        if alpha < 0.0 || eps < 0.0 {
            return Err(Error::Domain(format!(
                "resolvent needs alpha >= 0 and eps >= 0, got alpha={alpha}, eps={eps}"
            )));
        }
        Ok(ResolventSpec { alpha, center, eps })
    }
}

/// Tail Laplace transform `int_s^inf e^{-alpha u} p_u(r) du` in d = 1,
/// written so every erfc factor is evaluated in scaled form.
fn laplace_tail_d1(alpha: f64, s: f64, r: f64) -> f64 {
    debug_assert!(alpha > 0.0 && s > 0.0);
    let sq2a = (2.0 * alpha).sqrt();
    if r < 1e-300 {
        return erfc((alpha * s).sqrt()) / sq2a;
    }
    let m = r * sq2a;
    let q = r * r / (2.0 * s) + alpha * s;
    let base = r / (2.0 * s).sqrt();
    let shift = (alpha * s).sqrt();
    let cm = base - shift;
    let cp = base + shift;
    let term_plus = (-q).exp() * erfcx(cp);
    let term_minus = if cm <= 0.0 {
        (-m).exp() * erfc(-cm)
    } else {
        2.0 * (-m).exp() - (-q).exp() * erfcx(cm)
    };
    (term_minus + term_plus) / (2.0 * sq2a)
}

/// Tail Laplace transform in d = 3 (also valid at alpha = 0).
fn laplace_tail_d3(alpha: f64, s: f64, r: f64) -> f64 {
    debug_assert!(s > 0.0);
    if r < 1e-8 * s.sqrt() {
        // int_s^inf e^{-alpha u} (2 pi u)^{-3/2} du
        let a_term = 2.0 * (-alpha * s).exp() / s.sqrt();
        let b_term = if alpha > 0.0 {
            2.0 * (std::f64::consts::PI * alpha).sqrt() * erfc((alpha * s).sqrt())
        } else {
            0.0
        };
        return (a_term - b_term) / (TWO_PI.powi(3)).sqrt();
    }
    let m = r * (2.0 * alpha).sqrt();
    let q = r * r / (2.0 * s) + alpha * s;
    let base = r / (2.0 * s).sqrt();
    let shift = (alpha * s).sqrt();
    let cm = base - shift;
    let cp = base + shift;
    let term_plus = (-q).exp() * erfcx(cp);
    let term_minus = if cm <= 0.0 {
        (-m).exp() * erfc(-cm)
    } else {
        2.0 * (-m).exp() - (-q).exp() * erfcx(cm)
    };
    (term_minus - term_plus) / (2.0 * TWO_PI * r)
}

/// Mollified or plain resolvent by adaptive quadrature of the defining
/// Laplace integral, with the `u = log t` substitution taming both ends.
fn resolvent_quadrature(alpha: f64, eps: f64, r: f64, d: Dim) -> Result<f64> {
    debug_assert!(alpha > 0.0 || (d.get() == 3));
    let r2 = r * r;
    // Below t_min the integrand is bounded by p_eps (or killed by the
    // Gaussian factor when eps = 0); above t_max by e^{-alpha t}.
    let t_min = if eps > 0.0 {
        1e-16 * (eps + r2).max(1e-12)
    } else {
        (r2 / 1500.0).max(1e-300)
    };
    let t_max = if alpha > 0.0 { 745.0 / alpha } else { 1e12 * (r2 + eps) };
    if t_max <= t_min {
        return Ok(0.0);
    }
    let tol = QuadTol::default();
    integrate(
        |u: f64| {
            let t = u.exp();
            (-alpha * t).exp() * heat_kernel_r2(t + eps, r2, d) * t
        },
        t_min.ln(),
        t_max.ln(),
        &tol,
    )
}

/// Resolvent `g_alpha^a(y)`, mollified when `spec.eps > 0`.
///
/// Closed forms in d = 1 and d = 3; d = 2 goes through quadrature.
/// `alpha = 0` with `eps = 0` returns the conventional Green weights
/// (1 in d=1, `1 + log^+(1/r)` in d=2, `1/(2 pi r)` in d=3).
pub fn resolvent(spec: &ResolventSpec, y: &Point, d: Dim) -> Result<f64> {
    let r = dist(&spec.center, y, d);
    let alpha = spec.alpha;
    let eps = spec.eps;

    if eps == 0.0 {
        if alpha == 0.0 {
            return match d.get() {
                1 => Ok(1.0),
                2 => {
                    if r == 0.0 {
                        Err(Error::Domain("Green weight singular at the center (d=2)".into()))
                    } else {
                        Ok(1.0 + (1.0 / r).ln().max(0.0))
                    }
                }
                _ => {
                    if r == 0.0 {
                        Err(Error::Domain("Green weight singular at the center (d=3)".into()))
                    } else {
                        Ok(1.0 / (TWO_PI * r))
                    }
                }
            };
        }
        return match d.get() {
            1 => Ok((-(2.0 * alpha).sqrt() * r).exp() / (2.0 * alpha).sqrt()),
            2 => {
                if r == 0.0 {
                    Err(Error::Domain("resolvent singular at the center (d=2)".into()))
                } else {
                    resolvent_quadrature(alpha, 0.0, r, d)
                }
            }
            _ => {
                if r == 0.0 {
                    Err(Error::Domain("resolvent singular at the center (d=3)".into()))
                } else {
                    Ok((-(2.0 * alpha).sqrt() * r).exp() / (TWO_PI * r))
                }
            }
        };
    }

    // Mollified: g_{alpha,eps} = e^{alpha eps} int_eps^inf e^{-alpha u} p_u(r) du.
    match d.get() {
        1 => {
            if alpha <= 0.0 {
                return Err(Error::Domain(
                    "mollified resolvent needs alpha > 0 in d = 1".into(),
                ));
            }
            Ok((alpha * eps).exp() * laplace_tail_d1(alpha, eps, r))
        }
        2 => {
            if alpha <= 0.0 {
                return Err(Error::Domain(
                    "mollified resolvent needs alpha > 0 in d = 2".into(),
                ));
            }
            resolvent_quadrature(alpha, eps, r, d)
        }
        _ => Ok((alpha * eps).exp() * laplace_tail_d3(alpha, eps, r)),
    }
}

/// `P_s g_alpha^a(y)`: the heat semigroup applied to the resolvent. Equal to
/// the mollified resolvent at `eps = s`, which is how it is computed.
pub fn resolvent_semigroup(alpha: f64, s: f64, center: &Point, y: &Point, d: Dim) -> Result<f64> {
    if s == 0.0 {
        return resolvent(&ResolventSpec { alpha, center: *center, eps: 0.0 }, y, d);
    }
    resolvent(&ResolventSpec { alpha, center: *center, eps: s }, y, d)
}

/// Green weight `g_d`: 1 (d=1), `log^+(1/|x|)` (d=2), `|x|^{-1}` (d=3).
pub fn green_weight_gd(x: &Point, d: Dim) -> Result<f64> {
    let r = norm(x, d);
    match d.get() {
        1 => Ok(1.0),
        2 => Ok(if r == 0.0 { f64::INFINITY } else { (1.0 / r).ln().max(0.0) }),
        _ => {
            if r == 0.0 {
                Err(Error::Domain("Green weight g_3 singular at the origin".into()))
            } else {
                Ok(1.0 / r)
            }
        }
    }
}

/// Residual of the mollified-resolvent Laplacian identity
/// `(Delta/2) g_{alpha,eps} = alpha g_{alpha,eps} - p_eps`, with the
/// Laplacian taken by central differences of step `fd_step`.
pub fn mollified_resolvent_identity_residual(
    spec: &ResolventSpec,
    y: &Point,
    d: Dim,
    fd_step: f64,
) -> Result<f64> {
    if spec.eps <= 0.0 {
        return Err(Error::Domain("identity residual needs eps > 0".into()));
    }
    if fd_step <= 0.0 {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    let g0 = resolvent(spec, y, d)?;
    let mut lap = 0.0;
    for axis in 0..d.get() {
        let mut yp = *y;
        let mut ym = *y;
        yp[axis] += fd_step;
        ym[axis] -= fd_step;
        lap += (resolvent(spec, &yp, d)? - 2.0 * g0 + resolvent(spec, &ym, d)?) / (fd_step * fd_step);
    }
    let p_eps = heat_kernel(spec.eps, &spec.center, y, d)?;
    Ok((0.5 * lap - (spec.alpha * g0 - p_eps)).abs())
}

/// One fitted inequality from the kernel bound suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundFit {
    pub name: String,
    pub n_samples: usize,
    /// sup over samples of LHS / (constant-free RHS shape); the fitted constant.
    pub fitted_constant: f64,
    pub finite: bool,
    pub quadrature_failures: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundSuiteReport {
    pub seed: u64,
    pub fits: Vec<BoundFit>,
}

impl BoundSuiteReport {
    pub fn all_finite(&self) -> bool {
        self.fits.iter().all(|f| f.finite)
    }

    pub fn fit(&self, name: &str) -> Option<&BoundFit> {
        self.fits.iter().find(|f| f.name == name)
    }
}

fn sample_rng(seed: u64, bound: u64, sample: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (bound.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    rng.set_stream(sample);
    rng
}

/// Randomized verification of the four kernel inequalities used by the
/// moment and regularity arguments:
///
/// 1. power-law smoothing: `int_0^t ds int p_{t-s}(x,y) |z-y|^{-gamma} dy
///    <= C_gamma t^{1 - gamma/2}` (d >= 2),
/// 2. resolvent spatial Hölder in d = 1,
/// 3. heat-kernel time difference with exponent `delta`,
/// 4. the product bound `p_t(x,v) p_s(x,v) <= (st)^{-d/4} p_{ts/(t+s)}(x,v)`.
///
/// Per-sample RNG streams are derived from `(seed, bound, sample)`, so runs
/// with doubled `n_samples` extend rather than reshuffle the sample set and
/// the fitted constants can be compared for stability.
pub fn bound_check_suite(seed: u64, n_samples: usize) -> Result<BoundSuiteReport> {
    let mut fits = Vec::new();

    // 1. Power-law smoothing by time-quadrature of the radial semigroup.
    // The constant depends on (d, gamma), so each instance fixes those and
    // randomizes (t, x, z); otherwise the sup conflates different constants
    // and never stabilizes.
    for (idx, (d, gamma)) in [(Dim::D2, 0.5), (Dim::D3, 1.0)].into_iter().enumerate() {
        let mut max_ratio: f64 = 0.0;
        let mut failures = 0;
        for j in 0..n_samples {
            let mut rng = sample_rng(seed, 10 + idx as u64, j as u64);
            // The ratio depends on (t, |x - z|) only; sample both across
            // scales so the sup (sitting at x = z) is probed early and the
            // fitted constant stabilizes.
            let t = (rng.gen_range(0.05f64.ln()..2.5f64.ln())).exp();
            let rho = (rng.gen_range(1e-4f64.ln()..4.0f64.ln())).exp();
            let x: Point = [rho, 0.0, 0.0];
            let phi = TestFunction::PowerLaw { center: crate::space::ORIGIN, exponent: gamma };
            match q_operator(t, &phi, &x, d) {
                Ok(lhs) => {
                    let ratio = lhs / t.powf(1.0 - gamma / 2.0);
                    max_ratio = max_ratio.max(ratio);
                }
                Err(_) => failures += 1,
            }
        }
        fits.push(BoundFit {
            name: format!("power_law_smoothing_d{}", d.get()),
            n_samples,
            fitted_constant: max_ratio,
            finite: max_ratio.is_finite(),
            quadrature_failures: failures,
        });
    }

    // 2. Resolvent Hölder continuity in d = 1 (closed forms).
    {
        let mut max_ratio: f64 = 0.0;
        let gamma = 0.5;
        let alpha = 1.0;
        for j in 0..n_samples {
            let mut rng = sample_rng(seed, 2, j as u64);
            let a: Point = [rng.gen_range(-3.0..3.0), 0.0, 0.0];
            let b: Point = [rng.gen_range(-3.0..3.0), 0.0, 0.0];
            let x: Point = [rng.gen_range(-3.0..3.0), 0.0, 0.0];
            if (a[0] - b[0]).abs() < 1e-12 {
                continue;
            }
            let ga = resolvent(&ResolventSpec { alpha, center: a, eps: 0.0 }, &x, Dim::D1)?;
            let gb = resolvent(&ResolventSpec { alpha, center: b, eps: 0.0 }, &x, Dim::D1)?;
            let ratio = (ga - gb).abs() / (a[0] - b[0]).abs().powf(gamma);
            max_ratio = max_ratio.max(ratio);
        }
        fits.push(BoundFit {
            name: "resolvent_holder_d1".into(),
            n_samples,
            fitted_constant: max_ratio,
            finite: max_ratio.is_finite(),
            quadrature_failures: 0,
        });
    }

    // 3. Heat-kernel time difference.
    {
        let mut max_ratio: f64 = 0.0;
        for j in 0..n_samples {
            let mut rng = sample_rng(seed, 3, j as u64);
            let d = Dim::new(rng.gen_range(1..=3)).unwrap();
            let s: f64 = rng.gen_range(0.05..2.0);
            let t: f64 = s + rng.gen_range(0.0..2.0);
            let delta = rng.gen_range(0.0..1.0);
            let x = random_point(&mut rng, d, 4.0 * t.sqrt());
            let pt = heat_kernel(t, &crate::space::ORIGIN, &x, d)?;
            let ps = heat_kernel(s, &crate::space::ORIGIN, &x, d)?;
            let lhs = (pt - ps).abs();
            if lhs == 0.0 {
                continue;
            }
            let rhs = ((t - s) * s.powf(-(d.get() as f64) / 2.0 - 1.0)).powf(delta)
                * (pt.powf(1.0 - delta) + ps.powf(1.0 - delta));
            max_ratio = max_ratio.max(lhs / rhs);
        }
        fits.push(BoundFit {
            name: "heat_time_difference".into(),
            n_samples,
            fitted_constant: max_ratio,
            finite: max_ratio.is_finite(),
            quadrature_failures: 0,
        });
    }

    // 4. Product bound.
    {
        let mut max_ratio: f64 = 0.0;
        for j in 0..n_samples {
            let mut rng = sample_rng(seed, 4, j as u64);
            let d = Dim::new(rng.gen_range(1..=3)).unwrap();
            let s = rng.gen_range(0.05..3.0);
            let t = rng.gen_range(0.05..3.0);
            let x = random_point(&mut rng, d, 3.0);
            let v = random_point(&mut rng, d, 3.0);
            let lhs = heat_kernel(t, &x, &v, d)? * heat_kernel(s, &x, &v, d)?;
            let rhs = (s * t).powf(-(d.get() as f64) / 4.0)
                * heat_kernel(t * s / (t + s), &x, &v, d)?;
            if rhs > 0.0 {
                max_ratio = max_ratio.max(lhs / rhs);
            }
        }
        fits.push(BoundFit {
            name: "sugitani_product".into(),
            n_samples,
            fitted_constant: max_ratio,
            finite: max_ratio.is_finite(),
            quadrature_failures: 0,
        });
    }

    Ok(BoundSuiteReport { seed, fits })
}

fn random_point<R: Rng>(rng: &mut R, d: Dim, radius: f64) -> Point {
    let mut p = [0.0; 3];
    for slot in p.iter_mut().take(d.get()) {
        *slot = rng.gen_range(-radius..radius);
    }
    p
}
