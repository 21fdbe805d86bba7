//! Discrete-time branching particle approximation of the measure-valued
//! process: per step of length `dt`, every particle of mass `m`
//!
//! 1. moves by an independent Gaussian step of covariance `dt I`,
//! 2. reads the environment `zeta` at its new position (unit-time
//!    covariance `G`),
//! 3. splits into two with probability `clamp((1 + sqrt(dt) zeta)/2, 0, 1)`
//!    or dies, offspring inheriting the parent position.
//!
//! With `dt = m` the branching increment of `X(phi)` has conditional mean
//! `sqrt(dt) m sum phi(x_i) zeta_i` and conditional variance
//! `m^2 sum phi(x_i)^2 (1 - dt zeta_i^2) ~ dt X(phi^2)`, so the two
//! quadratic-variation terms of the martingale problem are matched at first
//! order. The clamp is needed because the Gaussian environment is unbounded;
//! the config guard `|g|_inf sqrt(dt) <= 1/2` keeps its probability
//! exponentially small, and every run reports the observed clamp fraction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::environment::{sample_unit_field, CovKernel};
use crate::error::{Error, Result};
use crate::kernels::TestFunction;
use crate::space::{Dim, Point};

/// Initial finite measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialMeasure {
    /// Unit mass at a point.
    Dirac { point: Point },
    WeightedDiracs { atoms: Vec<(Point, f64)> },
    GaussianDensity { mean: Point, variance: f64, total_mass: f64 },
}

impl InitialMeasure {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialMeasure::Dirac { .. } => Ok(()),
            InitialMeasure::WeightedDiracs { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|(_, w)| !w.is_finite() || *w <= 0.0) {
                    Err(Error::Config("weighted Diracs need positive finite masses".into()))
                } else {
                    Ok(())
                }
            }
            InitialMeasure::GaussianDensity { variance, total_mass, .. } => {
                if *variance > 0.0 && *total_mass > 0.0 && total_mass.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("Gaussian initial measure needs variance > 0, mass > 0".into()))
                }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            InitialMeasure::Dirac { .. } => 1.0,
            InitialMeasure::WeightedDiracs { atoms } => atoms.iter().map(|(_, w)| w).sum(),
            InitialMeasure::GaussianDensity { total_mass, .. } => *total_mass,
        }
    }

    /// Green potential `mu g_d(x) = int g_d(x - y) mu(dy)`; must be finite
    /// at the probe points of any d = 2, 3 density run.
    pub fn green_potential(&self, x: &Point, d: Dim) -> Result<f64> {
        let gd = |y: &Point| -> Result<f64> {
            let diff = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            crate::kernels::green_weight_gd(&diff, d)
        };
        match self {
            InitialMeasure::Dirac { point } => gd(point),
            InitialMeasure::WeightedDiracs { atoms } => {
                let mut acc = 0.0;
                for (p, w) in atoms {
                    acc += w * gd(p)?;
                }
                Ok(acc)
            }
            InitialMeasure::GaussianDensity { .. } => {
                self.integrate(d, |y| gd(y).unwrap_or(f64::INFINITY))
            }
        }
    }

    /// `<mu, f>` by exact summation over atoms or Gauss–Hermite quadrature
    /// for the Gaussian density (20 nodes per axis).
    pub fn integrate<F: Fn(&Point) -> f64>(&self, d: Dim, f: F) -> Result<f64> {
        match self {
            InitialMeasure::Dirac { point } => Ok(f(point)),
            InitialMeasure::WeightedDiracs { atoms } => {
                Ok(atoms.iter().map(|(p, w)| w * f(p)).sum())
            }
            InitialMeasure::GaussianDensity { mean, variance, total_mass } => {
                let (nodes, weights) = gauss_hermite_40();
                let scale = (2.0 * variance).sqrt();
                let dd = d.get();
                let mut acc = 0.0;
                let n = nodes.len();
                let count = n.pow(dd as u32);
                for idx in 0..count {
                    let mut rem = idx;
                    let mut p = *mean;
                    let mut w = 1.0;
                    for axis in 0..dd {
                        let k = rem % n;
                        rem /= n;
                        p[axis] = mean[axis] + scale * nodes[k];
                        w *= weights[k];
                    }
                    acc += w * f(&p);
                }
                // Gauss–Hermite weights integrate against e^{-u^2}/sqrt(pi)^d.
                Ok(total_mass * acc / std::f64::consts::PI.powi(dd as i32).sqrt())
            }
        }
    }

    /// `<mu, phi>` with closed forms where the test-function kind allows:
    /// Gaussian bumps convolve exactly with a Gaussian initial density,
    /// constants integrate to `c * mass`; power laws fall back to
    /// quadrature.
    pub fn integrate_phi(&self, phi: &TestFunction, d: Dim) -> Result<f64> {
        match (self, phi) {
            (_, TestFunction::Constant(c)) => Ok(c * self.total_mass()),
            (
                InitialMeasure::GaussianDensity { mean, variance, total_mass },
                TestFunction::GaussianBump { center, bandwidth },
            ) => Ok(total_mass
                * crate::kernels::heat_kernel(variance + bandwidth, mean, center, d)?),
            _ => self.integrate(d, |p| phi.eval(p, d)),
        }
    }

    /// Materialize the measure as `round(mass/m)` particles of mass `m`.
    pub fn sample_cloud<R: Rng + ?Sized>(
        &self,
        unit_mass: f64,
        d: Dim,
        rng: &mut R,
    ) -> ParticleCloud {
        let mut positions = Vec::new();
        match self {
            InitialMeasure::Dirac { point } => {
                let n = (1.0 / unit_mass).round() as usize;
                positions.resize(n, *point);
            }
            InitialMeasure::WeightedDiracs { atoms } => {
                for (p, w) in atoms {
                    let n = (w / unit_mass).round() as usize;
                    positions.extend(std::iter::repeat(*p).take(n));
                }
            }
            InitialMeasure::GaussianDensity { mean, variance, total_mass } => {
                let n = (total_mass / unit_mass).round() as usize;
                let sd = variance.sqrt();
                for _ in 0..n {
                    let mut p = [0.0; 3];
                    for (axis, slot) in p.iter_mut().enumerate().take(d.get()) {
                        *slot = mean[axis] + sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    positions.push(p);
                }
            }
        }
        ParticleCloud { time: 0.0, unit_mass, positions, d }
    }
}

/// The simulated measure at one time: equally weighted particles.
#[derive(Clone, Debug)]
pub struct ParticleCloud {
    pub time: f64,
    pub unit_mass: f64,
    pub positions: Vec<Point>,
    pub d: Dim,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.unit_mass * self.positions.len() as f64
    }

    /// `X(phi) = m sum_i phi(x_i)`.
    ///
    /// A particle sitting exactly on a power-law singularity contributes 0;
    /// use [`ParticleCloud::integrate_counted`] to observe how often that
    /// tie-break fires.
    pub fn integrate(&self, phi: &TestFunction) -> f64 {
        self.integrate_counted(phi).0
    }

    pub fn integrate_counted(&self, phi: &TestFunction) -> (f64, usize) {
        let mut acc = 0.0;
        let mut singular_hits = 0usize;
        for p in &self.positions {
            let v = phi.eval(p, self.d);
            if v.is_finite() {
                acc += v;
            } else {
                singular_hits += 1;
            }
        }
        (self.unit_mass * acc, singular_hits)
    }

    /// `X(f)` for an arbitrary integrand.
    pub fn integrate_fn<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.unit_mass * self.positions.iter().map(|p| f(p)).sum::<f64>()
    }

    /// Binary snapshot: `u32 d | f64 unit_mass | u64 count | count*d f64
    /// coordinates`, all little-endian.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.d.get() as u32).to_le_bytes())?;
        w.write_all(&self.unit_mass.to_le_bytes())?;
        w.write_all(&(self.positions.len() as u64).to_le_bytes())?;
        for p in &self.positions {
            for c in p.iter().take(self.d.get()) {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<ParticleCloud> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = Dim::new(u32::from_le_bytes(b4) as u8)?;
        r.read_exact(&mut b8)?;
        let unit_mass = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut positions = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = [0.0; 3];
            for slot in p.iter_mut().take(d.get()) {
                r.read_exact(&mut b8)?;
                *slot = f64::from_le_bytes(b8);
            }
            positions.push(p);
        }
        Ok(ParticleCloud { time: 0.0, unit_mass, positions, d })
    }
}

fn default_population_cap() -> usize {
    2_000_000
}

fn default_stride() -> usize {
    1
}

/// Simulation configuration. The branching step equals the particle mass
/// (`dt = unit_mass`); that coupling is what makes the scheme's quadratic
/// variation match the target process.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub d: Dim,
    pub mu: InitialMeasure,
    pub kernel: CovKernel,
    pub unit_mass: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    pub seed: u64,
    #[serde(default = "default_population_cap")]
    pub population_cap: usize,
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.unit_mass
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.mu.validate()?;
        self.kernel.validate()?;
        if !(self.unit_mass > 0.0) {
            return Err(Error::Config("unit_mass must be positive".into()));
        }
        if self.horizon < 0.0 {
            return Err(Error::Config("horizon must be nonnegative".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        let guard = self.kernel.sup_norm() * self.dt().sqrt();
        if guard > 0.5 {
            return Err(Error::Config(format!(
                "clamp guard violated: |g|_inf sqrt(dt) = {guard:.3} > 1/2; decrease unit_mass"
            )));
        }
        if self.horizon > 0.0 && self.steps() == 0 {
            return Err(Error::Config("horizon shorter than one step".into()));
        }
        Ok(())
    }
}

/// Per-step branching statistics.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    /// Count of clamped split probabilities this step.
    pub clamped: usize,
    /// `m sum_i (xi_i - 1)`: the branching martingale increment of the mass.
    pub branch_mass_increment: f64,
}

#[inline]
pub(crate) fn split_probability(dt: f64, zeta: f64) -> f64 {
    (0.5 * (1.0 + dt.sqrt() * zeta)).clamp(0.0, 1.0)
}

/// Advance the cloud by one step. The input cloud is consumed into the
/// post-step cloud; statistics are returned alongside.
pub fn step<R: Rng + ?Sized>(
    mut cloud: ParticleCloud,
    kernel: &CovKernel,
    dt: f64,
    population_cap: usize,
    rng: &mut R,
) -> Result<(ParticleCloud, StepStats)> {
    let d = cloud.d;
    let sqrt_dt = dt.sqrt();

    // 1. Brownian motion.
    for p in &mut cloud.positions {
        for slot in p.iter_mut().take(d.get()) {
            *slot += sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
    }

    // 2. Environment at the new positions (unit-time covariance).
    let mut zeta = vec![0.0; cloud.positions.len()];
    if !kernel.is_zero() {
        sample_unit_field(kernel, &cloud.positions, d, rng, &mut zeta)?;
    }

    // 3. Critical binary branching tilted by the environment.
    let mut stats = StepStats::default();
    let mut offspring: Vec<Point> = Vec::with_capacity(cloud.positions.len() + 16);
    let mut net_children: i64 = 0;
    for (p, &z) in cloud.positions.iter().zip(&zeta) {
        let raw = 0.5 * (1.0 + sqrt_dt * z);
        let prob = raw.clamp(0.0, 1.0);
        if prob != raw {
            stats.clamped += 1;
        }
        if rng.gen::<f64>() < prob {
            offspring.push(*p);
            offspring.push(*p);
            net_children += 1;
        } else {
            net_children -= 1;
        }
    }
    stats.branch_mass_increment = cloud.unit_mass * net_children as f64;
    if offspring.len() > population_cap {
        return Err(Error::Resource(format!(
            "population {} exceeds the cap {population_cap}; increase unit_mass",
            offspring.len()
        )));
    }
    cloud.positions = offspring;
    cloud.time += dt;
    Ok((cloud, stats))
}

/// One simulated trajectory: snapshots at the configured stride (step 0 and
/// the final step always included) plus the per-step branching mass
/// increments and clamp diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub d: Dim,
    pub dt: f64,
    pub unit_mass: f64,
    pub snapshot_stride: usize,
    pub snapshots: Vec<ParticleCloud>,
    pub branch_mass_increments: Vec<f64>,
    pub total_steps: usize,
    pub clamp_fraction: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &ParticleCloud {
        &self.snapshots[0]
    }

    pub fn terminal(&self) -> &ParticleCloud {
        self.snapshots.last().unwrap()
    }

    /// Time spacing between consecutive snapshots.
    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.snapshot_stride as f64
    }

    /// CSV export: one `t,x[,y[,z]]` row per particle per snapshot.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let coords = ["x", "y", "z"];
        write!(w, "t")?;
        for c in coords.iter().take(self.d.get()) {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for cloud in &self.snapshots {
            for p in &cloud.positions {
                write!(w, "{}", cloud.time)?;
                for c in p.iter().take(self.d.get()) {
                    write!(w, ",{c}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// RNG stream for a replicate: one master seed, one ChaCha stream per
/// replicate index. This is the seed-splitting rule used everywhere.
pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

/// Run one trajectory (replicate 0 of the config's seed).
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    run_replicate(config, 0)
}

/// Run the trajectory for a given replicate index.
pub fn run_replicate(config: &SimConfig, replicate: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate);
    let d = config.d;
    let dt = config.dt();
    let mut cloud = config.mu.sample_cloud(config.unit_mass, d, &mut rng);
    if cloud.len() > config.population_cap {
        return Err(Error::Resource(format!(
            "initial population {} exceeds the cap {}",
            cloud.len(),
            config.population_cap
        )));
    }

    let steps = config.steps();
    let mut snapshots = Vec::with_capacity(steps / config.snapshot_stride + 2);
    snapshots.push(cloud.clone());
    let mut branch_mass_increments = Vec::with_capacity(steps);
    let mut clamped = 0usize;
    let mut branch_events = 0usize;

    for k in 0..steps {
        let decisions = cloud.len();
        let (next, stats) = step(cloud, &config.kernel, dt, config.population_cap, &mut rng)?;
        cloud = next;
        branch_events += decisions;
        clamped += stats.clamped;
        branch_mass_increments.push(stats.branch_mass_increment);
        if (k + 1) % config.snapshot_stride == 0 || k + 1 == steps {
            snapshots.push(cloud.clone());
        }
    }

    Ok(Trajectory {
        d,
        dt,
        unit_mass: config.unit_mass,
        snapshot_stride: config.snapshot_stride,
        snapshots,
        branch_mass_increments,
        total_steps: steps,
        clamp_fraction: if branch_events == 0 { 0.0 } else { clamped as f64 / branch_events as f64 },
    })
}

/// Run `n` replicates in parallel and map each trajectory through `f`,
/// returning results ordered by replicate index (deterministic regardless
/// of thread count).
pub fn run_ensemble<T, F>(config: &SimConfig, n_replicates: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Trajectory) -> T + Sync,
{
    use rayon::prelude::*;
    config.validate()?;
    (0..n_replicates as u64)
        .into_par_iter()
        .map(|rep| run_replicate(config, rep).map(|traj| f(&traj)))
        .collect()
}

/// Running martingale `M_t(phi)` reconstructed from a trajectory via the
/// defining identity with left-Riemann drift integral, plus the discrete
/// quadratic-variation estimate `sum (Delta M)^2`.
#[derive(Clone, Debug)]
pub struct MartingaleTracker {
    pub phi: TestFunction,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub qv_estimate: f64,
}

pub fn track_martingale(traj: &Trajectory, phi: &TestFunction) -> Result<MartingaleTracker> {
    if matches!(phi, TestFunction::PowerLaw { .. }) {
        return Err(Error::Unsupported(
            "martingale tracking needs a twice-differentiable test function".into(),
        ));
    }
    let w = traj.snapshot_dt();
    let x0 = traj.initial().integrate(phi);
    let mut drift = 0.0;
    let mut times = Vec::with_capacity(traj.snapshots.len());
    let mut values = Vec::with_capacity(traj.snapshots.len());
    let mut qv = 0.0;
    let mut prev_m = 0.0;
    for (k, cloud) in traj.snapshots.iter().enumerate() {
        let m_t = cloud.integrate(phi) - x0 - drift;
        if k > 0 {
            let dm = m_t - prev_m;
            qv += dm * dm;
        }
        times.push(cloud.time);
        values.push(m_t);
        prev_m = m_t;
        // Left endpoint for the next interval.
        drift += w * cloud.integrate_fn(|p| phi.half_laplacian(p, traj.d).unwrap());
    }
    Ok(MartingaleTracker { phi: phi.clone(), times, values, qv_estimate: qv })
}

/// Gauss–Hermite rule (weight `e^{-u^2}`), computed once by Golub–Welsch
/// from the Jacobi matrix of the Hermite recurrence.
fn gauss_hermite_40() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 40;
        let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let v0 = eig.eigenvectors[(0, i)];
                (node, std::f64::consts::PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs.into_iter().unzip()
    })
}
