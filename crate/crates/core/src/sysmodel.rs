//! Target dynamics, sensor models and random scenario generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{cholesky_psd, numerical_rank, Cholesky, Matrix, SymMatrix};
use crate::netsim::{generate_topology, Connectivity, Topology};
use crate::rng::{stream, Stream};

pub const MAX_SCENARIO_ATTEMPTS: usize = 1000;
const OBSERVABILITY_RANK_TOL: f64 = 1e-8;

/// `x(k+1) = A·x(k) + w(k)`, `w ~ N(0, Q)`.
#[derive(Clone, Debug)]
pub struct TargetSystem {
    pub a: Matrix,
    pub q: SymMatrix,
    q_chol: Cholesky,
}

impl TargetSystem {
    pub fn new(a: Matrix, q: SymMatrix) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() != q.dim() {
            return Err(Error::invalid("A must be square and match Q"));
        }
        let q_chol = cholesky_psd(&q, 0.0).ok_or(Error::SingularMatrix {
            min_eigenvalue: q.min_eigenvalue(),
        })?;
        Ok(TargetSystem { a, q, q_chol })
    }

    /// Planar rotation by `2π·sample_time/orbit_period` per step.
    pub fn orbit(sample_time: f64, orbit_period: f64, process_noise: f64) -> Result<Self> {
        let angle = 2.0 * std::f64::consts::PI * sample_time / orbit_period;
        Self::new(
            Matrix::rotation(angle),
            SymMatrix::scaled_identity(2, process_noise),
        )
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

impl PartialEq for TargetSystem {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.q == other.q
    }
}

/// `z_i = H_i·x + v_i`, `v_i ~ N(0, R_i)`.
#[derive(Clone, Debug)]
pub struct SensorModel {
    pub id: usize,
    pub h: Matrix,
    pub r: SymMatrix,
    r_chol: Cholesky,
}

impl SensorModel {
    pub fn new(id: usize, h: Matrix, r: SymMatrix) -> Result<Self> {
        if h.rows() == 0 || h.rows() != r.dim() {
            return Err(Error::invalid("H rows must match R and be at least one"));
        }
        let r_chol = cholesky_psd(&r, 0.0).ok_or(Error::SingularMatrix {
            min_eigenvalue: r.min_eigenvalue(),
        })?;
        Ok(SensorModel { id, h, r, r_chol })
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }

    /// `R⁻¹`, through the stored factor.
    pub fn r_inverse(&self) -> SymMatrix {
        self.r_chol.inverse()
    }
}

impl PartialEq for SensorModel {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.h == other.h && self.r == other.r
    }
}

fn gaussian<R: Rng + ?Sized>(chol: &Cholesky, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..chol.dim()).map(|_| rng.sample(StandardNormal)).collect();
    chol.factor().mul_vec(&z)
}

/// Draws `x ~ N(mean, cov)`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], cov: &SymMatrix, rng: &mut R) -> Result<Vec<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::invalid("mean and covariance dimensions differ"));
    }
    let chol = cholesky_psd(cov, 0.0).ok_or(Error::SingularMatrix {
        min_eigenvalue: cov.min_eigenvalue(),
    })?;
    let noise = gaussian(&chol, rng);
    Ok(mean.iter().zip(&noise).map(|(m, w)| m + w).collect())
}

pub fn step_truth<R: Rng + ?Sized>(sys: &TargetSystem, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if x.len() != sys.dim() {
        return Err(Error::invalid(format!(
            "state has dimension {}, system has {}",
            x.len(),
            sys.dim()
        )));
    }
    let w = gaussian(&sys.q_chol, rng);
    Ok(sys.a.mul_vec(x).iter().zip(&w).map(|(a, b)| a + b).collect())
}

pub fn measure<R: Rng + ?Sized>(sensor: &SensorModel, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if x.len() != sensor.state_dim() {
        return Err(Error::invalid(format!(
            "state has dimension {}, sensor {} expects {}",
            x.len(),
            sensor.id,
            sensor.state_dim()
        )));
    }
    let v = gaussian(&sensor.r_chol, rng);
    Ok(sensor.h.mul_vec(x).iter().zip(&v).map(|(a, b)| a + b).collect())
}

fn gram_rank(rows: &[Vec<f64>], n: usize) -> usize {
    let gram = SymMatrix::from_fn(n, |i, j| rows.iter().map(|r| r[i] * r[j]).sum());
    numerical_rank(&gram, OBSERVABILITY_RANK_TOL)
}

fn stacked_rows(sensors: &[SensorModel]) -> Vec<Vec<f64>> {
    sensors
        .iter()
        .flat_map(|s| (0..s.h.rows()).map(move |i| (0..s.h.cols()).map(|j| s.h.get(i, j)).collect()))
        .collect()
}

/// Rank test on the observability matrix `[H; H·A; …; H·A^{n−1}]` of the
/// stacked sensors.
pub fn check_network_observability(sys: &TargetSystem, sensors: &[SensorModel]) -> bool {
    let n = sys.dim();
    if sensors.is_empty() || sensors.iter().any(|s| s.state_dim() != n) {
        return false;
    }
    let h = stacked_rows(sensors);
    let mut rows = Vec::with_capacity(h.len() * n);
    let mut power = Matrix::identity(n);
    for _ in 0..n {
        for r in &h {
            // row of H·A^p is (A^p)ᵀ applied to the row of H
            rows.push(power.tr_mul_vec(r));
        }
        power = power.matmul(&sys.a);
    }
    gram_rank(&rows, n) == n
}

/// Whether the stacked `H` alone has full column rank, i.e. the network
/// sees every state axis directly.
pub fn stacked_h_full_rank(sensors: &[SensorModel]) -> bool {
    let Some(first) = sensors.first() else {
        return false;
    };
    let n = first.state_dim();
    gram_rank(&stacked_rows(sensors), n) == n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Each sensor measures x or y; quality is a fair coin.
    #[serde(rename = "1")]
    One,
    /// Each sensor measures x, y or both; exactly one is high quality.
    #[serde(rename = "2")]
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Both,
}

impl Axis {
    fn components(self) -> &'static [usize] {
        match self {
            Axis::X => &[0],
            Axis::Y => &[1],
            Axis::Both => &[0, 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub nodes: usize,
    pub experiment: ExperimentKind,
    pub connectivity: Connectivity,
    pub horizon: usize,
    pub sample_time: f64,
    pub orbit_period: f64,
    pub process_noise: f64,
    pub initial_truth: Vec<f64>,
    /// Fixes every sensor's axis instead of drawing it.
    pub axes: Option<Vec<Axis>>,
    /// Replaces the geometric base graph with a complete one.
    pub complete_graph: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            nodes: 20,
            experiment: ExperimentKind::One,
            connectivity: Connectivity::MeanDegree(4.0),
            horizon: 200,
            sample_time: 0.1,
            orbit_period: 10.0,
            process_noise: 1e-4,
            initial_truth: vec![1.0, 0.0],
            axes: None,
            complete_graph: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub system: TargetSystem,
    pub sensors: Vec<SensorModel>,
    pub topology: Topology,
    pub horizon: usize,
    pub seed: u64,
    pub initial_truth: Vec<f64>,
}

const H_RANGE: (f64, f64) = (1.0, 3.0);
const R_HIGH_QUALITY: (f64, f64) = (3e-2, 5e-2);
const R_LOW_QUALITY: (f64, f64) = (3.0, 5.0);

fn draw_sensor(id: usize, axis: Axis, high_quality: bool, rng: &mut ChaCha8Rng) -> Result<SensorModel> {
    let comps = axis.components();
    let (lo, hi) = if high_quality { R_HIGH_QUALITY } else { R_LOW_QUALITY };
    let mut h = Matrix::zeros(comps.len(), 2);
    let mut r = Vec::with_capacity(comps.len());
    for (row, &c) in comps.iter().enumerate() {
        h.set(row, c, rng.gen_range(H_RANGE.0..=H_RANGE.1));
        r.push(rng.gen_range(lo..=hi));
    }
    SensorModel::new(id, h, SymMatrix::from_diag(&r))
}

/// Random sensor network, regenerated until it is observable and its stacked
/// `H` has full rank.
pub fn make_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    if cfg.nodes < 2 {
        return Err(Error::invalid("a scenario needs at least two nodes"));
    }
    if cfg.horizon == 0 {
        return Err(Error::invalid("horizon must be at least one step"));
    }
    if cfg.initial_truth.len() != 2 {
        return Err(Error::invalid("initial truth must be a 2-vector"));
    }
    if let Some(axes) = &cfg.axes {
        if axes.len() != cfg.nodes {
            return Err(Error::invalid(format!(
                "{} forced axes for {} nodes",
                axes.len(),
                cfg.nodes
            )));
        }
        if cfg.experiment == ExperimentKind::One && axes.contains(&Axis::Both) {
            return Err(Error::invalid("experiment 1 sensors measure a single axis"));
        }
    }
    let system = TargetSystem::orbit(cfg.sample_time, cfg.orbit_period, cfg.process_noise)?;
    let mut rng = stream(seed, Stream::Scenario);

    for _ in 0..MAX_SCENARIO_ATTEMPTS {
        let high_quality_node = rng.gen_range(0..cfg.nodes);
        let mut sensors = Vec::with_capacity(cfg.nodes);
        for id in 0..cfg.nodes {
            let axis = match &cfg.axes {
                Some(axes) => axes[id],
                None => match cfg.experiment {
                    ExperimentKind::One => [Axis::X, Axis::Y][rng.gen_range(0..2)],
                    ExperimentKind::Two => [Axis::X, Axis::Y, Axis::Both][rng.gen_range(0..3)],
                },
            };
            let high_quality = match cfg.experiment {
                ExperimentKind::One => rng.gen_bool(0.5),
                ExperimentKind::Two => id == high_quality_node,
            };
            sensors.push(draw_sensor(id, axis, high_quality, &mut rng)?);
        }
        if !check_network_observability(&system, &sensors) || !stacked_h_full_rank(&sensors) {
            continue;
        }
        let topology = if cfg.complete_graph {
            Topology::complete(cfg.nodes)?
        } else {
            generate_topology(cfg.nodes, cfg.connectivity, &mut rng)?
        };
        return Ok(Scenario {
            system,
            sensors,
            topology,
            horizon: cfg.horizon,
            seed,
            initial_truth: cfg.initial_truth.clone(),
        });
    }
    Err(Error::ScenarioGeneration {
        attempts: MAX_SCENARIO_ATTEMPTS,
    })
}
