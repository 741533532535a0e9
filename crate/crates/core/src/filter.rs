//! Information-form filters: the per-node ECO-DKF step, the centralized KF and
//! the consensus-gain DKF baseline.
//!
//! A network instant runs in two phases. [`prepare`] predicts and builds the
//! node's message from its own previous belief; once messages are delivered,
//! [`eco_dkf_complete`] (or [`consensus_dkf_complete`]) fuses and corrects.

use rand::Rng;

use crate::certify::{certify, Certificate};
use crate::error::{Error, Result};
use crate::fusion::{fuse_mean, solve_lj, FusionInput, FusionOutcome};
use crate::matkernel::{sym_inverse, vec_add, vec_sub, SymMatrix};
use crate::sysmodel::{sample_gaussian, SensorModel, TargetSystem};
use crate::triggers::TriggerContext;

/// Prior covariance scale, `P₀ = 10·I`.
pub const P0_SCALE: f64 = 10.0;
/// Numerator of the consensus baseline gain.
pub const CONSENSUS_GAIN: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::invalid("belief mean and covariance dimensions differ"));
        }
        Ok(GaussianBelief { mean, cov })
    }

    /// Prior centred on a draw from `N(truth, P₀)`.
    pub fn prior<R: Rng + ?Sized>(truth: &[f64], rng: &mut R) -> Result<Self> {
        let cov = SymMatrix::scaled_identity(truth.len(), P0_SCALE);
        let mean = sample_gaussian(truth, &cov, rng)?;
        Ok(GaussianBelief { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(P⁻¹, P⁻¹·x)`
    pub fn information(&self) -> Result<(SymMatrix, Vec<f64>)> {
        let s = sym_inverse(&self.cov)?;
        let v = s.mul_vec(&self.mean);
        Ok((s, v))
    }

    pub fn squared_error(&self, truth: &[f64]) -> f64 {
        self.mean.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// `(x̂ − x)ᵀ P⁻¹ (x̂ − x)`
    pub fn nees(&self, truth: &[f64]) -> Result<f64> {
        let e = vec_sub(&self.mean, truth);
        Ok(sym_inverse(&self.cov)?.quad_form(&e))
    }
}

/// Broadcast payload `{U, u, S̄, s̄}`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoMessage {
    pub sender: usize,
    /// `HᵀR⁻¹H`
    pub u_mat: SymMatrix,
    /// `HᵀR⁻¹z`
    pub u: Vec<f64>,
    /// `P̄⁻¹`
    pub s_bar: SymMatrix,
    /// `P̄⁻¹·x̄`
    pub s_bar_vec: Vec<f64>,
}

impl InfoMessage {
    /// The sender's predicted mean `S̄⁻¹·s̄`.
    pub fn predicted_mean(&self) -> Result<Vec<f64>> {
        Ok(sym_inverse(&self.s_bar)?.mul_vec(&self.s_bar_vec))
    }
}

/// `x̄ = A·x̂`, `P̄ = A·P̂·Aᵀ + Q`.
pub fn predict(belief: &GaussianBelief, sys: &TargetSystem) -> GaussianBelief {
    let mut cov = sys.a.congruence(&belief.cov);
    cov.axpy(1.0, &sys.q);
    GaussianBelief {
        mean: sys.a.mul_vec(&belief.mean),
        cov,
    }
}

/// Measurement information `(HᵀR⁻¹H, HᵀR⁻¹z)`.
pub fn measurement_information(sensor: &SensorModel, z: &[f64]) -> Result<(SymMatrix, Vec<f64>)> {
    if z.len() != sensor.measurement_dim() {
        return Err(Error::invalid(format!(
            "measurement has dimension {}, sensor {} produces {}",
            z.len(),
            sensor.id,
            sensor.measurement_dim()
        )));
    }
    let r_inv = sensor.r_inverse();
    let u_mat = sensor.h.tr_congruence(&r_inv);
    let u = sensor.h.tr_mul_vec(&r_inv.mul_vec(z));
    Ok((u_mat, u))
}

pub fn make_message(sensor: &SensorModel, z: &[f64], predicted: &GaussianBelief) -> Result<InfoMessage> {
    let (u_mat, u) = measurement_information(sensor, z)?;
    let (s_bar, s_bar_vec) = predicted.information()?;
    Ok(InfoMessage {
        sender: sensor.id,
        u_mat,
        u,
        s_bar,
        s_bar_vec,
    })
}

/// `Y = Σ U_j`, `y = Σ u_j` over the node itself and what it received.
pub fn aggregate_measurements(own: &InfoMessage, received: &[&InfoMessage]) -> (SymMatrix, Vec<f64>) {
    let mut y_mat = own.u_mat.clone();
    let mut y = own.u.clone();
    for m in received {
        y_mat.axpy(1.0, &m.u_mat);
        y = vec_add(&y, &m.u);
    }
    (y_mat, y)
}

/// `P̂ = (S̄ + Y)⁻¹`, `x̂ = x̄ + P̂·(y − Y·x̄)`.
pub fn correct(x_bar: &[f64], s_bar: &SymMatrix, y_mat: &SymMatrix, y: &[f64]) -> Result<GaussianBelief> {
    let cov = sym_inverse(&(s_bar + y_mat))?;
    let innovation = vec_sub(y, &y_mat.mul_vec(x_bar));
    let mean = vec_add(x_bar, &cov.mul_vec(&innovation));
    Ok(GaussianBelief { mean, cov })
}

/// Centralized information filter over every sensor.
pub fn ckf_step(
    belief: &GaussianBelief,
    sys: &TargetSystem,
    sensors: &[SensorModel],
    zs: &[Vec<f64>],
) -> Result<GaussianBelief> {
    if sensors.len() != zs.len() {
        return Err(Error::invalid("one measurement per sensor is required"));
    }
    let predicted = predict(belief, sys);
    let n = belief.dim();
    let mut y_mat = SymMatrix::zeros(n);
    let mut y = vec![0.0; n];
    for (sensor, z) in sensors.iter().zip(zs) {
        let (u_mat, u) = measurement_information(sensor, z)?;
        y_mat.axpy(1.0, &u_mat);
        y = vec_add(&y, &u);
    }
    correct(&predicted.mean, &sym_inverse(&predicted.cov)?, &y_mat, &y)
}

/// A node's prediction and outgoing message for the current instant.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub predicted: GaussianBelief,
    pub message: InfoMessage,
}

pub fn prepare(belief: &GaussianBelief, sys: &TargetSystem, sensor: &SensorModel, z: &[f64]) -> Result<Prepared> {
    let predicted = predict(belief, sys);
    let message = make_message(sensor, z, &predicted)?;
    Ok(Prepared { predicted, message })
}

/// `γ = 10⁻⁴ / (1 + ‖P̂‖_F)`.
pub fn consensus_gain(cov: &SymMatrix) -> f64 {
    CONSENSUS_GAIN / (1.0 + cov.frobenius_norm())
}

/// Local correction plus a consensus pull towards the neighbours' predictions,
/// with the gain taken from the corrected covariance of this instant.
pub fn consensus_dkf_complete(prepared: &Prepared, received: &[&InfoMessage]) -> Result<GaussianBelief> {
    let (y_mat, y) = aggregate_measurements(&prepared.message, received);
    let x_bar = &prepared.predicted.mean;
    let local = correct(x_bar, &prepared.message.s_bar, &y_mat, &y)?;
    if received.is_empty() {
        return Ok(local);
    }
    let mut pull = vec![0.0; x_bar.len()];
    for m in received {
        pull = vec_add(&pull, &vec_sub(&m.predicted_mean()?, x_bar));
    }
    let gamma = consensus_gain(&local.cov);
    let nudge = local.cov.mul_vec(&pull);
    let mean = local.mean.iter().zip(&nudge).map(|(a, b)| a + gamma * b).collect();
    Ok(GaussianBelief {
        mean,
        cov: local.cov,
    })
}

/// One consensus-DKF instant for a node whose neighbours' messages are known.
pub fn consensus_dkf_step(
    belief: &GaussianBelief,
    sys: &TargetSystem,
    sensor: &SensorModel,
    z: &[f64],
    received: &[&InfoMessage],
) -> Result<GaussianBelief> {
    let prepared = prepare(belief, sys, sensor, z)?;
    consensus_dkf_complete(&prepared, received)
}

/// Per-node ECO-DKF state carried between instants.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: usize,
    pub belief: GaussianBelief,
    /// Previous fusion weights keyed by sender id.
    pub lambda_prev: Vec<(usize, f64)>,
    /// Consecutive silent instants.
    pub k_l: usize,
    /// Whether any message arrived at the previous instant.
    pub had_neighbors_prev: bool,
    pub last_cert: Option<Certificate>,
    /// Fused information matrix of the previous instant.
    pub s_star_prev: Option<SymMatrix>,
    /// Fused information matrix at the last instant this node broadcast.
    pub s_at_last_broadcast: Option<SymMatrix>,
}

impl NodeState {
    pub fn new(id: usize, belief: GaussianBelief) -> Self {
        NodeState {
            id,
            belief,
            lambda_prev: vec![(id, 1.0)],
            k_l: 0,
            had_neighbors_prev: true,
            last_cert: None,
            s_star_prev: None,
            s_at_last_broadcast: None,
        }
    }

    pub fn lambda_self(&self) -> f64 {
        self.lambda_prev
            .iter()
            .find(|(id, _)| *id == self.id)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn trigger_context(&self) -> TriggerContext<'_> {
        TriggerContext {
            lambda_self: self.lambda_self(),
            lambda_max: self.lambda_prev.iter().map(|(_, w)| *w).fold(0.0, f64::max),
            had_neighbors_prev: self.had_neighbors_prev,
            k_l: self.k_l,
            s_at_last_broadcast: self.s_at_last_broadcast.as_ref(),
            s_current: self.s_star_prev.as_ref(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EcoStep {
    pub fusion: FusionOutcome,
    /// `‖S* − Σλ*S̄_j‖_F / ‖S*‖_F`
    pub lemma3_residual: f64,
    pub certificate: Option<Certificate>,
    /// No message arrived, so the fusion was the identity.
    pub trivial: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EcoOptions {
    /// Solve the trace relaxation and evaluate the certificate at every fusion.
    pub certify: bool,
}

impl Default for EcoOptions {
    fn default() -> Self {
        EcoOptions { certify: true }
    }
}

/// Fusion, certification and correction for one node, given the messages it
/// received and whether it broadcast at this instant.
pub fn eco_dkf_complete(
    state: &mut NodeState,
    prepared: &Prepared,
    received: &[&InfoMessage],
    broadcast: bool,
    step: usize,
    options: EcoOptions,
) -> Result<EcoStep> {
    let id = state.id;
    let mut inner = || -> Result<EcoStep> {
        let own = &prepared.message;
        let (y_mat, y) = aggregate_measurements(own, received);
        let mut infos = Vec::with_capacity(received.len() + 1);
        infos.push((own.sender, own.s_bar.clone()));
        infos.extend(received.iter().map(|m| (m.sender, m.s_bar.clone())));
        let input = FusionInput::new(infos)?;
        let fusion = solve_lj(&input)?;
        let lemma3_residual = fusion.consensus_residual(&input);

        let vectors: Vec<Vec<f64>> = std::iter::once(own)
            .chain(received.iter().copied())
            .map(|m| m.s_bar_vec.clone())
            .collect();
        let (x_bar, _) = fuse_mean(&fusion, &vectors)?;
        let certificate = if options.certify {
            Some(certify(input.infos(), &fusion.s_star)?)
        } else {
            None
        };
        let belief = correct(&x_bar, &fusion.s_star, &y_mat, &y)?;

        state.belief = belief;
        state.lambda_prev = fusion.ids.iter().copied().zip(fusion.lambda_star.iter().copied()).collect();
        state.had_neighbors_prev = !received.is_empty();
        state.k_l = if broadcast { 0 } else { state.k_l + 1 };
        if broadcast {
            state.s_at_last_broadcast = Some(fusion.s_star.clone());
        }
        state.s_star_prev = Some(fusion.s_star.clone());
        state.last_cert = certificate.clone();
        Ok(EcoStep {
            fusion,
            lemma3_residual,
            certificate,
            trivial: received.is_empty(),
        })
    };
    inner().map_err(|e| e.at_node(id, step))
}

/// One ECO-DKF instant: predict, fuse with `received`, certify, correct.
#[allow(clippy::too_many_arguments)]
pub fn eco_dkf_step(
    state: &mut NodeState,
    sys: &TargetSystem,
    sensor: &SensorModel,
    z: &[f64],
    received: &[&InfoMessage],
    broadcast: bool,
    step: usize,
    options: EcoOptions,
) -> Result<EcoStep> {
    let prepared = prepare(&state.belief, sys, sensor, z).map_err(|e| e.at_node(state.id, step))?;
    eco_dkf_complete(state, &prepared, received, broadcast, step, options)
}

/// Stationary covariance of a single-sensor local KF, by iterating the
/// Riccati recursion until it stops changing.
pub fn riccati_fixed_point(sys: &TargetSystem, sensor: &SensorModel, max_iter: usize) -> Result<SymMatrix> {
    let (u_mat, _) = measurement_information(sensor, &vec![0.0; sensor.measurement_dim()])?;
    let mut p = SymMatrix::scaled_identity(sys.dim(), P0_SCALE);
    for _ in 0..max_iter {
        let mut pred = sys.a.congruence(&p);
        pred.axpy(1.0, &sys.q);
        let next = sym_inverse(&(&sym_inverse(&pred)? + &u_mat))?;
        let change = (&next - &p).frobenius_norm() / next.frobenius_norm();
        p = next;
        if change < 1e-15 {
            break;
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::{cholesky_psd, Matrix};
    use crate::sysmodel::{make_scenario, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn system(a: Matrix, q: f64) -> TargetSystem {
        TargetSystem::new(a, SymMatrix::scaled_identity(2, q)).unwrap()
    }

    fn sensor(id: usize, h: &[Vec<f64>], r: &[f64]) -> SensorModel {
        SensorModel::new(id, Matrix::from_rows(h).unwrap(), SymMatrix::from_diag(r)).unwrap()
    }

    fn belief(mean: &[f64], cov: SymMatrix) -> GaussianBelief {
        GaussianBelief::new(mean.to_vec(), cov).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn mat_close(a: &SymMatrix, b: &SymMatrix, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn predict_examples() {
        let p = predict(&belief(&[1.0, 2.0], SymMatrix::identity(2)), &system(Matrix::identity(2), 1.0));
        assert!(mat_close(&p.cov, &SymMatrix::scaled_identity(2, 2.0), 1e-15));
        assert_eq!(p.mean, vec![1.0, 2.0]);

        let rot = system(Matrix::rotation(std::f64::consts::FRAC_PI_2), 1e-30);
        let p = predict(&belief(&[1.0, 0.0], SymMatrix::identity(2)), &rot);
        assert!(close(&p.mean, &[0.0, 1.0], 1e-15));

        let stretch = system(Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap(), 1.0);
        let p = predict(&belief(&[0.0, 0.0], SymMatrix::identity(2)), &stretch);
        assert!(mat_close(&p.cov, &SymMatrix::from_diag(&[5.0, 2.0]), 1e-15));
    }

    #[test]
    fn message_examples() {
        let s = sensor(0, &[vec![1.0, 0.0]], &[1.0]);
        let m = make_message(&s, &[3.0], &belief(&[0.0, 0.0], SymMatrix::identity(2))).unwrap();
        assert!(mat_close(&m.u_mat, &SymMatrix::from_diag(&[1.0, 0.0]), 1e-15));
        assert_eq!(m.u, vec![3.0, 0.0]);
        assert!(mat_close(&m.s_bar, &SymMatrix::identity(2), 1e-15));
        assert_eq!(m.s_bar_vec, vec![0.0, 0.0]);

        let s = sensor(1, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0]);
        let m = make_message(&s, &[1.0, 1.0], &belief(&[1.0, 1.0], SymMatrix::identity(2))).unwrap();
        assert!(mat_close(&m.u_mat, &SymMatrix::identity(2), 1e-15));
        assert!(close(&m.u, &[1.0, 1.0], 1e-15));
        assert!(close(&m.s_bar_vec, &[1.0, 1.0], 1e-15));

        let s4 = sensor(1, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[4.0, 4.0]);
        let m4 = make_message(&s4, &[1.0, 1.0], &belief(&[1.0, 1.0], SymMatrix::identity(2))).unwrap();
        assert!(mat_close(&m4.u_mat, &m.u_mat.scale(0.25), 1e-15));
        assert!(close(&m4.u, &[0.25, 0.25], 1e-15));
        assert!(make_message(&s, &[1.0], &belief(&[1.0, 1.0], SymMatrix::identity(2))).is_err());
    }

    fn msg(u_mat: &[f64], u: &[f64]) -> InfoMessage {
        InfoMessage {
            sender: 0,
            u_mat: SymMatrix::from_diag(u_mat),
            u: u.to_vec(),
            s_bar: SymMatrix::identity(2),
            s_bar_vec: vec![0.0, 0.0],
        }
    }

    #[test]
    fn aggregation_examples() {
        let own = msg(&[1.0, 0.0], &[3.0, 0.0]);
        let (y_mat, y) = aggregate_measurements(&own, &[]);
        assert_eq!((y_mat, y), (own.u_mat.clone(), own.u.clone()));
        let (y_mat, y) = aggregate_measurements(&own, &[&own.clone()]);
        assert!(mat_close(&y_mat, &SymMatrix::from_diag(&[2.0, 0.0]), 0.0));
        assert_eq!(y, vec![6.0, 0.0]);
        let other = msg(&[0.0, 1.0], &[0.0, 5.0]);
        let (y_mat, y) = aggregate_measurements(&own, &[&other]);
        assert!(mat_close(&y_mat, &SymMatrix::identity(2), 0.0));
        assert_eq!(y, vec![3.0, 5.0]);
    }

    #[test]
    fn correction_examples() {
        let s = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b = correct(&[1.0, -1.0], &s, &SymMatrix::zeros(2), &[0.0, 0.0]).unwrap();
        assert_eq!(b.mean, vec![1.0, -1.0]);
        assert!(mat_close(&b.cov, &sym_inverse(&s).unwrap(), 1e-15));

        let b = correct(&[0.0, 0.0], &SymMatrix::identity(2), &SymMatrix::identity(2), &[2.0, 2.0]).unwrap();
        assert!(mat_close(&b.cov, &SymMatrix::scaled_identity(2, 0.5), 1e-15));
        assert!(close(&b.mean, &[1.0, 1.0], 1e-15));

        let y_mat = SymMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = [0.7, -0.2];
        let b = correct(&x, &s, &y_mat, &y_mat.mul_vec(&x)).unwrap();
        assert!(close(&b.mean, &x, 1e-14));
    }

    #[test]
    fn ckf_examples() {
        let sys = system(Matrix::rotation(0.1), 1e-3);
        let prior = belief(&[1.0, 0.0], SymMatrix::scaled_identity(2, 10.0));
        let s = sensor(0, &[vec![1.0, 0.0]], &[0.5]);
        let z = vec![vec![0.9]];

        // single sensor: plain predict + correct
        let ckf = ckf_step(&prior, &sys, &[s.clone()], &z).unwrap();
        let p = prepare(&prior, &sys, &s, &z[0]).unwrap();
        let local = correct(&p.predicted.mean, &p.message.s_bar, &p.message.u_mat, &p.message.u).unwrap();
        assert!(close(&ckf.mean, &local.mean, 1e-14));
        assert!(mat_close(&ckf.cov, &local.cov, 1e-14));

        // a duplicated sensor equals one sensor with half the noise
        let twice = ckf_step(&prior, &sys, &[s.clone(), s.clone()], &[z[0].clone(), z[0].clone()]).unwrap();
        let half = sensor(0, &[vec![1.0, 0.0]], &[0.25]);
        let once = ckf_step(&prior, &sys, &[half], &z).unwrap();
        assert!(close(&twice.mean, &once.mean, 1e-12));
        assert!(mat_close(&twice.cov, &once.cov, 1e-12));

        // static target, vanishing noise: covariance trace never grows
        let still = system(Matrix::identity(2), 1e-30);
        let both = [s.clone(), sensor(1, &[vec![0.0, 1.0]], &[1.0])];
        let mut b = prior.clone();
        let mut prev = b.cov.trace();
        for _ in 0..50 {
            b = ckf_step(&b, &still, &both, &[vec![1.0], vec![0.0]]).unwrap();
            assert!(b.cov.trace() <= prev + 1e-15);
            prev = b.cov.trace();
        }
    }

    #[test]
    fn consensus_examples() {
        let sys = system(Matrix::rotation(0.1), 1e-3);
        let s = sensor(0, &[vec![1.0, 0.0]], &[0.5]);
        let b = belief(&[1.0, 0.2], SymMatrix::scaled_identity(2, 2.0));
        let p = prepare(&b, &sys, &s, &[0.9]).unwrap();
        let local = correct(&p.predicted.mean, &p.message.s_bar, &p.message.u_mat, &p.message.u).unwrap();
        assert_eq!(consensus_dkf_step(&b, &sys, &s, &[0.9], &[]).unwrap(), local);

        // a neighbour with the same prediction and no measurement information
        let mut twin = p.message.clone();
        twin.sender = 1;
        twin.u_mat = SymMatrix::zeros(2);
        twin.u = vec![0.0, 0.0];
        let c = consensus_dkf_step(&b, &sys, &s, &[0.9], &[&twin]).unwrap();
        assert!(close(&c.mean, &local.mean, 1e-12));

        let g = consensus_gain(&SymMatrix::identity(2));
        assert!((g - 1e-4 / (1.0 + 2f64.sqrt())).abs() < 1e-18);
    }

    fn default_like() -> (TargetSystem, SensorModel) {
        let sys = TargetSystem::orbit(0.1, 10.0, 1e-4).unwrap();
        (sys, sensor(0, &[vec![2.0, 0.0]], &[4.0]))
    }

    #[test]
    fn isolated_step_is_a_local_kf_step() {
        let (sys, s) = default_like();
        // anisotropic, so the relaxation has a unique rank-one optimum
        let b = belief(&[1.0, 0.1], SymMatrix::from_diag(&[3.0, 1.0]));
        let mut state = NodeState::new(0, b.clone());
        let out = eco_dkf_step(&mut state, &sys, &s, &[2.1], &[], true, 0, EcoOptions::default()).unwrap();
        assert!(out.trivial);
        assert_eq!(out.fusion.lambda_star, vec![1.0]);
        let p = prepare(&b, &sys, &s, &[2.1]).unwrap();
        let local = correct(&p.predicted.mean, &p.message.s_bar, &p.message.u_mat, &p.message.u).unwrap();
        assert!(close(&state.belief.mean, &local.mean, 1e-14));
        assert!(mat_close(&state.belief.cov, &local.cov, 1e-14));
        let cert = out.certificate.unwrap();
        assert_eq!(cert.rank, 1);
        assert!(cert.certified);
    }

    #[test]
    fn symmetric_pair_stays_symmetric() {
        let (sys, s) = default_like();
        let b = belief(&[0.9, 0.1], SymMatrix::scaled_identity(2, 3.0));
        let mut nodes = [NodeState::new(0, b.clone()), NodeState::new(1, b)];
        let sensors = [s.clone(), SensorModel::new(1, s.h.clone(), s.r.clone()).unwrap()];
        for step in 0..5 {
            let prepared: Vec<Prepared> = (0..2)
                .map(|i| prepare(&nodes[i].belief, &sys, &sensors[i], &[1.7]).unwrap())
                .collect();
            for i in 0..2 {
                let other = &prepared[1 - i].message;
                eco_dkf_complete(&mut nodes[i], &prepared[i], &[other], true, step, EcoOptions::default())
                    .unwrap();
            }
            assert_eq!(nodes[0].belief, nodes[1].belief);
        }
    }

    #[test]
    fn single_node_converges_to_riccati_fixed_point() {
        // a high-quality sensor; low-quality ones need far more than 500 steps
        let sc = make_scenario(&ScenarioConfig::default(), 1).unwrap();
        let s = sc.sensors.iter().find(|s| s.r.get(0, 0) < 0.1).unwrap().clone();
        let sys = sc.system;
        let fixed = riccati_fixed_point(&sys, &s, 100_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = NodeState::new(0, GaussianBelief::prior(&[1.0, 0.0], &mut rng).unwrap());
        let options = EcoOptions { certify: false };
        for step in 0..500 {
            eco_dkf_step(&mut state, &sys, &s, &[0.0], &[], true, step, options).unwrap();
        }
        let rel = (state.belief.cov.trace() - fixed.trace()).abs() / fixed.trace();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn trigger_bookkeeping() {
        let (sys, s) = default_like();
        let b = belief(&[1.0, 0.0], SymMatrix::identity(2));
        let mut state = NodeState::new(3, b);
        let ctx = state.trigger_context();
        assert_eq!((ctx.lambda_self, ctx.lambda_max, ctx.had_neighbors_prev), (1.0, 1.0, true));
        let options = EcoOptions { certify: false };
        eco_dkf_step(&mut state, &sys, &s, &[2.0], &[], false, 0, options).unwrap();
        eco_dkf_step(&mut state, &sys, &s, &[2.0], &[], false, 1, options).unwrap();
        assert_eq!(state.k_l, 2);
        assert!(!state.had_neighbors_prev);
        assert!(state.s_at_last_broadcast.is_none());
        eco_dkf_step(&mut state, &sys, &s, &[2.0], &[], true, 2, options).unwrap();
        assert_eq!(state.k_l, 0);
        assert_eq!(state.s_at_last_broadcast, state.s_star_prev);
    }

    #[test]
    fn errors_carry_node_and_step() {
        let (sys, s) = default_like();
        let mut state = NodeState::new(4, belief(&[1.0, 0.0], SymMatrix::identity(2)));
        let err = eco_dkf_step(&mut state, &sys, &s, &[1.0, 2.0], &[], true, 7, EcoOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Node { node: 4, step: 7, .. }), "{err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pd() -> impl Strategy<Value = SymMatrix> {
            (0.05f64..5.0, 0.05f64..5.0, 0.0f64..3.2).prop_map(|(a, b, th)| {
                Matrix::rotation(th).congruence(&SymMatrix::from_diag(&[a, b]))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn fused_step_contracts_and_dominates(
                covs in prop::collection::vec(pd(), 1..5),
                means in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 5),
                h in 1.0f64..3.0, r in 0.03f64..5.0, z in -3.0f64..3.0,
            ) {
                let sys = TargetSystem::orbit(0.1, 10.0, 1e-4).unwrap();
                let sensors: Vec<SensorModel> = (0..covs.len())
                    .map(|i| sensor(i, &[vec![h, 0.0]], &[r]))
                    .collect();
                let prepared: Vec<Prepared> = covs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| prepare(&belief(&means[i], c.clone()), &sys, &sensors[i], &[z]).unwrap())
                    .collect();
                let received: Vec<&InfoMessage> = prepared[1..].iter().map(|p| &p.message).collect();
                let mut state = NodeState::new(0, belief(&means[0], covs[0].clone()));
                let out = eco_dkf_complete(&mut state, &prepared[0], &received, true, 0, EcoOptions { certify: false }).unwrap();

                let fused_cov = sym_inverse(&out.fusion.s_star).unwrap();
                prop_assert!(state.belief.cov.trace() <= fused_cov.trace() * (1.0 + 1e-12));
                let best = prepared.iter().map(|p| p.predicted.cov.trace()).fold(f64::INFINITY, f64::min);
                prop_assert!(fused_cov.trace() <= best + 1e-8);
                // correction never inflates: P̄* − P̂* ⪰ 0
                let diff = &fused_cov - &state.belief.cov;
                prop_assert!(cholesky_psd(&diff, 1e-12).is_some());
                let sum: f64 = out.fusion.lambda_star.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                prop_assert!(out.lemma3_residual <= 1e-9);
            }
        }
    }
}
