//! Force-closure grasp synthesis with a Metropolis-adjusted Langevin sampler
//! over hand pose and contact-point parameters.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{contact_map, ContactMap, ContactParams, Metric};
use crate::energy::{evaluate, ContactParam, EnergyBreakdown, EnergyError, EnergyWeights, Objective};
use crate::hand::{hand_surface, sample_contact_points, GraspPose, HandModel};
use crate::object::ObjectModel;
use crate::rng::substream;
use crate::transfer::init_pose;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("invalid sampler config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceptThresholds {
    pub dfc_max: f64,
    pub pen_max: f64,
    pub prior_max: f64,
    /// Largest allowed distance between a contact point and the surface (meters).
    pub contact_distance_max: f64,
}

impl Default for AcceptThresholds {
    fn default() -> Self {
        Self { dfc_max: 0.5, pen_max: 1e-4, prior_max: 1e-6, contact_distance_max: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MalaConfig {
    pub step_size: f64,
    pub noise_scale: f64,
    /// Starting temperature; annealed geometrically to `final_temperature`.
    pub temperature: f64,
    pub final_temperature: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub accept_thresholds: AcceptThresholds,
    /// Probability per step of re-drawing one contact's region.
    pub switch_probability: f64,
    /// Meters of root translation per unit of sampler coordinate.
    pub translation_scale: f64,
    pub weights: EnergyWeights,
    pub contact: ContactParams,
}

impl Default for MalaConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            noise_scale: 1.0,
            temperature: 1.0,
            final_temperature: 1e-3,
            steps: 2000,
            batch: 64,
            seed: 0,
            accept_thresholds: AcceptThresholds::default(),
            switch_probability: 0.1,
            translation_scale: 0.01,
            weights: EnergyWeights::default(),
            contact: ContactParams::default(),
        }
    }
}

impl MalaConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.into()));
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if !(self.temperature > 0.0 && self.final_temperature > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(self.translation_scale > 0.0) {
            return bad("translation_scale must be positive");
        }
        Ok(())
    }

    /// Temperature at `step` of the geometric schedule.
    pub fn temperature_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.temperature;
        }
        let frac = step as f64 / (self.steps - 1) as f64;
        self.temperature * (self.final_temperature / self.temperature).powf(frac)
    }
}

/// A point of the chain with its energy, gradient and whatever else the
/// energy function computed alongside (`payload`).
#[derive(Clone, Debug)]
pub struct ChainPoint<P = ()> {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
    pub payload: P,
}

/// One Metropolis-adjusted Langevin step on a generic energy.
///
/// Proposes `x' = x - eta grad E(x) + noise sqrt(2 eta T) xi` and accepts with
/// probability `min(1, exp((E(x) - E(x')) / T) q(x | x') / q(x' | x))`. With
/// `noise == 0` the proposal is deterministic and the q-ratio is taken as 1.
/// `project` is applied to the proposal (e.g. clamping) before evaluation;
/// `energy` returns `None` for invalid points, which are rejected like
/// non-finite ones.
pub fn mala_kernel<R: Rng, P: Clone>(
    current: &ChainPoint<P>,
    step_size: f64,
    noise: f64,
    temperature: f64,
    rng: &mut R,
    project: impl Fn(&mut [f64]),
    energy: impl Fn(&[f64]) -> Option<(f64, Vec<f64>, P)>,
) -> (ChainPoint<P>, bool) {
    let sigma = noise * (2.0 * step_size * temperature).sqrt();
    let mut x: Vec<f64> = current
        .x
        .iter()
        .zip(&current.grad)
        .map(|(x, g)| {
            let xi: f64 = rng.sample(StandardNormal);
            x - step_size * g + sigma * xi
        })
        .collect();
    project(&mut x);
    let u: f64 = rng.random();
    let Some((e, grad, payload)) = energy(&x) else {
        return (current.clone(), false);
    };
    if !e.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return (current.clone(), false);
    }
    let mut log_alpha = (current.energy - e) / temperature;
    if sigma > 0.0 {
        // log q(a | b) = -|a - b + eta grad(b)|^2 / (2 sigma^2) + const
        let log_q = |to: &[f64], from: &[f64], g: &[f64]| -> f64 {
            -to.iter()
                .zip(from)
                .zip(g)
                .map(|((a, b), g)| (a - b + step_size * g).powi(2))
                .sum::<f64>()
                / (2.0 * sigma * sigma)
        };
        log_alpha += log_q(&current.x, &x, &grad) - log_q(&x, &current.x, &current.grad);
    }
    if u.ln() < log_alpha {
        (ChainPoint { x, energy: e, grad, payload }, true)
    } else {
        (current.clone(), false)
    }
}

/// Sampler state: a hand pose and one `(region, u, v)` per contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisState {
    pub pose: GraspPose,
    pub contacts: Vec<ContactParam>,
}

impl SynthesisState {
    /// Sampler coordinates: scaled translation, rotation, joints, then `(u, v)`s.
    fn to_coords(&self, cfg: &MalaConfig) -> Vec<f64> {
        let mut x = self.pose.to_vec();
        for t in &mut x[..3] {
            *t /= cfg.translation_scale;
        }
        for &(_, u, v) in &self.contacts {
            x.push(u);
            x.push(v);
        }
        x
    }

    fn from_coords(x: &[f64], regions: &[usize], dof: usize, cfg: &MalaConfig) -> Self {
        let mut q = x[..dof].to_vec();
        for t in &mut q[..3] {
            *t *= cfg.translation_scale;
        }
        let contacts = regions.iter().enumerate().map(|(i, &r)| (r, x[dof + 2 * i], x[dof + 2 * i + 1])).collect();
        Self { pose: GraspPose::from_slice(&q), contacts }
    }

    fn regions(&self) -> Vec<usize> {
        self.contacts.iter().map(|c| c.0).collect()
    }
}

fn synthesis_energy(
    hand: &HandModel,
    obj: &ObjectModel,
    state: &SynthesisState,
    cfg: &MalaConfig,
) -> Result<(EnergyBreakdown, Vec<f64>), EnergyError> {
    let eval = evaluate(hand, obj, &state.pose, Objective::Synthesis { contacts: &state.contacts }, &cfg.weights, true)?;
    let mut grad = eval.gradient.expect("gradient requested");
    for g in &mut grad[..3] {
        *g *= cfg.translation_scale;
    }
    Ok((eval.breakdown, grad))
}

/// A sampler state with its energy and sampler-coordinate gradient.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub state: SynthesisState,
    pub energy: EnergyBreakdown,
    pub grad: Vec<f64>,
}

impl ChainState {
    pub fn new(hand: &HandModel, obj: &ObjectModel, state: SynthesisState, cfg: &MalaConfig) -> Result<Self, EnergyError> {
        let (energy, grad) = synthesis_energy(hand, obj, &state, cfg)?;
        Ok(Self { state, energy, grad })
    }
}

/// One sampler step: either a Langevin move of all continuous coordinates or,
/// with probability `cfg.switch_probability`, a Metropolis re-draw of one
/// contact's region and `(u, v)`.
pub fn mala_step<R: Rng>(
    hand: &HandModel,
    obj: &ObjectModel,
    current: &ChainState,
    cfg: &MalaConfig,
    temperature: f64,
    rng: &mut R,
) -> (ChainState, bool) {
    let state = &current.state;
    let regions = state.regions();
    let dof = state.pose.dof();

    if rng.random::<f64>() < cfg.switch_probability && !state.contacts.is_empty() {
        let mut proposal = state.clone();
        let k = rng.random_range(0..state.contacts.len());
        let free: Vec<usize> = (0..hand.contact_regions.len())
            .filter(|r| !regions.iter().enumerate().any(|(i, used)| i != k && used == r))
            .collect();
        let region = free[rng.random_range(0..free.len())];
        proposal.contacts[k] = (region, rng.random(), rng.random());
        let u: f64 = rng.random();
        return match ChainState::new(hand, obj, proposal, cfg) {
            Ok(next) if next.energy.total.is_finite()
                && u.ln() < (current.energy.total - next.energy.total) / temperature =>
            {
                (next, true)
            }
            _ => (current.clone(), false),
        };
    }

    let point = ChainPoint { x: state.to_coords(cfg), energy: current.energy.total, grad: current.grad.clone(), payload: current.energy };
    let (next, accepted) = mala_kernel(
        &point,
        cfg.step_size,
        cfg.noise_scale,
        temperature,
        rng,
        |x| {
            for c in &mut x[dof..] {
                *c = c.clamp(0.0, 1.0);
            }
        },
        |x| {
            let s = SynthesisState::from_coords(x, &regions, dof, cfg);
            synthesis_energy(hand, obj, &s, cfg).ok().map(|(e, g)| (e.total, g, e))
        },
    );
    if !accepted {
        return (current.clone(), false);
    }
    let state = SynthesisState::from_coords(&next.x, &regions, dof, cfg);
    (ChainState { state, energy: next.payload, grad: next.grad }, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub hand: String,
    pub object: String,
    pub pose: GraspPose,
    pub region_params: Vec<ContactParam>,
    pub energy: EnergyBreakdown,
    pub contact_map: ContactMap,
    pub seed: u64,
    pub chain: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub chains: usize,
    pub valid: usize,
    pub acceptance_rate: f64,
    /// Why chains were rejected: counts of threshold violations.
    pub rejected_dfc: usize,
    pub rejected_pen: usize,
    pub rejected_prior: usize,
    pub rejected_distance: usize,
}

#[derive(Clone, Debug)]
pub struct ChainResult {
    pub state: SynthesisState,
    pub energy: EnergyBreakdown,
    pub accepted_steps: usize,
}

/// Random initial sampler state: the transfer initialization for the pose and
/// distinct random regions with uniform `(u, v)` for the contacts.
pub fn init_state<R: Rng>(hand: &HandModel, obj: &ObjectModel, rng: &mut R) -> SynthesisState {
    let pose = init_pose(hand, obj, rng);
    let n = hand.contact_count.min(hand.contact_regions.len());
    let regions = sample_indices(rng, hand.contact_regions.len(), n).into_vec();
    let contacts = regions.into_iter().map(|r| (r, rng.random(), rng.random())).collect();
    SynthesisState { pose, contacts }
}

pub fn run_chain(hand: &HandModel, obj: &ObjectModel, cfg: &MalaConfig, chain: usize) -> Result<ChainResult, SamplerError> {
    let mut rng = substream(cfg.seed, "mala", chain as u64);
    let mut current = ChainState::new(hand, obj, init_state(hand, obj, &mut rng), cfg)?;
    let mut accepted_steps = 0;
    for step in 0..cfg.steps {
        let (next, accepted) = mala_step(hand, obj, &current, cfg, cfg.temperature_at(step), &mut rng);
        current = next;
        accepted_steps += accepted as usize;
    }
    Ok(ChainResult { state: current.state, energy: current.energy, accepted_steps })
}

/// Largest distance from a contact point to the object surface.
pub fn max_contact_distance(hand: &HandModel, obj: &ObjectModel, state: &SynthesisState) -> Result<f64, EnergyError> {
    let sdf = obj.sdf()?;
    let points = sample_contact_points(hand, &state.pose, &state.contacts)?;
    Ok(points.iter().map(|p| sdf.signed_distance(p).abs()).fold(0.0, f64::max))
}

/// Runs `cfg.batch` independent chains and keeps final states within the
/// acceptance thresholds, each with its aligned contact map.
pub fn synthesize_grasps(
    hand: &HandModel,
    obj: &ObjectModel,
    cfg: &MalaConfig,
) -> Result<(Vec<GraspRecord>, SynthesisSummary), SamplerError> {
    cfg.validate()?;
    obj.ensure_closed().map_err(EnergyError::from)?;
    let chains: Vec<ChainResult> =
        (0..cfg.batch).into_par_iter().map(|c| run_chain(hand, obj, cfg, c)).collect::<Result<_, _>>()?;

    let th = &cfg.accept_thresholds;
    let mut summary = SynthesisSummary { chains: cfg.batch, ..Default::default() };
    let mut records = Vec::new();
    let mut accepted = 0;
    for (chain, result) in chains.into_iter().enumerate() {
        accepted += result.accepted_steps;
        let e = &result.energy;
        let dist = max_contact_distance(hand, obj, &result.state)?;
        let checks = [
            (e.dfc_norm <= th.dfc_max, &mut summary.rejected_dfc),
            (e.e_pen <= th.pen_max, &mut summary.rejected_pen),
            (e.e_prior <= th.prior_max, &mut summary.rejected_prior),
            (dist <= th.contact_distance_max, &mut summary.rejected_distance),
        ];
        let mut valid = true;
        for (ok, counter) in checks {
            if !ok {
                *counter += 1;
                valid = false;
            }
        }
        if !valid {
            continue;
        }
        let surface = hand_surface(hand, &result.state.pose).map_err(EnergyError::from)?;
        let map = contact_map(obj, &surface, Metric::Aligned, &cfg.contact).map_err(EnergyError::from)?;
        records.push(GraspRecord {
            hand: hand.name.clone(),
            object: obj.name.clone(),
            pose: result.state.pose,
            region_params: result.state.contacts,
            energy: result.energy,
            contact_map: map,
            seed: cfg.seed,
            chain,
        });
    }
    summary.valid = records.len();
    summary.acceptance_rate = accepted as f64 / (cfg.batch * cfg.steps).max(1) as f64;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Option<(f64, Vec<f64>, ())> {
        Some((x.iter().map(|v| v * v / 2.0).sum(), x.to_vec(), ()))
    }

    #[test]
    fn noiseless_downhill_proposal_is_accepted() {
        let mut rng = substream(0, "mala-test", 0);
        let start = ChainPoint { x: vec![1.0, -2.0], energy: 2.5, grad: vec![1.0, -2.0], payload: () };
        let (next, accepted) = mala_kernel(&start, 0.1, 0.0, 1.0, &mut rng, |_| {}, quadratic);
        assert!(accepted);
        assert!(next.energy < start.energy);
    }

    #[test]
    fn non_finite_proposal_is_rejected() {
        let mut rng = substream(0, "mala-test", 1);
        let start = ChainPoint { x: vec![1.0], energy: 0.5, grad: vec![1.0], payload: () };
        let (next, accepted) = mala_kernel(&start, 0.1, 1.0, 1.0, &mut rng, |_| {}, |_| Some((f64::NAN, vec![0.0], ())));
        assert!(!accepted);
        assert_eq!(next.x, start.x);
    }

    #[test]
    fn temperature_schedule_endpoints() {
        let cfg = MalaConfig::default();
        assert_eq!(cfg.temperature_at(0), 1.0);
        assert!((cfg.temperature_at(cfg.steps - 1) - 1e-3).abs() < 1e-15);
    }
}
