//! Fitting a hand to a goal contact map: random initialization around the
//! object followed by Adam descent of the transfer energy, best of several
//! restarts.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{sharpen_map, ContactMap, Metric};
use crate::energy::{evaluate, EnergyBreakdown, EnergyError, EnergyWeights, Objective};
use crate::hand::{forward_kinematics, GraspPose, HandModel};
use crate::math::{quaternion_to_axis_angle, Vec3};
use crate::object::ObjectModel;
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("all {0} restarts produced non-finite energies")]
    AllRestartsFailed(usize),
    #[error("invalid transfer config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub restarts: usize,
    pub adam_lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub steps: usize,
    pub seed: u64,
    pub weights: EnergyWeights,
    pub metric: Metric,
    pub checkpoint_every: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            adam_lr: 5e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            steps: 600,
            seed: 0,
            weights: EnergyWeights::default(),
            metric: Metric::Aligned,
            checkpoint_every: 50,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<(), TransferError> {
        if self.restarts == 0 {
            return Err(TransferError::Config("restarts must be at least 1".into()));
        }
        if !(self.adam_lr > 0.0) {
            return Err(TransferError::Config("adam_lr must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(TransferError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub best_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub best_pose: GraspPose,
    pub best_energy: EnergyBreakdown,
    pub best_restart: usize,
    /// Final total energy per restart; `None` marks a failed restart.
    pub all_final_energies: Vec<Option<f64>>,
    /// Best total over all restarts seen so far, at every checkpoint.
    pub trajectory_summary: Vec<Checkpoint>,
}

/// Uniformly distributed rotation, as a unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let q = Quaternion::new(q[0], q[1], q[2], q[3]);
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

/// Random root rotation with the palm placed on the object's enclosing sphere,
/// backing away from the center along the rotated palm-backward direction.
/// Joints start at mid-range.
pub fn init_pose(hand: &HandModel, obj: &ObjectModel, rng: &mut impl Rng) -> GraspPose {
    let rotation = random_rotation(rng);
    place_palm(hand, obj, rotation)
}

/// Root pose that puts the palm frame at `rotation` on the enclosing sphere.
pub fn place_palm(hand: &HandModel, obj: &ObjectModel, rotation: UnitQuaternion<f64>) -> GraspPose {
    let joints = hand.mid_range_joints();
    let rest = forward_kinematics(hand, &GraspPose::new(Vec3::zeros(), Vec3::zeros(), joints.clone()))
        .expect("mid-range pose matches the hand");
    let palm_rel = rest.link_transforms[hand.palm_link];
    let (center, radius) = obj.min_enclosing_sphere();
    let palm_origin = center + rotation * hand.palm_backward_direction.into_inner() * radius;
    let root_rotation = rotation * palm_rel.rotation.inverse();
    let translation = palm_origin - root_rotation * palm_rel.translation.vector;
    GraspPose::new(translation, quaternion_to_axis_angle(&root_rotation), joints)
}

#[derive(Clone, Debug)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, x: &mut [f64], grad: &[f64], cfg: &TransferConfig) {
        let (b1, b2) = cfg.adam_betas;
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            x[i] -= cfg.adam_lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Outcome of one Adam descent.
#[derive(Clone, Debug)]
pub struct RestartRun {
    pub pose: GraspPose,
    pub energy: Option<EnergyBreakdown>,
    /// Total energy at steps `0, every, 2 every, ...` (and the final step).
    pub checkpoints: Vec<f64>,
}

/// Adam descent of the transfer energy from `start`. `goal` is used as given.
pub fn descend(
    hand: &HandModel,
    obj: &ObjectModel,
    goal: &ContactMap,
    start: GraspPose,
    cfg: &TransferConfig,
) -> Result<RestartRun, TransferError> {
    let mut x = start.to_vec();
    let mut hints = None;
    let mut adam = Adam::new(x.len());
    let mut checkpoints = Vec::new();
    for step in 0..=cfg.steps {
        let pose = GraspPose::from_slice(&x);
        let last = step == cfg.steps;
        let objective = Objective::Transfer { goal, metric: cfg.metric, hints: hints.as_deref() };
        let eval = evaluate(hand, obj, &pose, objective, &cfg.weights, !last)?;
        hints = eval.nearest;
        let total = eval.breakdown.total;
        if step % cfg.checkpoint_every == 0 || last {
            checkpoints.push(total);
        }
        let grad = eval.gradient.unwrap_or_default();
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Ok(RestartRun { pose, energy: None, checkpoints });
        }
        if last {
            return Ok(RestartRun { pose, energy: Some(eval.breakdown), checkpoints });
        }
        adam.step(&mut x, &grad, cfg);
    }
    unreachable!("loop returns on its last step")
}

/// Sharpens `goal`, runs `cfg.restarts` independent descents from random
/// initial poses and keeps the restart with the lowest final energy.
pub fn optimize_to_map(
    hand: &HandModel,
    obj: &ObjectModel,
    goal: &ContactMap,
    cfg: &TransferConfig,
) -> Result<TransferResult, TransferError> {
    cfg.validate()?;
    obj.ensure_closed().map_err(EnergyError::from)?;
    goal.check_against(obj).map_err(EnergyError::from)?;
    let target = sharpen_map(goal);
    let runs: Vec<RestartRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, "transfer", r as u64);
            descend(hand, obj, &target, init_pose(hand, obj, &mut rng), cfg)
        })
        .collect::<Result<_, _>>()?;
    collect_runs(runs, cfg)
}

fn collect_runs(runs: Vec<RestartRun>, cfg: &TransferConfig) -> Result<TransferResult, TransferError> {
    let all_final_energies: Vec<Option<f64>> = runs.iter().map(|r| r.energy.map(|e| e.total)).collect();
    let best_restart = all_final_energies
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (i, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(TransferError::AllRestartsFailed(runs.len()))?;

    let length = runs.iter().map(|r| r.checkpoints.len()).max().unwrap_or(0);
    let mut trajectory_summary = Vec::with_capacity(length);
    let mut best = f64::INFINITY;
    for k in 0..length {
        for r in runs.iter().filter(|r| r.energy.is_some()) {
            if let Some(&e) = r.checkpoints.get(k) {
                best = best.min(e);
            }
        }
        let step = (k * cfg.checkpoint_every).min(cfg.steps);
        trajectory_summary.push(Checkpoint { step, best_total: best });
    }
    let run = &runs[best_restart];
    Ok(TransferResult {
        best_pose: run.pose.clone(),
        best_energy: run.energy.expect("best restart succeeded"),
        best_restart,
        all_final_energies,
        trajectory_summary,
    })
}
