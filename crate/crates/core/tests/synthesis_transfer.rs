mod support;

use grasp_core::contact::sharpen_map;
use grasp_core::energy::{evaluate, Objective};
use grasp_core::rng::substream;
use grasp_core::sampler::{synthesize_grasps, AcceptThresholds, MalaConfig};
use grasp_core::stability::{diversity, evaluate_grasp, StabilityConfig};
use grasp_core::transfer::{init_pose, optimize_to_map, TransferConfig};
use grasp_core::{load_hand_model, load_object, HandModel, Metric, ObjectModel};
use support::assets;

fn gripper_on_sphere() -> (HandModel, ObjectModel) {
    let hand = load_hand_model(assets().join("hands/gripper2.json")).unwrap();
    let obj = load_object(assets().join("objects/sphere.obj"), 1024).unwrap();
    (hand, obj)
}

fn small_config() -> MalaConfig {
    MalaConfig { batch: 12, steps: 600, seed: 21, ..Default::default() }
}

#[test]
fn synthesis_is_reproducible_and_records_recompute() {
    let (hand, obj) = gripper_on_sphere();
    let cfg = small_config();
    let (first, summary) = synthesize_grasps(&hand, &obj, &cfg).unwrap();
    let (second, _) = synthesize_grasps(&hand, &obj, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&first).unwrap(), serde_json::to_string(&second).unwrap());
    assert!(!first.is_empty(), "{summary:?}");
    let th = &cfg.accept_thresholds;
    for rec in &first {
        assert!(rec.energy.dfc_norm <= th.dfc_max && rec.energy.e_pen <= th.pen_max && rec.energy.e_prior <= th.prior_max);
        let objective = Objective::Synthesis { contacts: &rec.region_params };
        let again = evaluate(&hand, &obj, &rec.pose, objective, &cfg.weights, false).unwrap().breakdown;
        assert!((again.total - rec.energy.total).abs() < 1e-9);
        assert!((again.dfc_norm - rec.energy.dfc_norm).abs() < 1e-9);
        assert_eq!(rec.contact_map.len(), obj.sample_count());
        assert_eq!(rec.contact_map.metric, Metric::Aligned);
    }
}

#[test]
fn zero_thresholds_accept_nothing() {
    let (hand, obj) = gripper_on_sphere();
    let zero = AcceptThresholds { dfc_max: 0.0, pen_max: 0.0, prior_max: 0.0, contact_distance_max: 0.0 };
    let cfg = MalaConfig { batch: 4, steps: 100, accept_thresholds: zero, ..small_config() };
    let (records, summary) = synthesize_grasps(&hand, &obj, &cfg).unwrap();
    assert!(records.is_empty());
    assert_eq!(summary.valid, 0);
    assert_eq!(summary.chains, 4);
}

#[test]
fn transfer_to_the_same_hand_beats_random_starts() {
    let (hand, obj) = gripper_on_sphere();
    let (records, _) = synthesize_grasps(&hand, &obj, &small_config()).unwrap();
    let cfg = TransferConfig { restarts: 4, steps: 200, seed: 5, ..Default::default() };
    let mut fitted = Vec::new();
    let mut random = Vec::new();
    for rec in records.iter().take(3) {
        let result = optimize_to_map(&hand, &obj, &rec.contact_map, &cfg).unwrap();
        fitted.push(result.best_energy.e_contact);
        assert_eq!(result.all_final_energies.len(), 4);
        assert!(result.trajectory_summary.windows(2).all(|w| w[1].best_total <= w[0].best_total));

        let goal = sharpen_map(&rec.contact_map);
        let start = init_pose(&hand, &obj, &mut substream(99, "random-start", fitted.len() as u64));
        let objective = Objective::Transfer { goal: &goal, metric: Metric::Aligned, hints: None };
        random.push(evaluate(&hand, &obj, &start, objective, &cfg.weights, false).unwrap().breakdown.e_contact);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&mut fitted) <= median(&mut random), "{fitted:?} vs {random:?}");
}

#[test]
fn synthesized_grasps_report_consistently() {
    let (hand, obj) = gripper_on_sphere();
    let (records, _) = synthesize_grasps(&hand, &obj, &small_config()).unwrap();
    let cfg = StabilityConfig::default();
    let mut poses = Vec::new();
    let mut reports = Vec::new();
    for rec in &records {
        let (pose, report) = evaluate_grasp(&hand, &obj, &rec.pose, &cfg).unwrap();
        assert_eq!(report.passed, report.per_direction.iter().all(|&p| p));
        assert!(report.max_penetration >= 0.0);
        poses.push(pose);
        reports.push(report);
    }
    let stats = diversity(&poses, &reports);
    assert_eq!(stats.sample_count, reports.iter().filter(|r| r.passed).count());
    assert_eq!(stats.per_joint_std.len(), hand.joints.len());
}
