//! Analytic energy gradients against central differences on random poses
//! that penetrate the object and push joints past their limits.

mod support;

use grasp_core::contact::{contact_map, sharpen_map};
use grasp_core::hand::hand_surface;
use grasp_core::rng::substream;
use grasp_core::{load_hand_model, load_object, Metric};
use support::{assets, gradient_error, random_contacts, random_pose, term_weights};

// The contact energy takes a minimum over hand samples and has kinks where
// the minimizer switches; a small step keeps most differences off them.
const H: f64 = 1e-6;

#[test]
fn energy_gradients_match_central_differences() {
    let obj = load_object(assets().join("objects/box.obj"), 512).unwrap();
    for name in ["gripper2", "barrett3", "robotiq3", "allegro4", "shadow5"] {
        let hand = load_hand_model(assets().join(format!("hands/{name}.json"))).unwrap();
        let mut rng = substream(11, name, 0);
        let goal_pose = random_pose(&hand, &obj, &mut rng);
        let surface = hand_surface(&hand, &goal_pose).unwrap();
        let goal = sharpen_map(&contact_map(&obj, &surface, Metric::Aligned, &Default::default()).unwrap());
        for _ in 0..2 {
            let pose = random_pose(&hand, &obj, &mut rng);
            let contacts = random_contacts(&hand, 3, &mut rng);
            let cases = [
                ("dfc", Some(&contacts[..]), term_weights(1.0, 0.0, 0.0, 0.0)),
                ("pen", Some(&contacts[..]), term_weights(0.0, 1.0, 0.0, 0.0)),
                ("prior", Some(&contacts[..]), term_weights(0.0, 0.0, 1.0, 0.0)),
                ("contact", None, term_weights(0.0, 0.0, 0.0, 1.0)),
            ];
            for (term, c, w) in cases {
                let err = gradient_error(&hand, &obj, &pose, c, &goal, &w, H);
                assert!(err < 1e-3, "{name} {term}: relative error {err:.2e}");
            }
        }
    }
}
