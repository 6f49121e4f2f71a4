//! Regenerates the shipped hand and object assets under `assets/`.
//!
//! ```text
//! cargo run -p grasp-cli --example gen_assets -- assets
//! ```
//!
//! Every hand uses the same palm frame convention: origin at the center of the
//! palm's front face, `+z` pointing out of the palm (the approach direction) and
//! `-z` as the palm-backward direction. Dexterous hands extend their fingers
//! along `+y`; grippers extend them along `+z`.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::Result;
use grasp_core::hand::{FrameSpec, HandFile, JointFileSpec, LinkSpec, PrimitiveKind, PrimitiveSpec, RegionFileSpec};
use grasp_core::math::{matrix_to_rpy, Mat3, Vec3};
use grasp_core::object::mesh::{box_mesh, cylinder, icosphere, revolve, rotated, torus, Mesh};
use nalgebra::Rotation3;

#[derive(Clone, Copy)]
enum Section {
    /// `(width along local x, thickness along local y)`
    Box(f64, f64),
    Capsule(f64),
}

struct Segment {
    length: f64,
    limits: [f64; 2],
    /// Whether the pad (local `-y` face) becomes a contact region.
    pad: bool,
}

struct Finger {
    name: &'static str,
    base: [f64; 3],
    /// Direction the straight finger extends in, palm frame.
    extension: Vec3,
    /// Direction the pad faces, palm frame.
    closing: Vec3,
    section: Section,
    /// Extra joints at the base before flexion: `(local axis, limits)`.
    base_joints: Vec<([f64; 3], [f64; 2])>,
    segments: Vec<Segment>,
}

/// Roll/pitch/yaw of the frame whose `z` is `extension` and `-y` is `closing`.
fn finger_frame(extension: Vec3, closing: Vec3) -> [f64; 3] {
    let z = extension.normalize();
    let y = -(closing - z * z.dot(&closing)).normalize();
    let x = y.cross(&z);
    matrix_to_rpy(&Mat3::from_columns(&[x, y, z]))
}

fn primitive(kind: PrimitiveKind, xyz: [f64; 3], dims: Vec<f64>) -> PrimitiveSpec {
    PrimitiveSpec { kind, transform: FrameSpec { xyz, rpy: [0.0; 3] }, dims }
}

struct Builder {
    file: HandFile,
}

impl Builder {
    fn new(name: &str, palm: Vec<PrimitiveSpec>, contact_count: usize) -> Self {
        Self {
            file: HandFile {
                name: name.into(),
                palm_link: "palm".into(),
                palm_backward_direction: [0.0, 0.0, -1.0],
                sample_spacing: 0.005,
                contact_count: Some(contact_count),
                links: vec![LinkSpec { name: "palm".into(), primitives: palm }],
                joints: Vec::new(),
                contact_regions: Vec::new(),
            },
        }
    }

    fn palm_region(&mut self, origin: [f64; 3], edge1: [f64; 3], edge2: [f64; 3]) {
        self.file.contact_regions.push(RegionFileSpec { link: "palm".into(), origin, edge1, edge2 });
    }

    fn finger(&mut self, f: Finger) {
        let mut parent = "palm".to_string();
        let mut origin = FrameSpec { xyz: f.base, rpy: finger_frame(f.extension, f.closing) };
        for (k, (axis, limits)) in f.base_joints.iter().enumerate() {
            let link = format!("{}_base{k}", f.name);
            let knuckle = match f.section {
                Section::Box(w, t) => w.min(t) / 2.0,
                Section::Capsule(r) => r,
            };
            let prims = if k == 0 { vec![primitive(PrimitiveKind::Sphere, [0.0; 3], vec![knuckle])] } else { vec![] };
            self.file.links.push(LinkSpec { name: link.clone(), primitives: prims });
            self.file.joints.push(JointFileSpec {
                name: format!("{}_j{k}", f.name),
                parent: parent.clone(),
                child: link.clone(),
                origin: origin.clone(),
                axis: *axis,
                limits: *limits,
            });
            parent = link;
            origin = FrameSpec::default();
        }
        let offset = f.base_joints.len();
        for (k, seg) in f.segments.iter().enumerate() {
            let link = format!("{}_l{k}", f.name);
            let l = seg.length;
            let prim = match f.section {
                Section::Box(w, t) => primitive(PrimitiveKind::Box, [0.0, 0.0, l / 2.0], vec![w, t, l]),
                Section::Capsule(r) => primitive(PrimitiveKind::Capsule, [0.0, 0.0, l / 2.0], vec![r, l]),
            };
            self.file.links.push(LinkSpec { name: link.clone(), primitives: vec![prim] });
            self.file.joints.push(JointFileSpec {
                name: format!("{}_j{}", f.name, offset + k),
                parent: parent.clone(),
                child: link.clone(),
                origin: origin.clone(),
                axis: [1.0, 0.0, 0.0],
                limits: seg.limits,
            });
            if seg.pad {
                let (half_w, depth) = match f.section {
                    Section::Box(w, t) => (0.4 * w, t / 2.0),
                    // narrow strip so the rectangle hugs the rounded pad
                    Section::Capsule(r) => (0.3 * r, r),
                };
                self.file.contact_regions.push(RegionFileSpec {
                    link: link.clone(),
                    origin: [-half_w, -depth, 0.15 * l],
                    edge1: [2.0 * half_w, 0.0, 0.0],
                    edge2: [0.0, 0.0, 0.7 * l],
                });
            }
            parent = link;
            origin = FrameSpec { xyz: [0.0, 0.0, l], rpy: [0.0; 3] };
        }
    }
}

fn seg(length: f64, lo: f64, hi: f64, pad: bool) -> Segment {
    Segment { length, limits: [lo, hi], pad }
}

fn gripper2() -> HandFile {
    let palm = vec![primitive(PrimitiveKind::Box, [0.0, 0.0, -0.015], vec![0.16, 0.03, 0.03])];
    let mut b = Builder::new("gripper2", palm, 2);
    for (name, side) in [("right", 1.0), ("left", -1.0)] {
        b.finger(Finger {
            name,
            base: [side * 0.065, 0.0, 0.0],
            extension: Vec3::z(),
            closing: Vec3::new(-side, 0.0, 0.0),
            section: Section::Box(0.02, 0.012),
            base_joints: vec![],
            segments: vec![seg(0.05, -0.4, 0.6, true), seg(0.04, -0.4, 0.8, true)],
        });
    }
    b.file
}

fn barrett3() -> HandFile {
    let palm = vec![primitive(PrimitiveKind::Box, [0.0, 0.0, -0.015], vec![0.10, 0.12, 0.03])];
    let mut b = Builder::new("barrett3", palm, 3);
    for (name, x, spread) in [("f1", 0.025, 1.0), ("f2", -0.025, -1.0)] {
        b.finger(Finger {
            name,
            base: [x, 0.06, 0.0],
            extension: Vec3::z(),
            closing: -Vec3::y(),
            section: Section::Box(0.018, 0.015),
            // spread rotates the finger about the palm normal
            base_joints: vec![([0.0, 0.0, spread], [-0.3, 1.2])],
            segments: vec![seg(0.06, -0.8, 0.8, true), seg(0.05, -0.5, 1.3, true)],
        });
    }
    b.finger(Finger {
        name: "f3",
        base: [0.0, -0.06, 0.0],
        extension: Vec3::z(),
        closing: Vec3::y(),
        section: Section::Box(0.018, 0.015),
        base_joints: vec![],
        segments: vec![seg(0.06, -0.8, 0.8, true), seg(0.05, -0.5, 1.3, true)],
    });
    b.file
}

fn robotiq3() -> HandFile {
    let palm = vec![primitive(PrimitiveKind::Box, [0.0, 0.0, -0.02], vec![0.12, 0.12, 0.04])];
    let mut b = Builder::new("robotiq3", palm, 3);
    let fingers = [("a", [0.035, 0.062, 0.0], -1.0), ("b", [-0.035, 0.062, 0.0], -1.0), ("c", [0.0, -0.062, 0.0], 1.0)];
    for (name, base, dir) in fingers {
        b.finger(Finger {
            name,
            base,
            extension: Vec3::z(),
            closing: Vec3::y() * dir,
            section: Section::Box(0.022, 0.014),
            base_joints: vec![],
            segments: vec![seg(0.05, -0.8, 0.8, true), seg(0.04, -0.4, 1.2, true), seg(0.03, -0.4, 1.2, true)],
        });
    }
    b.file
}

/// Finger chain used by both dexterous hands: abduction then three flexion joints.
fn long_finger(name: &'static str, base: [f64; 3], radius: f64, lengths: [f64; 3], extra_base: bool) -> Finger {
    let mut base_joints = Vec::new();
    if extra_base {
        // palm arch for the little finger: rotation about the finger's own axis
        base_joints.push(([0.0, 0.0, 1.0], [-0.3, 0.7]));
    }
    base_joints.push(([0.0, 1.0, 0.0], [-0.4, 0.4]));
    Finger {
        name,
        base,
        extension: Vec3::y(),
        closing: Vec3::z(),
        section: Section::Capsule(radius),
        base_joints,
        segments: vec![
            seg(lengths[0], -0.2, 1.4, true),
            seg(lengths[1], -0.1, 1.5, false),
            seg(lengths[2], -0.1, 1.5, true),
        ],
    }
}

fn allegro4() -> HandFile {
    let palm = vec![primitive(PrimitiveKind::Box, [0.0, 0.0, -0.0125], vec![0.095, 0.10, 0.025])];
    let mut b = Builder::new("allegro4", palm, 4);
    b.palm_region([-0.03, -0.03, 0.0], [0.06, 0.0, 0.0], [0.0, 0.06, 0.0]);
    for (name, x) in [("index", 0.0315), ("middle", 0.0), ("ring", -0.0315)] {
        b.finger(long_finger(name, [x, 0.055, -0.0125], 0.0095, [0.054, 0.038, 0.040], false));
    }
    b.finger(Finger {
        name: "thumb",
        base: [0.02, -0.062, -0.0125],
        extension: Vec3::z(),
        closing: Vec3::y(),
        section: Section::Capsule(0.0095),
        base_joints: vec![([0.0, 0.0, 1.0], [-0.6, 0.6]), ([0.0, 1.0, 0.0], [-0.5, 0.5])],
        segments: vec![seg(0.05, -1.0, 0.6, false), seg(0.045, -0.3, 1.3, true)],
    });
    b.file
}

fn shadow5() -> HandFile {
    let palm = vec![primitive(PrimitiveKind::Box, [0.0, 0.0, -0.0125], vec![0.09, 0.10, 0.025])];
    let mut b = Builder::new("shadow5", palm, 5);
    b.palm_region([-0.03, -0.03, 0.0], [0.06, 0.0, 0.0], [0.0, 0.06, 0.0]);
    let fingers = [("ff", 0.033, 0.056, false), ("mf", 0.011, 0.058, false), ("rf", -0.011, 0.056, false), ("lf", -0.033, 0.052, true)];
    for (name, x, y, arch) in fingers {
        b.finger(long_finger(name, [x, y, -0.0125], 0.009, [0.045, 0.025, 0.030], arch));
    }
    b.finger(Finger {
        name: "th",
        base: [0.025, -0.062, -0.0125],
        extension: Vec3::z(),
        closing: Vec3::y(),
        section: Section::Capsule(0.0095),
        base_joints: vec![([0.0, 0.0, 1.0], [-0.7, 0.7]), ([0.0, 1.0, 0.0], [-0.5, 0.5])],
        segments: vec![seg(0.038, -1.1, 0.6, false), seg(0.032, -0.4, 1.0, false), seg(0.03, -0.3, 1.3, true)],
    });
    b.file
}

fn objects() -> Vec<(&'static str, Mesh)> {
    let plate = box_mesh(Vec3::new(0.10, 0.08, 0.002));
    // mug: thick-walled cup from a revolved profile plus a separate ring handle
    let profile = [
        (0.0, -0.05),
        (0.04, -0.05),
        (0.04, 0.05),
        (0.035, 0.05),
        (0.035, -0.044),
        (0.0, -0.044),
    ];
    let mut mug = revolve(&profile, 48);
    let handle = rotated(torus(0.02, 0.005, 32, 12), &Rotation3::from_axis_angle(&Vec3::x_axis(), FRAC_PI_2))
        .translated(Vec3::new(0.068, 0.0, 0.0));
    mug.append(&handle);
    vec![
        ("sphere", icosphere(0.05, 3)),
        ("box", box_mesh(Vec3::repeat(0.08))),
        ("cylinder", cylinder(0.035, 0.12, 48)),
        ("plate", plate),
        ("mug", mug),
        ("torus", torus(0.05, 0.015, 48, 16)),
    ]
}

fn main() -> Result<()> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "assets".into());
    let root = Path::new(&root);
    std::fs::create_dir_all(root.join("hands"))?;
    std::fs::create_dir_all(root.join("objects"))?;
    for hand in [gripper2(), barrett3(), robotiq3(), allegro4(), shadow5()] {
        let text = serde_json::to_string_pretty(&hand)?;
        std::fs::write(root.join("hands").join(format!("{}.json", hand.name)), text + "\n")?;
    }
    for (name, mesh) in objects() {
        std::fs::write(root.join("objects").join(format!("{name}.obj")), mesh.to_obj())?;
    }
    Ok(())
}
