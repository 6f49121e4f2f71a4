//! Minimum enclosing sphere (Welzl's algorithm in move-to-front form).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + 1e-12) + 1e-15
    }

    fn point(p: Vec3) -> Self {
        Self { center: p, radius: 0.0 }
    }

    fn diameter(a: &Vec3, b: &Vec3) -> Self {
        let center = (a + b) / 2.0;
        Self { center, radius: (a - center).norm().max((b - center).norm()) }
    }
}

/// Smallest sphere through three points with its center in their plane.
pub fn circumcircle(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Sphere> {
    let (u, v) = (b - a, c - a);
    let w = u.cross(&v);
    let denom = 2.0 * w.norm_squared();
    if denom <= 1e-30 * (u.norm_squared() * v.norm_squared()).max(1e-300) {
        return None;
    }
    let offset = (w.cross(&u) * v.norm_squared() + v.cross(&w) * u.norm_squared()) / denom;
    let center = a + offset;
    let radius = [a, b, c].iter().map(|p| (*p - center).norm()).fold(0.0, f64::max);
    Some(Sphere { center, radius })
}

/// Unique sphere through four non-coplanar points.
pub fn circumsphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Option<Sphere> {
    let rows = [b - a, c - a, d - a];
    let m = Mat3::from_rows(&[rows[0].transpose(), rows[1].transpose(), rows[2].transpose()]);
    let rhs = Vec3::new(rows[0].norm_squared(), rows[1].norm_squared(), rows[2].norm_squared()) / 2.0;
    let scale = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if m.determinant().abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let offset = m.lu().solve(&rhs)?;
    let center = a + offset;
    let radius = [a, b, c, d].iter().map(|p| (*p - center).norm()).fold(0.0, f64::max);
    Some(Sphere { center, radius })
}

/// Exact smallest sphere containing every point. Expected linear time; the
/// point order is shuffled with a fixed seed so results are reproducible.
pub fn min_enclosing_sphere(points: &[Vec3]) -> Option<Sphere> {
    let mut pts = points.to_vec();
    if pts.is_empty() {
        return None;
    }
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));
    let mut ball = Sphere::point(pts[0]);
    for i in 1..pts.len() {
        if !ball.contains(&pts[i]) {
            ball = with_one(&pts[..i], pts[i]);
        }
    }
    Some(ball)
}

fn with_one(pts: &[Vec3], q: Vec3) -> Sphere {
    let mut ball = Sphere::point(q);
    for j in 0..pts.len() {
        if !ball.contains(&pts[j]) {
            ball = with_two(&pts[..j], q, pts[j]);
        }
    }
    ball
}

fn with_two(pts: &[Vec3], q1: Vec3, q2: Vec3) -> Sphere {
    let mut ball = Sphere::diameter(&q1, &q2);
    for k in 0..pts.len() {
        if !ball.contains(&pts[k]) {
            ball = with_three(&pts[..k], q1, q2, pts[k]);
        }
    }
    ball
}

fn with_three(pts: &[Vec3], q1: Vec3, q2: Vec3, q3: Vec3) -> Sphere {
    // collinear boundary points: the farthest pair spans the sphere
    let mut ball = circumcircle(&q1, &q2, &q3).unwrap_or_else(|| {
        [(q1, q2), (q1, q3), (q2, q3)]
            .iter()
            .map(|(a, b)| Sphere::diameter(a, b))
            .max_by(|x, y| x.radius.total_cmp(&y.radius))
            .unwrap()
    });
    for l in 0..pts.len() {
        if !ball.contains(&pts[l]) {
            if let Some(s) = circumsphere(&q1, &q2, &q3, &pts[l]) {
                ball = s;
            }
        }
    }
    ball
}
