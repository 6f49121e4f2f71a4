//! Object-to-hand distances, contact values and contact maps.
//!
//! The aligned distance from an object point `v_o` with normal `n` to a hand
//! sample `v_h` is
//!
//! ```text
//! D = exp(gamma * (1 - <(v_o - v_h) / |v_o - v_h|, n>)) * sqrt(s * |v_o - v_h|)
//! ```
//!
//! minimized over the hand samples, and the contact value is `2 - 2 sigmoid(D)`.
//! `s` is a unit scale applied to lengths before the square root (see
//! [`ContactParams::length_scale`]). Contact maps feed the object's inward
//! normals into `D`, so a hand touching the outside of a face is aligned with
//! that face and misaligned with the opposite face of a thin shell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::Isometry3;

use crate::hand::{HandModel, Kinematics};
use crate::math::{logistic, Vec3};
use crate::object::{ObjectModel, SurfacePoint};
use crate::points::OrientedPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ContactError {
    #[error("hand surface is empty")]
    EmptyHand,
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("contact map length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("contact map belongs to {got}, expected {expected}")]
    ObjectMismatch { expected: String, got: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Aligned,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub gamma: f64,
    /// Lengths are multiplied by this before the square root. The default of
    /// 100 measures distances in centimeters, which puts contact values of a
    /// decimeter-scale scene in the sigmoid's informative range.
    pub length_scale: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { gamma: 1.0, length_scale: 100.0 }
    }
}

impl ContactParams {
    pub fn unscaled(gamma: f64) -> Self {
        Self { gamma, length_scale: 1.0 }
    }

    /// Distance term for offset `w = v_o - v_h` against normal `n`.
    #[inline]
    pub fn pair_distance(&self, w: &Vec3, n: &Vec3, metric: Metric) -> f64 {
        let d = w.norm();
        if d == 0.0 {
            return 0.0;
        }
        let root = (self.length_scale * d).sqrt();
        match metric {
            Metric::Euclidean => root,
            Metric::Aligned => (self.gamma * (1.0 - w.dot(n) / d)).exp() * root,
        }
    }

    /// `dD/dw` for the pair term; zero at the coincident-point singularity.
    pub fn pair_gradient(&self, w: &Vec3, n: &Vec3, metric: Metric) -> Vec3 {
        let d = w.norm();
        if d == 0.0 {
            return Vec3::zeros();
        }
        let u = w / d;
        let value = self.pair_distance(w, n, metric);
        match metric {
            Metric::Euclidean => u * (value / (2.0 * d)),
            Metric::Aligned => (u / 2.0 - (n - u * u.dot(n)) * self.gamma) * (value / d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactMap {
    pub object: String,
    pub metric: Metric,
    pub gamma: f64,
    pub length_scale: f64,
    pub values: Vec<f64>,
}

impl ContactMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn params(&self) -> ContactParams {
        ContactParams { gamma: self.gamma, length_scale: self.length_scale }
    }

    pub fn check_against(&self, obj: &ObjectModel) -> Result<(), ContactError> {
        if self.object != obj.name {
            return Err(ContactError::ObjectMismatch { expected: obj.name.clone(), got: self.object.clone() });
        }
        if self.values.len() != obj.sample_count() {
            return Err(ContactError::LengthMismatch { expected: obj.sample_count(), got: self.values.len() });
        }
        Ok(())
    }
}

/// Aligned distance from one oriented object point to a hand point set,
/// using the point's normal as given.
pub fn aligned_distance(v_o: &SurfacePoint, hand: &[OrientedPoint], params: &ContactParams) -> Result<f64, ContactError> {
    min_distance(v_o, hand, params, Metric::Aligned)
}

pub fn euclidean_distance(v_o: &SurfacePoint, hand: &[OrientedPoint], params: &ContactParams) -> Result<f64, ContactError> {
    min_distance(v_o, hand, params, Metric::Euclidean)
}

fn min_distance(v_o: &SurfacePoint, hand: &[OrientedPoint], params: &ContactParams, metric: Metric) -> Result<f64, ContactError> {
    if hand.is_empty() {
        return Err(ContactError::EmptyHand);
    }
    Ok(hand
        .iter()
        .map(|h| params.pair_distance(&(v_o.position - h.position), &v_o.normal, metric))
        .fold(f64::INFINITY, f64::min))
}

pub fn contact_value(distance: f64) -> Result<f64, ContactError> {
    if distance < 0.0 || distance.is_nan() {
        return Err(ContactError::NegativeDistance(distance));
    }
    Ok(contact_value_unchecked(distance))
}

/// `2 - 2 sigmoid(D)`, written as `2 sigmoid(-D)` to stay accurate for large `D`.
#[inline]
pub fn contact_value_unchecked(distance: f64) -> f64 {
    2.0 * logistic(-distance)
}

/// `dC/dD`.
#[inline]
pub fn contact_value_derivative(distance: f64) -> f64 {
    -2.0 * logistic(distance) * logistic(-distance)
}

pub fn sharpen_map(map: &ContactMap) -> ContactMap {
    ContactMap { values: map.values.iter().map(|&v| sharpen_value(v)).collect(), ..map.clone() }
}

pub fn sharpen_value(v: f64) -> f64 {
    if v < 0.5 {
        v
    } else {
        1.0
    }
}

pub fn contact_map(
    obj: &ObjectModel,
    hand: &[OrientedPoint],
    metric: Metric,
    params: &ContactParams,
) -> Result<ContactMap, ContactError> {
    let positions: Vec<Vec3> = hand.iter().map(|h| h.position).collect();
    let nearest = nearest_hand_points(obj, &positions, metric, params)?;
    Ok(ContactMap {
        object: obj.name.clone(),
        metric,
        gamma: params.gamma,
        length_scale: params.length_scale,
        values: nearest.iter().map(|n| contact_value_unchecked(n.distance)).collect(),
    })
}

/// The minimizing hand sample for one object point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub distance: f64,
    pub hand_index: usize,
}

/// Per object sample, the hand sample minimizing the chosen distance (ties go
/// to the smallest hand index). The object's inward normals are used.
pub fn nearest_hand_points(
    obj: &ObjectModel,
    hand: &[Vec3],
    metric: Metric,
    params: &ContactParams,
) -> Result<Vec<Nearest>, ContactError> {
    if hand.is_empty() {
        return Err(ContactError::EmptyHand);
    }
    let tree = PointTree::new(hand.to_vec());
    Ok(for_each_sample(obj, None, |x, n, hint, previous| {
        let mut best = Best::new(metric, params, [hint, previous], |j| hand.get(j).map(|h| (x - h, *n)));
        tree.search(x, n, metric, params, 0, &mut best);
        best.found
    }))
}

/// Runs `query(x, n, hint, previous)` over the object samples in spatial
/// order, with `x` the sample position and `n` its inward normal. `previous` is
/// the answer for the preceding sample of the same chunk; neighbouring samples
/// usually share a minimizer, which makes it a good starting bound.
fn for_each_sample<F>(obj: &ObjectModel, hints: Option<&[Nearest]>, query: F) -> Vec<Nearest>
where
    F: Fn(&Vec3, &Vec3, Option<usize>, Option<usize>) -> Nearest + Sync,
{
    let order = obj.spatial_order();
    let solved: Vec<Vec<(usize, Nearest)>> = order
        .par_chunks(64)
        .map(|chunk| {
            let mut previous = None;
            chunk
                .iter()
                .map(|&i| {
                    let s = &obj.surface_points[i];
                    let hint = hints.and_then(|h| h.get(i)).map(|h| h.hand_index);
                    let found = query(&s.position, &-s.normal, hint, previous);
                    previous = Some(found.hand_index);
                    (i, found)
                })
                .collect()
        })
        .collect();
    let mut out = vec![Nearest { distance: f64::INFINITY, hand_index: usize::MAX }; order.len()];
    for (i, found) in solved.into_iter().flatten() {
        out[i] = found;
    }
    out
}

/// Exhaustive counterpart of [`nearest_hand_points`].
pub fn nearest_hand_points_brute_force(obj: &ObjectModel, hand: &[Vec3], metric: Metric, params: &ContactParams) -> Vec<Nearest> {
    obj.surface_points
        .iter()
        .map(|s| {
            let n = -s.normal;
            let mut best = Nearest { distance: f64::INFINITY, hand_index: usize::MAX };
            for (j, h) in hand.iter().enumerate() {
                let d = params.pair_distance(&(s.position - h), &n, metric);
                if d < best.distance {
                    best = Nearest { distance: d, hand_index: j };
                }
            }
            best
        })
        .collect()
}

/// Search structure over a hand's surface samples, built once per hand in
/// link frames so that it stays valid for every pose.
#[derive(Clone, Debug)]
pub struct HandPointIndex {
    links: Vec<LinkTree>,
}

#[derive(Clone, Debug)]
struct LinkTree {
    link: usize,
    /// Hand index of the link's first sample.
    offset: usize,
    tree: PointTree,
}

impl HandPointIndex {
    pub fn new(hand: &HandModel) -> Self {
        let links = hand
            .links
            .iter()
            .enumerate()
            .filter(|(_, link)| !link.surface_samples.is_empty())
            .map(|(link, geometry)| {
                let local = geometry.surface_samples.iter().map(|s| s.position).collect();
                LinkTree { link, offset: hand.sample_offset(link), tree: PointTree::new(local) }
            })
            .collect();
        Self { links }
    }

    /// Same answer as [`nearest_hand_points`] on the posed samples, up to the
    /// rounding of the frame change; `hints` only affect speed.
    pub fn nearest(
        &self,
        kin: &Kinematics,
        obj: &ObjectModel,
        metric: Metric,
        params: &ContactParams,
        hints: Option<&[Nearest]>,
    ) -> Result<Vec<Nearest>, ContactError> {
        if self.links.is_empty() {
            return Err(ContactError::EmptyHand);
        }
        let inverse: Vec<Isometry3<f64>> = self.links.iter().map(|l| kin.link_transforms[l.link].inverse()).collect();
        // (link slot, local index) of a hand index
        let locate = |j: usize| {
            let k = self.links.partition_point(|l| l.offset <= j).checked_sub(1)?;
            let local = j - self.links[k].offset;
            (local < self.links[k].tree.points.len()).then_some((k, local))
        };
        Ok(for_each_sample(obj, hints, |x, n, hint, previous| {
            let frames: Vec<(Vec3, Vec3)> =
                inverse.iter().map(|inv| (inv.transform_point(&(*x).into()).coords, inv.rotation * n)).collect();
            let mut best = Best::new(metric, params, [hint, previous], |j| {
                let (k, local) = locate(j)?;
                let (lx, ln) = frames[k];
                Some((lx - self.links[k].tree.points[local], ln))
            });
            let mut order: Vec<(f64, usize)> = self
                .links
                .iter()
                .zip(&frames)
                .enumerate()
                .map(|(k, (l, (lx, ln)))| (l.tree.lower_bound(0, lx, ln, metric, params, f64::INFINITY), k))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (bound, k) in order {
                if bound > best.found.distance {
                    break;
                }
                let (lx, ln) = &frames[k];
                self.links[k].tree.search(lx, ln, metric, params, self.links[k].offset, &mut best);
            }
            best.found
        }))
    }
}

/// Running minimum of one query. Besides the answer it keeps the unscaled
/// length and alignment of the winning pair for cheap rejection tests.
struct Best {
    found: Nearest,
    length: f64,
    cos: f64,
    cutoff: f64,
}

/// Relative slack on the squared-length rejection so exact ties still reach
/// the index tie-break.
const TIE_SLACK: f64 = 1.0 + 1e-9;

impl Best {
    /// Seeds the minimum from hand indices; `pair` maps an index to its
    /// offset vector and normal in the searched frame (or `None` when out of
    /// range).
    fn new(
        metric: Metric,
        params: &ContactParams,
        seeds: [Option<usize>; 2],
        pair: impl Fn(usize) -> Option<(Vec3, Vec3)>,
    ) -> Self {
        let mut best = Self {
            found: Nearest { distance: f64::INFINITY, hand_index: usize::MAX },
            length: f64::INFINITY,
            cos: -1.0,
            cutoff: f64::INFINITY,
        };
        for j in seeds.into_iter().flatten() {
            if let Some((w, n)) = pair(j) {
                best.offer(&w, &n, j, metric, params);
            }
        }
        best
    }

    fn offer(&mut self, w: &Vec3, n: &Vec3, j: usize, metric: Metric, params: &ContactParams) {
        let value = params.pair_distance(w, n, metric);
        if value < self.found.distance || (value == self.found.distance && j < self.found.hand_index) {
            self.found = Nearest { distance: value, hand_index: j };
            self.length = w.norm();
            self.cos = if self.length > 0.0 { w.dot(n) / self.length } else { 1.0 };
            self.cutoff = value.powi(4) * TIE_SLACK;
        }
    }
}

#[derive(Clone, Debug)]
struct TreeNode {
    center: Vec3,
    radius: f64,
    lo: Vec3,
    hi: Vec3,
    start: usize,
    count: usize,
    /// Children are `left` and `left + 1` when `count == 0`.
    left: usize,
}

/// Box and ball hierarchy over points for branch-and-bound minimization.
#[derive(Clone, Debug)]
struct PointTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<TreeNode>,
}

const TREE_LEAF: usize = 16;

impl PointTree {
    fn new(points: Vec<Vec3>) -> Self {
        let blank = |start, count| TreeNode {
            center: Vec3::zeros(),
            radius: 0.0,
            lo: Vec3::zeros(),
            hi: Vec3::zeros(),
            start,
            count,
            left: 0,
        };
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = vec![blank(0, points.len())];
        let mut stack = vec![0];
        while let Some(ni) = stack.pop() {
            let (start, count) = (nodes[ni].start, nodes[ni].count);
            let idx = &mut order[start..start + count];
            let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
            for &i in idx.iter() {
                lo = lo.inf(&points[i]);
                hi = hi.sup(&points[i]);
            }
            let center = (lo + hi) / 2.0;
            let radius = idx.iter().map(|&i| (points[i] - center).norm()).fold(0.0, f64::max);
            let node = &mut nodes[ni];
            (node.center, node.radius, node.lo, node.hi) = (center, radius, lo, hi);
            if count <= TREE_LEAF {
                continue;
            }
            let axis = (hi - lo).imax();
            let mid = count / 2;
            idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
            let left = nodes.len();
            nodes.push(blank(start, mid));
            nodes.push(blank(start + mid, count - mid));
            nodes[ni].count = 0;
            nodes[ni].left = left;
            stack.push(left);
            stack.push(left + 1);
        }
        Self { points, order, nodes }
    }

    /// Smallest possible distance from `x` to any point inside node `ni`, or
    /// infinity once it is clear that the bound exceeds `limit`.
    fn lower_bound(&self, ni: usize, x: &Vec3, n: &Vec3, metric: Metric, params: &ContactParams, limit: f64) -> f64 {
        let node = &self.nodes[ni];
        let gap2 = (node.lo - x).sup(&(x - node.hi)).sup(&Vec3::zeros()).norm_squared();
        let scaled = params.length_scale * gap2.sqrt();
        if scaled > limit * limit {
            return f64::INFINITY;
        }
        let root = scaled.sqrt();
        if metric == Metric::Euclidean || params.gamma == 0.0 {
            return root;
        }
        let w = x - node.center;
        let dist = w.norm();
        if dist <= node.radius {
            return root;
        }
        // Directions from points of the ball to x deviate from w by at most
        // alpha = asin(radius / dist); the best achievable alignment is
        // cos(max(0, theta - alpha)) with theta the angle between w and n.
        let cos_theta = (w.dot(n) / dist).clamp(-1.0, 1.0);
        let sin_alpha = node.radius / dist;
        let cos_alpha = (1.0 - sin_alpha * sin_alpha).sqrt();
        let best_cos = if cos_theta >= cos_alpha {
            1.0
        } else {
            cos_theta * cos_alpha + (1.0 - cos_theta * cos_theta).sqrt() * sin_alpha
        };
        // cubic Taylor polynomial, a lower bound of exp on [0, inf)
        let a = params.gamma * (1.0 - best_cos);
        (1.0 + a * (1.0 + a / 2.0 * (1.0 + a / 3.0))) * root
    }

    /// Improves `best` with the points of this tree; point `j` reports as
    /// hand index `offset + j`.
    fn search(&self, x: &Vec3, n: &Vec3, metric: Metric, params: &ContactParams, offset: usize, best: &mut Best) {
        let aligned = metric == Metric::Aligned && params.gamma > 0.0;
        // sqrt(s d) <= D, so a point with s^2 d^2 > D_best^4 cannot win
        let s2 = params.length_scale * params.length_scale;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(32);
        stack.push((0, 0.0));
        while let Some((ni, bound)) = stack.pop() {
            if bound > best.found.distance {
                continue;
            }
            let node = &self.nodes[ni];
            if node.count > 0 {
                for &j in &self.order[node.start..node.start + node.count] {
                    let w = x - self.points[j];
                    let d2 = w.norm_squared();
                    if s2 * d2 > best.cutoff {
                        continue;
                    }
                    if aligned {
                        // ln(d / d_best) >= 1 - d_best / d, so this lower-bounds
                        // ln D - ln D_best without any transcendental call
                        let d = d2.sqrt();
                        let c = if d > 0.0 { w.dot(n) / d } else { 1.0 };
                        if params.gamma * (best.cos - c) + 0.5 * (1.0 - best.length / d) > 1e-12 {
                            continue;
                        }
                    }
                    best.offer(&w, n, offset + j, metric, params);
                }
            } else {
                let limit = best.found.distance;
                let (l, r) = (node.left, node.left + 1);
                let bl = self.lower_bound(l, x, n, metric, params, limit);
                let br = self.lower_bound(r, x, n, metric, params, limit);
                let (near, far) = if bl <= br { ((l, bl), (r, br)) } else { ((r, br), (l, bl)) };
                if far.1 <= limit {
                    stack.push(far);
                }
                if near.1 <= limit {
                    stack.push(near);
                }
            }
        }
    }
}
