//! Exact signed distance to a closed triangle mesh.
//!
//! Nearest triangles come from an AABB tree; the sign is decided with
//! angle-weighted pseudonormals of the nearest feature (face, edge or vertex).
//! Ties between triangles at equal distance resolve to the smallest triangle
//! index so queries on the medial axis are deterministic.

use std::collections::HashMap;

use super::mesh::Mesh;
use crate::math::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Face,
    /// Edge from corner k to corner (k + 1) % 3.
    Edge(u8),
    Vertex(u8),
}

#[derive(Clone, Copy, Debug)]
pub struct SdfQuery {
    pub distance: f64,
    pub triangle: usize,
    pub feature: Feature,
    pub closest: Vec3,
    /// Unit gradient of the signed distance (outward surface direction).
    pub gradient: Vec3,
}

#[derive(Clone, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&(p - self.max)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: `start..start+count` into `order`; inner: children `left`, `left + 1`.
    start: usize,
    count: usize,
    left: usize,
}

#[derive(Clone, Debug)]
pub struct MeshSdf {
    corners: Vec<[Vec3; 3]>,
    face_normals: Vec<Vec3>,
    edge_normals: Vec<[Vec3; 3]>,
    vertex_normals: Vec<[Vec3; 3]>,
    /// Crease-aware smooth normals at triangle corners.
    shading_normals: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;
const CREASE_COS: f64 = 0.766_044_443_118_978; // cos(40 deg)

impl MeshSdf {
    /// `mesh` must already be welded so shared vertices have shared indices.
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.triangles.len();
        let corners: Vec<[Vec3; 3]> = (0..n).map(|t| mesh.triangle(t)).collect();
        let face_normals: Vec<Vec3> = corners
            .iter()
            .map(|[a, b, c]| (b - a).cross(&(c - a)).normalize())
            .collect();

        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut vertex_faces: Vec<Vec<(usize, u8)>> = vec![Vec::new(); mesh.vertices.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(t);
                vertex_faces[tri[k]].push((t, k as u8));
            }
        }
        let corner_angle = |t: usize, k: usize| {
            let c = &corners[t];
            let e1 = (c[(k + 1) % 3] - c[k]).normalize();
            let e2 = (c[(k + 2) % 3] - c[k]).normalize();
            e1.dot(&e2).clamp(-1.0, 1.0).acos()
        };

        let mut edge_normals = vec![[Vec3::zeros(); 3]; n];
        let mut vertex_normals = vec![[Vec3::zeros(); 3]; n];
        let mut shading_normals = vec![[Vec3::zeros(); 3]; n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let sum: Vec3 = edge_faces[&(a.min(b), a.max(b))]
                    .iter()
                    .map(|&f| face_normals[f])
                    .sum();
                edge_normals[t][k] = sum.try_normalize(1e-300).unwrap_or(face_normals[t]);

                let mut pseudo = Vec3::zeros();
                let mut smooth = Vec3::zeros();
                for &(f, kf) in &vertex_faces[tri[k]] {
                    let w = corner_angle(f, kf as usize);
                    pseudo += face_normals[f] * w;
                    if face_normals[f].dot(&face_normals[t]) >= CREASE_COS {
                        smooth += face_normals[f] * w;
                    }
                }
                vertex_normals[t][k] = pseudo.try_normalize(1e-300).unwrap_or(face_normals[t]);
                shading_normals[t][k] = smooth.try_normalize(1e-300).unwrap_or(face_normals[t]);
            }
        }

        let mut sdf = Self {
            corners,
            face_normals,
            edge_normals,
            vertex_normals,
            shading_normals,
            nodes: Vec::new(),
            order: (0..n).collect(),
        };
        sdf.build();
        sdf
    }

    fn build(&mut self) {
        let centroids: Vec<Vec3> =
            self.corners.iter().map(|[a, b, c]| (a + b + c) / 3.0).collect();
        self.nodes.push(Node { bounds: Aabb::empty(), start: 0, count: self.order.len(), left: 0 });
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (start, count) = (self.nodes[ni].start, self.nodes[ni].count);
            let mut bounds = Aabb::empty();
            let mut cbounds = Aabb::empty();
            for &t in &self.order[start..start + count] {
                for c in &self.corners[t] {
                    bounds.grow(c);
                }
                cbounds.grow(&centroids[t]);
            }
            self.nodes[ni].bounds = bounds;
            if count <= LEAF_SIZE {
                continue;
            }
            let extent = cbounds.max - cbounds.min;
            let axis = extent.imax();
            let mid = count / 2;
            self.order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
                centroids[a][axis]
                    .total_cmp(&centroids[b][axis])
                    .then(a.cmp(&b))
            });
            let left = self.nodes.len();
            self.nodes.push(Node { bounds: Aabb::empty(), start, count: mid, left: 0 });
            self.nodes.push(Node { bounds: Aabb::empty(), start: start + mid, count: count - mid, left: 0 });
            self.nodes[ni].left = left;
            self.nodes[ni].count = 0;
            stack.push(left);
            stack.push(left + 1);
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.corners.len()
    }

    pub fn face_normal(&self, t: usize) -> Vec3 {
        self.face_normals[t]
    }

    /// Nearest triangle by exhaustive search; the reference the tree is tested against.
    pub fn brute_force_nearest(&self, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for t in 0..self.corners.len() {
            let (q, _) = closest_point_on_triangle(p, &self.corners[t]);
            let d2 = (p - q).norm_squared();
            if d2 < best.0 {
                best = (d2, t);
            }
        }
        best
    }

    fn nearest(&self, p: &Vec3) -> (f64, usize, Vec3, Feature) {
        let mut best_d2 = f64::INFINITY;
        let mut best = (usize::MAX, Vec3::zeros(), Feature::Face);
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_squared(p) > best_d2 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let (q, feature) = closest_point_on_triangle(p, &self.corners[t]);
                    let d2 = (p - q).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && t < best.0) {
                        best_d2 = d2;
                        best = (t, q, feature);
                    }
                }
            } else {
                let (l, r) = (node.left, node.left + 1);
                let dl = self.nodes[l].bounds.distance_squared(p);
                let dr = self.nodes[r].bounds.distance_squared(p);
                // push the farther child first so the nearer one is searched first
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        (best_d2, best.0, best.1, best.2)
    }

    fn pseudonormal(&self, t: usize, feature: Feature) -> Vec3 {
        match feature {
            Feature::Face => self.face_normals[t],
            Feature::Edge(k) => self.edge_normals[t][k as usize],
            Feature::Vertex(k) => self.vertex_normals[t][k as usize],
        }
    }

    pub fn query(&self, p: &Vec3) -> SdfQuery {
        let (d2, t, closest, feature) = self.nearest(p);
        let pseudo = self.pseudonormal(t, feature);
        let diff = p - closest;
        let sign = if diff.dot(&pseudo) >= 0.0 { 1.0 } else { -1.0 };
        let dist = d2.sqrt();
        let gradient = if dist > 1e-12 { diff * (sign / dist) } else { pseudo };
        SdfQuery { distance: sign * dist, triangle: t, feature, closest, gradient }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.query(p).distance
    }

    /// Smooth surface normal at the closest point of a query, from the
    /// crease-aware corner normals, with its derivative w.r.t. the query point.
    pub fn shading_normal(&self, q: &SdfQuery) -> (Vec3, Mat3) {
        let t = q.triangle;
        let [a, b, c] = self.corners[t];
        let (e1, e2) = (b - a, c - a);
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        let rel = q.closest - a;
        let (r1, r2) = (e1.dot(&rel), e2.dot(&rel));
        let beta = (g22 * r1 - g12 * r2) / det;
        let gamma = (g11 * r2 - g12 * r1) / det;
        let [na, nb, nc] = self.shading_normals[t];
        let m = na * (1.0 - beta - gamma) + nb * beta + nc * gamma;
        let len = m.norm();
        let normal = m / len;

        // d(beta)/dp and d(gamma)/dp for p in the triangle plane
        let dbeta = (e1 * g22 - e2 * g12) / det;
        let dgamma = (e2 * g11 - e1 * g12) / det;
        let dm_dp = (nb - na) * dbeta.transpose() + (nc - na) * dgamma.transpose();
        let dp_dx = match q.feature {
            Feature::Face => {
                let n = self.face_normals[t];
                Mat3::identity() - n * n.transpose()
            }
            Feature::Edge(k) => {
                let k = k as usize;
                let e = self.corners[t][(k + 1) % 3] - self.corners[t][k];
                e * e.transpose() / e.norm_squared()
            }
            Feature::Vertex(_) => Mat3::zeros(),
        };
        let dn_dm = (Mat3::identity() - normal * normal.transpose()) / len;
        (normal, dn_dm * dm_dp * dp_dx)
    }

    /// Smooth normal at a point known to lie on triangle `t`.
    pub fn shading_normal_on_triangle(&self, t: usize, p: &Vec3) -> Vec3 {
        let q = SdfQuery {
            distance: 0.0,
            triangle: t,
            feature: Feature::Face,
            closest: *p,
            gradient: self.face_normals[t],
        };
        self.shading_normal(&q).0
    }
}

/// Closest point on a triangle and the feature it lies on (after Ericson,
/// Real-Time Collision Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> (Vec3, Feature) {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

#[cfg(test)]
mod tests {
    use super::super::mesh::{box_mesh, icosphere};
    use super::*;

    #[test]
    fn cube_center_and_axis_point() {
        let sdf = MeshSdf::new(&box_mesh(Vec3::new(1.0, 1.0, 1.0)));
        assert!((sdf.signed_distance(&Vec3::zeros()) + 0.5).abs() < 1e-15);
        assert!((sdf.signed_distance(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-15);
        let corner = sdf.signed_distance(&Vec3::new(1.0, 1.0, 1.0));
        assert!((corner - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cube_shading_normals_stay_axis_aligned() {
        let sdf = MeshSdf::new(&box_mesh(Vec3::new(1.0, 1.0, 1.0)));
        let q = sdf.query(&Vec3::new(0.2, 0.7, 0.45));
        let (n, _) = sdf.shading_normal(&q);
        assert!((n - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sphere_inside_outside() {
        let sdf = MeshSdf::new(&icosphere(1.0, 3));
        assert!(sdf.signed_distance(&Vec3::zeros()) < -0.98);
        assert!(sdf.signed_distance(&Vec3::new(0.0, 0.0, 2.0)) > 0.98);
        let q = sdf.query(&Vec3::new(0.3, -1.4, 0.2));
        assert!((q.gradient - Vec3::new(0.3, -1.4, 0.2).normalize()).norm() < 0.05);
    }

    #[test]
    fn shading_normal_derivative_matches_finite_differences() {
        let sdf = MeshSdf::new(&icosphere(0.05, 2));
        let x = Vec3::new(0.021, 0.034, 0.047);
        let q = sdf.query(&x);
        let (_, jac) = sdf.shading_normal(&q);
        let h = 1e-7;
        for k in 0..3 {
            let mut dx = Vec3::zeros();
            dx[k] = h;
            let (qp, qm) = (sdf.query(&(x + dx)), sdf.query(&(x - dx)));
            assert_eq!((qp.triangle, qp.feature), (q.triangle, q.feature));
            assert_eq!((qm.triangle, qm.feature), (q.triangle, q.feature));
            let fd = (sdf.shading_normal(&qp).0 - sdf.shading_normal(&qm).0) / (2.0 * h);
            assert!((fd - jac.column(k)).norm() < 1e-5 * (1.0 + fd.norm()), "{fd} vs {}", jac.column(k));
        }
    }

    #[test]
    fn closest_point_features() {
        let tri = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &tri).1, Feature::Vertex(0));
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.5, -1.0, 0.0), &tri).1, Feature::Edge(0));
        assert_eq!(closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &tri).1, Feature::Edge(1));
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, 0.5, 0.0), &tri).1, Feature::Edge(2));
        let (q, f) = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 3.0), &tri);
        assert_eq!(f, Feature::Face);
        assert!((q - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
    }
}
