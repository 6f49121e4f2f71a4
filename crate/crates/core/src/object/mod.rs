//! Rigid objects: triangle meshes with sampled oriented surface points and a
//! signed-distance oracle.

pub mod enclosing;
pub mod mesh;
pub mod sdf;

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use enclosing::{min_enclosing_sphere, Sphere};
pub use mesh::Mesh;
pub use sdf::{Feature, MeshSdf, SdfQuery};

use crate::math::Vec3;
use crate::points::OrientedPoint;
use crate::rng::substream;

/// A sampled object surface point `v_o` with its outward normal `n_o`.
pub type SurfacePoint = OrientedPoint;

pub const DEFAULT_SAMPLE_COUNT: usize = 2048;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported mesh format: {0}")]
    Format(String),
    #[error("mesh {0} is not closed; signed distance is undefined")]
    OpenMesh(String),
    #[error("sample count must be positive")]
    NoSamples,
}

/// Lower bounds for the signed distance from a coarse lattice of exact values.
/// Since the signed distance is 1-Lipschitz, `delta(x) >= delta(node) - |x - node|`.
#[derive(Clone, Debug)]
struct DistanceGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    values: Vec<f64>,
    bounds: (Vec3, Vec3),
}

const GRID_CELLS: f64 = 40.0;

impl DistanceGrid {
    fn new(sdf: &MeshSdf, mesh: &Mesh) -> Self {
        let (lo, hi) = mesh_bounds(mesh);
        let cell = (hi - lo).max() / GRID_CELLS;
        let origin = lo - Vec3::repeat(2.0 * cell);
        let span = hi - lo + Vec3::repeat(4.0 * cell);
        let dims = [0, 1, 2].map(|k| (span[k] / cell).ceil() as usize + 1);
        let values = (0..dims[0] * dims[1] * dims[2])
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx % dims[0], idx / dims[0] % dims[1], idx / (dims[0] * dims[1]));
                sdf.signed_distance(&(origin + Vec3::new(i as f64, j as f64, k as f64) * cell))
            })
            .collect();
        Self { origin, cell, dims, values, bounds: (lo, hi) }
    }

    fn lower_bound(&self, x: &Vec3) -> f64 {
        let (lo, hi) = &self.bounds;
        let outside = (lo - x).sup(&(x - hi)).sup(&Vec3::zeros()).norm();
        if outside > 0.0 {
            return outside;
        }
        let rel = (x - self.origin) / self.cell;
        let idx = [0, 1, 2].map(|k| (rel[k].round().max(0.0) as usize).min(self.dims[k] - 1));
        let node = self.origin + Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.cell;
        let v = self.values[idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])];
        v - (x - node).norm()
    }
}

fn mesh_bounds(mesh: &Mesh) -> (Vec3, Vec3) {
    mesh.vertices.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), v| (lo.inf(v), hi.sup(v)),
    )
}

#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub name: String,
    pub mesh: Mesh,
    pub surface_points: Vec<SurfacePoint>,
    pub closed: bool,
    /// Volume centroid for closed meshes, area centroid otherwise.
    pub centroid: Vec3,
    pub enclosing_sphere: Sphere,
    sdf: MeshSdf,
    grid: Option<DistanceGrid>,
    spatial_order: Vec<usize>,
}

pub fn load_object(path: impl AsRef<Path>, sample_count: usize) -> Result<ObjectModel, GeometryError> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|source| GeometryError::Io { path: path.into(), source })?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mesh = match ext.as_str() {
        "obj" => mesh::parse_obj(&String::from_utf8_lossy(&data))?,
        "ply" => mesh::parse_ply(&data)?,
        other => return Err(GeometryError::Format(other.to_string())),
    };
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("object").to_string();
    ObjectModel::from_mesh(name, mesh, sample_count)
}

impl ObjectModel {
    pub fn from_mesh(name: impl Into<String>, mesh: Mesh, sample_count: usize) -> Result<Self, GeometryError> {
        if sample_count == 0 {
            return Err(GeometryError::NoSamples);
        }
        let mut mesh = mesh.welded();
        mesh.triangles.retain(|tri| {
            let [a, b, c] = tri.map(|i| mesh.vertices[i]);
            (b - a).cross(&(c - a)).norm() / 2.0 > 1e-12
        });
        if mesh.triangles.is_empty() {
            return Err(GeometryError::Parse("mesh has no non-degenerate faces".into()));
        }
        let closed = mesh.is_closed();
        let sdf = MeshSdf::new(&mesh);
        let grid = closed.then(|| DistanceGrid::new(&sdf, &mesh));
        let centroid = centroid(&mesh, closed);
        let enclosing_sphere = min_enclosing_sphere(&mesh.vertices).expect("mesh has vertices");
        let name = name.into();
        let surface_points = sample_surface(&mesh, &sdf, sample_count, &name);
        let spatial_order = spatial_order(&surface_points);
        Ok(Self { name, mesh, surface_points, closed, centroid, enclosing_sphere, sdf, grid, spatial_order })
    }

    /// Sample indices sorted along a Morton curve, so that runs of the order
    /// are spatially compact.
    pub fn spatial_order(&self) -> &[usize] {
        &self.spatial_order
    }

    pub fn ensure_closed(&self) -> Result<(), GeometryError> {
        if self.closed {
            Ok(())
        } else {
            Err(GeometryError::OpenMesh(self.name.clone()))
        }
    }

    /// The signed-distance oracle; fails for open meshes.
    pub fn sdf(&self) -> Result<&MeshSdf, GeometryError> {
        self.ensure_closed()?;
        Ok(&self.sdf)
    }

    pub fn signed_distance(&self, x: &Vec3) -> Result<f64, GeometryError> {
        Ok(self.sdf()?.signed_distance(x))
    }

    /// A cheap lower bound on the signed distance; positive means certainly outside.
    pub fn distance_lower_bound(&self, x: &Vec3) -> f64 {
        match &self.grid {
            Some(g) => g.lower_bound(x),
            None => f64::NEG_INFINITY,
        }
    }

    /// Unsigned distance to the surface together with the nearest-feature query.
    /// Works for open meshes too.
    pub fn nearest(&self, x: &Vec3) -> SdfQuery {
        self.sdf.query(x)
    }

    pub fn min_enclosing_sphere(&self) -> (Vec3, f64) {
        (self.enclosing_sphere.center, self.enclosing_sphere.radius)
    }

    pub fn sample_count(&self) -> usize {
        self.surface_points.len()
    }

    pub fn write_samples_ply(&self, values: Option<(&str, &[f64])>, out: &mut impl std::io::Write) -> std::io::Result<()> {
        mesh::write_points_ply(&self.surface_points, values, out)
    }
}

fn centroid(mesh: &Mesh, closed: bool) -> Vec3 {
    let mut acc = Vec3::zeros();
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        if closed {
            let v = a.dot(&b.cross(&c)) / 6.0;
            acc += (a + b + c) * (v / 4.0);
            total += v;
        } else {
            let w = mesh.triangle_area(t);
            acc += (a + b + c) * (w / 3.0);
            total += w;
        }
    }
    acc / total
}

/// Area-weighted random candidates thinned by farthest point sampling to
/// exactly `count` points.
fn sample_surface(mesh: &Mesh, sdf: &MeshSdf, count: usize, name: &str) -> Vec<SurfacePoint> {
    let mut rng = substream(0, "surface", name.bytes().map(u64::from).sum());
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let pick = WeightedIndex::new(&areas).expect("positive triangle areas");
    let candidates: Vec<(usize, Vec3)> = (0..count * 8)
        .map(|_| {
            let t = pick.sample(&mut rng);
            let [a, b, c] = mesh.triangle(t);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            (t, a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2))
        })
        .collect();

    let mut chosen = Vec::with_capacity(count);
    let mut gap = vec![f64::INFINITY; candidates.len()];
    let mut next = 0;
    for _ in 0..count {
        chosen.push(next);
        let p = candidates[next].1;
        let mut far = (f64::NEG_INFINITY, 0);
        for (i, (_, q)) in candidates.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < gap[i] {
                gap[i] = d;
            }
            if gap[i] > far.0 {
                far = (gap[i], i);
            }
        }
        next = far.1;
    }
    chosen
        .into_iter()
        .map(|i| {
            let (t, p) = candidates[i];
            OrientedPoint::new(p, sdf.shading_normal_on_triangle(t, &p))
        })
        .collect()
}


fn spatial_order(points: &[SurfacePoint]) -> Vec<usize> {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for p in points {
        lo = lo.inf(&p.position);
        hi = hi.sup(&p.position);
    }
    let extent = (hi - lo).max().max(1e-12);
    let key = |p: &Vec3| {
        let cell = ((p - lo) / extent * 1023.0).map(|c| c.clamp(0.0, 1023.0) as u64);
        (0..10).fold(0u64, |k, bit| {
            k | (0..3).fold(0, |acc, axis| acc | (((cell[axis] >> bit) & 1) << (3 * bit + axis)))
        })
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (key(&points[i].position), i));
    order
}
