//! Triangle meshes: OBJ / PLY input, PLY point export and a few procedural
//! closed meshes used for the shipped object assets and tests.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use super::GeometryError;
use crate::math::Vec3;
use crate::points::OrientedPoint;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Merge vertices with bit-identical coordinates.
    pub fn welded(&self) -> Mesh {
        let mut map: HashMap<[u64; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            let idx = *map.entry(key).or_insert_with(|| {
                vertices.push(*v);
                vertices.len() - 1
            });
            remap.push(idx);
        }
        let triangles = self.triangles.iter().map(|t| t.map(|i| remap[i])).collect();
        Mesh { vertices, triangles }
    }

    /// True when every edge is shared by exactly two triangles with opposite
    /// orientation.
    pub fn is_closed(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn append(&mut self, other: &Mesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
    }

    pub fn translated(mut self, t: Vec3) -> Mesh {
        for v in &mut self.vertices {
            *v += t;
        }
        self
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

pub fn parse_obj(text: &str) -> Result<Mesh, GeometryError> {
    let mut mesh = Mesh::default();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| GeometryError::Parse(format!("OBJ line {}: {what}", lineno + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                mesh.vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let n = mesh.vertices.len() as i64;
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| bad("bad face index"))?;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 || i >= n {
                            return Err(bad("face index out of range"));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if mesh.triangles.is_empty() {
        return Err(GeometryError::Parse("mesh has no faces".into()));
    }
    Ok(mesh)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! rd {
            ($t:ty) => {{
                let arr = bytes[..std::mem::size_of::<$t>()].try_into().unwrap();
                (if big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
            }};
        }
        match self {
            Self::I8 => rd!(i8),
            Self::U8 => rd!(u8),
            Self::I16 => rd!(i16),
            Self::U16 => rd!(u16),
            Self::I32 => rd!(i32),
            Self::U32 => rd!(u32),
            Self::F32 => rd!(f32),
            Self::F64 => rd!(f64),
        }
    }
}

enum PlyProperty {
    Scalar(String, PlyType),
    List(String, PlyType, PlyType),
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

/// Binary (little or big endian) or ASCII PLY with `vertex` x/y/z and
/// `face` vertex_indices (or vertex_index) lists.
pub fn parse_ply(data: &[u8]) -> Result<Mesh, GeometryError> {
    let perr = |m: &str| GeometryError::Parse(format!("PLY: {m}"));
    let header_end = data
        .windows(10)
        .position(|w| w == b"end_header")
        .ok_or_else(|| perr("missing end_header"))?;
    let header = std::str::from_utf8(&data[..header_end]).map_err(|_| perr("header is not UTF-8"))?;
    let mut body_start = header_end + "end_header".len();
    if data.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if data.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(perr("missing magic"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element"))?;
                el.props.push(PlyProperty::List(
                    name.to_string(),
                    PlyType::parse(ct).ok_or_else(|| perr("bad list count type"))?,
                    PlyType::parse(it).ok_or_else(|| perr("bad list item type"))?,
                ));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element"))?;
                el.props.push(PlyProperty::Scalar(
                    name.to_string(),
                    PlyType::parse(ty).ok_or_else(|| perr("bad property type"))?,
                ));
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| perr("missing format line"))?;
    let ascii = format == "ascii";
    let big_endian = format == "binary_big_endian";
    if !ascii && !big_endian && format != "binary_little_endian" {
        return Err(perr("unknown format"));
    }

    let body = &data[body_start..];
    let mut ascii_tokens = if ascii {
        Some(
            std::str::from_utf8(body)
                .map_err(|_| perr("ASCII body is not UTF-8"))?
                .split_whitespace(),
        )
    } else {
        None
    };
    let mut cursor = 0usize;
    let mut next = |ty: PlyType| -> Result<f64, GeometryError> {
        if let Some(tokens) = ascii_tokens.as_mut() {
            tokens
                .next()
                .ok_or_else(|| perr("truncated body"))?
                .parse()
                .map_err(|_| perr("bad number"))
        } else {
            let end = cursor + ty.size();
            let bytes = body.get(cursor..end).ok_or_else(|| perr("truncated body"))?;
            cursor = end;
            Ok(ty.read(bytes, big_endian))
        }
    };

    let mut mesh = Mesh::default();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for prop in &el.props {
                match prop {
                    PlyProperty::Scalar(name, ty) => {
                        let v = next(*ty)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    PlyProperty::List(name, ct, it) => {
                        let n = next(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(next(*it)? as usize);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(perr("face with fewer than three vertices"));
                            }
                            for k in 1..n - 1 {
                                mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                mesh.vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    if mesh.triangles.is_empty() {
        return Err(perr("mesh has no faces"));
    }
    if mesh.triangles.iter().flatten().any(|&i| i >= mesh.vertices.len()) {
        return Err(perr("face index out of range"));
    }
    Ok(mesh)
}

/// Binary little-endian PLY of a mesh (float vertices, int face lists).
pub fn write_mesh_ply(mesh: &Mesh, out: &mut impl Write) -> std::io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        for c in v.iter() {
            out.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        out.write_all(&[3u8])?;
        for i in t {
            out.write_all(&(*i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Binary little-endian PLY point cloud with normals and an optional
/// per-point scalar (e.g. contact values).
pub fn write_points_ply(
    points: &[OrientedPoint],
    scalar: Option<(&str, &[f64])>,
    out: &mut impl Write,
) -> std::io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\n",
        points.len()
    )?;
    if let Some((name, _)) = scalar {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        for c in p.position.iter().chain(p.normal.iter()) {
            out.write_all(&(*c as f32).to_le_bytes())?;
        }
        if let Some((_, values)) = scalar {
            out.write_all(&(values[i] as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Axis-aligned box centered at the origin, 12 triangles, outward winding.
pub fn box_mesh(size: Vec3) -> Mesh {
    let h = size * 0.5;
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut triangles = Vec::new();
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    Mesh { vertices, triangles }
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(radius: f64, subdivisions: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    Mesh { vertices, triangles }
}

/// Surface of revolution about z of a profile `(radius, z)` whose first and
/// last entries have radius 0 (the poles).
pub fn revolve(profile: &[(f64, f64)], segments: usize) -> Mesh {
    assert!(profile.len() >= 3 && profile[0].0 == 0.0 && profile[profile.len() - 1].0 == 0.0);
    let rings = &profile[1..profile.len() - 1];
    let mut vertices = vec![Vec3::new(0.0, 0.0, profile[0].1)];
    for &(r, z) in rings {
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, profile[profile.len() - 1].1));
    let ring = |k: usize, s: usize| 1 + k * segments + s % segments;
    let mut triangles = Vec::new();
    // profile runs bottom pole -> top pole, so this winding faces outward
    for s in 0..segments {
        triangles.push([0, ring(0, s + 1), ring(0, s)]);
    }
    for k in 0..rings.len() - 1 {
        for s in 0..segments {
            let (a, b) = (ring(k, s), ring(k, s + 1));
            let (c, d) = (ring(k + 1, s), ring(k + 1, s + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let last = rings.len() - 1;
    for s in 0..segments {
        triangles.push([top, ring(last, s), ring(last, s + 1)]);
    }
    Mesh { vertices, triangles }
}

pub fn cylinder(radius: f64, height: f64, segments: usize) -> Mesh {
    let h = 0.5 * height;
    revolve(&[(0.0, -h), (radius, -h), (radius, h), (0.0, h)], segments)
}

/// Torus about the z axis.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> Mesh {
    let mut vertices = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = 2.0 * PI * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let v = 2.0 * PI * j as f64 / minor_segments as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % major_segments) * minor_segments + j % minor_segments;
    let mut triangles = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh { vertices, triangles }
}

/// Rotate every vertex by `rotation`.
pub fn rotated(mut mesh: Mesh, rotation: &nalgebra::Rotation3<f64>) -> Mesh {
    for v in &mut mesh.vertices {
        *v = rotation * *v;
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(mesh: &Mesh) -> f64 {
        mesh.triangles
            .iter()
            .map(|&[a, b, c]| {
                mesh.vertices[a].dot(&mesh.vertices[b].cross(&mesh.vertices[c])) / 6.0
            })
            .sum()
    }

    #[test]
    fn generators_are_closed_and_outward() {
        let cases = [
            (box_mesh(Vec3::new(1.0, 2.0, 3.0)), 6.0),
            (icosphere(1.0, 3), 4.0 / 3.0 * PI),
            (cylinder(1.0, 2.0, 64), 2.0 * PI),
            (torus(2.0, 0.5, 64, 32), 2.0 * PI * PI * 2.0 * 0.25),
        ];
        for (mesh, volume) in cases {
            assert!(mesh.is_closed());
            let v = signed_volume(&mesh);
            assert!(v > 0.0 && (v - volume).abs() / volume < 0.02, "{v} vs {volume}");
        }
    }

    #[test]
    fn obj_round_trip_and_errors() {
        let mesh = box_mesh(Vec3::new(1.0, 1.0, 1.0));
        let back = parse_obj(&mesh.to_obj()).unwrap();
        assert_eq!(back, mesh);
        assert!(matches!(parse_obj(""), Err(GeometryError::Parse(_))));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3\n"), Err(GeometryError::Parse(_))));
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n").unwrap();
        assert_eq!(quad.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn binary_ply_round_trip() {
        let mesh = icosphere(0.5, 1);
        let mut bytes = Vec::new();
        write_mesh_ply(&mesh, &mut bytes).unwrap();
        let back = parse_ply(&bytes).unwrap();
        assert_eq!(back.triangles, mesh.triangles);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((a - b).norm() < 1e-7);
        }
    }

    #[test]
    fn ascii_ply_parses() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let mesh = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.triangles, vec![[0, 1, 2]]);
        assert!(!mesh.is_closed());
    }

    #[test]
    fn welding_merges_duplicates() {
        let cube = box_mesh(Vec3::new(1.0, 1.0, 1.0));
        let mut soup = Mesh::default();
        for t in &cube.triangles {
            let base = soup.vertices.len();
            soup.vertices.extend(t.iter().map(|&i| cube.vertices[i]));
            soup.triangles.push([base, base + 1, base + 2]);
        }
        assert!(!soup.is_closed());
        let welded = soup.welded();
        assert_eq!(welded.vertices.len(), 8);
        assert!(welded.is_closed());
    }
}
