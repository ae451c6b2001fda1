//! Tetrahedral meshes, boundary extraction and the topology gate.
//!
//! The solver only accepts handle-free domains (beta_1 = 0); the boundary of
//! such a domain has beta_2 + 1 closed components, each a topological sphere
//! with Euler characteristic 2.

use crate::error::{Error, Result};
use crate::quadrature::Vec3;
use std::collections::HashMap;

pub mod fixtures;
pub mod io;

/// Local faces of a positively oriented tet, ordered so the right-hand rule
/// gives the outward normal. Face i is opposite vertex i.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

/// Conforming tetrahedral mesh. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TetMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    /// Average tet diameter (longest edge).
    pub h_avg: f64,
    faces: Vec<Face>,
    face_lookup: HashMap<[usize; 3], usize>,
}

/// A mesh face together with the tets it belongs to.
#[derive(Debug, Clone)]
pub struct Face {
    /// Vertex indices sorted ascending; the global orientation reference.
    pub verts: [usize; 3],
    /// (tet index, local face index) of the adjacent tets; 1 or 2 entries.
    pub tets: Vec<(usize, usize)>,
}

fn signed_volume(v: &[Vec3; 4]) -> f64 {
    (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])) / 6.0
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl TetMesh {
    /// Builds a mesh from raw connectivity. Inverted tets are reordered, not
    /// rejected; degenerate or non-conforming input is an error.
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<TetMesh> {
        if vertices.is_empty() || tets.is_empty() {
            return Err(Error::Parse("mesh has no vertices or no tets".into()));
        }
        let mut h_sum = 0.0;
        for (it, tet) in tets.iter_mut().enumerate() {
            for &v in tet.iter() {
                if v >= vertices.len() {
                    return Err(Error::Parse(format!(
                        "tet {it} references vertex {v} out of range"
                    )));
                }
            }
            if tet[0] == tet[1]
                || tet[0] == tet[2]
                || tet[0] == tet[3]
                || tet[1] == tet[2]
                || tet[1] == tet[3]
                || tet[2] == tet[3]
            {
                return Err(Error::DegenerateElement(format!(
                    "tet {it} repeats a vertex index"
                )));
            }
            let coords = [
                vertices[tet[0]],
                vertices[tet[1]],
                vertices[tet[2]],
                vertices[tet[3]],
            ];
            let mut diam: f64 = 0.0;
            for a in 0..4 {
                for b in (a + 1)..4 {
                    diam = diam.max((coords[a] - coords[b]).norm());
                }
            }
            let vol = signed_volume(&coords);
            if vol.abs() < 1e-12 * diam.powi(3).max(f64::MIN_POSITIVE) {
                return Err(Error::DegenerateElement(format!(
                    "tet {it} has (near-)zero volume {vol}"
                )));
            }
            if vol < 0.0 {
                tet.swap(2, 3);
            }
            h_sum += diam;
        }
        let h_avg = h_sum / tets.len() as f64;

        let mut face_lookup: HashMap<[usize; 3], usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        for (it, tet) in tets.iter().enumerate() {
            for (lf, local) in LOCAL_FACES.iter().enumerate() {
                let key = sorted3([tet[local[0]], tet[local[1]], tet[local[2]]]);
                let idx = *face_lookup.entry(key).or_insert_with(|| {
                    faces.push(Face {
                        verts: key,
                        tets: Vec::with_capacity(2),
                    });
                    faces.len() - 1
                });
                faces[idx].tets.push((it, lf));
                if faces[idx].tets.len() > 2 {
                    return Err(Error::NonConforming(format!(
                        "face {key:?} belongs to more than two tets"
                    )));
                }
            }
        }

        Ok(TetMesh {
            vertices,
            tets,
            h_avg,
            faces,
            face_lookup,
        })
    }

    pub fn tet_coords(&self, it: usize) -> [Vec3; 4] {
        let t = self.tets[it];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
            self.vertices[t[3]],
        ]
    }

    pub fn tet_volume(&self, it: usize) -> f64 {
        signed_volume(&self.tet_coords(it))
    }

    pub fn tet_centroid(&self, it: usize) -> Vec3 {
        let c = self.tet_coords(it);
        (c[0] + c[1] + c[2] + c[3]) / 4.0
    }

    pub fn tet_diameter(&self, it: usize) -> f64 {
        let c = self.tet_coords(it);
        let mut d: f64 = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                d = d.max((c[a] - c[b]).norm());
            }
        }
        d
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face_index(&self, verts: [usize; 3]) -> Option<usize> {
        self.face_lookup.get(&sorted3(verts)).copied()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|i| self.tet_volume(i)).sum()
    }

    /// Histogram of face multiplicities; a conforming mesh only has {1, 2}.
    pub fn face_multiplicity_histogram(&self) -> HashMap<usize, usize> {
        let mut h = HashMap::new();
        for f in &self.faces {
            *h.entry(f.tets.len()).or_insert(0) += 1;
        }
        h
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }
}

/// Oriented triangulation of the domain boundary. Triangle orderings follow
/// the right-hand rule with outward normals.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    /// Vertex indices into the parent TetMesh.
    pub triangles: Vec<[usize; 3]>,
    /// Unit outward normal per triangle.
    pub normals: Vec<Vec3>,
    /// Connected-component label per triangle, 0-based and contiguous.
    pub component_id: Vec<usize>,
    pub n_components: usize,
    /// (tet index, local face) the triangle came from.
    pub parent: Vec<(usize, usize)>,
    /// Copy of the parent mesh vertex coordinates referenced by `triangles`.
    pub vertices: Vec<Vec3>,
}

impl SurfaceMesh {
    pub fn triangle_coords(&self, it: usize) -> [Vec3; 3] {
        let t = self.triangles[it];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
        ]
    }

    pub fn triangle_area(&self, it: usize) -> f64 {
        let c = self.triangle_coords(it);
        0.5 * (c[1] - c[0]).cross(&(c[2] - c[0])).norm()
    }

    pub fn triangle_centroid(&self, it: usize) -> Vec3 {
        let c = self.triangle_coords(it);
        (c[0] + c[1] + c[2]) / 3.0
    }

    pub fn triangle_diameter(&self, it: usize) -> f64 {
        let c = self.triangle_coords(it);
        (c[0] - c[1])
            .norm()
            .max((c[1] - c[2]).norm())
            .max((c[2] - c[0]).norm())
    }

    pub fn component_area(&self, comp: usize) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.component_id[t] == comp)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Sum of vector areas per component; zero for closed surfaces.
    pub fn component_vector_areas(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.n_components];
        for t in 0..self.triangles.len() {
            acc[self.component_id[t]] += self.normals[t] * self.triangle_area(t);
        }
        acc
    }

    /// Distance from a point to the surface (over all triangles).
    pub fn distance(&self, x: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|t| point_triangle_distance(x, &self.triangle_coords(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the closest triangle to a point.
    pub fn closest_triangle(&self, x: &Vec3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let d = point_triangle_distance(x, &self.triangle_coords(t));
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        best
    }
}

/// Euclidean distance from a point to a triangle.
pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    // Projection onto the plane, then clamp to the triangle via edge regions.
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }
    let n = ab.cross(&ac);
    (ap.dot(&n) / n.norm()).abs()
}

/// Topological summary of a boundary surface.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TopologyReport {
    /// Number of interior holes = boundary components - 1.
    pub beta2: usize,
    /// Euler characteristic per boundary component.
    pub euler_characteristics: Vec<i64>,
    /// True iff every component has chi = 2 (sphere-like), i.e. beta_1 = 0.
    pub handle_free: bool,
}

/// Extracts the boundary faces (multiplicity 1), oriented outward, with
/// connected components labelled by union-find over shared edges.
pub fn extract_boundary(mesh: &TetMesh) -> SurfaceMesh {
    let mut triangles = Vec::new();
    let mut normals = Vec::new();
    let mut parent = Vec::new();
    for face in mesh.faces() {
        if face.tets.len() != 1 {
            continue;
        }
        let (it, lf) = face.tets[0];
        let tet = mesh.tets[it];
        let local = LOCAL_FACES[lf];
        let tri = [tet[local[0]], tet[local[1]], tet[local[2]]];
        let a = mesh.vertices[tri[0]];
        let b = mesh.vertices[tri[1]];
        let c = mesh.vertices[tri[2]];
        let mut n = (b - a).cross(&(c - a));
        n /= n.norm();
        // The local-face ordering of a positively oriented tet already points
        // outward; assert via the centroid test.
        let fc = (a + b + c) / 3.0;
        debug_assert!((fc - mesh.tet_centroid(it)).dot(&n) > 0.0);
        triangles.push(tri);
        normals.push(n);
        parent.push((it, lf));
    }

    // Union-find over edge-adjacent triangles.
    let mut edge_owner: HashMap<[usize; 2], usize> = HashMap::new();
    let mut uf: Vec<usize> = (0..triangles.len()).collect();
    fn find(uf: &mut Vec<usize>, mut i: usize) -> usize {
        while uf[i] != i {
            uf[i] = uf[uf[i]];
            i = uf[i];
        }
        i
    }
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let mut e = [tri[k], tri[(k + 1) % 3]];
            e.sort_unstable();
            match edge_owner.get(&e) {
                None => {
                    edge_owner.insert(e, t);
                }
                Some(&o) => {
                    let (ra, rb) = (find(&mut uf, t), find(&mut uf, o));
                    if ra != rb {
                        uf[ra] = rb;
                    }
                }
            }
        }
    }
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut component_id = vec![0usize; triangles.len()];
    for t in 0..triangles.len() {
        let r = find(&mut uf, t);
        let next = label.len();
        let id = *label.entry(r).or_insert(next);
        component_id[t] = id;
    }

    SurfaceMesh {
        triangles,
        normals,
        component_id,
        n_components: label.len(),
        parent,
        vertices: mesh.vertices.clone(),
    }
}

/// Computes per-component Euler characteristics and the handle-free verdict.
pub fn topology_report(surface: &SurfaceMesh) -> TopologyReport {
    let mut chis = Vec::with_capacity(surface.n_components);
    for comp in 0..surface.n_components {
        let mut verts = std::collections::HashSet::new();
        let mut edges = std::collections::HashSet::new();
        let mut tris = 0i64;
        for (t, tri) in surface.triangles.iter().enumerate() {
            if surface.component_id[t] != comp {
                continue;
            }
            tris += 1;
            for k in 0..3 {
                verts.insert(tri[k]);
                let mut e = [tri[k], tri[(k + 1) % 3]];
                e.sort_unstable();
                edges.insert(e);
            }
        }
        chis.push(verts.len() as i64 - edges.len() as i64 + tris);
    }
    TopologyReport {
        beta2: surface.n_components.saturating_sub(1),
        handle_free: chis.iter().all(|&c| c == 2),
        euler_characteristics: chis,
    }
}

/// Gate for the uniqueness machinery: fails unless every boundary component
/// is sphere-like.
pub fn require_handle_free(report: &TopologyReport) -> Result<()> {
    if report.handle_free {
        Ok(())
    } else {
        Err(Error::HandlesPresent(format!(
            "Euler characteristics {:?} contain a component with chi != 2",
            report.euler_characteristics
        )))
    }
}
