//! Boundary element spaces on the triangulated surface: Raviart-Thomas
//! RT^n(Gamma), discontinuous scalars S_disc^n(Gamma) and continuous
//! piecewise-linear Lagrange scalars, plus the surface gradient / vector curl
//! operators.

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{self, Vec3};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::Arc;

/// In-plane scaled monomials {1, xi, eta, xi^2, xi*eta, eta^2}.
pub const N_MONO2: usize = 6;

#[inline]
pub fn mono2(xi: f64, eta: f64) -> [f64; N_MONO2] {
    [1.0, xi, eta, xi * xi, xi * eta, eta * eta]
}

/// Orthonormal tangent frame and scaling of one triangle.
#[derive(Debug, Clone)]
pub struct TriFrame {
    pub centroid: Vec3,
    pub t1: Vec3,
    pub t2: Vec3,
    pub normal: Vec3,
    pub scale: f64,
}

impl TriFrame {
    pub fn new(surface: &SurfaceMesh, t: usize) -> TriFrame {
        let c = surface.triangle_coords(t);
        let n = surface.normals[t];
        let t1 = (c[1] - c[0]).normalize();
        let t2 = n.cross(&t1);
        TriFrame {
            centroid: surface.triangle_centroid(t),
            t1,
            t2,
            normal: n,
            scale: surface.triangle_diameter(t),
        }
    }

    pub fn local(&self, x: &Vec3) -> (f64, f64) {
        let d = x - self.centroid;
        (d.dot(&self.t1) / self.scale, d.dot(&self.t2) / self.scale)
    }

    pub fn to_world(&self, u_xi: f64, u_eta: f64) -> Vec3 {
        self.t1 * u_xi + self.t2 * u_eta
    }
}

fn local_dim(order: usize) -> usize {
    (order) * (order + 2) // (k+1)(k+3) with k = order-1
}

fn edge_dofs_per_edge(order: usize) -> usize {
    order // k+1
}

fn interior_dofs_per_tri(order: usize) -> usize {
    order * (order - 1) // (k+1)k
}

/// Surface Raviart-Thomas space with edge-flux and interior-moment dofs.
#[derive(Debug)]
pub struct SurfaceRtSpace {
    pub surface: Arc<SurfaceMesh>,
    pub order: usize,
    pub edges: Vec<[usize; 2]>,
    pub n_dofs: usize,
    /// Per triangle: global dof indices (3*order edge dofs then interior).
    pub element_dofs: Vec<Vec<usize>>,
    /// Per triangle: +-1 per local dof relating local functionals to globals.
    pub element_signs: Vec<Vec<f64>>,
    pub frames: Vec<TriFrame>,
    inv_vandermonde: Vec<DMatrix<f64>>,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl SurfaceRtSpace {
    pub fn new(surface: Arc<SurfaceMesh>, order: usize) -> Result<SurfaceRtSpace> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!(
                "surface RT order must be 1 or 2, got {order}"
            )));
        }
        let nt = surface.triangles.len();
        // Enumerate edges and the opposite-vertex table used for the
        // reference-side rule (lowest opposite global vertex wins).
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_min_opposite: Vec<usize> = Vec::new();
        for tri in &surface.triangles {
            for k in 0..3 {
                let e = edge_key(tri[k], tri[(k + 1) % 3]);
                let opp = tri[(k + 2) % 3];
                match edge_index.get(&e) {
                    None => {
                        edge_index.insert(e, edges.len());
                        edges.push(e);
                        edge_min_opposite.push(opp);
                    }
                    Some(&idx) => {
                        edge_min_opposite[idx] = edge_min_opposite[idx].min(opp);
                    }
                }
            }
        }

        let neb = edge_dofs_per_edge(order);
        let nib = interior_dofs_per_tri(order);
        let n_dofs = edges.len() * neb + nt * nib;
        let dim = local_dim(order);
        let rule = quadrature::triangle_rule_for_degree(2 * order + 2);
        let (gl_x, gl_w) = quadrature::gauss_legendre_01(order + 2);

        let mut element_dofs = Vec::with_capacity(nt);
        let mut element_signs = Vec::with_capacity(nt);
        let mut frames = Vec::with_capacity(nt);
        let mut inv_vandermonde = Vec::with_capacity(nt);

        for t in 0..nt {
            let tri = surface.triangles[t];
            let frame = TriFrame::new(&surface, t);
            let coords = surface.triangle_coords(t);
            let centroid = surface.triangle_centroid(t);
            let mut dofs = Vec::with_capacity(dim);
            let mut signs = Vec::with_capacity(dim);
            let mut v = DMatrix::<f64>::zeros(dim, dim);
            let mut row = 0;

            for k in 0..3 {
                let (ga, gb) = (tri[k], tri[(k + 1) % 3]);
                let opp = tri[(k + 2) % 3];
                let e = edge_key(ga, gb);
                let ei = edge_index[&e];
                let reference_side = edge_min_opposite[ei] == opp;
                let sign = if reference_side { 1.0 } else { -1.0 };
                // Sorted endpoints give the shared parameterization.
                let pa = surface.vertices[e[0]];
                let pb = surface.vertices[e[1]];
                let len = (pb - pa).norm();
                let tau = (pb - pa) / len;
                // Outward in-plane co-normal of this triangle.
                let mut nu = tau.cross(&frame.normal);
                if ((pa + pb) * 0.5 - centroid).dot(&nu) < 0.0 {
                    nu = -nu;
                }
                for m in 0..neb {
                    dofs.push(ei * neb + m);
                    signs.push(sign);
                }
                // Edge moments of basis . nu against {1, 2s-1}.
                for (xs, &w) in gl_x.iter().zip(&gl_w) {
                    let x = pa + tau * (xs * len);
                    let shape = eval_local_basis(&frame, order, &x);
                    let q = [1.0, 2.0 * xs - 1.0];
                    for (j, b) in shape.iter().enumerate() {
                        let un = b.dot(&nu) * w * len;
                        for m in 0..neb {
                            v[(row + m, j)] += un * q[m];
                        }
                    }
                }
                row += neb;
            }

            if nib > 0 {
                for m in 0..nib {
                    dofs.push(edges.len() * neb + t * nib + m);
                    signs.push(1.0);
                }
                let (pts, wts) = quadrature::map_triangle(&rule, &coords);
                for (x, &w) in pts.iter().zip(&wts) {
                    let shape = eval_local_basis(&frame, order, x);
                    for (j, b) in shape.iter().enumerate() {
                        v[(row, j)] += w * b.dot(&frame.t1);
                        v[(row + 1, j)] += w * b.dot(&frame.t2);
                    }
                }
            }

            let inv = v.clone().try_inverse().ok_or_else(|| {
                Error::DegenerateElement(format!("surface RT Vandermonde singular on triangle {t}"))
            })?;
            element_dofs.push(dofs);
            element_signs.push(signs);
            frames.push(frame);
            inv_vandermonde.push(inv);
        }

        Ok(SurfaceRtSpace {
            surface,
            order,
            edges,
            n_dofs,
            element_dofs,
            element_signs,
            frames,
            inv_vandermonde,
        })
    }

    /// Local basis coefficients of a global coefficient vector on triangle t.
    pub fn element_coeffs(&self, coeffs: &[f64], t: usize) -> Vec<f64> {
        let local: Vec<f64> = self.element_dofs[t]
            .iter()
            .zip(&self.element_signs[t])
            .map(|(&g, &s)| s * coeffs[g])
            .collect();
        let v = &self.inv_vandermonde[t];
        (0..local.len())
            .map(|j| (0..local.len()).map(|k| v[(j, k)] * local[k]).sum())
            .collect()
    }

    /// In-plane polynomial representation (u_xi, u_eta) over `mono2` of the
    /// field on triangle t.
    pub fn element_poly(&self, coeffs: &[f64], t: usize) -> [[f64; N_MONO2]; 2] {
        let c = self.element_coeffs(coeffs, t);
        basis_to_plane_polys(self.order, &c)
    }

    /// Divergence polynomial over {1, xi, eta} of the field on triangle t.
    pub fn element_divergence(&self, coeffs: &[f64], t: usize) -> [f64; 3] {
        let c = self.element_coeffs(coeffs, t);
        let s = self.frames[t].scale;
        let mut out = [0.0; 3];
        match self.order {
            1 => {
                // basis t1, t2, rho: div = 0, 0, 2/s
                out[0] = 2.0 * c[2] / s;
            }
            2 => {
                // t1*{1,xi,eta}, t2*{1,xi,eta}, rho*xi, rho*eta
                out[0] += c[1] / s; // t1*xi
                out[0] += c[5] / s; // t2*eta
                out[1] += 3.0 * c[6] / s; // rho*xi -> 3 xi / s
                out[2] += 3.0 * c[7] / s; // rho*eta -> 3 eta / s
            }
            _ => unreachable!(),
        }
        out
    }
}

/// Values of the local RT basis at a physical point on the triangle plane.
fn eval_local_basis(frame: &TriFrame, order: usize, x: &Vec3) -> Vec<Vec3> {
    let (xi, eta) = frame.local(x);
    let rho = frame.to_world(xi, eta);
    match order {
        1 => vec![frame.t1, frame.t2, rho],
        2 => vec![
            frame.t1,
            frame.t1 * xi,
            frame.t1 * eta,
            frame.t2,
            frame.t2 * xi,
            frame.t2 * eta,
            rho * xi,
            rho * eta,
        ],
        _ => unreachable!(),
    }
}

fn basis_to_plane_polys(order: usize, c: &[f64]) -> [[f64; N_MONO2]; 2] {
    let mut p = [[0.0; N_MONO2]; 2];
    match order {
        1 => {
            p[0][0] = c[0];
            p[1][0] = c[1];
            p[0][1] += c[2];
            p[1][2] += c[2];
        }
        2 => {
            // t1 * {1, xi, eta}
            p[0][0] += c[0];
            p[0][1] += c[1];
            p[0][2] += c[2];
            // t2 * {1, xi, eta}
            p[1][0] += c[3];
            p[1][1] += c[4];
            p[1][2] += c[5];
            // rho*xi: (xi^2, xi eta); rho*eta: (xi eta, eta^2)
            p[0][3] += c[6];
            p[1][4] += c[6];
            p[0][4] += c[7];
            p[1][5] += c[7];
        }
        _ => unreachable!(),
    }
    p
}

/// Tangential RT field on the surface.
#[derive(Debug, Clone)]
pub struct SurfaceRtField {
    pub space: Arc<SurfaceRtSpace>,
    pub coeffs: Vec<f64>,
    /// Precomputed per-triangle in-plane polynomials.
    pub polys: Vec<[[f64; N_MONO2]; 2]>,
}

impl SurfaceRtField {
    pub fn from_coeffs(space: Arc<SurfaceRtSpace>, coeffs: Vec<f64>) -> SurfaceRtField {
        let polys = (0..space.surface.triangles.len())
            .map(|t| space.element_poly(&coeffs, t))
            .collect();
        SurfaceRtField {
            space,
            coeffs,
            polys,
        }
    }

    pub fn eval_in(&self, t: usize, x: &Vec3) -> Vec3 {
        let frame = &self.space.frames[t];
        let (xi, eta) = frame.local(x);
        let m = mono2(xi, eta);
        let p = &self.polys[t];
        let u_xi: f64 = (0..N_MONO2).map(|k| p[0][k] * m[k]).sum();
        let u_eta: f64 = (0..N_MONO2).map(|k| p[1][k] * m[k]).sum();
        frame.to_world(u_xi, u_eta)
    }
}

/// Discontinuous per-triangle scalars of degree order-1, stored as
/// coefficients over {1, xi, eta} in the triangle frame (the quadratic slots
/// are unused; order <= 2 keeps the trace space linear).
#[derive(Debug, Clone)]
pub struct DiscScalar {
    pub surface: Arc<SurfaceMesh>,
    pub order: usize,
    /// 3 coefficients per triangle: value = c0 + c1*xi + c2*eta.
    pub coeffs: Vec<[f64; 3]>,
}

impl DiscScalar {
    pub fn zeros(surface: Arc<SurfaceMesh>, order: usize) -> DiscScalar {
        let n = surface.triangles.len();
        DiscScalar {
            surface,
            order,
            coeffs: vec![[0.0; 3]; n],
        }
    }

    /// Builds the trace representation from vertex values (linear per
    /// triangle, exact for order 2; order 1 keeps the mean).
    pub fn from_vertex_values(
        surface: Arc<SurfaceMesh>,
        order: usize,
        vertex_values: &[[f64; 3]],
    ) -> DiscScalar {
        let mut coeffs = Vec::with_capacity(surface.triangles.len());
        for (t, vals) in vertex_values.iter().enumerate() {
            if order == 1 {
                let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
                coeffs.push([mean, 0.0, 0.0]);
                continue;
            }
            let frame = TriFrame::new(&surface, t);
            let c = surface.triangle_coords(t);
            // Solve the 3x3 system c0 + c1 xi_v + c2 eta_v = val_v.
            let mut a = nalgebra::Matrix3::<f64>::zeros();
            let mut b = nalgebra::Vector3::<f64>::zeros();
            for k in 0..3 {
                let (xi, eta) = frame.local(&c[k]);
                a[(k, 0)] = 1.0;
                a[(k, 1)] = xi;
                a[(k, 2)] = eta;
                b[k] = vals[k];
            }
            let sol = a.lu().solve(&b).expect("non-degenerate triangle");
            coeffs.push([sol[0], sol[1], sol[2]]);
        }
        DiscScalar {
            surface,
            order,
            coeffs,
        }
    }

    pub fn eval_in(&self, t: usize, x: &Vec3) -> f64 {
        let frame = TriFrame::new(&self.surface, t);
        let (xi, eta) = frame.local(x);
        let c = self.coeffs[t];
        c[0] + c[1] * xi + c[2] * eta
    }

    /// Integral over one triangle (exact; rule of degree 2).
    pub fn integral_on(&self, t: usize) -> f64 {
        let rule = quadrature::triangle_rule_for_degree(2);
        let (pts, wts) = quadrature::map_triangle(&rule, &self.surface.triangle_coords(t));
        pts.iter()
            .zip(&wts)
            .map(|(x, &w)| w * self.eval_in(t, x))
            .sum()
    }

    /// Integrals over each boundary component.
    pub fn component_integrals(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.surface.n_components];
        for t in 0..self.surface.triangles.len() {
            acc[self.surface.component_id[t]] += self.integral_on(t);
        }
        acc
    }

    /// Subtracts the area-weighted mean on every component.
    pub fn remove_component_means(&mut self) {
        let ints = self.component_integrals();
        let areas: Vec<f64> = (0..self.surface.n_components)
            .map(|c| self.surface.component_area(c))
            .collect();
        for t in 0..self.surface.triangles.len() {
            let comp = self.surface.component_id[t];
            self.coeffs[t][0] -= ints[comp] / areas[comp];
        }
    }
}

/// Continuous piecewise-linear Lagrange space on the surface (vertex dofs).
#[derive(Debug)]
pub struct HatSpace {
    pub surface: Arc<SurfaceMesh>,
    /// Mesh vertex id of each dof.
    pub vertex_ids: Vec<usize>,
    /// Per triangle: the three dof indices.
    pub tri_dofs: Vec<[usize; 3]>,
    /// Boundary component of each dof.
    pub dof_component: Vec<usize>,
    pub n_dofs: usize,
}

impl HatSpace {
    pub fn new(surface: Arc<SurfaceMesh>) -> HatSpace {
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut vertex_ids = Vec::new();
        let mut dof_component = Vec::new();
        let mut tri_dofs = Vec::with_capacity(surface.triangles.len());
        for (t, tri) in surface.triangles.iter().enumerate() {
            let mut td = [0usize; 3];
            for k in 0..3 {
                let next = index.len();
                let id = *index.entry(tri[k]).or_insert_with(|| {
                    vertex_ids.push(tri[k]);
                    dof_component.push(surface.component_id[t]);
                    next
                });
                td[k] = id;
            }
            tri_dofs.push(td);
        }
        HatSpace {
            n_dofs: vertex_ids.len(),
            surface,
            vertex_ids,
            tri_dofs,
            dof_component,
        }
    }

    /// Hat value of local vertex k at x on triangle t (barycentric).
    pub fn hat_value(&self, t: usize, x: &Vec3) -> [f64; 3] {
        let c = self.surface.triangle_coords(t);
        let n = self.surface.normals[t];
        let area2 = (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&n);
        let l0 = (c[2] - c[1]).cross(&(x - c[1])).dot(&n) / area2;
        let l1 = (c[0] - c[2]).cross(&(x - c[2])).dot(&n) / area2;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn eval_in(&self, coeffs: &[f64], t: usize, x: &Vec3) -> f64 {
        let l = self.hat_value(t, x);
        let d = self.tri_dofs[t];
        l[0] * coeffs[d[0]] + l[1] * coeffs[d[1]] + l[2] * coeffs[d[2]]
    }

    /// Mean-value row per component: m[i][dof] = integral of the hat over
    /// component i.
    pub fn component_mean_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.n_dofs]; self.surface.n_components];
        for (t, dofs) in self.tri_dofs.iter().enumerate() {
            let a = self.surface.triangle_area(t) / 3.0;
            let comp = self.surface.component_id[t];
            for &d in dofs {
                rows[comp][d] += a;
            }
        }
        rows
    }

    /// Subtracts per-component means from a coefficient vector in place.
    pub fn remove_component_means(&self, coeffs: &mut [f64]) {
        let rows = self.component_mean_rows();
        for (i, row) in rows.iter().enumerate() {
            let area: f64 = row.iter().sum();
            let mean: f64 = row.iter().zip(coeffs.iter()).map(|(&r, &c)| r * c).sum::<f64>() / area;
            for (d, c) in coeffs.iter_mut().enumerate() {
                if self.dof_component[d] == i {
                    *c -= mean;
                }
            }
        }
    }
}

/// Per-triangle constant vectors of a piecewise operator applied to hats
/// (surface gradient or surface vector curl).
#[derive(Debug, Clone)]
pub struct SurfaceOperator {
    /// vectors[t][k]: the constant vector contributed by local vertex k on t.
    pub vectors: Vec<[Vec3; 3]>,
}

impl SurfaceOperator {
    /// Applies the operator to a hat coefficient vector on one triangle.
    pub fn apply(&self, space: &HatSpace, coeffs: &[f64], t: usize) -> Vec3 {
        let d = space.tri_dofs[t];
        self.vectors[t][0] * coeffs[d[0]]
            + self.vectors[t][1] * coeffs[d[1]]
            + self.vectors[t][2] * coeffs[d[2]]
    }
}

/// Exact element-wise surface gradient of the hat basis: for vertex a of
/// triangle (a,b,c) with outward normal n, grad lambda_a = n x (c-b) / (2A).
pub fn surface_gradient_matrix(space: &HatSpace) -> SurfaceOperator {
    let surface = &space.surface;
    let mut vectors = Vec::with_capacity(surface.triangles.len());
    for t in 0..surface.triangles.len() {
        let c = surface.triangle_coords(t);
        let n = surface.normals[t];
        let area2 = (c[1] - c[0]).cross(&(c[2] - c[0])).norm();
        vectors.push([
            n.cross(&(c[2] - c[1])) / area2,
            n.cross(&(c[0] - c[2])) / area2,
            n.cross(&(c[1] - c[0])) / area2,
        ]);
    }
    SurfaceOperator { vectors }
}

/// Surface vector curl of the hat basis: curl_G v = n x grad_G v, so for
/// vertex a it is -(c-b)/(2A).
pub fn surface_vector_curl_matrix(space: &HatSpace) -> SurfaceOperator {
    let surface = &space.surface;
    let mut vectors = Vec::with_capacity(surface.triangles.len());
    for t in 0..surface.triangles.len() {
        let c = surface.triangle_coords(t);
        let area2 = (c[1] - c[0]).cross(&(c[2] - c[0])).norm();
        vectors.push([
            (c[1] - c[2]) / area2,
            (c[2] - c[0]) / area2,
            (c[0] - c[1]) / area2,
        ]);
    }
    SurfaceOperator { vectors }
}

impl SurfaceMesh {
    /// Builds a standalone surface (test fixtures such as plates and
    /// spheres); normals follow the stored vertex ordering.
    pub fn from_triangles(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> SurfaceMesh {
        let mut normals = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let a = vertices[tri[0]];
            let b = vertices[tri[1]];
            let c = vertices[tri[2]];
            normals.push((b - a).cross(&(c - a)).normalize());
        }
        // Union-find over shared edges, as in extract_boundary.
        let mut uf: Vec<usize> = (0..triangles.len()).collect();
        fn find(uf: &mut Vec<usize>, mut i: usize) -> usize {
            while uf[i] != i {
                uf[i] = uf[uf[i]];
                i = uf[i];
            }
            i
        }
        let mut owner: HashMap<[usize; 2], usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = edge_key(tri[k], tri[(k + 1) % 3]);
                if let Some(&o) = owner.get(&e) {
                    let (ra, rb) = (find(&mut uf, t), find(&mut uf, o));
                    if ra != rb {
                        uf[ra] = rb;
                    }
                } else {
                    owner.insert(e, t);
                }
            }
        }
        let mut label: HashMap<usize, usize> = HashMap::new();
        let mut component_id = vec![0usize; triangles.len()];
        for t in 0..triangles.len() {
            let r = find(&mut uf, t);
            let next = label.len();
            component_id[t] = *label.entry(r).or_insert(next);
        }
        let parent = vec![(usize::MAX, usize::MAX); triangles.len()];
        SurfaceMesh {
            triangles,
            normals,
            component_id,
            n_components: label.len(),
            parent,
            vertices,
        }
    }
}
