//! Volume Raviart-Thomas elements RT^n on tetrahedra, n in {1, 2}, with the
//! canonical (face + interior moment) interpolation.
//!
//! Element bases are expressed directly in centred, scaled physical
//! coordinates; the RT space is affine invariant so no Piola transform is
//! needed. Face dofs are moments of u.n against a canonical basis on the
//! face with the global normal fixed by the sorted vertex triple, which makes
//! shared dofs single-valued.

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, TetMesh, LOCAL_FACES};
use crate::quadrature::{self, Vec3};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Scaled monomials of degree <= 2 in 3 variables, the evaluation basis for
/// element polynomials: {1, x, y, z, x^2, xy, xz, y^2, yz, z^2}.
pub const N_MONO3: usize = 10;

#[inline]
pub fn mono3(xi: f64, eta: f64, zeta: f64) -> [f64; N_MONO3] {
    [
        1.0,
        xi,
        eta,
        zeta,
        xi * xi,
        xi * eta,
        xi * zeta,
        eta * eta,
        eta * zeta,
        zeta * zeta,
    ]
}

/// Degrees-of-freedom layout for RT^n on a tet mesh.
#[derive(Debug)]
pub struct VolumeRtSpace {
    pub mesh: Arc<TetMesh>,
    /// Order n >= 1 (lowest order n = 1).
    pub order: usize,
    /// Moments per face: n(n+1)/2.
    pub face_dofs: usize,
    /// Interior moments per tet: 3 * dim P_{n-2}.
    pub interior_dofs: usize,
    pub n_dofs: usize,
    /// Per element: global dof indices, 4*face_dofs + interior_dofs entries.
    pub element_dofs: Vec<Vec<usize>>,
    /// Per element: inverse Vandermonde mapping dof values to basis coeffs.
    inv_vandermonde: Vec<DMatrix<f64>>,
}

fn face_monomial_count(order: usize) -> usize {
    order * (order + 1) / 2 // dim P_{n-1} on a triangle
}

fn interior_moment_count(order: usize) -> usize {
    if order >= 2 {
        3 * (order - 1) * order * (order + 1) / 6
    } else {
        0
    }
}

/// Number of local RT basis functions on a tet.
fn local_dim(order: usize) -> usize {
    4 * face_monomial_count(order) + interior_moment_count(order)
}

/// Geometry of a global face: coordinates sorted by global vertex index and
/// the global unit normal from the sorted ordering.
struct FaceFrame {
    a: Vec3,
    e1: Vec3,
    e2: Vec3,
    normal: Vec3,
    jac: f64, // 2*area
}

impl FaceFrame {
    fn new(mesh: &TetMesh, verts: [usize; 3]) -> FaceFrame {
        let a = mesh.vertices[verts[0]];
        let b = mesh.vertices[verts[1]];
        let c = mesh.vertices[verts[2]];
        let e1 = b - a;
        let e2 = c - a;
        let nr = e1.cross(&e2);
        let jac = nr.norm();
        FaceFrame {
            a,
            e1,
            e2,
            normal: nr / jac,
            jac,
        }
    }

    fn point(&self, l1: f64, l2: f64) -> Vec3 {
        self.a + self.e1 * l1 + self.e2 * l2
    }
}

/// Face moment basis: monomials {1, l1, l2, ...} in the barycentric
/// coordinates of the sorted vertex ordering, dim P_{n-1}.
fn face_monomials(order: usize, l1: f64, l2: f64) -> Vec<f64> {
    match order {
        1 => vec![1.0],
        2 => vec![1.0, l1, l2],
        _ => unreachable!("orders 1 and 2 only"),
    }
}

/// Local RT basis on one element, expressed over centred scaled coordinates.
/// Returns the value of basis function j at (xi, eta, zeta).
pub struct ElementBasis {
    pub centroid: Vec3,
    pub scale: f64,
    pub order: usize,
}

impl ElementBasis {
    pub fn new(mesh: &TetMesh, it: usize, order: usize) -> ElementBasis {
        ElementBasis {
            centroid: mesh.tet_centroid(it),
            scale: mesh.tet_diameter(it),
            order,
        }
    }

    pub fn local_coords(&self, x: &Vec3) -> (f64, f64, f64) {
        let d = (x - self.centroid) / self.scale;
        (d.x, d.y, d.z)
    }

    /// Values of all local basis functions at x.
    pub fn eval(&self, x: &Vec3) -> Vec<Vec3> {
        let (xi, eta, zeta) = self.local_coords(x);
        let rho = Vec3::new(xi, eta, zeta);
        let mut out = Vec::with_capacity(local_dim(self.order));
        let monos: &[f64] = match self.order {
            1 => &[1.0],
            2 => &[1.0, xi, eta, zeta],
            _ => unreachable!(),
        };
        for &m in monos {
            out.push(Vec3::new(m, 0.0, 0.0));
            out.push(Vec3::new(0.0, m, 0.0));
            out.push(Vec3::new(0.0, 0.0, m));
        }
        match self.order {
            1 => out.push(rho),
            2 => {
                out.push(rho * xi);
                out.push(rho * eta);
                out.push(rho * zeta);
            }
            _ => unreachable!(),
        }
        out
    }

    /// Physical divergence of each local basis function as polynomial
    /// coefficients over {1, xi, eta, zeta} (degree <= n-1).
    pub fn divergence_coeffs(&self) -> Vec<[f64; 4]> {
        let s = self.scale;
        let mut out = Vec::with_capacity(local_dim(self.order));
        match self.order {
            1 => {
                // e_i * 1 are divergence free; div rho = 3/s.
                out.extend_from_slice(&[[0.0; 4]; 3]);
                out.push([3.0 / s, 0.0, 0.0, 0.0]);
            }
            2 => {
                // e_i * m: div = (1/s) d m / d coord_i.
                // monomial order: 1, xi, eta, zeta, interleaved per component.
                out.extend_from_slice(&[[0.0; 4]; 3]); // m = 1
                out.push([1.0 / s, 0.0, 0.0, 0.0]); // e1 * xi
                out.push([0.0; 4]); // e2 * xi
                out.push([0.0; 4]); // e3 * xi
                out.push([0.0; 4]); // e1 * eta
                out.push([1.0 / s, 0.0, 0.0, 0.0]); // e2 * eta
                out.push([0.0; 4]); // e3 * eta
                out.push([0.0; 4]); // e1 * zeta
                out.push([0.0; 4]); // e2 * zeta
                out.push([1.0 / s, 0.0, 0.0, 0.0]); // e3 * zeta
                // rho * m with m in {xi, eta, zeta}: div = (3 m + rho.grad m)/s = 4 m / s.
                out.push([0.0, 4.0 / s, 0.0, 0.0]);
                out.push([0.0, 0.0, 4.0 / s, 0.0]);
                out.push([0.0, 0.0, 0.0, 4.0 / s]);
            }
            _ => unreachable!(),
        }
        out
    }
}

impl VolumeRtSpace {
    pub fn new(mesh: Arc<TetMesh>, order: usize) -> Result<VolumeRtSpace> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!(
                "RT order must be 1 or 2, got {order}"
            )));
        }
        let nfb = face_monomial_count(order);
        let nib = interior_moment_count(order);
        let n_faces = mesh.faces().len();
        let n_tets = mesh.tets.len();
        let n_dofs = n_faces * nfb + n_tets * nib;

        let rule_f = quadrature::triangle_rule_for_degree(2 * order + 2);
        let rule_t = quadrature::tet_rule_for_degree(2 * order + 2);

        let mut element_dofs = Vec::with_capacity(n_tets);
        let mut inv_vandermonde = Vec::with_capacity(n_tets);
        let dim = local_dim(order);

        for it in 0..n_tets {
            let tet = mesh.tets[it];
            let basis = ElementBasis::new(&mesh, it, order);
            let mut dofs = Vec::with_capacity(dim);
            let mut v = DMatrix::<f64>::zeros(dim, dim);
            let mut row = 0;

            for local in LOCAL_FACES.iter() {
                let verts_raw = [tet[local[0]], tet[local[1]], tet[local[2]]];
                let fi = mesh.face_index(verts_raw).expect("face exists");
                let mut sorted = verts_raw;
                sorted.sort_unstable();
                let frame = FaceFrame::new(&mesh, sorted);
                for m in 0..nfb {
                    dofs.push(fi * nfb + m);
                }
                // Moments of (basis . n_global) against face monomials.
                for (iq, &w) in rule_f.weights.iter().enumerate() {
                    let l1 = rule_f.points[2 * iq];
                    let l2 = rule_f.points[2 * iq + 1];
                    let x = frame.point(l1, l2);
                    let q = face_monomials(order, l1, l2);
                    let shape = basis.eval(&x);
                    for (j, b) in shape.iter().enumerate() {
                        let un = b.dot(&frame.normal) * w * frame.jac;
                        for (m, &qm) in q.iter().enumerate() {
                            v[(row + m, j)] += un * qm;
                        }
                    }
                }
                row += nfb;
            }

            if nib > 0 {
                for m in 0..nib {
                    dofs.push(n_faces * nfb + it * nib + m);
                }
                let coords = mesh.tet_coords(it);
                let (pts, wts) = quadrature::map_tet(&rule_t, &coords);
                for (x, &w) in pts.iter().zip(&wts) {
                    let shape = basis.eval(x);
                    for (j, b) in shape.iter().enumerate() {
                        // interior moments against e_1, e_2, e_3
                        v[(row, j)] += w * b.x;
                        v[(row + 1, j)] += w * b.y;
                        v[(row + 2, j)] += w * b.z;
                    }
                }
            }

            let inv = v.clone().try_inverse().ok_or_else(|| {
                Error::DegenerateElement(format!("RT Vandermonde singular on tet {it}"))
            })?;
            element_dofs.push(dofs);
            inv_vandermonde.push(inv);
        }

        Ok(VolumeRtSpace {
            mesh,
            order,
            face_dofs: nfb,
            interior_dofs: nib,
            n_dofs,
            element_dofs,
            inv_vandermonde,
        })
    }

    /// Local basis-coefficient vector of a field on one element.
    fn element_coeffs(&self, coeffs: &[f64], it: usize) -> Vec<f64> {
        let dofs = &self.element_dofs[it];
        let local: Vec<f64> = dofs.iter().map(|&g| coeffs[g]).collect();
        let v = &self.inv_vandermonde[it];
        let mut out = vec![0.0; local.len()];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &l) in local.iter().enumerate() {
                acc += v[(j, k)] * l;
            }
            *o = acc;
        }
        out
    }
}

/// A field in RT^n(Omega): one coefficient per global dof.
#[derive(Debug)]
pub struct RTField {
    pub space: Arc<VolumeRtSpace>,
    pub coeffs: Vec<f64>,
    /// Per element, per component: polynomial coefficients over the scaled
    /// monomial basis `mono3`, precomputed for fast evaluation.
    pub element_polys: Vec<[[f64; N_MONO3]; 3]>,
}

impl RTField {
    pub fn from_coeffs(space: Arc<VolumeRtSpace>, coeffs: Vec<f64>) -> RTField {
        assert_eq!(coeffs.len(), space.n_dofs);
        let mut element_polys = Vec::with_capacity(space.mesh.tets.len());
        for it in 0..space.mesh.tets.len() {
            let c = space.element_coeffs(&coeffs, it);
            element_polys.push(basis_to_component_polys(space.order, &c));
        }
        RTField {
            space,
            coeffs,
            element_polys,
        }
    }

    /// Value at a point of a given element (no point location: the caller
    /// states the element, as points are always generated element-wise).
    pub fn eval_in(&self, it: usize, x: &Vec3) -> Vec3 {
        let basis = ElementBasis::new(&self.space.mesh, it, self.space.order);
        let (xi, eta, zeta) = basis.local_coords(x);
        let m = mono3(xi, eta, zeta);
        let p = &self.element_polys[it];
        let mut out = Vec3::zeros();
        for c in 0..3 {
            let mut acc = 0.0;
            for (k, &mk) in m.iter().enumerate() {
                acc += p[c][k] * mk;
            }
            out[c] = acc;
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        let mesh = &self.space.mesh;
        let rule = quadrature::tet_rule_for_degree(2 * self.space.order + 2);
        let mut acc = 0.0;
        for it in 0..mesh.tets.len() {
            let (pts, wts) = quadrature::map_tet(&rule, &mesh.tet_coords(it));
            for (x, &w) in pts.iter().zip(&wts) {
                acc += w * self.eval_in(it, x).norm_squared();
            }
        }
        acc.sqrt()
    }
}

/// Converts local basis coefficients to per-component monomial polynomials.
fn basis_to_component_polys(order: usize, c: &[f64]) -> [[f64; N_MONO3]; 3] {
    let mut p = [[0.0; N_MONO3]; 3];
    match order {
        1 => {
            // basis: e1, e2, e3, rho
            p[0][0] = c[0];
            p[1][0] = c[1];
            p[2][0] = c[2];
            p[0][1] += c[3];
            p[1][2] += c[3];
            p[2][3] += c[3];
        }
        2 => {
            // basis: e_i * {1, xi, eta, zeta} (12), rho*xi, rho*eta, rho*zeta
            let mono_of = [0usize, 1, 2, 3]; // 1, xi, eta, zeta
            for (mi, &mono) in mono_of.iter().enumerate() {
                for comp in 0..3 {
                    p[comp][mono] += c[3 * mi + comp];
                }
            }
            // rho*xi = (xi,eta,zeta)*xi -> comps (xi^2, xi eta, xi zeta)
            let cx = c[12];
            p[0][4] += cx; // xi^2
            p[1][5] += cx; // xi eta
            p[2][6] += cx; // xi zeta
            let cy = c[13];
            p[0][5] += cy; // xi eta
            p[1][7] += cy; // eta^2
            p[2][8] += cy; // eta zeta
            let cz = c[14];
            p[0][6] += cz; // xi zeta
            p[1][8] += cz; // eta zeta
            p[2][9] += cz; // zeta^2
        }
        _ => unreachable!(),
    }
    p
}

/// Canonical RT interpolation of a vector field: face moments of f.n against
/// P_{n-1}(face) plus interior moments against (P_{n-2})^3, all by quadrature
/// exact for degree 2n+2.
pub fn rt_interpolate<F>(f: F, order: usize, mesh: Arc<TetMesh>) -> Result<RTField>
where
    F: Fn(&Vec3) -> Vec3,
{
    let space = Arc::new(VolumeRtSpace::new(mesh, order)?);
    rt_interpolate_in(&space, |_it, x| f(x)).map(|c| RTField::from_coeffs(space.clone(), c))
}

/// Interpolation with an element hint, used when the integrand is itself a
/// piecewise field. Returns the raw coefficient vector.
pub fn rt_interpolate_in<F>(space: &VolumeRtSpace, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &Vec3) -> Vec3,
{
    let mesh = &space.mesh;
    let order = space.order;
    let nfb = space.face_dofs;
    let nib = space.interior_dofs;
    let rule_f = quadrature::triangle_rule_for_degree(2 * order + 2);
    let rule_t = quadrature::tet_rule_for_degree(2 * order + 2);
    let mut coeffs = vec![0.0; space.n_dofs];

    // Face moments: the monomial mass matrix on the face must be inverted so
    // the dof stores the moment itself (the Vandermonde used the same
    // functionals, so moments are the dof values).
    for (fi, face) in mesh.faces().iter().enumerate() {
        let (it, _) = face.tets[0];
        let frame = FaceFrame::new(mesh, face.verts);
        let mut moments = vec![0.0; nfb];
        for (iq, &w) in rule_f.weights.iter().enumerate() {
            let l1 = rule_f.points[2 * iq];
            let l2 = rule_f.points[2 * iq + 1];
            let x = frame.point(l1, l2);
            let val = f(it, &x);
            if !val.iter().all(|v| v.is_finite()) {
                return Err(Error::QuadratureFailure(format!(
                    "field returned non-finite value at {x:?}"
                )));
            }
            let un = val.dot(&frame.normal) * w * frame.jac;
            for (m, qm) in face_monomials(order, l1, l2).iter().enumerate() {
                moments[m] += un * qm;
            }
        }
        for m in 0..nfb {
            coeffs[fi * nfb + m] = moments[m];
        }
    }

    if nib > 0 {
        let base = mesh.faces().len() * nfb;
        for it in 0..mesh.tets.len() {
            let (pts, wts) = quadrature::map_tet(&rule_t, &mesh.tet_coords(it));
            let mut moments = [0.0; 3];
            for (x, &w) in pts.iter().zip(&wts) {
                let val = f(it, x);
                if !val.iter().all(|v| v.is_finite()) {
                    return Err(Error::QuadratureFailure(format!(
                        "field returned non-finite value at {x:?}"
                    )));
                }
                moments[0] += w * val.x;
                moments[1] += w * val.y;
                moments[2] += w * val.z;
            }
            for m in 0..3 {
                coeffs[base + it * nib + m] = moments[m];
            }
        }
    }

    Ok(coeffs)
}

/// Element-wise divergence of an RT field: exact polynomial coefficients over
/// {1, xi, eta, zeta} per element (scaled local coordinates).
pub struct DivergenceField {
    pub space: Arc<VolumeRtSpace>,
    pub coeffs: Vec<[f64; 4]>,
}

impl DivergenceField {
    pub fn eval_in(&self, it: usize, x: &Vec3) -> f64 {
        let basis = ElementBasis::new(&self.space.mesh, it, self.space.order);
        let (xi, eta, zeta) = basis.local_coords(x);
        let c = self.coeffs[it];
        c[0] + c[1] * xi + c[2] * eta + c[3] * zeta
    }

    /// Max |div| over the mesh; exact for the linear per-element polynomials
    /// (max attained at vertices).
    pub fn max_abs(&self) -> f64 {
        let mesh = &self.space.mesh;
        let mut m: f64 = 0.0;
        for it in 0..mesh.tets.len() {
            for v in mesh.tet_coords(it) {
                m = m.max(self.eval_in(it, &v).abs());
            }
        }
        m
    }
}

pub fn divergence_field(field: &RTField) -> DivergenceField {
    let space = field.space.clone();
    let mut coeffs = Vec::with_capacity(space.mesh.tets.len());
    for it in 0..space.mesh.tets.len() {
        let local = space.element_coeffs(&field.coeffs, it);
        let basis = ElementBasis::new(&space.mesh, it, space.order);
        let div = basis.divergence_coeffs();
        let mut acc = [0.0; 4];
        for (j, d) in div.iter().enumerate() {
            for k in 0..4 {
                acc[k] += local[j] * d[k];
            }
        }
        coeffs.push(acc);
    }
    DivergenceField { space, coeffs }
}

/// One-sided normal trace of an RT field on the boundary, as per-triangle
/// vertex values (the trace is in P_{n-1} per triangle; exact).
pub fn normal_trace(field: &RTField, surface: &SurfaceMesh) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(surface.triangles.len());
    for (t, tri) in surface.triangles.iter().enumerate() {
        let (it, _) = surface.parent[t];
        let n = surface.normals[t];
        let mut vals = [0.0; 3];
        for k in 0..3 {
            let x = surface.vertices[tri[k]];
            vals[k] = field.eval_in(it, &x).dot(&n);
        }
        if field.space.order == 1 {
            // Constant trace: use the centroid value at all vertices.
            let c = surface.triangle_centroid(t);
            let v = field.eval_in(it, &c).dot(&n);
            vals = [v, v, v];
        }
        out.push(vals);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticField;
    use crate::mesh::{extract_boundary, fixtures};
    use rand::Rng;
    use rand::SeedableRng;

    fn sample_points(mesh: &TetMesh, rng: &mut impl Rng, count: usize) -> Vec<(usize, Vec3)> {
        (0..count)
            .map(|_| {
                let it = rng.gen_range(0..mesh.tets.len());
                let c = mesh.tet_coords(it);
                let mut b = [
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                ];
                let s: f64 = b.iter().sum();
                b.iter_mut().for_each(|x| *x /= s);
                let x = c[0] * b[0] + c[1] * b[1] + c[2] * b[2] + c[3] * b[3];
                (it, x)
            })
            .collect()
    }

    #[test]
    fn constant_field_reproduced_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for order in [1, 2] {
            let mesh = Arc::new(fixtures::cube_grid(2));
            let f = AnalyticField::Constant {
                value: [0.0, 0.0, 1.0],
            };
            let fh = rt_interpolate(|x| f.eval(x), order, mesh.clone()).unwrap();
            for (it, x) in sample_points(&mesh, &mut rng, 50) {
                let err = (fh.eval_in(it, &x) - f.eval(&x)).norm();
                assert!(err < 1e-12, "order {order}: err {err}");
            }
        }
    }

    #[test]
    fn linear_field_exact_for_order_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mesh = Arc::new(fixtures::cube_grid(2));
        let f = AnalyticField::RigidRotation { amplitude: 2.0 };
        let fh = rt_interpolate(|x| f.eval(x), 2, mesh.clone()).unwrap();
        let mut max_err: f64 = 0.0;
        for (it, x) in sample_points(&mesh, &mut rng, 100) {
            max_err = max_err.max((fh.eval_in(it, &x) - f.eval(&x)).norm());
        }
        assert!(max_err < 1e-12, "max sample error {max_err}");
    }

    #[test]
    fn zero_field_gives_zero_coefficients() {
        let mesh = Arc::new(fixtures::cube_grid(1));
        let fh = rt_interpolate(|_| Vec3::zeros(), 2, mesh).unwrap();
        assert!(fh.coeffs.iter().all(|&c| c.abs() < 1e-14));
    }

    #[test]
    fn divergence_of_linear_field() {
        let mesh = Arc::new(fixtures::cube_grid(2));
        // f = (x1, 0, 0): div = 1 everywhere.
        let fh = rt_interpolate(|x| Vec3::new(x.x, 0.0, 0.0), 2, mesh.clone()).unwrap();
        let div = divergence_field(&fh);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (it, x) in sample_points(&mesh, &mut rng, 40) {
            assert!((div.eval_in(it, &x) - 1.0).abs() < 1e-11);
        }
        // rigid rotation: div = 0
        let fh = rt_interpolate(
            |x| AnalyticField::RigidRotation { amplitude: 1.0 }.eval(x),
            2,
            mesh.clone(),
        )
        .unwrap();
        assert!(divergence_field(&fh).max_abs() < 1e-12);
    }

    #[test]
    fn commuting_property_for_polynomial_divergence() {
        // div f in P_{n-1} is reproduced exactly by div of the interpolant.
        let mesh = Arc::new(fixtures::cube_grid(2));
        let f = |x: &Vec3| Vec3::new(x.x * x.x, x.y, 0.0); // div = 2 x1 + 1
        let fh = rt_interpolate(f, 2, mesh.clone()).unwrap();
        let div = divergence_field(&fh);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for (it, x) in sample_points(&mesh, &mut rng, 40) {
            let exact = 2.0 * x.x + 1.0;
            assert!(
                (div.eval_in(it, &x) - exact).abs() < 1e-11,
                "at {x:?}: {} vs {exact}",
                div.eval_in(it, &x)
            );
        }
    }

    #[test]
    fn interpolation_is_a_projection() {
        let mesh = Arc::new(fixtures::cube_grid(2));
        let space = Arc::new(VolumeRtSpace::new(mesh.clone(), 2).unwrap());
        // Random RT coefficients, re-interpolated from its own point values.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let coeffs: Vec<f64> = (0..space.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = RTField::from_coeffs(space.clone(), coeffs.clone());
        let back = rt_interpolate_in(&space, |it, x| field.eval_in(it, x)).unwrap();
        let scale: f64 = coeffs.iter().fold(0.0f64, |a: f64, &b| a.max(b.abs()));
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn normal_trace_of_vertical_field_on_cube() {
        let mesh = Arc::new(fixtures::cube_grid(2));
        let surface = extract_boundary(&mesh);
        let fh = rt_interpolate(|_| Vec3::new(0.0, 0.0, 1.0), 2, mesh.clone()).unwrap();
        let trace = normal_trace(&fh, &surface);
        for (t, vals) in trace.iter().enumerate() {
            let n = surface.normals[t];
            let expect = n.z;
            for v in vals {
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_convergence_rate() {
        // f = (sin(pi x2), 0, 0): rate h^n in L2.
        for order in [1usize, 2] {
            let mut errs = Vec::new();
            for n in [2usize, 4] {
                let mesh = Arc::new(fixtures::cube_grid(n));
                let f = |x: &Vec3| Vec3::new((std::f64::consts::PI * x.y).sin(), 0.0, 0.0);
                let fh = rt_interpolate(f, order, mesh.clone()).unwrap();
                let rule = quadrature::tet_rule_for_degree(8);
                let mut acc = 0.0;
                for it in 0..mesh.tets.len() {
                    let (pts, wts) = quadrature::map_tet(&rule, &mesh.tet_coords(it));
                    for (x, &w) in pts.iter().zip(&wts) {
                        acc += w * (fh.eval_in(it, &x) - f(&x)).norm_squared();
                    }
                }
                errs.push(acc.sqrt());
            }
            let rate = (errs[0] / errs[1]).log2();
            assert!(
                (rate - order as f64).abs() < 0.2,
                "order {order}: observed rate {rate}, errors {errs:?}"
            );
        }
    }
}
