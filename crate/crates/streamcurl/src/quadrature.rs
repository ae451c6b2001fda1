//! Gauss rules on intervals and simplices.
//!
//! Simplex rules are conical products of Gauss-Jacobi rules, so any requested
//! degree is available. Weights are positive and sum to the reference-simplex
//! measure (1 for [0,1], 1/2 for the triangle, 1/6 for the tetrahedron).

use nalgebra::{DMatrix, Vector3};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

pub type Vec3 = Vector3<f64>;

/// Gauss-Jacobi rule on [0,1] with weight (1-x)^alpha, exact for degree 2q-1.
fn gauss_jacobi_01(q: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let beta = 0.0;
    let ab = alpha + beta;
    // Recurrence coefficients of monic Jacobi polynomials on [-1,1].
    let mut diag = vec![0.0; q];
    let mut off = vec![0.0; q.saturating_sub(1)];
    diag[0] = (beta - alpha) / (ab + 2.0);
    for k in 1..q {
        let kf = k as f64;
        let d = 2.0 * kf + ab;
        diag[k] = (beta * beta - alpha * alpha) / (d * (d + 2.0));
    }
    for k in 1..q {
        let kf = k as f64;
        let d = 2.0 * kf + ab;
        let b2 = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
            / (d * d * (d + 1.0) * (d - 1.0));
        off[k - 1] = b2.sqrt();
    }
    // mu0 = int_{-1}^{1} (1-x)^alpha dx = 2^{alpha+1} / (alpha+1)   (beta = 0)
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);

    // Golub-Welsch via dense symmetric eigendecomposition.
    let mut jm = DMatrix::<f64>::zeros(q, q);
    for k in 0..q {
        jm[(k, k)] = diag[k];
    }
    for k in 0..q - 1 {
        jm[(k, k + 1)] = off[k];
        jm[(k + 1, k)] = off[k];
    }
    let eig = jm.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let t = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (t, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Map [-1,1] -> [0,1]: x = (1+t)/2, weight scale (1/2)^{alpha+1}.
    let scale = 0.5f64.powf(alpha + 1.0);
    let nodes = pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect();
    let weights = pairs.iter().map(|p| scale * p.1).collect();
    (nodes, weights)
}

/// Gauss-Legendre rule on [0,1], exact for degree 2q-1.
pub fn gauss_legendre_01(q: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(q)
        .or_insert_with(|| gauss_jacobi_01(q, 0.0))
        .clone()
}

/// Quadrature rule on a reference simplex.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    /// Barycentric-style reference coordinates; 2 entries per point for
    /// triangles, 3 per point for tetrahedra.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub dim: usize,
}

impl SimplexRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Conical-product triangle rule on {x,y >= 0, x+y <= 1}, exact for degree 2q-1.
pub fn triangle_rule(q: usize) -> SimplexRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, SimplexRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(q)
        .or_insert_with(|| {
            let (xu, wu) = gauss_jacobi_01(q, 1.0);
            let (xv, wv) = gauss_jacobi_01(q, 0.0);
            let mut points = Vec::with_capacity(2 * q * q);
            let mut weights = Vec::with_capacity(q * q);
            for i in 0..q {
                for j in 0..q {
                    let x = xu[i];
                    let y = xv[j] * (1.0 - xu[i]);
                    points.push(x);
                    points.push(y);
                    weights.push(wu[i] * wv[j]);
                }
            }
            SimplexRule {
                points,
                weights,
                dim: 2,
            }
        })
        .clone()
}

/// Conical-product tetrahedron rule on {x,y,z >= 0, x+y+z <= 1}, exact for degree 2q-1.
pub fn tet_rule(q: usize) -> SimplexRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, SimplexRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(q)
        .or_insert_with(|| {
            let (xu, wu) = gauss_jacobi_01(q, 2.0);
            let (xv, wv) = gauss_jacobi_01(q, 1.0);
            let (xw, ww) = gauss_jacobi_01(q, 0.0);
            let mut points = Vec::with_capacity(3 * q * q * q);
            let mut weights = Vec::with_capacity(q * q * q);
            for i in 0..q {
                for j in 0..q {
                    for k in 0..q {
                        let x = xu[i];
                        let y = xv[j] * (1.0 - xu[i]);
                        let z = xw[k] * (1.0 - xu[i]) * (1.0 - xv[j]);
                        points.push(x);
                        points.push(y);
                        points.push(z);
                        weights.push(wu[i] * wv[j] * ww[k]);
                    }
                }
            }
            SimplexRule {
                points,
                weights,
                dim: 3,
            }
        })
        .clone()
}

/// Smallest conical rule exact for the given total degree.
pub fn triangle_rule_for_degree(degree: usize) -> SimplexRule {
    triangle_rule(degree / 2 + 1)
}

pub fn tet_rule_for_degree(degree: usize) -> SimplexRule {
    tet_rule(degree / 2 + 1)
}

/// Maps a reference-triangle rule onto a physical flat triangle in 3D.
/// Returned weights sum to the triangle area.
pub fn map_triangle(rule: &SimplexRule, v: &[Vec3; 3]) -> (Vec<Vec3>, Vec<f64>) {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let jac = e1.cross(&e2).norm(); // = 2*area
    let mut pts = Vec::with_capacity(rule.len());
    let mut wts = Vec::with_capacity(rule.len());
    for (i, &w) in rule.weights.iter().enumerate() {
        let xi = rule.points[2 * i];
        let eta = rule.points[2 * i + 1];
        pts.push(v[0] + e1 * xi + e2 * eta);
        wts.push(w * jac);
    }
    (pts, wts)
}

/// Maps a reference-tet rule onto a physical tetrahedron.
/// Returned weights sum to the tet volume.
pub fn map_tet(rule: &SimplexRule, v: &[Vec3; 4]) -> (Vec<Vec3>, Vec<f64>) {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let e3 = v[3] - v[0];
    let jac = e1.cross(&e2).dot(&e3).abs(); // = 6*vol
    let mut pts = Vec::with_capacity(rule.len());
    let mut wts = Vec::with_capacity(rule.len());
    for (i, &w) in rule.weights.iter().enumerate() {
        let xi = rule.points[3 * i];
        let eta = rule.points[3 * i + 1];
        let zeta = rule.points[3 * i + 2];
        pts.push(v[0] + e1 * xi + e2 * eta + e3 * zeta);
        wts.push(w * jac);
    }
    (pts, wts)
}

/// Splits a triangle into its four midpoint children.
pub fn split_triangle(v: &[Vec3; 3]) -> [[Vec3; 3]; 4] {
    let m01 = (v[0] + v[1]) * 0.5;
    let m12 = (v[1] + v[2]) * 0.5;
    let m02 = (v[0] + v[2]) * 0.5;
    [
        [v[0], m01, m02],
        [m01, v[1], m12],
        [m02, m12, v[2]],
        [m01, m12, m02],
    ]
}

/// Splits a tetrahedron into eight children (four corner tets plus the central
/// octahedron cut along its shortest diagonal).
pub fn split_tet(v: &[Vec3; 4]) -> [[Vec3; 4]; 8] {
    let m = |a: usize, b: usize| (v[a] + v[b]) * 0.5;
    let m01 = m(0, 1);
    let m02 = m(0, 2);
    let m03 = m(0, 3);
    let m12 = m(1, 2);
    let m13 = m(1, 3);
    let m23 = m(2, 3);
    let d0 = (m01 - m23).norm_squared();
    let d1 = (m02 - m13).norm_squared();
    let d2 = (m03 - m12).norm_squared();
    // Octahedron split around the shortest diagonal; ring order keeps each
    // piece non-degenerate.
    let (a, b, ring) = if d0 <= d1 && d0 <= d2 {
        (m01, m23, [m02, m12, m13, m03])
    } else if d1 <= d2 {
        (m02, m13, [m01, m12, m23, m03])
    } else {
        (m03, m12, [m01, m13, m23, m02])
    };
    [
        [v[0], m01, m02, m03],
        [m01, v[1], m12, m13],
        [m02, m12, v[2], m23],
        [m03, m13, m23, v[3]],
        [a, b, ring[0], ring[1]],
        [a, b, ring[1], ring[2]],
        [a, b, ring[2], ring[3]],
        [a, b, ring[3], ring[0]],
    ]
}

pub fn tet_volume(v: &[Vec3; 4]) -> f64 {
    (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])) / 6.0
}

pub fn triangle_area(v: &[Vec3; 3]) -> f64 {
    0.5 * (v[1] - v[0]).cross(&(v[2] - v[0])).norm()
}
