//! Newton volume potentials over piecewise-polynomial tet densities, single
//! layer potentials over tangential triangle densities, and their curls.
//!
//! All four operations share one point-element evaluation core; they differ
//! only in the kernel. Far elements use distance-tiered Gauss rules, near
//! elements are subdivided recursively toward the evaluation point with an
//! error indicator, so accuracy is driven by the requested tolerance.

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, TetMesh};
use crate::quadrature::{self, Vec3};
use crate::spaces::rt_volume::{mono3, N_MONO3};
use crate::spaces::surface::{mono2, N_MONO2};
use crate::spaces::{RTField, SurfaceRtField, TriFrame};
use rayon::prelude::*;
use std::sync::Arc;

pub mod tri_analytic;

const INV_4PI: f64 = 1.0 / (4.0 * std::f64::consts::PI);
const MAX_DEPTH: usize = 12;

/// Kernel selector for the shared core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// f(y) / (4 pi |x-y|)
    Newton,
    /// f(y) x (x-y) / (4 pi |x-y|^3)
    Curl,
}

#[inline(always)]
fn kernel_accumulate(kernel: Kernel, x: &Vec3, y: &Vec3, wf: &Vec3, acc: &mut Vec3) {
    let rx = x.x - y.x;
    let ry = x.y - y.y;
    let rz = x.z - y.z;
    let r2 = rx * rx + ry * ry + rz * rz;
    match kernel {
        Kernel::Newton => {
            let inv_r = 1.0 / r2.sqrt();
            acc.x += wf.x * inv_r;
            acc.y += wf.y * inv_r;
            acc.z += wf.z * inv_r;
        }
        Kernel::Curl => {
            let inv_r = 1.0 / r2.sqrt();
            let inv_r3 = inv_r / r2;
            // wf x r
            acc.x += (wf.y * rz - wf.z * ry) * inv_r3;
            acc.y += (wf.z * rx - wf.x * rz) * inv_r3;
            acc.z += (wf.x * ry - wf.y * rx) * inv_r3;
        }
    }
}

/// Evaluation request: points plus accuracy controls.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub points: Vec<Vec3>,
    /// Relative accuracy target, in (0, 1).
    pub target_tolerance: f64,
    /// Near-field trigger in multiples of the local element size, >= 1.
    pub near_field_radius: f64,
}

impl EvalRequest {
    pub fn new(points: Vec<Vec3>, target_tolerance: f64, near_field_radius: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&target_tolerance) || target_tolerance == 0.0 {
            return Err(Error::Config(format!(
                "target_tolerance must lie in (0,1), got {target_tolerance}"
            )));
        }
        if near_field_radius < 1.0 {
            return Err(Error::Config(format!(
                "near_field_radius must be >= 1, got {near_field_radius}"
            )));
        }
        Ok(EvalRequest {
            points,
            target_tolerance,
            near_field_radius,
        })
    }

    pub fn with_defaults(points: Vec<Vec3>) -> Self {
        EvalRequest {
            points,
            target_tolerance: 1e-6,
            near_field_radius: 1.5,
        }
    }
}

/// Counters from an evaluation run.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct EvalStats {
    pub kernel_evals: u64,
    pub cells_subdivided: u64,
    /// Cells that hit the depth cap with the indicator still above tolerance.
    pub cells_truncated: u64,
    /// Cells dropped because the point sits inside them at the depth cap
    /// (their exact contribution is O(cell size) and integrable).
    pub cells_dropped: u64,
}

impl EvalStats {
    fn merge(&mut self, o: &EvalStats) {
        self.kernel_evals += o.kernel_evals;
        self.cells_subdivided += o.cells_subdivided;
        self.cells_truncated += o.cells_truncated;
        self.cells_dropped += o.cells_dropped;
    }
}

/// Values plus run statistics.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: Vec<Vec3>,
    pub stats: EvalStats,
}

/// Geometry summary of one element used for distance tiering.
#[derive(Debug, Clone, Copy)]
struct ElemGeom {
    centroid: Vec3,
    /// Circumscribed radius around the centroid.
    radius: f64,
    diam: f64,
}

/// Cached quadrature tier: points and weight-folded density values.
#[derive(Debug, Clone)]
struct TierData {
    pts: Vec<Vec3>,
    wf: Vec<Vec3>,
}

/// Generic element access used by the shared evaluation core.
trait SourceElements: Sync {
    fn len(&self) -> usize;
    fn geom(&self, e: usize) -> ElemGeom;
    fn tier(&self, e: usize, hi: bool) -> &TierData;
    /// Crude L1 mass of the density on the element.
    fn l1(&self, e: usize) -> f64;
    fn density_at(&self, e: usize, y: &Vec3) -> Vec3;
    /// Integrates kernel*density over a sub-cell with rule level q.
    fn integrate_cell(
        &self,
        e: usize,
        cell: &CellCoords,
        q: usize,
        kernel: Kernel,
        x: &Vec3,
        stats: &mut EvalStats,
    ) -> Vec3;
    fn split(&self, cell: &CellCoords) -> Vec<CellCoords>;
    fn root_cell(&self, e: usize) -> CellCoords;
}

/// Sub-cell of an element: a tet or a triangle by coordinates.
#[derive(Debug, Clone)]
enum CellCoords {
    Tet([Vec3; 4]),
    Tri([Vec3; 3]),
}

impl CellCoords {
    fn geom(&self) -> ElemGeom {
        match self {
            CellCoords::Tet(v) => {
                let c = (v[0] + v[1] + v[2] + v[3]) / 4.0;
                let radius = v.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                let mut diam: f64 = 0.0;
                for a in 0..4 {
                    for b in (a + 1)..4 {
                        diam = diam.max((v[a] - v[b]).norm());
                    }
                }
                ElemGeom {
                    centroid: c,
                    radius,
                    diam,
                }
            }
            CellCoords::Tri(v) => {
                let c = (v[0] + v[1] + v[2]) / 3.0;
                let radius = v.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                let diam = (v[0] - v[1])
                    .norm()
                    .max((v[1] - v[2]).norm())
                    .max((v[2] - v[0]).norm());
                ElemGeom {
                    centroid: c,
                    radius,
                    diam,
                }
            }
        }
    }

    fn measure(&self) -> f64 {
        match self {
            CellCoords::Tet(v) => quadrature::tet_volume(v).abs(),
            CellCoords::Tri(v) => quadrature::triangle_area(v),
        }
    }
}

/// Distance from x to the element's bounding sphere (0 when inside).
#[inline]
fn sphere_distance(x: &Vec3, g: &ElemGeom) -> f64 {
    ((x - g.centroid).norm() - g.radius).max(0.0)
}

/// The density source for the Newton volume potential: the zero extension of
/// a piecewise-polynomial field on the tet mesh.
pub struct VolumePotentialSource {
    pub mesh: Arc<TetMesh>,
    /// Per tet, per component: coefficients over `mono3` in the element frame.
    pub polys: Vec<[[f64; N_MONO3]; 3]>,
    frames: Vec<(Vec3, f64)>,
    geoms: Vec<ElemGeom>,
    tier_lo: Vec<TierData>,
    tier_hi: Vec<TierData>,
    l1: Vec<f64>,
}

impl VolumePotentialSource {
    pub fn new(mesh: Arc<TetMesh>, polys: Vec<[[f64; N_MONO3]; 3]>) -> VolumePotentialSource {
        assert_eq!(polys.len(), mesh.tets.len());
        let n = mesh.tets.len();
        let mut frames = Vec::with_capacity(n);
        let mut geoms = Vec::with_capacity(n);
        for it in 0..n {
            let c = mesh.tet_centroid(it);
            let s = mesh.tet_diameter(it);
            frames.push((c, s));
            let verts = mesh.tet_coords(it);
            let radius = verts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
            geoms.push(ElemGeom {
                centroid: c,
                radius,
                diam: s,
            });
        }
        let density = |it: usize, y: &Vec3| -> Vec3 {
            let (c, s) = frames[it];
            let d = (y - c) / s;
            let m = mono3(d.x, d.y, d.z);
            let p = &polys[it];
            Vec3::new(
                (0..N_MONO3).map(|k| p[0][k] * m[k]).sum(),
                (0..N_MONO3).map(|k| p[1][k] * m[k]).sum(),
                (0..N_MONO3).map(|k| p[2][k] * m[k]).sum(),
            )
        };
        let rule_lo = quadrature::tet_rule(2);
        let rule_hi = quadrature::tet_rule(3);
        let mut tier_lo = Vec::with_capacity(n);
        let mut tier_hi = Vec::with_capacity(n);
        let mut l1 = Vec::with_capacity(n);
        for it in 0..n {
            let coords = mesh.tet_coords(it);
            let mut mass = 0.0;
            for (rule, out) in [(&rule_lo, &mut tier_lo), (&rule_hi, &mut tier_hi)] {
                let (pts, wts) = quadrature::map_tet(rule, &coords);
                let wf: Vec<Vec3> = pts
                    .iter()
                    .zip(&wts)
                    .map(|(y, &w)| density(it, y) * w)
                    .collect();
                if std::ptr::eq(rule, &rule_hi) {
                    mass = wf.iter().map(|v| v.norm()).sum();
                }
                out.push(TierData { pts, wf });
            }
            l1.push(mass);
        }
        VolumePotentialSource {
            mesh,
            polys,
            frames,
            geoms,
            tier_lo,
            tier_hi,
            l1,
        }
    }

    /// Builds the source from an RT field (its zero extension by support).
    pub fn from_rt_field(field: &RTField) -> VolumePotentialSource {
        VolumePotentialSource::new(field.space.mesh.clone(), field.element_polys.clone())
    }

    pub fn density_at(&self, it: usize, y: &Vec3) -> Vec3 {
        let (c, s) = self.frames[it];
        let d = (y - c) / s;
        let m = mono3(d.x, d.y, d.z);
        let p = &self.polys[it];
        Vec3::new(
            (0..N_MONO3).map(|k| p[0][k] * m[k]).sum(),
            (0..N_MONO3).map(|k| p[1][k] * m[k]).sum(),
            (0..N_MONO3).map(|k| p[2][k] * m[k]).sum(),
        )
    }
}

impl SourceElements for VolumePotentialSource {
    fn len(&self) -> usize {
        self.mesh.tets.len()
    }
    fn geom(&self, e: usize) -> ElemGeom {
        self.geoms[e]
    }
    fn tier(&self, e: usize, hi: bool) -> &TierData {
        if hi {
            &self.tier_hi[e]
        } else {
            &self.tier_lo[e]
        }
    }
    fn l1(&self, e: usize) -> f64 {
        self.l1[e]
    }
    fn density_at(&self, e: usize, y: &Vec3) -> Vec3 {
        VolumePotentialSource::density_at(self, e, y)
    }
    fn integrate_cell(
        &self,
        e: usize,
        cell: &CellCoords,
        q: usize,
        kernel: Kernel,
        x: &Vec3,
        stats: &mut EvalStats,
    ) -> Vec3 {
        let CellCoords::Tet(v) = cell else { unreachable!() };
        let rule = quadrature::tet_rule(q);
        let (pts, wts) = quadrature::map_tet(&rule, v);
        let mut acc = Vec3::zeros();
        for (y, &w) in pts.iter().zip(&wts) {
            let wf = self.density_at(e, y) * w;
            kernel_accumulate(kernel, x, y, &wf, &mut acc);
        }
        stats.kernel_evals += pts.len() as u64;
        acc
    }
    fn split(&self, cell: &CellCoords) -> Vec<CellCoords> {
        let CellCoords::Tet(v) = cell else { unreachable!() };
        quadrature::split_tet(v)
            .into_iter()
            .map(CellCoords::Tet)
            .collect()
    }
    fn root_cell(&self, e: usize) -> CellCoords {
        CellCoords::Tet(self.mesh.tet_coords(e))
    }
}

/// Tangential piecewise-polynomial density on the boundary triangulation.
pub struct SurfacePotentialSource {
    pub surface: Arc<SurfaceMesh>,
    /// Per triangle: in-plane polynomial (u_xi, u_eta) over `mono2`.
    pub polys: Vec<[[f64; N_MONO2]; 2]>,
    frames: Vec<TriFrame>,
    geoms: Vec<ElemGeom>,
    tier_lo: Vec<TierData>,
    tier_hi: Vec<TierData>,
    l1: Vec<f64>,
}

impl SurfacePotentialSource {
    pub fn new(surface: Arc<SurfaceMesh>, polys: Vec<[[f64; N_MONO2]; 2]>) -> SurfacePotentialSource {
        assert_eq!(polys.len(), surface.triangles.len());
        let n = surface.triangles.len();
        let frames: Vec<TriFrame> = (0..n).map(|t| TriFrame::new(&surface, t)).collect();
        let geoms: Vec<ElemGeom> = (0..n)
            .map(|t| {
                let c = surface.triangle_centroid(t);
                let verts = surface.triangle_coords(t);
                ElemGeom {
                    centroid: c,
                    radius: verts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max),
                    diam: surface.triangle_diameter(t),
                }
            })
            .collect();
        let density = |t: usize, y: &Vec3| -> Vec3 {
            let frame = &frames[t];
            let (xi, eta) = frame.local(y);
            let m = mono2(xi, eta);
            let p = &polys[t];
            let u_xi: f64 = (0..N_MONO2).map(|k| p[0][k] * m[k]).sum();
            let u_eta: f64 = (0..N_MONO2).map(|k| p[1][k] * m[k]).sum();
            frame.to_world(u_xi, u_eta)
        };
        let rule_lo = quadrature::triangle_rule(2);
        let rule_hi = quadrature::triangle_rule(3);
        let mut tier_lo = Vec::with_capacity(n);
        let mut tier_hi = Vec::with_capacity(n);
        let mut l1 = Vec::with_capacity(n);
        for t in 0..n {
            let coords = surface.triangle_coords(t);
            let mut mass = 0.0;
            for (rule, out) in [(&rule_lo, &mut tier_lo), (&rule_hi, &mut tier_hi)] {
                let (pts, wts) = quadrature::map_triangle(rule, &coords);
                let wf: Vec<Vec3> = pts
                    .iter()
                    .zip(&wts)
                    .map(|(y, &w)| density(t, y) * w)
                    .collect();
                if std::ptr::eq(rule, &rule_hi) {
                    mass = wf.iter().map(|v| v.norm()).sum();
                }
                out.push(TierData { pts, wf });
            }
            l1.push(mass);
        }
        SurfacePotentialSource {
            surface,
            polys,
            frames,
            geoms,
            tier_lo,
            tier_hi,
            l1,
        }
    }

    /// Source from a surface RT field plus an optional extra constant
    /// tangential term per triangle (the vector curl of a hat expansion).
    pub fn from_parts(
        rt: Option<&SurfaceRtField>,
        constant_term: Option<&[Vec3]>,
        surface: Arc<SurfaceMesh>,
    ) -> SurfacePotentialSource {
        let n = surface.triangles.len();
        let mut polys = vec![[[0.0; N_MONO2]; 2]; n];
        if let Some(rt) = rt {
            for (t, p) in rt.polys.iter().enumerate() {
                polys[t] = *p;
            }
        }
        if let Some(cs) = constant_term {
            for t in 0..n {
                let frame = TriFrame::new(&surface, t);
                polys[t][0][0] += cs[t].dot(&frame.t1);
                polys[t][1][0] += cs[t].dot(&frame.t2);
            }
        }
        SurfacePotentialSource::new(surface, polys)
    }

    pub fn density_at(&self, t: usize, y: &Vec3) -> Vec3 {
        let frame = &self.frames[t];
        let (xi, eta) = frame.local(y);
        let m = mono2(xi, eta);
        let p = &self.polys[t];
        let u_xi: f64 = (0..N_MONO2).map(|k| p[0][k] * m[k]).sum();
        let u_eta: f64 = (0..N_MONO2).map(|k| p[1][k] * m[k]).sum();
        frame.to_world(u_xi, u_eta)
    }

    /// Max |density . n| over quadrature nodes; tangentiality diagnostic.
    pub fn max_normal_component(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.surface.triangles.len() {
            let n = self.surface.normals[t];
            for y in &self.tier_hi[t].pts {
                worst = worst.max(self.density_at(t, y).dot(&n).abs());
            }
        }
        worst
    }
}

impl SourceElements for SurfacePotentialSource {
    fn len(&self) -> usize {
        self.surface.triangles.len()
    }
    fn geom(&self, e: usize) -> ElemGeom {
        self.geoms[e]
    }
    fn tier(&self, e: usize, hi: bool) -> &TierData {
        if hi {
            &self.tier_hi[e]
        } else {
            &self.tier_lo[e]
        }
    }
    fn l1(&self, e: usize) -> f64 {
        self.l1[e]
    }
    fn density_at(&self, e: usize, y: &Vec3) -> Vec3 {
        SurfacePotentialSource::density_at(self, e, y)
    }
    fn integrate_cell(
        &self,
        e: usize,
        cell: &CellCoords,
        q: usize,
        kernel: Kernel,
        x: &Vec3,
        stats: &mut EvalStats,
    ) -> Vec3 {
        let CellCoords::Tri(v) = cell else { unreachable!() };
        let rule = quadrature::triangle_rule(q);
        let (pts, wts) = quadrature::map_triangle(&rule, v);
        let mut acc = Vec3::zeros();
        for (y, &w) in pts.iter().zip(&wts) {
            let wf = self.density_at(e, y) * w;
            kernel_accumulate(kernel, x, y, &wf, &mut acc);
        }
        stats.kernel_evals += pts.len() as u64;
        acc
    }
    fn split(&self, cell: &CellCoords) -> Vec<CellCoords> {
        let CellCoords::Tri(v) = cell else { unreachable!() };
        quadrature::split_triangle(v)
            .into_iter()
            .map(CellCoords::Tri)
            .collect()
    }
    fn root_cell(&self, e: usize) -> CellCoords {
        CellCoords::Tri(self.surface.triangle_coords(e))
    }
}

/// Shared evaluation core: one point, all elements of one source.
fn eval_point<S: SourceElements>(
    src: &S,
    kernel: Kernel,
    x: &Vec3,
    tol: f64,
    nfr: f64,
    stats: &mut EvalStats,
) -> Vec3 {
    let mut acc = Vec3::zeros();
    let mut scale = 0.0f64;
    let mut near: Vec<usize> = Vec::new();

    for e in 0..src.len() {
        if src.l1(e) == 0.0 {
            continue;
        }
        let g = src.geom(e);
        let d = sphere_distance(x, &g);
        // Magnitude proxy with the kernel clamped near the element.
        let dc = d.max(0.25 * g.diam);
        let kb = match kernel {
            Kernel::Newton => 1.0 / dc,
            Kernel::Curl => 1.0 / (dc * dc),
        };
        scale += src.l1(e) * kb;

        if d <= nfr * g.diam {
            near.push(e);
            continue;
        }
        // Tier selection: conical q has degree 2q-1; the error heuristic
        // (diam / (2 d))^{2q} picks the cheapest adequate rule.
        let ratio = 0.5 * g.diam / d;
        let e_lo = ratio.powi(4);
        let e_hi = ratio.powi(6);
        let budget = 0.1 * tol;
        if e_lo <= budget {
            let t = src.tier(e, false);
            for (y, wf) in t.pts.iter().zip(&t.wf) {
                kernel_accumulate(kernel, x, y, wf, &mut acc);
            }
            stats.kernel_evals += t.pts.len() as u64;
        } else if e_hi <= budget {
            let t = src.tier(e, true);
            for (y, wf) in t.pts.iter().zip(&t.wf) {
                kernel_accumulate(kernel, x, y, wf, &mut acc);
            }
            stats.kernel_evals += t.pts.len() as u64;
        } else {
            near.push(e);
        }
    }

    if near.is_empty() {
        return acc * INV_4PI;
    }
    let tol_abs = tol * scale.max(f64::MIN_POSITIVE) / (4.0 * near.len() as f64);
    for e in near {
        let root = src.root_cell(e);
        let (b, err) = cell_indicator(src, e, kernel, x, &root, stats);
        if err <= tol_abs {
            acc += b;
        } else {
            acc += adaptive_cell(src, e, kernel, x, &root, tol_abs, 0, stats);
        }
    }
    acc * INV_4PI
}

const LARGE_ERR: f64 = 1e30;

/// A/B indicator of one cell: low/high rule values and their difference.
/// Cells containing the point report an unusable (huge) indicator.
fn cell_indicator<S: SourceElements>(
    src: &S,
    e: usize,
    kernel: Kernel,
    x: &Vec3,
    cell: &CellCoords,
    stats: &mut EvalStats,
) -> (Vec3, f64) {
    let g = cell.geom();
    if sphere_distance(x, &g) <= 0.0 && (x - g.centroid).norm() <= g.radius {
        return (Vec3::zeros(), LARGE_ERR);
    }
    let a = src.integrate_cell(e, cell, 2, kernel, x, stats);
    let b = src.integrate_cell(e, cell, 3, kernel, x, stats);
    let err = (a - b).norm();
    if !(err.is_finite() && b.iter().all(|v| v.is_finite())) {
        return (Vec3::zeros(), LARGE_ERR);
    }
    (b, err)
}

/// Recursive cell integration subdividing toward the evaluation point. The
/// error budget is distributed over children proportionally to their
/// indicated errors, so the total accepted error stays below `tol_abs`
/// without over-refining smooth regions.
fn adaptive_cell<S: SourceElements>(
    src: &S,
    e: usize,
    kernel: Kernel,
    x: &Vec3,
    cell: &CellCoords,
    tol_abs: f64,
    depth: usize,
    stats: &mut EvalStats,
) -> Vec3 {
    if depth >= MAX_DEPTH {
        let g = cell.geom();
        if (x - g.centroid).norm() <= g.radius + 0.25 * g.diam {
            // The point sits (almost) inside the cell at the depth cap; the
            // true contribution is O(diam^2) for 1/r and O(diam) for the
            // curl kernel, both negligible at this scale.
            stats.cells_dropped += 1;
            return Vec3::zeros();
        }
        let v = src.integrate_cell(e, cell, 3, kernel, x, stats);
        stats.cells_truncated += 1;
        return if v.iter().all(|c| c.is_finite()) {
            v
        } else {
            stats.cells_dropped += 1;
            Vec3::zeros()
        };
    }

    stats.cells_subdivided += 1;
    let children = src.split(cell);
    let infos: Vec<(CellCoords, Vec3, f64)> = children
        .into_iter()
        .map(|c| {
            let (b, err) = cell_indicator(src, e, kernel, x, &c, stats);
            (c, b, err)
        })
        .collect();
    let err_sum: f64 = infos.iter().map(|i| i.2).sum();
    if err_sum <= tol_abs {
        return infos.iter().map(|i| i.1).sum();
    }
    // Budget split: proportional to the indicated errors with an absolute
    // floor, so nearly converged children are accepted in place and the
    // recursion concentrates toward the singular direction. The total stays
    // below 1.5 * tol_abs.
    let floor = tol_abs / (2.0 * infos.len() as f64);
    let mut acc = Vec3::zeros();
    for (c, b, err) in infos {
        let share = (tol_abs * err / err_sum).max(floor);
        if err <= share {
            acc += b;
        } else {
            acc += adaptive_cell(src, e, kernel, x, &c, share, depth + 1, stats);
        }
    }
    acc
}

fn run_eval<S: SourceElements>(src: &S, kernel: Kernel, req: &EvalRequest) -> Result<Evaluation> {
    let tol = req.target_tolerance;
    let nfr = req.near_field_radius;
    if !(0.0..1.0).contains(&tol) || tol == 0.0 {
        return Err(Error::Config("target_tolerance out of range".into()));
    }
    let results: Vec<(Vec3, EvalStats)> = req
        .points
        .par_iter()
        .map(|x| {
            let mut stats = EvalStats::default();
            let v = eval_point(src, kernel, x, tol, nfr, &mut stats);
            (v, stats)
        })
        .collect();
    let mut stats = EvalStats::default();
    let mut values = Vec::with_capacity(results.len());
    for (v, s) in results {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::ToleranceNotMet(
                "non-finite potential value produced".into(),
            ));
        }
        values.push(v);
        stats.merge(&s);
    }
    Ok(Evaluation { values, stats })
}

/// Newton volume potential of the (zero-extended) density at the requested
/// points.
pub fn newton_volume(src: &VolumePotentialSource, req: &EvalRequest) -> Result<Evaluation> {
    run_eval(src, Kernel::Newton, req)
}

/// Curl of the Newton volume potential (the Biot-Savart field of the density).
pub fn newton_volume_curl(src: &VolumePotentialSource, req: &EvalRequest) -> Result<Evaluation> {
    run_eval(src, Kernel::Curl, req)
}

/// Component-wise single layer potential of the tangential density.
pub fn single_layer(src: &SurfacePotentialSource, req: &EvalRequest) -> Result<Evaluation> {
    run_eval(src, Kernel::Newton, req)
}

/// Curl of the single layer potential.
pub fn single_layer_curl(src: &SurfacePotentialSource, req: &EvalRequest) -> Result<Evaluation> {
    run_eval(src, Kernel::Curl, req)
}

/// Normal trace of curl(A) on the boundary, sampled at triangle quadrature
/// nodes by one-sided interior evaluation with Richardson extrapolation.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    /// Quadrature rule the nodes belong to (reference triangle coordinates).
    pub rule: quadrature::SimplexRule,
    /// values[t][q]: extrapolated n . curl A at node q of triangle t.
    pub values: Vec<Vec<f64>>,
    /// Same values at each finite offset (largest first), for diagnostics.
    pub offset_values: [Vec<Vec<f64>>; 3],
    pub stats: EvalStats,
}

/// Offset factor: delta = {4, 2, 1} * OFFSET_EPS * triangle diameter.
const OFFSET_EPS: f64 = 1e-2;

pub fn boundary_normal_trace_of_curl(
    vol: Option<&VolumePotentialSource>,
    surf: Option<&SurfacePotentialSource>,
    surface: &SurfaceMesh,
    quad_degree: usize,
    tol: f64,
    nfr: f64,
) -> Result<BoundaryTrace> {
    let rule = quadrature::triangle_rule_for_degree(quad_degree);
    let nt = surface.triangles.len();
    let nq = rule.len();

    // All offset points, grouped (triangle, node, offset).
    let mut points = Vec::with_capacity(nt * nq * 3);
    for t in 0..nt {
        let coords = surface.triangle_coords(t);
        let n = surface.normals[t];
        let h = surface.triangle_diameter(t);
        let (pts, _) = quadrature::map_triangle(&rule, &coords);
        for y in &pts {
            for f in [4.0, 2.0, 1.0] {
                points.push(y - n * (f * OFFSET_EPS * h));
            }
        }
    }
    let req = EvalRequest {
        points,
        target_tolerance: tol,
        near_field_radius: nfr,
    };
    let mut total = vec![Vec3::zeros(); req.points.len()];
    let mut stats = EvalStats::default();
    if let Some(v) = vol {
        let ev = newton_volume_curl(v, &req)?;
        for (t, e) in total.iter_mut().zip(&ev.values) {
            *t += e;
        }
        stats.merge(&ev.stats);
    }
    if let Some(s) = surf {
        let ev = single_layer_curl(s, &req)?;
        for (t, e) in total.iter_mut().zip(&ev.values) {
            *t += e;
        }
        stats.merge(&ev.stats);
    }

    let mut values = vec![vec![0.0; nq]; nt];
    let mut off0 = vec![vec![0.0; nq]; nt];
    let mut off1 = vec![vec![0.0; nq]; nt];
    let mut off2 = vec![vec![0.0; nq]; nt];
    let mut idx = 0;
    for t in 0..nt {
        let n = surface.normals[t];
        for q in 0..nq {
            let v4 = total[idx].dot(&n);
            let v2 = total[idx + 1].dot(&n);
            let v1 = total[idx + 2].dot(&n);
            idx += 3;
            off0[t][q] = v4;
            off1[t][q] = v2;
            off2[t][q] = v1;
            values[t][q] = richardson(v4, v2, v1);
        }
    }
    Ok(BoundaryTrace {
        rule,
        values,
        offset_values: [off0, off1, off2],
        stats,
    })
}

/// Extrapolates V(4d), V(2d), V(d) to d -> 0 assuming V(d) = V0 + c d^p.
fn richardson(v4: f64, v2: f64, v1: f64) -> f64 {
    let d21 = v2 - v1;
    let d42 = v4 - v2;
    let scale = v1.abs().max(v2.abs()).max(v4.abs()).max(1e-300);
    if d21.abs() <= 1e-12 * scale {
        return v1;
    }
    let ratio = d42 / d21;
    if !(ratio.is_finite() && ratio > 2f64.powf(0.3) && ratio < 2f64.powf(3.0)) {
        // No clean power behaviour; linear fallback.
        return v1 - d21;
    }
    let p = ratio.log2();
    v1 - d21 / (2f64.powf(p) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_boundary, fixtures};
    use crate::spaces::rt_interpolate;

    fn unit_cube_source(value: Vec3) -> VolumePotentialSource {
        let mesh = Arc::new(fixtures::cube_grid(1));
        let fh = rt_interpolate(|_| value, 1, mesh).unwrap();
        VolumePotentialSource::from_rt_field(&fh)
    }

    #[test]
    fn zero_density_gives_zero() {
        let src = unit_cube_source(Vec3::zeros());
        let req = EvalRequest::with_defaults(vec![Vec3::new(2.0, 0.3, 0.4)]);
        let ev = newton_volume(&src, &req).unwrap();
        assert_eq!(ev.values[0], Vec3::zeros());
        let ev = newton_volume_curl(&src, &req).unwrap();
        assert_eq!(ev.values[0], Vec3::zeros());
    }

    #[test]
    fn far_field_matches_point_mass() {
        // At 100 diameters the cube acts like a point source of strength
        // vol = 1: phi ~ 1/(4 pi r).
        let src = unit_cube_source(Vec3::new(0.0, 0.0, 1.0));
        let x = Vec3::new(100.0, 0.5, 0.5);
        let req = EvalRequest::with_defaults(vec![x]);
        let ev = newton_volume(&src, &req).unwrap();
        let r = (x - Vec3::new(0.5, 0.5, 0.5)).norm();
        let expect = INV_4PI / r;
        assert!((ev.values[0].z - expect).abs() < 1e-8 * expect.abs());
        assert!(ev.values[0].x.abs() < 1e-14);
    }

    #[test]
    fn decay_is_one_over_r() {
        let src = unit_cube_source(Vec3::new(0.0, 0.0, 1.0));
        let c = Vec3::new(0.5, 0.5, 0.5);
        let dirs = Vec3::new(1.0, 0.7, -0.3).normalize();
        let r1 = 10.0;
        let r2 = 100.0;
        let req = EvalRequest::with_defaults(vec![c + dirs * r1, c + dirs * r2]);
        let ev = newton_volume(&src, &req).unwrap();
        let ratio = ev.values[0].z / ev.values[1].z;
        assert!((ratio - r2 / r1).abs() < 0.01 * (r2 / r1));
    }

    #[test]
    fn curl_is_skew_symmetric_on_axis() {
        // Density (0,0,1) on the cube: on the vertical symmetry axis the curl
        // vanishes by symmetry.
        let src = unit_cube_source(Vec3::new(0.0, 0.0, 1.0));
        let req = EvalRequest {
            points: vec![Vec3::new(0.5, 0.5, 3.0), Vec3::new(0.5, 0.5, -2.0)],
            target_tolerance: 1e-8,
            near_field_radius: 1.5,
        };
        let ev = newton_volume_curl(&src, &req).unwrap();
        for v in &ev.values {
            assert!(v.norm() < 1e-8, "curl on axis {v:?}");
        }
    }

    #[test]
    fn curl_matches_finite_differences_of_potential() {
        let src = unit_cube_source(Vec3::new(0.0, 0.0, 1.0));
        let x = Vec3::new(10.0, 0.0, 0.0);
        let h = 1e-3;
        let mut pts = vec![x];
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            pts.push(x + e);
            pts.push(x - e);
        }
        let req = EvalRequest {
            points: pts,
            target_tolerance: 1e-9,
            near_field_radius: 1.5,
        };
        let pot = newton_volume(&src, &req).unwrap().values;
        let curl = newton_volume_curl(
            &src,
            &EvalRequest {
                points: vec![x],
                target_tolerance: 1e-9,
                near_field_radius: 1.5,
            },
        )
        .unwrap()
        .values[0];
        let d = |k: usize| (pot[1 + 2 * k] - pot[2 + 2 * k]) / (2.0 * h);
        let fd = Vec3::new(
            d(1).z - d(2).y,
            d(2).x - d(0).z,
            d(0).y - d(1).x,
        );
        assert!(
            (curl - fd).norm() < 1e-4 * curl.norm().max(1e-12),
            "curl {curl:?} vs fd {fd:?}"
        );
    }

    #[test]
    fn ball_potential_at_center() {
        // Constant scalar density 1 on the unit ball: phi(0) = 1/2.
        let req = EvalRequest {
            points: vec![Vec3::zeros()],
            target_tolerance: 1e-5,
            near_field_radius: 1.5,
        };
        let phi = |n: usize| {
            let mesh = Arc::new(fixtures::ball_grid(n));
            let fh = rt_interpolate(|_| Vec3::new(0.0, 0.0, 1.0), 1, mesh).unwrap();
            let src = VolumePotentialSource::from_rt_field(&fh);
            newton_volume(&src, &req).unwrap().values[0].z
        };
        // Dyadic refinement keeps the staircase phase comparable.
        let coarse = phi(8);
        let fine = phi(16);
        assert!(
            (fine - 0.5).abs() < 0.02 * 0.5,
            "phi(0) = {fine}, expected 0.5 within 2%"
        );
        assert!(
            (fine - 0.5).abs() <= (coarse - 0.5).abs() + 1e-4,
            "refinement moved away from 1/2: {coarse} -> {fine}"
        );
    }

    #[test]
    fn single_layer_far_decay_bound() {
        let mesh = Arc::new(fixtures::cube_grid(1));
        let surface = Arc::new(extract_boundary(&mesh));
        // Tangential projection of (1,0,0) per triangle.
        let n = surface.triangles.len();
        let polys: Vec<[[f64; N_MONO2]; 2]> = (0..n)
            .map(|t| {
                let frame = TriFrame::new(&surface, t);
                let v = Vec3::new(1.0, 0.0, 0.0);
                let v_t = v - frame.normal * v.dot(&frame.normal);
                let mut p = [[0.0; N_MONO2]; 2];
                p[0][0] = v_t.dot(&frame.t1);
                p[1][0] = v_t.dot(&frame.t2);
                p
            })
            .collect();
        let src = SurfacePotentialSource::new(surface.clone(), polys);
        assert!(src.max_normal_component() < 1e-13);
        let diam = 3f64.sqrt();
        let x = Vec3::new(0.5, 0.5, 0.5) + Vec3::new(1.0, 1.0, 1.0).normalize() * (1000.0 * diam);
        let ev = single_layer(&src, &EvalRequest::with_defaults(vec![x])).unwrap();
        // |value| <= total |density| / (4 pi (|x| - diam))
        let total_l1: f64 = (0..n).map(|t| src.l1(t)).sum();
        let bound = total_l1 * INV_4PI / (1000.0 * diam - diam);
        assert!(ev.values[0].norm() <= bound * 1.01);
        assert!(ev.values[0].norm() > 0.0);
    }

    #[test]
    fn single_layer_in_plane_outside_plate_is_finite() {
        let surface = Arc::new(SurfaceMesh::from_triangles(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        ));
        let polys = vec![
            {
                let mut p = [[0.0; N_MONO2]; 2];
                p[0][0] = 1.0;
                p
            };
            2
        ];
        let src = SurfacePotentialSource::new(surface, polys);
        // In the plate's plane, just outside the plate.
        let x = Vec3::new(1.5, 0.5, 0.0);
        let ev = single_layer_curl(&src, &EvalRequest::with_defaults(vec![x])).unwrap();
        assert!(ev.values[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn linearity_in_the_density() {
        use rand::{Rng, SeedableRng};
        let mesh = Arc::new(fixtures::cube_grid(1));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = mesh.tets.len();
        let mut p1 = vec![[[0.0; N_MONO3]; 3]; n];
        let mut p2 = vec![[[0.0; N_MONO3]; 3]; n];
        for it in 0..n {
            for c in 0..3 {
                for k in 0..N_MONO3 {
                    p1[it][c][k] = rng.gen_range(-1.0..1.0);
                    p2[it][c][k] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let (a, b) = (0.37, -1.21);
        let mut pc = vec![[[0.0; N_MONO3]; 3]; n];
        for it in 0..n {
            for c in 0..3 {
                for k in 0..N_MONO3 {
                    pc[it][c][k] = a * p1[it][c][k] + b * p2[it][c][k];
                }
            }
        }
        let s1 = VolumePotentialSource::new(mesh.clone(), p1);
        let s2 = VolumePotentialSource::new(mesh.clone(), p2);
        let sc = VolumePotentialSource::new(mesh.clone(), pc);
        let req = EvalRequest {
            points: vec![Vec3::new(3.0, -1.0, 0.7)],
            target_tolerance: 1e-10,
            near_field_radius: 1.5,
        };
        let v1 = newton_volume(&s1, &req).unwrap().values[0];
        let v2 = newton_volume(&s2, &req).unwrap().values[0];
        let vc = newton_volume(&sc, &req).unwrap().values[0];
        let lin = v1 * a + v2 * b;
        assert!((vc - lin).norm() < 1e-11 * vc.norm().max(1.0));
    }

    #[test]
    fn harmonicity_away_from_support() {
        // 7-point Laplacian of each component vanishes off support.
        let src = unit_cube_source(Vec3::new(0.3, -0.2, 1.0));
        let x = Vec3::new(2.5, 1.5, -0.8);
        let h = 1e-3 * 3f64.sqrt();
        let mut pts = vec![x];
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            pts.push(x + e);
            pts.push(x - e);
        }
        let req = EvalRequest {
            points: pts,
            target_tolerance: 1e-10,
            near_field_radius: 1.5,
        };
        let v = newton_volume(&src, &req).unwrap().values;
        let mut lap = Vec3::zeros();
        for k in 0..3 {
            lap += v[1 + 2 * k] + v[2 + 2 * k] - v[0] * 2.0;
        }
        lap /= h * h;
        assert!(
            lap.norm() <= 1e-3 * v[0].norm(),
            "laplacian {lap:?} vs value {:?}",
            v[0]
        );
    }
}
