//! End-to-end construction of the stream function: vorticity interpolation,
//! zero extension, Biot-Savart surface correction, normal-trace fix via the
//! hypersingular solve, and evaluators for A and U = curl A, with the
//! a-posteriori diagnostics.

use crate::error::{Error, Result};
use crate::fields::AnalyticField;
use crate::mesh::{extract_boundary, require_handle_free, topology_report, SurfaceMesh, TetMesh, TopologyReport};
use crate::potentials::{
    boundary_normal_trace_of_curl, newton_volume, newton_volume_curl, single_layer,
    single_layer_curl, EvalRequest, EvalStats, SurfacePotentialSource, VolumePotentialSource,
};
use crate::quadrature::{self, Vec3};
use crate::spaces::surface::DiscScalar;
use crate::spaces::{
    check_boundary_data, check_integrability, normal_trace, rt_interpolate_in,
    surface_vector_curl_matrix, BoundaryDataReport, HatSpace, IntegrabilityReport, RTField,
    SurfaceRtField, SurfaceRtSpace, VolumeRtSpace,
};
use crate::surface_solvers::{
    assemble_hypersingular, solve_hypersingular, solve_mixed_laplace_beltrami,
    HypersingularQuadrature, MixedSolveReport,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

pub mod cache;

/// Vorticity data: a symbolic field or per-element sampled constants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum VorticityData {
    Analytic { field: AnalyticField },
    PerElement { values: Vec<[f64; 3]> },
}

impl VorticityData {
    pub fn eval(&self, it: usize, x: &Vec3) -> Vec3 {
        match self {
            VorticityData::Analytic { field } => field.eval(x),
            VorticityData::PerElement { values } => {
                Vec3::new(values[it][0], values[it][1], values[it][2])
            }
        }
    }
}

/// Boundary data for U.n: zero, sampled from an exact velocity field, or a
/// constant per triangle.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    Zero,
    FromExactU { field: AnalyticField },
    PerTriangleConstant { values: Vec<f64> },
}

impl BoundaryData {
    pub fn eval(&self, t: usize, normal: &Vec3, x: &Vec3) -> f64 {
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::FromExactU { field } => field.eval(x).dot(normal),
            BoundaryData::PerTriangleConstant { values } => values[t],
        }
    }
}

/// Solver tolerances and quadrature knobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative accuracy of potential evaluations.
    pub potential: f64,
    /// Near-field trigger radius (multiples of element size).
    pub near_field_radius: f64,
    /// Integrability gate for div F_h and component fluxes.
    pub integrability: f64,
    /// Zero-mean gate for the boundary data.
    pub boundary_data: f64,
    /// Quadrature degree for boundary sampling (trace, rhs, misfit norms).
    pub boundary_quad_degree: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            potential: 1e-4,
            near_field_radius: 1.5,
            integrability: 1e-8,
            boundary_data: 1e-8,
            boundary_quad_degree: 4,
        }
    }
}

/// Full problem description consumed by `solve`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mesh: Arc<TetMesh>,
    pub vorticity: VorticityData,
    pub boundary: BoundaryData,
    /// Raviart-Thomas order, 1 or 2.
    pub order: usize,
    pub tolerances: Tolerances,
}

/// Boundary samples on a fixed per-triangle quadrature rule.
#[derive(Debug, Clone)]
pub struct BoundarySamples {
    pub degree: usize,
    /// values[t][q]
    pub values: Vec<Vec<f64>>,
}

impl BoundarySamples {
    /// L2(Gamma) norm of the sampled function.
    pub fn l2_norm(&self, surface: &SurfaceMesh) -> f64 {
        let rule = quadrature::triangle_rule_for_degree(self.degree);
        let mut acc = 0.0;
        for t in 0..surface.triangles.len() {
            let (_, wts) = quadrature::map_triangle(&rule, &surface.triangle_coords(t));
            for (q, &w) in wts.iter().enumerate() {
                acc += w * self.values[t][q] * self.values[t][q];
            }
        }
        acc.sqrt()
    }

    pub fn sub(&self, other: &BoundarySamples) -> BoundarySamples {
        BoundarySamples {
            degree: self.degree,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

/// Per-stage wall clock entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Diagnostics gathered along the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub topology: TopologyReport,
    pub integrability: IntegrabilityReport,
    pub boundary_data: BoundaryDataReport,
    pub mixed: MixedSolveReport,
    pub hypersingular_residual: f64,
    pub hypersingular_asymmetry: f64,
    /// ||F - F_h||_{L2} and its h-weighted surrogate for the H^{-1} term.
    pub f_error_l2: f64,
    pub f_error_weighted: f64,
    /// ||g - g_h||_{L2(Gamma)} before and after the p_h correction, plus the
    /// h^{1/2}-weighted surrogate of the corrected misfit.
    pub g_misfit_uncorrected: f64,
    pub g_misfit_corrected: f64,
    pub g_misfit_weighted: f64,
    /// Which a-posteriori term dominates ("f" or "g").
    pub dominant_term: String,
    /// Weak-divergence residual of F_tilde + tau' r_h (sign arbiter value).
    pub weak_divergence: f64,
    pub timings: Vec<StageTiming>,
    pub eval_stats: EvalStats,
}

/// The assembled solution: fields, evaluators and diagnostics.
pub struct Solution {
    pub mesh: Arc<TetMesh>,
    pub surface: Arc<SurfaceMesh>,
    pub order: usize,
    pub f_h: RTField,
    pub r_h: SurfaceRtField,
    pub q_h: DiscScalar,
    pub hats: Arc<HatSpace>,
    pub p_h: Vec<f64>,
    /// Newton source: the zero extension of F_h.
    pub vol_source: VolumePotentialSource,
    /// Single layer source: s_h = curl_G p_h + r_h.
    pub s_source: SurfacePotentialSource,
    pub tolerances: Tolerances,
    pub diagnostics: Diagnostics,
    /// Trace samples of n . curl A_h (corrected) on the boundary rule.
    pub g_h: BoundarySamples,
    /// Boundary data samples on the same rule.
    pub g: BoundarySamples,
}

fn sample_boundary<F>(surface: &SurfaceMesh, degree: usize, f: F) -> BoundarySamples
where
    F: Fn(usize, &Vec3) -> f64,
{
    let rule = quadrature::triangle_rule_for_degree(degree);
    let values = (0..surface.triangles.len())
        .map(|t| {
            let (pts, _) = quadrature::map_triangle(&rule, &surface.triangle_coords(t));
            pts.iter().map(|x| f(t, x)).collect()
        })
        .collect();
    BoundarySamples { degree, values }
}

/// Runs the full construction.
pub fn solve(spec: &ProblemSpec) -> Result<Solution> {
    let mut timings = Vec::new();
    let mut eval_stats = EvalStats::default();
    let mut watch = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<StageTiming>, watch: &mut Instant| {
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds: watch.elapsed().as_secs_f64(),
        });
        *watch = Instant::now();
    };

    // Topology gate.
    let mesh = spec.mesh.clone();
    let surface = Arc::new(extract_boundary(&mesh));
    let topology = topology_report(&surface);
    require_handle_free(&topology).map_err(|e| e.in_stage("topology"))?;
    lap("topology", &mut timings, &mut watch);

    // Canonical interpolation of the vorticity.
    let space = Arc::new(VolumeRtSpace::new(mesh.clone(), spec.order).map_err(|e| e.in_stage("interpolate"))?);
    let coeffs = rt_interpolate_in(&space, |it, x| spec.vorticity.eval(it, x))
        .map_err(|e| e.in_stage("interpolate"))?;
    let f_h = RTField::from_coeffs(space, coeffs);
    let integrability = check_integrability(&f_h, &surface, spec.tolerances.integrability)
        .map_err(|e| e.in_stage("integrability"))?;
    lap("interpolate", &mut timings, &mut watch);

    // Boundary data check.
    let g = sample_boundary(&surface, spec.tolerances.boundary_quad_degree, |t, x| {
        spec.boundary.eval(t, &surface.normals[t], x)
    });
    let boundary_data = check_boundary_data(
        |t, x| spec.boundary.eval(t, &surface.normals[t], x),
        &surface,
        spec.tolerances.boundary_data,
    )
    .map_err(|e| e.in_stage("boundary_data"))?;
    lap("boundary_data", &mut timings, &mut watch);

    // Mixed Laplace-Beltrami solve for the Biot-Savart correction.
    let trace_vals = normal_trace(&f_h, &surface);
    let rhs = DiscScalar::from_vertex_values(surface.clone(), spec.order, &trace_vals);
    let rt_space = Arc::new(
        SurfaceRtSpace::new(surface.clone(), spec.order).map_err(|e| e.in_stage("mixed_lb"))?,
    );
    let (r_h, q_h, mixed) =
        solve_mixed_laplace_beltrami(&rhs, rt_space).map_err(|e| e.in_stage("mixed_lb"))?;
    lap("mixed_lb", &mut timings, &mut watch);

    // Trace of curl(N(F_tilde + tau' r_h)) on the boundary.
    let vol_source = VolumePotentialSource::from_rt_field(&f_h);
    let r_source =
        SurfacePotentialSource::from_parts(Some(&r_h), None, surface.clone());
    let trace_hat = boundary_normal_trace_of_curl(
        Some(&vol_source),
        Some(&r_source),
        &surface,
        spec.tolerances.boundary_quad_degree,
        spec.tolerances.potential,
        spec.tolerances.near_field_radius,
    )
    .map_err(|e| e.in_stage("boundary_trace"))?;
    eval_stats.merge_public(&trace_hat.stats);
    let g_hat = BoundarySamples {
        degree: spec.tolerances.boundary_quad_degree,
        values: trace_hat.values.clone(),
    };
    lap("boundary_trace", &mut timings, &mut watch);

    // Hypersingular solve: W p = <g_hat - g, v>.
    let hyper = assemble_hypersingular(surface.clone(), &HypersingularQuadrature::default())
        .map_err(|e| e.in_stage("hypersingular_assemble"))?;
    let hats = hyper.hats.clone();
    let rule = quadrature::triangle_rule_for_degree(spec.tolerances.boundary_quad_degree);
    let mut w_rhs = vec![0.0; hats.n_dofs];
    for t in 0..surface.triangles.len() {
        let (pts, wts) = quadrature::map_triangle(&rule, &surface.triangle_coords(t));
        for (q, (x, &w)) in pts.iter().zip(&wts).enumerate() {
            let defect = g_hat.values[t][q] - g.values[t][q];
            let hat = hats.hat_value(t, x);
            for k in 0..3 {
                w_rhs[hats.tri_dofs[t][k]] += w * defect * hat[k];
            }
        }
    }
    lap("hypersingular_assemble", &mut timings, &mut watch);
    let (p_h, hyper_report) =
        solve_hypersingular(&hyper, &w_rhs).map_err(|e| e.in_stage("hypersingular_solve"))?;
    lap("hypersingular_solve", &mut timings, &mut watch);

    // s_h = curl_G p_h + r_h and the corrected trace.
    let curl_op = surface_vector_curl_matrix(&hats);
    let curl_part: Vec<Vec3> = (0..surface.triangles.len())
        .map(|t| curl_op.apply(&hats, &p_h, t))
        .collect();
    let s_source =
        SurfacePotentialSource::from_parts(Some(&r_h), Some(&curl_part), surface.clone());
    let p_source = SurfacePotentialSource::from_parts(None, Some(&curl_part), surface.clone());
    let trace_corr = boundary_normal_trace_of_curl(
        None,
        Some(&p_source),
        &surface,
        spec.tolerances.boundary_quad_degree,
        spec.tolerances.potential,
        spec.tolerances.near_field_radius,
    )
    .map_err(|e| e.in_stage("corrected_trace"))?;
    eval_stats.merge_public(&trace_corr.stats);
    let g_h = BoundarySamples {
        degree: spec.tolerances.boundary_quad_degree,
        values: g_hat
            .values
            .iter()
            .zip(&trace_corr.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect(),
    };
    lap("corrected_trace", &mut timings, &mut watch);

    // Diagnostics: interpolation error, misfits, weak divergence.
    let f_error_l2 = f_interpolation_error(&f_h, &spec.vorticity);
    let f_error_weighted = mesh.h_avg * f_error_l2;
    let g_misfit_uncorrected = g_hat.sub(&g).l2_norm(&surface);
    let g_misfit_corrected = g_h.sub(&g).l2_norm(&surface);
    let g_misfit_weighted = mesh.h_avg.sqrt() * g_misfit_corrected;
    let dominant_term = if f_error_weighted > g_misfit_weighted {
        "f".to_string()
    } else {
        "g".to_string()
    };
    let weak_divergence = weak_divergence_residual_default(&f_h, &r_h, &surface);
    lap("diagnostics", &mut timings, &mut watch);

    let diagnostics = Diagnostics {
        topology,
        integrability,
        boundary_data,
        mixed,
        hypersingular_residual: hyper_report.residual,
        hypersingular_asymmetry: hyper.asymmetry_pre_average,
        f_error_l2,
        f_error_weighted,
        g_misfit_uncorrected,
        g_misfit_corrected,
        g_misfit_weighted,
        dominant_term,
        weak_divergence,
        timings,
        eval_stats,
    };

    Ok(Solution {
        mesh,
        surface,
        order: spec.order,
        f_h,
        r_h,
        q_h,
        hats,
        p_h,
        vol_source,
        s_source,
        tolerances: spec.tolerances.clone(),
        diagnostics,
        g_h,
        g,
    })
}

impl EvalStats {
    fn merge_public(&mut self, o: &EvalStats) {
        self.kernel_evals += o.kernel_evals;
        self.cells_subdivided += o.cells_subdivided;
        self.cells_truncated += o.cells_truncated;
        self.cells_dropped += o.cells_dropped;
    }
}

/// ||F - F_h||_{L2(Omega)} by quadrature.
fn f_interpolation_error(f_h: &RTField, vorticity: &VorticityData) -> f64 {
    let mesh = &f_h.space.mesh;
    let rule = quadrature::tet_rule_for_degree(2 * f_h.space.order + 2);
    let mut acc = 0.0;
    for it in 0..mesh.tets.len() {
        let (pts, wts) = quadrature::map_tet(&rule, &mesh.tet_coords(it));
        for (x, &w) in pts.iter().zip(&wts) {
            acc += w * (f_h.eval_in(it, x) - vorticity.eval(it, x)).norm_squared();
        }
    }
    acc.sqrt()
}

/// Weak-divergence residual |<F_tilde + tau' r_h, grad V>| normalised by
/// ||F_h|| ||grad V|| for a polynomial test function V. This is the
/// computable arbiter that fixes the sign of r_h: with the wrong sign the
/// two surface terms add instead of cancel.
pub fn weak_divergence_residual(
    f_h: &RTField,
    r_h: &SurfaceRtField,
    surface: &SurfaceMesh,
    grad_v: &dyn Fn(&Vec3) -> Vec3,
) -> f64 {
    let mesh = &f_h.space.mesh;
    let rule = quadrature::tet_rule_for_degree(2 * f_h.space.order + 4);
    let mut vol_term = 0.0;
    let mut f_norm_sq = 0.0;
    let mut gv_norm_sq = 0.0;
    for it in 0..mesh.tets.len() {
        let (pts, wts) = quadrature::map_tet(&rule, &mesh.tet_coords(it));
        for (x, &w) in pts.iter().zip(&wts) {
            let f = f_h.eval_in(it, x);
            let gv = grad_v(x);
            vol_term += w * f.dot(&gv);
            f_norm_sq += w * f.norm_squared();
            gv_norm_sq += w * gv.norm_squared();
        }
    }
    let srule = quadrature::triangle_rule_for_degree(2 * f_h.space.order + 4);
    let mut surf_term = 0.0;
    for t in 0..surface.triangles.len() {
        let (pts, wts) = quadrature::map_triangle(&srule, &surface.triangle_coords(t));
        let n = surface.normals[t];
        for (x, &w) in pts.iter().zip(&wts) {
            let r = r_h.eval_in(t, x);
            let gv = grad_v(x);
            let gv_t = gv - n * gv.dot(&n);
            surf_term += w * r.dot(&gv_t);
        }
    }
    (vol_term + surf_term).abs() / (f_norm_sq.sqrt() * gv_norm_sq.sqrt()).max(1e-300)
}

/// Default weak-divergence diagnostic: the worst residual over a small fixed
/// set of quadratic test functions.
fn weak_divergence_residual_default(
    f_h: &RTField,
    r_h: &SurfaceRtField,
    surface: &SurfaceMesh,
) -> f64 {
    let tests: Vec<Box<dyn Fn(&Vec3) -> Vec3>> = vec![
        Box::new(|x: &Vec3| Vec3::new(x.y * x.z, x.x * x.z, x.x * x.y)),
        Box::new(|x: &Vec3| Vec3::new(2.0 * x.x, -1.0, 0.5)),
        Box::new(|x: &Vec3| Vec3::new(x.x * x.x, x.y, x.z * x.x)),
    ];
    tests
        .iter()
        .map(|g| weak_divergence_residual(f_h, r_h, surface, g))
        .fold(0.0, f64::max)
}

impl Solution {
    fn boundary_gate(&self, points: &[Vec3]) -> Result<()> {
        let gate = 1e-6 * self.mesh.h_avg;
        for (i, x) in points.iter().enumerate() {
            if self.surface.distance(x) <= gate {
                return Err(Error::PointOnBoundary(format!(
                    "point {i} at {x:?} is within {gate:.3e} of the boundary"
                )));
            }
        }
        Ok(())
    }

    /// Stream function A_h = N(F_tilde) + N(tau' s_h) at the given points.
    /// Points on the boundary (within 1e-6 h) are rejected.
    pub fn evaluate_a(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        self.boundary_gate(points)?;
        Ok(self.evaluate_a_unchecked(points)?)
    }

    /// Velocity U_h = curl A_h at the given points, with the same gate.
    pub fn evaluate_u(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        self.boundary_gate(points)?;
        Ok(self.evaluate_u_unchecked(points)?)
    }

    /// A_h without the boundary gate (A is continuous across Gamma).
    pub fn evaluate_a_unchecked(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        let req = EvalRequest::new(
            points.to_vec(),
            self.tolerances.potential,
            self.tolerances.near_field_radius,
        )?;
        let v = newton_volume(&self.vol_source, &req)?;
        let s = single_layer(&self.s_source, &req)?;
        Ok(v.values
            .iter()
            .zip(&s.values)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// U_h without the boundary gate; points exactly on Gamma are nudged to
    /// the interior side so the one-sided trace is returned.
    pub fn evaluate_u_unchecked(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        let gate = 1e-6 * self.mesh.h_avg;
        let moved: Vec<Vec3> = points
            .iter()
            .map(|x| {
                if self.surface.distance(x) <= gate {
                    let t = self.surface.closest_triangle(x);
                    x - self.surface.normals[t] * gate
                } else {
                    *x
                }
            })
            .collect();
        let req = EvalRequest::new(
            moved,
            self.tolerances.potential,
            self.tolerances.near_field_radius,
        )?;
        let v = newton_volume_curl(&self.vol_source, &req)?;
        let s = single_layer_curl(&self.s_source, &req)?;
        Ok(v.values
            .iter()
            .zip(&s.values)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// Relative L2(Omega) error of U_h against an exact velocity, computed by
    /// per-element quadrature. `subsample` picks every element when None, or
    /// a deterministic volume-weighted subset for large meshes.
    pub fn velocity_error(
        &self,
        exact: &AnalyticField,
        quad_degree: usize,
        subsample: Option<usize>,
    ) -> Result<(f64, f64)> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mesh = &self.mesh;
        let rule = quadrature::tet_rule_for_degree(quad_degree);
        let all: Vec<usize> = (0..mesh.tets.len()).collect();
        let chosen: Vec<usize> = match subsample {
            Some(k) if k < all.len() => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
                let mut v = all.clone();
                v.shuffle(&mut rng);
                v.truncate(k);
                v
            }
            _ => all,
        };
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        let mut exact_vals = Vec::new();
        let chosen_vol: f64 = chosen.iter().map(|&it| mesh.tet_volume(it)).sum();
        let total_vol = mesh.total_volume();
        let scale = total_vol / chosen_vol;
        for &it in &chosen {
            let (p, w) = quadrature::map_tet(&rule, &mesh.tet_coords(it));
            for (x, &wi) in p.iter().zip(&w) {
                pts.push(*x);
                wts.push(wi * scale);
                exact_vals.push(exact.eval(x));
            }
        }
        let u = self.evaluate_u_unchecked(&pts)?;
        let mut err = 0.0;
        let mut norm = 0.0;
        for ((uh, ue), &w) in u.iter().zip(&exact_vals).zip(&wts) {
            err += w * (uh - ue).norm_squared();
            norm += w * ue.norm_squared();
        }
        Ok((err.sqrt(), norm.sqrt()))
    }

    /// Corrected and uncorrected boundary misfits from the stored samples.
    pub fn boundary_misfits(&self) -> (f64, f64) {
        (
            self.diagnostics.g_misfit_uncorrected,
            self.diagnostics.g_misfit_corrected,
        )
    }
}

/// A-posteriori error record for the perturbed-problem bound.
#[derive(Debug, Clone, Serialize)]
pub struct AposterioriRecord {
    pub f_error_l2: f64,
    pub f_error_weighted: f64,
    pub g_misfit_l2: f64,
    pub g_misfit_weighted: f64,
    pub dominant_term: String,
}

/// Both computable terms of the a-posteriori bound, with the dominant flag.
pub fn aposteriori_bound(sol: &Solution) -> AposterioriRecord {
    AposterioriRecord {
        f_error_l2: sol.diagnostics.f_error_l2,
        f_error_weighted: sol.diagnostics.f_error_weighted,
        g_misfit_l2: sol.diagnostics.g_misfit_corrected,
        g_misfit_weighted: sol.diagnostics.g_misfit_weighted,
        dominant_term: sol.diagnostics.dominant_term.clone(),
    }
}

/// One row of a line sample.
#[derive(Debug, Clone)]
pub struct LineSample {
    pub t: f64,
    pub x: Vec3,
    pub a: Vec3,
    pub u: Vec3,
}

/// Uniform samples of A_h and U_h along a segment. Points on the boundary
/// are evaluated from the interior side (A is continuous there).
pub fn sample_line(
    sol: &Solution,
    start: Vec3,
    end: Vec3,
    count: usize,
) -> Result<Vec<LineSample>> {
    let count = count.max(1);
    let mut ts = Vec::with_capacity(count);
    let mut pts = Vec::with_capacity(count);
    for i in 0..count {
        let t = if count == 1 {
            0.0
        } else {
            i as f64 / (count - 1) as f64
        };
        ts.push(t);
        pts.push(start + (end - start) * t);
    }
    let a = sol.evaluate_a_unchecked(&pts)?;
    let u = sol.evaluate_u_unchecked(&pts)?;
    Ok(ts
        .into_iter()
        .zip(pts)
        .zip(a.into_iter().zip(u))
        .map(|((t, x), (a, u))| LineSample { t, x, a, u })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;

    fn cube_spec(vorticity: VorticityData, boundary: BoundaryData, order: usize) -> ProblemSpec {
        ProblemSpec {
            mesh: Arc::new(fixtures::cube_grid(3)),
            vorticity,
            boundary,
            order,
            tolerances: Tolerances {
                potential: 1e-4,
                ..Tolerances::default()
            },
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Zero,
            },
            BoundaryData::Zero,
            2,
        );
        let sol = solve(&spec).unwrap();
        let pts = vec![Vec3::new(0.4, 0.5, 0.3), Vec3::new(2.0, 2.0, 2.0)];
        for a in sol.evaluate_a(&pts).unwrap() {
            assert!(a.norm() < 1e-10, "A = {a:?}");
        }
        for u in sol.evaluate_u(&pts).unwrap() {
            assert!(u.norm() < 1e-10, "U = {u:?}");
        }
        let rec = aposteriori_bound(&sol);
        assert!(rec.f_error_l2 < 1e-12);
        assert!(rec.g_misfit_l2 < 1e-10);
    }

    #[test]
    fn potential_flow_reproduced() {
        // F = 0, g = n . grad(x^2 - y^2): U must approximate the harmonic
        // gradient itself.
        let exact = AnalyticField::HarmonicGradient { amplitude: 1.0 };
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Zero,
            },
            BoundaryData::FromExactU {
                field: exact.clone(),
            },
            2,
        );
        let sol = solve(&spec).unwrap();
        let (err, norm) = sol.velocity_error(&exact, 2, None).unwrap();
        assert!(
            err / norm < 0.2,
            "potential flow error {err} vs norm {norm}"
        );
        // The corrected boundary misfit must beat the uncorrected one.
        let (unc, cor) = sol.boundary_misfits();
        assert!(cor < unc, "correction did not help: {cor} vs {unc}");
    }

    #[test]
    fn rigid_rotation_on_cube() {
        let exact = AnalyticField::RigidRotation { amplitude: 1.0 };
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Constant {
                    value: [0.0, 0.0, 1.0],
                },
            },
            BoundaryData::FromExactU {
                field: exact.clone(),
            },
            2,
        );
        let sol = solve(&spec).unwrap();
        assert!(sol.diagnostics.f_error_l2 < 1e-12);
        assert!(sol.diagnostics.weak_divergence < 1e-6);
        let (err, norm) = sol.velocity_error(&exact, 2, None).unwrap();
        assert!(err / norm < 0.2, "relative error {}", err / norm);
        let (unc, cor) = sol.boundary_misfits();
        assert!(cor < 0.8 * unc, "correction: {unc} -> {cor}");
    }

    #[test]
    fn boundary_gate_rejects_surface_points() {
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Zero,
            },
            BoundaryData::Zero,
            1,
        );
        let sol = solve(&spec).unwrap();
        let err = sol.evaluate_a(&[Vec3::new(0.5, 0.5, 1.0)]);
        assert!(matches!(err, Err(Error::PointOnBoundary(_))));
    }

    #[test]
    fn sample_line_reversal_symmetry() {
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Constant {
                    value: [0.0, 0.0, 1.0],
                },
            },
            BoundaryData::FromExactU {
                field: AnalyticField::RigidRotation { amplitude: 1.0 },
            },
            1,
        );
        let sol = solve(&spec).unwrap();
        let a = Vec3::new(-0.2, 0.5, 0.45);
        let b = Vec3::new(1.3, 0.5, 0.45);
        let fwd = sample_line(&sol, a, b, 9).unwrap();
        let bwd = sample_line(&sol, b, a, 9).unwrap();
        for (f, r) in fwd.iter().zip(bwd.iter().rev()) {
            assert!((f.a - r.a).norm() < 1e-12);
            assert!((f.u - r.u).norm() < 1e-12);
        }
        let single = sample_line(&sol, a, b, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].t, 0.0);
    }

    #[test]
    fn finite_difference_curl_of_a_matches_u() {
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Constant {
                    value: [0.0, 0.0, 1.0],
                },
            },
            BoundaryData::FromExactU {
                field: AnalyticField::RigidRotation { amplitude: 1.0 },
            },
            2,
        );
        let sol = solve(&spec).unwrap();
        let h = 1e-3;
        let centers = [
            Vec3::new(0.31, 0.52, 0.43),
            Vec3::new(0.72, 0.28, 0.61),
        ];
        for x in centers {
            let mut pts = Vec::new();
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                pts.push(x + e);
                pts.push(x - e);
            }
            let a = sol.evaluate_a_unchecked(&pts).unwrap();
            let d = |k: usize| (a[2 * k] - a[2 * k + 1]) / (2.0 * h);
            let fd = Vec3::new(
                d(1).z - d(2).y,
                d(2).x - d(0).z,
                d(0).y - d(1).x,
            );
            let u = sol.evaluate_u_unchecked(&[x]).unwrap()[0];
            assert!(
                (u - fd).norm() < 2e-3 * u.norm().max(0.1),
                "curl A mismatch at {x:?}: {u:?} vs {fd:?}"
            );
        }
    }

    #[test]
    fn exterior_decay() {
        let spec = cube_spec(
            VorticityData::Analytic {
                field: AnalyticField::Constant {
                    value: [0.0, 0.0, 1.0],
                },
            },
            BoundaryData::FromExactU {
                field: AnalyticField::RigidRotation { amplitude: 1.0 },
            },
            1,
        );
        let sol = solve(&spec).unwrap();
        let diam = sol.mesh.diameter();
        let c = Vec3::new(0.5, 0.5, 0.5);
        let dir = Vec3::new(0.3, 0.8, 0.52).normalize();
        let pts = vec![c + dir * (10.0 * diam), c + dir * (20.0 * diam)];
        let a = sol.evaluate_a(&pts).unwrap();
        // |A| ~ C / r: estimate C from the first radius and check the second.
        let c_est = a[0].norm() * 10.0 * diam;
        assert!(a[1].norm() <= 1.1 * c_est / (20.0 * diam));
    }
}
