//! Finite element spaces on the volume mesh and its boundary, canonical
//! interpolation, trace and surface-derivative maps, and the data
//! compatibility checks.

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{self, Vec3};

pub mod rt_volume;
pub mod surface;

pub use rt_volume::{
    divergence_field, normal_trace, rt_interpolate, rt_interpolate_in, DivergenceField, RTField,
    VolumeRtSpace,
};
pub use surface::{
    surface_gradient_matrix, surface_vector_curl_matrix, DiscScalar, HatSpace, SurfaceOperator,
    SurfaceRtField, SurfaceRtSpace, TriFrame,
};

/// Families of discrete spaces used by the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    RtVolume,
    RtSurface,
    LagrangeSurface,
    DiscSurface,
}

/// Result of the integrability check on the discrete vorticity.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IntegrabilityReport {
    /// max over elements of |div F_h| (exact polynomial evaluation).
    pub div_inf: f64,
    /// Flux of F_h through each boundary component.
    pub component_fluxes: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// Checks div F_h = 0 element-wise and zero flux through every boundary
/// component; both are necessary for a velocity field to exist.
pub fn check_integrability(
    field: &RTField,
    surface: &SurfaceMesh,
    tol: f64,
) -> Result<IntegrabilityReport> {
    let div = divergence_field(field);
    let div_inf = div.max_abs();
    let trace = normal_trace(field, surface);
    let mut fluxes = vec![0.0; surface.n_components];
    for (t, vals) in trace.iter().enumerate() {
        // trace is linear per triangle: integral = area * mean of vertex values
        let area = surface.triangle_area(t);
        fluxes[surface.component_id[t]] += area * (vals[0] + vals[1] + vals[2]) / 3.0;
    }
    let area_scale: Vec<f64> = (0..surface.n_components)
        .map(|c| surface.component_area(c))
        .collect();
    let pass = div_inf <= tol
        && fluxes
            .iter()
            .zip(&area_scale)
            .all(|(&f, &a)| f.abs() <= tol * a.max(1.0));
    let report = IntegrabilityReport {
        div_inf,
        component_fluxes: fluxes,
        tol,
        pass,
    };
    if report.pass {
        Ok(report)
    } else {
        Err(Error::NotIntegrable(format!(
            "div_inf = {:.3e}, component fluxes = {:?}",
            report.div_inf, report.component_fluxes
        )))
    }
}

/// Result of the boundary data compatibility check.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BoundaryDataReport {
    /// Integral of g over each boundary component.
    pub component_integrals: Vec<f64>,
    pub component_areas: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// Checks the zero-mean condition of the boundary data on every component;
/// g is sampled per triangle at quadrature points.
pub fn check_boundary_data<G>(
    g: G,
    surface: &SurfaceMesh,
    tol: f64,
) -> Result<BoundaryDataReport>
where
    G: Fn(usize, &Vec3) -> f64,
{
    let rule = quadrature::triangle_rule_for_degree(6);
    let mut integrals = vec![0.0; surface.n_components];
    for t in 0..surface.triangles.len() {
        let (pts, wts) = quadrature::map_triangle(&rule, &surface.triangle_coords(t));
        let mut acc = 0.0;
        for (x, &w) in pts.iter().zip(&wts) {
            acc += w * g(t, x);
        }
        integrals[surface.component_id[t]] += acc;
    }
    let areas: Vec<f64> = (0..surface.n_components)
        .map(|c| surface.component_area(c))
        .collect();
    let pass = integrals
        .iter()
        .zip(&areas)
        .all(|(&i, &a)| i.abs() <= tol * a);
    let report = BoundaryDataReport {
        component_integrals: integrals,
        component_areas: areas,
        tol,
        pass,
    };
    if report.pass {
        Ok(report)
    } else {
        Err(Error::IncompatibleBoundaryData(format!(
            "component integrals {:?} exceed tol {tol}",
            report.component_integrals
        )))
    }
}
