//! Disk cache of solved problems, keyed by a content hash of the mesh and
//! the stage inputs, so repeated runs and the `sample` command reuse the
//! expensive potential evaluations.

use super::{BoundaryData, BoundarySamples, Diagnostics, ProblemSpec, Solution, Tolerances, VorticityData};
use crate::error::{Error, Result};
use crate::mesh::{extract_boundary, TetMesh};
use crate::potentials::{SurfacePotentialSource, VolumePotentialSource};
use crate::quadrature::Vec3;
use crate::spaces::surface::DiscScalar;
use crate::spaces::{
    surface_vector_curl_matrix, HatSpace, RTField, SurfaceRtField, SurfaceRtSpace, VolumeRtSpace,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Serializable snapshot of a solved problem.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionArtifact {
    pub order: usize,
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub vorticity: VorticityData,
    pub boundary: BoundaryData,
    pub tolerances: Tolerances,
    pub f_coeffs: Vec<f64>,
    pub r_coeffs: Vec<f64>,
    pub q_coeffs: Vec<[f64; 3]>,
    pub p_h: Vec<f64>,
    pub g_degree: usize,
    pub g_values: Vec<Vec<f64>>,
    pub g_h_values: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

/// Content hash identifying a (mesh, problem) pair. First 16 hex digits.
pub fn cache_id(spec: &ProblemSpec) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        vertices: Vec<[u64; 3]>,
        tets: &'a [[usize; 4]],
        vorticity: &'a VorticityData,
        boundary: &'a BoundaryData,
        order: usize,
        tolerances: &'a Tolerances,
    }
    let key = Key {
        vertices: spec
            .mesh
            .vertices
            .iter()
            .map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()])
            .collect(),
        tets: &spec.mesh.tets,
        vorticity: &spec.vorticity,
        boundary: &spec.boundary,
        order: spec.order,
        tolerances: &spec.tolerances,
    };
    let bytes = serde_json::to_vec(&key).expect("cache key serializes");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

pub fn to_artifact(spec: &ProblemSpec, sol: &Solution) -> SolutionArtifact {
    SolutionArtifact {
        order: sol.order,
        vertices: sol.mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        tets: sol.mesh.tets.clone(),
        vorticity: spec.vorticity.clone(),
        boundary: spec.boundary.clone(),
        tolerances: sol.tolerances.clone(),
        f_coeffs: sol.f_h.coeffs.clone(),
        r_coeffs: sol.r_h.coeffs.clone(),
        q_coeffs: sol.q_h.coeffs.clone(),
        p_h: sol.p_h.clone(),
        g_degree: sol.g.degree,
        g_values: sol.g.values.clone(),
        g_h_values: sol.g_h.values.clone(),
        diagnostics: sol.diagnostics.clone(),
    }
}

/// Rebuilds the evaluators from a snapshot.
pub fn from_artifact(art: SolutionArtifact) -> Result<Solution> {
    let vertices = art
        .vertices
        .iter()
        .map(|v| Vec3::new(v[0], v[1], v[2]))
        .collect();
    let mesh = Arc::new(TetMesh::new(vertices, art.tets.clone())?);
    let surface = Arc::new(extract_boundary(&mesh));
    let space = Arc::new(VolumeRtSpace::new(mesh.clone(), art.order)?);
    let f_h = RTField::from_coeffs(space, art.f_coeffs);
    let rt_space = Arc::new(SurfaceRtSpace::new(surface.clone(), art.order)?);
    let r_h = SurfaceRtField::from_coeffs(rt_space, art.r_coeffs);
    let q_h = DiscScalar {
        surface: surface.clone(),
        order: art.order,
        coeffs: art.q_coeffs,
    };
    let hats = Arc::new(HatSpace::new(surface.clone()));
    if art.p_h.len() != hats.n_dofs {
        return Err(Error::CacheMiss(format!(
            "artifact p_h has {} dofs, surface needs {}",
            art.p_h.len(),
            hats.n_dofs
        )));
    }
    let curl_op = surface_vector_curl_matrix(&hats);
    let curl_part: Vec<Vec3> = (0..surface.triangles.len())
        .map(|t| curl_op.apply(&hats, &art.p_h, t))
        .collect();
    let vol_source = VolumePotentialSource::from_rt_field(&f_h);
    let s_source =
        SurfacePotentialSource::from_parts(Some(&r_h), Some(&curl_part), surface.clone());
    Ok(Solution {
        mesh,
        surface,
        order: art.order,
        f_h,
        r_h,
        q_h,
        hats,
        p_h: art.p_h,
        vol_source,
        s_source,
        tolerances: art.tolerances,
        diagnostics: art.diagnostics,
        g_h: BoundarySamples {
            degree: art.g_degree,
            values: art.g_h_values,
        },
        g: BoundarySamples {
            degree: art.g_degree,
            values: art.g_values,
        },
    })
}

pub fn artifact_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.solution.json"))
}

pub fn save(dir: &Path, id: &str, art: &SolutionArtifact) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = artifact_path(dir, id);
    let tmp = path.with_extension("tmp");
    let file = std::fs::File::create(&tmp)?;
    serde_json::to_writer(std::io::BufWriter::new(file), art)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads by full id or unique prefix.
pub fn load(dir: &Path, id_prefix: &str) -> Result<SolutionArtifact> {
    let mut matches = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".solution.json") {
                if stem.starts_with(id_prefix) {
                    matches.push(entry.path());
                }
            }
        }
    }
    match matches.len() {
        0 => Err(Error::CacheMiss(format!(
            "no cached solution matching '{id_prefix}' in {}",
            dir.display()
        ))),
        1 => {
            let file = std::fs::File::open(&matches[0])?;
            serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(|e| Error::CacheMiss(format!("corrupt artifact: {e}")))
        }
        _ => Err(Error::CacheMiss(format!(
            "ambiguous id prefix '{id_prefix}' ({} matches)",
            matches.len()
        ))),
    }
}
