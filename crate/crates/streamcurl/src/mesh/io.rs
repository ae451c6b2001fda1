//! Mesh file ingestion: Gmsh MSH v2 ASCII and VTK legacy ASCII unstructured
//! grids. Binary variants are rejected.

use super::TetMesh;
use crate::error::{Error, Result};
use crate::quadrature::Vec3;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    GmshV2Ascii,
    VtkLegacyAscii,
}

impl MeshFormat {
    /// Guess from the file extension (.msh / .vtk).
    pub fn from_path(path: &Path) -> Result<MeshFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("msh") => Ok(MeshFormat::GmshV2Ascii),
            Some("vtk") => Ok(MeshFormat::VtkLegacyAscii),
            other => Err(Error::Parse(format!(
                "cannot infer mesh format from extension {other:?}"
            ))),
        }
    }
}

/// Loads a tetrahedral mesh from disk in the declared format.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    match format {
        MeshFormat::GmshV2Ascii => parse_gmsh_v2(&text),
        MeshFormat::VtkLegacyAscii => parse_vtk_legacy(&text),
    }
}

/// Parses Gmsh MSH v2 ASCII. Only element type 4 (4-node tets) is kept;
/// lower-dimensional elements are skipped.
pub fn parse_gmsh_v2(text: &str) -> Result<TetMesh> {
    let mut lines = text.lines().map(str::trim);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut id_map: HashMap<u64, usize> = HashMap::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut saw_nodes = false;
    let mut saw_elements = false;

    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let header = lines
                    .next()
                    .ok_or_else(|| Error::Parse("truncated $MeshFormat".into()))?;
                let mut it = header.split_whitespace();
                let version: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad MSH version".into()))?;
                let file_type: i32 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad MSH file type".into()))?;
                if !(2.0..3.0).contains(&version) {
                    return Err(Error::Parse(format!(
                        "unsupported MSH version {version}; need v2"
                    )));
                }
                if file_type != 0 {
                    return Err(Error::Parse("binary MSH files are not supported".into()));
                }
            }
            "$Nodes" => {
                saw_nodes = true;
                let count: usize = lines
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad node count".into()))?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::Parse("truncated $Nodes".into()))?;
                    let mut it = line.split_whitespace();
                    let id: u64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse(format!("bad node line '{line}'")))?;
                    let mut xyz = [0.0f64; 3];
                    for v in &mut xyz {
                        *v = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse(format!("bad node line '{line}'")))?;
                    }
                    id_map.insert(id, vertices.len());
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
            }
            "$Elements" => {
                saw_elements = true;
                let count: usize = lines
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad element count".into()))?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::Parse("truncated $Elements".into()))?;
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(Error::Parse(format!("bad element line '{line}'")));
                    }
                    let etype: u32 = fields[1]
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad element type in '{line}'")))?;
                    if etype != 4 {
                        continue; // points, lines, triangles: not volume cells
                    }
                    let ntags: usize = fields[2]
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad tag count in '{line}'")))?;
                    let node_fields = &fields[3 + ntags..];
                    if node_fields.len() != 4 {
                        return Err(Error::Parse(format!(
                            "tet element needs 4 nodes, got {} in '{line}'",
                            node_fields.len()
                        )));
                    }
                    let mut tet = [0usize; 4];
                    for (k, nf) in node_fields.iter().enumerate() {
                        let id: u64 = nf
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad node id in '{line}'")))?;
                        tet[k] = *id_map
                            .get(&id)
                            .ok_or_else(|| Error::Parse(format!("unknown node id {id}")))?;
                    }
                    tets.push(tet);
                }
            }
            _ => {}
        }
    }

    if !saw_nodes || !saw_elements {
        return Err(Error::Parse("missing $Nodes or $Elements section".into()));
    }
    TetMesh::new(vertices, tets)
}

/// Parses a VTK legacy ASCII UNSTRUCTURED_GRID, keeping cells of type 10.
pub fn parse_vtk_legacy(text: &str) -> Result<TetMesh> {
    let mut tokens_line = text.lines().map(str::trim);
    // Header: version comment, title, format, dataset.
    let _version = tokens_line
        .next()
        .ok_or_else(|| Error::Parse("empty VTK file".into()))?;
    let _title = tokens_line.next();
    let format = tokens_line
        .next()
        .ok_or_else(|| Error::Parse("truncated VTK header".into()))?;
    if !format.eq_ignore_ascii_case("ASCII") {
        return Err(Error::Parse(
            "only ASCII VTK legacy files are supported".into(),
        ));
    }
    let dataset = tokens_line
        .next()
        .ok_or_else(|| Error::Parse("truncated VTK header".into()))?;
    if !dataset.to_ascii_uppercase().contains("UNSTRUCTURED_GRID") {
        return Err(Error::Parse(format!(
            "expected DATASET UNSTRUCTURED_GRID, got '{dataset}'"
        )));
    }

    // Token stream for the rest.
    let rest: String = tokens_line.collect::<Vec<_>>().join("\n");
    let mut tok = rest.split_whitespace();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut cell_types: Vec<u32> = Vec::new();

    while let Some(word) = tok.next() {
        match word.to_ascii_uppercase().as_str() {
            "POINTS" => {
                let n: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad POINTS count".into()))?;
                let _dtype = tok.next();
                for _ in 0..n {
                    let mut xyz = [0.0f64; 3];
                    for v in &mut xyz {
                        *v = tok
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse("truncated POINTS".into()))?;
                    }
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
            }
            "CELLS" => {
                let n: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad CELLS count".into()))?;
                let _total: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad CELLS size".into()))?;
                for _ in 0..n {
                    let k: usize = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse("truncated CELLS".into()))?;
                    let mut cell = Vec::with_capacity(k);
                    for _ in 0..k {
                        let idx: usize = tok
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse("truncated CELLS".into()))?;
                        cell.push(idx);
                    }
                    cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let n: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad CELL_TYPES count".into()))?;
                for _ in 0..n {
                    let t: u32 = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse("truncated CELL_TYPES".into()))?;
                    cell_types.push(t);
                }
            }
            _ => {}
        }
    }

    if cells.len() != cell_types.len() {
        return Err(Error::Parse(format!(
            "CELLS ({}) and CELL_TYPES ({}) disagree",
            cells.len(),
            cell_types.len()
        )));
    }
    let mut tets = Vec::new();
    for (cell, &ty) in cells.iter().zip(&cell_types) {
        if ty != 10 {
            continue;
        }
        if cell.len() != 4 {
            return Err(Error::Parse(format!(
                "VTK tet cell with {} nodes",
                cell.len()
            )));
        }
        tets.push([cell[0], cell[1], cell[2], cell[3]]);
    }
    TetMesh::new(vertices, tets)
}

/// Writes a mesh as Gmsh MSH v2 ASCII (used to ship fixture meshes).
pub fn write_gmsh_v2(mesh: &TetMesh, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "$MeshFormat\n2.2 0 8\n$EndMeshFormat")?;
    writeln!(out, "$Nodes\n{}", mesh.vertices.len())?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(out, "{} {:.17} {:.17} {:.17}", i + 1, v.x, v.y, v.z)?;
    }
    writeln!(out, "$EndNodes")?;
    writeln!(out, "$Elements\n{}", mesh.tets.len())?;
    for (i, t) in mesh.tets.iter().enumerate() {
        writeln!(
            out,
            "{} 4 2 0 1 {} {} {} {}",
            i + 1,
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1
        )?;
    }
    writeln!(out, "$EndElements")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;

    const TET_MSH: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n2\n1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4\n$EndElements\n";

    #[test]
    fn parses_reference_tet_msh() {
        let mesh = parse_gmsh_v2(TET_MSH).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.tets.len(), 1);
        assert!((mesh.tet_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_binary_msh() {
        let text = TET_MSH.replace("2.2 0 8", "2.2 1 8");
        assert!(matches!(parse_gmsh_v2(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn parses_vtk_tet() {
        let text = "# vtk DataFile Version 3.0\nprobe\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 4 double\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nCELLS 1 5\n4 0 1 2 3\nCELL_TYPES 1\n10\n";
        let mesh = parse_vtk_legacy(text).unwrap();
        assert_eq!(mesh.tets.len(), 1);
    }

    #[test]
    fn rejects_binary_vtk() {
        let text = "# vtk DataFile Version 3.0\nprobe\nBINARY\nDATASET UNSTRUCTURED_GRID\n";
        assert!(matches!(parse_vtk_legacy(text), Err(Error::Parse(_))));
    }

    #[test]
    fn gmsh_round_trip_preserves_geometry() {
        let mesh = fixtures::cube_grid(2);
        let dir = std::env::temp_dir().join("streamcurl_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cube2.msh");
        write_gmsh_v2(&mesh, &path).unwrap();
        let back = load_mesh(&path, MeshFormat::GmshV2Ascii).unwrap();
        assert_eq!(back.tets.len(), mesh.tets.len());
        assert!((back.total_volume() - mesh.total_volume()).abs() < 1e-13);
    }
}
