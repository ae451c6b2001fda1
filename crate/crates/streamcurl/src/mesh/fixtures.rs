//! Structured mesh generators for tests, examples and the CLI fixtures.
//!
//! All generators build Kuhn (Freudenthal) subdivisions of axis-aligned cube
//! grids, which are conforming across neighbouring cubes.

use super::TetMesh;
use crate::quadrature::Vec3;
use std::collections::HashMap;

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Mesh of the single reference tet {(0,0,0),(1,0,0),(0,1,0),(0,0,1)}.
pub fn reference_tet() -> TetMesh {
    TetMesh::new(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 1, 2, 3]],
    )
    .expect("reference tet is valid")
}

struct GridBuilder {
    lo: Vec3,
    h: Vec3,
    verts: Vec<Vec3>,
    ids: HashMap<(i64, i64, i64), usize>,
    tets: Vec<[usize; 4]>,
}

impl GridBuilder {
    fn new(lo: Vec3, h: Vec3) -> Self {
        GridBuilder {
            lo,
            h,
            verts: Vec::new(),
            ids: HashMap::new(),
            tets: Vec::new(),
        }
    }

    fn vertex(&mut self, i: i64, j: i64, k: i64) -> usize {
        let lo = self.lo;
        let h = self.h;
        let verts = &mut self.verts;
        *self.ids.entry((i, j, k)).or_insert_with(|| {
            verts.push(Vec3::new(
                lo.x + h.x * i as f64,
                lo.y + h.y * j as f64,
                lo.z + h.z * k as f64,
            ));
            verts.len() - 1
        })
    }

    /// Kuhn subdivision of the cube with lower corner (i,j,k): six path tets,
    /// one per axis permutation.
    fn add_cube(&mut self, i: i64, j: i64, k: i64) {
        for perm in PERMS {
            let mut c = [i, j, k];
            let mut tet = [0usize; 4];
            tet[0] = self.vertex(c[0], c[1], c[2]);
            for (step, &axis) in perm.iter().enumerate() {
                c[axis] += 1;
                tet[step + 1] = self.vertex(c[0], c[1], c[2]);
            }
            self.tets.push(tet);
        }
    }

    fn build(self) -> TetMesh {
        TetMesh::new(self.verts, self.tets).expect("grid mesh is valid")
    }
}

/// Kuhn triangulation of the unit cube with n cells per axis (6 n^3 tets).
pub fn cube_grid(n: usize) -> TetMesh {
    box_grid(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), [n, n, n])
}

/// Kuhn triangulation of an axis-aligned box.
pub fn box_grid(lo: Vec3, hi: Vec3, n: [usize; 3]) -> TetMesh {
    let h = Vec3::new(
        (hi.x - lo.x) / n[0] as f64,
        (hi.y - lo.y) / n[1] as f64,
        (hi.z - lo.z) / n[2] as f64,
    );
    let mut g = GridBuilder::new(lo, h);
    for i in 0..n[0] as i64 {
        for j in 0..n[1] as i64 {
            for k in 0..n[2] as i64 {
                g.add_cube(i, j, k);
            }
        }
    }
    g.build()
}

/// The cavity domain (0,1)^3 \ [0.1,0.8]^3 on an n-cell grid; n must be a
/// multiple of 10 so the hole is resolved exactly. beta_2 = 1.
pub fn cavity(n: usize) -> TetMesh {
    assert!(n % 10 == 0, "cavity grid needs n divisible by 10");
    let h = 1.0 / n as f64;
    let lo_cell = (0.1 * n as f64).round() as i64;
    let hi_cell = (0.8 * n as f64).round() as i64;
    let mut g = GridBuilder::new(Vec3::zeros(), Vec3::new(h, h, h));
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            for k in 0..n as i64 {
                let inside_hole = (lo_cell..hi_cell).contains(&i)
                    && (lo_cell..hi_cell).contains(&j)
                    && (lo_cell..hi_cell).contains(&k);
                if !inside_hole {
                    g.add_cube(i, j, k);
                }
            }
        }
    }
    g.build()
}

/// A solid torus: 3x3x1 arrangement of unit cubes with the centre removed
/// (a picture frame). beta_1 = 1, boundary has chi = 0.
pub fn torus_frame() -> TetMesh {
    let mut g = GridBuilder::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
    for i in 0..3i64 {
        for j in 0..3i64 {
            if i == 1 && j == 1 {
                continue;
            }
            g.add_cube(i, j, 0);
        }
    }
    g.build()
}

/// Staircase approximation of the unit ball: cubes of a [-1,1]^3 grid whose
/// centre lies inside the ball.
pub fn ball_grid(n: usize) -> TetMesh {
    let h = 2.0 / n as f64;
    let lo = Vec3::new(-1.0, -1.0, -1.0);
    let mut g = GridBuilder::new(lo, Vec3::new(h, h, h));
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            for k in 0..n as i64 {
                let c = Vec3::new(
                    lo.x + h * (i as f64 + 0.5),
                    lo.y + h * (j as f64 + 0.5),
                    lo.z + h * (k as f64 + 0.5),
                );
                if c.norm() < 1.0 {
                    g.add_cube(i, j, k);
                }
            }
        }
    }
    g.build()
}
