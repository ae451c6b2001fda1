//! Closed-form potential of a unit constant density on a flat triangle,
//! int_s dS(y) / |x - y|, via the per-edge log/arctan decomposition.
//!
//! Derivation: with P the projection of x onto the plane, h the height and
//! rho = y - P, one has div_y( rho (R - |h|)/rho^2 ) = 1/R, so the surface
//! divergence theorem turns the area integral into edge-line integrals with
//! the antiderivatives ln(s+R), atan(|h| s/(d R)) and atan(s/d).
//!
//! This is the inner integral of the hypersingular Galerkin assembly (the
//! surface curls of hat functions are constant per triangle, so only this
//! scalar is ever needed).

use crate::quadrature::Vec3;

/// int_s dS(y)/|x-y| for the triangle with vertices `tri` (any orientation).
/// Note: no 1/(4 pi) factor.
pub fn single_layer_constant(tri: &[Vec3; 3], x: &Vec3) -> f64 {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let n_hat = n / n.norm();
    let h = (x - tri[0]).dot(&n_hat);
    let proj = x - n_hat * h;
    let habs = h.abs();

    let mut total = 0.0;
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let edge_len = (b - a).norm();
        let t_hat = (b - a) / edge_len;
        // In-plane outward edge normal for the ordering consistent with n_hat.
        let m_hat = t_hat.cross(&n_hat);
        // Signed in-plane distance from P to the edge line; positive when P
        // is on the interior side.
        let d = (a - proj).dot(&m_hat);
        let sa = (a - proj).dot(&t_hat);
        let sb = (b - proj).dot(&t_hat);
        let ra = (x - a).norm();
        let rb = (x - b).norm();

        let scale = edge_len.max(ra).max(rb);
        if d.abs() <= 1e-14 * scale {
            // P on the edge line: the edge contributes nothing (the atan
            // pieces cancel in the limit and the log carries the factor d).
            continue;
        }

        // ln((sb+rb)/(sa+ra)); when s < 0 the sum cancels, so switch to the
        // equivalent form through (R+s)(R-s) = d^2 + h^2 = R0^2 per endpoint.
        let r0_sq = d * d + h * h;
        let log_term = if sa >= 0.0 {
            // sb >= sa >= 0: both sums are safe.
            ((sb + rb) / (sa + ra)).ln()
        } else if sb >= 0.0 {
            ((sb + rb) * (ra - sa)).ln() - r0_sq.ln()
        } else {
            ((ra - sa) / (rb - sb)).ln()
        };

        let mut term = d * log_term;
        if habs > 0.0 {
            // Plain atan keeps the antiderivatives continuous along the edge
            // (atan2 would jump branches when d < 0 and s changes sign).
            term += habs
                * ((habs * sb / (d * rb)).atan() - (habs * sa / (d * ra)).atan()
                    - ((sb / d).atan() - (sa / d).atan()));
        }
        total += term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use rand::{Rng, SeedableRng};

    /// Brute-force value by uniform subdivision + fixed rule, refined until
    /// two consecutive levels agree.
    fn brute_force(tri: &[Vec3; 3], x: &Vec3) -> f64 {
        let rule = quadrature::triangle_rule(6);
        let mut cells = vec![*tri];
        let mut last = f64::NAN;
        for _level in 0..9 {
            let mut acc = 0.0;
            for c in &cells {
                let (pts, wts) = quadrature::map_triangle(&rule, c);
                for (y, &w) in pts.iter().zip(&wts) {
                    acc += w / (x - y).norm();
                }
            }
            if (acc - last).abs() < 1e-10 * acc.abs() {
                return acc;
            }
            last = acc;
            cells = cells
                .iter()
                .flat_map(|c| quadrature::split_triangle(c).into_iter())
                .collect();
        }
        last
    }

    #[test]
    fn matches_brute_force_off_plane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let tri = [
                Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                Vec3::new(rng.gen::<f64>() + 1.0, rng.gen(), rng.gen()),
                Vec3::new(rng.gen(), rng.gen::<f64>() + 1.0, rng.gen()),
            ];
            let x = Vec3::new(
                rng.gen_range(-2.0..3.0),
                rng.gen_range(-2.0..3.0),
                rng.gen_range(0.3..2.0),
            );
            let exact = single_layer_constant(&tri, &x);
            let brute = brute_force(&tri, &x);
            assert!(
                (exact - brute).abs() < 1e-8 * brute.abs().max(1e-8),
                "analytic {exact} vs brute {brute} for x {x:?}"
            );
        }
    }

    #[test]
    fn matches_brute_force_in_plane() {
        // Points in the triangle plane but outside the triangle.
        let tri = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.2, 0.9, 0.0),
        ];
        for x in [
            Vec3::new(2.0, 0.5, 0.0),
            Vec3::new(-1.0, -0.5, 0.0),
            Vec3::new(0.5, 2.5, 0.0),
            Vec3::new(1.5, 0.0, 0.0), // on the extension of an edge line
        ] {
            let exact = single_layer_constant(&tri, &x);
            let brute = brute_force(&tri, &x);
            assert!(
                (exact - brute).abs() < 1e-7 * brute.abs(),
                "analytic {exact} vs brute {brute} at {x:?}"
            );
        }
    }

    #[test]
    fn equilateral_centroid_value() {
        // Unit-side equilateral triangle at its centroid: each edge has
        // d = 1/(2 sqrt 3), endpoints at s = -+1/2, R = 1/sqrt 3, so
        // I = 3 d ln((R+1/2)/(R-1/2)) = sqrt(3) ln(2 + sqrt 3).
        let tri = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        ];
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let exact = single_layer_constant(&tri, &c);
        let reference = 3f64.sqrt() * (2.0 + 3f64.sqrt()).ln();
        assert!(
            (exact - reference).abs() < 1e-12,
            "centroid potential {exact} vs {reference}"
        );
    }

    #[test]
    fn continuous_across_the_face() {
        let tri = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.1, 0.0),
            Vec3::new(0.3, 1.0, 0.0),
        ];
        let inside = Vec3::new(0.4, 0.35, 0.0);
        let above = single_layer_constant(&tri, &(inside + Vec3::new(0.0, 0.0, 1e-7)));
        let on = single_layer_constant(&tri, &inside);
        let below = single_layer_constant(&tri, &(inside - Vec3::new(0.0, 0.0, 1e-7)));
        assert!((above - on).abs() < 1e-5 * on);
        assert!((below - on).abs() < 1e-5 * on);
    }

    #[test]
    fn near_edge_evaluation_is_stable() {
        let tri = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        // Approach the midpoint of an edge from outside, in plane.
        for e in [1e-4, 1e-8, 1e-12] {
            let x = Vec3::new(0.5, -e, 0.0);
            let v = single_layer_constant(&tri, &x);
            assert!(v.is_finite() && v > 0.0);
        }
    }
}
