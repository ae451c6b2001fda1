use streamcurl::potentials::tri_analytic::single_layer_constant;
use streamcurl::quadrature::{self, Vec3};

fn main() {
    let t = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
    ];
    let mut prev = 0.0;
    for level in 0..9 {
        let mut cells = vec![t];
        for _ in 0..level {
            cells = cells
                .iter()
                .flat_map(|c| quadrature::split_triangle(c).into_iter())
                .collect();
        }
        let rule = quadrature::triangle_rule(4);
        let mut acc = 0.0;
        for c in &cells {
            let (pts, wts) = quadrature::map_triangle(&rule, c);
            for (x, &w) in pts.iter().zip(&wts) {
                acc += w * single_layer_constant(&t, x);
            }
        }
        println!(
            "level {level}: outer+analytic = {acc:.12}  (delta {:.3e})",
            acc - prev
        );
        prev = acc;
    }
}
