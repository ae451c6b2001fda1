use streamcurl::quadrature::Vec3;

fn clip_area(subject: &[(f64, f64)], clipper: &[(f64, f64)]) -> f64 {
    let mut poly: Vec<(f64, f64)> = subject.to_vec();
    for k in 0..clipper.len() {
        if poly.is_empty() {
            return 0.0;
        }
        let a = clipper[k];
        let b = clipper[(k + 1) % clipper.len()];
        let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let (pin, qin) = (inside(p), inside(q));
            if pin {
                out.push(p);
            }
            if pin != qin {
                let denom = (b.0 - a.0) * (q.1 - p.1) - (b.1 - a.1) * (q.0 - p.0);
                let num = (b.1 - a.1) * (p.0 - a.0) - (b.0 - a.0) * (p.1 - a.1);
                let s = num / denom;
                out.push((p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)));
            }
        }
        poly = out;
    }
    let mut area = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        area += p.0 * q.1 - q.0 * p.1;
    }
    0.5 * area.abs()
}

fn main() {
    let _ = Vec3::zeros();
    let t2 = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
    // mu along theta = 0: expect (1-r)^2/2
    for r in [0.0, 0.25, 0.5, 0.9] {
        let shifted: Vec<(f64, f64)> = t2.iter().map(|p| (p.0 + r, p.1)).collect();
        let mu = clip_area(&shifted, &t2);
        println!("mu(r={r}, th=0) = {mu:.6} expect {:.6}", (1.0 - r) * (1.0 - r) / 2.0);
    }
    // area identity: integral over D of mu dz = A^2 = 0.25 via tensor grid
    let n = 400;
    let h = 4.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = (-2.0 + (i as f64 + 0.5) * h, -2.0 + (j as f64 + 0.5) * h);
            let shifted: Vec<(f64, f64)> = t2.iter().map(|p| (p.0 + z.0, p.1 + z.1)).collect();
            acc += h * h * clip_area(&shifted, &t2);
        }
    }
    println!("area identity: {acc:.6} expect 0.25");
    // kernel integral via the same grid (crude, singular at 0 but integrable)
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = (-2.0 + (i as f64 + 0.5) * h, -2.0 + (j as f64 + 0.5) * h);
            let r = (z.0 * z.0 + z.1 * z.1).sqrt();
            if r < 1e-12 { continue; }
            let shifted: Vec<(f64, f64)> = t2.iter().map(|p| (p.0 + z.0, p.1 + z.1)).collect();
            acc += h * h * clip_area(&shifted, &t2) / r;
        }
    }
    println!("kernel integral (grid): {acc:.6} expect ~1.003066");
}
