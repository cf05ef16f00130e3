use std::f64::consts::{FRAC_PI_4, PI};

use rbm_coupling::geometry::{reflect_across, DomainSpec, Point};
use rbm_coupling::mirror::simulate_polygon_mirror;
use rbm_coupling::noise::{PathGrid, SeedSpec};
use rbm_coupling::stripmap::{build_frame, frames_along, strip_process};

#[test]
fn strip_image_of_wedge_couplings() {
    let alpha = FRAC_PI_4;
    let d = DomainSpec::wedge(alpha);
    let fr = build_frame(alpha, 1.0, 5.0 * PI / 16.0).unwrap();
    let grid = PathGrid::new(2e-5, 20_000, 2).unwrap();
    let mut normalized = Vec::new();
    for seed in 0..20 {
        let x = Point::new(fr.a - 0.02, 0.04 + 0.002 * seed as f64);
        let y = reflect_across(&fr.mirror(), x);
        let tr = simulate_polygon_mirror(&d, x, y, SeedSpec::new(seed, 0, 0), grid, 0.01, 10_000).unwrap();
        let frames = frames_along(&tr, alpha);
        let sp = strip_process(&tr, &frames).unwrap();
        for k in 0..tr.len() {
            if let Some(z) = sp.z_star[k] {
                assert!(z.im >= -1e-9 && z.im <= PI + 1e-9, "seed {seed} step {k}: {z}");
            }
            if let Some(res) = sp.residual[k] {
                assert!(res < 1e-7, "seed {seed} step {k}: {res}");
            }
        }
        for k in 0..tr.len().saturating_sub(1) {
            let (Some(z0), Some(z1), Some(f0), Some(f1)) = (sp.z_star[k], sp.z_star[k + 1], frames[k], frames[k + 1]) else {
                continue;
            };
            let pushed = tr.lx[k + 1] > tr.lx[k] || tr.ly[k + 1] > tr.ly[k];
            let far = tr.x[k].dist(Point::new(f0.a, 0.0)) > 0.05;
            let inner = z0.im > 0.2 && z0.im < PI - 0.2;
            if pushed || f0 != f1 || !far || !inner {
                continue;
            }
            let drho = sp.rho_tilde[k + 1] - sp.rho_tilde[k];
            let dz = (z1 - z0) / drho.sqrt();
            normalized.push(dz.re);
            normalized.push(dz.im);
        }
    }
    assert!(normalized.len() >= 4000, "{}", normalized.len());
    let var = normalized.iter().map(|v| v * v).sum::<f64>() / normalized.len() as f64;
    assert!((0.8..=1.25).contains(&var), "{var}");
}
