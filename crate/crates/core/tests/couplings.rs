use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rbm_coupling::geometry::{reflect_across, DomainSpec, Point};
use rbm_coupling::mirror::{
    detect_theorem3_event, simulate_halfplane_mirror, simulate_polygon_mirror, PhaseKind, EDGE_X,
};
use rbm_coupling::noise::{PathGrid, SeedSpec};
use rbm_coupling::stripmap::build_frame;

#[test]
fn perpendicular_mirror_keeps_the_pair_reflected_in_the_axis() {
    let hp = DomainSpec::upper_half_plane();
    let grid = PathGrid::new(1e-4, 10_000, 2).unwrap();
    for seed in 0..10 {
        let tr = simulate_halfplane_mirror(&hp, Point::new(0.3, 0.4), Point::new(-0.3, 0.4), SeedSpec::new(seed, 0, 0), grid)
            .unwrap();
        for k in 0..tr.len() {
            if tr.mirror[k].is_none() {
                break;
            }
            assert!((tr.y[k].x + tr.x[k].x).abs() < 1e-12 && (tr.y[k].y - tr.x[k].y).abs() < 1e-12);
            assert!((tr.beta[k].unwrap() - FRAC_PI_2).abs() < 1e-12);
        }
    }
}

#[test]
fn coupled_tail_stays_together() {
    let hp = DomainSpec::upper_half_plane();
    let grid = PathGrid::new(1e-3, 3_000, 2).unwrap();
    let mut seen = 0;
    for seed in 0..20 {
        let tr = simulate_halfplane_mirror(&hp, Point::new(0.1, 0.2), Point::new(-0.1, 0.25), SeedSpec::new(seed, 0, 0), grid)
            .unwrap();
        if let Some(c) = tr.coupled_at {
            seen += 1;
            assert!((c..tr.len()).all(|k| tr.x[k] == tr.y[k]));
        }
    }
    assert!(seen > 0);
}

#[test]
fn wedge_mirror_angle_never_decreases_within_a_phase() {
    let alpha = FRAC_PI_4;
    let d = DomainSpec::wedge(alpha);
    let fr = build_frame(alpha, 1.0, 5.0 * PI / 16.0).unwrap();
    let x = Point::new(fr.a - 0.015, 0.03);
    let y = reflect_across(&fr.mirror(), x);
    let grid = PathGrid::new(2e-5, 50_000, 2).unwrap();
    for seed in 0..40 {
        let tr = simulate_polygon_mirror(&d, x, y, SeedSpec::new(seed, 0, 0), grid, 0.01, 10_000).unwrap();
        for k in 0..tr.len().saturating_sub(1) {
            if tr.phase_id[k] != tr.phase_id[k + 1] {
                continue;
            }
            let Some(ph) = tr.phases.get(tr.phase_id[k]) else { continue };
            if !matches!(ph.kind, PhaseKind::HalfPlane { edge: EDGE_X, .. }) {
                continue;
            }
            if let (Some(b0), Some(b1)) = (tr.beta[k], tr.beta[k + 1]) {
                // the ray from the hinge towards the vertex is out of reach
                // of both paths while the mirror leans away from it
                if b0 > FRAC_PI_2 {
                    continue;
                }
                assert!(b1 >= b0 - 1e-9, "seed {seed} step {k}: {b0} -> {b1}");
            }
        }
        for k in 0..tr.len() {
            if let Some(m) = tr.mirror[k] {
                assert!(reflect_across(&m, tr.x[k]).dist(tr.y[k]) < 5e-8);
            }
        }
    }
}

#[test]
fn wedge_sweep_start_produces_events() {
    let alpha = FRAC_PI_4;
    let d = DomainSpec::wedge(alpha);
    let fr = build_frame(alpha, 1.0, 5.0 * PI / 16.0).unwrap();
    let x = Point::new(fr.a, 0.03);
    let y = reflect_across(&fr.mirror(), x);
    let grid = PathGrid::new(2e-5, 50_000, 2).unwrap();
    let mut hits = 0;
    for seed in 0..50 {
        let tr = simulate_polygon_mirror(&d, x, y, SeedSpec::new(seed, 0, 0), grid, 0.01, 10_000).unwrap();
        let ev = detect_theorem3_event(&tr, &d, 0.01, 0.05).unwrap();
        if ev.occurred {
            hits += 1;
            assert!(ev.radial_gap > 0.05 && ev.x_edge_dist <= 0.01 && ev.y_edge_dist <= 0.01);
        }
        assert!(tr.phases.iter().all(|p| match p.kind {
            PhaseKind::HalfPlane { edge, .. } => edge <= 1,
            PhaseKind::FreePlane => true,
        }));
    }
    assert!(hits > 10, "{hits}");
}
