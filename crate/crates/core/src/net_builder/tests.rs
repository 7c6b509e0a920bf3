use super::*;
use crate::rips::decide_criterion;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn square_box(lo: i64, hi: i64) -> DomainShape {
    DomainShape::Box { min: vec![rat(lo, 1); 2], max: vec![rat(hi, 1); 2] }
}

#[test]
fn box_net_covers_and_connects() {
    let domain = sample_domain(&square_box(0, 6), &rat(1, 10), true).unwrap();
    assert_eq!(domain.points.len(), 61 * 61);
    let r = rat(1, 1);
    let net = build_net(&domain, &r).unwrap();
    // Deterministic greedy in row-major order.
    assert_eq!(net.len(), 42);

    let report = check_net(&net, &domain, &r).unwrap();
    assert!(report.separation_ok);
    assert!(report.covering_ok);
    assert!(report.maximal);
    assert!(report.connectivity_3r_ok);
    assert_eq!(report.component_count, 1);
    assert!(report.split.is_none());

    // Independent brute-force covering radius over the raw sample.
    let mut worst = BigRational::zero();
    for p in &domain.points {
        let best = net
            .iter()
            .map(|&j| dist_sq(p, &domain.points[j]))
            .min()
            .unwrap();
        if best > worst {
            worst = best;
        }
    }
    assert_eq!(report.covering_radius, Extended::Finite(Dist::from_sq(worst)));
}

#[test]
fn greedy_net_is_exhaustively_maximal() {
    let domain = sample_domain(&square_box(0, 3), &rat(1, 4), true).unwrap();
    let r = rat(3, 4);
    let net = build_net(&domain, &r).unwrap();
    let chosen: std::collections::BTreeSet<usize> = net.iter().copied().collect();
    let r2 = &r * &r;
    for i in 0..domain.points.len() {
        if chosen.contains(&i) {
            continue;
        }
        // Adding any point breaks separation somewhere.
        assert!(net
            .iter()
            .any(|&j| dist_sq(&domain.points[i], &domain.points[j]) <= r2));
    }
}

#[test]
fn single_point_domain_is_its_own_net() {
    let shape = DomainShape::Box { min: vec![rat(2, 1), rat(3, 1)], max: vec![rat(2, 1), rat(3, 1)] };
    let domain = sample_domain(&shape, &rat(1, 10), true).unwrap();
    assert_eq!(domain.points.len(), 1);
    let net = build_net(&domain, &rat(1, 1)).unwrap();
    assert_eq!(net, vec![0]);
    let report = check_net(&net, &domain, &rat(1, 1)).unwrap();
    assert!(report.separation_ok && report.covering_ok && report.connectivity_3r_ok);
    assert_eq!(report.covering_radius, Extended::Finite(Dist::zero()));
}

#[test]
fn disconnected_sample_reports_the_split() {
    let shape = DomainShape::Union {
        parts: vec![square_box(0, 2), square_box(12, 14)],
    };
    let domain = sample_domain(&shape, &rat(1, 10), false).unwrap();
    let r = rat(1, 1);
    let net = build_net(&domain, &r).unwrap();
    assert_eq!(net.len(), 12);
    let report = check_net(&net, &domain, &r).unwrap();
    assert!(report.separation_ok && report.covering_ok);
    assert!(!report.connectivity_3r_ok);
    assert_eq!(report.component_count, 2);
    let split = report.split.unwrap();
    assert_eq!(split.side_a.len() + split.side_b.len(), 12);
    // Nearest cross pair is (7/5, 7/5) against (12, 12).
    assert_eq!(split.gap, Dist::from_sq(rat(5618, 25)));
    assert!(!report.declared_connected);
}

#[test]
fn disk_and_annulus_nets_connect() {
    let disk = DomainShape::Disk { center: vec![rat(0, 1), rat(0, 1)], radius: rat(5, 1) };
    let domain = sample_domain(&disk, &rat(1, 5), true).unwrap();
    let net = build_net(&domain, &rat(1, 1)).unwrap();
    let report = check_net(&net, &domain, &rat(1, 1)).unwrap();
    assert!(report.separation_ok && report.covering_ok && report.connectivity_3r_ok);

    let ring = DomainShape::Annulus {
        center: vec![rat(0, 1), rat(0, 1)],
        inner: rat(2, 1),
        outer: rat(5, 1),
    };
    let domain = sample_domain(&ring, &rat(1, 5), true).unwrap();
    // The hole is respected exactly.
    assert!(domain
        .points
        .iter()
        .all(|p| dist_sq(p, &[rat(0, 1), rat(0, 1)]) >= rat(4, 1)));
    let net = build_net(&domain, &rat(1, 1)).unwrap();
    let report = check_net(&net, &domain, &rat(1, 1)).unwrap();
    assert!(report.separation_ok && report.covering_ok && report.connectivity_3r_ok);
}

#[test]
fn coarse_pitch_is_rejected() {
    let domain = sample_domain(&square_box(0, 2), &rat(1, 10), true).unwrap();
    assert!(build_net(&domain, &rat(1, 5)).is_err());
    assert!(build_net(&domain, &rat(19, 100)).is_err());
    assert!(build_net(&domain, &rat(21, 100)).is_ok());
}

#[test]
fn empty_net_fails_covering() {
    let domain = sample_domain(&square_box(0, 2), &rat(1, 10), true).unwrap();
    let report = check_net(&[], &domain, &rat(1, 1)).unwrap();
    assert_eq!(report.covering_radius, Extended::Infinite);
    assert!(!report.covering_ok);
    assert!(!report.maximal);
}

#[test]
fn net_points_obey_the_packing_bound() {
    let domain = sample_domain(&square_box(0, 10), &rat(1, 10), true).unwrap();
    let net = build_net(&domain, &rat(1, 1)).unwrap();
    // Any ball of radius R holds at most (ceil(2R/r) + 1)^dim net points.
    let big_r = rat(2, 1);
    let bound = 5usize * 5;
    let r2 = &big_r * &big_r;
    for &i in &net {
        let inside = net
            .iter()
            .filter(|&&j| dist_sq(&domain.points[i], &domain.points[j]) <= r2)
            .count();
        assert!(inside <= bound, "{inside} net points in one ball of radius 2");
    }
}

#[test]
fn union_sampling_dedupes_overlap() {
    let a = DomainShape::Box { min: vec![rat(0, 1); 2], max: vec![rat(1, 1); 2] };
    let b = DomainShape::Box {
        min: vec![rat(1, 2); 2],
        max: vec![rat(3, 2); 2],
    };
    let domain =
        sample_domain(&DomainShape::Union { parts: vec![a, b] }, &rat(1, 10), true).unwrap();
    // 11^2 + 11^2 - 6^2 distinct grid points.
    assert_eq!(domain.points.len(), 206);
}

#[test]
fn exported_net_behaves_like_a_finite_model() {
    let domain = sample_domain(&square_box(0, 4), &rat(1, 10), true).unwrap();
    let r = rat(1, 1);
    let net = build_net(&domain, &r).unwrap();
    let model = net_to_model(&domain, &net).unwrap();
    let window = model
        .enumerate_window(&model.suggest_window(&rat(2, 1)))
        .unwrap();
    assert_eq!(window.len(), net.len());
    // A finite model never satisfies the criterion: every scale large
    // enough to merge everything still leaves one finite component.
    let report = decide_criterion(&model, &window, &rat(8, 1)).unwrap();
    assert!(matches!(
        report.verdict,
        crate::rips::Verdict::FailsPersistently { .. }
    ));
}

#[test]
fn shape_serde_round_trip() {
    let shape = DomainShape::Union {
        parts: vec![
            DomainShape::Disk { center: vec![rat(1, 2), rat(0, 1)], radius: rat(5, 2) },
            DomainShape::Annulus {
                center: vec![rat(0, 1), rat(0, 1)],
                inner: rat(1, 1),
                outer: rat(2, 1),
            },
        ],
    };
    let json = serde_json::to_string(&shape).unwrap();
    let back: DomainShape = serde_json::from_str(&json).unwrap();
    assert_eq!(
        serde_json::to_value(&back).unwrap(),
        serde_json::to_value(&shape).unwrap()
    );
}
