use super::*;
use crate::dist::Extended;
use crate::space_models::GapRule;
use proptest::prelude::*;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn lattice1d() -> PointModel {
    PointModel::lattice(1, rat(1, 1)).unwrap()
}

fn lattice2d() -> PointModel {
    PointModel::lattice(2, rat(1, 1)).unwrap()
}

fn box1d(lo: i64, hi: i64) -> Region {
    Region::Box { min: vec![rat(lo, 1)], max: vec![rat(hi, 1)] }
}

fn box2d(lo: i64, hi: i64) -> Region {
    Region::Box { min: vec![rat(lo, 1); 2], max: vec![rat(hi, 1); 2] }
}

/// Gapped line with a block of four sites removed and two off-grid
/// replacements in the middle of the hole.
fn broken_line() -> PointModel {
    PointModel::lattice_with_defects(
        1,
        rat(1, 1),
        vec![rat(0, 1)],
        vec![vec![99], vec![100], vec![101], vec![102]],
        vec![vec![rat(502, 5)], vec![rat(503, 5)]],
    )
    .unwrap()
}

#[test]
fn tree_to_rays_on_a_path() {
    let tree = FiniteTree { n: 3, edges: vec![(0, 1), (1, 2)], root: 0 };
    let rays = tree_to_rays(&tree, &[false, false, true]).unwrap();
    assert_eq!(rays.len(), 1);
    assert_eq!(
        rays[0].visits,
        vec![RayVisit::Original(0), RayVisit::Original(1), RayVisit::Original(2)]
    );

    let err = tree_to_rays(&tree, &[false, false, false]).unwrap_err();
    assert!(matches!(err, Error::SynthesisRefused(_)));
}

#[test]
fn tree_to_rays_splices_finite_branches() {
    // Star with centre 0: leaves 1 and 3 are marked, leaf 2 is not. The
    // walk detours through 2, returns to a clone of 0, and continues to 1;
    // leaf 3 starts its own ray.
    let tree = FiniteTree { n: 4, edges: vec![(0, 1), (0, 2), (0, 3)], root: 0 };
    let rays = tree_to_rays(&tree, &[false, true, false, true]).unwrap();
    assert_eq!(rays.len(), 2);
    assert_eq!(
        rays[0].visits,
        vec![
            RayVisit::Original(0),
            RayVisit::Original(2),
            RayVisit::Clone(0),
            RayVisit::Original(1),
        ]
    );
    assert_eq!(rays[1].visits, vec![RayVisit::Original(3)]);
}

#[test]
fn tree_to_rays_validates_its_input() {
    let cyclic = FiniteTree { n: 4, edges: vec![(0, 1), (1, 2), (2, 0)], root: 0 };
    assert!(tree_to_rays(&cyclic, &[true; 4]).is_err());

    let short = FiniteTree { n: 3, edges: vec![(0, 1)], root: 0 };
    assert!(tree_to_rays(&short, &[true; 3]).is_err());

    let loose = FiniteTree { n: 2, edges: vec![(0, 5)], root: 0 };
    assert!(tree_to_rays(&loose, &[true; 2]).is_err());
}

#[test]
fn wedge_rays_follow_the_model_rays() {
    let model = PointModel::wedge_of_rays(3).unwrap();
    let region = Region::Ball { center: "r0:0".into(), radius: rat(4, 1) };
    let window = model.enumerate_window(&region).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    assert_eq!(s.rays.len(), 3);
    assert_eq!(s.lipschitz_c, Dist::from_u64(1));
    assert_eq!(s.multiplicity_bound, 1);
    assert!(s.covers_model);
    for ray in &s.rays {
        assert!(ray.points.len() >= 10);
        assert!(ray.points.iter().all(|p| !p.contains('~')));
        // All points on one model ray, with k ascending from 0.
        let sites: Vec<Site> =
            ray.points.iter().map(|p| model.resolve(p).unwrap()).collect();
        let Site::Wedge { ray: r0, k: k0 } = sites[0] else { panic!("wedge site") };
        assert_eq!(k0, 0);
        for (j, site) in sites.iter().enumerate() {
            assert_eq!(*site, Site::Wedge { ray: r0, k: j as u64 });
        }
        let cont = ray.continuation.as_ref().unwrap();
        assert_eq!(cont.rule, ContinuationRule::WedgeTail);
        assert_eq!(&cont.anchor, ray.points.last().unwrap());
    }
    let report = validate_ray_structure(&model, &s).unwrap();
    assert!(report.ok, "unexpected failures: {:?}", report.failures);
}

#[test]
fn line_rays_cover_the_integers() {
    let model = lattice1d();
    let window = model.enumerate_window(&box1d(-5, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    assert_eq!(s.rays.len(), 2);
    assert_eq!(s.lipschitz_c, Dist::from_u64(1));
    assert_eq!(s.multiplicity_bound, 1);
    assert!(s.covers_model);
    assert_eq!(s.rays[0].points.first().unwrap(), "0");
    assert_eq!(s.rays[0].points.last().unwrap(), "-19");
    assert_eq!(s.rays[1].points.last().unwrap(), "20");
    let c0 = s.rays[0].continuation.as_ref().unwrap();
    assert_eq!(c0.rule, ContinuationRule::AxisTail { axis: 0, sign: -1 });
    let c1 = s.rays[1].continuation.as_ref().unwrap();
    assert_eq!(c1.rule, ContinuationRule::AxisTail { axis: 0, sign: 1 });

    let report = validate_ray_structure(&model, &s).unwrap();
    assert!(report.ok, "unexpected failures: {:?}", report.failures);
}

#[test]
fn plane_rays_validate_but_do_not_claim_coverage() {
    let model = lattice2d();
    let window = model.enumerate_window(&box2d(0, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    assert!(!s.covers_model);
    assert!(s.rays.len() > 1);
    let report = validate_ray_structure(&model, &s).unwrap();
    assert!(report.ok, "unexpected failures: {:?}", report.failures);
    assert!(!report.checks.is_empty());
}

#[test]
fn validator_rejects_corrupted_structures() {
    let model = lattice2d();
    let window = model.enumerate_window(&box2d(0, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    // Understated step bound.
    let mut bad = s.clone();
    bad.lipschitz_c = Dist::from_value(&rat(1, 2));
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);
    assert!(report.failures.iter().any(|f| f.contains("above the bound")));

    // A point listed as an original in two rays.
    let mut bad = s.clone();
    bad.rays[0].points[1] = s.rays[1].points[0].clone();
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);
    assert!(report
        .failures
        .iter()
        .any(|f| f.contains("more than once") || f.contains("not covered")));

    // A dropped point breaks the partition or the step bound.
    let mut bad = s.clone();
    bad.rays[0].points.remove(1);
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);

    // Understated multiplicity.
    let mut bad = s.clone();
    bad.multiplicity_bound = 0;
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);
    assert!(report.failures.iter().any(|f| f.contains("declared bound")));

    // Unsupportable coverage claim: the plane has no linear tail cover.
    let mut bad = s.clone();
    bad.covers_model = true;
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);
    assert!(report.failures.iter().any(|f| f.contains("cannot be certified")));
}

#[test]
fn validator_rejects_colliding_tails() {
    let model = lattice1d();
    let window = model.enumerate_window(&box1d(-5, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    // Point the second ray's tail backwards: it now runs through listed
    // points and overlaps the first ray's tail.
    let mut bad = s.clone();
    let cont = bad.rays[1].continuation.as_mut().unwrap();
    cont.rule = ContinuationRule::AxisTail { axis: 0, sign: -1 };
    let report = validate_ray_structure(&model, &bad).unwrap();
    assert!(!report.ok);
    assert!(report.failures.iter().any(|f| f.contains("passes through")));
    assert!(report.failures.iter().any(|f| f.contains("overlap")));
}

#[test]
fn cluster_chain_becomes_a_single_ray() {
    let model = PointModel::cluster_sequence(
        vec![vec![rat(0, 1)]],
        GapRule::Constant { value: "2".into() },
        rat(0, 1),
    )
    .unwrap();
    let window = model.enumerate_window(&box1d(0, 10)).unwrap();
    assert_eq!(window.len(), 6);
    let alpha = Dist::from_u64(2);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    assert_eq!(s.rays.len(), 1);
    assert_eq!(s.lipschitz_c, Dist::from_u64(2));
    assert!(s.covers_model);
    assert_eq!(s.rays[0].points.first().unwrap(), "c1.0");
    let cont = s.rays[0].continuation.as_ref().unwrap();
    assert_eq!(cont.rule, ContinuationRule::ClusterTail);
    let report = validate_ray_structure(&model, &s).unwrap();
    assert!(report.ok, "unexpected failures: {:?}", report.failures);
}

#[test]
fn synthesis_refuses_finite_or_undecided_components() {
    let model = PointModel::cluster_sequence(
        vec![vec![rat(0, 1)]],
        GapRule::Geometric { base: "2".into() },
        rat(0, 1),
    )
    .unwrap();
    let window = model.enumerate_window(&box1d(0, 13)).unwrap();
    let alpha = Dist::from_u64(4);
    let err = synthesize_ray_structure(&model, &window, &alpha).unwrap_err();
    assert!(matches!(err, Error::SynthesisRefused(_)));

    let err = synthesize_for_components(&model, &window, &alpha, &[0]).unwrap_err();
    assert!(matches!(err, Error::SynthesisRefused(_)));

    let err = synthesize_for_components(&model, &window, &alpha, &[99]).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn finite_pieces_attach_to_the_nearest_ray() {
    let model = broken_line();
    let window = model.enumerate_window(&box1d(95, 107)).unwrap();
    let alpha = Dist::from_u64(1);

    // The window splits into two half-lines and the replacement pair, whose
    // distance to everything else is exactly 12/5.
    let comps = classify_components(&model, &window, &alpha).unwrap();
    assert_eq!(comps.len(), 3);
    match &comps[2].status {
        ComponentStatus::CertifiedFinite { margin } => {
            assert_eq!(*margin, Extended::Finite(Dist::from_value(&rat(12, 5))));
        }
        other => panic!("expected a finite pair, got {other:?}"),
    }
    let err = synthesize_ray_structure(&model, &window, &alpha).unwrap_err();
    assert!(matches!(err, Error::SynthesisRefused(_)));

    let s = synthesize_for_components(&model, &window, &alpha, &[0, 1]).unwrap();
    assert_eq!(s.rays.len(), 2);
    assert!(!s.covers_model, "the replacement pair is not yet listed");

    let tree = LabeledTree { labels: vec!["a0".into(), "a1".into()], edges: vec![(0, 1)] };
    let merged = attach_finite(&model, &s, &tree).unwrap();
    assert_eq!(merged.lipschitz_c, Dist::from_value(&rat(12, 5)));
    assert!(merged.covers_model);
    assert_eq!(
        &merged.rays[0].points[3..8],
        &["98", "a0", "a1", "a0~1", "98~1"]
    );
    let report = validate_ray_structure(&model, &merged).unwrap();
    assert!(report.ok, "unexpected failures: {:?}", report.failures);
}

#[test]
fn attach_rejects_listed_points_and_tail_points() {
    let model = lattice1d();
    let window = model.enumerate_window(&box1d(-5, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    let listed = LabeledTree { labels: vec!["3".into()], edges: vec![] };
    assert!(matches!(
        attach_finite(&model, &s, &listed).unwrap_err(),
        Error::SynthesisRefused(_)
    ));

    let on_tail = LabeledTree { labels: vec!["25".into()], edges: vec![] };
    assert!(matches!(
        attach_finite(&model, &s, &on_tail).unwrap_err(),
        Error::SynthesisRefused(_)
    ));

    let empty = LabeledTree { labels: vec![], edges: vec![] };
    let same = attach_finite(&model, &s, &empty).unwrap();
    assert_eq!(same.rays.len(), s.rays.len());
}

#[test]
fn structure_serde_round_trip() {
    let model = lattice1d();
    let window = model.enumerate_window(&box1d(-5, 5)).unwrap();
    let alpha = Dist::from_u64(1);
    let s = synthesize_ray_structure(&model, &window, &alpha).unwrap();

    let json = serde_json::to_string(&s).unwrap();
    let back: RayStructure = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&s).unwrap());
    let report = validate_ray_structure(&model, &back).unwrap();
    assert!(report.ok);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn peeled_walks_partition_random_trees(n in 1usize..24, seed in any::<u64>()) {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push(((next() as usize) % v, v));
        }
        let mut marked = vec![false; n];
        for m in marked.iter_mut() {
            *m = next() % 3 == 0;
        }
        marked[n - 1] = true;
        let mut degree = vec![0usize; n];
        let mut edge_set = BTreeSet::new();
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
            edge_set.insert((u.min(v), u.max(v)));
        }

        let tree = FiniteTree { n, edges, root: 0 };
        let rays = tree_to_rays(&tree, &marked).unwrap();

        let mut original_count = vec![0usize; n];
        let mut visit_count = vec![0usize; n];
        for ray in &rays {
            prop_assert!(!ray.visits.is_empty());
            for pair in ray.visits.windows(2) {
                let a = pair[0].vertex();
                let b = pair[1].vertex();
                prop_assert!(a != b);
                prop_assert!(edge_set.contains(&(a.min(b), a.max(b))));
            }
            for v in &ray.visits {
                visit_count[v.vertex()] += 1;
                if let RayVisit::Original(i) = v {
                    original_count[*i] += 1;
                }
            }
            prop_assert!(marked[ray.visits.last().unwrap().vertex()]);
        }
        for v in 0..n {
            prop_assert_eq!(original_count[v], 1);
            prop_assert!(visit_count[v] <= degree[v] + 1);
        }
    }
}
