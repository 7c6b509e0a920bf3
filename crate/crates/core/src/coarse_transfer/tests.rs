use super::*;
use crate::space_models::GapRule;
use num_bigint::BigInt;
use proptest::prelude::*;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn lattice1d() -> PointModel {
    PointModel::lattice(1, rat(1, 1)).unwrap()
}

fn shifted_lattice(offset: BigRational) -> PointModel {
    PointModel::lattice_with_defects(1, rat(1, 1), vec![offset], vec![], vec![]).unwrap()
}

fn geometric_clusters(offset: BigRational) -> PointModel {
    PointModel::cluster_sequence(
        vec![vec![rat(0, 1), rat(1, 1)]],
        GapRule::Geometric { base: "2".into() },
        offset,
    )
    .unwrap()
}

fn box1d(lo: i64, hi: i64) -> Region {
    Region::Box { min: vec![rat(lo, 1)], max: vec![rat(hi, 1)] }
}

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn constants_between_shifted_and_sublattice_models() {
    let d1 = lattice1d();
    let region = box1d(0, 10);
    let pad = rat(2, 1);

    let shifted = shifted_lattice(rat(3, 10));
    let c = coarse_constant(&d1, &shifted, &region, &pad, None).unwrap();
    assert_eq!(c, Dist::from_value(&rat(3, 10)));

    let c = coarse_constant(&d1, &d1, &region, &pad, None).unwrap();
    assert_eq!(c, Dist::zero());

    let doubled = PointModel::lattice(1, rat(2, 1)).unwrap();
    let c = coarse_constant(&d1, &doubled, &region, &pad, None).unwrap();
    assert_eq!(c, Dist::from_value(&rat(1, 1)));

    // A declared global bound can only raise the measured value.
    let c = coarse_constant(&d1, &shifted, &region, &pad, Some(&rat(1, 2))).unwrap();
    assert_eq!(c, Dist::from_value(&rat(1, 2)));

    // A pad at or below the nearest-neighbour distance cannot certify.
    let err = coarse_constant(&d1, &shifted, &region, &rat(3, 10), None).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "got {err:?}");
}

#[test]
fn constant_requires_euclidean_models_and_a_box() {
    let d1 = lattice1d();
    let wedge = PointModel::wedge_of_rays(3).unwrap();
    let err =
        coarse_constant(&d1, &wedge, &box1d(0, 5), &rat(2, 1), None).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));

    let explicit = Region::Explicit { labels: labels(&["0", "1"]) };
    let err = coarse_constant(&d1, &d1, &explicit, &rat(2, 1), None).unwrap_err();
    assert!(matches!(err, Error::InvalidRegion(_)));
}

#[test]
fn cluster_certificates_transfer_across_a_shift() {
    let d1 = geometric_clusters(rat(0, 1));
    let d2 = geometric_clusters(rat(3, 10));

    // Measure the constant on a window that sees the first two clusters.
    let c = coarse_constant(&d1, &d2, &box1d(0, 10), &rat(2, 1), None).unwrap();
    assert_eq!(c, Dist::from_value(&rat(3, 10)));

    // The second cluster {5, 6} is isolated with margin 4; the transfer
    // scale is 1 + 2 * 3/10 = 8/5.
    let alpha = Dist::from_value(&rat(1, 1));
    let report =
        transfer_finite_component(&d1, &d2, &labels(&["c2.0", "c2.1"]), &alpha, &c)
            .unwrap();
    assert_eq!(report.source_scale, Dist::from_value(&rat(8, 5)));
    assert_eq!(report.source_margin, Extended::Finite(Dist::from_value(&rat(4, 1))));
    assert_eq!(report.z_labels, labels(&["c2.0", "c2.1"]));
    assert_eq!(report.z_separation, Extended::Finite(Dist::from_value(&rat(4, 1))));
    assert_eq!(report.components.len(), 1);
    assert_eq!(report.components[0].labels, labels(&["c2.0", "c2.1"]));
    assert_eq!(
        report.components[0].margin,
        Extended::Finite(Dist::from_value(&rat(4, 1)))
    );
    assert!(report.reverified);
}

#[test]
fn identity_transfer_uses_constant_zero() {
    let d = geometric_clusters(rat(0, 1));
    let alpha = Dist::from_value(&rat(1, 1));
    let report = transfer_finite_component(
        &d,
        &d,
        &labels(&["c2.0", "c2.1"]),
        &alpha,
        &Dist::zero(),
    )
    .unwrap();
    assert_eq!(report.constant, Dist::zero());
    assert_eq!(report.source_scale, alpha);
    assert_eq!(report.z_labels, labels(&["c2.0", "c2.1"]));
    assert_eq!(report.components.len(), 1);
    assert!(report.reverified);
}

#[test]
fn weak_or_disconnected_sources_are_refused() {
    // A lattice point has margin 1, below the transfer scale 1 + 2 * 3/10.
    let d1 = lattice1d();
    let d2 = shifted_lattice(rat(3, 10));
    let alpha = Dist::from_value(&rat(1, 1));
    let c = Dist::from_value(&rat(3, 10));
    let err =
        transfer_finite_component(&d1, &d2, &labels(&["0"]), &alpha, &c).unwrap_err();
    assert!(matches!(err, Error::TransferRefused(_)), "got {err:?}");

    // Two well-isolated points that do not touch at the transfer scale are
    // not one component, so they carry no single certificate.
    let cloud = PointModel::finite_cloud(vec![
        ("p0".into(), vec![rat(0, 1)]),
        ("p1".into(), vec![rat(3, 1)]),
    ])
    .unwrap();
    let err = transfer_finite_component(
        &cloud,
        &cloud,
        &labels(&["p0", "p1"]),
        &alpha,
        &Dist::zero(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::TransferRefused(_)), "got {err:?}");
}

#[test]
fn missing_covering_is_refused() {
    // The declared constant claims every point of d1 has a neighbour in d2
    // within 1; the lone far-away target exposes the claim.
    let d1 = PointModel::finite_cloud(vec![("p0".into(), vec![rat(0, 1)])]).unwrap();
    let d2 = PointModel::finite_cloud(vec![("q0".into(), vec![rat(100, 1)])]).unwrap();
    let alpha = Dist::from_value(&rat(1, 1));
    let c = Dist::from_value(&rat(1, 1));
    let err =
        transfer_finite_component(&d1, &d2, &labels(&["p0"]), &alpha, &c).unwrap_err();
    match err {
        Error::TransferRefused(msg) => assert!(msg.contains("covering"), "got {msg}"),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn report_serializes() {
    let d = geometric_clusters(rat(0, 1));
    let alpha = Dist::from_value(&rat(1, 1));
    let report = transfer_finite_component(
        &d,
        &d,
        &labels(&["c2.0", "c2.1"]),
        &alpha,
        &Dist::zero(),
    )
    .unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["reverified"], serde_json::Value::Bool(true));
    assert!(json["components"].as_array().unwrap().len() == 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Shifting a lattice by |delta| < 1/2 makes the two models mutual
    /// delta-nets: the measured constant is exactly |delta|.
    #[test]
    fn lattice_shift_constant_is_the_shift(n in -9i64..=9) {
        let delta = rat(n, 20);
        let d1 = lattice1d();
        let d2 = shifted_lattice(delta.clone());
        let c = coarse_constant(&d1, &d2, &box1d(0, 10), &rat(2, 1), None).unwrap();
        let expect = if n < 0 { rat(-n, 20) } else { rat(n, 20) };
        prop_assert_eq!(c, Dist::from_value(&expect));
    }
}
