//! End-to-end use of the public API.

use num_traits::One;
use proptest::prelude::*;
use selfsim_core::covers::count_table;
use selfsim_core::mass::assign_mass;
use selfsim_core::rational::{pow2, q, qi};
use selfsim_core::scheme::{build_scheme, verify_scheme, TreeDump};
use selfsim_core::{
    Affine1D, ApproxSpec, CantorTree, Family, Ifs1D, IntervalQ, SchemeParams, SelfSimilarMeasure,
    TriBool,
};

fn cantor() -> Ifs1D {
    Ifs1D::new(vec![
        Affine1D::new(q(1, 3), qi(0)),
        Affine1D::new(q(1, 3), q(2, 3)),
    ])
    .unwrap()
}

#[test]
fn build_dump_load_verify() {
    let k = cantor();
    let tree = build_scheme(&k, &SchemeParams::new(q(5, 4), 2, 3, 1).unwrap()).unwrap();
    let json = serde_json::to_string(&tree.to_dump()).unwrap();
    let back = CantorTree::from_dump(&serde_json::from_str::<TreeDump>(&json).unwrap()).unwrap();
    assert_eq!(back, tree);

    let mu = SelfSimilarMeasure::new(k.clone()).unwrap();
    let radii: Vec<_> = (1..=12).map(|j| k.diam() * pow2(-j)).collect();
    let reg = mu.estimate_regularity(16, &radii, 8).unwrap();
    let report = verify_scheme(&back, &mu, &reg);
    assert!(report.pass, "{:?}", report.failing().collect::<Vec<_>>());

    let mt = assign_mass(back).unwrap();
    assert!(mt.level_totals.iter().all(|t| t.is_one()));
}

#[test]
fn counts_do_not_depend_on_pool_size() {
    let k = cantor();
    let spec = ApproxSpec::power_law(q(3, 2)).unwrap();
    let run = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| {
                count_table(&k, &spec, Family::A, 3..=9, &k.attractor_hull(), None).unwrap()
            })
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    // Every hit certificate is an exact witness: the attractor point it names lies in the target.
    #[test]
    fn hits_certify_and_misses_hold_no_endpoints(a in 0i64..2000, w in 1i64..200) {
        let k = cantor();
        let t = IntervalQ::closed(q(a, 1000), q(a + w, 1000));
        match k.intersects_attractor(&t, None) {
            TriBool::Yes(cert) => prop_assert!(cert.verify(&k, &t)),
            TriBool::No => {
                // No attractor point may sit in the target: check all level-6 cylinder endpoints.
                for code in 0..64i64 {
                    let left: i64 = (0..6).map(|d| ((code >> d) & 1) * 2 * 3i64.pow(5 - d as u32)).sum();
                    for e in [q(left, 729), q(left + 1, 729)] {
                        prop_assert!(!t.contains_point(&e), "{e} lies in the target");
                    }
                }
            }
            TriBool::Undecided { .. } => {}
        }
    }

    // Measure of [0, x] is monotone in x and lies in [0, 1].
    #[test]
    fn measure_is_monotone(x in 1i64..999, dx in 1i64..100) {
        let mu = SelfSimilarMeasure::new(cantor()).unwrap();
        let a = mu.measure_interval(&IntervalQ::closed(qi(0), q(x, 1000)), 14);
        let b = mu.measure_interval(&IntervalQ::closed(qi(0), q(x + dx, 1000)), 14);
        prop_assert!(0.0 <= a.lo && a.hi <= 1.0);
        prop_assert!(a.lo <= b.hi);
    }
}
