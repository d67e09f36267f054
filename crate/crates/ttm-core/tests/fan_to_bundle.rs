//! End-to-end pass through the public API: parse a fan, validate it, build
//! duals and transitions, attach rank-1 structures, and check a filtration
//! datum whose certificate characters reproduce the transition characters.

use std::collections::BTreeMap;

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ttm_core::equivariance::line_bundle::{cocycle_residual, line_bundle};
use ttm_core::fan::ValidateOptions;
use ttm_core::io::FanFile;
use ttm_core::klyachko::{check_cone, ConeOutcome, Filtration, KlyachkoData, Subspace};
use ttm_core::manifold::{orbit_poset, transition};
use ttm_core::rring::{bracket, ge_s, RScalar};

const TWISTED_PLANE: &str = r#"{
  "n": 2,
  "rays": [
    [{"b": "1", "c": "1/2", "v": 1}, {"b": "0", "c": "1/3", "v": 0}],
    [{"b": "0", "c": "0", "v": 0}, {"b": "1", "c": "-1/2", "v": 1}],
    [{"b": "-1", "c": "0", "v": -1}, {"b": "-1", "c": "1/5", "v": -1}]
  ],
  "cones": [[1, 2], [1, 3], [2, 3]]
}"#;

#[test]
fn twisted_plane_full_pass() {
    let fan = serde_json::from_str::<FanFile>(TWISTED_PLANE)
        .unwrap()
        .into_fan()
        .unwrap();
    let report = fan.validate(&ValidateOptions::default());
    assert!(report.accepted(true), "{}", report.render_text());

    let poset = orbit_poset(&fan);
    assert_eq!(poset.nodes.len(), 7);

    // Transitions compose exactly at the exponent level.
    let tops = fan.maximal_cones();
    for a in &tops {
        for b in &tops {
            for c in &tops {
                let ab = transition(&fan, a, b).unwrap();
                let bc = transition(&fan, b, c).unwrap();
                let ac = transition(&fan, a, c).unwrap();
                for (r, _) in c.iter().enumerate() {
                    for (s, _) in a.iter().enumerate() {
                        let composed = bc.exponents[r]
                            .iter()
                            .enumerate()
                            .fold(RScalar::zero(), |acc, (m, e)| acc + e * &ab.exponents[m][s]);
                        assert_eq!(composed, ac.exponents[r][s]);
                    }
                }
            }
        }
    }

    // A rank-1 structure over the same fan has a tight cocycle.
    let ray_data: BTreeMap<usize, RScalar> = [(1usize, RScalar::one())].into();
    let bundle = line_bundle(&fan, &ray_data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!(cocycle_residual(&fan, &bundle, &mut rng, 25).unwrap() < 1e-9);

    // Rank-1 filtration data over the twisted fan: certificates carry
    // characters pairing back to the jump values exactly.
    let filtrations = (1..=3)
        .map(|i| {
            (
                i,
                Filtration::new(vec![(
                    RScalar::from_ints(i as i64, 0, i as i64),
                    Subspace::<BigRational>::full(1),
                )]),
            )
        })
        .collect();
    let data = KlyachkoData::new(fan.clone(), 1, filtrations).unwrap();
    for cone in fan.maximal_cones() {
        let ConeOutcome::Compatible(cert) = check_cone(&data, &cone, ge_s).unwrap() else {
            panic!("rank-1 data must be compatible");
        };
        for piece in &cert.pieces {
            let chi = piece.character.as_ref().unwrap();
            for (&i, mu) in &piece.tuple {
                assert_eq!(&bracket(chi, fan.ray(i)), mu);
            }
        }
    }
}
