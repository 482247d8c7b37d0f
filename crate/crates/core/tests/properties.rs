//! Property tests for the algebraic invariants: oracle agreement for the
//! order decision, restriction laws, evaluation sandwiches, interpolator
//! independence on interpolation-free terms, and the subgroup-closure
//! behavior of smoothening interpolators.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dimkit_core::egroup::{e_leq, e_leq_bruteforce, map_gens, restrict, EElement};
use dimkit_core::freeset::{find_free_subset, SearchMode, SetMapping, SubsetOutcome};
use dimkit_core::interp::{
    sigma_family, vec_leq, IntegerSubgroup, Interpolator, Model, Quad, SmoothInterpolator,
};
use dimkit_core::iterm::{evaluate, evaluate_e, evaluate_with, term_bounds, ITerm};

const LABELS: [&str; 4] = ["eta", "u", "v", "xi"];

fn e_element() -> impl Strategy<Value = EElement> {
    (
        -5i64..=5,
        prop::collection::btree_map(prop::sample::select(&LABELS[..]), -5i64..=5, 0..4),
    )
        .prop_map(|(m, coeffs)| {
            let mut u = EElement::zero();
            u.m = m;
            for (l, c) in coeffs {
                if c != 0 {
                    u.coeffs.insert(l.to_string(), c);
                }
            }
            u
        })
}

fn label_set() -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set(prop::sample::select(&LABELS[..]), 0..=4)
        .prop_map(|s| s.into_iter().map(str::to_string).collect())
}

proptest! {
    #[test]
    fn order_decision_matches_subset_oracle(u in e_element(), v in e_element()) {
        prop_assert_eq!(e_leq(&u, &v), e_leq_bruteforce(&u, &v));
    }

    #[test]
    fn order_is_translation_invariant(u in e_element(), v in e_element(), w in e_element()) {
        prop_assert_eq!(e_leq(&u, &v), e_leq(&u.add(&w), &v.add(&w)));
    }

    #[test]
    fn order_is_unperforated(u in e_element(), m in 1i64..=4) {
        prop_assert_eq!(
            e_leq(&EElement::zero(), &u.scaled(m)),
            e_leq(&EElement::zero(), &u)
        );
    }

    #[test]
    fn order_is_antisymmetric_and_reflexive(u in e_element(), v in e_element()) {
        prop_assert!(e_leq(&u, &u));
        if e_leq(&u, &v) && e_leq(&v, &u) {
            prop_assert_eq!(u, v);
        }
    }

    #[test]
    fn restriction_laws(u in e_element(), y in label_set(), z in label_set()) {
        let ry = restrict(&u, &y);
        prop_assert_eq!(restrict(&ry, &y), ry.clone());
        let inter: Vec<String> = y.iter().filter(|l| z.contains(*l)).cloned().collect();
        prop_assert_eq!(restrict(&ry, &z), restrict(&u, &inter));
    }

    #[test]
    fn relabeling_identity_law(u in e_element()) {
        prop_assert_eq!(map_gens(&u, |l| l.to_string()), u);
    }
}

fn iterm() -> impl Strategy<Value = ITerm> {
    let leaf = prop_oneof![
        Just(ITerm::Zero),
        Just(ITerm::Unit),
        prop::sample::select(&LABELS[..]).prop_map(ITerm::gen),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ITerm::sum(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ITerm::diff(a, b)),
            (inner.clone(), inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(a, b, c, d)| ITerm::bowtie(a, b, c, d)),
        ]
    })
}

fn model() -> impl Strategy<Value = Model> {
    (1usize..=2)
        .prop_flat_map(|rank| {
            (
                prop::collection::vec(0i64..=2, rank),
                prop::collection::vec(0i64..=2, rank * LABELS.len()),
            )
        })
        .prop_map(|(unit, raw)| {
            let rank = unit.len();
            let mut m = Model::new(unit.clone(), Interpolator::base(rank));
            for (i, l) in LABELS.iter().enumerate() {
                let v: Vec<i64> = raw[i * rank..(i + 1) * rank]
                    .iter()
                    .zip(&unit)
                    .map(|(x, u)| x.min(u).max(&0))
                    .copied()
                    .collect();
                m = m.assign(l, v);
            }
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn term_bounds_sandwich_evaluation((t, m) in (iterm(), model())) {
        let (lo, hi) = term_bounds(&t);
        let value = evaluate(&t, &m).unwrap();
        let lo_v = evaluate_e(&lo, &m.unit, &m.assignment);
        let hi_v = evaluate_e(&hi, &m.unit, &m.assignment);
        prop_assert!(vec_leq(&lo_v, &value), "lo {lo_v:?} value {value:?}");
        prop_assert!(vec_leq(&value, &hi_v), "value {value:?} hi {hi_v:?}");
    }

    #[test]
    fn flat_terms_ignore_the_interpolator((t, m) in (iterm(), model())) {
        // Terms without interpolation nodes evaluate the same under any
        // interpolator choice.
        fn has_bowtie(t: &ITerm) -> bool {
            match t {
                ITerm::Bowtie(_) => true,
                ITerm::Sum(a, b) | ITerm::Diff(a, b) => has_bowtie(a) || has_bowtie(b),
                _ => false,
            }
        }
        prop_assume!(!has_bowtie(&t));
        let twisted = Interpolator::base(m.rank).with_override(
            Quad::new(vec![0; m.rank], vec![0; m.rank], m.unit.clone(), m.unit.clone()),
            m.unit.clone(),
        );
        let a = evaluate(&t, &m).unwrap();
        let b = evaluate_with(&t, &m.unit, &m.assignment, &twisted).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn restriction_commutes_with_evaluation((t, m) in (iterm(), model())) {
        // Restricting to the full support changes nothing.
        let supp = t.syntactic_support();
        let r = t.restrict(&supp);
        prop_assert_eq!(evaluate(&r, &m).unwrap(), evaluate(&t, &m).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shrinking_images_preserves_found(
        seed_phi in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..3), 6),
        k in 1usize..=3,
    ) {
        let ground: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let phi: BTreeMap<String, BTreeSet<String>> = seed_phi
            .iter()
            .enumerate()
            .map(|(i, img)| {
                (
                    i.to_string(),
                    img.iter().map(|j| j.to_string()).collect::<BTreeSet<_>>(),
                )
            })
            .collect();
        let m = SetMapping { ground: ground.clone(), phi: phi.clone() };
        // Shrink every image by dropping its first element.
        let shrunk: BTreeMap<String, BTreeSet<String>> = phi
            .iter()
            .map(|(key, img)| {
                let mut smaller = img.clone();
                let first = smaller.iter().next().cloned();
                if let Some(f) = first {
                    smaller.remove(&f);
                }
                (key.clone(), smaller)
            })
            .collect();
        let m2 = SetMapping { ground, phi: shrunk };
        if matches!(find_free_subset(&m, k, SearchMode::Exact), SubsetOutcome::Found(_)) {
            prop_assert!(matches!(
                find_free_subset(&m2, k, SearchMode::Exact),
                SubsetOutcome::Found(_)
            ));
        }
    }
}

/// Terms supported by a set of at most two generators evaluate, under the
/// rank-four separating model with a smoothening interpolator, into the
/// image subgroup attached to that support set.
#[test]
fn smoothening_keeps_supported_terms_in_subgroups() {
    let family = sigma_family();
    let smooth = SmoothInterpolator::new(4, family.clone()).unwrap();
    let unit = vec![1i64, 1, 1, 1];
    let mut assignment: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    assignment.insert("xi".into(), vec![1, 1, 0, 0]);
    assignment.insert("eta".into(), vec![1, 0, 1, 0]);
    assignment.insert("zeta".into(), vec![0, 0, 0, 0]);

    let subgroup_for = |labels: &[&str]| -> &IntegerSubgroup {
        match labels {
            [] => &family[0],
            ["xi"] => &family[1],
            ["eta"] => &family[2],
            _ => &family[3],
        }
    };

    let cases: Vec<(Vec<&str>, Vec<ITerm>)> = vec![
        (
            vec![],
            vec![
                ITerm::Unit,
                ITerm::diff(ITerm::Unit, ITerm::Unit),
                ITerm::bowtie(ITerm::Zero, ITerm::Zero, ITerm::Unit, ITerm::Unit),
                ITerm::sum(ITerm::Unit, ITerm::Unit),
            ],
        ),
        (
            vec!["xi"],
            vec![
                ITerm::gen("xi"),
                ITerm::cogen("xi"),
                ITerm::bowtie(
                    ITerm::Zero,
                    ITerm::Zero,
                    ITerm::gen("xi"),
                    ITerm::cogen("xi"),
                ),
                ITerm::bowtie(
                    ITerm::Zero,
                    ITerm::diff(ITerm::gen("xi"), ITerm::Unit),
                    ITerm::gen("xi"),
                    ITerm::Unit,
                ),
                ITerm::sum(ITerm::gen("xi"), ITerm::diff(ITerm::Unit, ITerm::gen("xi"))),
            ],
        ),
        (
            vec!["xi", "eta"],
            vec![
                ITerm::c_pair("xi", "eta"),
                ITerm::sum(ITerm::gen("xi"), ITerm::gen("eta")),
            ],
        ),
    ];
    for (labels, terms) in cases {
        let sub = subgroup_for(&labels);
        for t in terms {
            let value = evaluate_with(&t, &unit, &assignment, &smooth).unwrap();
            assert!(
                sub.contains(&value),
                "term {t} with support {labels:?} evaluated to {value:?} outside its subgroup"
            );
        }
    }
    // The materialized choices satisfy the interpolator rules.
    let entries = smooth.materialized();
    assert!(dimkit_core::interp::validate_interpolator(&smooth, &entries, &[]).is_empty());
}
