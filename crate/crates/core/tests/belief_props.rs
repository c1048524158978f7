mod common;

use coevidence::belief::{
    conflict_k, dempster_combine, pignistic, Frame, MassFunction, SimpleSupportMass, Subset,
};
use coevidence::Error;
use common::*;
use proptest::prelude::*;

fn same(a: &MassFunction, b: &MassFunction, tol: f64) -> bool {
    let (da, db) = (dense(a), dense(b));
    da.len() == db.len() && da.iter().zip(&db).all(|(x, y)| close(*x, *y, tol))
}

#[test]
fn two_source_example_against_pair_enumeration() {
    let m1 = mass_from_weights(2, &[(0b01, 0.6), (0b11, 0.4)]);
    let m2 = mass_from_weights(2, &[(0b10, 0.5), (0b11, 0.5)]);
    let fused = dempster_combine(&[m1.clone(), m2.clone()]).unwrap();
    let (oracle, k) = dempster_oracle(&m1, &m2).unwrap();
    assert!(close(k, 0.3, 1e-12));
    assert!(close(conflict_k(&m1, &m2).unwrap(), k, 1e-12));
    let got = dense(&fused);
    for (g, o) in got.iter().zip(&oracle) {
        assert!(close(*g, *o, 1e-12));
    }
    assert!(close(got[1], 3.0 / 7.0, 1e-12));
    assert!(close(got[2], 2.0 / 7.0, 1e-12));
    assert!(close(got[3], 2.0 / 7.0, 1e-12));
}

#[test]
fn total_conflict_is_reported() {
    let a = mass_from_weights(2, &[(0b01, 1.0)]);
    let b = mass_from_weights(2, &[(0b10, 1.0)]);
    assert_eq!(dempster_combine(&[a, b]), Err(Error::TotalConflict));
}

#[test]
fn evidence_round_trip_example() {
    let m = SimpleSupportMass::from_evidence(&[3.0, 1.0]).unwrap();
    assert!(close(m.singletons()[0], 0.5, 1e-15));
    assert!(close(m.singletons()[1], 1.0 / 6.0, 1e-15));
    assert!(close(m.fullset(), 1.0 / 3.0, 1e-15));
    let back = m.to_dirichlet().unwrap();
    assert!(close(back.evidence()[0], 3.0, 1e-12));
    assert!(close(back.evidence()[1], 1.0, 1e-12));
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn combination_matches_pair_enumeration(ms in mass_tuple_strategy(2)) {
        let oracle = dempster_oracle(&ms[0], &ms[1]);
        match (dempster_combine(&ms), oracle) {
            (Ok(f), Some((o, k))) => {
                for (x, y) in dense(&f).iter().zip(&o) {
                    prop_assert!(close(*x, *y, 1e-12));
                }
                prop_assert!(close(conflict_k(&ms[0], &ms[1]).unwrap(), k, 1e-12));
            }
            (Err(Error::TotalConflict), None) => {}
            (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
        }
    }

    #[test]
    fn combination_is_commutative(ms in mass_tuple_strategy(2)) {
        let ab = dempster_combine(&[ms[0].clone(), ms[1].clone()]);
        let ba = dempster_combine(&[ms[1].clone(), ms[0].clone()]);
        match (ab, ba) {
            (Ok(x), Ok(y)) => prop_assert!(same(&x, &y, 1e-9)),
            (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn combination_is_associative(ms in mass_tuple_strategy(3)) {
        let left = dempster_combine(&ms[..2])
            .and_then(|ab| dempster_combine(&[ab, ms[2].clone()]));
        let right = dempster_combine(&ms[1..])
            .and_then(|bc| dempster_combine(&[ms[0].clone(), bc]));
        if let (Ok(l), Ok(r)) = (left, right) {
            prop_assert!(same(&l, &r, 1e-9));
        }
    }

    #[test]
    fn vacuous_mass_is_the_identity(m in mass_strategy()) {
        let v = MassFunction::vacuous(m.frame());
        let f = dempster_combine(&[m.clone(), v]).unwrap();
        prop_assert!(same(&f, &m, 1e-12));
    }

    #[test]
    fn conflict_lies_in_unit_interval(ms in mass_tuple_strategy(2)) {
        let k = conflict_k(&ms[0], &ms[1]).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&k));
    }

    #[test]
    fn pignistic_is_a_probability_vector(m in mass_strategy()) {
        let p = pignistic(&m).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!(close(p.iter().sum::<f64>(), 1.0, 1e-9));
        for (x, y) in p.iter().zip(pignistic_oracle(&m)) {
            prop_assert!(close(*x, y, 1e-12));
        }
    }

    #[test]
    fn evidence_and_dirichlet_are_inverse(
        v in prop::collection::vec(0.0f64..50.0, 2..=4),
        m in simple_strategy(2..=4),
    ) {
        let there = SimpleSupportMass::from_evidence(&v).unwrap();
        let back = there.to_dirichlet().unwrap();
        for (a, b) in v.iter().zip(back.evidence()) {
            prop_assert!(close(*a, *b, 1e-9 * a.max(1.0)));
        }
        let ev = m.to_dirichlet().unwrap();
        let again = SimpleSupportMass::from_evidence(ev.evidence()).unwrap();
        for (a, b) in m.as_vec().iter().zip(again.as_vec()) {
            prop_assert!(close(*a, b, 1e-9));
        }
    }

    #[test]
    fn json_round_trip(m in mass_strategy()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: MassFunction = serde_json::from_str(&text).unwrap();
        prop_assert!(same(&m, &back, 1e-15));
    }
}

#[test]
fn subsets_outside_the_frame_are_rejected() {
    let r = MassFunction::new(Frame::new(2).unwrap(), [(Subset(0b100), 1.0)]);
    assert!(matches!(r, Err(Error::SubsetOutOfFrame { .. })));
}
