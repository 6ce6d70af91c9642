use proptest::prelude::*;
use seccache::milp::{max_cut, solve_master, Cut, MasterProblem};

fn enumerate(mp: &MasterProblem, cuts: &[Cut]) -> Option<f64> {
    let nf = mp.free.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << nf) {
        let mut q = vec![false; mp.n_bits];
        for (k, &i) in mp.free.iter().enumerate() {
            q[i] = mask >> k & 1 == 1;
        }
        if mp.is_feasible(&q) {
            let v = max_cut(cuts, &q);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn open(n: usize) -> MasterProblem {
    MasterProblem { n_bits: n, free: (0..n).collect(), knapsacks: vec![] }
}

#[test]
fn cut_evaluation() {
    let c = Cut { anchor: vec![true, false], value: 3.0, coef: vec![2.0, -1.0], iteration: 0 };
    assert_eq!(c.eval(&[true, false]), 3.0);
    assert_eq!(c.eval(&[false, true]), 0.0);
    assert_eq!(c.eval_real(&[0.5, 0.5]), 3.0 - 1.0 - 0.5);
    assert_eq!(Cut::constant(4.0, 3).eval(&[true, true, false]), 4.0);
}

#[test]
fn constant_cut_takes_smallest_placement() {
    let mp = open(4);
    let ms = solve_master(&mp, &[Cut::constant(2.5, 4)], &[], 1e-9).unwrap().unwrap();
    assert_eq!(ms.alpha, 2.5);
    assert_eq!(ms.q, vec![false; 4]);
}

#[test]
fn max_of_two_cuts_on_two_bits() {
    let mp = open(2);
    let a = Cut { anchor: vec![false, false], value: 1.0, coef: vec![-2.0, 1.0], iteration: 0 };
    let b = Cut { anchor: vec![true, true], value: 0.5, coef: vec![1.0, -3.0], iteration: 1 };
    let cuts = [a, b];
    let ms = solve_master(&mp, &cuts, &[], 1e-9).unwrap().unwrap();
    let best = enumerate(&mp, &cuts).unwrap();
    assert!((ms.alpha - best).abs() < 1e-9, "{} vs {best}", ms.alpha);
    assert!((max_cut(&cuts, &ms.q) - best).abs() < 1e-9);
}

#[test]
fn capacity_below_every_item_forces_zero() {
    let mp = MasterProblem { n_bits: 3, free: vec![0, 1, 2], knapsacks: vec![(vec![(0, 2.0), (1, 3.0), (2, 5.0)], 1.0)] };
    // Every bit would lower the cut if allowed.
    let cut = Cut { anchor: vec![false; 3], value: 10.0, coef: vec![-1.0, -2.0, -3.0], iteration: 0 };
    let ms = solve_master(&mp, &[cut], &[], 1e-9).unwrap().unwrap();
    assert_eq!(ms.q, vec![false; 3]);
    assert_eq!(ms.alpha, 10.0);
}

#[test]
fn fixed_bits_stay_zero() {
    let mp = MasterProblem { n_bits: 3, free: vec![1], knapsacks: vec![] };
    let cut = Cut { anchor: vec![false; 3], value: 0.0, coef: vec![-5.0, -1.0, -5.0], iteration: 0 };
    let ms = solve_master(&mp, &[cut], &[], 1e-9).unwrap().unwrap();
    assert_eq!(ms.q, vec![false, true, false]);
    assert!(!mp.is_feasible(&[true, false, false]));
}

#[test]
fn needs_a_cut() {
    assert!(solve_master(&open(2), &[], &[], 1e-9).is_err());
}

fn instance() -> impl Strategy<Value = (MasterProblem, Vec<Cut>)> {
    (2usize..7, 1usize..5).prop_flat_map(|(n, k)| {
        let cut = (
            proptest::collection::vec(any::<bool>(), n),
            -10.0f64..10.0,
            proptest::collection::vec(-5.0f64..5.0, n),
        )
            .prop_map(|(anchor, value, coef)| Cut { anchor, value, coef, iteration: 0 });
        let knap = (proptest::collection::vec(0.5f64..3.0, n), 0.0f64..8.0);
        (Just(n), proptest::collection::vec(cut, k), proptest::collection::vec(knap, 0..3))
            .prop_map(|(n, cuts, knaps)| {
                let knapsacks = knaps.into_iter().map(|(w, cap)| (w.into_iter().enumerate().collect(), cap)).collect();
                (MasterProblem { n_bits: n, free: (0..n).collect(), knapsacks }, cuts)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn master_matches_enumeration((mp, cuts) in instance()) {
        let best = enumerate(&mp, &cuts).unwrap();
        let ms = solve_master(&mp, &cuts, &[], 1e-9).unwrap().unwrap();
        prop_assert!(mp.is_feasible(&ms.q));
        prop_assert!((ms.alpha - max_cut(&cuts, &ms.q)).abs() < 1e-9);
        prop_assert!((ms.alpha - best).abs() <= 1e-7 * (1.0 + best.abs()), "{} vs {}", ms.alpha, best);
    }
}
