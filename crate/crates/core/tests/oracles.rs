mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sentimon_core::metrics::{average_ranks, cohens_kappa, kendall_tau_b, spearman_rho};

use common::{is_constant, oracle_kappa, oracle_kendall, oracle_ranks, oracle_spearman};

fn scores(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    n.prop_flat_map(|n| (prop::collection::vec(1i64..=5, n), prop::collection::vec(1i64..=5, n)))
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        _ => false,
    }
}

#[test]
fn ranks_match_hand_values() {
    assert_eq!(average_ranks(&[10, 20, 20, 30]), [1.0, 2.5, 2.5, 4.0]);
    assert_eq!(oracle_ranks(&[10, 20, 20, 30]), [1.0, 2.5, 2.5, 4.0]);
    assert_eq!(average_ranks(&[3, 3, 3]), [2.0, 2.0, 2.0]);
}

#[test]
fn larger_samples_match_oracles() {
    // n up to 200 exercises the merge-sort path well past the small cases
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 5) as i64 + 1
    };
    for n in [7, 31, 64, 200] {
        let a: Vec<i64> = (0..n).map(|_| next()).collect();
        let b: Vec<i64> = a.iter().map(|x| if next() > 3 { next() } else { *x }).collect();
        assert!(close(spearman_rho(&a, &b).unwrap(), oracle_spearman(&a, &b)));
        assert!(close(kendall_tau_b(&a, &b).unwrap(), oracle_kendall(&a, &b)));
        assert!(close(cohens_kappa(&a, &b).unwrap(), oracle_kappa(&a, &b)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn spearman_matches_oracle((a, b) in scores(2..=12)) {
        prop_assert!(close(spearman_rho(&a, &b).unwrap(), oracle_spearman(&a, &b)));
    }

    #[test]
    fn kendall_matches_oracle((a, b) in scores(2..=12)) {
        prop_assert!(close(kendall_tau_b(&a, &b).unwrap(), oracle_kendall(&a, &b)));
    }

    #[test]
    fn kappa_matches_oracle((a, b) in scores(1..=12)) {
        prop_assert!(close(cohens_kappa(&a, &b).unwrap(), oracle_kappa(&a, &b)));
    }

    #[test]
    fn undefined_iff_a_side_is_constant((a, b) in scores(2..=6)) {
        let constant = is_constant(&a) || is_constant(&b);
        prop_assert_eq!(spearman_rho(&a, &b).unwrap().is_none(), constant);
        prop_assert_eq!(kendall_tau_b(&a, &b).unwrap().is_none(), constant);
    }

    #[test]
    fn bounded_and_symmetric((a, b) in scores(2..=12)) {
        for f in [spearman_rho::<i64>, kendall_tau_b::<i64>] {
            let ab = f(&a, &b).unwrap();
            let ba = f(&b, &a).unwrap();
            prop_assert!(close(ab, ba));
            if let Some(v) = ab {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
        if let Some(k) = cohens_kappa(&a, &b).unwrap() {
            prop_assert!(k <= 1.0);
        }
    }

    #[test]
    fn pair_order_does_not_matter((a, b) in scores(2..=12), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..a.len()).collect();
        // Fisher-Yates driven by the seed
        let mut s = seed | 1;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pa: Vec<i64> = idx.iter().map(|&i| a[i]).collect();
        let pb: Vec<i64> = idx.iter().map(|&i| b[i]).collect();
        prop_assert!(close(spearman_rho(&a, &b).unwrap(), spearman_rho(&pa, &pb).unwrap()));
        prop_assert!(close(kendall_tau_b(&a, &b).unwrap(), kendall_tau_b(&pa, &pb).unwrap()));
        prop_assert!(close(cohens_kappa(&a, &b).unwrap(), cohens_kappa(&pa, &pb).unwrap()));
    }

    #[test]
    fn monotone_relabelling_preserves_rank_statistics((a, b) in scores(2..=12)) {
        let relabel = |v: &[i64]| v.iter().map(|x| x * 10).collect::<Vec<_>>();
        let (ra, rb) = (relabel(&a), relabel(&b));
        prop_assert!(close(spearman_rho(&a, &b).unwrap(), spearman_rho(&ra, &rb).unwrap()));
        prop_assert!(close(kendall_tau_b(&a, &b).unwrap(), kendall_tau_b(&ra, &rb).unwrap()));
    }

    #[test]
    fn identical_sides_are_perfect(a in prop::collection::vec(1i64..=5, 2..=20)) {
        if !is_constant(&a) {
            assert_abs_diff_eq!(spearman_rho(&a, &a).unwrap().unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(kendall_tau_b(&a, &a).unwrap().unwrap(), 1.0, epsilon = 1e-12);
            prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), Some(1.0));
        }
    }

    #[test]
    fn reversal_negates((a, b) in scores(2..=12)) {
        let neg: Vec<i64> = b.iter().map(|x| 6 - x).collect();
        let s = spearman_rho(&a, &b).unwrap();
        let t = kendall_tau_b(&a, &b).unwrap();
        prop_assert!(close(spearman_rho(&a, &neg).unwrap(), s.map(|v| -v)));
        prop_assert!(close(kendall_tau_b(&a, &neg).unwrap(), t.map(|v| -v)));
    }
}
