use oofa_core::criteria::{self, CriteriaReport};
use oofa_core::perm::{self, factorial, full_design, permutation_from_pwo, pwo_row, rank, unrank};
use oofa_core::{io, isomorph, CandidateSet, Design};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

fn same_report(a: &CriteriaReport, b: &CriteriaReport) -> bool {
    (a.m, a.n, a.p) == (b.m, b.n, b.p)
        && close_opt(a.chi2_ave_2, b.chi2_ave_2)
        && close_opt(a.chi2_max_2, b.chi2_max_2)
        && close_opt(a.fo_2, b.fo_2)
        && close_opt(a.chi2_ave_3, b.chi2_ave_3)
        && close_opt(a.chi2_max_3, b.chi2_max_3)
        && close_opt(a.fo_3, b.fo_3)
        && close_opt(a.chi2_ave_2_loo, b.chi2_ave_2_loo)
        && close_opt(a.fo_2_loo, b.fo_2_loo)
        && close_opt(a.chi2_ave_3_loo, b.chi2_ave_3_loo)
        && close_opt(a.fo_3_loo, b.fo_3_loo)
        && close(a.d_eff, b.d_eff)
        && close_opt(a.mean_vif, b.mean_vif)
        && a.sim.len() == b.sim.len()
        && a.sim.iter().zip(&b.sim).all(|(x, y)| close(*x, *y))
        && close(a.rmv_ord, b.rmv_ord)
        && a.is_oofa_oa_2 == b.is_oofa_oa_2
        && a.is_oofa_oa_3 == b.is_oofa_oa_3
        && a.duplicate_runs == b.duplicate_runs
}

/// A design on m in 3..=5 with up to 24 distinct runs.
fn design() -> impl Strategy<Value = Design> {
    (3usize..=5).prop_flat_map(|m| {
        let all: Vec<u64> = (1..=factorial(m)).collect();
        let max = all.len().min(24);
        subsequence(all, 2..=max)
            .prop_shuffle()
            .prop_map(move |rows| Design::from_reference_rows(m, &rows).unwrap())
    })
}

/// A design together with a random d-isomorphism: relabeling, reversal
/// flag and run order.
fn transformed() -> impl Strategy<Value = (Design, Vec<u8>, bool, Vec<usize>)> {
    design().prop_flat_map(|d| {
        let sigma: Vec<u8> = (0..d.m() as u8).collect();
        let order: Vec<usize> = (0..d.n()).collect();
        (
            Just(d),
            Just(sigma).prop_shuffle(),
            any::<bool>(),
            Just(order).prop_shuffle(),
        )
    })
}

proptest! {
    #[test]
    fn rank_unrank_round_trip(m in 2usize..=12, seed in any::<u64>()) {
        let r = seed % factorial(m) + 1;
        let p = unrank(m, r).unwrap();
        prop_assert_eq!(rank(&p), r);
    }

    #[test]
    fn pwo_row_determines_the_ordering(m in 2usize..=9, seed in any::<u64>()) {
        let p = unrank(m, seed % factorial(m) + 1).unwrap();
        let row = pwo_row(&p);
        prop_assert_eq!(row.len(), perm::m_prime(m));
        prop_assert_eq!(permutation_from_pwo(m, &row), Some(p));
    }

    #[test]
    fn sim_is_nondecreasing_in_s(d in design()) {
        let sims = criteria::moments(&d.expand(), 4).unwrap();
        for w in sims.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12), "{sims:?}");
        }
    }

    #[test]
    fn design_csv_round_trips(d in design()) {
        let text = io::format_design(&d);
        let back = io::parse_design(&text).unwrap();
        prop_assert_eq!(io::format_design(&back), text);
        prop_assert_eq!(back, d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn d_isomorphisms_preserve_every_report_field((d, sigma, rev, order) in transformed()) {
        let c = CandidateSet::full(d.m()).unwrap();
        let mut e = d.relabeled(&sigma).with_run_order(&order);
        if rev {
            e = e.reversed();
        }
        let a = criteria::evaluate(&d, &c).unwrap();
        let b = criteria::evaluate(&e, &c).unwrap();
        prop_assert!(same_report(&a, &b), "{a:?}\n{b:?}");
        prop_assert!(isomorph::wt_isomorphic(&d, &e).unwrap());
        prop_assert!(isomorph::d_isomorphic(&d, &e).unwrap());
        prop_assert_eq!(isomorph::canonical_digest(&d).unwrap(), isomorph::canonical_digest(&e).unwrap());
    }
}

#[test]
fn full_design_vif_closed_form() {
    for m in 3..=7 {
        let d = full_design(m).unwrap();
        let vif = criteria::mean_vif(&d).unwrap();
        let want = 3.0 * (m as f64 - 1.0) / (m as f64 + 1.0);
        assert!((vif - want).abs() < 1e-9, "m={m}: {vif} vs {want}");
    }
}

#[test]
fn full_design_sim_anchors() {
    for (m, s1, s2) in [(4, 3.0, None), (5, 5.0, None), (6, 7.5, Some(7.96))] {
        let d = full_design(m).unwrap();
        let sim = criteria::moments(&d.expand(), 2).unwrap();
        assert!((sim[0] - s1).abs() < 1e-9);
        if let Some(s2) = s2 {
            assert!((sim[1] - s2).abs() < 0.005);
        }
    }
}
