use celldelay::channel::{candidate_rates, compute_rates, deliverable_bits, BandPlan};
use celldelay::queueing::step_queues;
use celldelay::{
    per_slot_cost, validate_action, CostKind, CostModel, CsiState, IciPattern, PatternSet, QsiState, ScheduleAction,
    SystemConfig, Violation,
};
use proptest::prelude::*;

fn cfg(m: usize, k: usize, nq: u64) -> SystemConfig {
    SystemConfig::uniform(m, k, nq)
}

#[test]
fn per_slot_cost_examples() {
    let c = cfg(1, 1, 5);
    let cost = CostModel::new(&c, vec![1.0]).unwrap();
    assert_eq!(per_slot_cost(&QsiState::empty(&c), &cost), 0.0);
    assert_eq!(per_slot_cost(&QsiState::new(vec![3], &c).unwrap(), &cost), 3.0);

    let mut c = cfg(1, 2, 3);
    c.cost_weights = vec![1.0, 2.0];
    c.cost_kind = CostKind::OverflowIndicator;
    let cost = CostModel::new(&c, vec![0.5, 0.5]).unwrap();
    assert_eq!(per_slot_cost(&QsiState::new(vec![3, 1], &c).unwrap(), &cost), 1.0);
}

#[test]
fn normalized_cost_rejects_zero_rate() {
    let c = cfg(1, 2, 3);
    assert!(CostModel::new(&c, vec![1.0, 0.0]).is_err());
}

#[test]
fn validate_action_examples() {
    let c = cfg(2, 2, 3);
    let q = QsiState::new(vec![1, 1, 1, 1], &c).unwrap();
    let off = IciPattern::all_off(2);
    assert!(validate_action(&off, &ScheduleAction::none(2, 2), &q).is_ok());

    let first = IciPattern::from_active(&[true, false]);
    let s = ScheduleAction::from_choices(&[None, Some(0)], 2);
    let v = validate_action(&first, &s, &q).unwrap_err();
    assert!(v.iter().any(|x| matches!(x, Violation::BsInactive { bs: 1, .. })));

    let s = ScheduleAction::from_indicators(vec![true, true, false, false], 2);
    let v = validate_action(&IciPattern::all_on(2), &s, &q).unwrap_err();
    assert!(v.iter().any(|x| matches!(x, Violation::MultiUser { bs: 0, count: 2 })));
    assert!(v[0].to_string().starts_with("multi-user"));
}

#[test]
fn validate_action_reports_every_violation() {
    let c = cfg(2, 2, 3);
    let q = QsiState::new(vec![0, 1, 1, 1], &c).unwrap();
    let s = ScheduleAction::from_indicators(vec![true, false, true, true], 2);
    let p = IciPattern::from_active(&[true, false]);
    let v = validate_action(&p, &s, &q).unwrap_err();
    assert_eq!(v.len(), 4, "{v:?}");
}

#[test]
fn system_config_rejects_bad_values() {
    let mut c = cfg(1, 1, 3);
    c.coding_gap = 0.0;
    assert!(c.validate().is_err());
    let mut c = cfg(1, 1, 3);
    c.cost_weights = vec![0.0];
    assert!(c.validate().is_err());
    let mut c = cfg(1, 1, 3);
    c.buffer_size = 0;
    assert!(c.validate().is_err());
    assert!(QsiState::new(vec![4], &cfg(1, 1, 3)).is_err());
}

#[test]
fn pattern_set_rejects_duplicates_and_sorts() {
    let a = IciPattern::from_mask(0b10, 2);
    let b = IciPattern::from_mask(0b01, 2);
    assert!(PatternSet::new(vec![a, a], 2).is_err());
    let set = PatternSet::new(vec![a, b], 2).unwrap();
    assert_eq!(set.get(0), b);
    assert_eq!(set.reference_for(0).unwrap(), 0);
    assert_eq!(set.reference_for(1).unwrap(), 1);
}

proptest! {
    #[test]
    fn pattern_set_round_trip(m in 1usize..6) {
        let set = PatternSet::all_nonempty(m).unwrap();
        prop_assert_eq!(set.len(), (1 << m) - 1);
        for (i, p) in set.patterns().iter().enumerate() {
            prop_assert!(p.active_count() >= 1);
            for bs in 0..m {
                prop_assert_eq!(set.patterns_activating(bs).contains(&i), p.is_active(bs));
            }
        }
    }

    #[test]
    fn cost_is_monotone(
        q in prop::collection::vec(0u64..=6, 4),
        bump in prop::collection::vec(0u64..=6, 4),
        w in prop::collection::vec(0.1f64..5.0, 4),
        lambda in prop::collection::vec(0.05f64..3.0, 4),
        overflow in any::<bool>(),
    ) {
        let mut c = cfg(2, 2, 6);
        c.cost_weights = w;
        c.cost_kind = if overflow { CostKind::OverflowIndicator } else { CostKind::NormalizedQueue };
        let cost = CostModel::new(&c, lambda).unwrap();
        let lo = QsiState::new(q.clone(), &c).unwrap();
        let hi_q: Vec<u64> = q.iter().zip(&bump).map(|(a, b)| (a + b).min(6)).collect();
        let hi = QsiState::new(hi_q, &c).unwrap();
        prop_assert!(hi.dominates(&lo));
        prop_assert!(per_slot_cost(&hi, &cost) >= per_slot_cost(&lo, &cost));
        for u in 0..4 {
            let t = cost.user_table(u);
            prop_assert!(t.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn rate_nondecreasing_in_own_gain_and_power(
        gains in prop::collection::vec(0.0f64..10.0, 8),
        boost in 1.0f64..10.0,
        mask in 1u64..4,
    ) {
        let c = cfg(2, 2, 3);
        let p = IciPattern::from_mask(mask, 2);
        let band = BandPlan::shared(2);
        let csi = CsiState::new(gains.clone(), &c).unwrap();
        let base = candidate_rates(&c, &csi, &p, &band);
        for m in 0..2 {
            for k in 0..2 {
                let u = c.user(m, k);
                let mut g = gains.clone();
                g[c.link(m, m, k)] *= boost;
                let up = candidate_rates(&c, &CsiState::new(g, &c).unwrap(), &p, &band);
                prop_assert!(up.rate[u] >= base.rate[u]);
                // More interference never helps.
                let mut g = gains.clone();
                g[c.link(1 - m, m, k)] *= boost;
                let worse = candidate_rates(&c, &CsiState::new(g, &c).unwrap(), &p, &band);
                prop_assert!(worse.rate[u] <= base.rate[u]);
            }
        }
        let mut louder = c.clone();
        louder.max_power = vec![boost; 2];
        let single = IciPattern::from_mask(1, 2);
        let r0 = candidate_rates(&c, &csi, &single, &band);
        let r1 = candidate_rates(&louder, &csi, &single, &band);
        for u in 0..2 {
            prop_assert!(r1.rate[u] >= r0.rate[u]);
            prop_assert_eq!(r0.deliverable[u], deliverable_bits(&c, r0.rate[u]));
        }
    }

    #[test]
    fn muting_an_interferer_never_lowers_a_rate(gains in prop::collection::vec(0.0f64..10.0, 8)) {
        let c = cfg(2, 2, 3);
        let csi = CsiState::new(gains, &c).unwrap();
        let band = BandPlan::shared(2);
        let both = candidate_rates(&c, &csi, &IciPattern::all_on(2), &band);
        let first = candidate_rates(&c, &csi, &IciPattern::from_mask(1, 2), &band);
        for k in 0..2 {
            prop_assert!(first.rate[k] >= both.rate[k]);
            prop_assert_eq!(first.rate[2 + k], 0.0);
        }
    }

    #[test]
    fn compute_rates_zeroes_unscheduled(gains in prop::collection::vec(0.0f64..10.0, 8), pick in 0usize..2) {
        let c = cfg(2, 2, 3);
        let csi = CsiState::new(gains, &c).unwrap();
        let q = QsiState::new(vec![1, 1, 1, 1], &c).unwrap();
        let p = IciPattern::all_on(2);
        let s = ScheduleAction::from_choices(&[Some(pick), None], 2);
        let r = compute_rates(&c, &csi, &p, &s, &q).unwrap();
        let all = candidate_rates(&c, &csi, &p, &BandPlan::shared(2));
        for u in 0..4 {
            if u == pick {
                prop_assert_eq!(r.rate[u], all.rate[u]);
            } else {
                prop_assert_eq!(r.rate[u], 0.0);
                prop_assert_eq!(r.deliverable[u], 0);
            }
        }
        let bad = ScheduleAction::from_choices(&[None, Some(0)], 2);
        prop_assert!(compute_rates(&c, &csi, &IciPattern::from_mask(1, 2), &bad, &q).is_err());
    }

    #[test]
    fn queue_step_conserves_units(
        q in prop::collection::vec(0u64..=9, 6),
        u in prop::collection::vec(0u64..20, 6),
        a in prop::collection::vec(0u64..20, 6),
    ) {
        let c = cfg(3, 2, 9);
        let qs = QsiState::new(q.clone(), &c).unwrap();
        let out = step_queues(&qs, &u, &a, 9);
        for i in 0..6 {
            let next = out.next_q.get(i);
            prop_assert!(next <= 9);
            prop_assert_eq!(out.served[i], u[i].min(q[i]));
            prop_assert_eq!(out.post_decision[i], q[i] - out.served[i]);
            // arrivals = served + dropped + (next - q)
            prop_assert_eq!(a[i] + q[i], out.served[i] + out.dropped[i] + next);
        }
    }
}
