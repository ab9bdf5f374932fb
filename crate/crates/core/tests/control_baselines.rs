use celldelay::baselines::{
    backpressure_choice, backpressure_schedule, csit_only_choice, csit_only_schedule, ReusePlan, SlowUtility,
    TimescaleConfig, TimescaleDecomp,
};
use celldelay::channel::{candidate_rates, resample_csi, sample_csi, BandPlan, ChannelModel, FadingDist, RateReport};
use celldelay::control::{refresh_qinfo, schedule_users, select_pattern, BscQInfo, QsiRegionPartition};
use celldelay::learner::{PerUserQTable, PerUserValueTable};
use celldelay::policy::{SlotContext, SlotObservation, SlotPolicy};
use celldelay::queueing::step_queues;
use celldelay::rng::{stream, Stream};
use celldelay::{validate_action, IciPattern, PatternSet, QsiState, SystemConfig};
use proptest::prelude::*;

fn report(rate: Vec<f64>) -> RateReport {
    let n = rate.len();
    RateReport {
        deliverable: rate.iter().map(|r| r.floor() as u64).collect(),
        rate,
        signal: vec![0.0; n],
        interference_plus_noise: vec![0.0; n],
    }
}

proptest! {
    #[test]
    fn scheduler_ignores_affine_shifts_of_values(
        eighths in prop::collection::vec(prop::collection::vec(-40i32..40, 6), 4),
        q in prop::collection::vec(0u64..=5, 4),
        units in prop::collection::vec(0u64..4, 4),
        shift in -10i32..10,
        log_scale in -1i32..3,
        mask in 1u64..4,
    ) {
        // Values on a dyadic grid keep every difference exact.
        let cfg = SystemConfig::uniform(2, 2, 5);
        let qs = QsiState::new(q, &cfg).unwrap();
        let p = IciPattern::from_mask(mask, 2);
        let scale = 2f64.powi(log_scale);
        let table = |f: &dyn Fn(f64) -> f64| -> Vec<PerUserValueTable> {
            eighths
                .iter()
                .map(|v| PerUserValueTable::from_values(v.iter().map(|&x| f(x as f64 / 8.0)).collect(), 0))
                .collect()
        };
        let a = schedule_users(&p, &table(&|x| x), &qs, &units, 2);
        let b = schedule_users(&p, &table(&|x| scale * x + shift as f64), &qs, &units, 2);
        prop_assert!(validate_action(&p, &a, &qs).is_ok());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bsc_picks_the_cheapest_pattern(costs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2)) {
        let set = PatternSet::all_nonempty(2).unwrap();
        let mut info = BscQInfo::new(2, 3);
        for (m, c) in costs.iter().enumerate() {
            info.set_cache(m, c.clone());
        }
        let pick = select_pattern(&info, &set).unwrap();
        for p in 0..3 {
            prop_assert!(info.total(pick) <= info.total(p));
        }
    }

    #[test]
    fn csit_only_ignores_queues(
        rate in prop::collection::vec(0.0f64..10.0, 6),
        q in prop::collection::vec(1u64..=5, 6),
        perm_seed in any::<u64>(),
    ) {
        let cfg = SystemConfig::uniform(2, 3, 5);
        let p = IciPattern::all_on(2);
        let r = report(rate);
        let mut permuted = q.clone();
        let mut rng = stream(perm_seed, Stream::Policy);
        use rand::seq::SliceRandom;
        permuted.shuffle(&mut rng);
        let a = csit_only_schedule(&p, &r, &QsiState::new(q, &cfg).unwrap(), 3);
        let b = csit_only_schedule(&p, &r, &QsiState::new(permuted, &cfg).unwrap(), 3);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn baseline_actions_are_valid(
        rate in prop::collection::vec(0.0f64..10.0, 6),
        q in prop::collection::vec(0u64..=5, 6),
        mask in 1u64..4,
    ) {
        let cfg = SystemConfig::uniform(2, 3, 5);
        let p = IciPattern::from_mask(mask, 2);
        let qs = QsiState::new(q.clone(), &cfg).unwrap();
        let r = report(rate.clone());
        prop_assert!(validate_action(&p, &csit_only_schedule(&p, &r, &qs, 3), &qs).is_ok());
        let bp = backpressure_schedule(&p, &r, &qs, 3);
        prop_assert!(validate_action(&p, &bp, &qs).is_ok());
        // Max-weight: the chosen user's weight is the cell maximum.
        for m in 0..2 {
            if let Some(k) = backpressure_choice(&p, &r, &qs, 3)[m] {
                let w = |k: usize| q[m * 3 + k] as f64 * rate[m * 3 + k];
                prop_assert!((0..3).all(|j| w(k) >= w(j)));
            }
        }
    }
}

#[test]
fn baseline_spec_examples() {
    let p = IciPattern::all_on(1);
    assert_eq!(csit_only_choice(&p, &report(vec![1.0, 2.5]), 2), vec![Some(1)]);
    assert_eq!(csit_only_choice(&p, &report(vec![0.0, 0.0]), 2), vec![Some(0)]);
    let cfg = SystemConfig::uniform(1, 2, 5);
    let q = QsiState::new(vec![4, 1], &cfg).unwrap();
    assert_eq!(backpressure_choice(&p, &report(vec![1.0, 3.0]), &q, 2), vec![Some(0)]);
    let q = QsiState::new(vec![0, 5], &cfg).unwrap();
    assert_eq!(backpressure_choice(&p, &report(vec![10.0, 0.1]), &q, 2), vec![Some(1)]);
}

#[test]
fn reuse3_colors_neighbors_apart() {
    let plan = ReusePlan::reuse3(7);
    assert_eq!(plan.factor(), 3);
    let centre = plan.colors()[0];
    assert!(plan.colors()[1..].iter().all(|&c| c != centre));
    assert_eq!(plan.band_plan().num_bands(), 3);
}

#[test]
fn bsc_refresh_is_gated_by_region() {
    let part = QsiRegionPartition::uniform(2, 7, 4).unwrap();
    let t = PerUserQTable::zeros(7, 3, 0);
    let mut info = BscQInfo::new(1, 3);
    assert!(refresh_qinfo(&mut info, 0, &[0, 0], 0, &part, &[&t, &t]));
    assert!(!refresh_qinfo(&mut info, 0, &[1, 0], 0, &part, &[&t, &t]));
    assert!(refresh_qinfo(&mut info, 0, &[7, 0], 0, &part, &[&t, &t]));
    assert_eq!(info.messages(), &[2]);
}

/// Drives a policy directly, outside the engine, with full buffers.
fn drive(policy: &mut TimescaleDecomp, cfg: &SystemConfig, channel: &ChannelModel, slots: u64, mut check: impl FnMut(u64, &IciPattern, &celldelay::CsiState)) -> Vec<u64> {
    let mut rng = stream(11, Stream::Channel);
    let mut csi = sample_csi(channel, &mut rng);
    let q = QsiState::new(vec![cfg.buffer_size; cfg.num_users()], cfg).unwrap();
    let mut counts = vec![0; cfg.num_users()];
    let band = BandPlan::shared(cfg.num_bs);
    for slot in 0..slots {
        resample_csi(channel, &mut rng, &mut csi);
        let ctx = SlotContext::new(slot, &q, &csi);
        let p = policy.select_pattern(&ctx).unwrap();
        check(slot, &p, &csi);
        let cand = candidate_rates(cfg, &csi, &p, &band);
        let action = policy.schedule(&ctx, p, &cand, &cand.deliverable).unwrap();
        for (u, c) in counts.iter_mut().enumerate() {
            *c += action.is_scheduled(u) as u64;
        }
        let zero = vec![0; cfg.num_users()];
        let outcome = step_queues(&q, &zero, &zero, cfg.buffer_size);
        policy
            .observe(&SlotObservation {
                slot,
                q: &q,
                csi: &csi,
                pattern: p,
                schedule: &action,
                candidates: &cand,
                candidate_units: &cand.deliverable,
                outcome: &outcome,
            })
            .unwrap();
    }
    counts
}

#[test]
fn proportional_fair_splits_a_symmetric_cell_evenly() {
    let cfg = SystemConfig::uniform(1, 2, 5);
    let channel = ChannelModel::new(FadingDist::Rayleigh { mean_gain: 1.0 }, &cfg).unwrap();
    let set = PatternSet::all_nonempty(1).unwrap();
    let mut policy = TimescaleDecomp::new(&cfg, &set, TimescaleConfig::default()).unwrap();
    let counts = drive(&mut policy, &cfg, &channel, 100_000, |_, _, _| {});
    let share = counts[0] as f64 / (counts[0] + counts[1]) as f64;
    assert!((share - 0.5).abs() <= 0.05, "share {share}");
}

#[test]
fn one_slot_window_with_sum_rate_is_the_per_slot_argmax() {
    let mut cfg = SystemConfig::uniform(2, 2, 5);
    cfg.path_loss = vec![1.0, 0.3, 0.5, 0.8, 0.6, 1.0, 0.9, 0.2];
    let channel = ChannelModel::new(FadingDist::Rayleigh { mean_gain: 1.0 }, &cfg).unwrap();
    let set = PatternSet::all_nonempty(2).unwrap();
    let config = TimescaleConfig {
        slow_period: 1,
        utility: SlowUtility::SumRate,
        ..TimescaleConfig::default()
    };
    let mut policy = TimescaleDecomp::new(&cfg, &set, config).unwrap();
    let band = BandPlan::shared(2);
    let mut checked = 0;
    drive(&mut policy, &cfg, &channel, 2_000, |_, p, csi| {
        let utility = |p: &IciPattern| -> f64 {
            let r = candidate_rates(&cfg, csi, p, &band);
            p.active().map(|m| r.rate[2 * m].max(r.rate[2 * m + 1])).sum()
        };
        let best = set.patterns().iter().map(utility).fold(f64::NEG_INFINITY, f64::max);
        assert!((utility(p) - best).abs() < 1e-9);
        checked += 1;
    });
    assert_eq!(checked, 2_000);
}

#[test]
fn single_pattern_catalog_reduces_to_pf() {
    let cfg = SystemConfig::uniform(2, 2, 5);
    let channel = ChannelModel::new(FadingDist::Rayleigh { mean_gain: 1.0 }, &cfg).unwrap();
    let set = PatternSet::new(vec![IciPattern::all_on(2)], 2).unwrap();
    let mut policy = TimescaleDecomp::new(&cfg, &set, TimescaleConfig::default()).unwrap();
    drive(&mut policy, &cfg, &channel, 500, |_, p, _| assert_eq!(*p, IciPattern::all_on(2)));
    assert_eq!(policy.current_pattern(), 0);
}
