//! Monte-Carlo checks that no local strategy drifts upward, in any mode, and
//! that the tail bound holds for the running maximum.

use bellbet::bounds::{bernstein_sup_bound, ProtocolDesign};
use bellbet::chsh::AngleConfig;
use bellbet::referee::{replay_verify, simulate, ClaimantSpec, ProtocolMode, RefereeOptions, RunPlan, TrialLog};
use bellbet::strategies::StrategySpec;
use proptest::prelude::*;

const LOCAL: [&str; 5] = [
    "constant",
    "independent-coin",
    "classical-polarizer",
    "deterministic-optimal",
    "adaptive-frequency-tracker",
];

const MODES: [ProtocolMode; 3] = [ProtocolMode::Sequential, ProtocolMode::ClonedSource, ProtocolMode::Batch];

fn plan(claimant: ClaimantSpec, n: u64, mode: ProtocolMode, seed: u64, angles: AngleConfig<f64>) -> RunPlan {
    RunPlan {
        config_hash: String::new(),
        seed,
        mode,
        angles,
        design: ProtocolDesign::midpoint(n, (2f64.sqrt() - 1.0) / 4.0).unwrap(),
        claimant,
        locality_enforced: true,
    }
}

fn strategy(name: &str) -> ClaimantSpec {
    ClaimantSpec::Strategy(StrategySpec::named(name))
}

/// (final statistics, running maxima) over `runs` seeds.
fn sample(name: &str, n: u64, runs: u64, mode: ProtocolMode, angles: AngleConfig<f64>) -> (Vec<i64>, Vec<i64>) {
    (0..runs)
        .map(|seed| {
            let out = simulate(&plan(strategy(name), n, mode, seed, angles), RefereeOptions { journal: false }).unwrap();
            (out.trace.statistic(), out.trace.sup())
        })
        .unzip()
}

#[test]
fn local_strategies_have_no_upward_drift() {
    let (n, runs) = (500u64, 2000u64);
    // S_n has variance at most 3n/4, so the mean over `runs` has sd ≤ √(3n/4/runs)
    let tolerance = 4.0 * (0.75 * n as f64 / runs as f64).sqrt();
    for angles in [AngleConfig::optimal(), AngleConfig::aspect()] {
        for mode in MODES {
            for name in LOCAL {
                let (finals, _) = sample(name, n, runs, mode, angles);
                let mean = finals.iter().sum::<i64>() as f64 / runs as f64;
                assert!(mean <= tolerance, "{name} {mode:?}: mean S_n = {mean} > {tolerance}");
            }
        }
    }
}

#[test]
fn running_maximum_respects_tail_bound() {
    let (n, runs) = (500u64, 2000u64);
    for name in LOCAL {
        let (_, sups) = sample(name, n, runs, ProtocolMode::Sequential, AngleConfig::optimal());
        for k in [1.5f64, 2.0, 3.0] {
            let threshold = 3f64.sqrt() / 2.0 * k * (n as f64).sqrt();
            let freq = sups.iter().filter(|&&s| s as f64 >= threshold).count() as f64 / runs as f64;
            let bound = bernstein_sup_bound(n, threshold).unwrap().value();
            assert!(freq <= bound, "{name} k={k}: {freq} > {bound}");
        }
    }
}

#[test]
fn quantum_oracle_drifts_at_the_predicted_rate() {
    let (n, runs) = (2000u64, 200u64);
    let mu = (2f64.sqrt() - 1.0) / 4.0;
    let claimant = ClaimantSpec::Quantum {
        correlation_sense: Default::default(),
    };
    let total: i64 = (0..runs)
        .map(|seed| {
            let p = plan(claimant.clone(), n, ProtocolMode::Sequential, seed, AngleConfig::optimal());
            simulate(&p, RefereeOptions { journal: false }).unwrap().trace.statistic()
        })
        .sum();
    let mean = total as f64 / runs as f64;
    let tolerance = 4.0 * (0.75 * n as f64 / runs as f64).sqrt();
    assert!((mean - mu * n as f64).abs() < tolerance, "{mean} vs {}", mu * n as f64);
}

fn flip(log: &TrialLog, index: usize, left: bool) -> TrialLog {
    let mut t = log.clone();
    let r = &mut t.records[index];
    if left {
        r.x = r.x.flip();
    } else {
        r.y = r.y.flip();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_run_replays_and_every_flip_is_caught(
        seed in any::<u64>(),
        which in 0usize..6,
        mode in prop::sample::select(MODES.to_vec()),
        n in 20u64..300,
        pick in any::<prop::sample::Index>(),
        left in any::<bool>(),
    ) {
        let claimant = if which == 5 {
            ClaimantSpec::Quantum { correlation_sense: Default::default() }
        } else {
            strategy(LOCAL[which])
        };
        let out = simulate(&plan(claimant, n, mode, seed, AngleConfig::optimal()), RefereeOptions::default()).unwrap();
        let log = out.log;
        prop_assert!(replay_verify(&log).is_ok());
        let text = log.to_ndjson();
        prop_assert_eq!(TrialLog::parse(&text).unwrap().to_ndjson(), text);

        let k = pick.index(log.records.len());
        let err = replay_verify(&flip(&log, k, left)).unwrap_err();
        prop_assert_eq!(err.trial(), Some(k as u64 + 1));
    }
}
