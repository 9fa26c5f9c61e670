//! Property checks over randomly drawn laws and instances. Seeds are fixed so
//! every run explores the same cases. Shared by the invariants and acceptance
//! test binaries.

use std::collections::{HashMap, VecDeque};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};
use rumorlab::criteria_line::{
    classify_firework_homogeneous, classify_reverse_homogeneous, firework_series_partial,
    reverse_w, DEFAULT_BAND,
};
use rumorlab::criteria_tree::{critical_values, phi1, phi2};
use rumorlab::dist::{
    annealed_cdf, build_surviving_radius_law, check_standing_assumption, pgf_eval,
    radius_cdf_strict, OffspringLaw, RadiusLaw, SlowlyVarying, StationLaw,
};
use rumorlab::estimator::{estimate_annealed, estimate_quenched, McSettings, Process, Scenario};
use rumorlab::rng::{child_hash, StreamKey, StreamTag, ROOT_HASH};
use rumorlab::sim_line::{
    firework_on_radii, gen_line_env, reverse_on_radii, run_firework_line, run_reverse_line,
    LineLaws,
};
use rumorlab::sim_tree::{
    gw_vertex, run_firework_tree, run_firework_tree_traced, run_reverse_tree,
    run_reverse_tree_traced, RootPolicy, TreeEnvKey, TreeRun,
};
use rumorlab::Outcome;

fn cfg(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn check<S: Strategy>(
    config: Config,
    strategy: &S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    TestRunner::new(config)
        .run(strategy, test)
        .map_err(|e| e.to_string())
}

fn station() -> impl Strategy<Value = StationLaw> {
    prop_oneof![
        (1..4u64).prop_map(StationLaw::deterministic),
        (0.05..0.95f64).prop_map(|p| StationLaw::bernoulli(p).unwrap()),
        (0.1..0.9f64).prop_map(|q| StationLaw::geometric(q).unwrap()),
        (0.3..1.0f64).prop_map(|a| StationLaw::power_tail(a, SlowlyVarying::default()).unwrap()),
    ]
}

fn radius() -> impl Strategy<Value = RadiusLaw> {
    prop_oneof![
        (0.1..0.9f64).prop_map(|q| RadiusLaw::geometric(q).unwrap()),
        (0.5..2.0f64, 1.05..3.0f64).prop_map(|(c, beta)| RadiusLaw::Power {
            c,
            beta,
            shift: 1.0
        }),
        (1..6u64, 0.1..0.9f64).prop_map(|(r, p)| RadiusLaw::TwoPoint { r: r as f64, p }),
        (1..5u64).prop_map(|r| RadiusLaw::deterministic(r as f64)),
    ]
}

fn pair() -> impl Strategy<Value = (StationLaw, RadiusLaw)> {
    (station(), radius()).prop_filter("standing assumption", |(n, r)| {
        check_standing_assumption(n, r).is_ok()
    })
}

fn light_station() -> impl Strategy<Value = StationLaw> {
    prop_oneof![
        (1..3u64).prop_map(StationLaw::deterministic),
        (0.2..0.95f64).prop_map(|p| StationLaw::bernoulli(p).unwrap()),
    ]
}

/// Component of 0 in the directed graph with edges w -> w' (w < w') accepted by `edge`.
fn line_component(len: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; len];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(w) = queue.pop_front() {
        for v in w + 1..len {
            if !seen[v] && edge(w, v) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

// ---- distributions ----

pub fn annealed_cdf_is_pgf_of_radius_cdf() -> Result<(), String> {
    check(
        cfg(64, 0x5eed_0001),
        &(pair(), 0.01..60.0f64),
        |((n, r), t)| {
            let direct = pgf_eval(&n, radius_cdf_strict(&r, t)).unwrap();
            prop_assert!((annealed_cdf(&n, &r, t) - direct).abs() <= 1e-14);
            Ok(())
        },
    )
}

pub fn pgf_is_monotone_and_anchored() -> Result<(), String> {
    check(
        cfg(64, 0x5eed_0001),
        &(station(), prop::collection::vec(0.0..1.0f64, 2..20)),
        |(n, ts)| {
            prop_assert!((pgf_eval(&n, 0.0).unwrap() - (1.0 - n.ge(1))).abs() <= 1e-12);
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let vals: Vec<f64> = ts.iter().map(|t| pgf_eval(&n, *t).unwrap()).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            prop_assert!((pgf_eval(&n, 1.0).unwrap() - 1.0).abs() <= 1e-12);
            Ok(())
        },
    )
}

pub fn surviving_radius_law_inequality() -> Result<(), String> {
    check(
        cfg(6, 0x5eed_0002),
        &prop_oneof![
            (0.2..0.95f64).prop_map(|p| StationLaw::bernoulli(p).unwrap()),
            (0.2..0.8f64).prop_map(|q| StationLaw::geometric(q).unwrap()),
        ],
        |n| {
            let r = build_surviving_radius_law(&n).unwrap();
            let mut prev = 1.0;
            for k in [3u64, 10, 31, 100, 316, 1000, 3162, 10_000, 100_000] {
                let p = r.ge(k);
                prop_assert!(p <= prev + 1e-15);
                prev = p;
                if n.ge(1) >= 2.0 / k as f64 {
                    prop_assert!(n.pgf(1.0 - p).unwrap() <= 1.0 - 2.0 / k as f64 + 1e-12);
                }
            }
            Ok(())
        },
    )
}

// ---- line criteria ----

pub fn firework_partial_sums_nondecreasing() -> Result<(), String> {
    check(cfg(24, 0x5eed_0003), &pair(), |(n, r)| {
        let s = firework_series_partial(&n, &r, 2000);
        prop_assert!(s.iter().all(|x| !x.is_nan()));
        prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
        Ok(())
    })
}

pub fn constant_radius_dies() -> Result<(), String> {
    check(cfg(24, 0x5eed_0003), &(1..40u64), |r| {
        let v = classify_firework_homogeneous(
            &StationLaw::deterministic(1),
            &RadiusLaw::deterministic(r as f64),
            10_000,
            DEFAULT_BAND,
        );
        prop_assert_eq!(v.outcome, Outcome::ExtinctionAS);
        Ok(())
    })
}

pub fn w_for_one_station_is_the_radius_tail_sum() -> Result<(), String> {
    check(
        cfg(24, 0x5eed_0003),
        &(0.05..0.9f64, 1.3..3.0f64),
        |(q, beta)| {
            let geo = RadiusLaw::geometric(q).unwrap();
            let w = reverse_w(&StationLaw::deterministic(1), &geo, 100_000, 1e-10);
            prop_assert!((w - 1.0 / (1.0 - q)).abs() < 1e-8, "{w}");
            let pow = RadiusLaw::Power {
                c: 1.0,
                beta,
                shift: 1.0,
            };
            let w = reverse_w(&StationLaw::deterministic(1), &pow, 100_000, 1e-10);
            let direct: f64 = (0..2_000_000u64).map(|n| pow.ge(n)).sum();
            let tail = 2_000_000f64.powf(1.0 - beta) / (beta - 1.0);
            prop_assert!((w - direct).abs() <= 2.0 * tail + 1e-6, "{w} {direct}");
            Ok(())
        },
    )
}

pub fn reverse_extinction_rules_out_firework_survival() -> Result<(), String> {
    check(cfg(24, 0x5eed_0003), &pair(), |(n, r)| {
        let rev = classify_reverse_homogeneous(&n, &r, 20_000, 1e-8);
        if rev.outcome == Outcome::ExtinctionAS {
            let fw = classify_firework_homogeneous(&n, &r, 20_000, DEFAULT_BAND);
            prop_assert!(fw.outcome != Outcome::SurvivalAS);
            prop_assert!(
                fw.outcome != Outcome::SurvivalPositive,
                "{n:?} {r:?} {fw:?}"
            );
        }
        Ok(())
    })
}

// ---- tree criteria ----

pub fn phi2_below_phi1_and_increasing() -> Result<(), String> {
    check(
        cfg(24, 0x5eed_0004),
        &(light_station(), 0.1..0.8f64, 1.0..3.0f64, 0.01..0.5f64),
        |(n, q, m, dm)| {
            let r = RadiusLaw::geometric(q).unwrap();
            let (a1, a2, b2) = (
                phi1(&n, &r, m, 1e-12),
                phi2(&n, &r, m, 1e-12),
                phi2(&n, &r, m + dm, 1e-12),
            );
            if a1.is_finite() {
                prop_assert!(a2 <= a1 + 1e-12);
            }
            if b2.is_finite() {
                prop_assert!(b2 > a2);
            }
            Ok(())
        },
    )
}

pub fn lower_critical_value_is_the_phi2_root() -> Result<(), String> {
    check(
        cfg(24, 0x5eed_0004),
        &(light_station(), 0.1..0.8f64),
        |(n, q)| {
            let r = RadiusLaw::geometric(q).unwrap();
            let tol = 1e-10;
            let cv = critical_values(&n, &r, tol);
            prop_assert!(
                1.0 - 1e-12 <= cv.lower && cv.lower <= cv.upper + 1e-12,
                "{cv:?}"
            );
            if cv.lower > 1.0 && cv.lower < cv.upper {
                prop_assert!(phi2(&n, &r, cv.lower, 1e-13) <= 1.0 + 1e-8);
                prop_assert!(phi2(&n, &r, cv.lower + 10.0 * tol.max(1e-7), 1e-13) > 1.0);
            }
            Ok(())
        },
    )
}

pub fn lower_critical_value_nonincreasing_in_p() -> Result<(), String> {
    check(
        cfg(24, 0x5eed_0004),
        &(0.1..0.85f64, 0.01..0.1f64, 0.2..0.8f64),
        |(p, dp, q)| {
            let r = RadiusLaw::geometric(q).unwrap();
            let a = critical_values(&StationLaw::bernoulli(p).unwrap(), &r, 1e-10).lower;
            let b = critical_values(&StationLaw::bernoulli(p + dp).unwrap(), &r, 1e-10).lower;
            prop_assert!(b <= a + 1e-8, "{a} {b}");
            Ok(())
        },
    )
}

// ---- line simulation ----

pub fn line_runs_match_graph_components() -> Result<(), String> {
    check(
        cfg(256, 0x5eed_0005),
        &prop::collection::vec(0..6u64, 2..51),
        |radii| {
            let h = radii.len() as u64 - 1;
            let n = radii.len();
            let (_, fw) = firework_on_radii(&radii, true, h);
            prop_assert_eq!(fw, line_component(n, |w, v| (v - w) as u64 <= radii[w]));
            let (_, rev) = reverse_on_radii(&radii, h);
            prop_assert_eq!(rev, line_component(n, |w, v| (v - w) as u64 <= radii[v]));
            Ok(())
        },
    )
}

pub fn raising_radii_never_shrinks_the_run() -> Result<(), String> {
    check(
        cfg(256, 0x5eed_0005),
        &(
            prop::collection::vec(0..6u64, 2..51),
            prop::collection::vec(0..3u64, 51),
        ),
        |(radii, bumps)| {
            let h = radii.len() as u64 - 1;
            let big: Vec<u64> = radii.iter().zip(&bumps).map(|(r, b)| r + b).collect();
            prop_assert!(
                firework_on_radii(&big, true, h).0.max_activated_index
                    >= firework_on_radii(&radii, true, h).0.max_activated_index
            );
            prop_assert!(
                reverse_on_radii(&big, h).0.max_activated_index
                    >= reverse_on_radii(&radii, h).0.max_activated_index
            );
            Ok(())
        },
    )
}

pub fn larger_radius_law_couples_upward() -> Result<(), String> {
    check(
        cfg(48, 0x5eed_0006),
        &(1..3u64, 0.1..0.7f64, 0.0..0.25f64, any::<u64>()),
        |(k, q, dq, seed)| {
            let small = LineLaws::homogeneous(
                StationLaw::deterministic(k),
                RadiusLaw::geometric(q).unwrap(),
            );
            let large = LineLaws::homogeneous(
                StationLaw::deterministic(k),
                RadiusLaw::geometric(q + dq).unwrap(),
            );
            let env = gen_line_env(&small, 400, seed).unwrap();
            let a = run_firework_line(&env, &small, 300, seed ^ 1).unwrap();
            let b = run_firework_line(&env, &large, 300, seed ^ 1).unwrap();
            prop_assert!(b.max_activated_index >= a.max_activated_index);
            let a = run_reverse_line(&env, &small, 300, seed ^ 2).unwrap();
            let b = run_reverse_line(&env, &large, 300, seed ^ 2).unwrap();
            prop_assert!(b.max_activated_index >= a.max_activated_index);
            Ok(())
        },
    )
}

pub fn line_replay() -> Result<(), String> {
    check(
        cfg(48, 0x5eed_0006),
        &(pair(), any::<u64>(), any::<u64>()),
        |((n, r), env_seed, proc)| {
            let laws = LineLaws::homogeneous(n, r);
            let env = gen_line_env(&laws, 300, env_seed).unwrap();
            prop_assert_eq!(env.clone(), gen_line_env(&laws, 300, env_seed).unwrap());
            prop_assert_eq!(
                run_firework_line(&env, &laws, 300, proc).unwrap(),
                run_firework_line(&env, &laws, 300, proc).unwrap()
            );
            prop_assert_eq!(
                run_reverse_line(&env, &laws, 300, proc).unwrap(),
                run_reverse_line(&env, &laws, 300, proc).unwrap()
            );
            Ok(())
        },
    )
}

// ---- tree simulation ----

struct Vertex {
    depth: u32,
    parent: Option<usize>,
    radius: u64,
}

/// Labelled tree to `depth` levels, radii drawn exactly as the engines draw them.
fn explicit_tree(
    key: &TreeEnvKey,
    r: &RadiusLaw,
    depth: u32,
    seed: u64,
) -> (Vec<Vertex>, Vec<u64>) {
    let mut vs = Vec::new();
    let mut hashes = Vec::new();
    let mut stack = vec![(ROOT_HASH, 0u32, None)];
    while let Some((hash, d, parent)) = stack.pop() {
        let (children, label) = gw_vertex(key, hash, d);
        let radius = r.sample_max(StreamKey::new(seed, StreamTag::Radius).uniform(hash), label);
        let id = vs.len();
        vs.push(Vertex {
            depth: d,
            parent,
            radius,
        });
        hashes.push(hash);
        if d < depth {
            for i in 0..children {
                stack.push((child_hash(hash, i), d + 1, Some(id)));
            }
        }
    }
    (vs, hashes)
}

fn tree_component(vs: &[Vertex], firework: bool) -> Vec<bool> {
    let ancestors = |v: usize| {
        let mut out = Vec::new();
        let mut cur = vs[v].parent;
        while let Some(a) = cur {
            out.push(a);
            cur = vs[a].parent;
        }
        out
    };
    let mut active = vec![false; vs.len()];
    active[0] = true;
    // vertices come in DFS preorder, so ancestors are settled first
    for v in 1..vs.len() {
        active[v] = ancestors(v).into_iter().any(|w| {
            let dist = (vs[v].depth - vs[w].depth) as u64;
            active[w] && dist <= if firework { vs[w].radius } else { vs[v].radius }
        });
    }
    active
}

pub fn tree_runs_match_graph_components() -> Result<(), String> {
    check(
        cfg(48, 0x5eed_0007),
        &(any::<u64>(), any::<u64>(), 1.0..2.5f64, 0.2..0.8f64),
        |(env_seed, seed, lambda, q)| {
            let offspring =
                OffspringLaw::new(rumorlab::dist::OffspringSpec::Poisson { lambda }).unwrap();
            let n = StationLaw::bernoulli(0.7).unwrap();
            let r = RadiusLaw::geometric(q).unwrap();
            let depth = 6;
            let mut run = TreeRun::new(depth, 1 << 20);
            run.lookahead = false;

            let key = TreeEnvKey::new(env_seed, offspring.clone(), n.clone(), RootPolicy::SameAsN);
            let (vs, hashes) = explicit_tree(&key, &r, depth, seed);
            if vs[0].radius > 0 || gw_vertex(&key, ROOT_HASH, 0).1 > 0 {
                let (_, trace) = run_firework_tree_traced(&key, &r, run, seed).unwrap();
                let mut got: Vec<u64> = trace.iter().map(|t| t.hash).collect();
                let comp = tree_component(&vs, true);
                let mut want: Vec<u64> = hashes
                    .iter()
                    .zip(&comp)
                    .filter(|(_, a)| **a)
                    .map(|(h, _)| *h)
                    .collect();
                got.sort_unstable();
                want.sort_unstable();
                prop_assert_eq!(got, want);
            }

            let key = TreeEnvKey::new(env_seed, offspring, n, RootPolicy::MinPositiveAtom);
            let (vs, hashes) = explicit_tree(&key, &r, depth, seed);
            let (_, trace) = run_reverse_tree_traced(&key, &r, run, seed).unwrap();
            let mut got: Vec<u64> = trace.iter().map(|t| t.hash).collect();
            let comp = tree_component(&vs, false);
            let mut want: Vec<u64> = hashes
                .iter()
                .zip(&comp)
                .filter(|(_, a)| **a)
                .map(|(h, _)| *h)
                .collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
            Ok(())
        },
    )
}

pub fn quenched_tree_is_replayed_across_process_seeds() -> Result<(), String> {
    check(
        cfg(48, 0x5eed_0007),
        &(any::<u64>(), prop::collection::vec(any::<u64>(), 2..5)),
        |(env_seed, seeds)| {
            let offspring =
                OffspringLaw::new(rumorlab::dist::OffspringSpec::Poisson { lambda: 1.8 }).unwrap();
            let key = TreeEnvKey::new(
                env_seed,
                offspring,
                StationLaw::geometric(0.5).unwrap(),
                RootPolicy::SameAsN,
            );
            let r = RadiusLaw::geometric(0.6).unwrap();
            let mut seen: HashMap<u64, (u64, u64)> = HashMap::new();
            for s in seeds {
                let (_, trace) =
                    run_firework_tree_traced(&key, &r, TreeRun::new(8, 1 << 16), s).unwrap();
                for t in trace {
                    let prev = seen.insert(t.hash, (t.children, t.label));
                    prop_assert!(prev.is_none_or(|p| p == (t.children, t.label)));
                }
            }
            Ok(())
        },
    )
}

pub fn larger_tree_radii_couple_upward() -> Result<(), String> {
    check(
        cfg(48, 0x5eed_0007),
        &(any::<u64>(), any::<u64>(), 0.1..0.6f64, 0.0..0.3f64),
        |(env_seed, seed, q, dq)| {
            let offspring =
                OffspringLaw::new(rumorlab::dist::OffspringSpec::Poisson { lambda: 1.5 }).unwrap();
            let (small, large) = (
                RadiusLaw::geometric(q).unwrap(),
                RadiusLaw::geometric(q + dq).unwrap(),
            );
            let mut run = TreeRun::new(10, 1 << 20);
            run.lookahead = false;
            let key = TreeEnvKey::new(
                env_seed,
                offspring.clone(),
                StationLaw::deterministic(1),
                RootPolicy::SameAsN,
            );
            let a = run_firework_tree(&key, &small, run, seed).unwrap();
            let b = run_firework_tree(&key, &large, run, seed).unwrap();
            prop_assert!(b.max_depth_activated >= a.max_depth_activated);
            prop_assert!(b.activated_count >= a.activated_count);
            let key = TreeEnvKey::new(
                env_seed,
                offspring,
                StationLaw::deterministic(1),
                RootPolicy::MinPositiveAtom,
            );
            let a = run_reverse_tree(&key, &small, run, seed).unwrap();
            let b = run_reverse_tree(&key, &large, run, seed).unwrap();
            prop_assert!(b.max_depth_activated >= a.max_depth_activated);
            prop_assert!(b.activated_count >= a.activated_count);
            Ok(())
        },
    )
}

// ---- estimator ----

pub fn estimates_shrink_with_the_horizon() -> Result<(), String> {
    check(
        cfg(8, 0x5eed_0008),
        &(any::<u64>(), 0.3..0.9f64, any::<bool>()),
        |(seed, p, reverse)| {
            // bounded radii: the run to a longer horizon extends the shorter one
            let process = if reverse {
                Process::Reverse
            } else {
                Process::Firework
            };
            let sc = Scenario::line(
                process,
                StationLaw::bernoulli(p).unwrap(),
                RadiusLaw::TwoPoint { r: 3.0, p: 0.8 },
            );
            let mut prev = u64::MAX;
            for h in [5u64, 10, 20, 40, 80] {
                let e = estimate_annealed(&sc, &McSettings::new(300, h, seed)).unwrap();
                prop_assert!(e.successes <= prev);
                prev = e.successes;
            }
            Ok(())
        },
    )
}

pub fn divergent_w_environments_always_reach() -> Result<(), String> {
    check(
        cfg(8, 0x5eed_0008),
        &(any::<u64>(), any::<u64>()),
        |(env_seed, seed)| {
            let r = RadiusLaw::Power {
                c: 1.0,
                beta: 1.0,
                shift: 1.0,
            };
            let sc = Scenario::line(Process::Reverse, StationLaw::deterministic(1), r);
            let e = estimate_quenched(&sc, env_seed, &McSettings::new(100, 500, seed)).unwrap();
            prop_assert_eq!(e.successes, e.trials);
            Ok(())
        },
    )
}

#[allow(dead_code)]
pub type Check = (&'static str, fn() -> Result<(), String>);

#[allow(dead_code)]
pub const ALL: &[Check] = &[
    (
        "annealed_cdf_is_pgf_of_radius_cdf",
        annealed_cdf_is_pgf_of_radius_cdf,
    ),
    ("pgf_is_monotone_and_anchored", pgf_is_monotone_and_anchored),
    (
        "surviving_radius_law_inequality",
        surviving_radius_law_inequality,
    ),
    (
        "firework_partial_sums_nondecreasing",
        firework_partial_sums_nondecreasing,
    ),
    ("constant_radius_dies", constant_radius_dies),
    (
        "w_for_one_station_is_the_radius_tail_sum",
        w_for_one_station_is_the_radius_tail_sum,
    ),
    (
        "reverse_extinction_rules_out_firework_survival",
        reverse_extinction_rules_out_firework_survival,
    ),
    (
        "phi2_below_phi1_and_increasing",
        phi2_below_phi1_and_increasing,
    ),
    (
        "lower_critical_value_is_the_phi2_root",
        lower_critical_value_is_the_phi2_root,
    ),
    (
        "lower_critical_value_nonincreasing_in_p",
        lower_critical_value_nonincreasing_in_p,
    ),
    (
        "line_runs_match_graph_components",
        line_runs_match_graph_components,
    ),
    (
        "raising_radii_never_shrinks_the_run",
        raising_radii_never_shrinks_the_run,
    ),
    (
        "larger_radius_law_couples_upward",
        larger_radius_law_couples_upward,
    ),
    ("line_replay", line_replay),
    (
        "tree_runs_match_graph_components",
        tree_runs_match_graph_components,
    ),
    (
        "quenched_tree_is_replayed_across_process_seeds",
        quenched_tree_is_replayed_across_process_seeds,
    ),
    (
        "larger_tree_radii_couple_upward",
        larger_tree_radii_couple_upward,
    ),
    (
        "estimates_shrink_with_the_horizon",
        estimates_shrink_with_the_horizon,
    ),
    (
        "divergent_w_environments_always_reach",
        divergent_w_environments_always_reach,
    ),
];
