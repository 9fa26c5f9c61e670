//! Monte Carlo estimation of survival-to-horizon probabilities, an exact
//! Markov-chain oracle for bounded annealed radii on the line, and the
//! scenario panel that sets estimates against analytic verdicts.
//!
//! Replicate i draws its environment seed and process seed from
//! `derive_seed(master, i, ReplicateEnv)` and `derive_seed(master, i, ReplicateProc)`.
//! Replicates run on the rayon pool and are reduced in index order, so the
//! report does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::criteria_line::{
    classify_firework_heterogeneous, classify_firework_homogeneous, classify_firework_tail_regime,
    classify_reverse_heterogeneous, classify_reverse_homogeneous, DEFAULT_BAND,
};
use crate::criteria_tree::{classify_firework_gw, classify_reverse_gw};
use crate::dist::{OffspringLaw, SiteLaw, StationLaw};
use crate::error::{domain, Error, Result};
use crate::num::Kahan;
use crate::rng::{derive_seed, StreamKey, StreamTag, ROOT_HASH};
use crate::sim_line::{lazy_line_env, run_firework_line, run_reverse_line, Beyond, LineLaws};
use crate::sim_tree::{
    gw_vertex, run_firework_tree, run_firework_tree_annealed, run_reverse_tree,
    run_reverse_tree_annealed, RootPolicy, TreeEnvKey, TreeRun, DEFAULT_NODE_BUDGET,
};
use crate::verdict::{Outcome, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Firework,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "graph", rename_all = "snake_case")]
pub enum Scenario {
    Line {
        process: Process,
        laws: LineLaws,
    },
    Tree {
        process: Process,
        site: SiteLaw,
        offspring: OffspringLaw,
        /// Inclusive depth range with labels forced to 0.
        #[serde(default)]
        forced_zero: Option<(u32, u32)>,
        #[serde(default = "default_budget")]
        node_budget: u64,
    },
}

fn default_budget() -> u64 {
    DEFAULT_NODE_BUDGET
}

impl Scenario {
    pub fn line(process: Process, station: StationLaw, radius: crate::dist::RadiusLaw) -> Self {
        Scenario::Line {
            process,
            laws: LineLaws::homogeneous(station, radius),
        }
    }

    pub fn tree(
        process: Process,
        station: StationLaw,
        radius: crate::dist::RadiusLaw,
        offspring: OffspringLaw,
    ) -> Self {
        Scenario::Tree {
            process,
            site: SiteLaw::new(station, radius),
            offspring,
            forced_zero: None,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }

    pub fn process(&self) -> Process {
        match self {
            Scenario::Line { process, .. } | Scenario::Tree { process, .. } => *process,
        }
    }

    fn tree_key(&self, env_seed: u64) -> Option<TreeEnvKey> {
        let Scenario::Tree {
            process,
            site,
            offspring,
            forced_zero,
            ..
        } = self
        else {
            return None;
        };
        let root = match process {
            Process::Firework => RootPolicy::SameAsN,
            Process::Reverse => RootPolicy::MinPositiveAtom,
        };
        let mut key = TreeEnvKey::new(env_seed, offspring.clone(), site.station.clone(), root);
        key.forced_zero = *forced_zero;
        Some(key)
    }

    /// Whether the environment drawn from `env_seed` has stations at the origin.
    pub fn origin_occupied(&self, env_seed: u64) -> bool {
        match self {
            Scenario::Line { laws, .. } => {
                lazy_line_env(env_seed, 1, Beyond::Regenerate).count(laws, 0) > 0
            }
            Scenario::Tree { .. } => {
                let key = self.tree_key(env_seed).expect("tree scenario");
                // the reverse root policy fixes a positive label; look at N itself
                let key = TreeEnvKey {
                    root: RootPolicy::SameAsN,
                    ..key
                };
                gw_vertex(&key, ROOT_HASH, 0).1 > 0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Annealed,
    Quenched { env_seed: u64 },
    QuenchedPanel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    /// Replicates counted: budget-exhausted tree runs are left out.
    pub trials: u64,
    pub point_estimate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub confidence: f64,
    pub master_seed: u64,
    pub protocol: Protocol,
    pub exhausted: u64,
}

impl Estimate {
    fn from_counts(
        successes: u64,
        trials: u64,
        exhausted: u64,
        confidence: f64,
        master_seed: u64,
        protocol: Protocol,
    ) -> Self {
        let (point, lo, hi) = if trials == 0 {
            (f64::NAN, 0.0, 1.0)
        } else {
            let (lo, hi) = wilson_interval(successes, trials, confidence).expect("valid counts");
            (successes as f64 / trials as f64, lo, hi)
        };
        Estimate {
            successes,
            trials,
            point_estimate: point,
            wilson_lo: lo,
            wilson_hi: hi,
            confidence,
            master_seed,
            protocol,
            exhausted,
        }
    }

    /// True when more than 1% of replicates ran out of node budget.
    pub fn exhaustion_warning(&self) -> bool {
        self.exhausted * 100 > self.trials + self.exhausted
    }
}

/// Wilson score interval, clamped to [0, 1].
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(domain(format!("invalid counts {successes}/{trials}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    let lo = if successes == 0 {
        0.0
    } else {
        ((centre - half) / denom).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        ((centre + half) / denom).min(1.0)
    };
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Replicate {
    Success,
    Failure,
    Exhausted,
}

/// Shared settings of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub replicates: u64,
    pub horizon: u64,
    pub master_seed: u64,
    pub confidence: f64,
}

impl McSettings {
    pub fn new(replicates: u64, horizon: u64, master_seed: u64) -> Self {
        McSettings {
            replicates,
            horizon,
            master_seed,
            confidence: 0.95,
        }
    }

    fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(domain("replicates must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(domain("horizon must be >= 1"));
        }
        if self.horizon > u32::MAX as u64 {
            return Err(domain("horizon too large"));
        }
        Ok(())
    }
}

fn tally(results: &[Replicate]) -> (u64, u64, u64) {
    let s = results.iter().filter(|r| **r == Replicate::Success).count() as u64;
    let f = results.iter().filter(|r| **r == Replicate::Failure).count() as u64;
    (s, s + f, results.len() as u64 - s - f)
}

fn tree_replicate(
    scenario: &Scenario,
    env_seed: u64,
    horizon: u32,
    proc_seed: u64,
    annealed: bool,
) -> Result<Replicate> {
    let Scenario::Tree {
        process,
        site,
        offspring,
        forced_zero,
        node_budget,
    } = scenario
    else {
        unreachable!("tree scenario expected")
    };
    let out = if annealed && forced_zero.is_none() {
        match process {
            Process::Firework => run_firework_tree_annealed(offspring, site, horizon, proc_seed)?,
            Process::Reverse => run_reverse_tree_annealed(offspring, site, horizon, proc_seed)?,
        }
    } else {
        let key = scenario.tree_key(env_seed).expect("tree scenario");
        let run = TreeRun {
            depth_horizon: horizon,
            node_budget: *node_budget,
            stop_on_reach: true,
            lookahead: true,
        };
        match process {
            Process::Firework => run_firework_tree(&key, &site.radius, run, proc_seed)?,
            Process::Reverse => run_reverse_tree(&key, &site.radius, run, proc_seed)?,
        }
    };
    Ok(if out.reached(horizon) {
        Replicate::Success
    } else if out.budget_exhausted {
        Replicate::Exhausted
    } else {
        Replicate::Failure
    })
}

fn line_replicate(
    process: Process,
    laws: &LineLaws,
    env_seed: u64,
    beyond: Beyond,
    horizon: u64,
    proc_seed: u64,
) -> Result<Replicate> {
    let env = lazy_line_env(env_seed, horizon, beyond);
    let out = match process {
        Process::Firework => run_firework_line(&env, laws, horizon, proc_seed)?,
        Process::Reverse => run_reverse_line(&env, laws, horizon, proc_seed)?,
    };
    Ok(if out.reached_horizon {
        Replicate::Success
    } else {
        Replicate::Failure
    })
}

fn run_replicates(
    scenario: &Scenario,
    s: &McSettings,
    env_seed: Option<u64>,
) -> Result<Vec<Replicate>> {
    s.check()?;
    (0..s.replicates)
        .into_par_iter()
        .map(|i| {
            let proc_seed = derive_seed(s.master_seed, i, StreamTag::ReplicateProc);
            let (env, annealed) = match env_seed {
                Some(e) => (e, false),
                None => (derive_seed(s.master_seed, i, StreamTag::ReplicateEnv), true),
            };
            match scenario {
                Scenario::Line { process, laws } => {
                    let beyond = if annealed {
                        Beyond::Average
                    } else {
                        Beyond::Regenerate
                    };
                    line_replicate(*process, laws, env, beyond, s.horizon, proc_seed)
                }
                Scenario::Tree { .. } => {
                    tree_replicate(scenario, env, s.horizon as u32, proc_seed, annealed)
                }
            }
        })
        .collect()
}

/// Fresh environment and radii for every replicate.
pub fn estimate_annealed(scenario: &Scenario, s: &McSettings) -> Result<Estimate> {
    let r = run_replicates(scenario, s, None)?;
    let (succ, trials, ex) = tally(&r);
    Ok(Estimate::from_counts(
        succ,
        trials,
        ex,
        s.confidence,
        s.master_seed,
        Protocol::Annealed,
    ))
}

/// One environment, regenerated from `env_seed`; only radii vary.
pub fn estimate_quenched(scenario: &Scenario, env_seed: u64, s: &McSettings) -> Result<Estimate> {
    let r = run_replicates(scenario, s, Some(env_seed))?;
    let (succ, trials, ex) = tally(&r);
    Ok(Estimate::from_counts(
        succ,
        trials,
        ex,
        s.confidence,
        s.master_seed,
        Protocol::Quenched { env_seed },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub env_seed: u64,
    pub estimate: Estimate,
}

/// Quenched estimates on `size` environments with stations at the origin.
/// Environment seeds come from the Panel stream of the master seed; seeds
/// with an empty origin are skipped.
pub fn run_quenched_panel(
    scenario: &Scenario,
    size: usize,
    s: &McSettings,
) -> Result<Vec<PanelEntry>> {
    let mut seeds = Vec::with_capacity(size);
    let mut j = 0u64;
    while seeds.len() < size {
        if j > 1000 * size as u64 + 1000 {
            return Err(domain(
                "origin is almost never occupied; panel cannot be filled",
            ));
        }
        let e = derive_seed(s.master_seed, j, StreamTag::Panel);
        if scenario.origin_occupied(e) {
            seeds.push(e);
        }
        j += 1;
    }
    seeds
        .into_iter()
        .map(|e| {
            let inner = McSettings {
                master_seed: StreamKey::new(s.master_seed, StreamTag::Panel).word2(e, 1),
                ..*s
            };
            let mut est = estimate_quenched(scenario, e, &inner)?;
            est.protocol = Protocol::QuenchedPanel;
            Ok(PanelEntry {
                env_seed: e,
                estimate: est,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub process: Process,
    /// pmf of the annealed radius on 0..=M.
    pub pmf: Vec<f64>,
    pub horizon: u64,
}

pub const ORACLE_MAX_RADIUS: usize = 64;
pub const ORACLE_MAX_HORIZON: u64 = 1_000_000;

/// Exact probability that the line process reaches `horizon`, for i.i.d.
/// annealed radii with the given pmf. Firework: chain on the excess of the
/// covered front over the current site. Reverse: chain on the gap to the last
/// active site, closed by the chance that someone past the horizon listens back.
pub fn exact_line_oracle(spec: &OracleSpec) -> Result<f64> {
    Ok(exact_line_oracle_ln(spec)?.exp())
}

/// Natural log of `exact_line_oracle`, usable when the probability underflows.
pub fn exact_line_oracle_ln(spec: &OracleSpec) -> Result<f64> {
    let pmf = &spec.pmf;
    if pmf.is_empty() || pmf.len() > ORACLE_MAX_RADIUS + 1 {
        return Err(Error::Unsupported(format!(
            "oracle needs a pmf on 0..=M with M <= {ORACLE_MAX_RADIUS}"
        )));
    }
    if spec.horizon == 0 || spec.horizon > ORACLE_MAX_HORIZON {
        return Err(domain(format!(
            "oracle horizon must lie in 1..={ORACLE_MAX_HORIZON}"
        )));
    }
    if pmf.iter().any(|p| !(*p >= 0.0)) || (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(domain("oracle pmf must be nonnegative and sum to 1"));
    }
    let m = pmf.len() - 1;
    // cdf[k] = P(R~ <= k)
    let mut cdf = Vec::with_capacity(m + 1);
    let mut acc = Kahan::default();
    for p in pmf {
        acc.add(*p);
        cdf.push(acc.value().min(1.0));
    }
    cdf[m] = 1.0;
    let ge = |k: usize| {
        if k == 0 {
            1.0
        } else if k > m {
            0.0
        } else {
            1.0 - cdf[k - 1]
        }
    };
    match spec.process {
        Process::Firework => {
            let mut pi = pmf.clone();
            let mut ln_mass = Kahan::default();
            for _ in 0..spec.horizon {
                let mut next = vec![0.0; m + 1];
                for e in 1..=m {
                    let w = pi[e];
                    if w == 0.0 {
                        continue;
                    }
                    // max(e - 1, R~)
                    next[e - 1] += w * cdf[e - 1];
                    for (k, slot) in next.iter_mut().enumerate().skip(e) {
                        *slot += w * pmf[k];
                    }
                }
                let total: f64 = next.iter().sum();
                if total == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                ln_mass.add(total.ln());
                pi = next.into_iter().map(|x| x / total).collect();
            }
            Ok(ln_mass.value())
        }
        Process::Reverse => {
            // pi[g]: gap g in 1..=m at the next site to be decided
            let mut pi = vec![0.0; m + 2];
            pi[1] = 1.0;
            let mut ln_mass = Kahan::default();
            for _ in 1..spec.horizon {
                let mut next = vec![0.0; m + 2];
                for g in 1..=m {
                    let w = pi[g];
                    if w == 0.0 {
                        continue;
                    }
                    next[1] += w * ge(g);
                    next[g + 1] += w * (1.0 - ge(g));
                }
                next[m + 1] = 0.0;
                let total: f64 = next.iter().sum();
                if total == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                ln_mass.add(total.ln());
                pi = next.into_iter().map(|x| x / total).collect();
            }
            let mut last = 0.0;
            for g in 1..=m {
                let none: f64 = (0..=m - g).map(|j| 1.0 - ge(g + j)).product();
                last += pi[g] * (1.0 - none);
            }
            Ok(if last > 0.0 {
                ln_mass.value() + last.ln()
            } else {
                f64::NEG_INFINITY
            })
        }
    }
}

/// Oracle spec for a homogeneous line scenario with bounded radii.
pub fn oracle_spec_for(scenario: &Scenario, horizon: u64) -> Option<OracleSpec> {
    let Scenario::Line {
        process,
        laws: LineLaws::Homogeneous(site),
    } = scenario
    else {
        return None;
    };
    let pmf = crate::dist::annealed_pmf(&site.station, &site.radius)?;
    Some(OracleSpec {
        process: *process,
        pmf,
        horizon,
    })
}

/// Criteria horizon and tolerance used by `analytic_verdict`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaSettings {
    pub horizon: u64,
    pub band: f64,
    pub tol: f64,
}

impl Default for CriteriaSettings {
    fn default() -> Self {
        CriteriaSettings {
            horizon: 100_000,
            band: DEFAULT_BAND,
            tol: 1e-8,
        }
    }
}

/// The analytic verdict for a scenario, dispatched to the matching classifier.
pub fn analytic_verdict(scenario: &Scenario, c: &CriteriaSettings) -> Verdict {
    match scenario {
        Scenario::Line {
            process: Process::Firework,
            laws: LineLaws::Homogeneous(site),
        } => {
            let v = classify_firework_homogeneous(&site.station, &site.radius, c.horizon, c.band);
            if v.outcome == Outcome::Inconclusive {
                if let Ok(t) =
                    classify_firework_tail_regime(&site.station, &site.radius, c.horizon, c.band)
                {
                    if t.outcome.is_decisive() {
                        return t;
                    }
                }
            }
            v
        }
        Scenario::Line {
            process: Process::Firework,
            laws: LineLaws::Family(f),
        } => classify_firework_heterogeneous(f, c.horizon.min(20_000)),
        Scenario::Line {
            process: Process::Reverse,
            laws: LineLaws::Homogeneous(site),
        } => classify_reverse_homogeneous(&site.station, &site.radius, c.horizon, c.tol),
        Scenario::Line {
            process: Process::Reverse,
            laws: LineLaws::Family(f),
        } => classify_reverse_heterogeneous(f, c.horizon.min(20_000), c.tol),
        Scenario::Tree {
            process,
            site,
            offspring,
            ..
        } => match process {
            Process::Firework => {
                classify_firework_gw(&site.station, &site.radius, offspring, c.tol)
            }
            Process::Reverse => classify_reverse_gw(&site.station, &site.radius, offspring, c.tol),
        },
    }
}

pub const DEFAULT_EXTINCTION_TOL: f64 = 0.05;

/// Whether a Monte Carlo estimate contradicts a decisive verdict.
/// Survival a.s. forbids any failure; positive survival is contradicted only by
/// zero successes in at least 100 trials; extinction by a Wilson lower bound
/// above `extinction_tol` (reaching a finite horizon stays possible).
pub fn contradicts(verdict: &Verdict, est: &Estimate, extinction_tol: f64) -> bool {
    if est.trials == 0 {
        return false;
    }
    match verdict.outcome {
        Outcome::SurvivalAS => est.successes < est.trials,
        Outcome::SurvivalPositive => est.successes == 0 && est.trials >= 100,
        Outcome::ExtinctionAS => est.wilson_lo > extinction_tol,
        Outcome::Inconclusive => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell {
    pub id: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub expected: Option<Outcome>,
    #[serde(default = "default_extinction_tol")]
    pub extinction_tol: f64,
}

fn default_extinction_tol() -> f64 {
    DEFAULT_EXTINCTION_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub id: String,
    pub verdict: Verdict,
    pub estimate: Estimate,
    pub mismatch: bool,
    /// Set when the cell names an expected outcome that the verdict differs from.
    pub unexpected: bool,
    pub seconds: f64,
}

/// One estimate and one verdict per grid cell. `protocol` selects annealed
/// or quenched estimation; for a panel protocol the first panel environment
/// is used per cell.
pub fn run_scenario_panel(
    grid: &[PanelCell],
    protocol: Protocol,
    s: &McSettings,
    c: &CriteriaSettings,
) -> Result<Vec<PanelRow>> {
    grid.iter()
        .enumerate()
        .map(|(k, cell)| {
            let start = std::time::Instant::now();
            let verdict = analytic_verdict(&cell.scenario, c);
            let cs = McSettings {
                master_seed: derive_seed(s.master_seed, k as u64, StreamTag::Panel),
                ..*s
            };
            let estimate = match protocol {
                Protocol::Annealed => estimate_annealed(&cell.scenario, &cs)?,
                Protocol::Quenched { env_seed } => {
                    estimate_quenched(&cell.scenario, env_seed, &cs)?
                }
                Protocol::QuenchedPanel => {
                    run_quenched_panel(&cell.scenario, 1, &cs)?
                        .remove(0)
                        .estimate
                }
            };
            let mismatch = contradicts(&verdict, &estimate, cell.extinction_tol);
            let unexpected = cell.expected.is_some_and(|e| e != verdict.outcome);
            Ok(PanelRow {
                id: cell.id.clone(),
                verdict,
                estimate,
                mismatch,
                unexpected,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RadiusLaw;

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        assert!(
            (lo - 0.404).abs() < 1e-3 && (hi - 0.596).abs() < 1e-3,
            "{lo} {hi}"
        );
        assert_eq!(wilson_interval(10, 10, 0.95).unwrap().1, 1.0);
        assert_eq!(wilson_interval(0, 10, 0.95).unwrap().0, 0.0);
        assert!(wilson_interval(11, 10, 0.95).is_err());
        assert!(wilson_interval(0, 0, 0.95).is_err());
    }

    #[test]
    fn trivial_estimates() {
        let s = McSettings::new(200, 50, 1);
        let dead = Scenario::line(
            Process::Firework,
            StationLaw::deterministic(1),
            RadiusLaw::deterministic(0.0),
        );
        assert_eq!(estimate_annealed(&dead, &s).unwrap().point_estimate, 0.0);
        let full = Scenario::line(
            Process::Firework,
            StationLaw::deterministic(1),
            RadiusLaw::deterministic(1.0),
        );
        assert_eq!(estimate_annealed(&full, &s).unwrap().point_estimate, 1.0);
        assert!(estimate_annealed(&full, &McSettings::new(0, 50, 1)).is_err());
    }

    #[test]
    fn oracle_closed_forms() {
        for p in [0.3, 0.8] {
            for process in [Process::Firework, Process::Reverse] {
                let v = exact_line_oracle(&OracleSpec {
                    process,
                    pmf: vec![1.0 - p, p],
                    horizon: 25,
                })
                .unwrap();
                assert!((v / p.powi(25) - 1.0).abs() < 1e-12, "{process:?} {v}");
            }
        }
        let big = OracleSpec {
            process: Process::Firework,
            pmf: vec![0.5, 0.5],
            horizon: 1_000_000,
        };
        let l = exact_line_oracle_ln(&big).unwrap();
        assert!((l - 1e6 * 0.5f64.ln()).abs() < 1e-6);
        assert!(matches!(
            exact_line_oracle(&OracleSpec {
                process: Process::Firework,
                pmf: vec![1.0 / 66.0; 66],
                horizon: 3
            }),
            Err(Error::Unsupported(_))
        ));
    }

    /// P(reach horizon) by enumerating every radius string on the sites in
    /// `weighted`; the other sites up to `len` get radius 0 and weight 1.
    fn brute(
        process: Process,
        pmf: &[f64],
        horizon: u64,
        weighted: std::ops::Range<usize>,
        len: usize,
    ) -> f64 {
        let k = pmf.len();
        let total = k.pow(weighted.len() as u32);
        let mut acc = 0.0;
        let mut radii = vec![0u64; len];
        for code in 0..total {
            let mut c = code;
            let mut w = 1.0;
            for r in radii[weighted.clone()].iter_mut() {
                *r = (c % k) as u64;
                w *= pmf[*r as usize];
                c /= k;
            }
            let hit = match process {
                Process::Firework => {
                    crate::sim_line::firework_on_radii(&radii, true, horizon)
                        .0
                        .reached_horizon
                }
                Process::Reverse => {
                    crate::sim_line::reverse_on_radii(&radii, horizon)
                        .0
                        .reached_horizon
                }
            };
            if hit {
                acc += w;
            }
        }
        acc
    }

    #[test]
    fn oracle_matches_enumeration() {
        let pmf = [0.2, 0.3, 0.5];
        let f = exact_line_oracle(&OracleSpec {
            process: Process::Firework,
            pmf: pmf.to_vec(),
            horizon: 10,
        })
        .unwrap();
        // radii of sites 0..=9 decide whether site 10 is covered: 3^10 strings
        let b = brute(Process::Firework, &pmf, 10, 0..10, 11);
        assert!((f - b).abs() < 1e-12, "{f} {b}");
        // reverse: sites 1..=10 plus two sites of lookahead
        let r = exact_line_oracle(&OracleSpec {
            process: Process::Reverse,
            pmf: pmf.to_vec(),
            horizon: 10,
        })
        .unwrap();
        let b = brute(Process::Reverse, &pmf, 10, 1..13, 13);
        assert!((r - b).abs() < 1e-12, "{r} {b}");
    }

    #[test]
    fn monte_carlo_agrees_with_oracle() {
        for process in [Process::Firework, Process::Reverse] {
            let r = RadiusLaw::from_pmf(&[0.1, 0.3, 0.6]).unwrap();
            let sc = Scenario::line(process, StationLaw::deterministic(1), r);
            let s = McSettings {
                confidence: 0.99,
                ..McSettings::new(5000, 50, 3)
            };
            let est = estimate_annealed(&sc, &s).unwrap();
            let exact = exact_line_oracle(&oracle_spec_for(&sc, 50).unwrap()).unwrap();
            assert!(
                est.wilson_lo <= exact && exact <= est.wilson_hi,
                "{process:?} {est:?} {exact}"
            );
        }
    }

    #[test]
    fn deterministic_environment_makes_protocols_agree() {
        let sc = Scenario::line(
            Process::Firework,
            StationLaw::deterministic(2),
            RadiusLaw::geometric(0.6).unwrap(),
        );
        let s = McSettings {
            confidence: 0.99,
            ..McSettings::new(3000, 40, 8)
        };
        let a = estimate_annealed(&sc, &s).unwrap();
        let q = estimate_quenched(&sc, 77, &s).unwrap();
        assert!(
            a.wilson_lo <= q.wilson_hi && q.wilson_lo <= a.wilson_hi,
            "{a:?} {q:?}"
        );
    }

    #[test]
    fn empty_origin_kills_quenched_firework() {
        let sc = Scenario::line(
            Process::Firework,
            StationLaw::bernoulli(0.5).unwrap(),
            RadiusLaw::deterministic(3.0),
        );
        let env = (0..).find(|e| !sc.origin_occupied(*e)).unwrap();
        let est = estimate_quenched(&sc, env, &McSettings::new(100, 10, 1)).unwrap();
        assert_eq!(est.successes, 0);
    }

    #[test]
    fn estimates_replay_and_shrink_with_horizon() {
        let sc = Scenario::line(
            Process::Firework,
            StationLaw::bernoulli(0.7).unwrap(),
            RadiusLaw::geometric(0.7).unwrap(),
        );
        let a = estimate_annealed(&sc, &McSettings::new(2000, 20, 5)).unwrap();
        assert_eq!(
            a,
            estimate_annealed(&sc, &McSettings::new(2000, 20, 5)).unwrap()
        );
        let mut prev = 1.0;
        for h in [5, 10, 20, 40, 80] {
            let e = estimate_annealed(&sc, &McSettings::new(2000, h, 5))
                .unwrap()
                .point_estimate;
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn panel_and_mismatch_rules() {
        assert!(run_scenario_panel(
            &[],
            Protocol::Annealed,
            &McSettings::new(10, 10, 1),
            &CriteriaSettings::default()
        )
        .unwrap()
        .is_empty());
        let v = |o| Verdict::new(o, 0.0, 1.0, "line-reverse-w", 10);
        let e = Estimate::from_counts(99, 100, 0, 0.95, 0, Protocol::Annealed);
        assert!(contradicts(&v(Outcome::SurvivalAS), &e, 0.05));
        assert!(!contradicts(&v(Outcome::SurvivalPositive), &e, 0.05));
        assert!(contradicts(&v(Outcome::ExtinctionAS), &e, 0.05));
        let z = Estimate::from_counts(0, 100, 0, 0.95, 0, Protocol::Annealed);
        assert!(contradicts(&v(Outcome::SurvivalPositive), &z, 0.05));
        assert!(!contradicts(&v(Outcome::Inconclusive), &z, 0.05));

        let cell = PanelCell {
            id: "geo".into(),
            scenario: Scenario::line(
                Process::Reverse,
                StationLaw::deterministic(1),
                RadiusLaw::geometric(0.5).unwrap(),
            ),
            expected: Some(Outcome::ExtinctionAS),
            extinction_tol: 0.05,
        };
        let rows = run_scenario_panel(
            &[cell],
            Protocol::Annealed,
            &McSettings::new(500, 200, 2),
            &CriteriaSettings::default(),
        )
        .unwrap();
        assert_eq!(rows[0].verdict.outcome, Outcome::ExtinctionAS);
        assert!(!rows[0].mismatch && !rows[0].unexpected);
    }

    #[test]
    fn quenched_panel_skips_empty_origins() {
        let sc = Scenario::line(
            Process::Firework,
            StationLaw::bernoulli(0.5).unwrap(),
            RadiusLaw::deterministic(2.0),
        );
        let p = run_quenched_panel(&sc, 10, &McSettings::new(20, 10, 4)).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|e| sc.origin_occupied(e.env_seed)));
    }

    #[test]
    fn tree_estimates() {
        let sc = Scenario::tree(
            Process::Reverse,
            StationLaw::deterministic(1),
            RadiusLaw::deterministic(1.0),
            OffspringLaw::deterministic(2),
        );
        assert_eq!(
            estimate_annealed(&sc, &McSettings::new(50, 20, 1))
                .unwrap()
                .point_estimate,
            1.0
        );
        let Scenario::Tree {
            site, offspring, ..
        } = sc
        else {
            unreachable!()
        };
        let forced = Scenario::Tree {
            process: Process::Firework,
            site: SiteLaw::new(
                StationLaw::bernoulli(0.5).unwrap(),
                RadiusLaw::deterministic(2.0),
            ),
            offspring: offspring.clone(),
            forced_zero: Some((1, 2)),
            node_budget: DEFAULT_NODE_BUDGET,
        };
        let q = estimate_annealed(&forced, &McSettings::new(300, 6, 1)).unwrap();
        assert_eq!(q.successes, 0);
        let _ = site;
    }
}
