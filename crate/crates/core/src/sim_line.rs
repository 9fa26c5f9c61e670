//! Exact simulation of both processes on the half line.
//!
//! Only the annealed radius R~_i of each site is materialized. Firework:
//! frontier recursion on reach = max(i + R~_i) over activated i. Reverse:
//! gap recursion, x is active iff R~_x >= x - (last active before x).

use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::criteria_line::{classify_reverse_homogeneous, IndexedLawFamily, SiteRule};
use crate::dist::{RadiusLaw, SiteLaw, StationLaw};
use crate::error::{domain, Result};
use crate::num::{ln_neg_ln1m, Kahan};
use crate::rng::{StreamKey, StreamTag};
use crate::series::{sum_series, Convergence, Ladder};
use crate::verdict::Outcome;

/// Laws of (N_i, R_i) along the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineLaws {
    Homogeneous(SiteLaw),
    Family(IndexedLawFamily),
}

impl LineLaws {
    pub fn homogeneous(station: StationLaw, radius: RadiusLaw) -> Self {
        LineLaws::Homogeneous(SiteLaw::new(station, radius))
    }

    pub fn station(&self, i: u64) -> &StationLaw {
        match self {
            LineLaws::Homogeneous(s) => &s.station,
            LineLaws::Family(f) => f.station(i),
        }
    }

    pub fn radius(&self, i: u64) -> Cow<'_, RadiusLaw> {
        match self {
            LineLaws::Homogeneous(s) => Cow::Borrowed(&s.radius),
            LineLaws::Family(f) => Cow::Owned(f.radius(i)),
        }
    }

    /// A bound on every R_i, if one exists.
    pub fn radius_bound(&self) -> Option<u64> {
        match self {
            LineLaws::Homogeneous(s) => s.annealed_bound(),
            LineLaws::Family(f) => f.phases.iter().try_fold(0u64, |acc, ph| {
                let b = match ph {
                    SiteRule::Fixed { radius, .. } => radius.bound(),
                    SiteRule::GrowingTwoPoint { a, b, .. } => (*b == 0.0).then(|| a.floor() as u64),
                }?;
                Some(acc.max(b))
            }),
        }
    }

    /// True when station counts carry no randomness.
    fn deterministic_counts(&self) -> bool {
        let det = |s: &StationLaw| matches!(s, StationLaw::Deterministic { .. });
        match self {
            LineLaws::Homogeneous(s) => det(&s.station),
            LineLaws::Family(f) => f.phases.iter().all(|ph| match ph {
                SiteRule::Fixed { station, .. } | SiteRule::GrowingTwoPoint { station, .. } => {
                    det(station)
                }
            }),
        }
    }
}

/// What sites past the stored length are: redrawn from the environment key,
/// or integrated out (the environment is being resampled every replicate
/// anyway).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Beyond {
    #[default]
    Regenerate,
    Average,
}

/// A realization of the station counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineEnvironment {
    pub length: u64,
    pub station_counts: Vec<u64>,
    pub env_seed: u64,
    #[serde(default)]
    pub beyond: Beyond,
}

impl LineEnvironment {
    /// Count at site i; sites past the stored length are regenerated from the key.
    pub fn count(&self, laws: &LineLaws, i: u64) -> u64 {
        match self.station_counts.get(i as usize) {
            Some(c) => *c,
            None => draw_count(laws, self.env_seed, i),
        }
    }
}

fn draw_count(laws: &LineLaws, env_seed: u64, i: u64) -> u64 {
    let key = StreamKey::new(env_seed, StreamTag::StationCount);
    laws.station(i).sample_u(key.uniform(i))
}

pub fn gen_line_env(laws: &LineLaws, length: u64, env_seed: u64) -> Result<LineEnvironment> {
    if length == 0 {
        return Err(domain("environment length must be >= 1"));
    }
    let station_counts = (0..length).map(|i| draw_count(laws, env_seed, i)).collect();
    Ok(LineEnvironment {
        length,
        station_counts,
        env_seed,
        beyond: Beyond::Regenerate,
    })
}

/// Environment that keeps nothing in memory; every count is drawn on demand.
pub fn lazy_line_env(env_seed: u64, length: u64, beyond: Beyond) -> LineEnvironment {
    LineEnvironment {
        length,
        station_counts: Vec::new(),
        env_seed,
        beyond,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub reached_horizon: bool,
    pub max_activated_index: u64,
    pub activated_count: u64,
    pub steps_run: u64,
}

/// R~_i for one replicate.
pub fn annealed_radius(env: &LineEnvironment, laws: &LineLaws, i: u64, proc_seed: u64) -> u64 {
    let key = StreamKey::new(proc_seed, StreamTag::Radius);
    laws.radius(i)
        .sample_max(key.uniform(i), env.count(laws, i))
}

fn check_horizon(env: &LineEnvironment, horizon: u64) -> Result<()> {
    if horizon > env.length {
        return Err(domain(format!(
            "horizon {horizon} exceeds environment length {}",
            env.length
        )));
    }
    Ok(())
}

/// Firework on explicit radii; vertex 0 starts the process iff `root_active`.
pub fn firework_on_radii(
    radii: &[u64],
    root_active: bool,
    horizon: u64,
) -> (SimOutcome, Vec<bool>) {
    let mut active = vec![false; radii.len()];
    let mut out = SimOutcome {
        reached_horizon: false,
        max_activated_index: 0,
        activated_count: 0,
        steps_run: 0,
    };
    if !root_active || radii.is_empty() {
        return (out, active);
    }
    let mut reach = 0u64;
    let mut x = 0u64;
    while (x as usize) < radii.len() && x <= horizon && x <= reach {
        active[x as usize] = true;
        reach = reach.max(x.saturating_add(radii[x as usize]));
        out.activated_count += 1;
        out.max_activated_index = x;
        x += 1;
    }
    out.steps_run = x;
    out.reached_horizon = out.max_activated_index >= horizon;
    (out, active)
}

/// Reverse firework on explicit radii (index 0 is the root, active by fiat).
/// Radii past `horizon` act as lookahead: reaching means some active x >= horizon.
pub fn reverse_on_radii(radii: &[u64], horizon: u64) -> (SimOutcome, Vec<bool>) {
    let mut active = vec![false; radii.len().max(1)];
    active[0] = true;
    let mut out = SimOutcome {
        reached_horizon: horizon == 0,
        max_activated_index: 0,
        activated_count: 1,
        steps_run: 0,
    };
    let mut last = 0u64;
    for x in 1..radii.len() as u64 {
        out.steps_run = x;
        if radii[x as usize] >= x - last {
            active[x as usize] = true;
            last = x;
            out.activated_count += 1;
            out.max_activated_index = x;
            if x >= horizon {
                out.reached_horizon = true;
                break;
            }
        }
    }
    (out, active)
}

pub fn run_firework_line(
    env: &LineEnvironment,
    laws: &LineLaws,
    horizon: u64,
    proc_seed: u64,
) -> Result<SimOutcome> {
    check_horizon(env, horizon)?;
    let mut out = SimOutcome {
        reached_horizon: false,
        max_activated_index: 0,
        activated_count: 0,
        steps_run: 0,
    };
    if env.count(laws, 0) == 0 {
        return Ok(out);
    }
    let mut reach = 0u64;
    let mut x = 0u64;
    while x <= horizon && x <= reach {
        let r = annealed_radius(env, laws, x, proc_seed);
        reach = reach.max(x.saturating_add(r));
        out.activated_count += 1;
        out.max_activated_index = x;
        x += 1;
    }
    out.steps_run = x;
    out.reached_horizon = out.max_activated_index >= horizon;
    Ok(out)
}

/// Firework run that also returns R~ for every site it looked at.
pub fn run_firework_line_traced(
    env: &LineEnvironment,
    laws: &LineLaws,
    horizon: u64,
    proc_seed: u64,
) -> Result<(SimOutcome, Vec<u64>, Vec<bool>)> {
    check_horizon(env, horizon)?;
    let radii: Vec<u64> = (0..=horizon)
        .map(|i| annealed_radius(env, laws, i, proc_seed))
        .collect();
    let (out, active) = firework_on_radii(&radii, env.count(laws, 0) > 0, horizon);
    Ok((out, radii, active))
}

/// Sites scanned explicitly past the horizon when radii are unbounded and
/// the environment is held fixed.
const LOOKAHEAD_FACTOR: u64 = 16;

pub fn run_reverse_line(
    env: &LineEnvironment,
    laws: &LineLaws,
    horizon: u64,
    proc_seed: u64,
) -> Result<SimOutcome> {
    check_horizon(env, horizon)?;
    let bound = laws.radius_bound();
    let mut out = SimOutcome {
        reached_horizon: horizon == 0,
        max_activated_index: 0,
        activated_count: 1,
        steps_run: 0,
    };
    let mut last = 0u64;
    let mut x = 1u64;
    while x <= horizon {
        if bound.is_some_and(|m| x - last > m) {
            break;
        }
        if annealed_radius(env, laws, x, proc_seed) >= x - last {
            last = x;
            out.activated_count += 1;
            out.max_activated_index = x;
        }
        x += 1;
    }
    out.steps_run = x - 1;
    if last >= horizon {
        out.reached_horizon = true;
        return Ok(out);
    }
    // Look for an activation at some x > horizon.
    let hit = match (bound, laws) {
        (Some(m), _) => scan(env, laws, horizon + 1, last + m, last, proc_seed, &mut out),
        (None, LineLaws::Homogeneous(site))
            if env.beyond == Beyond::Average || laws.deterministic_counts() =>
        {
            thinning_hit(site, horizon + 1 - last, horizon + 1, horizon, proc_seed)
        }
        (None, laws) => {
            let far = horizon.saturating_mul(LOOKAHEAD_FACTOR);
            scan(env, laws, horizon + 1, far, last, proc_seed, &mut out).or_else(|| match laws {
                // realized counts up to `far`, averaged past it
                LineLaws::Homogeneous(site) => {
                    thinning_hit(site, far + 1 - last, far + 1, horizon, proc_seed)
                }
                LineLaws::Family(_) => None,
            })
        }
    };
    if let Some(at) = hit {
        out.reached_horizon = true;
        out.activated_count += 1;
        out.max_activated_index = at;
    }
    Ok(out)
}

fn scan(
    env: &LineEnvironment,
    laws: &LineLaws,
    from: u64,
    to: u64,
    last: u64,
    proc_seed: u64,
    out: &mut SimOutcome,
) -> Option<u64> {
    for x in from..=to {
        out.steps_run += 1;
        if annealed_radius(env, laws, x, proc_seed) >= x - last {
            return Some(x);
        }
    }
    None
}

/// Decides in one draw whether any site past the horizon activates, using
/// P(no site at distance >= d0 listens) = prod_{d >= d0} G_N(P(R < d)).
/// The position of that site is not sampled; the horizon is reported.
fn thinning_hit(site: &SiteLaw, d0: u64, need: u64, horizon: u64, proc_seed: u64) -> Option<u64> {
    let rate = match lookahead_tail(site, need) {
        None => return Some(horizon),
        Some(t) => t.suffix(d0),
    };
    let u = StreamKey::new(proc_seed, StreamTag::Lookahead).uniform(horizon);
    (u < -(-rate).exp_m1()).then_some(horizon)
}

/// Suffix sums of -ln G_N(P(R < d)); `rest` covers d > suffix.len().
struct LookaheadTail {
    suffix: Vec<f64>,
    rest: f64,
}

impl LookaheadTail {
    fn suffix(&self, d0: u64) -> f64 {
        let d0 = d0.max(1) as usize;
        self.suffix.get(d0 - 1).copied().unwrap_or(self.rest)
    }
}

type TailCache = Mutex<HashMap<String, Arc<OnceLock<Option<Arc<LookaheadTail>>>>>>;

/// Tail sums per site law, shared by all replicates. `None` means the series
/// diverges, so some site past any horizon listens almost surely.
fn lookahead_tail(site: &SiteLaw, need: u64) -> Option<Arc<LookaheadTail>> {
    static CACHE: OnceLock<TailCache> = OnceLock::new();
    let key = format!("{site:?}/{need}");
    let slot = {
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
        if map.len() > 256 {
            map.clear();
        }
        map.entry(key).or_default().clone()
    };
    slot.get_or_init(|| build_tail(site, need).map(Arc::new))
        .clone()
}

fn build_tail(site: &SiteLaw, need: u64) -> Option<LookaheadTail> {
    // sum -ln G diverges iff W does
    let v = classify_reverse_homogeneous(&site.station, &site.radius, need.max(10_000), 1e-8);
    if v.outcome == Outcome::SurvivalAS {
        return None;
    }
    let term = |d: u64| ln_neg_ln1m(site.ln_deficit(d));
    let h = need.max(4096) * 4;
    let s = sum_series(term, 1, h, &Ladder::default());
    let tail = match s.convergence {
        Convergence::Divergent if v.outcome == Outcome::Inconclusive => return None,
        Convergence::Convergent => s.tail,
        _ => 0.0,
    };
    let mut acc = Kahan::default();
    acc.add(tail);
    for d in (need + 1..=h).rev() {
        acc.add(term(d).exp());
    }
    let rest = acc.value();
    let mut suffix = vec![0.0; need as usize];
    for d in (1..=need).rev() {
        acc.add(term(d).exp());
        suffix[d as usize - 1] = acc.value();
    }
    Some(LookaheadTail { suffix, rest })
}

/// Reverse run returning the radii of sites 0..=horizon and the active set
/// among them (no lookahead).
pub fn run_reverse_line_traced(
    env: &LineEnvironment,
    laws: &LineLaws,
    horizon: u64,
    proc_seed: u64,
) -> Result<(SimOutcome, Vec<u64>, Vec<bool>)> {
    check_horizon(env, horizon)?;
    let radii: Vec<u64> = (0..=horizon)
        .map(|i| annealed_radius(env, laws, i, proc_seed))
        .collect();
    let (out, active) = reverse_on_radii(&radii, horizon);
    Ok((out, radii, active))
}
