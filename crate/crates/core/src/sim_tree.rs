//! Both processes on labelled Galton-Watson trees.
//!
//! Explicit engines expand a lazily generated labelled tree: the child count and
//! label of a vertex are pure functions of (env seed, path hash), so a fixed
//! environment is replayed exactly while radii vary with the process seed.
//! Signals only travel downward. Firework: v is active iff some active
//! ancestor u has depth(v) - depth(u) <= R~_u. Reverse: v is active iff
//! R~_v >= depth(v) - depth(nearest active ancestor).
//!
//! The annealed engines track generation counts instead of vertices and are
//! exact in law when labels are i.i.d.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dist::{OffspringLaw, RadiusLaw, SiteLaw, StationLaw};
use crate::error::{domain, Result};
use crate::rng::{child_hash, StreamKey, StreamTag, ROOT_HASH};

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

/// Population cap for the aggregated engines; beyond it counts stop being exact.
const POPULATION_CAP: u64 = 1 << 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RootPolicy {
    /// Root label drawn from N like any other vertex.
    #[default]
    SameAsN,
    /// Root label fixed at min{n >= 1 : P(N = n) > 0}.
    MinPositiveAtom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnvKey {
    pub env_seed: u64,
    pub offspring: OffspringLaw,
    pub n_law: StationLaw,
    pub root: RootPolicy,
    /// Inclusive depth range whose labels are forced to 0.
    pub forced_zero: Option<(u32, u32)>,
}

impl TreeEnvKey {
    pub fn new(
        env_seed: u64,
        offspring: OffspringLaw,
        n_law: StationLaw,
        root: RootPolicy,
    ) -> Self {
        TreeEnvKey {
            env_seed,
            offspring,
            n_law,
            root,
            forced_zero: None,
        }
    }

    pub fn with_forced_zero(mut self, lo: u32, hi: u32) -> Self {
        self.forced_zero = Some((lo, hi));
        self
    }
}

/// (child count, label) of the vertex with path hash `hash` at `depth`.
pub fn gw_vertex(key: &TreeEnvKey, hash: u64, depth: u32) -> (u64, u64) {
    let children = key
        .offspring
        .sample_u(StreamKey::new(key.env_seed, StreamTag::Offspring).uniform(hash));
    let label = if key
        .forced_zero
        .is_some_and(|(lo, hi)| (lo..=hi).contains(&depth))
    {
        0
    } else if depth == 0 && key.root == RootPolicy::MinPositiveAtom {
        key.n_law.min_positive_atom().unwrap_or(0)
    } else {
        key.n_law
            .sample_u(StreamKey::new(key.env_seed, StreamTag::Label).uniform(hash))
    };
    (children, label)
}

/// Path hash of a word given as child indices from the root.
pub fn vertex_hash(path: &[u32]) -> u64 {
    crate::rng::path_hash(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TreeSimOutcome {
    pub max_depth_activated: u32,
    pub activated_count: u64,
    pub nodes_expanded: u64,
    pub budget_exhausted: bool,
}

impl TreeSimOutcome {
    pub fn reached(&self, depth_horizon: u32) -> bool {
        self.activated_count > 0 && self.max_depth_activated >= depth_horizon
    }
}

/// One activated vertex of a traced run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub hash: u64,
    pub depth: u32,
    pub children: u64,
    pub label: u64,
    pub radius: u64,
    /// Depth of the nearest active ancestor (reverse), or of the activated
    /// ancestor whose radius reaches furthest (firework); None for the root.
    pub source_depth: Option<u32>,
}

/// Limits for an explicit run.
#[derive(Debug, Clone, Copy)]
pub struct TreeRun {
    pub depth_horizon: u32,
    pub node_budget: u64,
    /// Stop as soon as a vertex at the horizon is activated.
    pub stop_on_reach: bool,
    /// Reverse only: when nothing at depth h is active, decide in one draw
    /// whether some vertex deeper down activates.
    pub lookahead: bool,
}

impl TreeRun {
    pub fn new(depth_horizon: u32, node_budget: u64) -> Self {
        TreeRun {
            depth_horizon,
            node_budget,
            stop_on_reach: false,
            lookahead: true,
        }
    }

    fn check(&self) -> Result<()> {
        if self.depth_horizon == 0 {
            return Err(domain("depth horizon must be >= 1"));
        }
        if self.node_budget == 0 {
            return Err(domain("node budget must be >= 1"));
        }
        Ok(())
    }
}

fn tree_radius(r_law: &RadiusLaw, proc_seed: u64, hash: u64, label: u64) -> u64 {
    r_law.sample_max(
        StreamKey::new(proc_seed, StreamTag::Radius).uniform(hash),
        label,
    )
}

struct Frame {
    hash: u64,
    depth: u32,
    /// Firework: deepest covered depth so far. Reverse: depth of nearest active ancestor.
    carry: u64,
    source: u32,
}

pub fn run_firework_tree(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
) -> Result<TreeSimOutcome> {
    firework_dfs(key, r_law, run, proc_seed, None)
}

pub fn run_firework_tree_traced(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
) -> Result<(TreeSimOutcome, Vec<TraceEntry>)> {
    let mut trace = Vec::new();
    let out = firework_dfs(key, r_law, run, proc_seed, Some(&mut trace))?;
    Ok((out, trace))
}

fn firework_dfs(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<TreeSimOutcome> {
    run.check()?;
    let h = run.depth_horizon;
    let mut out = TreeSimOutcome::default();
    let (c0, l0) = gw_vertex(key, ROOT_HASH, 0);
    out.nodes_expanded = 1;
    if l0 == 0 {
        return Ok(out);
    }
    let mut stack: Vec<Frame> = Vec::new();
    let mut visit = |hash: u64,
                     depth: u32,
                     children: u64,
                     label: u64,
                     carry: u64,
                     source: Option<u32>,
                     stack: &mut Vec<Frame>,
                     out: &mut TreeSimOutcome| {
        let r = tree_radius(r_law, proc_seed, hash, label);
        let reach = depth as u64 + r;
        let (cover, src) = match source {
            Some(s) if reach <= carry => (carry, s),
            _ => (reach, depth),
        };
        out.activated_count += 1;
        out.max_depth_activated = out.max_depth_activated.max(depth);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceEntry {
                hash,
                depth,
                children,
                label,
                radius: r,
                source_depth: source,
            });
        }
        if depth < h && cover > depth as u64 {
            for i in (0..children).rev() {
                stack.push(Frame {
                    hash: child_hash(hash, i),
                    depth: depth + 1,
                    carry: cover,
                    source: src,
                });
            }
        }
    };
    visit(ROOT_HASH, 0, c0, l0, 0, None, &mut stack, &mut out);
    while let Some(f) = stack.pop() {
        if run.stop_on_reach && out.max_depth_activated >= h {
            break;
        }
        if out.nodes_expanded >= run.node_budget {
            out.budget_exhausted = true;
            break;
        }
        let (c, l) = gw_vertex(key, f.hash, f.depth);
        out.nodes_expanded += 1;
        visit(
            f.hash,
            f.depth,
            c,
            l,
            f.carry,
            Some(f.source),
            &mut stack,
            &mut out,
        );
    }
    Ok(out)
}

pub fn run_reverse_tree(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
) -> Result<TreeSimOutcome> {
    reverse_dfs(key, r_law, run, proc_seed, None)
}

pub fn run_reverse_tree_traced(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
) -> Result<(TreeSimOutcome, Vec<TraceEntry>)> {
    let mut trace = Vec::new();
    let out = reverse_dfs(key, r_law, run, proc_seed, Some(&mut trace))?;
    Ok((out, trace))
}

fn reverse_dfs(
    key: &TreeEnvKey,
    r_law: &RadiusLaw,
    run: TreeRun,
    proc_seed: u64,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<TreeSimOutcome> {
    run.check()?;
    let h = run.depth_horizon;
    // past this gap nobody below can listen back
    let max_gap = if key.n_law.ge(1) == 0.0 {
        Some(0)
    } else {
        r_law.bound()
    };
    let mut out = TreeSimOutcome {
        activated_count: 1,
        nodes_expanded: 1,
        ..Default::default()
    };
    let (c0, l0) = gw_vertex(key, ROOT_HASH, 0);
    if let Some(t) = trace.as_deref_mut() {
        t.push(TraceEntry {
            hash: ROOT_HASH,
            depth: 0,
            children: c0,
            label: l0,
            radius: 0,
            source_depth: None,
        });
    }
    let mut stack: Vec<Frame> = (0..c0)
        .rev()
        .map(|i| Frame {
            hash: child_hash(ROOT_HASH, i),
            depth: 1,
            carry: 0,
            source: 0,
        })
        .collect();
    // unattached vertices at depth h, by gap to their nearest active ancestor
    let mut frontier: BTreeMap<u64, u64> = BTreeMap::new();
    while let Some(f) = stack.pop() {
        if run.stop_on_reach && out.max_depth_activated >= h {
            break;
        }
        if out.nodes_expanded >= run.node_budget {
            out.budget_exhausted = true;
            break;
        }
        let (c, l) = gw_vertex(key, f.hash, f.depth);
        out.nodes_expanded += 1;
        let r = tree_radius(r_law, proc_seed, f.hash, l);
        let gap = f.depth as u64 - f.carry;
        let last = if r >= gap {
            out.activated_count += 1;
            out.max_depth_activated = out.max_depth_activated.max(f.depth);
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceEntry {
                    hash: f.hash,
                    depth: f.depth,
                    children: c,
                    label: l,
                    radius: r,
                    source_depth: Some(f.carry as u32),
                });
            }
            f.depth as u64
        } else {
            f.carry
        };
        if f.depth >= h {
            if last < h as u64 {
                *frontier.entry(h as u64 - last).or_default() += 1;
            }
            continue;
        }
        if max_gap.is_some_and(|m| f.depth as u64 + 1 - last > m) {
            continue;
        }
        for i in (0..c).rev() {
            stack.push(Frame {
                hash: child_hash(f.hash, i),
                depth: f.depth + 1,
                carry: last,
                source: 0,
            });
        }
    }
    let iid_below = key.forced_zero.is_none_or(|(_, hi)| hi < h);
    if run.lookahead
        && iid_below
        && !out.budget_exhausted
        && out.max_depth_activated < h
        && !frontier.is_empty()
    {
        let site = SiteLaw::new(key.n_law.clone(), r_law.clone());
        let counts: Vec<(u64, u64)> = frontier.into_iter().collect();
        if below_horizon_hit(&key.offspring, &site, h, &counts, proc_seed) {
            out.max_depth_activated = h;
            out.activated_count += 1;
        }
    }
    Ok(out)
}

fn aggregate_rng(proc_seed: u64) -> rand_chacha::ChaCha8Rng {
    StreamKey::new(proc_seed, StreamTag::Aggregate).generator(0)
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// P(R~ >= k), with P(R~ >= 0) = 1.
fn annealed_ge(site: &SiteLaw, k: u64) -> f64 {
    site.ln_annealed_ge(k).exp()
}

/// Annealed firework on a GW tree, tracked as counts per (depth, excess),
/// where excess = covered depth - own depth, capped at the horizon.
/// `nodes_expanded` reports the activated population; `budget_exhausted`
/// flags populations beyond 2^60.
pub fn run_firework_tree_annealed(
    offspring: &OffspringLaw,
    site: &SiteLaw,
    depth_horizon: u32,
    proc_seed: u64,
) -> Result<TreeSimOutcome> {
    if depth_horizon == 0 {
        return Err(domain("depth horizon must be >= 1"));
    }
    let h = depth_horizon as u64;
    let mut rng = aggregate_rng(proc_seed);
    let mut out = TreeSimOutcome::default();
    let root_label = site.station.sample(&mut rng);
    if root_label == 0 {
        return Ok(out);
    }
    let root_r = site.radius.sample_max(rng.random(), root_label).min(h);
    // gen[e] = activated vertices at the current depth with excess e
    let mut gen = vec![0u64; h as usize + 1];
    gen[root_r as usize] = 1;
    out.activated_count = 1;
    out.nodes_expanded = 1;
    let tails: Vec<f64> = (0..=h).map(|k| annealed_ge(site, k)).collect();
    for depth in 1..=h {
        let cap = (h - depth) as usize;
        let mut next = vec![0u64; cap + 1];
        for (e, &count) in gen.iter().enumerate().skip(1) {
            if count == 0 {
                continue;
            }
            // excess of a child: max(e - 1, R~), capped; peel off one level at a time
            let mut at_least = offspring.sample_sum(count, &mut rng);
            let mut prev_tail = 1.0;
            for k in e..=cap {
                if at_least == 0 {
                    break;
                }
                let q = if prev_tail > 0.0 {
                    tails[k] / prev_tail
                } else {
                    0.0
                };
                let more = binomial(at_least, q, &mut rng);
                next[k - 1] = next[k - 1].saturating_add(at_least - more);
                at_least = more;
                prev_tail = tails[k];
            }
            next[cap] = next[cap].saturating_add(at_least);
        }
        let total: u64 = next.iter().fold(0u64, |a, b| a.saturating_add(*b));
        if total == 0 {
            return Ok(out);
        }
        out.activated_count = out.activated_count.saturating_add(total);
        out.nodes_expanded = out.activated_count;
        out.max_depth_activated = depth as u32;
        if total > POPULATION_CAP {
            out.budget_exhausted = true;
            return Ok(out);
        }
        gen = next;
    }
    Ok(out)
}

/// Annealed reverse firework on a GW tree through purple generations: from
/// the purple vertices at depth t, the unattached population at relative
/// depth d has children that attach with probability P(R~ >= d).
pub fn run_reverse_tree_annealed(
    offspring: &OffspringLaw,
    site: &SiteLaw,
    depth_horizon: u32,
    proc_seed: u64,
) -> Result<TreeSimOutcome> {
    if depth_horizon == 0 {
        return Err(domain("depth horizon must be >= 1"));
    }
    let h = depth_horizon as usize;
    let mut rng = aggregate_rng(proc_seed);
    let tails: Vec<f64> = (0..=h as u64).map(|k| annealed_ge(site, k)).collect();
    let mut purple = vec![0u64; h + 1];
    purple[0] = 1;
    let mut frontier = Vec::new();
    let mut out = TreeSimOutcome {
        activated_count: 1,
        nodes_expanded: 1,
        ..Default::default()
    };
    for t in 0..h {
        if purple[t] == 0 {
            continue;
        }
        let mut unattached = purple[t];
        for d in 1..=h - t {
            let children = offspring.sample_sum(unattached, &mut rng);
            if children == 0 {
                break;
            }
            out.nodes_expanded = out.nodes_expanded.saturating_add(children);
            if children > POPULATION_CAP {
                out.budget_exhausted = true;
                return Ok(out);
            }
            let attached = binomial(children, tails[d], &mut rng);
            if attached > 0 {
                purple[t + d] = purple[t + d].saturating_add(attached);
                out.activated_count = out.activated_count.saturating_add(attached);
                out.max_depth_activated = out.max_depth_activated.max((t + d) as u32);
                if t + d == h {
                    return Ok(out);
                }
            }
            unattached = children - attached;
            if t + d == h && unattached > 0 {
                frontier.push(((h - t) as u64, unattached));
            }
        }
    }
    if !frontier.is_empty()
        && below_horizon_hit(offspring, site, depth_horizon, &frontier, proc_seed)
    {
        out.max_depth_activated = depth_horizon;
        out.activated_count += 1;
    }
    Ok(out)
}

/// P(nothing strictly below an unattached vertex with gap g ever listens
/// back), for g = 1..=h: f(g) = phi((1 - P(R~ >= g + 1)) f(g + 1)).
struct BelowTable {
    ln_f: Vec<f64>,
}

type BelowCache = Mutex<HashMap<String, Arc<OnceLock<Arc<BelowTable>>>>>;

fn below_table(offspring: &OffspringLaw, site: &SiteLaw, h: u32) -> Arc<BelowTable> {
    static CACHE: OnceLock<BelowCache> = OnceLock::new();
    let key = format!("{offspring:?}/{site:?}/{h}");
    let slot = {
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
        if map.len() > 256 {
            map.clear();
        }
        map.entry(key).or_default().clone()
    };
    slot.get_or_init(|| Arc::new(build_below(offspring, site, h as u64)))
        .clone()
}

const BELOW_MAX_DEPTH: u64 = 1 << 20;

fn build_below(offspring: &OffspringLaw, site: &SiteLaw, h: u64) -> BelowTable {
    let ge = |d: u64| annealed_ge(site, d);
    let m = offspring.mean();
    // lower start: 1 - E[listeners in the subtree of a vertex at gap g]
    let lower_start = |g: u64| {
        let mut sum = 0.0;
        let mut w = 1.0;
        for j in 1..=4096u64 {
            w *= m;
            let t = w * ge(g + j);
            sum += t;
            if t < 1e-18 * sum.max(1e-300) || (t == 0.0 && j > 64) {
                return (1.0 - sum).max(0.0);
            }
        }
        0.0
    };
    let mut depth = h + 64;
    loop {
        let (mut up, mut lo) = (1.0f64, lower_start(depth));
        let mut f_up = vec![0.0; h as usize];
        let mut f_lo = vec![0.0; h as usize];
        for g in (1..depth).rev() {
            let keep = 1.0 - ge(g + 1);
            up = offspring.pgf(keep * up);
            lo = offspring.pgf(keep * lo);
            if g <= h {
                f_up[g as usize - 1] = up;
                f_lo[g as usize - 1] = lo;
            }
        }
        let gap = f_up
            .iter()
            .zip(&f_lo)
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max);
        if gap < 1e-12 || depth >= BELOW_MAX_DEPTH {
            // the upper iterate is the exact answer for a finite lookahead window
            return BelowTable {
                ln_f: f_up.iter().map(|x| x.ln()).collect(),
            };
        }
        depth = (depth * 4).min(BELOW_MAX_DEPTH);
    }
}

fn below_horizon_hit(
    offspring: &OffspringLaw,
    site: &SiteLaw,
    h: u32,
    counts: &[(u64, u64)],
    proc_seed: u64,
) -> bool {
    let table = below_table(offspring, site, h);
    let ln_miss: f64 = counts
        .iter()
        .map(|&(g, c)| c as f64 * table.ln_f[g as usize - 1])
        .sum();
    let u = StreamKey::new(proc_seed, StreamTag::Lookahead).uniform(h as u64);
    u < -ln_miss.exp_m1()
}
