//! Generating-function criteria on Galton-Watson trees with offspring mean m.
//!
//! With D(n) = 1 - G_N(P(R < n)) = P(R~ >= n):
//!   Phi(t)  = sum_n P(R~ = n) t^n
//!   phi1(m) = sum_{n>=1} D(n) m^n
//!   phi2(m) = sum_{i>=1} D(i) m^i prod_{j<i} (1 - D(j))

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::dist::{OffspringLaw, RadiusLaw, SiteLaw, StationLaw};
use crate::error::{domain, Result};
use crate::num::ln_1m_exp;
use crate::series::{sum_series_adaptive, Convergence, Ladder, SeriesSum};
use crate::verdict::{Outcome, Verdict};

const FIRST_HORIZON: u64 = 64;
const MAX_HORIZON: u64 = 1 << 20;

/// Lazily extended tables of ln D(n) and ln prod_{j<n} (1 - D(j)).
struct Coeffs {
    site: SiteLaw,
    ln_d: RefCell<Vec<f64>>,
    ln_prod: RefCell<Vec<f64>>,
}

impl Coeffs {
    fn new(n_law: &StationLaw, r_law: &RadiusLaw) -> Self {
        Coeffs {
            site: SiteLaw::new(n_law.clone(), r_law.clone()),
            ln_d: RefCell::new(Vec::new()),
            ln_prod: RefCell::new(vec![0.0, 0.0]),
        }
    }

    fn ln_d(&self, n: u64) -> f64 {
        let mut t = self.ln_d.borrow_mut();
        while t.len() <= n as usize {
            let k = t.len() as u64;
            // D(0) = P(N >= 1), which is not P(R~ >= 0)
            t.push(self.site.ln_deficit(k));
        }
        t[n as usize]
    }

    /// ln prod_{j=1}^{i-1} G_N(P(R < j)).
    fn ln_prod(&self, i: u64) -> f64 {
        let have = self.ln_prod.borrow().len() as u64;
        for k in have..=i {
            let g = ln_1m_exp(self.ln_d(k - 1).min(0.0));
            let mut p = self.ln_prod.borrow_mut();
            let last = *p.last().unwrap();
            p.push(last + g);
        }
        self.ln_prod.borrow()[i as usize]
    }

    /// ln P(R~ = n) for n >= 1.
    fn ln_mass(&self, n: u64) -> f64 {
        let (a, b) = (self.ln_d(n), self.ln_d(n + 1));
        if a == f64::NEG_INFINITY {
            return a;
        }
        a + ln_1m_exp((b - a).min(0.0))
    }
}

fn adaptive(ln_term: impl Fn(u64) -> f64, tol: f64) -> SeriesSum {
    sum_series_adaptive(
        ln_term,
        1,
        FIRST_HORIZON,
        MAX_HORIZON,
        tol,
        &Ladder::default(),
    )
}

fn value_of(s: &SeriesSum) -> f64 {
    match s.convergence {
        Convergence::Undecided => f64::NAN,
        _ => s.value,
    }
}

fn ln_of(t: f64) -> f64 {
    if t == 0.0 {
        f64::NEG_INFINITY
    } else {
        t.ln()
    }
}

fn times_power(l: f64, n: u64, ln_t: f64) -> f64 {
    if l == f64::NEG_INFINITY {
        l
    } else {
        l + n as f64 * ln_t
    }
}

fn phi_firework_in(c: &Coeffs, t: f64, tol: f64) -> (f64, Option<SeriesSum>) {
    let phi0 = ln_1m_exp(c.ln_d(1).min(0.0)).exp();
    if t == 0.0 {
        return (phi0, None);
    }
    if t == 1.0 {
        return (1.0, None);
    }
    let ln_t = t.ln();
    let s = adaptive(|n| times_power(c.ln_mass(n), n, ln_t), tol);
    (phi0 + value_of(&s), Some(s))
}

/// Phi(t); +inf past the radius of convergence, NaN when undecidable at the
/// largest horizon tried.
pub fn phi_firework(n_law: &StationLaw, r_law: &RadiusLaw, t: f64, tol: f64) -> f64 {
    phi_firework_in(&Coeffs::new(n_law, r_law), t.max(0.0), tol).0
}

fn phi1_in(c: &Coeffs, m: f64, tol: f64) -> SeriesSum {
    let ln_m = ln_of(m);
    adaptive(|n| times_power(c.ln_d(n), n, ln_m), tol)
}

fn phi2_in(c: &Coeffs, m: f64, tol: f64) -> SeriesSum {
    let ln_m = ln_of(m);
    adaptive(|i| times_power(c.ln_d(i) + c.ln_prod(i), i, ln_m), tol)
}

pub fn phi1(n_law: &StationLaw, r_law: &RadiusLaw, m: f64, tol: f64) -> f64 {
    value_of(&phi1_in(&Coeffs::new(n_law, r_law), m, tol))
}

pub fn phi2(n_law: &StationLaw, r_law: &RadiusLaw, m: f64, tol: f64) -> f64 {
    value_of(&phi2_in(&Coeffs::new(n_law, r_law), m, tol))
}

fn scope_note(v: Verdict, n_law: &StationLaw) -> Verdict {
    if n_law.pmf(0) == 0.0 {
        v.note("positive survival probability for almost every infinite tree with stations at the root")
    } else {
        v.note("P(N = 0) > 0: positivity holds for almost every infinite unlabelled tree, not every labelling")
    }
}

fn subcritical(m: f64, tag: &str) -> Verdict {
    Verdict::new(Outcome::ExtinctionAS, m, 1.0, tag, 0)
        .note("offspring mean <= 1: the tree is a.s. finite")
}

/// Firework on the tree. Extinction needs a degree bound k, taken from the
/// offspring law when it has one.
pub fn classify_firework_gw(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    offspring: &OffspringLaw,
    tol: f64,
) -> Verdict {
    classify_firework_gw_inner(n_law, r_law, offspring, offspring.max_degree(), tol)
}

/// As `classify_firework_gw` with an explicit degree bound k.
pub fn classify_firework_gw_bounded(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    offspring: &OffspringLaw,
    k: u64,
    tol: f64,
) -> Result<Verdict> {
    match offspring.max_degree() {
        None => Err(domain(
            "degree bound requested but the offspring law is unbounded",
        )),
        Some(d) if d > k => Err(domain(format!(
            "offspring law reaches degree {d} > k = {k}"
        ))),
        Some(_) => Ok(classify_firework_gw_inner(
            n_law,
            r_law,
            offspring,
            Some(k),
            tol,
        )),
    }
}

fn classify_firework_gw_inner(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    offspring: &OffspringLaw,
    k: Option<u64>,
    tol: f64,
) -> Verdict {
    let m = offspring.mean();
    if m <= 1.0 {
        return subcritical(m, "tree-firework-phi");
    }
    let c = Coeffs::new(n_law, r_law);
    let (phi0, _) = phi_firework_in(&c, 0.0, tol);
    let (phi_m, s) = phi_firework_in(&c, m, tol);
    let horizon = s.map_or(0, |s| s.horizon);
    let stat = phi_m - 1.0 - phi0;
    if stat > 0.0 {
        let v = Verdict::new(
            Outcome::SurvivalPositive,
            stat,
            0.0,
            "tree-firework-phi",
            horizon,
        )
        .note(format!("Phi(m) - 1 - Phi(0) at m = {m}"));
        return scope_note(v, n_law);
    }
    if let Some(k) = k {
        let (phi_k, s) = phi_firework_in(&c, k as f64, tol);
        let lhs = phi_k - 1.0;
        let rhs = 1.0 - 1.0 / k as f64;
        if lhs <= rhs {
            return Verdict::new(
                Outcome::ExtinctionAS,
                lhs,
                rhs,
                "tree-firework-phi",
                s.map_or(horizon, |s| s.horizon),
            )
            .note(format!("Phi(k) - 1 <= 1 - 1/k with k = {k}"));
        }
    }
    let v = Verdict::new(
        Outcome::Inconclusive,
        stat,
        0.0,
        "tree-firework-phi",
        horizon,
    );
    if stat.is_nan() {
        v.note("Phi(m) undecidable at the horizon")
    } else {
        v.note("between the survival and bounded-degree extinction conditions")
    }
}

pub fn classify_reverse_gw(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    offspring: &OffspringLaw,
    tol: f64,
) -> Verdict {
    let m = offspring.mean();
    if m <= 1.0 {
        return subcritical(m, "tree-reverse-phi");
    }
    let c = Coeffs::new(n_law, r_law);
    let s1 = phi1_in(&c, m, tol);
    match s1.convergence {
        Convergence::Divergent => {
            return Verdict::new(
                Outcome::SurvivalAS,
                f64::INFINITY,
                f64::INFINITY,
                "tree-reverse-phi",
                s1.horizon,
            )
            .note("phi1(m) = inf; conditioned on an infinite tree");
        }
        Convergence::Undecided => {
            return Verdict::new(
                Outcome::Inconclusive,
                f64::NAN,
                f64::INFINITY,
                "tree-reverse-phi",
                s1.horizon,
            )
            .note("phi1(m) undecidable at the horizon");
        }
        Convergence::Convergent => {}
    }
    let s2 = phi2_in(&c, m, tol);
    let p2 = s2.value;
    if p2 > 1.0 {
        let v = Verdict::new(
            Outcome::SurvivalPositive,
            p2,
            1.0,
            "tree-reverse-phi",
            s2.horizon,
        )
        .note(format!("phi1(m) = {:.6}", s1.value));
        scope_note(v, n_law)
    } else {
        Verdict::new(
            Outcome::ExtinctionAS,
            p2,
            1.0,
            "tree-reverse-phi",
            s2.horizon,
        )
        .note(format!("phi1(m) = {:.6}", s1.value))
    }
}

/// Values of the tree criteria at one offspring mean, plus the critical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCriteria {
    #[serde(rename = "PhiAtM", with = "crate::verdict::ext_real")]
    pub phi_at_m: f64,
    #[serde(rename = "Phi0")]
    pub phi0: f64,
    #[serde(rename = "phi1AtM", with = "crate::verdict::ext_real")]
    pub phi1_at_m: f64,
    #[serde(rename = "phi2AtM")]
    pub phi2_at_m: Option<f64>,
    #[serde(rename = "Mc", with = "crate::verdict::ext_real")]
    pub upper_critical: f64,
    #[serde(rename = "mc", with = "crate::verdict::ext_real")]
    pub lower_critical: f64,
    #[serde(rename = "mBarLowerFlag")]
    pub m_bar_is_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    /// M_c = 1 / limsup D(n)^(1/n).
    pub upper: f64,
    /// m_c, the root of phi2(m) = 1 in [1, M_c].
    pub lower: f64,
    /// The root limsup equals 1, so the firework threshold is 1.
    pub m_bar_is_one: bool,
    pub root_limsup: f64,
}

const ROOT_HORIZON: u64 = 10_000;

/// Decay rate of D over [h/2, h] as exp(slope of ln D).
fn root_rate(c: &Coeffs, h: u64) -> f64 {
    let (a, b) = (c.site.ln_deficit(h / 2), c.site.ln_deficit(h));
    if b == f64::NEG_INFINITY {
        return 0.0;
    }
    ((b - a) / (h - h / 2) as f64).exp().min(1.0)
}

fn critical_in(c: &Coeffs, tol: f64) -> CriticalValues {
    let (root, flag) = if c.site.annealed_bound().is_some() {
        (0.0, false)
    } else {
        let r1 = root_rate(c, ROOT_HORIZON);
        if r1 > 0.99 {
            let r4 = root_rate(c, 4 * ROOT_HORIZON);
            // sub-exponential decay: the gap to 1 keeps shrinking with the scale
            if r4 >= 1.0 || (1.0 - r4) < 0.5 * (1.0 - r1) {
                (1.0, true)
            } else {
                (r4, false)
            }
        } else {
            (r1, false)
        }
    };
    let upper = if root == 0.0 {
        f64::INFINITY
    } else {
        1.0 / root
    };
    let lower = lower_critical(c, upper, tol);
    CriticalValues {
        upper,
        lower,
        m_bar_is_one: flag,
        root_limsup: root,
    }
}

fn lower_critical(c: &Coeffs, upper: f64, tol: f64) -> f64 {
    if upper <= 1.0 {
        return 1.0;
    }
    let acc = tol * 1e-3;
    let above = |m: f64| {
        let s = phi2_in(c, m, acc);
        s.convergence == Convergence::Divergent || s.value > 1.0
    };
    if above(1.0) {
        return 1.0;
    }
    let mut hi = if upper.is_finite() {
        upper
    } else {
        let mut h = 2.0;
        while !above(h) {
            h *= 2.0;
            if h > 1e12 {
                return f64::INFINITY;
            }
        }
        h
    };
    if upper.is_finite() && !above(hi * (1.0 - 1e-12)) {
        return upper;
    }
    let mut lo = 1.0;
    while hi - lo > tol * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

pub fn critical_values(n_law: &StationLaw, r_law: &RadiusLaw, tol: f64) -> CriticalValues {
    critical_in(&Coeffs::new(n_law, r_law), tol)
}

pub fn tree_criteria(n_law: &StationLaw, r_law: &RadiusLaw, m: f64, tol: f64) -> TreeCriteria {
    let c = Coeffs::new(n_law, r_law);
    let (phi0, _) = phi_firework_in(&c, 0.0, tol);
    let (phi_at_m, _) = phi_firework_in(&c, m, tol);
    let s1 = phi1_in(&c, m, tol);
    let s2 = phi2_in(&c, m, tol);
    let crit = critical_in(&c, tol);
    TreeCriteria {
        phi_at_m,
        phi0,
        phi1_at_m: value_of(&s1),
        phi2_at_m: (s2.convergence == Convergence::Convergent).then_some(s2.value),
        upper_critical: crit.upper,
        lower_critical: crit.lower,
        m_bar_is_one: crit.m_bar_is_one,
    }
}

/// Reverse firework verdict read off the critical values.
pub fn classify_reverse_by_critical(crit: &CriticalValues, m: f64) -> Verdict {
    let (outcome, note) = if m <= 1.0 {
        (Outcome::ExtinctionAS, "offspring mean <= 1")
    } else if m <= crit.lower && crit.lower < crit.upper {
        (Outcome::ExtinctionAS, "m <= m_c")
    } else if m > crit.lower && m < crit.upper {
        (Outcome::SurvivalPositive, "m_c < m < M_c")
    } else if m > crit.upper {
        (Outcome::SurvivalAS, "m > M_c")
    } else {
        (Outcome::Inconclusive, "m at M_c")
    };
    Verdict::new(outcome, m, crit.lower, "tree-reverse-critical", 0).note(note)
}
