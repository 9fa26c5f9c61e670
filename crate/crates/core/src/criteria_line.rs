//! Survival and extinction classifiers for the firework and reverse firework
//! processes on the half line.
//!
//! Homogeneous firework: the series sum_n prod_{i<=n} G_N(P(R < i+1)) decides
//! survival; the usable test statistic is a_n = n (1 - G_N(P(R < n))).
//! Reverse firework: W = sum_n (1 - G_N(P(R < n))).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{check_standing_assumption, RadiusLaw, SiteLaw, SlowlyVarying, StationLaw};
use crate::error::{domain, invalid, Result};
use crate::num::{ln_1m_exp, Kahan};
use crate::series::{sum_series, Convergence, Ladder, SeriesSum};
use crate::verdict::{Outcome, Verdict};

pub const DEFAULT_BAND: f64 = 0.1;

/// How the law at site i is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteRule {
    Fixed {
        station: StationLaw,
        radius: RadiusLaw,
    },
    /// N_i from `station`; R_i = a + b i, except R_i = 0 with probability
    /// min(1, c ratio^i).
    GrowingTwoPoint {
        station: StationLaw,
        a: f64,
        b: f64,
        c: f64,
        ratio: f64,
    },
}

/// Site laws indexed by i >= 0: site i follows `phases[i % phases.len()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexedLawFamily {
    pub phases: Vec<SiteRule>,
}

impl SiteRule {
    fn station(&self) -> &StationLaw {
        match self {
            SiteRule::Fixed { station, .. } | SiteRule::GrowingTwoPoint { station, .. } => station,
        }
    }
}

impl IndexedLawFamily {
    pub fn homogeneous(site: SiteLaw) -> Self {
        Self::periodic(vec![site])
    }

    pub fn periodic(sites: Vec<SiteLaw>) -> Self {
        IndexedLawFamily {
            phases: sites
                .into_iter()
                .map(|s| SiteRule::Fixed {
                    station: s.station,
                    radius: s.radius,
                })
                .collect(),
        }
    }

    pub fn period(&self) -> u64 {
        self.phases.len() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(invalid("law family needs at least one phase"));
        }
        for ph in &self.phases {
            match ph {
                SiteRule::Fixed { station, radius } => {
                    station.validate()?;
                    radius.validate()?;
                }
                SiteRule::GrowingTwoPoint {
                    station,
                    a,
                    b,
                    c,
                    ratio,
                } => {
                    station.validate()?;
                    if !(*a >= 0.0 && *b >= 0.0 && *c >= 0.0 && *ratio >= 0.0) {
                        return Err(invalid("two-point rule needs a, b, c, ratio >= 0"));
                    }
                }
            }
        }
        Ok(())
    }

    fn phase(&self, i: u64) -> &SiteRule {
        &self.phases[(i % self.period()) as usize]
    }

    /// The laws (N_i, R_i) of site i.
    pub fn site(&self, i: u64) -> SiteLaw {
        match self.phase(i) {
            SiteRule::Fixed { station, radius } => SiteLaw::new(station.clone(), radius.clone()),
            SiteRule::GrowingTwoPoint {
                station,
                a,
                b,
                c,
                ratio,
            } => {
                let zero = (c * ratio.powf(i as f64)).min(1.0);
                SiteLaw::new(
                    station.clone(),
                    RadiusLaw::TwoPoint {
                        r: a + b * i as f64,
                        p: 1.0 - zero,
                    },
                )
            }
        }
    }

    pub fn station(&self, i: u64) -> &StationLaw {
        self.phase(i).station()
    }

    pub fn radius(&self, i: u64) -> RadiusLaw {
        self.site(i).radius
    }
}

/// ln(1 - G_{N_i}(P(R_i < d))) with per-phase tables for the fixed phases.
struct DeficitTable<'a> {
    family: &'a IndexedLawFamily,
    fixed: Vec<Option<Vec<f64>>>,
}

impl<'a> DeficitTable<'a> {
    fn new(family: &'a IndexedLawFamily, max_d: u64) -> Self {
        let fixed = family
            .phases
            .iter()
            .map(|ph| match ph {
                SiteRule::Fixed { station, radius } => {
                    let site = SiteLaw::new(station.clone(), radius.clone());
                    Some((0..=max_d).map(|d| site.ln_deficit(d)).collect())
                }
                SiteRule::GrowingTwoPoint { .. } => None,
            })
            .collect();
        DeficitTable { family, fixed }
    }

    fn ln_deficit(&self, i: u64, d: u64) -> f64 {
        let p = (i % self.family.period()) as usize;
        if let Some(t) = &self.fixed[p] {
            if let Some(v) = t.get(d as usize) {
                return *v;
            }
        }
        match &self.family.phases[p] {
            SiteRule::GrowingTwoPoint {
                station,
                a,
                b,
                c,
                ratio,
            } => {
                let ln_ge = if d == 0 {
                    0.0
                } else if d as f64 <= a + b * i as f64 {
                    ln_1m_exp((c.ln() + i as f64 * ratio.ln()).min(0.0))
                } else {
                    f64::NEG_INFINITY
                };
                station.ln_one_minus_pgf(ln_ge)
            }
            SiteRule::Fixed { station, radius } => station.ln_one_minus_pgf(radius.ln_ge(d)),
        }
    }

    fn ln_g(&self, i: u64, d: u64) -> f64 {
        ln_1m_exp(self.ln_deficit(i, d).min(0.0))
    }
}

fn tail_window(horizon: u64) -> Vec<u64> {
    let lo = (horizon / 10).max(1);
    let pts = 24;
    let (a, b) = ((lo as f64).ln(), (horizon.max(lo) as f64).ln());
    let mut v: Vec<u64> = (0..pts)
        .map(|i| (a + (b - a) * i as f64 / (pts - 1) as f64).exp().round() as u64)
        .collect();
    v.dedup();
    v
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

fn standing_note(v: Verdict, n_law: &StationLaw, r_law: &RadiusLaw) -> Verdict {
    match check_standing_assumption(n_law, r_law) {
        Ok(()) => v,
        Err(e) => v.note(e.to_string()),
    }
}

/// ln of the k-th term prod_{i<=k} G_N(P(R < i+1)), k = 0..=horizon.
fn firework_ln_terms(site: &SiteLaw, horizon: u64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..=horizon)
        .map(|i| {
            acc += site.ln_g(i + 1);
            acc
        })
        .collect()
}

/// Partial sums S_0..=S_horizon of sum_k prod_{i<=k} G_N(P(R < i+1)).
pub fn firework_series_partial(n_law: &StationLaw, r_law: &RadiusLaw, horizon: u64) -> Vec<f64> {
    let site = SiteLaw::new(n_law.clone(), r_law.clone());
    let mut acc = Kahan::default();
    firework_ln_terms(&site, horizon.max(1))
        .into_iter()
        .map(|l| {
            acc.add(l.exp());
            acc.value()
        })
        .collect()
}

/// Window test on a_n, with a Kummer fallback (p_n = n + 2) near a_n = 1.
pub fn classify_firework_homogeneous(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    horizon: u64,
    band: f64,
) -> Verdict {
    let site = SiteLaw::new(n_law.clone(), r_law.clone());
    let window = tail_window(horizon);
    let a: Vec<f64> = window
        .iter()
        .map(|&n| ((n as f64).ln() + site.ln_deficit(n)).exp())
        .collect();
    let (lo, hi) = min_max(a.iter().copied());
    let v = if lo > 1.0 + band {
        Verdict::new(
            Outcome::SurvivalPositive,
            lo,
            1.0,
            "line-firework-surviving-bound",
            horizon,
        )
        .with_margin(band)
    } else if hi < 1.0 - band {
        Verdict::new(
            Outcome::ExtinctionAS,
            hi,
            1.0,
            "line-firework-dying-bound",
            horizon,
        )
        .with_margin(band)
    } else {
        // K_n = (n+2) u_n / u_{n+1} - (n+3), u the series terms.
        let kummer = min_max(window.iter().map(|&n| {
            let m = n + 2;
            ((m as f64).ln() + site.ln_deficit(m) - site.ln_g(m)).exp() - 1.0
        }));
        let kappa = band / 10.0;
        let nearest = a
            .iter()
            .copied()
            .min_by(|x, y| (x - 1.0).abs().total_cmp(&(y - 1.0).abs()))
            .unwrap_or(1.0);
        let note = format!(
            "Kummer statistic in [{:.4}, {:.4}] on the window",
            kummer.0, kummer.1
        );
        if kummer.0 > kappa {
            Verdict::new(
                Outcome::SurvivalPositive,
                nearest,
                1.0,
                "line-firework-series",
                horizon,
            )
            .with_margin(band)
            .note("decided by numerical Kummer test (heuristic)")
            .note(note)
        } else if kummer.1 < -kappa {
            Verdict::new(
                Outcome::ExtinctionAS,
                nearest,
                1.0,
                "line-firework-series",
                horizon,
            )
            .with_margin(band)
            .note("decided by numerical Kummer test (heuristic)")
            .note(note)
        } else {
            Verdict::new(
                Outcome::Inconclusive,
                nearest,
                1.0,
                "line-firework-surviving-bound",
                horizon,
            )
            .with_margin(band)
            .note(format!("a_n in [{lo:.4}, {hi:.4}] on the window"))
            .note(note)
        }
    };
    standing_note(v, n_law, r_law)
}

/// Test for power-tail station counts P(N > n) ~ n^-alpha L(n).
pub fn classify_firework_tail_regime(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    horizon: u64,
    band: f64,
) -> Result<Verdict> {
    let StationLaw::PowerTail { alpha, slowly } = n_law else {
        return Err(domain("tail-regime test needs a power-tail station law"));
    };
    let alpha = *alpha;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha = {alpha} outside (0, 1]")));
    }
    let expr = tail_regime_expression(alpha, slowly)?;
    let window = tail_window(horizon);
    let (lo, hi) = min_max(window.iter().map(|&n| {
        let ln_t = r_law.ln_ge(n);
        if ln_t == f64::NEG_INFINITY {
            0.0
        } else {
            ((n as f64).ln() + expr(ln_t)).exp()
        }
    }));
    let v = if lo > 1.0 + band {
        Verdict::new(
            Outcome::SurvivalPositive,
            lo,
            1.0,
            "line-firework-tail-regime",
            horizon,
        )
    } else if hi < 1.0 - band {
        Verdict::new(
            Outcome::ExtinctionAS,
            hi,
            1.0,
            "line-firework-tail-regime",
            horizon,
        )
    } else {
        let mid = if (lo - 1.0).abs() < (hi - 1.0).abs() {
            lo
        } else {
            hi
        };
        Verdict::new(
            Outcome::Inconclusive,
            mid,
            1.0,
            "line-firework-tail-regime",
            horizon,
        )
        .note(format!("expression in [{lo:.4}, {hi:.4}] on the window"))
    };
    Ok(v.with_margin(band))
}

/// ln of the regime expression divided by n, as a function of ln P(R >= n).
fn tail_regime_expression(
    alpha: f64,
    slowly: &SlowlyVarying,
) -> Result<Box<dyn Fn(f64) -> f64 + '_>> {
    if alpha < 1.0 {
        let g = ln_gamma(1.0 - alpha);
        return Ok(Box::new(move |ln_t| {
            alpha * ln_t + slowly.ln_eval_at_log(-ln_t) + g
        }));
    }
    // alpha = 1: P(N > n) ~ c (ln n)^beta / n, so 1 - G(1 - s) ~ c s ln(1/s)^(beta+1) / (beta+1)
    let beta = slowly.beta();
    if beta <= -1.0 {
        return Err(domain(
            "alpha = 1 with beta <= -1 has finite mean; use the a_n test",
        ));
    }
    let c = slowly.c();
    Ok(Box::new(move |ln_t| {
        c.ln() + ln_t + (beta + 1.0) * (-ln_t).ln() - (beta + 1.0).ln()
    }))
}

/// Sum of prod_{i<=n} G_{N_i}(P(R_i < n-i+1)); convergence gives survival.
pub fn classify_firework_heterogeneous(family: &IndexedLawFamily, horizon: u64) -> Verdict {
    let table = DeficitTable::new(family, horizon + 1);
    let ln_term = |n: u64| -> f64 {
        let mut s = 0.0;
        for i in 0..=n {
            s += table.ln_g(i, n - i + 1);
            if s == f64::NEG_INFINITY {
                break;
            }
        }
        s
    };
    let terms: Vec<f64> = (0..=horizon).map(ln_term).collect();
    let opts = Ladder {
        stride: family.period(),
        ..Ladder::default()
    };
    let s = sum_series(
        |n| terms.get(n as usize).copied().unwrap_or_else(|| ln_term(n)),
        0,
        horizon,
        &opts,
    );
    series_verdict(
        &s,
        Outcome::SurvivalPositive,
        Outcome::Inconclusive,
        "line-firework-heterogeneous",
    )
}

fn series_verdict(s: &SeriesSum, on_conv: Outcome, on_div: Outcome, tag: &str) -> Verdict {
    let outcome = match s.convergence {
        Convergence::Convergent => on_conv,
        Convergence::Divergent => on_div,
        Convergence::Undecided => Outcome::Inconclusive,
    };
    let v = Verdict::new(outcome, s.value, f64::INFINITY, tag, s.horizon);
    match s.convergence {
        Convergence::Convergent => v.note(format!("tail estimate {:.3e}", s.tail)),
        Convergence::Divergent => v.note("terms admit a c/n lower envelope"),
        Convergence::Undecided => v.note(format!(
            "no decision: Bertrand exponent in [{:.3}, {:.3}], local power {:.3}",
            s.bertrand.0, s.bertrand.1, s.power
        )),
    }
}

/// W with convergence diagnostics. Geometric-looking tails are extended
/// until the tail estimate is below tol.
pub fn reverse_w_series(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    horizon: u64,
    tol: f64,
) -> SeriesSum {
    let site = SiteLaw::new(n_law.clone(), r_law.clone());
    let f = |n: u64| site.ln_deficit(n);
    if let Some(m) = site.annealed_bound() {
        if m < horizon {
            return sum_series(f, 0, horizon, &Ladder::default());
        }
    }
    let mut h = horizon;
    loop {
        let s = sum_series(f, 0, h, &Ladder::default());
        if s.convergence != Convergence::Convergent
            || s.tail <= tol
            || s.power < 20.0
            || h >= 16 * horizon
        {
            return s;
        }
        h *= 4;
    }
}

/// W = sum_{n>=0} (1 - G_N(P(R < n))), +inf when divergent.
pub fn reverse_w(n_law: &StationLaw, r_law: &RadiusLaw, horizon: u64, tol: f64) -> f64 {
    let s = reverse_w_series(n_law, r_law, horizon, tol);
    match s.convergence {
        Convergence::Undecided => f64::NAN,
        _ => s.value,
    }
}

pub fn classify_reverse_homogeneous(
    n_law: &StationLaw,
    r_law: &RadiusLaw,
    horizon: u64,
    tol: f64,
) -> Verdict {
    let s = reverse_w_series(n_law, r_law, horizon, tol);
    let v = if s.convergence != Convergence::Undecided {
        series_verdict(
            &s,
            Outcome::ExtinctionAS,
            Outcome::SurvivalAS,
            "line-reverse-w",
        )
    } else {
        reverse_tail_regime(n_law, r_law, horizon).unwrap_or_else(|| {
            series_verdict(
                &s,
                Outcome::ExtinctionAS,
                Outcome::SurvivalAS,
                "line-reverse-w",
            )
        })
    };
    standing_note(v, n_law, r_law)
}

/// Moment and integral tests that separate N from R, used when W itself is
/// undecided on the window.
fn reverse_tail_regime(n_law: &StationLaw, r_law: &RadiusLaw, horizon: u64) -> Option<Verdict> {
    if n_law.mean().is_finite() {
        let er = r_law.mean();
        let outcome = if er.is_finite() {
            Outcome::ExtinctionAS
        } else {
            Outcome::SurvivalAS
        };
        let w = if er.is_finite() {
            f64::NAN
        } else {
            f64::INFINITY
        };
        return Some(
            Verdict::new(
                outcome,
                w,
                f64::INFINITY,
                "line-reverse-tail-regime",
                horizon,
            )
            .note(format!(
                "E[N] finite, E[R] = {}",
                crate::verdict::ext_real::format(er)
            )),
        );
    }
    let StationLaw::PowerTail { alpha, slowly } = n_law else {
        return None;
    };
    let alpha = *alpha;
    let integrand: Box<dyn Fn(u64) -> f64> = if alpha < 1.0 {
        Box::new(move |n| {
            let l = r_law.ln_ge(n);
            if l == f64::NEG_INFINITY || l == 0.0 {
                l.min(0.0)
            } else {
                alpha * l + slowly.ln_eval_at_log(-l)
            }
        })
    } else if slowly.beta() == 0.0 {
        Box::new(move |n| {
            let l = r_law.ln_ge(n);
            if l == f64::NEG_INFINITY || l == 0.0 {
                f64::NEG_INFINITY
            } else {
                l + (-l).ln()
            }
        })
    } else {
        return None;
    };
    // log-log corrections in T ln(1/T) fool the default band
    let s = sum_series(
        integrand,
        1,
        horizon,
        &Ladder {
            band: 0.5,
            ..Ladder::default()
        },
    );
    let outcome = match s.convergence {
        Convergence::Convergent => Outcome::ExtinctionAS,
        Convergence::Divergent => Outcome::SurvivalAS,
        Convergence::Undecided => return None,
    };
    let w = if outcome == Outcome::SurvivalAS {
        f64::INFINITY
    } else {
        f64::NAN
    };
    Some(
        Verdict::new(
            outcome,
            w,
            f64::INFINITY,
            "line-reverse-tail-regime",
            horizon,
        )
        .note(format!(
            "radius integral {} under the station tail bound",
            if s.is_finite() { "finite" } else { "infinite" }
        )),
    )
}

/// Heterogeneous reverse firework. Inner sums diverging for every probed n
/// give survival a.s.; a summable sequence of products gives survival with
/// positive probability. No extinction verdicts.
pub fn classify_reverse_heterogeneous(
    family: &IndexedLawFamily,
    horizon: u64,
    tol: f64,
) -> Verdict {
    let period = family.period();
    let table = DeficitTable::new(family, horizon);
    let opts = Ladder {
        stride: period,
        ..Ladder::default()
    };
    let mut probes: Vec<u64> = (0..period.min(4)).collect();
    probes.extend([10, 100].into_iter().filter(|n| *n < horizon));
    let all_diverge = probes.iter().all(|&n| {
        let s = sum_series(
            |k| {
                if k == 0 {
                    f64::NEG_INFINITY
                } else {
                    table.ln_deficit(n + k, k)
                }
            },
            1,
            horizon,
            &opts,
        );
        s.convergence == Convergence::Divergent
    });
    if all_diverge {
        return Verdict::new(
            Outcome::SurvivalAS,
            f64::INFINITY,
            f64::INFINITY,
            "line-reverse-heterogeneous",
            horizon,
        )
        .note(format!("inner sums diverge for n in {probes:?}"));
    }
    let outer = horizon.min(2000);
    let ln_v: Vec<f64> = (0..=outer)
        .map(|n| {
            let mut s = 0.0;
            for k in 1..=horizon {
                s += table.ln_g(n + k, k);
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
            s
        })
        .collect();
    let s = sum_series(|n| ln_v[n as usize], 0, outer, &opts);
    let v = series_verdict(
        &s,
        Outcome::SurvivalPositive,
        Outcome::Inconclusive,
        "line-reverse-heterogeneous",
    );
    if v.outcome == Outcome::SurvivalPositive && s.tail > tol {
        v.note(format!("tail estimate above tol {tol:.1e}"))
    } else {
        v
    }
}
