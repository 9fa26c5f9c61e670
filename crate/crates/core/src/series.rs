//! Numerical convergence tests for series with positive terms given in log form.
//!
//! Decisions use a tail window [H/10, H]. On each window pair (n, n + s) we
//! compute the Bertrand exponent
//!   a = [ln(t_n / t_{n+s}) - ln((n+s)/n)] / ln(ln(n+s) / ln n),
//! which is a for t_n = 1/(n (ln n)^a), grows like (p - 1) ln n for n^-p and is
//! huge for geometric decay. The series is called convergent when a exceeds
//! 1 + band on the whole window. Divergence needs the local power exponent
//! p = ln(t_n / t_{n+s}) / ln((n+s)/n) to stay at or below 1 on the window,
//! i.e. a c/n lower envelope. Anything in between is left undecided: at desk
//! horizons n^-1.05 and 1/(n sqrt(ln n)) look the same.

use serde::{Deserialize, Serialize};

use crate::num::Kahan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    Convergent,
    Divergent,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    /// Partial sum plus tail estimate; +inf for divergent series.
    pub value: f64,
    pub partial: f64,
    /// Estimated remainder after the last summed term (+inf unless convergent).
    pub tail: f64,
    /// Last index summed.
    pub horizon: u64,
    pub convergence: Convergence,
    /// Smallest and largest Bertrand exponent seen on the window.
    pub bertrand: (f64, f64),
    /// Local power exponent at the top of the window.
    pub power: f64,
}

impl SeriesSum {
    pub fn is_finite(&self) -> bool {
        self.convergence == Convergence::Convergent
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ladder {
    pub band: f64,
    /// Pairs compare terms a multiple of `stride` apart (use the period for
    /// periodic families).
    pub stride: u64,
    pub window_points: usize,
}

impl Default for Ladder {
    fn default() -> Self {
        Ladder {
            band: 0.1,
            stride: 1,
            window_points: 24,
        }
    }
}

struct Window {
    convergence: Convergence,
    bertrand: (f64, f64),
    power: f64,
}

fn pair_exponents(l1: f64, l2: f64, n: f64, m: f64) -> (f64, f64) {
    if l1 == f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
        return (f64::INFINITY, f64::INFINITY);
    }
    if l2 == f64::NEG_INFINITY {
        return (f64::INFINITY, f64::INFINITY);
    }
    if l1 == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    let lr = (m / n).ln();
    let p = (l1 - l2) / lr;
    let llr = (m.ln() / n.ln()).ln();
    let a = (l1 - l2 - lr) / llr;
    (p, a)
}

fn classify_window(
    ln_term: &impl Fn(u64) -> f64,
    start: u64,
    horizon: u64,
    opts: &Ladder,
) -> Window {
    let lo = (horizon / 10).max(start).max(3);
    let stride_for = |n: u64| {
        let s = opts.stride.max(1);
        let want = (n / 50).max(1);
        want.div_ceil(s) * s
    };
    let mut bmin = f64::INFINITY;
    let mut bmax = f64::NEG_INFINITY;
    let mut pmax = f64::NEG_INFINITY;
    let mut power = f64::NAN;
    let pts = opts.window_points.max(2);
    let mut seen = 0;
    let mut last_n = 0;
    for i in 0..pts {
        let frac = i as f64 / (pts - 1) as f64;
        let n = ((lo as f64).ln() * (1.0 - frac) + (horizon as f64).ln() * frac).exp() as u64;
        let s = stride_for(n);
        if n <= last_n || n + s > horizon.max(lo + s) {
            continue;
        }
        last_n = n;
        let (l1, l2) = (ln_term(n), ln_term(n + s));
        let (p, a) = pair_exponents(l1, l2, n as f64, (n + s) as f64);
        bmin = bmin.min(a);
        bmax = bmax.max(a);
        power = p;
        pmax = pmax.max(p);
        seen += 1;
    }
    let convergence = if seen == 0 {
        Convergence::Undecided
    } else if bmin > 1.0 + opts.band {
        Convergence::Convergent
    } else if pmax <= 1.0 + 1e-9 {
        Convergence::Divergent
    } else {
        Convergence::Undecided
    };
    Window {
        convergence,
        bertrand: (bmin, bmax),
        power,
    }
}

fn tail_estimate(ln_term: &impl Fn(u64) -> f64, horizon: u64, w: &Window, opts: &Ladder) -> f64 {
    // envelope: largest term over the last stride block
    let s = opts.stride.max(1);
    let mut env = f64::NEG_INFINITY;
    for n in horizon.saturating_sub(s - 1)..=horizon {
        env = env.max(ln_term(n));
    }
    if env == f64::NEG_INFINITY {
        return 0.0;
    }
    let t = env.exp();
    let h = horizon as f64;
    if w.power > 1.0 + opts.band {
        t * h / (w.power - 1.0)
    } else {
        let a = w.bertrand.0;
        t * h * h.ln() / (a - 1.0)
    }
}

/// Sums exp(ln_term(n)) over start..=horizon and judges the infinite series.
pub fn sum_series(
    ln_term: impl Fn(u64) -> f64,
    start: u64,
    horizon: u64,
    opts: &Ladder,
) -> SeriesSum {
    let mut acc = Kahan::default();
    for n in start..=horizon {
        acc.add(ln_term(n).exp());
    }
    finish(&ln_term, start, horizon, acc.value(), opts)
}

fn finish(
    ln_term: &impl Fn(u64) -> f64,
    start: u64,
    horizon: u64,
    partial: f64,
    opts: &Ladder,
) -> SeriesSum {
    let w = classify_window(ln_term, start, horizon, opts);
    let (value, tail) = match w.convergence {
        Convergence::Convergent => {
            let t = tail_estimate(ln_term, horizon, &w, opts);
            (partial + t, t)
        }
        Convergence::Divergent => (f64::INFINITY, f64::INFINITY),
        Convergence::Undecided => (partial, f64::INFINITY),
    };
    SeriesSum {
        value,
        partial,
        tail,
        horizon,
        convergence: w.convergence,
        bertrand: w.bertrand,
        power: w.power,
    }
}

/// Like `sum_series`, growing the horizon by 4x until the tail estimate drops
/// below `tol`, the series is judged divergent, or `max_horizon` is reached.
pub fn sum_series_adaptive(
    ln_term: impl Fn(u64) -> f64,
    start: u64,
    first_horizon: u64,
    max_horizon: u64,
    tol: f64,
    opts: &Ladder,
) -> SeriesSum {
    let mut acc = Kahan::default();
    let mut next = start;
    // Slow geometric decay looks flat on short windows, so no verdict below 4096
    // terms and a divergence call must repeat at the next scale.
    let mut h = first_horizon.max(start + 4096);
    let mut divergent_before = false;
    loop {
        for n in next..=h {
            acc.add(ln_term(n).exp());
        }
        next = h + 1;
        let r = finish(&ln_term, start, h, acc.value(), opts);
        let done = match r.convergence {
            Convergence::Divergent => std::mem::replace(&mut divergent_before, true),
            Convergence::Convergent => {
                divergent_before = false;
                r.tail <= tol * r.value.max(1.0)
            }
            Convergence::Undecided => {
                divergent_before = false;
                false
            }
        };
        if done || h >= max_horizon {
            return r;
        }
        h = (h * 4).min(max_horizon);
    }
}
