//! Small numeric kit: log-domain arithmetic, compensated sums, quadrature.

use std::sync::OnceLock;

/// ln(1 - e^x) for x <= 0.
#[inline]
pub fn ln_1m_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// ln(e^a + e^b).
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ln(-ln(1 - e^l)): log of the "rate" of a survival probability 1 - s.
#[inline]
pub fn ln_neg_ln1m(l: f64) -> f64 {
    if l == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if l < -20.0 {
        // -ln(1-s) = s + s^2/2 + ...
        l + (0.5 * l.exp()).ln_1p()
    } else if l >= 0.0 {
        f64::INFINITY
    } else {
        (-(-l.exp()).ln_1p()).ln()
    }
}

/// ln(1 - exp(-e^x)).
#[inline]
pub fn ln_1m_exp_neg_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x < -30.0 {
        x + (-0.5 * x.exp()).ln_1p()
    } else {
        ln_1m_exp(-x.exp())
    }
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
pub struct LogSum(pub f64);

impl Default for LogSum {
    fn default() -> Self {
        LogSum(f64::NEG_INFINITY)
    }
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        self.0 = log_add(self.0, x);
    }
}

/// Neumaier summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const GL_N: usize = 16;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre() -> &'static [(f64, f64); GL_N] {
    static GL: OnceLock<[(f64, f64); GL_N]> = OnceLock::new();
    GL.get_or_init(|| {
        let n = GL_N;
        let mut out = [(0.0, 0.0); GL_N];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        out
    })
}

/// Integral of f over [a, b] with one 16-point panel.
pub fn gl_panel(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}
