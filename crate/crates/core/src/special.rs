//! Special functions and numerically careful summation used by the bound engine.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const LN_FACT_TABLE_LEN: usize = 1024;

fn ln_factorial_table() -> &'static [f64; LN_FACT_TABLE_LEN] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; LN_FACT_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACT_TABLE_LEN];
        let mut acc = CompensatedSum::new();
        for (k, slot) in t.iter_mut().enumerate().skip(1) {
            acc.add((k as f64).ln());
            *slot = acc.value();
        }
        t
    })
}

/// ln(n!).
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE_LEN {
        return ln_factorial_table()[n as usize];
    }
    // Stirling series; truncation error below 1e-16 relative for n >= 1024.
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// ln C(n, k); `-inf` when k > n.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln(n!/(n-k)!), the number of ordered k-selections; `-inf` when k > n.
pub fn ln_falling(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(n - k)
}

/// Regularized lower incomplete gamma P(n, x) for integer shape n >= 1.
pub fn gamma_cdf(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "gamma_cdf requires n >= 1");
    assert!(x >= 0.0 && !x.is_nan(), "gamma_cdf requires x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let nf = n as f64;
    if x < nf + 1.0 {
        ln_gamma_cdf_series(n, x).exp()
    } else {
        1.0 - gamma_sf_finite(n, x)
    }
}

/// ln P(n, x), accurate also when P underflows in linear space.
pub fn ln_gamma_cdf(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "ln_gamma_cdf requires n >= 1");
    assert!(x >= 0.0 && !x.is_nan(), "ln_gamma_cdf requires x >= 0");
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < n as f64 + 1.0 {
        ln_gamma_cdf_series(n, x)
    } else {
        (-gamma_sf_finite(n, x)).ln_1p()
    }
}

// P(n,x) = e^{-x} x^n / n! * sum_{k>=0} x^k / ((n+1)...(n+k)); all terms positive.
fn ln_gamma_cdf_series(n: u32, x: f64) -> f64 {
    let nf = n as f64;
    let mut term = 1.0;
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    let mut k = 1.0;
    loop {
        term *= x / (nf + k);
        acc.add(term);
        if term < acc.value() * 1e-17 {
            break;
        }
        k += 1.0;
        if k > 10_000.0 {
            break;
        }
    }
    -x + nf * x.ln() - ln_factorial(n as u64) + acc.value().ln()
}

// Q(n,x) = e^{-x} sum_{k<n} x^k/k! for integer n; used when x >= n+1 so Q <= ~1/2.
fn gamma_sf_finite(n: u32, x: f64) -> f64 {
    let lx = x.ln();
    let terms = (0..n).map(|k| (k as f64 * lx - x - ln_factorial(k as u64)).exp());
    compensated_sum(terms).min(1.0)
}

/// ln(e^a + e^b) without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln sum_i e^{v_i}.
pub fn ln_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + compensated_sum(values.iter().map(|v| (v - max).exp())).ln()
}

/// Adaptive Simpson quadrature on [a, b] to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
