//! Geometric sums that appear in the bias and variance formulas.

/// Below this gap between the two ratios the closed form is replaced by the
/// recursion.
pub const NEAR_EQUAL: f64 = 1e-8;

/// `Σ_{t=m}^{L} Σ_{s=m}^{t} a^{t−s} b^{s−m}`.
///
/// Each inner sum is `I_N = Σ_{j=0}^{N−1} a^j b^{N−1−j}`, with `N = t − m + 1`,
/// which equals `(a^N − b^N)/(a − b)` away from `a = b`.
pub fn double_geometric(a: f64, b: f64, upper: usize, lower: usize) -> f64 {
    if upper < lower {
        return 0.0;
    }
    let count = upper - lower + 1;
    if (a - b).abs() > NEAR_EQUAL {
        let (mut pa, mut pb, mut acc) = (1.0, 1.0, 0.0);
        for _ in 0..count {
            pa *= a;
            pb *= b;
            acc += pa - pb;
        }
        acc / (a - b)
    } else {
        // I_N = a I_{N−1} + b^{N−1}
        let (mut inner, mut pb, mut acc) = (0.0, 1.0, 0.0);
        for _ in 0..count {
            inner = a * inner + pb;
            pb *= b;
            acc += inner;
        }
        acc
    }
}

/// `Σ_{j=0}^{n−1} r^j`.
pub fn geometric(r: f64, n: usize) -> f64 {
    let (mut p, mut acc) = (1.0, 0.0);
    for _ in 0..n {
        acc += p;
        p *= r;
    }
    acc
}

/// `λ_T(ρ) = Σ_{t=1}^{T} Σ_{s=1}^{t−1} (1/T) Σ_{τ=t+1}^{T} ρ^{τ−t−1}
/// [ (2/T) Σ_{ℓ=s+1}^{T} ρ^{ℓ−s−1} − ρ^{t−s−1} ]`.
///
/// With `A_t = Σ_{j<T−t} ρ^j` the bracket factorises and the double sum over
/// `(t, s)` collapses to running sums over `s`.
pub fn lambda_t(rho: f64, periods: usize) -> f64 {
    let tf = periods as f64;
    if periods < 2 {
        return 0.0;
    }
    if rho == 1.0 {
        // (T²/12)(1 − 1/T)²(1 − 2/T), kept in integer-valued factors
        return (tf - 1.0) * (tf - 1.0) * (tf - 2.0) / (12.0 * tf);
    }
    let mut a = vec![0.0; periods + 1];
    for t in (0..periods).rev() {
        a[t] = 1.0 + rho * a[t + 1];
    }
    let mut total = 0.0;
    // sum_a = Σ_{s<t} A_s, sum_pow = Σ_{s<t} ρ^{t−s−1}
    let (mut sum_a, mut sum_pow) = (0.0, 0.0);
    for t in 1..=periods {
        total += a[t] / tf * (2.0 / tf * sum_a - sum_pow);
        sum_a += a[t];
        sum_pow = rho * sum_pow + 1.0;
    }
    total
}
