//! Literal-loop references written straight from the formulas, indexed with
//! `x[t]` for `t = 0..=T`, with `x[0]` the pre-sample value.
#![allow(dead_code)]

use ivxj::{Individual, Panel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Entrywise, relative to the largest entry of either matrix.
pub fn mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let scale = a.amax().max(b.amax());
    a.iter().zip(b.iter()).all(|(u, v)| (u - v).abs() <= tol * scale)
}

/// Tiny random panel: persistent regressors with drift, unbalanced lengths.
pub fn random_panel(seed: u64, n: usize, k: usize, t_min: usize, t_max: usize) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inds = Vec::new();
    for i in 0..n {
        let big_t = rng.random_range(t_min..=t_max);
        let mut x = vec![vec![0.0; big_t + 1]; k];
        for xj in x.iter_mut() {
            let rho: f64 = rng.random_range(0.3..1.05);
            let drift: f64 = rng.random_range(-1.0..1.0);
            xj[0] = rng.sample::<f64, _>(StandardNormal) + drift;
            for t in 1..=big_t {
                let u: f64 = rng.sample(StandardNormal);
                xj[t] = drift * (1.0 - rho) + rho * xj[t - 1] + u;
            }
        }
        let y: Vec<f64> = (0..=big_t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let start: i64 = rng.random_range(-5..5);
        let times = (0..=big_t as i64).map(|t| start + t).collect();
        inds.push(Individual::new(format!("u{i}"), times, x, y).unwrap());
    }
    Panel::new(inds).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn big_t(ind: &Individual) -> usize {
    ind.y().len() - 1
}

pub fn rho_z(panel: &Panel, c_z: f64, theta: f64) -> f64 {
    let t_max = panel.individuals().iter().map(big_t).max().unwrap();
    1.0 + c_z / (t_max as f64).powf(theta)
}

/// `Σ_{t=lower}^{upper} Σ_{s=lower}^{t} a^{t−s} b^{s−lower}`.
pub fn g(a: f64, b: f64, upper: usize, lower: usize) -> f64 {
    let mut acc = 0.0;
    for t in lower..=upper {
        for s in lower..=t {
            acc += a.powi((t - s) as i32) * b.powi((s - lower) as i32);
        }
    }
    acc
}

/// Within-demeaned `x_t` over `t = 1..=last`, returned at index `t`.
fn demeaned(x: &[f64], last: usize) -> Vec<f64> {
    let m = (1..=last).map(|t| x[t]).sum::<f64>() / last as f64;
    let mut out = vec![f64::NAN; last + 1];
    for t in 1..=last {
        out[t] = x[t] - m;
    }
    out
}

pub fn wg_beta(panel: &Panel, j: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let x = ind.x(j);
        let xt = demeaned(x, tt - 1);
        for t in 1..tt {
            num += xt[t] * ind.y()[t + 1];
            den += xt[t] * xt[t];
        }
    }
    num / den
}

pub fn sum_x2(panel: &Panel, j: usize) -> f64 {
    let mut den = 0.0;
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let xt = demeaned(ind.x(j), tt - 1);
        for t in 1..tt {
            den += xt[t] * xt[t];
        }
    }
    den
}

pub fn wg_rho(panel: &Panel, j: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let x = ind.x(j);
        let xt = demeaned(x, tt - 1);
        for t in 1..tt {
            num += xt[t] * x[t + 1];
            den += xt[t] * xt[t];
        }
    }
    num / den
}

pub fn xd_rho(panel: &Panel, j: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let x = ind.x(j);
        for t in 4..=tt {
            for s in 1..=t - 3 {
                num += (x[t - 1] - x[s + 1]) * (x[t] - x[s]);
                den += (x[t - 1] - x[s + 1]).powi(2);
            }
        }
    }
    num / den
}

/// Per-individual numerator and denominator with odd `T` truncated.
pub fn xj_parts(x: &[f64]) -> (f64, f64) {
    let mut tt = x.len() - 1;
    if tt % 2 == 1 {
        tt -= 1;
    }
    let odd: Vec<usize> = (3..=tt - 1).filter(|t| t % 2 == 1).collect();
    let even: Vec<usize> = (2..=tt - 2).filter(|t| t % 2 == 0).collect();
    let c = 2.0 / (tt as f64 - 2.0);
    let mo = c * odd.iter().map(|&t| x[t]).sum::<f64>();
    let me = c * even.iter().map(|&t| x[t]).sum::<f64>();
    let mut num = 0.0;
    let mut den = 0.0;
    for &t in &odd {
        num += (x[t] - mo) * x[t + 1];
        den += (x[t] - mo).powi(2);
    }
    for &t in &even {
        num += (x[t] - me) * x[t + 1];
        den += (x[t] - me).powi(2);
    }
    let mut comp = 0.0;
    for t in 1..=(tt - 2) / 2 {
        comp += x[t] * x[t + 1];
    }
    num += 4.0 / (tt as f64 - 2.0) * comp;
    let eta = c * (x[1] * even.iter().map(|&t| x[t]).sum::<f64>() + x[2] * odd.iter().map(|&t| x[t - 2]).sum::<f64>());
    (num - eta, den)
}

pub fn xj_rho(panel: &Panel, j: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ind in panel.individuals() {
        let (a, b) = xj_parts(ind.x(j));
        num += a;
        den += b;
    }
    num / den
}

/// `z_t = Σ_{s=1}^{t} ρ_z^{t−s} Δx_s` for `t = 1..=T`, stored at index `t`.
pub fn z(x: &[f64], rz: f64) -> Vec<f64> {
    let tt = x.len() - 1;
    let mut out = vec![f64::NAN; tt + 1];
    for t in 1..=tt {
        let mut acc = 0.0;
        for s in 1..=t {
            acc += rz.powi((t - s) as i32) * (x[s] - x[s - 1]);
        }
        out[t] = acc;
    }
    out
}

/// `(z, z̃)` over `t = 1..=T − h`, stored at index `t`.
pub fn z_pair(x: &[f64], rz: f64, h: usize) -> (Vec<f64>, Vec<f64>) {
    let th = x.len() - 1 - h;
    let zz = z(x, rz);
    let zt = demeaned(&zz, th);
    (zz[..=th].to_vec(), zt)
}

pub fn ivx_num_den(panel: &Panel, j: usize, rz: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let (_, zt) = z_pair(ind.x(j), rz, 1);
        for t in 1..tt {
            num += zt[t] * ind.y()[t + 1];
            den += zt[t] * ind.x(j)[t];
        }
    }
    (num, den)
}

pub fn bias_wg(panel: &Panel, j: usize, rho: f64) -> f64 {
    let mut num = 0.0;
    for ind in panel.individuals() {
        let tt = big_t(ind);
        num += g(rho, 1.0, tt - 1, 2) / (tt - 1) as f64;
    }
    num / sum_x2(panel, j)
}

pub fn bias_ivx(panel: &Panel, j: usize, rho: f64, rz: f64) -> f64 {
    let mut num = 0.0;
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let mut acc = 0.0;
        for t in 2..=tt - 1 {
            for s in 2..=t {
                acc += rz.powi((t - s) as i32) * rho.powi((s - 2) as i32);
            }
        }
        num += acc / (tt - 1) as f64;
    }
    num / ivx_num_den(panel, j, rz).1
}

/// `(ω11, ω12, ω22)` at `(β, ρ)`; lead and lag demeaned separately.
pub fn omegas(panel: &Panel, j: usize, beta: f64, rho: f64) -> (f64, f64, f64) {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let x = ind.x(j);
        let y = ind.y();
        let lag: Vec<f64> = (1..tt).map(|t| x[t]).collect();
        let ylead: Vec<f64> = (1..tt).map(|t| y[t + 1]).collect();
        let xlead: Vec<f64> = (1..tt).map(|t| x[t + 1]).collect();
        let (ml, my, mx) = (mean(&lag), mean(&ylead), mean(&xlead));
        for t in 0..lag.len() {
            let e = (ylead[t] - my) - beta * (lag[t] - ml);
            let v = (xlead[t] - mx) - rho * (lag[t] - ml);
            a += e * e;
            b += e * v;
            c += v * v;
        }
        d += (tt - 2) as f64;
    }
    (a / d, b / d, c / d)
}

pub fn se_ivx(panel: &Panel, j: usize, omega11: f64, rho: f64, theta: f64, rz: f64) -> f64 {
    let mut rad = 0.0;
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let (zz, _) = z_pair(ind.x(j), rz, 1);
        let mut ss = 0.0;
        let mut sum = 0.0;
        for t in 1..tt {
            ss += zz[t] * zz[t];
            sum += zz[t];
        }
        let zbar = sum / (tt - 1) as f64;
        let ind_fn = if rho >= 1.0 { 1.0 } else { 0.0 };
        rad += ss - ind_fn * ((tt - 1) as f64).powf(theta) * zbar * zbar;
    }
    omega11.sqrt() * rad.sqrt() / ivx_num_den(panel, j, rz).1.abs()
}

/// `Σ_{t=1}^{T} Σ_{s=1}^{t−1} (1/T) Σ_{τ=t+1}^{T} ρ^{τ−t−1} [(2/T) Σ_{ℓ=s+1}^{T} ρ^{ℓ−s−1} − ρ^{t−s−1}]`.
pub fn lambda(rho: f64, tt: usize) -> f64 {
    let tf = tt as f64;
    let mut acc = 0.0;
    for t in 1..=tt {
        for s in 1..t {
            let mut left = 0.0;
            for tau in t + 1..=tt {
                left += rho.powi((tau - t - 1) as i32);
            }
            let mut inner = 0.0;
            for l in s + 1..=tt {
                inner += rho.powi((l - s - 1) as i32);
            }
            acc += left / tf * (2.0 / tf * inner - rho.powi((t - s - 1) as i32));
        }
    }
    acc
}

pub fn se_wg(panel: &Panel, j: usize, cov: (f64, f64, f64), rho: f64) -> f64 {
    let (w11, w12, _) = cov;
    let sx = sum_x2(panel, j);
    let mut var = w11 * sx;
    for ind in panel.individuals() {
        let tt = big_t(ind) - 1;
        var += 2.0 * w12 * w12 * lambda(rho, tt);
        let mut acc = 0.0;
        for t in 2..=tt {
            for s in 2..=t {
                acc += rho.powi((t - s) as i32);
            }
        }
        var -= (w12 / tt as f64 * acc).powi(2);
    }
    var.sqrt() / sx
}

// multivariate

pub fn design(panel: &Panel, rz: f64, h: usize) -> (DMatrix<f64>, DVector<f64>) {
    let k = panel.k();
    let mut d = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for ind in panel.individuals() {
        let th = big_t(ind) - h;
        for a in 0..k {
            let (_, zt) = z_pair(ind.x(a), rz, h);
            for t in 1..=th {
                rhs[a] += zt[t] * ind.y()[t + h];
                for b in 0..k {
                    d[(a, b)] += zt[t] * ind.x(b)[t];
                }
            }
        }
    }
    (d, rhs)
}

pub fn omegas_mult(panel: &Panel, beta: &DVector<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    let k = panel.k();
    let mut s = DMatrix::zeros(k + 1, k + 1);
    let mut d = 0.0;
    for ind in panel.individuals() {
        let tt = big_t(ind);
        let cnt = (tt - 1) as f64;
        let ym = (1..tt).map(|t| ind.y()[t + 1]).sum::<f64>() / cnt;
        let lm: Vec<f64> = (0..k).map(|j| (1..tt).map(|t| ind.x(j)[t]).sum::<f64>() / cnt).collect();
        let nm: Vec<f64> = (0..k).map(|j| (1..tt).map(|t| ind.x(j)[t + 1]).sum::<f64>() / cnt).collect();
        for t in 1..tt {
            let mut w = DVector::zeros(k + 1);
            w[0] = ind.y()[t + 1] - ym;
            for j in 0..k {
                w[0] -= beta[j] * (ind.x(j)[t] - lm[j]);
                w[j + 1] = (ind.x(j)[t + 1] - nm[j]) - r[j] * (ind.x(j)[t] - lm[j]);
            }
            s += &w * w.transpose();
        }
        d += (tt - 2) as f64;
    }
    s / d
}

fn diag_pow(r: &DVector<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&r.map(|v| v.powi(p as i32)))
}

pub fn xi(panel: &Panel, r: &DVector<f64>, omega: &DMatrix<f64>, beta: &DVector<f64>, h: usize, rz: f64) -> DVector<f64> {
    let k = panel.k();
    let w12 = omega.view((1, 0), (k, 1)).into_owned().column(0).into_owned();
    let w22 = omega.view((1, 1), (k, k)).into_owned();
    let mut out = DVector::zeros(k);
    for ind in panel.individuals() {
        let th = big_t(ind) - h;
        let mut acc = DVector::zeros(k);
        for t in h + 1..=th {
            for s in h + 1..=t {
                acc += diag_pow(r, s - h - 1) * &w12 * rz.powi((t - s) as i32);
            }
        }
        for tau in 1..h {
            for t in tau + 1..=th {
                for s in tau + 1..=t {
                    acc += diag_pow(r, s - tau - 1) * &w22 * diag_pow(r, h - 1 - tau) * beta * rz.powi((t - s) as i32);
                }
            }
        }
        out += acc / th as f64;
    }
    out
}

fn f_mat(tau: usize, r: &DVector<f64>) -> DMatrix<f64> {
    let k = r.len();
    let mut f = DMatrix::zeros(k + 1, k + 1);
    if tau == 0 {
        f[(0, 0)] = 1.0;
    } else {
        let p = diag_pow(r, tau - 1);
        f.view_mut((1, 1), (k, k)).copy_from(&p);
    }
    f
}

pub fn gamma(ell: usize, h: usize, beta: &DVector<f64>, r: &DVector<f64>, omega: &DMatrix<f64>) -> f64 {
    let k = r.len();
    let mut one_b = DVector::zeros(k + 1);
    one_b[0] = 1.0;
    for j in 0..k {
        one_b[j + 1] = beta[j];
    }
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for tau in ell + 1..=h {
        m += f_mat(h - tau, r) * omega * f_mat(h - tau + ell, r).transpose();
    }
    (one_b.transpose() * m * &one_b)[(0, 0)]
}

pub fn moment(panel: &Panel, rz: f64, h: usize, r: &DVector<f64>, theta: f64) -> DMatrix<f64> {
    let k = panel.k();
    let mut s = DMatrix::zeros(k, k);
    for ind in panel.individuals() {
        let th = big_t(ind) - h;
        let zs: Vec<Vec<f64>> = (0..k).map(|j| z_pair(ind.x(j), rz, h).0).collect();
        for t in 1..=th {
            let zt = DVector::from_fn(k, |j, _| zs[j][t]);
            s += &zt * zt.transpose();
        }
        let mut m = DMatrix::zeros(k, k);
        for j in 0..k {
            if r[j] >= 1.0 {
                let zbar = (1..=th).map(|t| zs[j][t]).sum::<f64>() / th as f64;
                m[(j, j)] = (th as f64).powf(theta) * rz.powi(h as i32 - 1) * zbar * zbar;
            }
        }
        s -= m;
    }
    s
}

pub fn sigma(s: &DMatrix<f64>, gammas: &[f64], r: &DVector<f64>) -> DMatrix<f64> {
    let mut out = s * gammas[0];
    for ell in 1..gammas.len() {
        let pi = s * diag_pow(r, ell) * gammas[ell];
        out += &pi + pi.transpose();
    }
    out
}

pub fn theta(d: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = d.clone().try_inverse().unwrap();
    &inv * sigma * inv.transpose()
}

pub fn wald(a: &DMatrix<f64>, q: &DVector<f64>, beta: &DVector<f64>, theta: &DMatrix<f64>) -> f64 {
    let dev = a * beta - q;
    let mid = (a * theta * a.transpose()).try_inverse().unwrap();
    (dev.transpose() * mid * &dev)[(0, 0)]
}

/// Rebuilds a panel with `x_j ↦ fx(i, j, x_j)` and `y ↦ fy(i, y)`.
pub fn map_panel(
    panel: &Panel,
    fx: impl Fn(usize, usize, &[f64]) -> Vec<f64>,
    fy: impl Fn(usize, &[f64]) -> Vec<f64>,
) -> Panel {
    let inds = panel
        .individuals()
        .iter()
        .enumerate()
        .map(|(i, ind)| {
            let x = (0..ind.k()).map(|j| fx(i, j, ind.x(j))).collect();
            Individual::new(ind.id(), ind.times().to_vec(), x, fy(i, ind.y())).unwrap()
        })
        .collect();
    Panel::new(inds).unwrap()
}
