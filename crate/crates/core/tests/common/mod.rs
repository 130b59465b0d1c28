//! Independent reference computations used as test oracles. Nothing here
//! calls into the numerics under test beyond reading environment data.
#![allow(dead_code)]

use stablex_core::{coarse_grain, sample_subordinator_path, Environment, StableLaw};

pub fn law(alpha: f64) -> StableLaw {
    StableLaw::new(alpha, 1.0).unwrap()
}

/// Environment at level `n` on sites `[-half, half]`, from a path at resolution `n`.
pub fn env(alpha: f64, n: u64, half: i64, seed: u64) -> Environment {
    let p = sample_subordinator_path(law(alpha), n, -half, half, seed).unwrap();
    coarse_grain(&p, n).unwrap()
}

pub type Dense = Vec<Vec<f64>>;

/// Dense sped-up generator with reflecting truncation, assembled entry by entry.
pub fn dense_generator(env: &Environment) -> Dense {
    let n = env.window().sites();
    let speed = env.n() as f64 * (env.n() as f64).powf(1.0 / env.law().alpha());
    let c = env.conductances();
    let mut g = vec![vec![0.0; n]; n];
    for b in 0..n - 1 {
        let r = speed * c[b];
        g[b][b + 1] += r;
        g[b + 1][b] += r;
        g[b][b] -= r;
        g[b + 1][b + 1] -= r;
    }
    g
}

pub fn matvec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// `exp(A)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(a: &Dense) -> Dense {
    let n = a.len();
    let norm = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale /= 2.0;
        squarings += 1;
    }
    let scaled: Dense = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut result: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &scaled);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Dense = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let (top, bottom) = m.split_at_mut(r);
            for (a, b) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *a -= f * b;
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= m[col][k] * x[k];
        }
        x[col] = s / m[col][col];
    }
    x
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation (g = 7, n = 9).
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Nodes and weights of `n`-point Gauss–Laguerre quadrature for
/// `∫_0^∞ e^{-s} f(s) ds`, by Newton iteration on `L_n`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z: f64 = 0.0;
    for i in 0..n {
        if i == 0 {
            z = 3.0 / (1.0 + 2.4 * nf);
        } else if i == 1 {
            z += 15.0 / (1.0 + 2.5 * nf);
        } else {
            let ai = (i - 1) as f64;
            z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2]);
        }
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = (nf * p1 - nf * p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        x[i] = z;
        w[i] = -(ln_gamma(nf) - ln_gamma(nf)).exp() / (pp * nf * p2);
    }
    (x, w)
}
