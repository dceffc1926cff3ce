//! Independent dense reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical code: eigenvalues come
//! from a cyclic Jacobi sweep, the stacked update from explicit Kronecker
//! products, and gradients from central differences.

#![allow(dead_code)]

pub type Matrix = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Laplacian of an undirected edge list, built directly from the definition.
pub fn laplacian(n: usize, edges: &[(usize, usize)]) -> Matrix {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        if i != j {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        let deg: f64 = a[i].iter().sum();
        for j in 0..n {
            l[i][j] = if i == j { deg } else { -a[i][j] };
        }
    }
    l
}

pub fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Stacked update `(W (x) I_d) w - alpha g` with `W = I - beta L`.
pub fn stacked_update(l: &Matrix, d: usize, w: &[f64], g: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let n = l.len();
    let wmix: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - beta * l[i][j]).collect())
        .collect();
    let big = kron(&wmix, &identity(d));
    mat_vec(&big, w).iter().zip(g).map(|(x, y)| x - alpha * y).collect()
}

/// `||(M (x) I_d) w||^2` with `M = I - (1/n) 1 1^T`, via the Kronecker product.
pub fn consensus_error_kron(n: usize, d: usize, w: &[f64]) -> f64 {
    let m: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64).collect())
        .collect();
    mat_vec(&kron(&m, &identity(d)), w).iter().map(|x| x * x).sum()
}

/// Central-difference derivative of `f` along coordinate `i`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, w: &[f64], i: usize, h: f64) -> f64 {
    let mut p = w.to_vec();
    let mut m = w.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Scalar-loop reference for the one-hidden-layer sigmoid network with
/// bias-first rows: returns the cross-entropy summed over outputs for one
/// example with a dense input and a one-hot target.
pub fn reference_net_loss(d_in: usize, d_hidden: usize, d_out: usize, w: &[f64], x: &[f64], label: usize) -> f64 {
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let first = d_hidden * (d_in + 1);
    let mut hidden = vec![0.0; d_hidden];
    for j in 0..d_hidden {
        let mut z = w[j * (d_in + 1)];
        for i in 0..d_in {
            z += w[j * (d_in + 1) + 1 + i] * x[i];
        }
        hidden[j] = sig(z);
    }
    let mut loss = 0.0;
    for k in 0..d_out {
        let base = first + k * (d_hidden + 1);
        let mut z = w[base];
        for j in 0..d_hidden {
            z += w[base + 1 + j] * hidden[j];
        }
        let y = sig(z).clamp(1e-12, 1.0 - 1e-12);
        let t = if k == label { 1.0 } else { 0.0 };
        loss -= t * y.ln() + (1.0 - t) * (1.0 - y).ln();
    }
    loss
}

/// Least-squares slope of `ln y` on `ln(k + 1)`, written out independently.
pub fn loglog_slope(points: &[(u64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|(k, _)| ((k + 1) as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
