use super::Matrix;
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

const OFF_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Eigenvectors are sign-fixed: the entry of largest magnitude is positive,
/// lowest index winning ties, so repeated runs give identical output.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::invalid(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-10 * scale {
                return Err(Error::invalid(format!(
                    "sym_eig: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations see identical off-diagonal pairs.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);
    let tol = OFF_TOL * a.frobenius().max(1.0);

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&m) < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_norm(&m) >= tol {
        return Err(Error::numeric(format!(
            "Jacobi did not converge: off-diagonal norm {}",
            off_norm(&m)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m.get(x, x).total_cmp(&m.get(y, y)).then(x.cmp(&y)));
    let values = order.iter().map(|&k| m.get(k, k)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut u: Vec<f64> = (0..n).map(|r| v.get(r, k)).collect();
        fix_sign(&mut u);
        for (r, x) in u.into_iter().enumerate() {
            vectors.set(r, col, x);
        }
    }
    Ok(SymEig { values, vectors })
}

fn off_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.get(i, j) * m.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.rows();

    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Flip `u` so its largest-magnitude entry is positive. Entries within a
/// relative 1e-9 of the maximum count as ties; the lowest index wins.
pub(crate) fn fix_sign(u: &mut [f64]) {
    let max = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let lead = u
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    if u[lead] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}
