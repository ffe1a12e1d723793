//! Lowest eigenpairs of a real symmetric tridiagonal matrix.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration with re-orthogonalization against the vectors found before.
//! Both are O(n) per sweep, which keeps fine flux grids cheap.

use super::SpectrumError;

const MAX_INVERSE_ITERATIONS: usize = 12;

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    off_sq: Vec<f64>,
    pivmin: f64,
    norm: f64,
}

impl SymTridiagonal {
    /// `off[i]` couples rows `i` and `i + 1`.
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal must have n - 1 entries");
        let off_sq: Vec<f64> = off.iter().map(|e| e * e).collect();
        let max_sq = off_sq.iter().cloned().fold(0.0, f64::max);
        let pivmin = f64::MIN_POSITIVE * max_sq.max(1.0);
        let (lo, hi) = gershgorin(&diag, &off);
        let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        Self { diag, off, off_sq, pivmin, norm }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < self.pivmin {
            q = -self.pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            q = self.diag[i] - x - self.off_sq[i - 1] / q;
            if q.abs() < self.pivmin {
                q = -self.pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k` smallest eigenvalues in ascending order.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let (glo, ghi) = gershgorin(&self.diag, &self.off);
        let mut out = Vec::with_capacity(k);
        let mut lo_floor = glo;
        for j in 0..k.min(self.len()) {
            let mut lo = lo_floor;
            let mut hi = ghi;
            loop {
                let tol = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + self.pivmin;
                if hi - lo <= tol {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.count_below(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let lambda = 0.5 * (lo + hi);
            out.push(lambda);
            lo_floor = lo;
        }
        out
    }

    /// Unit-norm eigenvector for `lambda`, orthogonal to every vector in
    /// `previous`.
    pub fn eigenvector(&self, lambda: f64, seed: usize, previous: &[Vec<f64>]) -> Result<Vec<f64>, SpectrumError> {
        let n = self.len();
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((1.7 * i as f64) + seed as f64).sin())
            .collect();
        orthogonalize(&mut v, previous);
        normalize(&mut v);

        let tiny = f64::EPSILON * self.norm;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            self.shifted_solve(lambda, tiny, &mut v);
            orthogonalize(&mut v, previous);
            if !normalize(&mut v) {
                return Err(SpectrumError::ConvergenceFailure(format!(
                    "inverse iteration collapsed at eigenvalue {lambda}"
                )));
            }
            residual = self.residual(lambda, &v) / self.norm;
            if residual < 1e-11 {
                break;
            }
        }
        if residual > 1e-8 {
            return Err(SpectrumError::ConvergenceFailure(format!(
                "inverse iteration residual {residual:.3e} at eigenvalue {lambda}"
            )));
        }
        sign_fix(&mut v);
        Ok(v)
    }

    /// Overwrites `rhs` with (T − λ)⁻¹ rhs; vanishing pivots are replaced by
    /// `tiny` so the solve stays finite at an exact eigenvalue.
    fn shifted_solve(&self, lambda: f64, tiny: f64, rhs: &mut [f64]) {
        let n = self.len();
        let mut u = vec![0.0; n];
        let mut l = vec![0.0; n];
        u[0] = guard(self.diag[0] - lambda, tiny);
        for i in 1..n {
            l[i] = self.off[i - 1] / u[i - 1];
            u[i] = guard(self.diag[i] - lambda - l[i] * self.off[i - 1], tiny);
        }
        for i in 1..n {
            rhs[i] -= l[i] * rhs[i - 1];
        }
        rhs[n - 1] /= u[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.off[i] * rhs[i + 1]) / u[i];
        }
    }

    fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut r = (self.diag[i] - lambda) * v[i];
            if i > 0 {
                r += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                r += self.off[i] * v[i + 1];
            }
            acc += r * r;
        }
        acc.sqrt()
    }
}

fn guard(x: f64, tiny: f64) -> f64 {
    if x.abs() < tiny {
        if x < 0.0 {
            -tiny
        } else {
            tiny
        }
    } else {
        x
    }
}

fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let pad = f64::EPSILON * lo.abs().max(hi.abs()) * n as f64;
    (lo - pad, hi + pad)
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of modified Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Largest-magnitude component made positive.
fn sign_fix(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Free particle in a box: eigenvalues 2 − 2cos(kπ/(n+1)).
    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 200;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        let ev = t.lowest_eigenvalues(6);
        for (k, &e) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((e - exact).abs() < 1e-13, "k={k}: {e} vs {exact}");
        }
        let mut vecs: Vec<Vec<f64>> = Vec::new();
        for (k, &e) in ev.iter().enumerate() {
            let v = t.eigenvector(e, k, &vecs).unwrap();
            vecs.push(v);
        }
        for i in 0..vecs.len() {
            for j in 0..vecs.len() {
                let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn exact_degeneracy_gives_orthogonal_pair() {
        // two decoupled identical blocks
        let mut off = vec![-1.0; 9];
        off[4] = 0.0;
        let t = SymTridiagonal::new(vec![2.0; 10], off);
        let ev = t.lowest_eigenvalues(2);
        assert!((ev[0] - ev[1]).abs() < 1e-13);
        let v0 = t.eigenvector(ev[0], 0, &[]).unwrap();
        let v1 = t.eigenvector(ev[1], 1, std::slice::from_ref(&v0)).unwrap();
        let dot: f64 = v0.iter().zip(&v1).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }
}
