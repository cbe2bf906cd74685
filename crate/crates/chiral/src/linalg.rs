//! Linear algebra kernels: sparse assembly, banded LU, and the smallest
//! singular triplets of D(α)+k by inverse subspace iteration.

use crate::error::{Error, Result};
use crate::lattice::C64;
use lapack_sys::__BindgenComplex;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{EigVals, EigValsh, Eigh, QR, SVD, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::os::raw::{c_char, c_int};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct Sparse {
    pub n: usize,
    pub rows: Vec<Vec<(usize, C64)>>,
}

impl Sparse {
    pub fn new(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    pub fn push(&mut self, r: usize, c: usize, v: C64) {
        if let Some(e) = self.rows[r].iter_mut().find(|e| e.0 == c) {
            e.1 += v;
        } else {
            self.rows[r].push((c, v));
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                a[[r, c]] += v;
            }
        }
        a
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (r, row) in self.rows.iter().enumerate() {
            y[r] = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec_adj(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                y[c] += v.conj() * x[r];
            }
        }
    }

    pub fn apply_block(&self, x: &Array2<C64>) -> Array2<C64> {
        let mut y = Array2::zeros((self.n, x.ncols()));
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let xr = x.row(c);
                let mut yr = y.row_mut(r);
                yr.zip_mut_with(&xr, |a, b| *a += v * b);
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().map(|e| e.1.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Conj,
}

/// LU factorization of a permuted sparse matrix in LAPACK band storage.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<C64>,
    ipiv: Vec<c_int>,
    perm: Vec<usize>,
    pub patched_pivots: usize,
}

impl BandedLu {
    /// `perm[i]` is the original index placed at position i.
    pub fn new(a: &Sparse, perm: &[usize]) -> Result<Self> {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, row) in a.rows.iter().enumerate() {
            for &(c, _) in row {
                let (i, j) = (inv[r], inv[c]);
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![ZERO; ldab * n];
        for (r, row) in a.rows.iter().enumerate() {
            for &(c, v) in row {
                let (i, j) = (inv[r], inv[c]);
                ab[j * ldab + kl + ku + i - j] += v;
            }
        }
        let mut ipiv = vec![0 as c_int; n];
        let mut info: c_int = 0;
        let (ni, kli, kui, ldabi) = (n as c_int, kl as c_int, ku as c_int, ldab as c_int);
        unsafe {
            lapack_sys::zgbtrf_(
                &ni,
                &ni,
                &kli,
                &kui,
                ab.as_mut_ptr() as *mut __BindgenComplex<f64>,
                &ldabi,
                ipiv.as_mut_ptr(),
                &mut info,
            );
        }
        if info < 0 {
            return Err(Error::Numeric(format!("zgbtrf argument {} invalid", -info)));
        }
        // exactly singular U: replace zero pivots by a tiny value so that solves
        // still amplify the null direction
        let mut patched = 0;
        if info > 0 {
            let tiny = 1e-17 * a.max_abs().max(1.0);
            for j in 0..n {
                let d = &mut ab[j * ldab + kl + ku];
                if d.norm() == 0.0 {
                    *d = C64::new(tiny, 0.0);
                    patched += 1;
                }
            }
        }
        Ok(Self { n, kl, ku, ab, ipiv, perm: perm.to_vec(), patched_pivots: patched })
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves A X = B or A^H X = B for a block of right-hand sides.
    pub fn solve(&self, b: &Array2<C64>, trans: Trans) -> Result<Array2<C64>> {
        let n = self.n;
        let nrhs = b.ncols();
        let mut buf = vec![ZERO; n * nrhs];
        for j in 0..nrhs {
            for i in 0..n {
                buf[j * n + i] = b[[self.perm[i], j]];
            }
        }
        let t: c_char = match trans {
            Trans::No => b'N' as c_char,
            Trans::Conj => b'C' as c_char,
        };
        let ldab = (2 * self.kl + self.ku + 1) as c_int;
        let (ni, kli, kui, nr) = (n as c_int, self.kl as c_int, self.ku as c_int, nrhs as c_int);
        let mut info: c_int = 0;
        unsafe {
            lapack_sys::zgbtrs_(
                &t,
                &ni,
                &kli,
                &kui,
                &nr,
                self.ab.as_ptr() as *const __BindgenComplex<f64>,
                &ldab,
                self.ipiv.as_ptr(),
                buf.as_mut_ptr() as *mut __BindgenComplex<f64>,
                &ni,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Numeric(format!("zgbtrs failed with info {info}")));
        }
        let mut x = Array2::zeros((n, nrhs));
        for j in 0..nrhs {
            for i in 0..n {
                x[[self.perm[i], j]] = buf[j * n + i];
            }
        }
        Ok(x)
    }
}

/// Smallest singular values with right (and approximate left) singular vectors.
#[derive(Clone, Debug)]
pub struct SmallSvd {
    pub values: Vec<f64>,
    pub right: Array2<C64>,
    pub left: Array2<C64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn random_block(n: usize, b: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, b), |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

pub fn orthonormalize(x: &Array2<C64>) -> Result<Array2<C64>> {
    let (q, _) = x.qr().map_err(|e| Error::Numeric(format!("qr: {e}")))?;
    Ok(q)
}

/// Rayleigh–Ritz for the smallest singular values of A restricted to span(X), X orthonormal.
fn ritz(a: &Sparse, x: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>, Array2<C64>)> {
    let ax = a.apply_block(x);
    let (q, r) = ax.qr().map_err(|e| Error::Numeric(format!("qr: {e}")))?;
    let (u, sv, vt) = r.svd(true, true).map_err(|e| Error::Numeric(format!("svd: {e}")))?;
    let (u, vt) = (u.unwrap(), vt.unwrap());
    let b = sv.len();
    // reverse to ascending order
    let order: Vec<usize> = (0..b).rev().collect();
    let vals: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let mut w = Array2::zeros((b, b));
    let mut uu = Array2::zeros((b, b));
    for (jn, &jo) in order.iter().enumerate() {
        for i in 0..b {
            w[[i, jn]] = vt[[jo, i]].conj();
            uu[[i, jn]] = u[[i, jo]];
        }
    }
    Ok((vals, x.dot(&w), q.dot(&uu)))
}

pub struct SubspaceOptions {
    pub max_iter: usize,
    pub seed: u64,
    pub extra: usize,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self { max_iter: 400, seed: 0x5eed_cafe, extra: 6 }
    }
}

/// The `count` smallest singular triplets of A by inverse subspace iteration on (A^H A)^{-1}.
///
/// Directions whose Ritz value falls below `LOCK_TOL`·max|A| are locked: the remaining
/// columns are solved with those directions projected out, so a (near-)null space does
/// not swamp the rest of the block.
pub fn smallest_singular(a: &Sparse, lu: &BandedLu, count: usize, opts: &SubspaceOptions) -> Result<SmallSvd> {
    let n = a.n;
    let b = (count + opts.extra.max(count)).min(n);
    let mut x = orthonormalize(&random_block(n, b, opts.seed))?;
    // round-off level of the Ritz values
    let floor = 4.0 * a.max_abs();
    let lock_tol = LOCK_TOL * a.max_abs();
    let mut prev: Option<Vec<f64>> = None;
    let mut settled = 0;
    let mut last = None;
    let mut locked = 0usize;
    let mut ul = Array2::<C64>::zeros((n, 0));
    for it in 1..=opts.max_iter {
        let y = if locked == 0 {
            lu.solve(&lu.solve(&x, Trans::Conj)?, Trans::No)?
        } else {
            // each column is deflated against the locked directions before it
            let mut y = Array2::<C64>::zeros((n, b));
            for j in 0..=locked {
                let end = if j == locked { b } else { j + 1 };
                let vl = x.slice(s![.., ..j]).to_owned();
                let mut xa = x.slice(s![.., j..end]).to_owned();
                project_out(&mut xa, &vl);
                let mut w = lu.solve(&xa, Trans::Conj)?;
                project_out(&mut w, &ul.slice(s![.., ..j]).to_owned());
                let mut z = lu.solve(&w, Trans::No)?;
                project_out(&mut z, &vl);
                y.slice_mut(s![.., j..end]).assign(&z);
            }
            y
        };
        x = orthonormalize(&y)?;
        let (vals, xr, mut left) = ritz(a, &x)?;
        x = xr;
        locked = vals.iter().take_while(|&&v| v < lock_tol).count().min(b - 1);
        if locked > 0 {
            let vl = x.slice(s![.., ..locked]).to_owned();
            ul = orthonormalize(&lu.solve(&vl, Trans::Conj)?)?;
            left.slice_mut(s![.., ..locked]).assign(&ul);
        } else {
            ul = Array2::zeros((n, 0));
        }
        let scale = vals[b - 1].max(floor);
        let done = prev.as_ref().is_some_and(|p: &Vec<f64>| {
            (0..count).all(|i| (vals[i] - p[i]).abs() <= 4e-15 * scale + 1e-13 * vals[i])
        });
        settled = if done { settled + 1 } else { 0 };
        prev = Some(vals.clone());
        last = Some((vals, left));
        if settled >= 2 {
            let (vals, mut left) = last.unwrap();
            align_left(a, &x, &mut left, count);
            return Ok(finish(vals, x, left, count, it, true));
        }
    }
    let (vals, mut left) = last.unwrap();
    align_left(a, &x, &mut left, count);
    Ok(finish(vals, x, left, count, opts.max_iter, false))
}

/// Rotates each left vector so that y^H A x is real and non-negative.
fn align_left(a: &Sparse, x: &Array2<C64>, left: &mut Array2<C64>, count: usize) {
    let ax = a.apply_block(&x.slice(s![.., ..count]).to_owned());
    for j in 0..count {
        let c: C64 = left.column(j).iter().zip(ax.column(j)).map(|(y, v)| y.conj() * v).sum();
        if c.norm() > 0.0 {
            let ph = c / c.norm();
            left.column_mut(j).mapv_inplace(|y| y * ph);
        }
    }
}

pub const LOCK_TOL: f64 = 1e-6;

/// x ← (I − QQ^H)x for orthonormal Q.
fn project_out(x: &mut Array2<C64>, q: &Array2<C64>) {
    if q.ncols() == 0 {
        return;
    }
    let c = q.t().mapv(|v| v.conj()).dot(&*x);
    *x -= &q.dot(&c);
}

fn finish(vals: Vec<f64>, x: Array2<C64>, left: Array2<C64>, count: usize, iterations: usize, converged: bool) -> SmallSvd {
    SmallSvd {
        values: vals[..count].to_vec(),
        right: x.slice(s![.., ..count]).to_owned(),
        left: left.slice(s![.., ..count]).to_owned(),
        iterations,
        converged,
    }
}

/// Largest singular value by power iteration on A^H A.
pub fn largest_singular(a: &Sparse, iters: usize) -> f64 {
    let n = a.n;
    let mut x: Vec<C64> = random_block(n, 1, 17).column(0).to_vec();
    let mut y = vec![ZERO; n];
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        a.matvec(&x, &mut y);
        est = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        a.matvec_adj(&y, &mut x);
    }
    est
}

/// Ascending singular values of a dense matrix.
pub fn dense_singular_values(a: &Array2<C64>) -> Result<Vec<f64>> {
    let (_, s, _) = a.svd(false, false).map_err(|e| Error::Numeric(format!("svd: {e}")))?;
    let mut v = s.to_vec();
    v.reverse();
    Ok(v)
}

/// Ascending singular values with right singular vectors (columns) of a dense matrix.
pub fn dense_svd_right(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let (_, s, vt) = a.svd(false, true).map_err(|e| Error::Numeric(format!("svd: {e}")))?;
    let vt = vt.unwrap();
    let n = s.len();
    let mut v = Array2::zeros((vt.ncols(), n));
    let mut vals = Vec::with_capacity(n);
    for (jn, jo) in (0..n).rev().enumerate() {
        vals.push(s[jo]);
        for i in 0..vt.ncols() {
            v[[i, jn]] = vt[[jo, i]].conj();
        }
    }
    Ok((vals, v))
}

pub fn dense_eigvals(a: &Array2<C64>) -> Result<Vec<C64>> {
    a.eigvals().map(|v| v.to_vec()).map_err(|e| Error::Numeric(format!("eigenvalues: {e}")))
}

pub fn dense_eigvalsh(a: &Array2<C64>) -> Result<Vec<f64>> {
    a.eigvalsh(UPLO::Lower).map(|v| v.to_vec()).map_err(|e| Error::Numeric(format!("eigvalsh: {e}")))
}

pub fn dense_eigh(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    a.eigh(UPLO::Lower).map(|(v, w)| (v.to_vec(), w)).map_err(|e| Error::Numeric(format!("eigh: {e}")))
}

pub fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// ⟨a, b⟩ = Σ a·conj(b).
pub fn inner(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn column(a: &Array2<C64>, j: usize) -> Array1<C64> {
    a.index_axis(Axis(1), j).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> Sparse {
        let mut s = Sparse::new(n);
        for i in 0..n {
            s.push(i, i, C64::new(2.0 + i as f64 * 0.1, 0.3));
            if i + 1 < n {
                s.push(i, i + 1, C64::new(-1.0, 0.2));
                s.push(i + 1, i, C64::new(-0.7, -0.1));
            }
        }
        s
    }

    #[test]
    fn banded_solve_matches_dense() {
        let a = tridiag(40);
        let perm: Vec<usize> = (0..40).collect();
        let lu = BandedLu::new(&a, &perm).unwrap();
        let b = random_block(40, 3, 1);
        let x = lu.solve(&b, Trans::No).unwrap();
        let r = a.to_dense().dot(&x) - &b;
        assert!(r.iter().all(|v| v.norm() < 1e-12));
        let x = lu.solve(&b, Trans::Conj).unwrap();
        let ah = a.to_dense().t().mapv(|v| v.conj());
        let r = ah.dot(&x) - &b;
        assert!(r.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn permuted_banded_solve() {
        let a = tridiag(30);
        let perm: Vec<usize> = (0..30).rev().collect();
        let lu = BandedLu::new(&a, &perm).unwrap();
        let b = random_block(30, 2, 3);
        let x = lu.solve(&b, Trans::No).unwrap();
        let r = a.to_dense().dot(&x) - &b;
        assert!(r.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn subspace_iteration_matches_dense_svd() {
        let a = tridiag(60);
        let perm: Vec<usize> = (0..60).collect();
        let lu = BandedLu::new(&a, &perm).unwrap();
        let res = smallest_singular(&a, &lu, 4, &SubspaceOptions::default()).unwrap();
        assert!(res.converged);
        let dense = dense_singular_values(&a.to_dense()).unwrap();
        for i in 0..4 {
            assert!((res.values[i] - dense[i]).abs() < 1e-12, "{} {}", res.values[i], dense[i]);
        }
        let ad = a.to_dense();
        for j in 0..4 {
            let v = column(&res.right, j);
            assert!((norm(&ad.dot(&v)) - res.values[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn exactly_singular_matrix() {
        let mut a = Sparse::new(5);
        for i in 0..5 {
            a.push(i, i, C64::new(i as f64, 0.0));
        }
        let lu = BandedLu::new(&a, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(lu.patched_pivots, 1);
        let res = smallest_singular(&a, &lu, 2, &SubspaceOptions { extra: 2, ..Default::default() }).unwrap();
        assert!(res.values[0] < 1e-15);
        assert!((res.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn power_iteration_estimate() {
        let a = tridiag(30);
        let dense = dense_singular_values(&a.to_dense()).unwrap();
        let est = largest_singular(&a, 200);
        assert!((est - dense[29]).abs() / dense[29] < 1e-3);
    }

    #[test]
    fn graded_near_null_space() {
        let diag = [C64::new(1e-15, 1e-15), C64::new(0.0, -1e-10), C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(3.0, 1.0), C64::new(-4.0, 0.0)];
        let mut a = Sparse::new(6);
        for (i, &d) in diag.iter().enumerate() {
            a.push(i, i, d);
            if i + 1 < 6 {
                a.push(i, i + 1, C64::new(1e-3, 0.0));
            }
        }
        let lu = BandedLu::new(&a, &[0, 1, 2, 3, 4, 5]).unwrap();
        let res = smallest_singular(&a, &lu, 3, &SubspaceOptions { extra: 3, ..Default::default() }).unwrap();
        assert!(res.converged);
        let dense = dense_singular_values(&a.to_dense()).unwrap();
        let ad = a.to_dense();
        for j in 0..3 {
            assert!((res.values[j] - dense[j]).abs() < 1e-13 * dense[j].max(1e-2));
            let ax = ad.dot(&column(&res.right, j));
            let yax = inner(&ax, &column(&res.left, j));
            assert!((yax - res.values[j]).norm() < 1e-14);
        }
    }
}
