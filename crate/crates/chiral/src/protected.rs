//! Kernel states of D(α)+k: the protected states at ±K, the Wronskian, position-space
//! synthesis, zeros and the flat-band zero criterion.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, C64, I, K, ZS};
use crate::planewave::FrequencyBasis;
use crate::potential::PotentialPair;
use crate::spectra::{kernel_dim_with, BandSolver, RANK_TOL};
use crate::symmetry::{SectorVector, SymmetryOperator};
use crate::theta::fk;
use ndarray::Array1;
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// unit norm, largest coefficient positive real
    LargestReal,
    /// image of another state under a symmetry pipeline
    Derived,
}

/// u ∈ L²₀ with (D(α)+k)u = 0, stored by its Fourier coefficients.
#[derive(Clone, Debug)]
pub struct BlochState {
    pub alpha: C64,
    pub k: C64,
    pub basis: Arc<FrequencyBasis>,
    pub coeffs: Array1<C64>,
    pub normalization: Normalization,
    pub residual: f64,
}

fn fix_phase(c: &mut Array1<C64>) {
    let top = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if let Some(v) = c.iter().find(|v| v.norm() >= top - 1e-12).copied() {
        let ph = v.conj() / v.norm();
        c.mapv_inplace(|x| x * ph);
    }
}

impl BlochState {
    fn from_solver(solver: &BandSolver, alpha: C64, k: C64) -> Result<Self> {
        let t = solver.svd(alpha, k, 1)?;
        let mut coeffs = t.right.column(0).to_owned();
        let nrm = coeffs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        coeffs.mapv_inplace(|v| v / nrm);
        fix_phase(&mut coeffs);
        let mut s = Self { alpha, k, basis: solver.basis.clone(), coeffs, normalization: Normalization::LargestReal, residual: 0.0 };
        s.residual = s.residual_with(solver);
        Ok(s)
    }

    /// ‖(D(α)+k)u‖/‖u‖.
    pub fn residual_with(&self, solver: &BandSolver) -> f64 {
        let a = solver.operator(self.alpha, self.k);
        let mut y = vec![ZERO; self.coeffs.len()];
        a.matvec(self.coeffs.as_slice().unwrap(), &mut y);
        (y.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.norm_sqr()).sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn as_sector(&self) -> SectorVector {
        SectorVector { basis: self.basis.clone(), sector: ZERO, coeffs: self.coeffs.clone() }
    }

    /// |⟨a, b⟩|/(‖a‖‖b‖) on coefficients.
    pub fn alignment(&self, other: &BlochState) -> f64 {
        let s: C64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum();
        s.norm() / (self.norm_sqr() * other.norm_sqr()).sqrt()
    }

    /// Σ c_q e^{i⟨z,q⟩} per component.
    pub fn evaluate(&self, z: C64) -> [C64; 2] {
        self.evaluate_with_gradient(z).0
    }

    /// u(z) with ∂_x u and ∂_y u.
    pub fn evaluate_with_gradient(&self, z: C64) -> ([C64; 2], [C64; 2], [C64; 2]) {
        let n = self.basis.truncation_n as i64;
        let [p1, p2] = Lattice::Dual.generators();
        let powers = |p: C64| -> Vec<C64> {
            let w = C64::from_polar(1.0, crate::lattice::pairing(z, p));
            let winv = w.conj();
            let mut v = vec![ZERO; (2 * n + 1) as usize];
            v[n as usize] = C64::new(1.0, 0.0);
            for j in 1..=n as usize {
                v[n as usize + j] = v[n as usize + j - 1] * w;
                v[n as usize - j] = v[n as usize - j + 1] * winv;
            }
            v
        };
        let (pm, pn) = (powers(p1), powers(p2));
        let base = [C64::from_polar(1.0, -crate::lattice::pairing(z, C64::new(K, 0.0))), C64::from_polar(1.0, crate::lattice::pairing(z, C64::new(K, 0.0)))];
        let mut u = [ZERO; 2];
        let mut ux = [ZERO; 2];
        let mut uy = [ZERO; 2];
        for (e, c) in self.basis.entries.iter().zip(&self.coeffs) {
            let slot = (e.component - 1) % 2;
            let ph = base[slot] * pm[(e.m + n) as usize] * pn[(e.n + n) as usize];
            let t = c * ph;
            u[slot] += t;
            ux[slot] += I * e.q.re * t;
            uy[slot] += I * e.q.im * t;
        }
        (u, ux, uy)
    }

    /// |u|² on the n×n grid of Λ-fractional points ((i + s)/n, (j + s)/n), row-major in i.
    pub fn density_grid(&self, n: usize, shift: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = Lattice::Direct.from_frac((i as f64 + shift) / n as f64, (j as f64 + shift) / n as f64);
                let u = self.evaluate(z);
                out.push(u[0].norm_sqr() + u[1].norm_sqr());
            }
        }
        out
    }
}

/// Unit-norm kernel vector of D(α)+k at a given momentum (smallest right singular vector).
pub fn kernel_state(solver: &BandSolver, alpha: C64, k: C64) -> Result<BlochState> {
    let s = BlochState::from_solver(solver, alpha, k)?;
    if s.residual >= 1e-6 {
        return Err(Error::Truncation(s.residual));
    }
    Ok(s)
}

fn check_dirac(k: C64) -> Result<()> {
    if (k - K).norm() > 1e-12 && (k + K).norm() > 1e-12 {
        return Err(Error::Invalid(format!("protected states live at ±K, got {k}")));
    }
    Ok(())
}

pub fn protected_state_with(solver: &BandSolver, alpha: C64, k: C64) -> Result<BlochState> {
    check_dirac(k)?;
    kernel_state(solver, alpha, k)
}

pub fn protected_state(alpha: C64, pot: &PotentialPair, k: C64, n: usize) -> Result<BlochState> {
    protected_state_with(&BandSolver::new(pot, n)?, alpha, k)
}

/// τ(K)ℰτ(K) applied to a k = K state, giving a k = −K state.
pub fn partner_state(u: &BlochState) -> Result<BlochState> {
    check_dirac(u.k)?;
    let tau = SymmetryOperator::boost(&u.basis, u.k);
    let e = SymmetryOperator::e_swap(&u.basis);
    let v = tau.apply_sector(&e.apply_sector(&tau.apply_sector(&u.as_sector())?)?)?;
    if v.sector.norm() > 1e-12 {
        return Err(Error::BasisMismatch(format!("pipeline ended in sector {}", v.sector)));
    }
    Ok(BlochState { alpha: u.alpha, k: -u.k, basis: v.basis, coeffs: v.coeffs, normalization: Normalization::Derived, residual: f64::NAN })
}

/// Spread-out cell points used as default z-samples.
pub fn sample_points(count: usize) -> Vec<C64> {
    (0..count)
        .map(|i| {
            let t = (i as f64 + 0.5) / count as f64;
            Lattice::Direct.from_frac(t, (3.0 * t + 0.1).fract())
        })
        .collect()
}

/// Mean of det(τ(K)u_K, τ(−K)u_{−K}) over z-samples, with the max deviation.
pub fn wronskian_with(solver: &BandSolver, alpha: C64, samples: &[C64]) -> Result<(C64, f64)> {
    let up = protected_state_with(solver, alpha, C64::new(K, 0.0))?;
    let um = protected_state_with(solver, alpha, C64::new(-K, 0.0))?;
    // τ(K)τ(−K) = 1, so the phases cancel in the determinant
    let vals: Vec<C64> = samples
        .iter()
        .map(|&z| {
            let a = up.evaluate(z);
            let b = um.evaluate(z);
            a[0] * b[1] - a[1] * b[0]
        })
        .collect();
    let mean = vals.iter().sum::<C64>() / vals.len() as f64;
    let dev = vals.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    if dev >= 1e-8 * (1.0 + mean.norm()) {
        return Err(Error::Numeric(format!("Wronskian varies in z by {dev:e}")));
    }
    Ok((mean, dev))
}

pub fn wronskian(alpha: C64, pot: &PotentialPair, n: usize, samples: &[C64]) -> Result<C64> {
    Ok(wronskian_with(&BandSolver::new(pot, n)?, alpha, samples)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroRecord {
    /// reduced into the Λ-cell [0,1)²
    pub location: C64,
    pub order: i64,
    pub residual: f64,
    pub k: C64,
    pub flagged: bool,
}

fn max_modulus(state: &BlochState) -> f64 {
    state.density_grid(48, 0.5).into_iter().fold(0.0, f64::max).sqrt()
}

fn gauss_newton(state: &BlochState, mut z: C64, tol: f64) -> C64 {
    for _ in 0..40 {
        let (u, ux, uy) = state.evaluate_with_gradient(z);
        // J^T J and J^T F for the real map (x, y) ↦ (Re u₁, Im u₁, Re u₂, Im u₂)
        let (mut a, mut b, mut c, mut gx, mut gy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..2 {
            a += ux[s].norm_sqr();
            b += (ux[s].conj() * uy[s]).re;
            c += uy[s].norm_sqr();
            gx += (ux[s].conj() * u[s]).re;
            gy += (uy[s].conj() * u[s]).re;
        }
        let det = a * c - b * b;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = -(c * gx - b * gy) / det;
        let dy = -(a * gy - b * gx) / det;
        z += C64::new(dx, dy);
        if dx.hypot(dy) < tol {
            break;
        }
    }
    z
}

/// Winding of the dominant component around a circle; None if it nearly vanishes there.
fn winding(state: &BlochState, z0: C64, radius: f64) -> Option<i64> {
    let pts: Vec<[C64; 2]> = (0..64).map(|j| state.evaluate(z0 + C64::from_polar(radius, 2.0 * PI * j as f64 / 64.0))).collect();
    let mag = |s: usize| pts.iter().map(|u| u[s].norm()).fold(0.0, f64::max);
    let s = if mag(0) >= mag(1) { 0 } else { 1 };
    let lo = pts.iter().map(|u| u[s].norm()).fold(f64::INFINITY, f64::min);
    if lo < 1e-3 * mag(s) {
        return None;
    }
    let total: f64 = (0..64).map(|j| (pts[(j + 1) % 64][s] / pts[j][s]).arg()).sum();
    Some((total / (2.0 * PI)).round() as i64)
}

/// Zeros of a kernel state over the Λ-cell: coarse scan, Gauss–Newton polish, winding order.
pub fn locate_zeros(state: &BlochState, grid: usize, refine_tol: f64) -> Vec<ZeroRecord> {
    let dens = state.density_grid(grid, 0.0);
    let top_sq = dens.iter().cloned().fold(0.0, f64::max);
    let top = max_modulus(state).max(top_sq.sqrt());
    let at = |i: i64, j: i64| dens[(i.rem_euclid(grid as i64) as usize) * grid + j.rem_euclid(grid as i64) as usize];
    let mut out: Vec<ZeroRecord> = Vec::new();
    for i in 0..grid as i64 {
        for j in 0..grid as i64 {
            let v = at(i, j);
            if v >= 1e-2 * top_sq {
                continue;
            }
            let is_min = (-1..=1).all(|di| (-1..=1).all(|dj| (di == 0 && dj == 0) || at(i + di, j + dj) >= v));
            if !is_min {
                continue;
            }
            let start = Lattice::Direct.from_frac(i as f64 / grid as f64, j as f64 / grid as f64);
            let z = gauss_newton(state, start, refine_tol);
            let u = state.evaluate(z);
            let res = (u[0].norm_sqr() + u[1].norm_sqr()).sqrt();
            if res >= 1e-8 * top {
                continue;
            }
            let loc = Lattice::Direct.reduce(z);
            if out.iter().any(|r| Lattice::Direct.distance(r.location - loc) < 1e-6) {
                continue;
            }
            let (order, flagged) = match winding(state, z, 0.02).or_else(|| winding(state, z, 0.04)) {
                Some(w) => (w, false),
                None => (0, true),
            };
            out.push(ZeroRecord { location: loc, order, residual: res, k: state.k, flagged });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroTest {
    pub at_zs: f64,
    pub at_minus_zs: f64,
    pub max_modulus: f64,
    pub magic: bool,
}

pub const ZERO_TEST_THRESHOLD: f64 = 1e-5;

pub fn flatband_zero_test_with(solver: &BandSolver, alpha: C64) -> Result<ZeroTest> {
    let u = protected_state_with(solver, alpha, C64::new(K, 0.0))?;
    let m = |z: C64| {
        let v = u.evaluate(z);
        (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
    };
    let (a, b) = (m(ZS), m(-ZS));
    let top = max_modulus(&u);
    Ok(ZeroTest { at_zs: a, at_minus_zs: b, max_modulus: top, magic: a.min(b) < ZERO_TEST_THRESHOLD * top })
}

/// |u_K(±z_S)| and the verdict min < 1e-5·max|u_K|.
pub fn flatband_zero_test(alpha: C64, pot: &PotentialPair, n: usize) -> Result<ZeroTest> {
    flatband_zero_test_with(&BandSolver::new(pot, n)?, alpha)
}

#[derive(Clone, Debug)]
pub struct KernelCheck {
    pub state: BlochState,
    /// 1 − |⟨a,b⟩|/(‖a‖‖b‖) against F_{k−K}(z − z₀)u_K
    pub overlap_deficit: f64,
    pub z0: C64,
}

/// Located zero of u_K at a magic α.
pub fn reference_zero(u_k: &BlochState) -> Result<C64> {
    let zeros = locate_zeros(u_k, 48, 1e-12);
    match zeros.as_slice() {
        [z] => Ok(z.location),
        other => Err(Error::Multiplicity(other.len())),
    }
}

pub fn kernel_state_at_k_with(solver: &BandSolver, alpha: C64, k: C64) -> Result<KernelCheck> {
    let dim = kernel_dim_with(solver, alpha, k, RANK_TOL)?;
    if dim != 1 {
        return Err(Error::Multiplicity(dim));
    }
    let state = kernel_state(solver, alpha, k)?;
    let u_k = protected_state_with(solver, alpha, C64::new(K, 0.0))?;
    let z0 = reference_zero(&u_k)?;
    let n = 40;
    let (mut ab, mut aa, mut bb) = (ZERO, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let z = Lattice::Direct.from_frac((i as f64 + 0.37) / n as f64, (j as f64 + 0.61) / n as f64);
            let a = state.evaluate(z);
            let f = fk(k - K, z - z0)?;
            let r = u_k.evaluate(z);
            let b = [f * r[0], f * r[1]];
            for s in 0..2 {
                ab += a[s] * b[s].conj();
                aa += a[s].norm_sqr();
                bb += b[s].norm_sqr();
            }
        }
    }
    Ok(KernelCheck { state, overlap_deficit: 1.0 - ab.norm() / (aa * bb).sqrt(), z0 })
}

pub fn kernel_state_at_k(alpha: C64, pot: &PotentialPair, k: C64, n: usize) -> Result<KernelCheck> {
    kernel_state_at_k_with(&BandSolver::new(pot, n)?, alpha, k)
}
