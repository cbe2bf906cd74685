//! Band structure, magic angles, kernel probes, flatness scans and the first-order
//! response of E₁ at a magic α.

use crate::error::{Error, Result};
use crate::lattice::{pairing, Lattice, C64, I, K};
use crate::linalg::{dense_eigvals, largest_singular, smallest_singular, BandedLu, SmallSvd, Sparse, SubspaceOptions};
use crate::planewave::{band_order, build_basis, coupling_triplets, tk_square_block, FrequencyBasis, Spinor};
use crate::potential::PotentialPair;
use rayon::prelude::*;
use std::sync::Arc;

/// Generic momentum used when only one probe is needed.
pub const DEFAULT_PROBE: C64 = C64::new(0.31, 0.17);
/// Relative rank tolerance for kernel_dim.
pub const RANK_TOL: f64 = 1e-7;

const ZERO: C64 = C64::new(0.0, 0.0);

/// D(α)+k on a fixed two-spinor basis, with the coupling and band ordering cached.
#[derive(Clone, Debug)]
pub struct BandSolver {
    pub basis: Arc<FrequencyBasis>,
    coupling: Vec<(usize, usize, C64)>,
    perm: Vec<usize>,
    pub opts_seed: u64,
}

impl BandSolver {
    pub fn new(pot: &PotentialPair, n: usize) -> Result<Self> {
        Self::with_basis(pot, build_basis(n, Spinor::Two)?)
    }

    pub fn with_basis(pot: &PotentialPair, basis: Arc<FrequencyBasis>) -> Result<Self> {
        let coupling = coupling_triplets(pot, &basis)?;
        let perm = band_order(&basis);
        Ok(Self { basis, coupling, perm, opts_seed: SubspaceOptions::default().seed })
    }

    pub fn truncation(&self) -> usize {
        self.basis.truncation_n
    }

    pub fn operator(&self, alpha: C64, k: C64) -> Sparse {
        let mut s = Sparse::new(self.basis.len());
        for (i, e) in self.basis.entries.iter().enumerate() {
            s.push(i, i, e.q + k);
        }
        if alpha != ZERO {
            for &(r, c, v) in &self.coupling {
                s.push(r, c, alpha * v);
            }
        }
        s
    }

    /// V x, the coupling without α.
    pub fn apply_coupling(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; x.len()];
        for &(r, c, v) in &self.coupling {
            y[r] += v * x[c];
        }
        y
    }

    pub fn svd(&self, alpha: C64, k: C64, count: usize) -> Result<SmallSvd> {
        let a = self.operator(alpha, k);
        let lu = BandedLu::new(&a, &self.perm)?;
        let opts = SubspaceOptions { seed: self.opts_seed, ..SubspaceOptions::default() };
        let out = smallest_singular(&a, &lu, count.min(a.n), &opts)?;
        if !out.converged {
            return Err(Error::Numeric(format!("subspace iteration did not settle at α={alpha}, k={k}")));
        }
        Ok(out)
    }

    pub fn bands(&self, alpha: C64, k: C64, count: usize) -> Result<Vec<f64>> {
        Ok(self.svd(alpha, k, count)?.values)
    }

    pub fn largest(&self, alpha: C64, k: C64) -> f64 {
        largest_singular(&self.operator(alpha, k), 60)
    }
}

/// The `count` smallest singular values of D(α)+k at truncation N, ascending.
pub fn bands(alpha: C64, pot: &PotentialPair, k: C64, count: usize, n: usize) -> Result<Vec<f64>> {
    BandSolver::new(pot, n)?.bands(alpha, k, count)
}

/// Bands over the Λ*-cell sampled at fractional coordinates (i/n, j/n).
#[derive(Clone, Debug)]
pub struct BandGrid {
    pub alpha: C64,
    pub grid: usize,
    pub truncation: usize,
    /// (k₁, k₂, k) with k = k₁p₁ + k₂p₂.
    pub points: Vec<(f64, f64, C64)>,
    pub values: Vec<Vec<f64>>,
}

pub fn grid_points(n: usize) -> Vec<(f64, f64, C64)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            out.push((a, b, Lattice::Dual.from_frac(a, b)));
        }
    }
    out
}

impl BandGrid {
    pub fn compute(solver: &BandSolver, alpha: C64, grid: usize, count: usize) -> Result<Self> {
        let points = grid_points(grid);
        let values = points
            .par_iter()
            .map(|&(_, _, k)| solver.bands(alpha, k, count))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha, grid, truncation: solver.truncation(), points, values })
    }

    pub fn band(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |v| v[j])
    }

    /// Index of the grid point carrying ωk, when the grid resolves it.
    pub fn rotated_index(&self, idx: usize) -> Option<usize> {
        let n = self.grid as i64;
        let (i, j) = ((idx / self.grid) as i64, (idx % self.grid) as i64);
        // ω acts on Λ* fractional coordinates as (a, b) ↦ (−b, a − b)
        let (ri, rj) = ((-j).rem_euclid(n), (i - j).rem_euclid(n));
        Some((ri * n + rj) as usize)
    }

    pub fn to_csv(&self) -> String {
        let count = self.values.first().map_or(0, |v| v.len());
        let mut out = String::from("k1,k2,re_k,im_k");
        for j in 1..=count {
            out.push_str(&format!(",E{j}"));
        }
        out.push('\n');
        for ((a, b, k), vals) in self.points.iter().zip(&self.values) {
            out.push_str(&format!("{a:.16e},{b:.16e},{:.16e},{:.16e}", k.re, k.im));
            for v in vals {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refined {
    pub alpha: C64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Root-polish of α ↦ E₁(α, probe) by complex Newton on the singular-triplet model
/// E₁(α+δ) ≈ |E₁(α) + δ⟨y, Vx⟩|, confined to |α − α₀| ≤ 0.1.
pub fn refine_magic_at(solver: &BandSolver, alpha0: C64, probe: C64) -> Result<Refined> {
    let mut alpha = alpha0;
    let mut best = Refined { alpha, residual: f64::INFINITY, converged: false, iterations: 0 };
    let scale = solver.largest(alpha0, probe).max(1.0);
    for it in 1..=30 {
        let t = solver.svd(alpha, probe, 1)?;
        let sigma = t.values[0];
        if sigma < best.residual {
            best = Refined { alpha, residual: sigma, converged: false, iterations: it };
        }
        let x: Vec<C64> = t.right.column(0).to_vec();
        let y = t.left.column(0);
        let vx = solver.apply_coupling(&x);
        let slope: C64 = y.iter().zip(&vx).map(|(a, b)| a.conj() * b).sum();
        if slope.norm() == 0.0 {
            break;
        }
        let step = -sigma / slope;
        let next = alpha + step;
        if (next - alpha0).norm() > 0.1 {
            break;
        }
        alpha = next;
        if step.norm() < 1e-10 {
            let sigma = solver.bands(alpha, probe, 1)?[0];
            let converged = sigma < 1e-7 * scale;
            if sigma <= best.residual || converged {
                best = Refined { alpha, residual: sigma, converged, iterations: it };
            }
            return Ok(best);
        }
    }
    best.converged = false;
    Ok(best)
}

pub fn refine_magic(alpha0: C64, pot: &PotentialPair, n: usize) -> Result<Refined> {
    refine_magic_at(&BandSolver::new(pot, n)?, alpha0, DEFAULT_PROBE)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagicAngle {
    pub alpha: C64,
    pub residual: f64,
    pub multiplicity: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct MagicAngleSet {
    pub angles: Vec<MagicAngle>,
    pub truncation: usize,
    pub probe: C64,
}

impl MagicAngleSet {
    /// Smallest positive real member (|Im α| below `tol`).
    pub fn first_real(&self, tol: f64) -> Option<MagicAngle> {
        self.angles.iter().copied().filter(|a| a.alpha.im.abs() < tol && a.alpha.re > 0.0).min_by(|a, b| a.alpha.re.total_cmp(&b.alpha.re))
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<String> = self
            .angles
            .iter()
            .map(|a| {
                format!(
                    "{{\"alpha_re\":{:.16e},\"alpha_im\":{:.16e},\"residual\":{:.16e},\"multiplicity\":{}}}",
                    a.alpha.re, a.alpha.im, a.residual, a.multiplicity
                )
            })
            .collect();
        format!("[{}]", rows.join(","))
    }
}

/// |α| first (equal within 1e-9 relative), then arg in [0, 2π).
fn order(a: C64, b: C64) -> std::cmp::Ordering {
    let (na, nb) = (a.norm(), b.norm());
    if (na - nb).abs() > 1e-9 * na.max(nb) {
        return na.total_cmp(&nb);
    }
    let turn = |z: C64| {
        let t = z.arg();
        if t < -1e-9 { t + 2.0 * std::f64::consts::PI } else { t.max(0.0) }
    };
    turn(a).total_cmp(&turn(b))
}

/// Magic-angle candidates ±1/λ, λ ∈ Spec T_probe, refined against E₁(·, probe).
/// `count` bounds the number of ± pairs.
pub fn magic_angles(pot: &PotentialPair, n: usize, probe: C64, count: usize, search_radius: f64) -> Result<MagicAngleSet> {
    let solver = BandSolver::new(pot, n)?;
    let block = tk_square_block(pot, &solver.basis, probe)?;
    let mu = dense_eigvals(&block).map_err(|e| {
        let norm = block.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Error::Numeric(format!("eigendecomposition of T_k² block ({}×{}, max entry {norm:e}) failed: {e}", block.nrows(), block.ncols()))
    })?;
    let mut cands: Vec<C64> = mu
        .iter()
        .filter(|m| m.norm() > 1e-300)
        .map(|m| C64::new(1.0, 0.0) / m.sqrt())
        .filter(|a| a.norm() <= search_radius)
        .map(|a| if a.re < 0.0 || (a.re == 0.0 && a.im < 0.0) { -a } else { a })
        .collect();
    cands.sort_by(|a, b| order(*a, *b));
    cands.truncate(count);
    let refined: Vec<MagicAngle> = cands
        .par_iter()
        .map(|&a| {
            let r = refine_magic_at(&solver, a, DEFAULT_PROBE)?;
            let m = kernel_dim_with(&solver, r.alpha, DEFAULT_PROBE, RANK_TOL)?;
            Ok(MagicAngle { alpha: r.alpha, residual: r.residual, multiplicity: m, converged: r.converged })
        })
        .collect::<Result<_>>()?;
    // D(−α) = diag(1, −1)D(α)diag(1, −1), so the negated angle shares every singular value
    let mut angles: Vec<MagicAngle> = Vec::with_capacity(2 * refined.len());
    for a in refined {
        for b in [a, MagicAngle { alpha: -a.alpha, ..a }] {
            // repeated eigenvalues of T_k refine to the same α
            if !angles.iter().any(|c| (c.alpha - b.alpha).norm() < 1e-7) {
                angles.push(b);
            }
        }
    }
    angles.sort_by(|a, b| order(a.alpha, b.alpha));
    Ok(MagicAngleSet { angles, truncation: n, probe })
}

pub fn kernel_dim_with(solver: &BandSolver, alpha: C64, k: C64, tol: f64) -> Result<usize> {
    let count = 4.min(solver.basis.len());
    let vals = solver.bands(alpha, k, count)?;
    let cut = tol * solver.largest(alpha, k);
    Ok(vals.iter().filter(|&&v| v < cut).count())
}

/// Number of singular values of D(α)+k below tol·σ_max (tol defaults to 1e-7).
pub fn kernel_dim(alpha: C64, pot: &PotentialPair, k: C64, n: usize, tol: Option<f64>) -> Result<usize> {
    kernel_dim_with(&BandSolver::new(pot, n)?, alpha, k, tol.unwrap_or(RANK_TOL))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flatness {
    pub max_e1: f64,
    pub argmax: C64,
    pub min_e2: f64,
}

pub fn flatness_scan_with(solver: &BandSolver, alpha: C64, grid: usize) -> Result<Flatness> {
    let bands = BandGrid::compute(solver, alpha, grid, 2)?;
    let mut out = Flatness { max_e1: f64::NEG_INFINITY, argmax: ZERO, min_e2: f64::INFINITY };
    for ((_, _, k), v) in bands.points.iter().zip(&bands.values) {
        if v[0] > out.max_e1 {
            out.max_e1 = v[0];
            out.argmax = *k;
        }
        out.min_e2 = out.min_e2.min(v[1]);
    }
    Ok(out)
}

pub fn flatness_scan(alpha: C64, pot: &PotentialPair, grid: usize, n: usize) -> Result<Flatness> {
    flatness_scan_with(&BandSolver::new(pot, n)?, alpha, grid)
}

#[derive(Clone, Debug)]
pub struct RescaledBand {
    pub points: Vec<(f64, f64, C64)>,
    pub e1: Vec<f64>,
    /// |U(z(k))|
    pub potential: Vec<f64>,
    /// |2∂_zU(−4√3πik/9)|
    pub derivative: Vec<f64>,
    pub distance_potential: f64,
    pub distance_derivative: f64,
}

fn normalized(v: Vec<f64>) -> Result<Vec<f64>> {
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m <= 0.0 {
        return Err(Error::Numeric("comparator vanishes on the grid".into()));
    }
    Ok(v.into_iter().map(|x| x / m).collect())
}

fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Ê₁ = E₁/max E₁ over the grid, with the two potential comparators.
pub fn rescaled_band(alpha: C64, pot: &PotentialPair, grid: usize, n: usize) -> Result<RescaledBand> {
    let solver = BandSolver::new(pot, n)?;
    let bands = BandGrid::compute(&solver, alpha, grid, 1)?;
    let e1: Vec<f64> = bands.band(0).collect();
    let top = e1.iter().cloned().fold(0.0, f64::max);
    if top < 1e-8 {
        return Err(Error::Invalid(format!("max E₁ = {top:e}: α is numerically magic, offset α before rescaling")));
    }
    let u = &pot.u_plus;
    let potential = bands.points.iter().map(|&(_, _, k)| u.eval(crate::lattice::zmap(k)).norm()).collect();
    let scale = -4.0 * 3f64.sqrt() * std::f64::consts::PI * I / 9.0;
    let derivative = bands
        .points
        .iter()
        .map(|&(_, _, k)| {
            let z = scale * k;
            u.terms.iter().map(|t| t.coeff * I * t.frequency.conj() * C64::from_polar(1.0, pairing(z, t.frequency))).sum::<C64>().norm()
        })
        .collect();
    let e1 = normalized(e1)?;
    let potential = normalized(potential)?;
    let derivative = normalized(derivative)?;
    Ok(RescaledBand {
        distance_potential: rms_distance(&e1, &potential),
        distance_derivative: rms_distance(&e1, &derivative),
        points: bands.points,
        e1,
        potential,
        derivative,
    })
}

/// |⟨Vu, Qu⟩|/(‖u‖‖Qu‖) for u spanning ker(D(α)+k); Q is coefficient conjugation.
pub fn de1_dalpha_with(solver: &BandSolver, alpha: C64, k: C64) -> Result<f64> {
    let t = solver.svd(alpha, k, 2)?;
    let cut = RANK_TOL * solver.largest(alpha, k);
    let dim = t.values.iter().filter(|&&v| v < cut).count();
    if dim != 1 {
        return Err(Error::Multiplicity(dim));
    }
    let x: Vec<C64> = t.right.column(0).to_vec();
    let vx = solver.apply_coupling(&x);
    // ⟨Vx, Qx⟩ = Σ (Vx)_i x_i since (Qx)̄ = x
    let s: C64 = vx.iter().zip(&x).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>();
    Ok(s.norm() / nx)
}

pub fn de1_dalpha(alpha: C64, pot: &PotentialPair, k: C64, n: usize) -> Result<f64> {
    de1_dalpha_with(&BandSolver::new(pot, n)?, alpha, k)
}

/// Symmetric difference quotient (E₁(α+h) + E₁(α−h))/(2h); E₁ has a kink at a magic α.
pub fn de1_dalpha_fd(solver: &BandSolver, alpha: C64, k: C64, h: f64) -> Result<f64> {
    let p = solver.bands(alpha + h, k, 1)?[0];
    let m = solver.bands(alpha - h, k, 1)?[0];
    Ok((p + m) / (2.0 * h))
}

/// The three rotation-fixed momenta Γ = 0, K, −K.
pub fn fixed_points() -> [C64; 3] {
    [ZERO, C64::new(K, 0.0), C64::new(-K, 0.0)]
}
