//! The flat-band line bundle k ↦ u(k) = F_{k−K}(z − z₀)u_K: h(k), Berry curvature,
//! Chern numbers by quadrature, plaquettes and multiplier windings.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, C64, I, K, SQRT3};
use crate::potential::PotentialPair;
use crate::protected::{protected_state_with, reference_zero, BlochState};
use crate::spectra::BandSolver;
use crate::theta::{log_increment, multiplier_e, ThetaGrid};
use rayon::prelude::*;
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
/// dz(k)/dk
const SIGMA: C64 = C64::new(0.0, -SQRT3 / (4.0 * PI));

pub const DEFAULT_NZ: usize = 96;

/// Area of the Λ* cell.
pub fn dual_cell_area() -> f64 {
    8.0 * PI * PI / SQRT3
}

pub struct BlochFamily {
    pub alpha: C64,
    pub solver: BandSolver,
    pub u_k: BlochState,
    pub z0: C64,
    pub nz: usize,
    /// u_K at the grid points, row-major in the first fractional coordinate
    samples: Vec<[C64; 2]>,
    /// Im ζ for ζ = z − z₀ reduced into the cell
    im_zeta: Vec<f64>,
    /// θ(ζ) at the grid points
    theta_zeta: Vec<C64>,
    grid: ThetaGrid,
}

/// Position-space values of u(k) with ∂_k u(k).
pub struct Section {
    pub u: Vec<[C64; 2]>,
    pub du: Vec<[C64; 2]>,
}

fn frac_unit(x: f64) -> f64 {
    x - x.floor()
}

impl BlochFamily {
    pub fn new(alpha: C64, pot: &PotentialPair, n: usize, nz: usize) -> Result<Self> {
        Self::with_solver(BandSolver::new(pot, n)?, alpha, nz)
    }

    pub fn with_solver(solver: BandSolver, alpha: C64, nz: usize) -> Result<Self> {
        let u_k = protected_state_with(&solver, alpha, C64::new(K, 0.0))?;
        if u_k.residual >= 1e-9 {
            return Err(Error::Truncation(u_k.residual));
        }
        let z0 = reference_zero(&u_k)?;
        let (x0, y0) = Lattice::Direct.frac_coords(z0);
        let pts: Vec<f64> = (0..nz).map(|i| (i as f64 + 0.5) / nz as f64).collect();
        let xs: Vec<f64> = pts.iter().map(|&s| frac_unit(s - x0)).collect();
        let ys: Vec<f64> = pts.iter().map(|&t| frac_unit(t - y0)).collect();
        let grid = ThetaGrid::new(xs.clone(), ys.clone());
        let theta_zeta = grid.eval(ZERO).into_iter().map(|v| v.0).collect();
        let mut samples = Vec::with_capacity(nz * nz);
        let mut im_zeta = Vec::with_capacity(nz * nz);
        let mut top: f64 = 0.0;
        for i in 0..nz {
            for j in 0..nz {
                let u = u_k.evaluate(Lattice::Direct.from_frac(pts[i], pts[j]));
                top = top.max((u[0].norm_sqr() + u[1].norm_sqr()).sqrt());
                samples.push(u);
                im_zeta.push(Lattice::Direct.from_frac(xs[i], ys[j]).im);
            }
        }
        let at = u_k.evaluate(z0);
        if (at[0].norm_sqr() + at[1].norm_sqr()).sqrt() >= 1e-8 * top {
            return Err(Error::Invalid(format!("u_K does not vanish at the located zero {z0}")));
        }
        Ok(Self { alpha, solver, u_k, z0, nz, samples, im_zeta, theta_zeta, grid })
    }

    /// F_{k−K}(ζ) and ∂_kF_{k−K}(ζ) on the grid.
    fn kernel(&self, k: C64) -> Vec<(C64, C64)> {
        let kk = k - K;
        let shifted = self.grid.eval(crate::lattice::zmap(kk));
        shifted
            .iter()
            .zip(&self.im_zeta)
            .zip(&self.theta_zeta)
            .map(|((&(t, dt), &y), &t0)| {
                let e = (-kk * y).exp();
                let f = e * t / t0;
                (f, -y * f - SIGMA * e * dt / t0)
            })
            .collect()
    }

    pub fn section(&self, k: C64) -> Section {
        let kern = self.kernel(k);
        let mut u = Vec::with_capacity(kern.len());
        let mut du = Vec::with_capacity(kern.len());
        for (&(f, df), s) in kern.iter().zip(&self.samples) {
            u.push([f * s[0], f * s[1]]);
            du.push([df * s[0], df * s[1]]);
        }
        Section { u, du }
    }

    /// u(k) at the quadrature points.
    pub fn u_of_k(&self, k: C64) -> Vec<[C64; 2]> {
        self.section(k).u
    }

    /// u(k) at an arbitrary point.
    pub fn u_at(&self, k: C64, z: C64) -> Result<[C64; 2]> {
        let f = crate::theta::fk(k - K, z - self.z0)?;
        let u = self.u_k.evaluate(z);
        Ok([f * u[0], f * u[1]])
    }

    /// Position of quadrature point `idx`.
    pub fn grid_point(&self, idx: usize) -> C64 {
        let (i, j) = (idx / self.nz, idx % self.nz);
        Lattice::Direct.from_frac((i as f64 + 0.5) / self.nz as f64, (j as f64 + 0.5) / self.nz as f64)
    }

    fn mean_inner(&self, a: &[[C64; 2]], b: &[[C64; 2]]) -> C64 {
        a.iter().zip(b).map(|(x, y)| x[0] * y[0].conj() + x[1] * y[1].conj()).sum::<C64>() / a.len() as f64
    }

    /// ‖u(k)‖² as a cell average.
    pub fn h_of_k(&self, k: C64) -> f64 {
        let u = self.u_of_k(k);
        self.mean_inner(&u, &u).re
    }

    /// (‖u‖²‖∂_ku‖² − |⟨∂_ku, u⟩|²)/‖u‖⁴.
    pub fn curvature(&self, k: C64) -> f64 {
        let s = self.section(k);
        let uu = self.mean_inner(&s.u, &s.u).re;
        let dd = self.mean_inner(&s.du, &s.du).re;
        let du = self.mean_inner(&s.du, &s.u);
        (uu * dd - du.norm_sqr()) / (uu * uu)
    }

    /// −Im⟨∂₁φ, ∂₂φ⟩ for φ = e^{iγ(k)}u/‖u‖; `gauge` returns (γ, ∂₁γ, ∂₂γ).
    pub fn berry_with_gauge(&self, k: C64, gauge: impl Fn(C64) -> (f64, f64, f64)) -> f64 {
        let s = self.section(k);
        let h = self.mean_inner(&s.u, &s.u).re;
        let nrm = h.sqrt();
        // ∂₁u = u′, ∂₂u = iu′ for holomorphic u; ∂_j‖u‖ = Re⟨∂_ju, u⟩/‖u‖
        let d1n = self.mean_inner(&s.du, &s.u).re / nrm;
        let d2n = (I * self.mean_inner(&s.du, &s.u)).re / nrm;
        let (g, g1, g2) = gauge(k);
        let ph = C64::from_polar(1.0, g);
        let phi_d = |j: usize| -> Vec<[C64; 2]> {
            let (dn, gj, dir) = if j == 1 { (d1n, g1, C64::new(1.0, 0.0)) } else { (d2n, g2, I) };
            s.u.iter()
                .zip(&s.du)
                .map(|(u, d)| {
                    let f = |a: C64, b: C64| ph * (I * gj * a / nrm + dir * b / nrm - a * dn / h);
                    [f(u[0], d[0]), f(u[1], d[1])]
                })
                .collect()
        };
        -self.mean_inner(&phi_d(1), &phi_d(2)).im
    }

    pub fn berry(&self, k: C64) -> f64 {
        self.berry_with_gauge(k, |_| (0.0, 0.0, 0.0))
    }
}

/// Midpoints ((a + ½)/n, (b + ½)/n) of the Λ* cell.
fn midpoints(n: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            out.push(Lattice::Dual.from_frac((a as f64 + 0.5) / n as f64, (b as f64 + 0.5) / n as f64));
        }
    }
    out
}

/// −(1/π)∫H dA over the Λ* cell, midpoint rule.
pub fn chern_integral(fam: &BlochFamily, n: usize) -> f64 {
    let sum: f64 = midpoints(n).par_iter().map(|&k| fam.curvature(k)).collect::<Vec<_>>().iter().sum();
    -sum * dual_cell_area() / (n * n) as f64 / PI
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaquetteChern {
    pub value: i64,
    pub raw: f64,
    pub rounding_residual: f64,
    pub min_overlap: f64,
}

/// Link-variable Chern number from vectors at the (n+1)² vertices k = (a/n)p₁ + (b/n)p₂.
fn plaquette_sum(n: usize, vertex: &[Vec<C64>]) -> Result<PlaquetteChern> {
    let at = |a: usize, b: usize| &vertex[a * (n + 1) + b];
    // ⟨x, y⟩ linear in x, as everywhere else in the crate
    let link = |x: &Vec<C64>, y: &Vec<C64>| -> (C64, f64) {
        let s: C64 = x.iter().zip(y).map(|(p, q)| p * q.conj()).sum();
        let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let m = s.norm() / (nx * ny);
        (s / s.norm(), m)
    };
    let mut total = 0.0;
    let mut min_overlap: f64 = 1.0;
    for a in 0..n {
        for b in 0..n {
            let (l1, m1) = link(at(a, b), at(a + 1, b));
            let (l2, m2) = link(at(a + 1, b), at(a + 1, b + 1));
            let (l3, m3) = link(at(a + 1, b + 1), at(a, b + 1));
            let (l4, m4) = link(at(a, b + 1), at(a, b));
            min_overlap = min_overlap.min(m1).min(m2).min(m3).min(m4);
            total += (l1 * l2 * l3 * l4).arg();
        }
    }
    if min_overlap < 1e-3 {
        return Err(Error::GridTooCoarse(format!("neighbour overlap {min_overlap:e}")));
    }
    let raw = total / (2.0 * PI);
    Ok(PlaquetteChern { value: raw.round() as i64, raw, rounding_residual: (raw - raw.round()).abs(), min_overlap })
}

fn vertices(n: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity((n + 1) * (n + 1));
    for a in 0..=n {
        for b in 0..=n {
            out.push(Lattice::Dual.from_frac(a as f64 / n as f64, b as f64 / n as f64));
        }
    }
    out
}

fn flatten(u: Vec<[C64; 2]>) -> Vec<C64> {
    u.into_iter().flat_map(|v| v.into_iter()).collect()
}

/// Chern number of the theta family on an n×n plaquette grid.
pub fn chern_plaquette(fam: &BlochFamily, n: usize) -> Result<PlaquetteChern> {
    if n < 6 {
        return Err(Error::Invalid("plaquette grid needs n ≥ 6".into()));
    }
    // u(k + p) = e_p(k − K)⁻¹τ(p)⁻¹u(k) up to a constant, so the vertices on the far
    // edges already carry the twisted identification
    let vs: Vec<Vec<C64>> = vertices(n).par_iter().map(|&k| flatten(fam.u_of_k(k))).collect();
    plaquette_sum(n, &vs)
}

/// Chern number from kernel vectors computed independently at every vertex: right singular
/// vectors of D(α)+k, or with `conjugate` the kernels of D(α)* + k̄.
pub fn chern_plaquette_spectral(solver: &BandSolver, alpha: C64, n: usize, conjugate: bool) -> Result<PlaquetteChern> {
    let vs: Vec<Vec<C64>> = vertices(n)
        .par_iter()
        .map(|&k| {
            let t = solver.svd(alpha, k, 1)?;
            Ok(if conjugate { t.left.column(0).to_vec() } else { t.right.column(0).to_vec() })
        })
        .collect::<Result<_>>()?;
    plaquette_sum(n, &vs)
}

/// (i/2π)[log e_{p₂}(c+p₁) − log e_{p₂}(c) + log e_{p₁}(c) − log e_{p₁}(c+p₂)] for the
/// multipliers e_p(k − K), logs continued along the cell edges from the corner c.
pub fn chern_boundary(corner: C64) -> Result<f64> {
    let [p1, p2] = Lattice::Dual.generators();
    let c = corner - K;
    let along_p1 = log_increment(|t| multiplier_e(p2, c + t * p1), 1 << 16)?;
    let along_p2 = log_increment(|t| multiplier_e(p1, c + t * p2), 1 << 16)?;
    let v = I * (along_p1 - along_p2) / (2.0 * PI);
    if v.im.abs() > 1e-8 {
        return Err(Error::Numeric(format!("boundary winding has imaginary part {}", v.im)));
    }
    Ok(v.re)
}

/// Generic base corner for chern_boundary.
pub const DEFAULT_CORNER: C64 = C64::new(0.123, -0.321);

#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub alpha: C64,
    pub grid: usize,
    pub points: Vec<(f64, f64, C64)>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub field: CurvatureField,
    pub argmax: C64,
    pub max: f64,
    /// the two smallest local minima
    pub minima: Vec<(C64, f64)>,
    /// ‖∇H‖ at Γ, K, −K
    pub fixed_gradients: [f64; 3],
    pub max_gradient: f64,
    /// (t, H(it)) along Re k = 0
    pub cross_section: Vec<(f64, f64)>,
}

impl CurvatureField {
    pub fn compute(fam: &BlochFamily, n: usize) -> Self {
        let points = crate::spectra::grid_points(n);
        let values = points.par_iter().map(|&(_, _, k)| fam.curvature(k)).collect();
        Self { alpha: fam.alpha, grid: n, points, values }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k1,k2,H\n");
        for ((a, b, _), h) in self.points.iter().zip(&self.values) {
            out.push_str(&format!("{a:.16e},{b:.16e},{h:.16e}\n"));
        }
        out
    }
}

fn gradient_at(fam: &BlochFamily, k: C64, h: f64) -> f64 {
    let gx = (fam.curvature(k + h) - fam.curvature(k - h)) / (2.0 * h);
    let gy = (fam.curvature(k + I * h) - fam.curvature(k - I * h)) / (2.0 * h);
    gx.hypot(gy)
}

/// Curvature over an n×n grid with extrema and gradients at the rotation-fixed points.
pub fn curvature_report(fam: &BlochFamily, n: usize) -> CurvatureReport {
    let field = CurvatureField::compute(fam, n);
    let v = &field.values;
    let at = |a: i64, b: i64| v[(a.rem_euclid(n as i64) as usize) * n + b.rem_euclid(n as i64) as usize];
    let (imax, &max) = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut minima = Vec::new();
    let mut max_gradient: f64 = 0.0;
    let [p1, p2] = Lattice::Dual.generators();
    let det = p1.re * p2.im - p1.im * p2.re;
    for a in 0..n as i64 {
        for b in 0..n as i64 {
            let h = at(a, b);
            let is_min = (-1..=1).all(|da| (-1..=1).all(|db| (da == 0 && db == 0) || at(a + da, b + db) > h));
            if is_min {
                minima.push((field.points[(a as usize) * n + b as usize].2, h));
            }
            // directional derivatives along p₁, p₂ converted to a k-plane gradient
            let da = (at(a + 1, b) - at(a - 1, b)) * n as f64 / 2.0;
            let db = (at(a, b + 1) - at(a, b - 1)) * n as f64 / 2.0;
            let gx = (da * p2.im - db * p1.im) / det;
            let gy = (db * p1.re - da * p2.re) / det;
            max_gradient = max_gradient.max(gx.hypot(gy));
        }
    }
    minima.sort_by(|x, y| x.1.total_cmp(&y.1));
    minima.truncate(2);
    let fixed = crate::spectra::fixed_points();
    let fixed_gradients = [gradient_at(fam, fixed[0], 1e-3), gradient_at(fam, fixed[1], 1e-3), gradient_at(fam, fixed[2], 1e-3)];
    let span = 4.0 * PI / SQRT3;
    let cross_section = (0..=64)
        .map(|j| {
            let t = -span + 2.0 * span * j as f64 / 64.0;
            (t, fam.curvature(I * t))
        })
        .collect();
    CurvatureReport { argmax: field.points[imax].2, max, minima, fixed_gradients, max_gradient, field, cross_section }
}
