//! θ(z) = θ₁(z|ω), the quasi-periodic kernel F_k, c(k), the multipliers e_p(k)
//! and a Fourier oracle for the Green kernel of 2D_z̄ + k on ℂ/Λ.

use crate::error::{Error, Result};
use crate::lattice::{pairing, zmap, Lattice, C64, I, OMEGA, SQRT3};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Terms with |n + 1/2| ≤ THETA_CUTOFF.
pub const THETA_CUTOFF: i64 = 12;
pub const POLE_TOL: f64 = 1e-13;

const HALF: f64 = 0.5;

fn nome_term(n: i64) -> (f64, C64) {
    let h = n as f64 + HALF;
    (h, I * PI * h * h * OMEGA)
}

/// Direct series; `shift` = number of ω-periods removed before summation.
fn series(z: C64) -> (C64, C64) {
    let mut th = C64::new(0.0, 0.0);
    let mut dth = C64::new(0.0, 0.0);
    for n in -THETA_CUTOFF..THETA_CUTOFF {
        let (h, a) = nome_term(n);
        let t = (a + 2.0 * PI * I * h * (z + HALF)).exp();
        th -= t;
        dth -= 2.0 * PI * I * h * t;
    }
    (th, dth)
}

/// θ and θ′ at z, reducing Im z into a strip of width Im ω first.
pub fn theta_and_prime(z: C64) -> (C64, C64) {
    let n = (z.im / (SQRT3 / 2.0)).round();
    if n == 0.0 {
        return series(z);
    }
    // θ(w + nω) = (−1)ⁿ e^{−πin²ω − 2πinw} θ(w)
    let w = z - OMEGA * n;
    let (t, dt) = series(w);
    let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
    let f = sign * (-I * PI * n * n * OMEGA - 2.0 * PI * I * n * w).exp();
    (f * t, f * (dt - 2.0 * PI * I * n * t))
}

pub fn theta(z: C64) -> C64 {
    theta_and_prime(z).0
}

pub fn theta_prime(z: C64) -> C64 {
    theta_and_prime(z).1
}

/// θ′(0), computed once.
pub fn theta_prime_zero() -> C64 {
    static V: OnceLock<C64> = OnceLock::new();
    *V.get_or_init(|| series(C64::new(0.0, 0.0)).1)
}

/// F_k(z) = e^{(i/2)(z−z̄)k} θ(z − z(k))/θ(z).
pub fn fk(k: C64, z: C64) -> Result<C64> {
    let den = theta(z);
    if den.norm() < POLE_TOL {
        return Err(Error::ThetaPole(z));
    }
    Ok((-k * z.im).exp() * theta(z - zmap(k)) / den)
}

/// c(k) = 2πi θ(z(k))/θ′(0).
pub fn c_of_k(k: C64) -> C64 {
    2.0 * PI * I * theta(zmap(k)) / theta_prime_zero()
}

/// e_p(k) = θ(z(k))/θ(z(k+p)).
pub fn multiplier_e(p: C64, k: C64) -> Result<C64> {
    let num = theta(zmap(k));
    let den = theta(zmap(k + p));
    if den.norm() < POLE_TOL || num.norm() < POLE_TOL {
        return Err(Error::ThetaPole(zmap(k + p)));
    }
    Ok(num / den)
}

/// (−1)^{m+n} e^{iπn²ω + 2πinz(k)} for z(p) = m + nω.
pub fn multiplier_closed_form(p: C64, k: C64) -> Result<C64> {
    let (m, n) = Lattice::Direct
        .coords(zmap(p))
        .ok_or_else(|| Error::Invalid(format!("{p} is not in Λ*")))?;
    let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let nf = n as f64;
    Ok(sign * (I * PI * nf * nf * OMEGA + 2.0 * PI * I * nf * zmap(k)).exp())
}

/// Change of a continuous branch of log f along t ∈ [0, 1], refining until every
/// step turns the argument by less than π/2.
pub fn log_increment(f: impl Fn(f64) -> Result<C64>, max_steps: usize) -> Result<C64> {
    let mut steps = 16;
    'outer: while steps <= max_steps {
        let mut prev = f(0.0)?;
        let start = prev;
        let mut arg = 0.0;
        for i in 1..=steps {
            let cur = f(i as f64 / steps as f64)?;
            let d = (cur / prev).arg();
            if d.abs() >= PI / 2.0 {
                steps *= 2;
                continue 'outer;
            }
            arg += d;
            prev = cur;
        }
        return Ok(C64::new((prev.norm() / start.norm()).ln(), arg));
    }
    Err(Error::Numeric(format!("branch tracking rejected steps up to {max_steps}")))
}

/// (1/|cell|) Σ_{|m|,|n|≤cutoff} e^{i⟨z,p⟩} e^{−ε|p+k|²}/(p+k), the Gaussian-damped
/// Fourier series of (2D_z̄ + k)⁻¹δ₀.
pub fn green_fourier(k: C64, z: C64, cutoff: i64, eps: f64) -> C64 {
    let area = SQRT3 / 2.0;
    let mut acc = C64::new(0.0, 0.0);
    for m in -cutoff..=cutoff {
        for n in -cutoff..=cutoff {
            let p = Lattice::Dual.point(m, n);
            let pk = p + k;
            acc += C64::from_polar((-eps * pk.norm_sqr()).exp(), pairing(z, p)) / pk;
        }
    }
    acc / area
}

/// θ(w − c) and θ′(w − c) for w = x + yω on a product grid of Λ-fractional coordinates.
pub struct ThetaGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// e^{2πi(n+½)x} and e^{2πi(n+½)yω}, indexed [term][coordinate]
    ex: Vec<Vec<C64>>,
    ey: Vec<Vec<C64>>,
}

impl ThetaGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let terms: Vec<f64> = (-THETA_CUTOFF..THETA_CUTOFF).map(|n| n as f64 + HALF).collect();
        let ex = terms.iter().map(|&h| xs.iter().map(|&x| (2.0 * PI * I * h * x).exp()).collect()).collect();
        let ey = terms.iter().map(|&h| ys.iter().map(|&y| (2.0 * PI * I * h * y * OMEGA).exp()).collect()).collect();
        Self { xs, ys, ex, ey }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    pub fn point(&self, i: usize, j: usize) -> C64 {
        Lattice::Direct.from_frac(self.xs[i], self.ys[j])
    }

    /// Values (θ, θ′) at w − c in row-major order (x index outer).
    pub fn eval(&self, c: C64) -> Vec<(C64, C64)> {
        let n = (c.im / (SQRT3 / 2.0)).round();
        let c0 = c - OMEGA * n;
        let (nx, ny) = self.shape();
        let mut th = vec![C64::new(0.0, 0.0); nx * ny];
        let mut dth = vec![C64::new(0.0, 0.0); nx * ny];
        for (t, nn) in (-THETA_CUTOFF..THETA_CUTOFF).enumerate() {
            let (h, a) = nome_term(nn);
            let amp = -(a + 2.0 * PI * I * h * (HALF - c0)).exp();
            let dfac = 2.0 * PI * I * h;
            for i in 0..nx {
                let ax = amp * self.ex[t][i];
                for j in 0..ny {
                    let v = ax * self.ey[t][j];
                    th[i * ny + j] += v;
                    dth[i * ny + j] += dfac * v;
                }
            }
        }
        if n == 0.0 {
            return th.into_iter().zip(dth).collect();
        }
        // θ(w − c₀ − nω) = (−1)ⁿ e^{−πin²ω + 2πin(w − c₀)} θ(w − c₀)
        let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
        let mut out = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let w = self.point(i, j) - c0;
                let f = sign * (-I * PI * n * n * OMEGA + 2.0 * PI * I * n * w).exp();
                let (t, d) = (th[i * ny + j], dth[i * ny + j]);
                out.push((f * t, f * (d + 2.0 * PI * I * n * t)));
            }
        }
        out
    }
}

/// min |θ| over the fundamental cell outside disks of the given radius around Λ, on an n×n grid.
pub fn theta_floor(n: usize, radius: f64) -> f64 {
    let mut best = f64::INFINITY;
    for s in 0..=n {
        for t in 0..=n {
            let z = Lattice::Direct.from_frac(s as f64 / n as f64, t as f64 / n as f64);
            if Lattice::Direct.distance(z) < radius {
                continue;
            }
            best = best.min(theta(z).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{K, ZS};
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn theta_vanishes_at_origin_and_is_odd() {
        assert!(theta(C64::new(0.0, 0.0)).norm() < 1e-12);
        let z = C64::new(-0.3, 0.1);
        assert!(close(theta(z), -theta(-z), 1e-12));
        let z = C64::new(0.2, 0.4);
        assert!((theta(z + 1.0) + theta(z)).norm() < 1e-12);
    }

    #[test]
    fn theta_prime_matches_finite_difference() {
        let z = C64::new(0.31, 0.22);
        let h = 1e-5;
        let fd = (theta(z + h) - theta(z - h)) / (2.0 * h);
        assert!(close(theta_prime(z), fd, 1e-8));
        assert!(close(theta_prime_zero(), theta_prime(C64::new(0.0, 0.0)), 1e-14));
    }

    #[test]
    fn reduction_agrees_with_direct_series() {
        for z in [C64::new(0.3, 1.4), C64::new(-0.2, -2.1), C64::new(0.7, 2.9)] {
            let (a, da) = theta_and_prime(z);
            let (b, db) = series(z);
            assert!(close(a, b, 1e-11), "{z}");
            assert!(close(da, db, 1e-10), "{z}");
        }
    }

    #[test]
    fn theta_floor_outside_lattice_disks() {
        // committed lower bound for min |θ| at distance ≥ 0.05 from Λ
        assert!(theta_floor(120, 0.05) > 0.05);
    }

    #[test]
    fn fk_periodicity_and_zero() {
        let k = C64::new(0.7, 0.4);
        let z = C64::new(0.33, 0.21);
        let f = fk(k, z).unwrap();
        assert!(close(fk(k, z + 1.0).unwrap(), f, 1e-10));
        assert!(close(fk(k, z + OMEGA).unwrap(), f, 1e-10));
        assert!(fk(k, zmap(k)).unwrap().norm() < 1e-12);
        assert_eq!(fk(C64::new(0.0, 0.0), z).unwrap(), C64::new(1.0, 0.0));
        assert!(matches!(fk(k, C64::new(0.0, 0.0)), Err(Error::ThetaPole(_))));
    }

    #[test]
    fn c_of_k_values() {
        assert!(c_of_k(C64::new(0.0, 0.0)).norm() < 1e-12);
        for k in [C64::new(0.3, 0.1), C64::new(K, 0.0), C64::new(-2.0, 5.0)] {
            assert!(c_of_k(k).norm() > 1e-3);
        }
    }

    #[test]
    fn multiplier_cocycle_and_translation() {
        let [p1, p2] = Lattice::Dual.generators();
        let k = C64::new(0.37, -0.81);
        let lhs = multiplier_e(p1 + p2, k).unwrap();
        let rhs = multiplier_e(p2, k + p1).unwrap() * multiplier_e(p1, k).unwrap();
        assert!(close(lhs, rhs, 1e-10));
        assert_eq!(multiplier_e(C64::new(0.0, 0.0), k).unwrap(), C64::new(1.0, 0.0));
        let z = C64::new(0.21, 0.43);
        for p in [p1, p2, p1 - p2 * 2.0] {
            let lhs = fk(k + p, z).unwrap();
            let rhs = fk(k, z).unwrap() * C64::from_polar(1.0, -pairing(z, p)) / multiplier_e(p, k).unwrap();
            assert!(close(lhs, rhs, 1e-10));
        }
    }

    #[test]
    fn closed_form_multiplier() {
        let k = C64::new(0.37, -0.81);
        for (m, n) in [(1, 0), (0, 1), (2, -1), (-1, 3)] {
            let p = Lattice::Dual.point(m, n);
            let ratio = multiplier_e(p, k).unwrap();
            assert!(close(multiplier_closed_form(p, k).unwrap(), ratio, 1e-9));
        }
        // the exponent without the factor n on z(k) fails already for p with z(p) = ω
        let p = Lattice::Dual.point(0, 1);
        let printed = -(I * PI * OMEGA + C64::new(2.0 * PI, 0.0) * zmap(k)).exp();
        assert!((printed - multiplier_e(p, k).unwrap()).norm() > 1e-3);
    }

    #[test]
    fn delta_identity_away_from_lattice() {
        // (2D_z̄ + k)F_k = 0 off Λ, with 2D_z̄ = −i∂_x + ∂_y and a 4th-order stencil
        let k = C64::new(0.8, -0.3);
        let h = 1e-3;
        let d = |f: &dyn Fn(C64) -> C64, z: C64, dir: C64| {
            (-f(z + dir * 2.0 * h) + f(z + dir * h) * 8.0 - f(z - dir * h) * 8.0 + f(z - dir * 2.0 * h)) / (12.0 * h)
        };
        let f = |z: C64| fk(k, z).unwrap();
        for z in [C64::new(0.4, 0.3), C64::new(-0.2, 0.6), ZS] {
            let dz = -I * d(&f, z, C64::new(1.0, 0.0)) + d(&f, z, I);
            assert!((dz + k * f(z)).norm() < 1e-6);
        }
    }

    #[test]
    fn fourier_green_function() {
        let k = C64::new(0.8, -0.3);
        let c = c_of_k(k);
        for z in [C64::new(0.31, 0.17), C64::new(-0.22, 0.55), C64::new(0.6, -0.4)] {
            let g = green_fourier(k, z, 120, 1e-4);
            assert!(close(g, fk(k, z).unwrap() / c, 1e-6), "{z}");
        }
    }

    #[test]
    fn theta_grid_matches_pointwise() {
        let xs = vec![0.1, 0.45, 0.8];
        let ys = vec![0.05, 0.5, 0.95];
        let g = ThetaGrid::new(xs, ys);
        for c in [C64::new(0.3, 0.2), C64::new(-0.4, 2.3), C64::new(0.1, -1.9)] {
            let vals = g.eval(c);
            for i in 0..3 {
                for j in 0..3 {
                    let (t, d) = theta_and_prime(g.point(i, j) - c);
                    assert!(close(vals[i * 3 + j].0, t, 1e-11));
                    assert!(close(vals[i * 3 + j].1, d, 1e-10));
                }
            }
        }
    }

    #[test]
    fn log_increment_tracks_winding() {
        let f = |t: f64| Ok(C64::from_polar(2.0 + t, 2.0 * PI * 3.0 * t));
        let v = log_increment(f, 1 << 12).unwrap();
        assert!((v.im - 6.0 * PI).abs() < 1e-12);
        assert!((v.re - (1.5f64).ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quasi_periodicity(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let z = Lattice::Direct.from_frac(x, y);
            let t = theta(z);
            prop_assert!(close(theta(z + 1.0), -t, 1e-12));
            let f = -(-I * PI * OMEGA - 2.0 * PI * I * z).exp();
            prop_assert!(close(theta(z + OMEGA), f * t, 1e-12));
            prop_assert!(close(theta(-z), -t, 1e-12));
        }
    }
}
