//! Moiré lattice Λ = ℤ ⊕ ωℤ, its dual Λ* = (4πi/√3)Λ, and the coordinate
//! conventions used throughout the crate.

use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;

pub const SQRT3: f64 = 1.732_050_807_568_877_2;
pub const OMEGA: C64 = C64::new(-0.5, SQRT3 / 2.0);
pub const OMEGA_BAR: C64 = C64::new(-0.5, -SQRT3 / 2.0);
pub const K: f64 = 4.0 * PI / 3.0;
pub const ZS: C64 = C64::new(0.0, 1.0 / SQRT3);
/// Scale factor taking Λ to Λ*.
pub const DUAL_SCALE: C64 = C64::new(0.0, 4.0 * PI / SQRT3);
pub const I: C64 = C64::new(0.0, 1.0);

const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lattice {
    /// Λ = ℤ ⊕ ωℤ
    Direct,
    /// Λ* = (4πi/√3)Λ
    Dual,
}

impl Lattice {
    pub fn scale(self) -> C64 {
        match self {
            Lattice::Direct => C64::new(1.0, 0.0),
            Lattice::Dual => DUAL_SCALE,
        }
    }

    pub fn generators(self) -> [C64; 2] {
        let s = self.scale();
        [s, s * OMEGA]
    }

    pub fn point(self, m: i64, n: i64) -> C64 {
        self.scale() * (C64::new(m as f64, 0.0) + OMEGA * n as f64)
    }

    /// Real coordinates (x, y) with z = scale·(x + yω).
    pub fn frac_coords(self, z: C64) -> (f64, f64) {
        let w = z / self.scale();
        let y = w.im / (SQRT3 / 2.0);
        let x = w.re + y / 2.0;
        (x, y)
    }

    pub fn from_frac(self, x: f64, y: f64) -> C64 {
        self.scale() * (C64::new(x, 0.0) + OMEGA * y)
    }

    /// Integer coordinates of z if z lies on the lattice.
    pub fn coords(self, z: C64) -> Option<(i64, i64)> {
        let (x, y) = self.frac_coords(z);
        let (mr, nr) = (x.round(), y.round());
        if (x - mr).abs() < MEMBERSHIP_TOL && (y - nr).abs() < MEMBERSHIP_TOL {
            Some((mr as i64, nr as i64))
        } else {
            None
        }
    }

    pub fn contains(self, z: C64) -> bool {
        self.coords(z).is_some()
    }

    /// Representative of z modulo the lattice in the half-open cell [0,1)².
    pub fn reduce(self, z: C64) -> C64 {
        let (x, y) = self.frac_coords(z);
        self.from_frac(unit_frac(x), unit_frac(y))
    }

    /// Distance from z to the nearest lattice point.
    pub fn distance(self, z: C64) -> f64 {
        let (x, y) = self.frac_coords(z);
        let (x0, y0) = (x.floor(), y.floor());
        let mut best = f64::INFINITY;
        for dx in -1..=2 {
            for dy in -1..=2 {
                let p = self.from_frac(x0 + dx as f64, y0 + dy as f64);
                best = best.min((z - p).norm());
            }
        }
        best
    }
}

fn unit_frac(x: f64) -> f64 {
    let f = x - x.floor();
    if !(1e-12..=1.0 - 1e-12).contains(&f) {
        0.0
    } else {
        f
    }
}

/// A point of Λ or Λ* with exact integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub lattice: Lattice,
    pub m: i64,
    pub n: i64,
}

impl LatticePoint {
    pub fn new(lattice: Lattice, m: i64, n: i64) -> Self {
        Self { lattice, m, n }
    }

    pub fn value(&self) -> C64 {
        self.lattice.point(self.m, self.n)
    }

    pub fn from_value(lattice: Lattice, z: C64) -> Option<Self> {
        lattice.coords(z).map(|(m, n)| Self { lattice, m, n })
    }
}

/// The fixed data of the hexagonal moiré geometry.
#[derive(Clone, Copy, Debug)]
pub struct LatticeSpec {
    pub omega: C64,
    pub direct: [C64; 2],
    pub dual: [C64; 2],
    pub k: f64,
    pub zs: C64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            omega: OMEGA,
            direct: Lattice::Direct.generators(),
            dual: Lattice::Dual.generators(),
            k: K,
            zs: ZS,
        }
    }
}

/// ⟨z, w⟩ = Re(z w̄).
pub fn pairing(z: C64, w: C64) -> f64 {
    (z * w.conj()).re
}

/// z(k) = √3k/(4πi), mapping Λ* onto Λ.
pub fn zmap(k: C64) -> C64 {
    k / DUAL_SCALE
}

pub fn kmap(z: C64) -> C64 {
    z * DUAL_SCALE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ZToZeta,
    ZetaToZ,
}

const ZETA_SCALE: C64 = C64::new(0.0, 4.0 * PI / 3.0);

/// Position variables: ζ = (4/3)πi z.
pub fn translate_coordinates(value: C64, direction: Direction) -> C64 {
    match direction {
        Direction::ZToZeta => value * ZETA_SCALE,
        Direction::ZetaToZ => value / ZETA_SCALE,
    }
}

/// Momentum variables: k̃ = 3k/(4πi), the dual of the position change.
pub fn translate_momentum(value: C64, direction: Direction) -> C64 {
    match direction {
        Direction::ZToZeta => value / ZETA_SCALE,
        Direction::ZetaToZ => value * ZETA_SCALE,
    }
}

/// Frequency f with e^{i⟨z,f⟩} = e^{ζ̄w − ζw̄} when ζ = (4/3)πi z.
pub fn zeta_wave_to_frequency(w: C64) -> C64 {
    let s = translate_coordinates(C64::new(1.0, 0.0), Direction::ZToZeta);
    C64::new(0.0, 2.0) * s * w
}

pub fn k_point() -> C64 {
    C64::new(K, 0.0)
}

/// Representatives {0, K, −K} of 𝒦 = {k : ωk ≡ k mod Λ*}.
pub fn high_symmetry_points() -> [C64; 3] {
    [C64::new(0.0, 0.0), k_point(), -k_point()]
}

pub fn is_rotation_fixed(k: C64) -> bool {
    Lattice::Dual.contains(OMEGA * k - k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn pairing_one_plus_omega_with_k_gives_omega_phase() {
        let v = pairing(C64::new(1.0, 0.0) + OMEGA, k_point());
        assert!(close(C64::from_polar(1.0, v), OMEGA, 1e-14));
        assert_eq!(pairing(C64::new(0.0, 0.0), C64::new(3.0, -2.0)), 0.0);
        let v = pairing(C64::new(1.0, 0.0), DUAL_SCALE * OMEGA);
        assert!((v + 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn zmap_values() {
        assert!(close(zmap(-k_point()), ZS, 1e-15));
        assert!(close(zmap(k_point()), -ZS, 1e-15));
        for p in Lattice::Dual.generators() {
            assert!(Lattice::Direct.contains(zmap(p)));
        }
    }

    #[test]
    fn structural_identities() {
        assert!(Lattice::Dual.contains(OMEGA * K - K));
        assert!(Lattice::Dual.contains(C64::new(3.0 * K, 0.0)));
        assert!(!Lattice::Dual.contains(C64::new(K, 0.0)));
        assert!(Lattice::Direct.contains(OMEGA * ZS - ZS));
        assert_eq!(Lattice::Dual.coords(C64::new(3.0 * K, 0.0)), Some((-1, -2)));
        let hs = high_symmetry_points();
        assert!(hs.iter().all(|&k| is_rotation_fixed(k)));
        assert!(!is_rotation_fixed(C64::new(K / 2.0, 0.0)));
    }

    #[test]
    fn coordinate_translation() {
        let zeta = translate_coordinates(ZS, Direction::ZToZeta);
        assert!(close(zeta * (3.0 / (4.0 * PI * I)), ZS, 1e-15));
        let kt = translate_momentum(k_point(), Direction::ZToZeta);
        assert!(close(kt, C64::new(0.0, -1.0), 1e-15));
        // 𝒦 lands on {−i, 0, i}, the three rotation-fixed momenta of the ζ-convention
        let mut image: Vec<C64> = high_symmetry_points()
            .iter()
            .map(|&k| translate_momentum(k, Direction::ZToZeta))
            .collect();
        image.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        for (z, t) in image.iter().zip([-1.0, 0.0, 1.0]) {
            assert!(close(*z, C64::new(0.0, t), 1e-14));
        }
        // (1/3)Γ ↔ Λ
        let a = translate_coordinates(C64::new(1.0, 0.0), Direction::ZToZeta);
        assert!(close(a, C64::new(0.0, 4.0 * PI / 3.0), 1e-15));
    }

    #[test]
    fn reduce_is_half_open() {
        let z = Lattice::Direct.point(3, -2) + C64::new(0.25, 0.1);
        let r = Lattice::Direct.reduce(z);
        let (x, y) = Lattice::Direct.frac_coords(r);
        assert!((0.0..1.0).contains(&x) && (0.0..1.0).contains(&y));
        assert!(Lattice::Direct.contains(z - r));
        assert_eq!(Lattice::Dual.reduce(Lattice::Dual.point(5, 7)), C64::new(0.0, 0.0));
    }

    proptest! {
        #[test]
        fn pairing_is_dual(m1 in -10i64..=10, n1 in -10i64..=10, m2 in -10i64..=10, n2 in -10i64..=10) {
            let v = pairing(Lattice::Direct.point(m1, n1), Lattice::Dual.point(m2, n2)) / (2.0 * PI);
            prop_assert!((v - v.round()).abs() < 1e-12);
        }

        #[test]
        fn zmap_commutes_with_rotation(re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let k = C64::new(re, im);
            prop_assert!(close(zmap(OMEGA * k), OMEGA * zmap(k), 1e-13));
        }

        #[test]
        fn translation_round_trips(re in -50.0f64..50.0, im in -50.0f64..50.0) {
            let z = C64::new(re, im);
            let back = translate_coordinates(translate_coordinates(z, Direction::ZToZeta), Direction::ZetaToZ);
            prop_assert!((back - z).norm() <= 1e-15 * z.norm().max(1e-300) * 4.0);
        }

        #[test]
        fn integer_coordinates_round_trip(m in -1000i64..1000, n in -1000i64..1000) {
            for lat in [Lattice::Direct, Lattice::Dual] {
                let p = LatticePoint::new(lat, m, n);
                prop_assert_eq!(LatticePoint::from_value(lat, p.value()), Some(p));
            }
        }
    }
}
