//! Symmetries ℒ_γ, 𝒞, 𝒲, ℰ, Q, 𝒬 and τ(p) as monomial maps on coefficient vectors.
//!
//! A coefficient vector c on a basis together with a sector momentum k stands for
//! the function τ(k)u_c, u_c(z) = Σ c_q e^{i⟨z,q⟩}. Operators that move the Bloch
//! momentum change the sector and leave the frequency bookkeeping to the basis.

use crate::error::{Error, Result};
use crate::lattice::{is_rotation_fixed, pairing, C64, K, OMEGA, OMEGA_BAR};
use crate::linalg::Sparse;
use crate::planewave::{assemble_hk, component_offset, sparse_d, FrequencyBasis, Spinor};
use crate::potential::PotentialPair;
use ndarray::{Array1, Array2};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SymmetryKind {
    Translation(C64),
    Rotation,
    Chiral,
    ESwap,
    Conjugation,
    SwapConjugation,
    Boost(C64),
    Composite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Linearity {
    Linear,
    Antilinear,
}

/// Affine action k ↦ scale·k + shift on sector momenta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorMap {
    pub scale: C64,
    pub shift: C64,
}

impl SectorMap {
    pub const IDENTITY: SectorMap = SectorMap { scale: C64::new(1.0, 0.0), shift: C64::new(0.0, 0.0) };

    pub fn apply(&self, k: C64) -> C64 {
        self.scale * k + self.shift
    }

    fn then(&self, outer: &SectorMap) -> SectorMap {
        SectorMap { scale: outer.scale * self.scale, shift: outer.scale * self.shift + outer.shift }
    }
}

#[derive(Clone, Debug)]
pub struct SymmetryOperator {
    pub kind: SymmetryKind,
    pub linearity: Linearity,
    pub source: Arc<FrequencyBasis>,
    pub target: Arc<FrequencyBasis>,
    pub sector: SectorMap,
    /// source index ↦ (target index, phase); None when the image leaves the truncation.
    map: Vec<Option<(usize, C64)>>,
}

/// A coefficient vector tagged with its basis and sector momentum.
#[derive(Clone, Debug)]
pub struct SectorVector {
    pub basis: Arc<FrequencyBasis>,
    pub sector: C64,
    pub coeffs: Array1<C64>,
}

const ONE: C64 = C64::new(1.0, 0.0);

fn upper_half(component: usize) -> bool {
    component <= 2
}

impl SymmetryOperator {
    fn from_fn(
        basis: &Arc<FrequencyBasis>,
        kind: SymmetryKind,
        linearity: Linearity,
        sector: SectorMap,
        f: impl Fn(usize, C64) -> Option<(usize, C64, C64)>,
    ) -> Self {
        let map = basis
            .entries
            .iter()
            .map(|e| f(e.component, e.q).and_then(|(c, q, ph)| basis.find_frequency(c, q).map(|j| (j, ph))))
            .collect();
        Self { kind, linearity, source: basis.clone(), target: basis.clone(), sector, map }
    }

    /// ℒ_γ on functions of Bloch momentum k, phases computed entry by entry.
    pub fn translation(basis: &Arc<FrequencyBasis>, gamma: C64, k: C64) -> Self {
        Self::from_fn(basis, SymmetryKind::Translation(gamma), Linearity::Linear, SectorMap::IDENTITY, |c, q| {
            let twist = -component_offset(c) * pairing(gamma, C64::new(K, 0.0));
            Some((c, q, C64::from_polar(1.0, twist + pairing(gamma, q + k))))
        })
    }

    /// 𝒞 (Ω on two-spinors) on the sector k ∈ 𝒦: q ↦ ω̄(q+k) − k, second half of a four-spinor times ω̄.
    pub fn rotation(basis: &Arc<FrequencyBasis>, k: C64) -> Result<Self> {
        if !is_rotation_fixed(k) {
            return Err(Error::Invalid(format!("rotation sector needs k ∈ 𝒦, got {k}")));
        }
        Ok(Self::from_fn(basis, SymmetryKind::Rotation, Linearity::Linear, SectorMap::IDENTITY, |c, q| {
            let ph = if upper_half(c) { ONE } else { OMEGA_BAR };
            Some((c, OMEGA_BAR * (q + k) - k, ph))
        }))
    }

    /// 𝒞 without sector bookkeeping: q ↦ ω̄q, sector k ↦ ω̄k.
    pub fn plain_rotation(basis: &Arc<FrequencyBasis>) -> Self {
        let sector = SectorMap { scale: OMEGA_BAR, shift: C64::new(0.0, 0.0) };
        Self::from_fn(basis, SymmetryKind::Rotation, Linearity::Linear, sector, |c, q| {
            let ph = if upper_half(c) { ONE } else { OMEGA_BAR };
            Some((c, OMEGA_BAR * q, ph))
        })
    }

    /// 𝒲 = diag(1, −1) on ℂ²×ℂ².
    pub fn chiral(basis: &Arc<FrequencyBasis>) -> Result<Self> {
        if basis.spinor != Spinor::Four {
            return Err(Error::BasisMismatch("𝒲 acts on four-spinors".into()));
        }
        Ok(Self::from_fn(basis, SymmetryKind::Chiral, Linearity::Linear, SectorMap::IDENTITY, |c, q| {
            Some((c, q, if upper_half(c) { ONE } else { -ONE }))
        }))
    }

    /// ℰv(z) = Jv(−z), J = [[0, 1], [−1, 0]]; sector k ↦ −k.
    pub fn e_swap(basis: &Arc<FrequencyBasis>) -> Self {
        let sector = SectorMap { scale: -ONE, shift: C64::new(0.0, 0.0) };
        Self::from_fn(basis, SymmetryKind::ESwap, Linearity::Linear, sector, |c, q| {
            // odd components feed the even one below them with −1, even components feed the odd one with +1
            if c % 2 == 1 {
                Some((c + 1, -q, -ONE))
            } else {
                Some((c - 1, -q, ONE))
            }
        })
    }

    /// Qv(z) = conj v(−z): conjugates coefficients in place.
    pub fn conjugation(basis: &Arc<FrequencyBasis>) -> Self {
        Self::from_fn(basis, SymmetryKind::Conjugation, Linearity::Antilinear, SectorMap::IDENTITY, |c, q| {
            Some((c, q, ONE))
        })
    }

    /// 𝒬 = [[0, Q], [Q, 0]] on four-spinors.
    pub fn swap_conjugation(basis: &Arc<FrequencyBasis>) -> Result<Self> {
        if basis.spinor != Spinor::Four {
            return Err(Error::BasisMismatch("𝒬 acts on four-spinors".into()));
        }
        Ok(Self::from_fn(basis, SymmetryKind::SwapConjugation, Linearity::Antilinear, SectorMap::IDENTITY, |c, q| {
            Some((if upper_half(c) { c + 2 } else { c - 2 }, q, ONE))
        }))
    }

    /// τ(p) = multiplication by e^{i⟨z,p⟩}: coefficients unchanged, sector k ↦ k + p.
    pub fn boost(basis: &Arc<FrequencyBasis>, p: C64) -> Self {
        let sector = SectorMap { scale: ONE, shift: p };
        Self::from_fn(basis, SymmetryKind::Boost(p), Linearity::Linear, sector, |c, q| Some((c, q, ONE)))
    }

    pub fn dropped(&self) -> usize {
        self.map.iter().filter(|m| m.is_none()).count()
    }

    pub fn apply(&self, v: &Array1<C64>) -> Result<Array1<C64>> {
        if v.len() != self.source.len() {
            return Err(Error::BasisMismatch(format!("vector of length {} on a basis of {}", v.len(), self.source.len())));
        }
        let mut out = Array1::zeros(self.target.len());
        for (i, m) in self.map.iter().enumerate() {
            if let Some((j, ph)) = *m {
                let x = if self.linearity == Linearity::Antilinear { v[i].conj() } else { v[i] };
                out[j] += ph * x;
            }
        }
        Ok(out)
    }

    pub fn apply_sector(&self, v: &SectorVector) -> Result<SectorVector> {
        if !v.basis.same_frequencies(&self.source) || v.basis.truncation != self.source.truncation {
            return Err(Error::BasisMismatch("operator built for a different basis".into()));
        }
        Ok(SectorVector { basis: self.target.clone(), sector: self.sector.apply(v.sector), coeffs: self.apply(&v.coeffs)? })
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &SymmetryOperator) -> Result<Self> {
        if !inner.target.same_frequencies(&self.source) {
            return Err(Error::BasisMismatch("composition of operators on different bases".into()));
        }
        let anti = self.linearity == Linearity::Antilinear;
        let map = inner
            .map
            .iter()
            .map(|m| {
                let (j, a) = (*m)?;
                let (l, b) = self.map[j]?;
                Some((l, if anti { b * a.conj() } else { b * a }))
            })
            .collect();
        let linearity = if anti == (inner.linearity == Linearity::Antilinear) { Linearity::Linear } else { Linearity::Antilinear };
        Ok(Self {
            kind: SymmetryKind::Composite,
            linearity,
            source: inner.source.clone(),
            target: self.target.clone(),
            sector: inner.sector.then(&self.sector),
            map,
        })
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![None; self.target.len()];
        for (i, m) in self.map.iter().enumerate() {
            if let Some((j, ph)) = *m {
                let back = if self.linearity == Linearity::Antilinear { ph } else { ph.conj() };
                map[j] = Some((i, back));
            }
        }
        let inv = C64::new(1.0, 0.0) / self.sector.scale;
        Self {
            kind: self.kind,
            linearity: self.linearity,
            source: self.target.clone(),
            target: self.source.clone(),
            sector: SectorMap { scale: inv, shift: -inv * self.sector.shift },
            map,
        }
    }

    /// Matrix P with A v = P v (linear) or A v = P conj(v) (antilinear).
    pub fn to_dense(&self) -> Array2<C64> {
        let mut p = Array2::zeros((self.target.len(), self.source.len()));
        for (i, m) in self.map.iter().enumerate() {
            if let Some((j, ph)) = *m {
                p[[j, i]] = ph;
            }
        }
        p
    }

    /// P·M for the matrix part P.
    pub fn left(&self, m: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.target.len(), m.ncols()));
        for (i, e) in self.map.iter().enumerate() {
            if let Some((j, ph)) = *e {
                for c in 0..m.ncols() {
                    out[[j, c]] += ph * m[[i, c]];
                }
            }
        }
        out
    }

    /// M·P for the matrix part P.
    pub fn right(&self, m: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((m.nrows(), self.source.len()));
        for (i, e) in self.map.iter().enumerate() {
            if let Some((j, ph)) = *e {
                for r in 0..m.nrows() {
                    out[[r, i]] += m[[r, j]] * ph;
                }
            }
        }
        out
    }

    /// max |P*P − I|.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.to_dense();
        let g = p.t().mapv(|x| x.conj()).dot(&p);
        max_entry(&(g - Array2::<C64>::eye(self.source.len())))
    }
}

fn max_entry(a: &Array2<C64>) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Max-entry residuals of the commutation identities on a truncated basis.
#[derive(Clone, Debug)]
pub struct RelationReport {
    pub entries: Vec<(String, f64)>,
}

impl RelationReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == name).map(|e| e.1)
    }
}

fn dense(s: Sparse) -> Array2<C64> {
    s.to_dense()
}

/// Residuals of ΩD = ωDΩ, 𝒞H = H𝒞, 𝒲𝒞 = 𝒞𝒲, H = −𝒲H𝒲, ℒ_γ𝒞 = 𝒞ℒ_{ωγ}, ℰDℰ* = −D,
/// QDQ = D*, H𝒬 = 𝒬H and 𝒞³ = I. `basis` must be a disk truncation centred at 0.
pub fn check_relations(alpha: C64, pot: &PotentialPair, basis: &Arc<FrequencyBasis>, k: C64) -> Result<RelationReport> {
    let b2 = basis.two_spinor()?;
    let b4 = basis.four_spinor()?;
    let mut entries = Vec::new();
    let mut push = |name: &str, v: f64| entries.push((name.to_string(), v));

    let d = |kk: C64| -> Result<Array2<C64>> { Ok(dense(sparse_d(alpha, pot, &b2, kk)?)) };
    let dk = d(k)?;
    let om = SymmetryOperator::plain_rotation(&b2);
    push("rotation_dropped", om.dropped() as f64);
    let lhs = om.left(&dk);
    let rhs = om.right(&d(OMEGA_BAR * k)?).mapv(|x| x * OMEGA);
    push("omega_d", max_entry(&(lhs - rhs)));

    let e = SymmetryOperator::e_swap(&b2);
    let einv = e.inverse();
    let lhs = einv.right(&e.left(&dk));
    push("e_swap_d", max_entry(&(lhs + d(-k)?)));
    push("e_squared", max_entry(&(e.left(&e.to_dense()) + Array2::<C64>::eye(b2.len()))));
    push("e_sector", (e.sector.apply(C64::new(K, 0.0)) + K).norm());

    let dh = dk.t().mapv(|x| x.conj());
    push("q_d", max_entry(&(dk.mapv(|x| x.conj()) - dh)));

    let h = |kk: C64| -> Result<Array2<C64>> { Ok(assemble_hk(alpha, pot, &b4, kk, 0.0)?.matrix) };
    let hk = h(k)?;
    let c = SymmetryOperator::plain_rotation(&b4);
    push("c_h", max_entry(&(c.left(&hk) - c.right(&h(OMEGA_BAR * k)?))));
    let w = SymmetryOperator::chiral(&b4)?;
    push("w_c", max_entry(&(w.left(&c.to_dense()) - c.left(&w.to_dense()))));
    push("w_h", max_entry(&(&hk + &w.left(&w.right(&hk)))));
    let q4 = SymmetryOperator::swap_conjugation(&b4)?;
    // 𝒬H𝒬 acts as S conj(H) S for the swap S
    push("q_h", max_entry(&(q4.left(&q4.right(&hk.mapv(|x| x.conj()))) - &hk)));

    let gamma = C64::new(1.0, 0.0) + OMEGA * 2.0;
    let lg = SymmetryOperator::translation(&b4, gamma, OMEGA_BAR * k).to_dense();
    let lwg = SymmetryOperator::translation(&b4, OMEGA * gamma, k).to_dense();
    push("l_c", max_entry(&(c.right(&lg) - c.left(&lwg))));
    let l2 = SymmetryOperator::translation(&b2, gamma, k);
    push("l_d", max_entry(&(l2.left(&dk) - l2.right(&dk))));

    let c3 = c.compose(&c)?.compose(&c)?;
    push("c_cubed", max_entry(&(c3.to_dense() - Array2::<C64>::eye(b4.len()))));
    Ok(RelationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planewave::{build_basis, build_basis_with, Truncation};
    use crate::potential::build_bm;

    fn disk(n: usize, spinor: Spinor, k: C64) -> Arc<FrequencyBasis> {
        build_basis_with(n, spinor, Truncation::Disk { center: k }).unwrap()
    }

    #[test]
    fn involutions() {
        let b2 = build_basis(3, Spinor::Two).unwrap();
        let b4 = build_basis(3, Spinor::Four).unwrap();
        let v4 = crate::linalg::random_block(b4.len(), 1, 4).column(0).to_owned();
        let w = SymmetryOperator::chiral(&b4).unwrap();
        assert_eq!(w.apply(&w.apply(&v4).unwrap()).unwrap(), v4);
        let v = crate::linalg::random_block(b2.len(), 1, 5).column(0).to_owned();
        let e = SymmetryOperator::e_swap(&b2);
        let ee = e.apply(&e.apply(&v).unwrap()).unwrap();
        assert!((ee + &v).iter().all(|x| x.norm() < 1e-15));
        let q = SymmetryOperator::conjugation(&b2);
        assert_eq!(q.apply(&q.apply(&v).unwrap()).unwrap(), v);
        assert_eq!(q.compose(&q).unwrap().linearity, Linearity::Linear);
    }

    #[test]
    fn e_swap_squares_to_minus_identity_as_matrix() {
        let b2 = build_basis(2, Spinor::Two).unwrap();
        let p = SymmetryOperator::e_swap(&b2).to_dense();
        let sq = p.dot(&p) + Array2::<C64>::eye(b2.len());
        assert!(max_entry(&sq) == 0.0);
    }

    #[test]
    fn operators_are_unitary() {
        let b4 = disk(4, Spinor::Four, C64::new(0.0, 0.0));
        let b2 = b4.two_spinor().unwrap();
        let ops = vec![
            SymmetryOperator::plain_rotation(&b4),
            SymmetryOperator::chiral(&b4).unwrap(),
            SymmetryOperator::swap_conjugation(&b4).unwrap(),
            SymmetryOperator::translation(&b4, OMEGA, C64::new(0.3, 0.2)),
            SymmetryOperator::e_swap(&b2),
            SymmetryOperator::conjugation(&b2),
            SymmetryOperator::boost(&b2, C64::new(K, 0.0)),
        ];
        for op in ops {
            assert!(op.unitarity_defect() < 1e-13, "{:?}", op.kind);
        }
    }

    #[test]
    fn rotation_cubed_is_identity_exactly() {
        for k in crate::lattice::high_symmetry_points() {
            let b = disk(5, Spinor::Four, k);
            let c = SymmetryOperator::rotation(&b, k).unwrap();
            assert_eq!(c.dropped(), 0);
            let c3 = c.compose(&c).unwrap().compose(&c).unwrap();
            let d = c3.to_dense() - Array2::<C64>::eye(b.len());
            assert!(d.iter().all(|v| v.norm() < 1e-15));
        }
        let b = disk(3, Spinor::Two, C64::new(0.0, 0.0));
        assert!(SymmetryOperator::rotation(&b, C64::new(0.3, 0.0)).is_err());
    }

    #[test]
    fn relations_hold_on_disk_basis() {
        let b = disk(5, Spinor::Two, C64::new(0.0, 0.0));
        let rep = check_relations(C64::new(0.7, -0.2), &build_bm(), &b, C64::new(0.3, 0.45)).unwrap();
        for (name, v) in &rep.entries {
            assert!(*v < 1e-12, "{name}: {v}");
        }
    }

    #[test]
    fn e_swap_maps_k_sector_to_minus_k() {
        let b = build_basis(3, Spinor::Two).unwrap();
        let v = SectorVector { basis: b.clone(), sector: C64::new(K, 0.0), coeffs: Array1::zeros(b.len()) };
        let e = SymmetryOperator::e_swap(&b);
        let out = e.apply_sector(&v).unwrap();
        assert!((out.sector + K).norm() < 1e-15);
        assert_eq!(e.dropped(), 0);
        let other = build_basis(4, Spinor::Two).unwrap();
        let bad = SectorVector { basis: other.clone(), sector: C64::new(0.0, 0.0), coeffs: Array1::zeros(other.len()) };
        assert!(matches!(e.apply_sector(&bad), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn composition_tracks_linearity_and_sector() {
        let b = build_basis(2, Spinor::Two).unwrap();
        let t = SymmetryOperator::boost(&b, C64::new(K, 0.0));
        let e = SymmetryOperator::e_swap(&b);
        let q = SymmetryOperator::conjugation(&b);
        let pipe = t.compose(&e).unwrap().compose(&t).unwrap();
        assert!(pipe.sector.apply(C64::new(0.0, 0.0)).norm() < 1e-15);
        let anti = q.compose(&e).unwrap();
        assert_eq!(anti.linearity, Linearity::Antilinear);
        let v = crate::linalg::random_block(b.len(), 1, 9).column(0).to_owned();
        let direct = q.apply(&e.apply(&v).unwrap()).unwrap();
        assert!((direct - anti.apply(&v).unwrap()).iter().all(|x| x.norm() < 1e-15));
        let back = anti.inverse().apply(&anti.apply(&v).unwrap()).unwrap();
        assert!((back - &v).iter().all(|x| x.norm() < 1e-15));
    }
}
