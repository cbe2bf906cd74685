//! Truncated plane-wave bases and operator assembly.
//!
//! A coefficient vector on a two-spinor basis represents u ∈ L²₀ through
//! u_j(z) = Σ c·e^{i⟨z,q⟩}; component 1 carries q ∈ −K+Λ*, component 2 carries q ∈ K+Λ*.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, C64, K};
use crate::linalg::Sparse;
use crate::potential::{PotentialPair, Side};
use ndarray::Array2;
use std::collections::HashMap;
use std::sync::Arc;

pub const MAX_BASIS: usize = 16_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spinor {
    Two,
    Four,
}

impl Spinor {
    pub fn components(self) -> usize {
        match self {
            Spinor::Two => 2,
            Spinor::Four => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// |m|, |n| ≤ N.
    Rhombus,
    /// |q + center| ≤ N·|p₁|; invariant under rotation about −center.
    Disk { center: C64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisEntry {
    /// 1-based spinor component.
    pub component: usize,
    pub m: i64,
    pub n: i64,
    pub q: C64,
}

#[derive(Clone, Debug)]
pub struct FrequencyBasis {
    pub truncation_n: usize,
    pub spinor: Spinor,
    pub truncation: Truncation,
    pub entries: Vec<BasisEntry>,
    index: HashMap<(usize, i64, i64), usize>,
}

/// −1 for components 1 and 3, +1 for 2 and 4.
pub fn component_offset(component: usize) -> f64 {
    if component % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

pub fn build_basis(n: usize, spinor: Spinor) -> Result<Arc<FrequencyBasis>> {
    build_basis_with(n, spinor, Truncation::Rhombus)
}

pub fn build_basis_with(n: usize, spinor: Spinor, truncation: Truncation) -> Result<Arc<FrequencyBasis>> {
    if n == 0 {
        return Err(Error::Invalid("truncation N must be at least 1".into()));
    }
    let ni = n as i64;
    let (range, radius2) = match truncation {
        Truncation::Rhombus => {
            let per = (2 * n + 1).pow(2);
            let total = per * spinor.components();
            if total > MAX_BASIS {
                return Err(Error::Resource { entries: total, limit: MAX_BASIS });
            }
            (ni, 0.0)
        }
        Truncation::Disk { .. } => {
            let r = n as f64 * Lattice::Dual.scale().norm();
            (2 * ni + 3, r * r * (1.0 + 1e-9))
        }
    };
    let mut entries = Vec::new();
    for component in 1..=spinor.components() {
        let off = component_offset(component) * K;
        for m in -range..=range {
            for nn in -range..=range {
                let q = off + Lattice::Dual.point(m, nn);
                if let Truncation::Disk { center } = truncation {
                    if (q + center).norm_sqr() > radius2 {
                        continue;
                    }
                }
                entries.push(BasisEntry { component, m, n: nn, q });
            }
        }
        if entries.len() > MAX_BASIS {
            return Err(Error::Resource { entries: entries.len(), limit: MAX_BASIS });
        }
    }
    let index = entries.iter().enumerate().map(|(i, e)| ((e.component, e.m, e.n), i)).collect();
    Ok(Arc::new(FrequencyBasis { truncation_n: n, spinor, truncation, entries, index }))
}

impl FrequencyBasis {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, component: usize, m: i64, n: i64) -> Option<usize> {
        self.index.get(&(component, m, n)).copied()
    }

    /// Index of frequency q in the given component, if present.
    pub fn find_frequency(&self, component: usize, q: C64) -> Option<usize> {
        let (m, n) = Lattice::Dual.coords(q - component_offset(component) * K)?;
        self.find(component, m, n)
    }

    pub fn same_frequencies(&self, other: &FrequencyBasis) -> bool {
        self.spinor == other.spinor
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.component == b.component && a.m == b.m && a.n == b.n)
    }

    /// The two-spinor basis on which components 3, 4 of a four-spinor basis mirror 1, 2.
    pub fn two_spinor(&self) -> Result<Arc<FrequencyBasis>> {
        build_basis_with(self.truncation_n, Spinor::Two, self.truncation)
    }

    pub fn four_spinor(&self) -> Result<Arc<FrequencyBasis>> {
        build_basis_with(self.truncation_n, Spinor::Four, self.truncation)
    }

    /// Number of entries of components 1 and 2 (equal for the symmetric truncations used here).
    pub fn component_len(&self, component: usize) -> usize {
        self.entries.iter().filter(|e| e.component == component).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    D,
    DPlusK,
    Hk,
    HMass,
    Tk,
    Resolvent,
    DAdjoint,
    Projector,
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub basis: Arc<FrequencyBasis>,
    pub kind: OperatorKind,
    pub matrix: Array2<C64>,
}

impl OperatorMatrix {
    pub fn hermitian_defect(&self) -> f64 {
        let a = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..a.nrows() {
            for j in 0..=i {
                worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// One row per line, entries written as `re im` pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{:e} {:e}", v.re, v.im)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Positions ordered by (m, n, component); D(α)+k is banded in this order.
pub fn band_order(basis: &FrequencyBasis) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..basis.len()).collect();
    perm.sort_by_key(|&i| {
        let e = &basis.entries[i];
        (e.m, e.n, e.component)
    });
    perm
}

/// Coupling matrix V (without α) on a two-spinor basis as a triplet list (row, col, value).
pub fn coupling_triplets(pot: &PotentialPair, basis: &FrequencyBasis) -> Result<Vec<(usize, usize, C64)>> {
    if basis.spinor != Spinor::Two {
        return Err(Error::BasisMismatch("coupling needs a two-spinor basis".into()));
    }
    let mut out = Vec::new();
    for side in [Side::Plus, Side::Minus] {
        let u = pot.side(side);
        if u.side != side {
            return Err(Error::FrequencyClass("potential side tag mismatch".into()));
        }
        let offs = u.lattice_offsets()?;
        // U₊ takes component 2 to component 1, U₋ takes component 1 to component 2
        let (from, to, shift) = match side {
            Side::Plus => (2usize, 1usize, (-1i64, -2i64)),
            Side::Minus => (1, 2, (1, 2)),
        };
        for (col, e) in basis.entries.iter().enumerate() {
            if e.component != from {
                continue;
            }
            for (t, &(a, b)) in u.terms.iter().zip(&offs) {
                if let Some(row) = basis.find(to, e.m + a + shift.0, e.n + b + shift.1) {
                    out.push((row, col, t.coeff));
                }
            }
        }
    }
    Ok(out)
}

/// D(α) + k as a sparse matrix.
pub fn sparse_d(alpha: C64, pot: &PotentialPair, basis: &FrequencyBasis, k: C64) -> Result<Sparse> {
    let mut s = Sparse::new(basis.len());
    for (i, e) in basis.entries.iter().enumerate() {
        s.push(i, i, e.q + k);
    }
    if alpha != C64::new(0.0, 0.0) {
        for (r, c, v) in coupling_triplets(pot, basis)? {
            s.push(r, c, alpha * v);
        }
    }
    Ok(s)
}

pub fn assemble_d(alpha: C64, pot: &PotentialPair, basis: &Arc<FrequencyBasis>, k: C64) -> Result<OperatorMatrix> {
    let kind = if k == C64::new(0.0, 0.0) { OperatorKind::D } else { OperatorKind::DPlusK };
    Ok(OperatorMatrix { basis: basis.clone(), kind, matrix: sparse_d(alpha, pot, basis, k)?.to_dense() })
}

/// D(α)* + k̄ assembled from its own definition: 2D_z on the diagonal and
/// multiplication by conj U₋, conj U₊ off the diagonal.
pub fn assemble_d_adjoint(alpha: C64, pot: &PotentialPair, basis: &Arc<FrequencyBasis>, k: C64) -> Result<OperatorMatrix> {
    let mut a = Array2::zeros((basis.len(), basis.len()));
    for (i, e) in basis.entries.iter().enumerate() {
        a[[i, i]] = e.q.conj() + k.conj();
    }
    for (col, e) in basis.entries.iter().enumerate() {
        // block (1,2) multiplies component 2 by conj U₋(z); block (2,1) multiplies component 1 by conj U₊(z)
        let (u, to) = if e.component == 2 { (&pot.u_minus, 1) } else { (&pot.u_plus, 2) };
        for t in &u.terms {
            let q = e.q - t.frequency;
            if let Some(row) = basis.find_frequency(to, q) {
                a[[row, col]] += alpha.conj() * t.coeff.conj();
            } else if Lattice::Dual.coords(q - component_offset(to) * K).is_none() {
                return Err(Error::FrequencyClass("adjoint coupling leaves the frequency class".into()));
            }
        }
    }
    Ok(OperatorMatrix { basis: basis.clone(), kind: OperatorKind::DAdjoint, matrix: a })
}

/// H_k(α) + mass term: [[mI, (D+k)*], [D+k, −mI]] on a four-spinor basis.
pub fn assemble_hk(alpha: C64, pot: &PotentialPair, basis4: &Arc<FrequencyBasis>, k: C64, mass: f64) -> Result<OperatorMatrix> {
    if basis4.spinor != Spinor::Four {
        return Err(Error::BasisMismatch("H_k needs a four-spinor basis".into()));
    }
    let b2 = basis4.two_spinor()?;
    let d = sparse_d(alpha, pot, &b2, k)?.to_dense();
    let n = b2.len();
    let mut h = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        h[[i, i]] = C64::new(mass, 0.0);
        h[[n + i, n + i]] = C64::new(-mass, 0.0);
        for j in 0..n {
            h[[n + i, j]] = d[[i, j]];
            h[[j, n + i]] = d[[i, j]].conj();
        }
    }
    let kind = if mass == 0.0 { OperatorKind::Hk } else { OperatorKind::HMass };
    Ok(OperatorMatrix { basis: basis4.clone(), kind, matrix: h })
}

/// Distance from k to the nearest basis frequency, with that frequency.
pub fn nearest_pole(basis: &FrequencyBasis, k: C64) -> (f64, C64) {
    basis
        .entries
        .iter()
        .map(|e| ((e.q - k).norm(), e.q))
        .fold((f64::INFINITY, C64::new(0.0, 0.0)), |a, b| if b.0 < a.0 { b } else { a })
}

pub const POLE_TOL: f64 = 1e-6;

/// R(k) = diag(1/(q − k)).
pub fn resolvent_diagonal(basis: &FrequencyBasis, k: C64) -> Result<Vec<C64>> {
    let (dist, q) = nearest_pole(basis, k);
    if dist <= POLE_TOL {
        return Err(Error::Pole { q, distance: dist });
    }
    Ok(basis.entries.iter().map(|e| C64::new(1.0, 0.0) / (e.q - k)).collect())
}

/// T_k = R(k)V.
pub fn assemble_tk(pot: &PotentialPair, basis: &Arc<FrequencyBasis>, k: C64) -> Result<OperatorMatrix> {
    let r = resolvent_diagonal(basis, k)?;
    let mut t = Array2::zeros((basis.len(), basis.len()));
    for (row, col, v) in coupling_triplets(pot, basis)? {
        t[[row, col]] += r[row] * v;
    }
    Ok(OperatorMatrix { basis: basis.clone(), kind: OperatorKind::Tk, matrix: t })
}

/// The block R₁U₊R₂U₋ of T_k² acting on component 1; the spectrum of T_k is ±√ of its spectrum.
pub fn tk_square_block(pot: &PotentialPair, basis: &FrequencyBasis, k: C64) -> Result<Array2<C64>> {
    let r = resolvent_diagonal(basis, k)?;
    let idx1: Vec<usize> = (0..basis.len()).filter(|&i| basis.entries[i].component == 1).collect();
    let idx2: Vec<usize> = (0..basis.len()).filter(|&i| basis.entries[i].component == 2).collect();
    let mut pos = vec![usize::MAX; basis.len()];
    for (p, &i) in idx1.iter().enumerate() {
        pos[i] = p;
    }
    for (p, &i) in idx2.iter().enumerate() {
        pos[i] = p;
    }
    // A = R₁U₊ (n1×n2), B = R₂U₋ (n2×n1)
    let mut a = Array2::<C64>::zeros((idx1.len(), idx2.len()));
    let mut b = Array2::<C64>::zeros((idx2.len(), idx1.len()));
    for (row, col, v) in coupling_triplets(pot, basis)? {
        if basis.entries[row].component == 1 {
            a[[pos[row], pos[col]]] += r[row] * v;
        } else {
            b[[pos[row], pos[col]]] += r[row] * v;
        }
    }
    Ok(a.dot(&b))
}

/// P_p = (1/3)Σ_ℓ ω^{pℓ}𝒞^ℓ for states whose Bloch momentum is k ∈ 𝒦.
pub fn rotation_sector_projector(basis: &Arc<FrequencyBasis>, k: C64, p: i64) -> Result<OperatorMatrix> {
    let c = crate::symmetry::SymmetryOperator::rotation(basis, k)?.to_dense();
    let n = basis.len();
    let mut acc = Array2::<C64>::eye(n);
    let mut power = Array2::<C64>::eye(n);
    for l in 1..3 {
        power = c.dot(&power);
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (p * l).rem_euclid(3) as f64 / 3.0);
        acc = acc + power.mapv(|x| x * w);
    }
    Ok(OperatorMatrix { basis: basis.clone(), kind: OperatorKind::Projector, matrix: acc.mapv(|x| x / 3.0) })
}
