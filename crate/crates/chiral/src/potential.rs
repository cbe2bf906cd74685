//! Potentials U₊, U₋ as finite Fourier series in the z-convention.

use crate::error::{Error, Result};
use crate::lattice::{pairing, zeta_wave_to_frequency, Lattice, C64, K, OMEGA};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Bm,
    ThetaFamily(f64),
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub frequency: C64,
    pub coeff: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPotential {
    pub side: Side,
    pub terms: Vec<Term>,
    pub provenance: Provenance,
}

impl FourierPotential {
    pub fn eval(&self, z: C64) -> C64 {
        self.terms
            .iter()
            .map(|t| t.coeff * C64::from_polar(1.0, pairing(z, t.frequency)))
            .sum()
    }

    /// Λ*-coordinates of f − side·K for every term.
    pub fn lattice_offsets(&self) -> Result<Vec<(i64, i64)>> {
        self.terms
            .iter()
            .map(|t| {
                Lattice::Dual
                    .coords(t.frequency - self.side.sign() * K)
                    .ok_or_else(|| {
                        Error::FrequencyClass(format!(
                            "frequency {} is not in {}K + Λ*",
                            t.frequency,
                            if self.side == Side::Plus { "" } else { "-" }
                        ))
                    })
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == C64::new(0.0, 0.0))
    }

    /// z ↦ U(−z).
    pub fn reflected(&self, side: Side) -> Self {
        Self {
            side,
            terms: self
                .terms
                .iter()
                .map(|t| Term { frequency: -t.frequency, coeff: t.coeff })
                .collect(),
            provenance: self.provenance,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialPair {
    pub u_plus: FourierPotential,
    pub u_minus: FourierPotential,
}

impl PotentialPair {
    pub fn from_plus(u: FourierPotential) -> Result<Self> {
        let u_minus = u.reflected(Side::Minus);
        let pair = Self { u_plus: u, u_minus };
        pair.check_classes()?;
        Ok(pair)
    }

    pub fn check_classes(&self) -> Result<()> {
        self.u_plus.lattice_offsets()?;
        self.u_minus.lattice_offsets()?;
        Ok(())
    }

    pub fn zero() -> Self {
        let empty = |side| FourierPotential { side, terms: vec![], provenance: Provenance::Custom };
        Self { u_plus: empty(Side::Plus), u_minus: empty(Side::Minus) }
    }

    pub fn side(&self, side: Side) -> &FourierPotential {
        match side {
            Side::Plus => &self.u_plus,
            Side::Minus => &self.u_minus,
        }
    }
}

const BM_PREFACTOR: C64 = C64::new(0.0, -4.0 * PI / 3.0);

/// U(z) = −(4/3)πi Σ ω^ℓ e^{i⟨z,ω^ℓK⟩}, U₋(z) = U(−z).
pub fn build_bm() -> PotentialPair {
    let mut terms = Vec::new();
    let mut w = C64::new(1.0, 0.0);
    for _ in 0..3 {
        terms.push(Term { frequency: w * K, coeff: BM_PREFACTOR * w });
        w *= OMEGA;
    }
    let u = FourierPotential { side: Side::Plus, terms, provenance: Provenance::Bm };
    PotentialPair::from_plus(u).expect("BM frequencies lie in K + Λ*")
}

/// A term c·exp(ζ̄w − ζw̄) written in the ζ-convention.
#[derive(Clone, Copy, Debug)]
pub struct ZetaTerm {
    pub wave: C64,
    pub coeff: C64,
}

/// U_θ(ζ) = cos θ U₀(ζ) + sin θ Σ ω^ℓ e^{ζ̄ω^ℓ − ζω̄^ℓ} in the ζ-convention.
pub fn theta_family_zeta_terms(theta: f64) -> Vec<ZetaTerm> {
    let mut out = Vec::new();
    let mut w = C64::new(1.0, 0.0);
    for _ in 0..3 {
        // U₀(ζ) = Σ ω^ℓ exp((ζω̄^ℓ − ζ̄ω^ℓ)/2)
        out.push(ZetaTerm { wave: -w / 2.0, coeff: theta.cos() * w });
        out.push(ZetaTerm { wave: w, coeff: theta.sin() * w });
        w *= OMEGA;
    }
    out
}

/// The θ-deformed family, translated to the z-convention by U(z) = −(4/3)πi U_θ((4/3)πi z).
pub fn build_theta_family(theta: f64) -> Result<PotentialPair> {
    let terms = theta_family_zeta_terms(theta)
        .into_iter()
        .filter(|t| t.coeff.norm() > 1e-14)
        .map(|t| Term { frequency: zeta_wave_to_frequency(t.wave), coeff: BM_PREFACTOR * t.coeff })
        .collect();
    let u = FourierPotential { side: Side::Plus, terms, provenance: Provenance::ThetaFamily(theta) };
    PotentialPair::from_plus(u)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetryReport {
    pub translation: f64,
    pub rotation: f64,
    pub reality: Option<f64>,
}

impl SymmetryReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.translation < tol && self.rotation < tol && self.reality.is_none_or(|r| r < tol)
    }
}

fn sample_grid() -> Vec<C64> {
    let n = 32;
    let mut out = Vec::with_capacity(n * n);
    for s in 0..n {
        for t in 0..n {
            let x = (s as f64 + 0.37) / n as f64;
            let y = (t as f64 + 0.61) / n as f64;
            out.push(Lattice::Direct.from_frac(x, y));
        }
    }
    out
}

/// Maximal violation of the twist, rotation and (optionally) reality conditions on a 32×32 grid.
pub fn validate_symmetries(p: &PotentialPair, check_reality: bool) -> SymmetryReport {
    let grid = sample_grid();
    let gammas = [Lattice::Direct.point(1, 0), Lattice::Direct.point(0, 1), Lattice::Direct.point(-1, 2)];
    let mut rep = SymmetryReport { translation: 0.0, rotation: 0.0, reality: check_reality.then_some(0.0) };
    for u in [&p.u_plus, &p.u_minus] {
        let s = u.side.sign();
        for &z in &grid {
            let uz = u.eval(z);
            for &g in &gammas {
                let twist = C64::from_polar(1.0, s * pairing(g, C64::new(K, 0.0)));
                rep.translation = rep.translation.max((u.eval(z + g) - twist * uz).norm());
            }
            rep.rotation = rep.rotation.max((u.eval(OMEGA * z) - OMEGA * uz).norm());
            if let Some(r) = rep.reality.as_mut() {
                *r = r.max((uz + u.eval(-z.conj()).conj()).norm());
            }
        }
    }
    rep
}

/// Parses `side m n re im` lines; side is `+`/`plus`/`1` or `-`/`minus`/`-1`.
pub fn parse_custom(text: &str) -> Result<PotentialPair> {
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err("expected `side m n re im`"));
        }
        let side = match f[0] {
            "+" | "plus" | "1" | "+1" => Side::Plus,
            "-" | "minus" | "-1" => Side::Minus,
            _ => return Err(err("side must be + or -")),
        };
        let m: i64 = f[1].parse().map_err(|_| err("bad m"))?;
        let n: i64 = f[2].parse().map_err(|_| err("bad n"))?;
        let re: f64 = f[3].parse().map_err(|_| err("bad real part"))?;
        let im: f64 = f[4].parse().map_err(|_| err("bad imaginary part"))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(err("non-finite coefficient"));
        }
        let term = Term { frequency: side.sign() * K + Lattice::Dual.point(m, n), coeff: C64::new(re, im) };
        match side {
            Side::Plus => plus.push(term),
            Side::Minus => minus.push(term),
        }
    }
    let pair = PotentialPair {
        u_plus: FourierPotential { side: Side::Plus, terms: plus, provenance: Provenance::Custom },
        u_minus: FourierPotential { side: Side::Minus, terms: minus, provenance: Provenance::Custom },
    };
    pair.check_classes()?;
    Ok(pair)
}

/// Inverse of [`parse_custom`].
pub fn format_custom(p: &PotentialPair) -> Result<String> {
    let mut s = String::new();
    for u in [&p.u_plus, &p.u_minus] {
        let tag = if u.side == Side::Plus { "+" } else { "-" };
        for (t, (m, n)) in u.terms.iter().zip(u.lattice_offsets()?) {
            s.push_str(&format!("{tag} {m} {n} {:e} {:e}\n", t.coeff.re, t.coeff.im));
        }
    }
    Ok(s)
}
