//! Flat `key = value` run configuration with `#` comments.

use crate::CliError;
use chiral::lattice::C64;
use chiral::potential::{build_bm, build_theta_family, parse_custom, PotentialPair};
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSel {
    Bm,
    ThetaFamily(f64),
    File(PathBuf),
}

impl PotentialSel {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let s = s.trim();
        if s == "bm" {
            return Ok(Self::Bm);
        }
        if let Some(t) = s.strip_prefix("theta_family:") {
            let theta = parse_real(t)?;
            return Ok(Self::ThetaFamily(theta));
        }
        if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err(CliError::Config("empty potential file path".into()));
            }
            return Ok(Self::File(PathBuf::from(p)));
        }
        Err(CliError::Config(format!("unknown potential `{s}` (bm, theta_family:θ or file:path)")))
    }

    pub fn to_text(&self) -> String {
        match self {
            Self::Bm => "bm".into(),
            Self::ThetaFamily(t) => format!("theta_family:{t:?}"),
            Self::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn load(&self) -> Result<PotentialPair, CliError> {
        match self {
            Self::Bm => Ok(build_bm()),
            Self::ThetaFamily(t) => Ok(build_theta_family(*t)?),
            Self::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Ok(parse_custom(&text)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlphaSpec {
    List(Vec<C64>),
    /// the first n positive real magic angles
    Magic(usize),
}

impl AlphaSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("magic:") {
            let n: usize = n.trim().parse().map_err(|_| CliError::Config(format!("bad magic count `{n}`")))?;
            if n == 0 {
                return Err(CliError::Config("magic count must be positive".into()));
            }
            return Ok(Self::Magic(n));
        }
        let list = s.split(',').map(parse_complex).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::List(list))
    }

    pub fn to_text(&self) -> String {
        match self {
            Self::List(v) => v.iter().map(|&a| format_complex(a)).collect::<Vec<_>>().join(","),
            Self::Magic(n) => format!("magic:{n}"),
        }
    }
}

fn parse_real(s: &str) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| CliError::Config(format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(CliError::Config(format!("non-finite number `{s}`")));
    }
    Ok(v)
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> Result<C64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || CliError::Config(format!("bad complex number `{s}`"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return Ok(C64::new(parse_real(&t)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let im_of = |x: &str| -> Result<f64, CliError> {
        match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => parse_real(x).map_err(|_| bad()),
        }
    };
    match split {
        Some(j) => Ok(C64::new(parse_real(&body[..j]).map_err(|_| bad())?, im_of(&body[j..])?)),
        None => Ok(C64::new(0.0, im_of(body)?)),
    }
}

/// Shortest text that parses back to the same value.
pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:?}", z.re)
    } else {
        let sign = if z.im.is_sign_negative() { '-' } else { '+' };
        format!("{:?}{sign}{:?}i", z.re, z.im.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub potential: PotentialSel,
    pub trunc: usize,
    pub grid: usize,
    pub alpha: AlphaSpec,
    pub probe: C64,
    pub count: usize,
    pub search_radius: f64,
    pub bands: usize,
    pub nz: usize,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_steps: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub rescaled: bool,
    pub emit_csv: bool,
    pub emit_json: bool,
    pub emit_svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSel::Bm,
            trunc: 12,
            grid: 12,
            alpha: AlphaSpec::List(vec![C64::new(0.586, 0.0)]),
            probe: chiral::spectra::DEFAULT_PROBE,
            count: 6,
            search_radius: 12.0,
            bands: 4,
            nz: 96,
            scan_min: 0.05,
            scan_max: 1.0,
            scan_steps: 20,
            out: PathBuf::from("out"),
            seed: 1,
            threads: 0,
            rescaled: false,
            emit_csv: true,
            emit_json: true,
            emit_svg: true,
        }
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "potential" => self.potential = PotentialSel::parse(v)?,
            "trunc" => self.trunc = parse_usize(key, v)?,
            "grid" => self.grid = parse_usize(key, v)?,
            "alpha" => self.alpha = AlphaSpec::parse(v)?,
            "probe" => self.probe = parse_complex(v)?,
            "count" => self.count = parse_usize(key, v)?,
            "search_radius" => self.search_radius = parse_real(v)?,
            "bands" => self.bands = parse_usize(key, v)?,
            "nz" => self.nz = parse_usize(key, v)?,
            "scan_min" => self.scan_min = parse_real(v)?,
            "scan_max" => self.scan_max = parse_real(v)?,
            "scan_steps" => self.scan_steps = parse_usize(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = v.parse().map_err(|_| CliError::Config(format!("seed: bad value `{v}`")))?,
            "threads" => self.threads = parse_usize(key, v)?,
            "rescaled" => self.rescaled = parse_bool(key, v)?,
            "emit_csv" => self.emit_csv = parse_bool(key, v)?,
            "emit_json" => self.emit_json = parse_bool(key, v)?,
            "emit_svg" => self.emit_svg = parse_bool(key, v)?,
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v).map_err(|e| CliError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.merge_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let rows: [(&str, String); 19] = [
            ("potential", self.potential.to_text()),
            ("trunc", self.trunc.to_string()),
            ("grid", self.grid.to_string()),
            ("alpha", self.alpha.to_text()),
            ("probe", format_complex(self.probe)),
            ("count", self.count.to_string()),
            ("search_radius", format!("{:?}", self.search_radius)),
            ("bands", self.bands.to_string()),
            ("nz", self.nz.to_string()),
            ("scan_min", format!("{:?}", self.scan_min)),
            ("scan_max", format!("{:?}", self.scan_max)),
            ("scan_steps", self.scan_steps.to_string()),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("rescaled", self.rescaled.to_string()),
            ("emit_csv", self.emit_csv.to_string()),
            ("emit_json", self.emit_json.to_string()),
            ("emit_svg", self.emit_svg.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        if self.trunc == 0 {
            return fail("trunc must be positive");
        }
        if self.grid < 2 {
            return fail("grid must be at least 2");
        }
        if self.count == 0 || self.bands == 0 || self.scan_steps == 0 {
            return fail("count, bands and scan_steps must be positive");
        }
        if self.nz < 8 {
            return fail("nz must be at least 8");
        }
        if !(self.search_radius > 0.0) {
            return fail("search_radius must be positive");
        }
        if !(self.scan_min < self.scan_max) {
            return fail("scan_min must be below scan_max");
        }
        if !(self.probe.re.is_finite() && self.probe.im.is_finite()) {
            return fail("probe must be finite");
        }
        if let AlphaSpec::List(v) = &self.alpha {
            if v.is_empty() || v.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
                return fail("alpha list must be non-empty and finite");
            }
        }
        if let PotentialSel::ThetaFamily(t) = self.potential {
            if !t.is_finite() {
                return fail("θ must be finite");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("0.586").unwrap(), C64::new(0.586, 0.0));
        assert_eq!(parse_complex("0.7+0.2i").unwrap(), C64::new(0.7, 0.2));
        assert_eq!(parse_complex(" -1e-3 - 2.5e+1i ").unwrap(), C64::new(-1e-3, -25.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_complex("3.5i").unwrap(), C64::new(0.0, 3.5));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("1+").is_err());
        for z in [C64::new(0.1, -0.2), C64::new(1.0 / 3.0, 0.0), C64::new(-2.0, 1e-300)] {
            assert_eq!(parse_complex(&format_complex(z)).unwrap(), z);
        }
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_text("trunc = 0").is_err());
        assert!(RunConfig::from_text("grid = x").is_err());
        assert!(RunConfig::from_text("colour = red").is_err());
        assert!(RunConfig::from_text("scan_min = 2\nscan_max = 1").is_err());
        assert!(RunConfig::from_text("alpha = nan").is_err());
        assert!(RunConfig::from_text("no equals sign").is_err());
    }
}
