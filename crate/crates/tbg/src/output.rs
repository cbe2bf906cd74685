//! File emission: minimal JSON, CSV helpers and SVG heatmaps.

use crate::CliError;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

/// JSON object with fields kept in insertion order.
#[derive(Default)]
pub struct JsonObject {
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(mut self, key: &str, v: f64) -> Self {
        self.fields.push((key.into(), num(v)));
        self
    }

    pub fn int(mut self, key: &str, v: i64) -> Self {
        self.fields.push((key.into(), v.to_string()));
        self
    }

    pub fn str(mut self, key: &str, v: &str) -> Self {
        self.fields.push((key.into(), format!("\"{}\"", escape(v))));
        self
    }

    pub fn bool(mut self, key: &str, v: bool) -> Self {
        self.fields.push((key.into(), v.to_string()));
        self
    }

    /// Inserts pre-rendered JSON.
    pub fn raw(mut self, key: &str, json: String) -> Self {
        self.fields.push((key.into(), json));
        self
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self.fields.iter().map(|(k, v)| format!("\"{}\":{v}", escape(k))).collect();
        format!("{{{}}}", body.join(","))
    }
}

/// 9-stop viridis ramp, low to high.
pub const VIRIDIS: [(u8, u8, u8); 9] = [
    (0x44, 0x01, 0x54),
    (0x47, 0x2c, 0x7a),
    (0x3b, 0x51, 0x8b),
    (0x2c, 0x71, 0x8e),
    (0x21, 0x90, 0x8d),
    (0x27, 0xad, 0x81),
    (0x5c, 0xc8, 0x63),
    (0xaa, 0xdc, 0x32),
    (0xfd, 0xe7, 0x25),
];

/// Linear interpolation in the ramp for t ∈ [0, 1].
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * 8.0;
    let i = (x.floor() as usize).min(7);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |p: u8, q: u8| (p as f64 + f * (q as f64 - p as f64)).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of `values[i * cols + j]`; row i is drawn bottom-up, column j left to right.
pub fn heatmap_svg(values: &[f64], rows: usize, cols: usize, title: &str) -> String {
    let cell = 12usize;
    let (w, h) = (cols * cell, rows * cell);
    let finite = values.iter().cloned().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" viewBox=\"0 0 {w} {}\">", h + 20, h + 20);
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<text x=\"2\" y=\"14\" font-size=\"11\" font-family=\"monospace\">{} [{lo:.3e}, {hi:.3e}]</text>", escape(title));
    for i in 0..rows {
        for j in 0..cols {
            let (r, g, b) = ramp((values[i * cols + j] - lo) / span);
            let y = 20 + (rows - 1 - i) * cell;
            let _ = writeln!(s, "<rect x=\"{}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"#{r:02x}{g:02x}{b:02x}\"/>", j * cell);
        }
    }
    s.push_str("</svg>\n");
    s
}

pub struct Writer {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, csv: bool, json: bool, svg: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), csv, json, svg, written: Vec::new() })
    }

    fn put(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if self.csv {
            self.put(name, body)?;
        }
        Ok(())
    }

    pub fn json(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if self.json {
            self.put(name, &format!("{body}\n"))?;
        }
        Ok(())
    }

    pub fn svg(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        if self.svg {
            self.put(name, body)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout() {
        let j = JsonObject::new().num("a", 0.1).int("n", -3).str("s", "x\"y").bool("b", true).render();
        assert_eq!(j, "{\"a\":1.0000000000000001e-1,\"n\":-3,\"s\":\"x\\\"y\",\"b\":true}");
        assert_eq!(num(f64::NAN), "null");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 0.585_663_558_389_559] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), VIRIDIS[0]);
        assert_eq!(ramp(1.0), VIRIDIS[8]);
        assert_eq!(ramp(0.5), VIRIDIS[4]);
        assert_eq!(ramp(f64::NAN), VIRIDIS[0]);
    }

    #[test]
    fn heatmap_cells() {
        let svg = heatmap_svg(&[0.0, 1.0, 2.0, 3.0], 2, 2, "t");
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("#440154") && svg.contains("#fde725"));
    }
}
