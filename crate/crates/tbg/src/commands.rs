use crate::config::{format_complex, parse_complex, AlphaSpec, PotentialSel, RunConfig};
use crate::output::{heatmap_svg, num, JsonObject, Writer};
use crate::CliError;
use chiral::bundle::{chern_boundary, chern_integral, chern_plaquette, curvature_report, BlochFamily, DEFAULT_CORNER};
use chiral::lattice::{translate_coordinates, translate_momentum, Direction, Lattice, C64, K, OMEGA};
use chiral::linalg::dense_eigvalsh;
use chiral::planewave::{assemble_hk, build_basis, build_basis_with, Spinor, Truncation};
use chiral::potential::{validate_symmetries, PotentialPair};
use chiral::protected::{kernel_state, locate_zeros, protected_state_with, sample_points, wronskian_with, BlochState};
use chiral::spectra::{magic_angles, refine_magic_at, rescaled_band, BandGrid, BandSolver, MagicAngle, MagicAngleSet};
use chiral::symmetry::check_relations;
use chiral::theta::{c_of_k, fk, green_fourier, multiplier_closed_form, multiplier_e, theta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn writer(cfg: &RunConfig) -> Result<Writer, CliError> {
    Writer::new(&cfg.out, cfg.emit_csv, cfg.emit_json, cfg.emit_svg)
}

/// Six-decimal file label: `0.585664`, `0.962842-0.987341i`.
fn tag(alpha: C64) -> String {
    let re = format!("{:.6}", alpha.re);
    let re = if re == "-0.000000" { "0.000000".to_string() } else { re };
    if alpha.im.abs() < 5e-7 {
        re
    } else {
        format!("{re}{:+.6}i", alpha.im)
    }
}

/// Keeps whole groups of equal-modulus angles, at most `count` entries (never fewer than one group).
fn take_groups(angles: &[MagicAngle], count: usize) -> Vec<MagicAngle> {
    let mut out: Vec<MagicAngle> = Vec::new();
    let mut i = 0;
    while i < angles.len() {
        let r = angles[i].alpha.norm();
        let mut j = i + 1;
        while j < angles.len() && (angles[j].alpha.norm() - r).abs() <= 1e-9 * r.max(1.0) {
            j += 1;
        }
        if !out.is_empty() && out.len() + (j - i) > count {
            break;
        }
        out.extend_from_slice(&angles[i..j]);
        i = j;
    }
    out
}

/// The α list of the config; `magic:n` resolves to the first n positive real magic angles.
pub fn resolve_alphas(cfg: &RunConfig, pot: &PotentialPair) -> Result<Vec<C64>, CliError> {
    match &cfg.alpha {
        AlphaSpec::List(v) => Ok(v.clone()),
        AlphaSpec::Magic(n) => {
            let set = magic_angles(pot, cfg.trunc, cfg.probe, 4 * n + 4, cfg.search_radius)?;
            let mut real: Vec<C64> = set.angles.iter().filter(|a| a.converged && a.alpha.im.abs() < 1e-8 && a.alpha.re > 0.0).map(|a| a.alpha).collect();
            real.sort_by(|a, b| a.re.total_cmp(&b.re));
            if real.len() < *n {
                return Err(CliError::Numeric(format!("found {} real magic angles within radius {}, wanted {n}", real.len(), cfg.search_radius)));
            }
            real.truncate(*n);
            Ok(real)
        }
    }
}

pub fn magic(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential.load()?;
    let set = magic_angles(&pot, cfg.trunc, cfg.probe, cfg.count, cfg.search_radius)?;
    let kept = MagicAngleSet { angles: take_groups(&set.angles, cfg.count), ..set };
    let mut w = writer(cfg)?;
    w.json("magic.json", &kept.to_json())?;

    let solver = BandSolver::new(&pot, cfg.trunc)?;
    let samples = sample_points(8);
    let mut csv = String::from("alpha,abs_wronskian,re_wronskian,im_wronskian,residual\n");
    for j in 0..cfg.scan_steps {
        let t = if cfg.scan_steps == 1 { 0.0 } else { j as f64 / (cfg.scan_steps - 1) as f64 };
        let a = C64::new(cfg.scan_min + t * (cfg.scan_max - cfg.scan_min), 0.0);
        let (v, _) = wronskian_with(&solver, a, &samples)?;
        let e1 = solver.bands(a, cfg.probe, 1)?[0];
        csv.push_str(&format!("{},{},{},{},{}\n", num(a.re), num(v.norm()), num(v.re), num(v.im), num(e1)));
    }
    w.csv("wronskian.csv", &csv)?;
    for a in &kept.angles {
        println!("alpha = {}  residual = {:.3e}  multiplicity = {}", format_complex(a.alpha), a.residual, a.multiplicity);
    }
    Ok(())
}

pub fn bands(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential.load()?;
    let solver = BandSolver::new(&pot, cfg.trunc)?;
    let count = cfg.bands.min(solver.basis.len());
    let mut w = writer(cfg)?;
    for alpha in resolve_alphas(cfg, &pot)? {
        let grid = BandGrid::compute(&solver, alpha, cfg.grid, count)?;
        let mut csv = grid.to_csv();
        if cfg.rescaled {
            let r = rescaled_band(alpha, &pot, cfg.grid, cfg.trunc)?;
            let mut lines = csv.lines();
            let mut out = format!("{},E1_hat,U_abs,dU_abs\n", lines.next().unwrap_or_default());
            for (i, line) in lines.enumerate() {
                out.push_str(&format!("{line},{},{},{}\n", num(r.e1[i]), num(r.potential[i]), num(r.derivative[i])));
            }
            csv = out;
            println!("alpha = {}  rescaled distance |U| = {:.6}  |2dU| = {:.6}", tag(alpha), r.distance_potential, r.distance_derivative);
        }
        let e1: Vec<f64> = grid.band(0).collect();
        let max = e1.iter().cloned().fold(0.0, f64::max);
        w.csv(&format!("bands_{}.csv", tag(alpha)), &csv)?;
        w.svg(&format!("bands_{}_E1.svg", tag(alpha)), &heatmap_svg(&e1, cfg.grid, cfg.grid, &format!("E1, alpha = {}", tag(alpha))))?;
        println!("alpha = {}  max E1 = {:.6e}", tag(alpha), max);
    }
    Ok(())
}

pub fn curvature(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential.load()?;
    let mut w = writer(cfg)?;
    for alpha in resolve_alphas(cfg, &pot)? {
        let solver = BandSolver::new(&pot, cfg.trunc)?;
        let r = refine_magic_at(&solver, alpha, cfg.probe)?;
        if !r.converged {
            return Err(CliError::Numeric(format!("α = {} does not refine to a magic angle (residual {:e})", tag(alpha), r.residual)));
        }
        let fam = BlochFamily::with_solver(solver, r.alpha, cfg.nz)?;
        let rep = curvature_report(&fam, cfg.grid);
        let plaq = chern_plaquette(&fam, cfg.grid.max(6))?;
        let integral = chern_integral(&fam, 2 * cfg.grid);
        let boundary = chern_boundary(DEFAULT_CORNER)?;
        let t = tag(alpha);
        w.csv(&format!("curvature_{t}.csv"), &rep.field.to_csv())?;
        w.svg(&format!("curvature_{t}.svg"), &heatmap_svg(&rep.field.values, cfg.grid, cfg.grid, &format!("H, alpha = {}", tag(r.alpha))))?;
        let mut cs = String::from("t,H\n");
        for (x, h) in &rep.cross_section {
            cs.push_str(&format!("{},{}\n", num(*x), num(*h)));
        }
        w.csv(&format!("cross_section_{t}.csv"), &cs)?;
        let json = JsonObject::new()
            .num("alpha_re", r.alpha.re)
            .num("alpha_im", r.alpha.im)
            .num("residual", r.residual)
            .num("chern_integral", integral)
            .int("chern_plaquette", plaq.value)
            .num("plaquette_raw", plaq.raw)
            .num("chern_boundary", boundary)
            .num("h_max", rep.max)
            .num("argmax_re", rep.argmax.re)
            .num("argmax_im", rep.argmax.im)
            .render();
        w.json(&format!("chern_{t}.json"), &json)?;
        println!("alpha = {}  chern: plaquette {}  integral {:.6}  boundary {:.9}", tag(r.alpha), plaq.value, integral, boundary);
    }
    Ok(())
}

fn log_modulus_grid(state: &BlochState, m: usize) -> (Vec<f64>, Vec<f64>, String) {
    let mut l1 = Vec::with_capacity(m * m);
    let mut l2 = Vec::with_capacity(m * m);
    let mut csv = String::from("re_z,im_z,log10_u1,log10_u2\n");
    for i in 0..m {
        for j in 0..m {
            let z = Lattice::Direct.from_frac((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
            let u = state.evaluate(z);
            let (a, b) = (u[0].norm().max(1e-300).log10(), u[1].norm().max(1e-300).log10());
            csv.push_str(&format!("{},{},{},{}\n", num(z.re), num(z.im), num(a), num(b)));
            l1.push(a);
            l2.push(b);
        }
    }
    (l1, l2, csv)
}

pub fn zeros(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential.load()?;
    let solver = BandSolver::new(&pot, cfg.trunc)?;
    let alpha0 = resolve_alphas(cfg, &pot)?[0];
    let r = refine_magic_at(&solver, alpha0, cfg.probe)?;
    let alpha = if r.converged { r.alpha } else { alpha0 };
    if !r.converged {
        eprintln!("note: α = {} is not magic; only the protected states have kernels", tag(alpha0));
    }
    let mut w = writer(cfg)?;
    let m = 4 * cfg.grid;
    for (label, k) in [("K", C64::new(K, 0.0)), ("minus_K", C64::new(-K, 0.0)), ("gamma", C64::new(0.0, 0.0))] {
        let state = if k.re != 0.0 {
            protected_state_with(&solver, alpha, k)?
        } else {
            match kernel_state(&solver, alpha, k) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("note: no kernel at k = 0 ({e})");
                    continue;
                }
            }
        };
        let found = locate_zeros(&state, 48, 1e-12);
        let mut csv = String::from("re_z,im_z,order,residual\n");
        for z in &found {
            csv.push_str(&format!("{},{},{},{}\n", num(z.location.re), num(z.location.im), z.order, num(z.residual)));
            println!("k = {label}  zero at {}  order {}", format_complex(z.location), z.order);
        }
        w.csv(&format!("zeros_{label}.csv"), &csv)?;
        let (l1, l2, data) = log_modulus_grid(&state, m);
        w.csv(&format!("logu_{label}.csv"), &data)?;
        w.svg(&format!("logu_{label}_1.svg"), &heatmap_svg(&l1, m, m, &format!("log10|u1|, k = {label}")))?;
        w.svg(&format!("logu_{label}_2.svg"), &heatmap_svg(&l2, m, m, &format!("log10|u2|, k = {label}")))?;
    }
    Ok(())
}

struct Row {
    name: String,
    value: f64,
    tol: f64,
    pass: bool,
}

fn row(name: &str, value: chiral::Result<f64>, tol: f64) -> Row {
    match value {
        Ok(v) => Row { name: name.into(), value: v, tol, pass: v.is_finite() && v < tol },
        Err(e) => {
            eprintln!("{name}: {e}");
            Row { name: name.into(), value: f64::NAN, tol, pass: false }
        }
    }
}

fn theta_identities() -> f64 {
    let mut worst = theta(C64::new(0.0, 0.0)).norm();
    for z in [C64::new(0.13, 0.27), C64::new(-0.41, 0.6), C64::new(0.77, -0.35), C64::new(1.2, 0.9)] {
        let t = theta(z);
        let f = -(-PI * C64::i() * OMEGA - 2.0 * PI * C64::i() * z).exp();
        let scale = t.norm().max(1.0);
        worst = worst.max((theta(-z) + t).norm() / scale).max((theta(z + 1.0) + t).norm() / scale);
        worst = worst.max((theta(z + OMEGA) - f * t).norm() / (f * t).norm().max(1.0));
    }
    worst
}

fn green_mismatch() -> chiral::Result<f64> {
    let k = C64::new(0.8, -0.3);
    let ck = c_of_k(k);
    let mut worst: f64 = 0.0;
    for z in [C64::new(0.31, 0.17), C64::new(-0.22, 0.55), C64::new(0.6, -0.4)] {
        worst = worst.max((green_fourier(k, z, 120, 1e-4) - fk(k, z)? / ck).norm());
    }
    Ok(worst)
}

fn random_momenta(rng: &mut ChaCha8Rng, count: usize) -> Vec<C64> {
    let mut out = Vec::new();
    while out.len() < count {
        let k = Lattice::Dual.from_frac(rng.gen(), rng.gen());
        if Lattice::Dual.distance(k - K) > 0.3 && Lattice::Dual.distance(k + K) > 0.3 {
            out.push(k);
        }
    }
    out
}

fn multiplier_defect(rng: &mut ChaCha8Rng) -> chiral::Result<f64> {
    let [p1, p2] = Lattice::Dual.generators();
    let mut worst: f64 = 0.0;
    for k in random_momenta(rng, 4) {
        for p in [p1, p2, p1 - p2] {
            worst = worst.max((multiplier_e(p, k)? - multiplier_closed_form(p, k)?).norm());
        }
    }
    Ok(worst)
}

fn chiral_pairing(pot: &PotentialPair) -> chiral::Result<f64> {
    let b4 = build_basis(4, Spinor::Four)?;
    let (alpha, k) = (C64::new(0.45, 0.0), C64::new(0.7, -0.2));
    let mut ev = dense_eigvalsh(&assemble_hk(alpha, pot, &b4, k, 0.0)?.matrix)?;
    ev.sort_by(f64::total_cmp);
    let n = ev.len();
    let s = BandSolver::with_basis(pot, b4.two_spinor()?)?;
    let e = s.bands(alpha, k, 4)?;
    let mut worst: f64 = 0.0;
    for i in 0..n / 2 {
        worst = worst.max((ev[i] + ev[n - 1 - i]).abs());
    }
    for j in 0..4 {
        worst = worst.max((e[j] - ev[n / 2 + j]).abs());
    }
    Ok(worst)
}

fn band_periodicity(s: &BandSolver, rng: &mut ChaCha8Rng) -> chiral::Result<f64> {
    let alpha = C64::new(0.5, 0.0);
    let [p1, p2] = Lattice::Dual.generators();
    let mut worst: f64 = 0.0;
    for k in random_momenta(rng, 4) {
        let e = s.bands(alpha, k, 3)?;
        for other in [OMEGA * k, k + p1, k - p2] {
            let f = s.bands(alpha, other, 3)?;
            for j in 0..3 {
                worst = worst.max((e[j] - f[j]).abs());
            }
        }
    }
    Ok(worst)
}

pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential.load()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let sym = validate_symmetries(&pot, cfg.potential == PotentialSel::Bm);
    rows.push(row("potential_translation", Ok(sym.translation), 1e-10));
    rows.push(row("potential_rotation", Ok(sym.rotation), 1e-10));
    if let Some(r) = sym.reality {
        rows.push(row("potential_reality", Ok(r), 1e-10));
    }
    let disk = build_basis_with(4, Spinor::Two, Truncation::Disk { center: C64::new(0.0, 0.0) });
    match disk.and_then(|b| check_relations(C64::new(0.5, 0.0), &pot, &b, C64::new(0.3, 0.2))) {
        Ok(rep) => {
            for (name, v) in rep.entries {
                let tol = if name == "rotation_dropped" { 0.5 } else { 1e-12 };
                rows.push(row(&format!("relation_{name}"), Ok(v), tol));
            }
        }
        Err(e) => rows.push(row("relations", Err(e), 1e-12)),
    }
    rows.push(row("theta_identities", Ok(theta_identities()), 1e-12));
    rows.push(row("green_function", green_mismatch(), 1e-6));
    rows.push(row("multiplier_closed_form", multiplier_defect(&mut rng), 1e-10));
    rows.push(row("chiral_pairing", chiral_pairing(&pot), 1e-10));
    let solver = BandSolver::new(&pot, cfg.trunc)?;
    let protected = [K, -K].iter().try_fold(0.0f64, |acc, &k| {
        Ok(acc.max(protected_state_with(&solver, C64::new(0.5, 0.0), C64::new(k, 0.0))?.residual))
    });
    rows.push(row("protected_residual", protected, 1e-9));
    rows.push(row("band_periodicity", band_periodicity(&solver, &mut rng), 1e-8));
    let e0 = solver.bands(C64::new(0.0, 0.0), C64::new(0.0, 0.0), 1).map(|e| (e[0] - 4.0 * PI / 3.0).abs());
    rows.push(row("alpha_zero_gap", e0, 1e-12));

    let mut csv = String::from("name,value,tol,pass\n");
    println!("{:<28} {:>12} {:>10}  result", "check", "value", "tol");
    for r in &rows {
        println!("{:<28} {:>12.3e} {:>10.1e}  {}", r.name, r.value, r.tol, if r.pass { "PASS" } else { "FAIL" });
        csv.push_str(&format!("{},{},{},{}\n", r.name, num(r.value), num(r.tol), r.pass));
    }
    writer(cfg)?.csv("check.csv", &csv)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed", rows.len() - failed, rows.len());
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

/// Converts values between the z and ζ conventions.
pub fn translate(values: &[String], from_zeta: bool, momentum: bool) -> Result<Vec<String>, CliError> {
    let dir = if from_zeta { Direction::ZetaToZ } else { Direction::ZToZeta };
    values
        .iter()
        .map(|v| {
            let z = parse_complex(v)?;
            let out = if momentum { translate_momentum(z, dir) } else { translate_coordinates(z, dir) };
            Ok(format_complex(out))
        })
        .collect()
}
