use chiral::lattice::{zmap, Lattice, C64, K};
use chiral::potential::build_bm;
use chiral::protected::*;
use chiral::spectra::{kernel_dim_with, refine_magic_at, BandSolver, DEFAULT_PROBE, RANK_TOL};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn protected_residual_at_large_truncation() {
    let s = BandSolver::new(&build_bm(), 16).unwrap();
    for k in [K, -K] {
        let u = protected_state_with(&s, c(0.7, 0.2), c(k, 0.0)).unwrap();
        assert!(u.residual < 1e-9);
        assert!((u.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_simple_zero_per_simple_kernel() {
    let s = BandSolver::new(&build_bm(), 8).unwrap();
    let a = refine_magic_at(&s, c(0.586, 0.0), DEFAULT_PROBE).unwrap().alpha;
    for k in [c(0.9, -1.4), c(-2.2, 0.3), c(3.0, 2.5)] {
        assert_eq!(kernel_dim_with(&s, a, k, RANK_TOL).unwrap(), 1);
        let check = kernel_state_at_k_with(&s, a, k).unwrap();
        assert!(check.overlap_deficit < 1e-8);
        let zeros = locate_zeros(&check.state, 48, 1e-12);
        assert_eq!(zeros.len(), 1);
        assert_eq!(zeros[0].order, 1);
        assert!(!zeros[0].flagged);
        assert!(Lattice::Direct.distance(zeros[0].location - zmap(k)) < 1e-6);
    }
}

#[test]
fn zero_test_separates_magic_from_nearby_angles() {
    let s = BandSolver::new(&build_bm(), 8).unwrap();
    let a = refine_magic_at(&s, c(0.586, 0.0), DEFAULT_PROBE).unwrap().alpha;
    assert!(flatband_zero_test_with(&s, a).unwrap().magic);
    for x in [0.55, 0.6] {
        let t = flatband_zero_test_with(&s, c(x, 0.0)).unwrap();
        assert!(!t.magic && t.at_zs.min(t.at_minus_zs) > 1e-3 * t.max_modulus);
    }
}

#[test]
fn wronskian_vanishes_only_at_magic() {
    let s = BandSolver::new(&build_bm(), 8).unwrap();
    let a = refine_magic_at(&s, c(0.586, 0.0), DEFAULT_PROBE).unwrap().alpha;
    let pts = sample_points(8);
    let (v, _) = wronskian_with(&s, a, &pts).unwrap();
    assert!(v.norm() < 1e-10);
    let (w, dev) = wronskian_with(&s, c(0.3, 0.0), &pts).unwrap();
    assert!(w.norm() > 0.1 && dev < 1e-9);
}
