//! Kernel checks against independent numerical oracles written here from
//! the defining formulas.

use coxkit::mc::replicate_rng;
use coxkit::{chou_meyer_intensity, phi, psi, IntensityPath, PointPattern};
use proptest::prelude::*;
use rand::Rng;

fn random_path<R: Rng>(rng: &mut R) -> IntensityPath<f64> {
    let pieces = rng.random_range(1..=5);
    let horizon = rng.random_range(1.0..5.0);
    let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.random_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bps = vec![0.0];
    bps.extend(cuts.into_iter().filter(|c| *c > 0.0));
    let levels = bps
        .iter()
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.1..4.0) })
        .collect();
    IntensityPath::new(bps, levels, horizon).unwrap()
}

/// `int_r^t X` by summing overlaps, written independently of the library.
fn elapsed(path: &IntensityPath<f64>, r: f64, t: f64) -> f64 {
    let bps = path.breakpoints();
    let lv = path.levels();
    (0..lv.len())
        .map(|j| {
            let end = if j + 1 < bps.len() { bps[j + 1] } else { f64::INFINITY };
            let lo = bps[j].max(r);
            let hi = end.min(t);
            if hi > lo {
                lv[j] * (hi - lo)
            } else {
                0.0
            }
        })
        .sum()
}

fn density(path: &IntensityPath<f64>, r: f64, k: usize, t: f64) -> f64 {
    let l = elapsed(path, r, t);
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    path.level_at(t) * (-l).exp() * l.powi(k as i32) / fact
}

fn remaining(l: f64, k: usize) -> f64 {
    let mut term = (-l).exp();
    let mut acc = term;
    for i in 1..=k {
        term *= l / i as f64;
        acc += term;
    }
    acc
}

/// Composite Simpson on each constant piece of `[r, h]`, where the density is smooth.
fn simpson_mass(path: &IntensityPath<f64>, r: f64, k: usize) -> f64 {
    let h = path.horizon();
    let mut nodes: Vec<f64> = path.breakpoints().iter().cloned().filter(|b| *b > r && *b < h).collect();
    nodes.insert(0, r);
    nodes.push(h);
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let cells = 2000;
        let step = (b - a) / cells as f64;
        // evaluate just inside the piece so the right-continuous level is the piece's own
        let f = |x: f64| density(path, r, k, x.clamp(a, b - 1e-15 * b.max(1.0)));
        let mut acc = f(a) + f(b);
        for i in 1..cells {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * step);
        }
        total += acc * step / 3.0;
    }
    total
}

#[test]
fn kernel_mass_is_one_with_quadrature_oracle() {
    let mut configs = 0;
    for k in 0..30 {
        let mut rng = replicate_rng(11, k);
        let path = random_path(&mut rng);
        let r = rng.random_range(0.0..path.horizon());
        let observed = rng.random_range(0..3);
        let n = observed + rng.random_range(0..4);
        let kernel = psi(&path, n, r, observed).unwrap();
        let order = n - observed;
        let on_window = simpson_mass(&path, r, order);
        let beyond = remaining(elapsed(&path, r, path.horizon()), order);
        assert!((on_window + beyond - 1.0).abs() < 1e-9, "config {k}: {on_window} + {beyond}");
        assert!((kernel.integral(r, path.horizon()) - on_window).abs() < 1e-9, "config {k}");
        assert!((kernel.total_mass() - 1.0).abs() < 1e-9, "config {k}: {}", kernel.total_mass());
        configs += 1;
    }
    assert!(configs >= 20);
}

#[test]
fn atom_matches_tail_oracle() {
    for k in 0..30 {
        let mut rng = replicate_rng(12, k);
        let path = random_path(&mut rng);
        let r = rng.random_range(0.0..path.horizon());
        let kernel = psi(&path, 2, r, 0).unwrap();
        let want = if *path.levels().last().unwrap() > 0.0 { 0.0 } else { remaining(elapsed(&path, r, path.horizon()), 2) };
        assert!((kernel.atom() - want).abs() < 1e-14, "config {k}");
    }
}

#[test]
fn recurrence_identity_on_random_probes() {
    // psi^{n-1} * int_r^u X = (n - N_r) psi^n
    let mut worst: f64 = 0.0;
    for k in 0..10_000u64 {
        let mut rng = replicate_rng(13, k);
        let path = random_path(&mut rng);
        let r = rng.random_range(0.0..path.horizon());
        let nr = rng.random_range(0..3);
        let n = nr + rng.random_range(1..6);
        let u = rng.random_range(r..path.horizon() * 1.5);
        let lhs = psi(&path, n - 1, r, nr).unwrap().eval(u) * path.integral(r, u);
        let rhs = (n - nr) as f64 * psi(&path, n, r, nr).unwrap().eval(u);
        if lhs == 0.0 && rhs == 0.0 {
            continue;
        }
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    assert!(worst <= 1e-12, "worst relative error {worst}");
}

#[test]
fn chou_meyer_identity_on_random_probes() {
    let mut worst: f64 = 0.0;
    for k in 0..10_000u64 {
        let mut rng = replicate_rng(14, k);
        let path = random_path(&mut rng);
        let pattern = coxkit::sample_cox_timechange(&path, &mut rng);
        let t = rng.random_range(0.0..path.horizon());
        let lambda = chou_meyer_intensity(&path, &pattern, t).unwrap();
        let x = path.level_at(t);
        if x == 0.0 {
            assert_eq!(lambda, 0.0);
        } else {
            worst = worst.max((lambda - x).abs() / x);
        }
    }
    assert!(worst <= 1e-10, "worst relative error {worst}");
}

#[test]
fn one_step_kernel_samples_first_gap() {
    let path = IntensityPath::new(vec![0.0, 1.0], vec![2.0, 0.5], 3.0).unwrap();
    let k = phi(&path, 0.4).unwrap();
    // P[T > 1.5 | T_n = 0.4] = exp(-(0.6 * 2 + 0.5 * 0.5))
    assert!((k.survival(1.5) - (-1.45f64).exp()).abs() < 1e-15);
    let pattern = PointPattern::new(vec![0.4], 3.0).unwrap();
    assert!((chou_meyer_intensity(&path, &pattern, 2.0).unwrap() - 0.5).abs() < 1e-15);
}

proptest! {
    #[test]
    fn quantile_lands_on_requested_mass(seed in 0u64..5_000, p in 0.001f64..0.999, n in 0usize..4) {
        let mut rng = replicate_rng(15, seed);
        let path = random_path(&mut rng);
        let r = rng.random_range(0.0..path.horizon());
        let kernel = psi(&path, n, r, 0).unwrap();
        match kernel.quantile(p) {
            Some(t) => {
                prop_assert!(t >= r && t <= path.horizon());
                prop_assert!((kernel.integral(r, t) - p).abs() < 1e-9);
            }
            None => prop_assert!(kernel.integral(r, path.horizon()) < p + 1e-12),
        }
    }

    #[test]
    fn survival_is_monotone(seed in 0u64..5_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut rng = replicate_rng(16, seed);
        let path = random_path(&mut rng);
        let kernel = psi(&path, 2, 0.0, 0).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let h = path.horizon();
        prop_assert!(kernel.survival(lo * h) >= kernel.survival(hi * h));
    }
}
