//! Adaptive Simpson quadrature against the closed-form normalizer.

use lika_core::losses::{exact_norm_nll, norm_constant};
use lika_core::TemperaturePair;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        go(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + go(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    go(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Integral over the real line of an even function concentrated within
/// `peak ± 40 / sqrt(curv)`.
fn integrate_even(f: &dyn Fn(f64) -> f64, peak: f64, curv: f64) -> f64 {
    let w = 1.0 / curv.sqrt();
    let knots = [0.0, (peak - 3.0 * w).max(0.0), peak, peak + 3.0 * w, peak + 10.0 * w, peak + 40.0 * w];
    let scale = f(peak).max(f(0.0));
    2.0 * knots
        .windows(2)
        .filter(|k| k[1] > k[0])
        .map(|k| simpson(f, k[0], k[1], 1e-14 * scale * w))
        .sum::<f64>()
}

fn grid() -> impl Iterator<Item = (f64, f64, f64)> {
    [0.1, 1.0, 5.0].into_iter().flat_map(|s| {
        [0.0, 0.1, 1.0, 10.0]
            .into_iter()
            .flat_map(move |t2| [0.0, 0.1, 1.0, 10.0].into_iter().map(move |t3| (s, t2, t3)))
    })
}

#[test]
fn closed_form_matches_quadrature() {
    for (sigma, t2, t3) in grid() {
        let a = 1.0 / (2.0 * sigma * sigma) + t2;
        let density = |u: f64| (-a * u * u - t3 * (u.abs() - sigma).powi(2)).exp();
        let quad = integrate_even(&density, t3 * sigma / (a + t3), a + t3);
        let z = norm_constant(sigma, TemperaturePair::new(t2, t3).unwrap()).unwrap();
        assert!((z - quad).abs() / quad < 1e-6, "σ={sigma} T2={t2} T3={t3}: {z} vs {quad}");
    }
}

#[test]
fn exact_density_has_unit_mass() {
    for (sigma, t2, t3) in grid() {
        let t = TemperaturePair::new(t2, t3).unwrap();
        let density = |u: f64| (-exact_norm_nll(u, 0.0, sigma, t).unwrap().value).exp();
        let a = 1.0 / (2.0 * sigma * sigma) + t2;
        let mass = integrate_even(&density, t3 * sigma / (a + t3), a + t3);
        assert!((mass - 1.0).abs() < 1e-6, "σ={sigma} T2={t2} T3={t3}: mass {mass}");
    }
}

#[test]
fn quadrature_oracle_reproduces_frozen_values() {
    let z = |s: f64, t2: f64, t3: f64| {
        let a = 1.0 / (2.0 * s * s) + t2;
        let density = |u: f64| (-a * u * u - t3 * (u.abs() - s).powi(2)).exp();
        integrate_even(&density, t3 * s / (a + t3), a + t3)
    };
    assert!((z(1.0, 0.0, 0.0) - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    assert!((z(1.0, 1.0, 0.0) - 1.44720).abs() < 5e-6);
    assert!((z(0.5, 0.0, 2.0) - 1.0494).abs() < 5e-5);
}
