mod common;

use dipolar_core::*;
use num_complex::Complex64;
use proptest::prelude::*;

/// Sum of complex Gaussian bumps well inside a 12×10 box.
#[derive(Debug, Clone)]
struct Bumps(Vec<(f64, f64, f64, f64, f64)>);

fn bumps() -> impl Strategy<Value = Bumps> {
    prop::collection::vec(
        (-1.5f64..1.5, -1.5f64..1.5, 0.6f64..1.2, -1.0f64..1.0, -1.0f64..1.0),
        1..4,
    )
    .prop_map(Bumps)
}

fn field(grid: &Grid2D, b: &Bumps) -> WaveField {
    WaveField::from_fn(grid.clone(), |x, y| {
        b.0.iter()
            .map(|&(c1, c2, w, re, im)| {
                let e = (-((x - c1).powi(2) + (y - c2).powi(2)) / (2.0 * w * w)).exp();
                Complex64::new(re + 0.2, im) * e
            })
            .sum()
    })
    .unwrap()
}

fn grid() -> Grid2D {
    make_grid(48, 40, 12.0, 10.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn plancherel_and_round_trip(b in bumps()) {
        let u = field(&grid(), &b);
        let h = forward_transform(&u).unwrap();
        prop_assert!((h.mass() - u.mass()).abs() <= 1e-12 * u.mass());
        let back = inverse_transform(&h).unwrap();
        for (p, q) in back.values().iter().zip(u.values()) {
            prop_assert!((p - q).norm() <= 1e-13);
        }
    }

    #[test]
    fn real_fields_have_conjugate_symmetric_spectra(b in bumps()) {
        let g = grid();
        let rho: Vec<Complex64> = field(&g, &b).density().into_iter().map(|r| Complex64::new(r, 0.0)).collect();
        let u = WaveField::new(g.clone(), rho, Space::Position).unwrap();
        let h = forward_transform(&u).unwrap();
        let (n1, n2) = (g.n1(), g.n2());
        for i in 1..n1 {
            for j in 1..n2 {
                let p = h.values()[g.index(i, j)];
                let q = h.values()[g.index(n1 - i, n2 - j)];
                prop_assert!((p - q.conj()).norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn fab_forms_agree(b in bumps(), a in -2.0f64..2.0, bb in -3.0f64..3.0) {
        let g = grid();
        let rho = field(&g, &b).density();
        let f = fab_energy(&g, &rho, a, bb).unwrap();
        let c = fab_energy_coulomb_form(&g, &rho, a, bb).unwrap();
        let scale = (a.abs() + bb.abs()) * g.cell_area() * rho.iter().map(|r| r * r).sum::<f64>();
        prop_assert!((f - c).abs() <= 1e-10 * scale, "{f} vs {c}");
    }

    #[test]
    fn fab_is_linear_in_parameters(b in bumps(), a in -2.0f64..2.0, bb in -3.0f64..3.0, t in 0.1f64..5.0) {
        let g = grid();
        let rho = field(&g, &b).density();
        let f = fab_energy(&g, &rho, a, bb).unwrap();
        let ft = fab_energy(&g, &rho, t * a, t * bb).unwrap();
        prop_assert!((ft - t * f).abs() <= 1e-12 * (1.0 + ft.abs()));
        // second line of the equivalent forms: (a − b/2)∫ρ² + b∫(ξ₁²/|ξ|²)|ρ̂|²
        let local = (a - 0.5 * bb) * g.cell_area() * rho.iter().map(|r| r * r).sum::<f64>();
        let hat = g.forward_real(&rho);
        let dxi = g.freq_cell_area();
        let mut dir = 0.0;
        for (i, &x1) in g.xi1().iter().enumerate() {
            for (j, &x2) in g.xi2().iter().enumerate() {
                let k = x1 * x1 + x2 * x2;
                let w = if k == 0.0 { 0.5 } else { x1 * x1 / k };
                dir += w * hat[g.index(i, j)].norm_sqr() * dxi;
            }
        }
        let alt = local + bb * dir;
        prop_assert!((alt - f).abs() <= 1e-10 * (1.0 + f.abs()));
    }

    #[test]
    fn fab_lies_between_extreme_weights(b in bumps(), a in -2.0f64..2.0, bb in -3.0f64..3.0) {
        let g = grid();
        let rho = field(&g, &b).density();
        let f = fab_energy(&g, &rho, a, bb).unwrap();
        let l2 = g.cell_area() * rho.iter().map(|r| r * r).sum::<f64>();
        let (lo, hi) = ((a - 0.5 * bb).min(a + 0.5 * bb), (a - 0.5 * bb).max(a + 0.5 * bb));
        prop_assert!(f >= lo * l2 - 1e-12 && f <= hi * l2 + 1e-12);
    }

    #[test]
    fn energy_gradient_matches_finite_differences(
        b in bumps(), d in bumps(),
        beta in -1.0f64..3.0, lambda in -1.0f64..2.0, n3 in -1.0f64..1.0,
    ) {
        let g = grid();
        let p = PhysicalParams::new(beta, lambda, n3, TrapSpec::default()).unwrap();
        let u = field(&g, &b);
        let v = field(&g, &d);
        prop_assert!(directional_error(&u, &v, &p) <= 1e-6);
    }
}

/// Relative mismatch between `2 Re⟨∇E, v⟩` and a fourth-order central
/// difference of `E` along `v`.
pub fn directional_error(u: &WaveField, v: &WaveField, p: &PhysicalParams) -> f64 {
    let g = u.grid();
    let grad = gradient_energy(u, p).unwrap();
    let analytic = 2.0 * grad.inner(v).re;
    let shifted = |t: f64| {
        let vals: Vec<Complex64> = u.values().iter().zip(v.values()).map(|(a, b)| a + b * t).collect();
        energy_2d(&WaveField::new(g.clone(), vals, Space::Position).unwrap(), p)
            .unwrap()
            .total
    };
    let h = 1e-3;
    let fd = (8.0 * (shifted(h) - shifted(-h)) - (shifted(2.0 * h) - shifted(-2.0 * h))) / (12.0 * h);
    (fd - analytic).abs() / analytic.abs().max(1e-3)
}

#[test]
fn transform_matches_direct_sum() {
    let (n1, n2, l1, l2) = (16, 20, 6.0, 7.5);
    let g = make_grid(n1, n2, l1, l2).unwrap();
    let u = WaveField::from_fn(g.clone(), |x, y| {
        Complex64::new((-(x - 0.3).powi(2) - y * y).exp(), 0.2 * (x * y).sin() * (-(x * x + y * y)).exp())
    })
    .unwrap();
    let pairs: Vec<(f64, f64)> = u.values().iter().map(|c| (c.re, c.im)).collect();
    let slow = common::slow_forward(n1, n2, l1, l2, &pairs);
    let fast = forward_transform(&u).unwrap();
    for (f, s) in fast.values().iter().zip(&slow) {
        assert!((f.re - s.0).abs() < 1e-13 && (f.im - s.1).abs() < 1e-13);
    }
}
