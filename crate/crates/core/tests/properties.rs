//! Randomized invariants of the spectral core, potentials, controls and I/O.

use std::f64::consts::PI;

use proptest::prelude::*;

use chc_core::field::{read_snapshot, write_snapshot};
use chc_core::noise::sample_noise;
use chc_core::presets::{random_control, random_field};
use chc_core::velocity::{control_norm, project_admissible, read_control, stream_to_velocity, write_control};
use chc_core::{
    AdmissibleSet, GridSpec, Models, NoiseModel, PotentialModel, RegularizationParam, SolverParams,
    Spectral, StateSolver, StreamControl,
};

fn grid(nx: usize, ny: usize) -> GridSpec {
    GridSpec::new(nx, ny, 2.0 * PI, PI * 1.5).unwrap()
}

fn sizes() -> impl Strategy<Value = (usize, usize)> {
    (prop::sample::select(vec![8usize, 12, 16, 32]), prop::sample::select(vec![8usize, 10, 16, 24]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_adjoint_is_exact_transpose((nx, ny) in sizes(), a in any::<u64>(), b in any::<u64>()) {
        let g = grid(nx, ny);
        let sp = Spectral::new(g);
        let f = random_field(g, 0.2, 1.0, a);
        let v = sp.gradient(&random_field(g, 0.0, 1.0, b));
        let lhs = sp.gradient(&f).dot(&v);
        let rhs = f.dot(&sp.gradient_adjoint(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn divergence_of_gradient_is_laplacian((nx, ny) in sizes(), a in any::<u64>()) {
        let g = grid(nx, ny);
        let sp = Spectral::new(g);
        let f = random_field(g, 0.0, 1.0, a);
        let err = sp.divergence(&sp.gradient(&f)).sub(&sp.laplacian(&f)).max_abs();
        prop_assert!(err <= 1e-10 * (1.0 + sp.laplacian(&f).max_abs()));
    }

    #[test]
    fn neumann_inverse_is_mean_free_right_inverse((nx, ny) in sizes(), a in any::<u64>()) {
        let g = grid(nx, ny);
        let sp = Spectral::new(g);
        let f = random_field(g, 0.0, 1.0, a);
        let z = sp.inv_neumann_laplacian(&f).unwrap();
        prop_assert!(z.mean().abs() <= 1e-13);
        prop_assert!(sp.laplacian(&z).scaled(-1.0).sub(&f).l2_norm() <= 1e-11 * f.l2_norm());
    }

    #[test]
    fn stream_velocity_is_divergence_free(a in any::<u64>(), k_u in 1usize..5) {
        let g = grid(16, 16);
        let ctrl = random_control(&StreamControl::zeros(g, 3, 0.1, k_u).unwrap(), 1.0, a);
        let sp = Spectral::new(g);
        for n in 0..3 {
            let u = stream_to_velocity(&ctrl, n).unwrap();
            prop_assert!(sp.divergence(&u).max_abs() <= 1e-12 * (1.0 + u.max_abs()));
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(a in any::<u64>(), scale in 0.01f64..100.0, p in 2.5f64..10.0, bound in 0.1f64..20.0) {
        let g = grid(16, 16);
        let set = AdmissibleSet::new(p, bound).unwrap();
        let ctrl = random_control(&StreamControl::zeros(g, 4, 0.05, 3).unwrap(), scale, a);
        let once = project_admissible(&ctrl, &set);
        prop_assert!(set.contains(&once));
        prop_assert!(control_norm(&once, p) <= control_norm(&ctrl, p) * (1.0 + 1e-13));
        let twice = project_admissible(&once, &set);
        prop_assert!(twice.coeffs().iter().zip(once.coeffs()).all(|(x, y)| (x - y).abs() <= 1e-13 * (1.0 + y.abs())));
    }

    #[test]
    fn yosida_is_monotone_lipschitz_and_dominated(r1 in -4.0f64..4.0, r2 in -4.0f64..4.0, lam in 1e-3f64..2.0) {
        let m = PotentialModel::polynomial();
        let l = RegularizationParam::new(lam).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (a, b) = (m.regularized(l, lo).unwrap(), m.regularized(l, hi).unwrap());
        prop_assert!(a.beta_lam <= b.beta_lam + 1e-12);
        prop_assert!(b.beta_lam - a.beta_lam <= (hi - lo) / lam * (1.0 + 1e-10) + 1e-12);
        prop_assert!(a.beta_lam.abs() <= m.beta(lo).unwrap().abs() * (1.0 + 1e-12) + 1e-12);
        prop_assert!(a.beta_hat_lam <= m.beta_hat(lo).unwrap() + 1e-12);
        prop_assert!((a.psi_lam_prime - (a.beta_lam - m.c_psi() * lo)).abs() <= 1e-12 * (1.0 + a.beta_lam.abs()));
    }

    #[test]
    fn logarithmic_resolvent_stays_inside(r in -50.0f64..50.0, lam in 1e-3f64..2.0) {
        let m = PotentialModel::logarithmic(0.8, 1.0).unwrap();
        let l = RegularizationParam::new(lam).unwrap();
        let x = m.resolvent(l, r).unwrap();
        prop_assert!(x > -1.0 && x < 1.0);
        let residual = |y: f64| m.beta(y).map(|b| y + lam * b - r).unwrap_or(f64::NAN);
        // the root can sit between two adjacent doubles, or closer to ±1 than
        // any double; both are as good as floating point allows
        let small = residual(x).abs() <= 1e-12 * (1.0 + r.abs());
        let bracketed = residual(x.next_down()) * residual(x) <= 0.0 || residual(x) * residual(x.next_up()) <= 0.0;
        let beyond_last_double = 1.0 - x.abs() <= 8.0 * f64::EPSILON && residual(x) * x < 0.0;
        prop_assert!(small || bracketed || beyond_last_double, "x = {x}, residual {}", residual(x));
    }

    #[test]
    fn moreau_envelope_derivative_matches_differences(r in -2.0f64..2.0, lam in 0.01f64..1.0) {
        let m = PotentialModel::polynomial();
        let l = RegularizationParam::new(lam).unwrap();
        let h = 1e-5;
        let fd = (m.regularized(l, r + h).unwrap().psi_lam - m.regularized(l, r - h).unwrap().psi_lam) / (2.0 * h);
        let exact = m.regularized(l, r).unwrap().psi_lam_prime;
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact((nx, ny) in sizes(), a in any::<u64>()) {
        let f = random_field(grid(nx, ny), 0.3, 2.0, a);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        let back = read_snapshot(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        prop_assert!(back.values().iter().zip(f.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn control_round_trip_is_bit_exact(a in any::<u64>(), n in 1usize..6, k_u in 1usize..5) {
        let g = grid(16, 16);
        let ctrl = random_control(&StreamControl::zeros(g, n, 0.01, k_u).unwrap(), 3.0, a);
        let mut bytes = Vec::new();
        write_control(&mut bytes, &ctrl).unwrap();
        let back = read_control(bytes.as_slice(), g).unwrap();
        prop_assert!(back.same_shape(&ctrl));
        prop_assert!(back.coeffs().iter().zip(ctrl.coeffs()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_is_conserved_under_random_controls(a in any::<u64>(), mean in -0.5f64..0.5, multiplicative in any::<bool>()) {
        let g = grid(16, 16);
        let noise = if multiplicative {
            NoiseModel::conservative_multiplicative(vec![0.4, 0.2]).unwrap()
        } else {
            NoiseModel::additive_cosine_modes(g, 3, 0.3).unwrap()
        };
        let models = Models { potential: PotentialModel::polynomial(), noise };
        let solver = StateSolver::new(g, SolverParams::new(20, 1e-3, 1.0).unwrap(), &models).unwrap();
        let ctrl = random_control(&StreamControl::zeros(g, 20, 1e-3, 3).unwrap(), 2.0, a);
        let path = sample_noise(a, 0, 20, 1e-3, &models.noise).unwrap();
        let traj = solver.solve(&random_field(g, mean, 0.5, a ^ 1), &ctrl, &path).unwrap();
        prop_assert!(traj.max_mass_drift() <= 1e-12 * (1.0 + mean.abs()));
    }
}
