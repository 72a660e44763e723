use flowrecon_core::phantom::{add_magnitude_noise, poiseuille_velocity, voxel_means, NoiseSpec};
use flowrecon_core::velocity::{
    choose_beta_discrepancy, optimality_residual, reference_coefficients, Solver, VelocityProblem, VelocityReconConfig,
};
use flowrecon_core::{DiskTransform, GeometryBounds, GridGeometry, RadiusFunction, VoxelGrid};
use proptest::prelude::*;

struct Setup {
    problem: VelocityProblem,
    clean: VoxelGrid,
    cfg: VelocityReconConfig,
}

fn setup(radius: RadiusFunction, n: usize) -> Setup {
    let g = GridGeometry::full_fov(n).unwrap();
    let t = DiskTransform::new(radius.clone(), GeometryBounds::default()).unwrap();
    let cfg = VelocityReconConfig {
        cutoff: Some(150.0),
        subsamples: 8,
        ..Default::default()
    };
    let problem = VelocityProblem::new(&t, &g, [0.0, 0.0], &cfg).unwrap();
    let clean = voxel_means(|y| poiseuille_velocity(&radius, 1.0, y), &radius, &g, 8);
    Setup { problem, clean, cfg }
}

fn radius_strategy() -> impl Strategy<Value = RadiusFunction> {
    (0.45..0.6f64, prop::collection::vec(-0.03..0.03f64, 4))
        .prop_map(|(b0, c)| RadiusFunction::new(b0, c[..2].to_vec(), c[2..].to_vec()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sweep_is_monotone_and_optimal(r in radius_strategy(), seed in any::<u64>(), sigma in 0.001..0.05f64) {
        let s = setup(r, 24);
        let (u, _) = add_magnitude_noise(&s.clean, &NoiseSpec::new(sigma, 0.0, seed).unwrap());
        let betas: Vec<f64> = (0..12).map(|n| 0.5f64.powi(2 * n)).collect();
        let solves = s.problem.sweep(&u, &betas, &s.cfg).unwrap();
        for w in solves.windows(2) {
            // β decreases along the sweep
            prop_assert!(w[1].residual <= w[0].residual * (1.0 + 1e-9));
            prop_assert!(w[1].coefficients.laplacian_norm_sq() >= w[0].coefficients.laplacian_norm_sq() * (1.0 - 1e-9));
        }
        for solve in &solves {
            prop_assert!(optimality_residual(&s.problem, &u, solve).unwrap() <= 1e-8);
            prop_assert!(solve.normal_residual <= 1e-10);
        }
    }
}

#[test]
fn cg_matches_cholesky() {
    let s = setup(RadiusFunction::new(0.5, vec![0.02, 0.0], vec![0.0, 0.03]).unwrap(), 24);
    let cg = VelocityReconConfig {
        solver: Solver::Cg,
        cg_tol: 1e-13,
        ..s.cfg
    };
    for beta in [1e-2, 1e-5] {
        let a = s.problem.reconstruct(&s.clean, beta, &s.cfg).unwrap();
        let b = s.problem.reconstruct(&s.clean, beta, &cg).unwrap();
        let diff = a.coefficients.c.iter().zip(&b.coefficients.c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = a.coefficients.c.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-8 * scale, "beta {beta}: {diff}");
        assert!(optimality_residual(&s.problem, &s.clean, &b).unwrap() <= 1e-8);
    }
}

#[test]
fn discrepancy_beta_decreases_with_noise() {
    // data in the range of the model, so that every bound is reachable
    let r = RadiusFunction::constant(0.5, 2);
    let s = setup(r.clone(), 32);
    let t = DiskTransform::new(r.clone(), GeometryBounds::default()).unwrap();
    let truth = reference_coefficients(s.problem.basis(), &t, |y| poiseuille_velocity(&r, 1.0, y), 64, 128).unwrap();
    let mut clean = VoxelGrid::zeros(s.clean.geometry);
    for (i, v) in s.problem.design().voxels.iter().zip(s.problem.predict(&truth.c)) {
        clean.values[*i] = v;
    }
    let mut betas = Vec::new();
    for sigma in [0.1, 0.01, 0.001] {
        let (u, _) = add_magnitude_noise(&clean, &NoiseSpec::new(sigma, 0.0, 7).unwrap());
        let eps = s.problem.grid_distance(&u, &clean).unwrap();
        let choice = choose_beta_discrepancy(&s.problem, &u, eps, &s.cfg).unwrap();
        assert!(choice.monotone);
        assert!(!choice.unreachable && choice.solve.residual <= 2.0 * eps);
        betas.push(choice.solve.beta);
    }
    assert!(betas[0] > betas[1] && betas[1] > betas[2], "{betas:?}");
}

#[test]
fn huge_beta_and_zero_data() {
    let s = setup(RadiusFunction::constant(0.5, 0), 16);
    let big = s.problem.reconstruct(&s.clean, 1e12, &s.cfg).unwrap();
    assert!(big.coefficients.c.iter().map(|c| c * c).sum::<f64>().sqrt() <= 1e-6);
    let zero = VoxelGrid::zeros(s.clean.geometry);
    let z = s.problem.reconstruct(&zero, 1e-6, &s.cfg).unwrap();
    assert!(z.coefficients.c.iter().all(|c| *c == 0.0));
}
