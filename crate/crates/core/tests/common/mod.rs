//! Property suites shared by the `properties` tests and the acceptance run.
//! Each suite returns the first violation it finds.

// Each test target uses a different subset.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topomulti::driver::{gradient_suite, GRADIENT_TOLERANCE};
use topomulti::fem::{assemble, element_energies, unit_element_stiffness, BoundaryConditions, FeModel, StructuredGrid};
use topomulti::filtering::{project, projection_derivative, HelmholtzFilter, SensitivityFilter};
use topomulti::interpolation::{modulus, modulus_gradient, weights_pnorm, MaterialSet, Scheme};
use topomulti::mma::{ConstraintSet, MmaParams, MmaState};
use topomulti::problem::{build_problem, Geometry, ProblemSpec};

pub type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub const SUITES: [(&str, fn() -> Outcome); 8] = [
    ("interpolation invariants", interpolation_invariants),
    ("interpolation gradients", interpolation_gradients),
    ("projection", projection),
    ("fem identities", fem_identities),
    ("patch test", patch_test),
    ("filter invariants", filter_invariants),
    ("mma optima", mma_optima),
    ("full-chain gradients", full_chain_gradients),
];

fn moduli(rng: &mut ChaCha8Rng, m: usize) -> MaterialSet {
    let mut e: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..10.0)).collect();
    e.sort_by(f64::total_cmp);
    MaterialSet::new(e, 1e-9).unwrap()
}

fn unit_sample(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(0.0..=1.0)).collect()
}

/// Selector vector choosing material `i` (0-based) in each scheme.
fn one_hot(scheme: Scheme, m: usize, i: usize) -> Vec<f64> {
    match scheme {
        Scheme::ExtendedSimp => (0..m).map(|k| if k <= i { 1.0 } else { 0.0 }).collect(),
        _ => (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect(),
    }
}

pub fn interpolation_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in [1, 2, 3, 5] {
        let set = moduli(&mut rng, m);
        for _ in 0..10_000 {
            let g = unit_sample(&mut rng, m);
            let phi = weights_pnorm(&g, &set);
            for i in 0..m {
                ensure!(phi[i] >= 0.0 && phi[i] <= g[i] && g[i] <= 1.0, "phi {phi:?} outside [0, gamma] at {g:?}");
            }
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng);
            let g2: Vec<f64> = perm.iter().map(|&k| g[k]).collect();
            let e2: Vec<f64> = perm.iter().map(|&k| set.moduli()[k]).collect();
            let set2 = MaterialSet::new(e2, set.e_void()).unwrap();
            let phi2 = weights_pnorm(&g2, &set2);
            let grad = modulus_gradient(&g, &set, Scheme::PnormMapping);
            let grad2 = modulus_gradient(&g2, &set2, Scheme::PnormMapping);
            for (j, &k) in perm.iter().enumerate() {
                ensure!((phi2[j] - phi[k]).abs() <= 1e-15, "weights not permutation equivariant at {g:?}");
                ensure!((grad2[j] - grad[k]).abs() <= 1e-12 * grad[k].abs().max(1.0), "gradient not equivariant at {g:?}");
            }
        }
    }
    for m in [2, 3, 5] {
        let set = moduli(&mut rng, m);
        let top = set.max_modulus();
        for _ in 0..100_000 {
            let g = unit_sample(&mut rng, m);
            for scheme in Scheme::ALL {
                let e = modulus(&g, &set, scheme);
                ensure!(e >= set.e_void() && e <= top * (1.0 + 1e-12), "{scheme}: E = {e} outside bounds at {g:?}");
            }
        }
    }
    for m in [1, 2, 3, 5] {
        let set = moduli(&mut rng, m);
        for scheme in Scheme::ALL {
            for i in 0..m {
                let target = set.moduli()[i];
                let tol = (target - set.e_void()) * set.penalization() * set.delta() * 2.0;
                let e = modulus(&one_hot(scheme, m, i), &set, scheme);
                ensure!((e - target).abs() <= tol, "{scheme}: one-hot {i} gives {e}, expected {target}");
            }
        }
    }
    let single = MaterialSet::new(vec![3.0], 1e-9).unwrap();
    for k in 0..=1000 {
        let g = k as f64 / 1000.0;
        let e = modulus(&[g], &single, Scheme::PnormMapping);
        ensure!(e / 3.0 <= g + 1e-6, "intermediate density not penalized at {g}");
        let simp = g.powi(3) * (3.0 - 1e-9) + 1e-9;
        ensure!((e - simp).abs() <= 1e-6, "one-material form mismatch at {g}: {e} vs {simp}");
    }
    Ok(())
}

pub fn interpolation_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for m in [2, 3, 5] {
        let set = moduli(&mut rng, m);
        for _ in 0..100 {
            let g: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.95)).collect();
            for scheme in Scheme::ALL {
                let grad = modulus_gradient(&g, &set, scheme);
                let scale = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..m {
                    let mut gp = g.clone();
                    let mut gm = g.clone();
                    gp[i] += h;
                    gm[i] -= h;
                    let fd = (modulus(&gp, &set, scheme) - modulus(&gm, &set, scheme)) / (2.0 * h);
                    let err = (fd - grad[i]).abs() / grad[i].abs().max(1e-3 * scale);
                    ensure!(err < 1e-5, "{scheme}: d/dg{i} off by {err:e} at {g:?}");
                }
            }
        }
    }
    let zero = modulus_gradient(&[0.0; 3], &moduli(&mut rng, 3), Scheme::PnormMapping);
    ensure!(zero.iter().all(|v| v.is_finite()), "gradient at the origin is not finite");
    Ok(())
}

pub fn projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for beta in [0.5, 1.0, 2.0, 8.0, 16.0, 64.0] {
        ensure!(project(0.0, beta) == 0.0 && project(0.5, beta) == 0.5 && project(1.0, beta) == 1.0, "fixed points moved at beta {beta}");
    }
    let h = 1e-7;
    for _ in 0..1000 {
        let x: f64 = rng.random_range(0.1..0.9);
        let beta: f64 = rng.random_range(1.0..8.0);
        let fd = (project(x + h, beta) - project(x - h, beta)) / (2.0 * h);
        let exact = projection_derivative(x, beta);
        ensure!(((fd - exact) / exact).abs() < 1e-6, "projection slope off at x={x}, beta={beta}");
        ensure!(project(x + 1e-3, beta) > project(x, beta), "projection not increasing at {x}");
    }
    for _ in 0..1000 {
        let x: f64 = rng.random_range(0.0..=1.0);
        if (x - 0.5).abs() >= 0.1 {
            ensure!((project(x, 64.0) - x.round()).abs() < 1e-3, "beta 64 does not round {x}");
        }
    }
    Ok(())
}

pub fn fem_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let k0 = unit_element_stiffness(0.3).map_err(|e| e.to_string())?;
    for a in 0..8 {
        for b in 0..8 {
            ensure!(k0[a][b] == k0[b][a], "element matrix not symmetric at ({a}, {b})");
        }
    }
    let grid = StructuredGrid::new(5, 4, 0.5).unwrap();
    let moduli: Vec<f64> = (0..grid.element_count()).map(|_| rng.random_range(0.1..5.0)).collect();
    let k = assemble(&grid, &moduli, &k0).map_err(|e| e.to_string())?;
    let dense = k.to_dense();
    let n = grid.dof_count();
    for i in 0..n {
        for j in 0..n {
            ensure!(dense[i][j] == dense[j][i], "global matrix not symmetric at ({i}, {j})");
        }
    }
    // two translations and an infinitesimal rotation
    let modes: Vec<Vec<f64>> = (0..3)
        .map(|kind| {
            (0..n)
                .map(|d| {
                    let (x, y) = grid.node_coords(d / 2);
                    match (kind, d % 2) {
                        (0, 0) | (1, 1) => 1.0,
                        (2, 0) => -y,
                        (2, 1) => x,
                        _ => 0.0,
                    }
                })
                .collect()
        })
        .collect();
    let scale = dense.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for mode in &modes {
        let r = k.matvec(mode);
        let worst = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        ensure!(worst < 1e-12 * scale, "rigid mode not in the kernel: {worst:e}");
    }
    for geometry in [Geometry::Cantilever, Geometry::MbbHalf] {
        let spec = ProblemSpec { nelx: 12, nely: 6, width: 2.0, height: 1.0, ..ProblemSpec::benchmark(geometry, 0.1) };
        let model = build_problem(&spec).map_err(|e| e.to_string())?;
        let moduli: Vec<f64> = (0..72).map(|_| rng.random_range(1e-3..5.0)).collect();
        let u = model.solve(&moduli).map_err(|e| e.to_string())?.displacement;
        let c: f64 = model.force_vector().iter().zip(&u).map(|(f, u)| f * u).sum();
        let energy: f64 = element_energies(&u, model.grid(), model.unit_stiffness())
            .iter()
            .zip(&moduli)
            .map(|(q, e)| q * e)
            .sum();
        ensure!(((c - energy) / c).abs() < 1e-8, "{geometry}: F.U = {c} but sum E q = {energy}");
    }
    Ok(())
}

pub fn patch_test() -> Outcome {
    let grid = StructuredGrid::new(4, 3, 0.25).unwrap();
    let (ex, ey, gxy) = (1e-3, -4e-4, 2.5e-4);
    let field = |x: f64, y: f64| (ex * x + 0.5 * gxy * y, ey * y + 0.5 * gxy * x);
    let mut fixed = Vec::new();
    let mut interior = Vec::new();
    for i in 0..=4 {
        for j in 0..=3 {
            let node = grid.node_index(i, j);
            if i == 0 || i == 4 || j == 0 || j == 3 {
                let (ux, uy) = field(grid.node_coords(node).0, grid.node_coords(node).1);
                fixed.push((2 * node, ux));
                fixed.push((2 * node + 1, uy));
            } else {
                interior.push(node);
            }
        }
    }
    let bcs = BoundaryConditions::with_prescribed(fixed, vec![]).map_err(|e| e.to_string())?;
    let model = FeModel::new(grid.clone(), bcs, unit_element_stiffness(0.3).unwrap()).map_err(|e| e.to_string())?;
    let u = model.solve(&[1.7; 12]).map_err(|e| e.to_string())?.displacement;
    for node in interior {
        let (x, y) = grid.node_coords(node);
        let (ux, uy) = field(x, y);
        ensure!((u[2 * node] - ux).abs() < 1e-14 && (u[2 * node + 1] - uy).abs() < 1e-14, "node {node} misses the linear field");
    }
    Ok(())
}

pub fn filter_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let grid = StructuredGrid::new(30, 15, 1.0 / 15.0).unwrap();
    let ne = grid.element_count();
    for radius in [1.5, 2.5, 4.0] {
        let f = SensitivityFilter::new(&grid, radius * grid.elem_size()).map_err(|e| e.to_string())?;
        let out = f.apply(&vec![0.37; ne]).map_err(|e| e.to_string())?;
        ensure!(out.iter().all(|v| (v - 0.37).abs() < 1e-15), "sensitivity filter changes a constant (R = {radius})");
    }
    for radius in [2.0, 4.0, 10.0] {
        let f = HelmholtzFilter::new(&grid, radius * grid.elem_size() / (2.0 * 3f64.sqrt())).map_err(|e| e.to_string())?;
        let out = f.apply(&vec![0.37; ne]).map_err(|e| e.to_string())?;
        ensure!(out.iter().all(|v| (v - 0.37).abs() < 1e-12), "Helmholtz filter changes a constant (R = {radius})");
        let field: Vec<f64> = (0..ne).map(|_| rng.random_range(0.0..=1.0)).collect();
        let out = f.apply(&field).map_err(|e| e.to_string())?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / ne as f64;
        ensure!((mean(&out) - mean(&field)).abs() < 1e-10, "Helmholtz filter moves the mean (R = {radius})");
    }
    Ok(())
}

pub fn mma_optima() -> Outcome {
    let n = 4;
    let mut x = vec![0.8; n];
    let mut s = MmaState::new(&x, vec![0.0; n], vec![1.0; n], MmaParams::default()).map_err(|e| e.to_string())?;
    for _ in 0..50 {
        let df: Vec<f64> = x.iter().map(|v| 2.0 * (v - 0.3)).collect();
        let f = x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum();
        let cons = ConstraintSet { values: vec![-1.0], gradients: vec![vec![0.0; n]] };
        x = s.step(&x, f, &df, &cons).map_err(|e| e.to_string())?.x;
    }
    ensure!(x.iter().all(|v| (v - 0.3).abs() < 1e-4), "quadratic optimum missed: {x:?}");

    let mut x = vec![1.0, 0.8];
    let mut s = MmaState::new(&x, vec![0.1; 2], vec![1.0; 2], MmaParams::default()).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let cons = ConstraintSet {
            values: vec![1.0 / x[0] + 1.0 / x[1] - 4.0],
            gradients: vec![vec![-1.0 / (x[0] * x[0]), -1.0 / (x[1] * x[1])]],
        };
        x = s.step(&x, x[0] + x[1], &[1.0, 1.0], &cons).map_err(|e| e.to_string())?.x;
    }
    ensure!((x[0] - 0.5).abs() < 1e-3 && (x[1] - 0.5).abs() < 1e-3, "constrained optimum missed: {x:?}");
    Ok(())
}

pub fn full_chain_gradients() -> Outcome {
    for seed in [1, 2] {
        for case in gradient_suite(seed).map_err(|e| e.to_string())? {
            ensure!(
                case.passed(),
                "{} / {} / {} materials: error {:e} above {GRADIENT_TOLERANCE:e}",
                case.scheme,
                case.filter,
                case.materials,
                case.check.max_error()
            );
        }
    }
    Ok(())
}
