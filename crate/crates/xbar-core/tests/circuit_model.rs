//! Circuit-model behavior: analytic references, an independent dense solve,
//! linear-network properties and the sneak-path regression fixture.

use faer::prelude::Solve;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xbar_core::circuit::{assemble, port_conductance, NodalSystem};
use xbar_core::matrix::ConductanceMatrix;
use xbar_core::nonideal::evaluate_ideal;
use xbar_core::params::CrossbarParams;

fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / scale)
        .fold(0.0, f64::max)
}

fn random_state(p: &CrossbarParams, seed: u64) -> ConductanceMatrix {
    ConductanceMatrix::random_levels(p, seed)
}

fn random_vin(m: usize, v_read: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(0.0..v_read)).collect()
}

#[test]
fn ideal_limit_reproduces_plain_product_exactly() {
    let p = CrossbarParams::ideal(5, 7);
    let g = random_state(&p, 1);
    let sys = assemble(&p, &g).unwrap();
    // everything merges away: no unknowns left to solve for
    assert_eq!(sys.n_unknowns(), 0);
    let vin = random_vin(5, p.v_read, 2);
    let res = sys.solve(&vin).unwrap();
    let want = evaluate_ideal(&g, &vin).unwrap();
    assert_eq!(res.i_out, want);
}

#[test]
fn single_cell_divider_matches_closed_form() {
    // 1x1 with merged wires and no driver: a two-resistor divider,
    // i_out = v * G / (1 + G * R_sense)
    let p = CrossbarParams {
        rows: 1,
        cols: 1,
        r_row: 0.0,
        r_col: 0.0,
        r_sense: 1e3,
        r_driver: 0.0,
        ..Default::default()
    };
    let g_dev = 1.0 / 20e3;
    let g = ConductanceMatrix::uniform(1, 1, g_dev);
    let sys = assemble(&p, &g).unwrap();
    let res = sys.solve(&[p.v_read]).unwrap();
    let want = p.v_read * g_dev / (1.0 + g_dev * p.r_sense);
    assert!((res.i_out[0] - want).abs() < 1e-18 + 1e-12 * want);
}

#[test]
fn three_by_two_system_is_well_posed() {
    // 3x2 array, every device at 20 kohm: all 12 internal nodes unknown
    let p = CrossbarParams {
        rows: 3,
        cols: 2,
        ..Default::default()
    };
    let g = ConductanceMatrix::uniform(3, 2, 1.0 / 20e3);
    let sys = assemble(&p, &g).unwrap();
    assert_eq!(sys.n_unknowns(), 12);
    sys.solve(&[0.2, 0.01, 0.2]).unwrap();
}

#[test]
fn zero_input_gives_zero_everything() {
    let p = CrossbarParams::with_dims(8, 6);
    let g = random_state(&p, 3);
    let sys = assemble(&p, &g).unwrap();
    let res = sys.solve(&[0.0; 8]).unwrap();
    assert!(res.node_voltages.iter().all(|&v| v == 0.0));
    assert!(res.i_out.iter().all(|&v| v == 0.0));
    let bc = sys.branch_currents(&res).unwrap();
    assert!(bc.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn near_ideal_wires_converge_to_ideal_product() {
    // r = 1e-6 ohm everywhere: relative error below 1e-4
    let p = CrossbarParams {
        rows: 16,
        cols: 16,
        r_row: 1e-6,
        r_col: 1e-6,
        r_sense: 1e-6,
        r_driver: 1e-6,
        ..Default::default()
    };
    let g = random_state(&p, 4);
    let sys = assemble(&p, &g).unwrap();
    let vin = random_vin(16, p.v_read, 5);
    let res = sys.solve(&vin).unwrap();
    let want = evaluate_ideal(&g, &vin).unwrap();
    let err = max_rel_err(&res.i_out, &want);
    assert!(err < 1e-4, "ideal-limit convergence error {err}");
}

#[test]
fn independent_dense_solve_agrees_at_64x64() {
    // second, independent factorization: faer partial-pivot LU on the same
    // Laplacian, against the banded Cholesky path
    let p = CrossbarParams::with_dims(64, 64);
    let g = random_state(&p, 6);
    let sys = assemble(&p, &g).unwrap();
    assert_eq!(sys.n_unknowns(), 2 * 64 * 64);
    let vin = random_vin(64, p.v_read, 7);
    let res = sys.solve(&vin).unwrap();

    let n = sys.n_unknowns();
    let dense = sys.dense_laplacian();
    let a = faer::Mat::from_fn(n, n, |i, j| dense[(i, j)]);
    let rhs_vec = sys.rhs(&vin);
    let b = faer::Mat::from_fn(n, 1, |i, _| rhs_vec[i]);
    let lu = a.partial_piv_lu();
    let x = lu.solve(&b);

    // recover the sense currents from the independent solution
    let mut i_out_indep = vec![0.0; 64];
    for j in 0..64 {
        // unknown index of b(63, j) equals the voltage row in node order;
        // recompute through the public node classes
        match sys.node_class(xbar_core::circuit::Side::Col, 63, j) {
            xbar_core::circuit::NodeClass::Unknown(u) => {
                i_out_indep[j] = x[(u, 0)] / p.r_sense;
            }
            other => panic!("unexpected node class {other:?}"),
        }
    }
    let err = max_rel_err(&res.i_out, &i_out_indep);
    assert!(err < 1e-10, "independent dense solve deviates by {err}");
}

#[test]
fn laplacian_is_exactly_symmetric() {
    for (m, n) in [(3usize, 2usize), (9, 5), (16, 16)] {
        let p = CrossbarParams::with_dims(m, n);
        let g = random_state(&p, 8);
        let sys = assemble(&p, &g).unwrap();
        let d = sys.dense_laplacian();
        for i in 0..sys.n_unknowns() {
            for j in 0..i {
                assert_eq!(d[(i, j)], d[(j, i)], "asymmetry at ({i},{j})");
            }
        }
    }
}

#[test]
fn superposition_holds_for_random_drive() {
    let p = CrossbarParams::with_dims(12, 9);
    let g = random_state(&p, 9);
    let (g_eff, _) = port_conductance(&p, &g).unwrap();
    let sys = assemble(&p, &g).unwrap();
    let vin = random_vin(12, p.v_read, 10);
    let res = sys.solve(&vin).unwrap();
    let want = g_eff.vec_mul(&vin).unwrap();
    let err = max_rel_err(&res.i_out, &want);
    assert!(err < 1e-9, "superposition error {err}");
}

#[test]
fn port_conductance_ideal_limit_is_the_state_itself() {
    let p = CrossbarParams::ideal(6, 4);
    let g = random_state(&p, 11);
    let (g_eff, g_load) = port_conductance(&p, &g).unwrap();
    for i in 0..6 {
        for j in 0..4 {
            assert!((g_eff.at(i, j) - g.at(i, j)).abs() <= 1e-18);
        }
        let want: f64 = (0..4).map(|j| g.at(i, j)).sum();
        assert!((g_load[i] - want).abs() <= 1e-18);
    }
}

#[test]
fn conductance_scaling_scales_port_matrix() {
    // scaling every conductance (devices and wires) by k scales G_eff by k
    let k = 3.0;
    let p = CrossbarParams::with_dims(5, 5);
    let g = random_state(&p, 12);
    let mut p_scaled = p.clone();
    p_scaled.r_row /= k;
    p_scaled.r_col /= k;
    p_scaled.r_sense /= k;
    p_scaled.r_driver /= k;
    p_scaled.g_min *= k;
    p_scaled.g_max *= k;
    let mut g_scaled = g.clone();
    for i in 0..5 {
        for j in 0..5 {
            *g_scaled.at_mut(i, j) *= k;
        }
    }
    let (a, _) = port_conductance(&p, &g).unwrap();
    let (b, _) = port_conductance(&p_scaled, &g_scaled).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let want = k * a.at(i, j);
            assert!(
                (b.at(i, j) - want).abs() <= 1e-12 * want.abs(),
                "scaling broke at ({i},{j})"
            );
        }
    }
}

#[test]
fn port_conductance_matches_individual_solves() {
    let p = CrossbarParams::with_dims(16, 16);
    let g = random_state(&p, 13);
    let (g_eff, g_load) = port_conductance(&p, &g).unwrap();
    let sys = assemble(&p, &g).unwrap();
    for i in 0..16 {
        let mut vin = vec![0.0; 16];
        vin[i] = 1.0;
        let res = sys.solve(&vin).unwrap();
        for j in 0..16 {
            assert!((g_eff.at(i, j) - res.i_out[j]).abs() <= 1e-15);
        }
        assert!((g_load[i] - res.i_in[i]).abs() <= 1e-15);
    }
}

#[test]
fn charge_is_conserved() {
    // every path to ground goes through the sense resistors, so the source
    // currents and sense currents must balance — including merged topologies
    let cases = [
        CrossbarParams::with_dims(10, 14),
        CrossbarParams {
            r_row: 0.0,
            ..CrossbarParams::with_dims(8, 8)
        },
        CrossbarParams {
            r_col: 0.0,
            r_driver: 0.0,
            ..CrossbarParams::with_dims(8, 8)
        },
        CrossbarParams {
            r_sense: 0.0,
            ..CrossbarParams::with_dims(8, 8)
        },
    ];
    for (k, p) in cases.iter().enumerate() {
        let g = random_state(p, 14 + k as u64);
        let sys = assemble(p, &g).unwrap();
        let vin = random_vin(p.rows, p.v_read, 20 + k as u64);
        let res = sys.solve(&vin).unwrap();
        let sum_in: f64 = res.i_in.iter().sum();
        let sum_out: f64 = res.i_out.iter().sum();
        assert!(
            (sum_in - sum_out).abs() <= 1e-9 * sum_out.abs().max(1e-300),
            "case {k}: {sum_in} vs {sum_out}"
        );
    }
}

#[test]
fn monotone_loading_in_single_device_under_uniform_drive() {
    // raising any single device conductance never lowers the total output
    // current when every row is driven at the same nonnegative voltage.
    // (Under unequal drives this can genuinely fail: raising a device that
    // carries a reversed sneak current feeds more current back into its
    // low-voltage source.)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..4u64 {
        let p = CrossbarParams::with_dims(6, 6);
        let g = random_state(&p, 15 + seed);
        let vin = vec![p.v_read; 6];
        let base: f64 = assemble(&p, &g)
            .unwrap()
            .solve(&vin)
            .unwrap()
            .i_out
            .iter()
            .sum();
        for _ in 0..12 {
            let i = rng.gen_range(0..6);
            let j = rng.gen_range(0..6);
            let mut bumped = g.clone();
            *bumped.at_mut(i, j) = (bumped.at(i, j) * 1.5).min(p.g_max);
            let total: f64 = assemble(&p, &bumped)
                .unwrap()
                .solve(&vin)
                .unwrap()
                .i_out
                .iter()
                .sum();
            assert!(
                total >= base - 1e-15,
                "raising ({i},{j}) lowered total current: {base} -> {total}"
            );
        }
    }
}

#[test]
fn branch_currents_nonnegative_in_ideal_limit() {
    let p = CrossbarParams::ideal(5, 5);
    let g = random_state(&p, 18);
    let sys = assemble(&p, &g).unwrap();
    let vin = random_vin(5, p.v_read, 19);
    let res = sys.solve(&vin).unwrap();
    let bc = sys.branch_currents(&res).unwrap();
    assert!(bc.as_slice().iter().all(|&v| v >= 0.0));
}

#[test]
fn sneak_path_reverses_branch_2_2_at_default_parameters() {
    // regression fixture found by sweeping the default parameter
    // neighborhood: 3x2 array, all devices 20 kohm, inputs
    // [0.2, 0.01, 0.2] V. The device at row 2, column 2 (1-based) carries
    // current back toward its input.
    let p = CrossbarParams {
        rows: 3,
        cols: 2,
        ..Default::default() // r_row = r_col = 2.5, R_sense = R_driver = 1k
    };
    let g = ConductanceMatrix::uniform(3, 2, 1.0 / 20e3);
    let sys = assemble(&p, &g).unwrap();
    let res = sys.solve(&[0.2, 0.01, 0.2]).unwrap();
    let bc = sys.branch_currents(&res).unwrap();
    let i11 = bc.at(1, 1);
    assert!(i11 < 0.0, "expected reversed branch current, got {i11}");
    // frozen value from the fixture sweep
    let frozen = -2.91596271263628380e-7;
    assert!(
        (i11 - frozen).abs() <= 1e-9 * frozen.abs(),
        "fixture drifted: {i11} vs {frozen}"
    );
    // the full-drive rows feed forward; the 0.01 V row's other device is
    // reversed by the same mechanism
    for i in [0usize, 2] {
        for j in 0..2 {
            assert!(bc.at(i, j) > 0.0, "branch ({i},{j}) reversed");
        }
    }
    assert!(bc.at(1, 0) < 0.0);
}

#[test]
fn solver_rejects_bad_inputs() {
    let p = CrossbarParams::with_dims(4, 4);
    let g = random_state(&p, 21);
    let sys = assemble(&p, &g).unwrap();
    assert!(sys.solve(&[0.1; 3]).is_err());
    assert!(sys.solve(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());

    let wrong_shape = ConductanceMatrix::uniform(3, 4, 1e-5);
    assert!(assemble(&p, &wrong_shape).is_err());

    let mut bad = random_state(&p, 22);
    *bad.at_mut(0, 0) = f64::INFINITY;
    assert!(assemble(&p, &bad).is_err());
}

#[test]
fn factorization_is_cached_and_shared() {
    let p = CrossbarParams::with_dims(24, 24);
    let g = random_state(&p, 23);
    let sys = std::sync::Arc::new(assemble(&p, &g).unwrap());
    let mut handles = Vec::new();
    for t in 0..4u64 {
        let sys: std::sync::Arc<NodalSystem> = sys.clone();
        handles.push(std::thread::spawn(move || {
            let vin = random_vin(24, 0.2, 100 + t);
            sys.solve(&vin).unwrap().i_out
        }));
    }
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    // same solves re-run sequentially must agree bit-for-bit
    for (t, got) in results.iter().enumerate() {
        let vin = random_vin(24, 0.2, 100 + t as u64);
        let again = sys.solve(&vin).unwrap();
        assert_eq!(got, &again.i_out);
    }
}
