//! Property tests: reduction/circuit equivalence and conservation over
//! random shapes, wire regimes and programmed states.

use proptest::prelude::*;

use xbar_core::circuit::assemble;
use xbar_core::matrix::ConductanceMatrix;
use xbar_core::nonideal::build_nonideal;
use xbar_core::params::CrossbarParams;

fn params_strategy() -> impl Strategy<Value = CrossbarParams> {
    (
        1usize..10,
        1usize..10,
        prop_oneof![Just(0.0), 0.1f64..20.0],
        prop_oneof![Just(0.0), 0.1f64..20.0],
        prop_oneof![Just(0.0), 10.0f64..5e3],
    )
        .prop_map(|(rows, cols, r_row, r_col, r_sense)| CrossbarParams {
            rows,
            cols,
            r_row,
            r_col,
            r_sense,
            r_driver: 0.0,
            ..Default::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduction_matches_circuit(p in params_strategy(), seed in 0u64..1000, vseed in 0u64..1000) {
        let g = ConductanceMatrix::random_levels(&p, seed);
        let xbar = build_nonideal(&g, &p).unwrap();
        let sys = assemble(&p, &g).unwrap();
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(vseed);
        let vin: Vec<f64> = (0..p.rows).map(|_| rng.gen_range(-p.v_read..p.v_read)).collect();
        let fast = xbar.evaluate(&vin).unwrap();
        let slow = sys.solve(&vin).unwrap();
        let scale = slow.i_out.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
        for (f, s) in fast.iter().zip(&slow.i_out) {
            prop_assert!((f - s).abs() <= 1e-9 * scale,
                "deviation {} at scale {scale}", (f - s).abs());
        }
    }

    #[test]
    fn charge_conservation(p in params_strategy(), seed in 0u64..1000) {
        let g = ConductanceMatrix::random_levels(&p, seed);
        let sys = assemble(&p, &g).unwrap();
        let vin: Vec<f64> = (0..p.rows).map(|i| p.v_read * ((i % 3) as f64) / 2.0).collect();
        let res = sys.solve(&vin).unwrap();
        let sum_in: f64 = res.i_in.iter().sum();
        let sum_out: f64 = res.i_out.iter().sum();
        prop_assert!((sum_in - sum_out).abs() <= 1e-9 * sum_out.abs().max(1e-300),
            "conservation broke: {sum_in} vs {sum_out}");
    }

    #[test]
    fn laplacian_symmetric(p in params_strategy(), seed in 0u64..1000) {
        let g = ConductanceMatrix::random_levels(&p, seed);
        let sys = assemble(&p, &g).unwrap();
        let d = sys.dense_laplacian();
        for i in 0..sys.n_unknowns() {
            for j in 0..i {
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
    }
}
