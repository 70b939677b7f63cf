use gef_tensor::gradcheck::{check_gradients, op_cases};
use gef_tensor::{Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for case in op_cases(&mut rng) {
            let report = check_gradients(&case.inputs, STEP, &case.f).unwrap();
            assert!(
                report.max_rel_err < TOL,
                "{} (seed {seed}): rel err {:.3e}",
                case.name,
                report.max_rel_err
            );
            assert!(report.checked > 0);
        }
    }
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in op_cases(&mut rng) {
        let run = || {
            let mut tape = Tape::new();
            let vars: Vec<_> = case
                .inputs
                .iter()
                .map(|t| tape.leaf(&t.clone().with_grad()).unwrap())
                .collect();
            let out = (case.f)(&mut tape, &vars).unwrap();
            let g = tape.backward(out).unwrap();
            vars.iter()
                .flat_map(|v| g.get(*v).unwrap_or(&[]).iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run(), "{}", case.name);
    }
}

proptest! {
    #[test]
    fn softmax_rows_normalise(xs in proptest::collection::vec(-30.0f64..30.0, 1..24), cols in 1usize..6) {
        let rows = xs.len() / cols;
        prop_assume!(rows > 0);
        let data = xs[..rows * cols].to_vec();
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(&[rows, cols], data).unwrap()).unwrap();
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).chunks(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(xs in proptest::collection::vec(-50.0f64..50.0, 6), t in 0usize..3) {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(&[2, 3], xs).unwrap()).unwrap();
        let l = tape.cross_entropy(x, &[t, 2 - t.min(2)]).unwrap();
        prop_assert!(tape.scalar(l) >= 0.0);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_n(n in 1usize..20, c in -5.0f64..5.0) {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(&[1, n], vec![c; n]).unwrap()).unwrap();
        let l = tape.cross_entropy(x, &[n - 1]).unwrap();
        prop_assert!((tape.scalar(l) - (n as f64).ln()).abs() < 1e-12);
    }
}
