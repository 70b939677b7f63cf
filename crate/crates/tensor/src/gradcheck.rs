//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward pass, so it stays
//! independent of every backward rule it checks.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for the relative error, so that gradients which are
/// exactly zero on both sides do not divide by zero.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare tape gradients of the scalar built by `f` against central
/// differences with step `h`, for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = vals
            .iter()
            .map(|t| tape.leaf(t))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).iter().sum())
    };

    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(&t.clone().with_grad()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
    };
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for i in 0..inputs[k].numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            report.max_rel_err = report.max_rel_err.max(rel_err(analytic[i], numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}

type CaseFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// One differentiable op wrapped into a scalar function of its inputs.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub f: CaseFn,
}

fn rand_tensor<R: rand::Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    // Values kept away from zero so that relu/abs kinks sit farther than the
    // finite-difference step from every evaluation point.
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape, data).expect("valid shape")
}

/// Weighted sum `Σ w ⊙ y` with fixed pseudo-random weights, so that ops
/// whose plain sum is constant (softmax) still get a non-trivial gradient.
fn weighted_sum(tape: &mut Tape, y: Var, salt: u64) -> Result<Var> {
    let n = tape.value(y).len();
    let shape = tape.shape(y).to_vec();
    let w = (0..n)
        .map(|i| ((i as u64 * 2654435761 + salt * 97) % 1000) as f64 / 500.0 - 1.0 + 0.37)
        .collect();
    let w = tape.constant(&shape, w)?;
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

/// Every differentiable op of the tape, each at a random evaluation point
/// drawn from `rng`.
pub fn op_cases<R: rand::Rng>(rng: &mut R) -> Vec<OpCase> {
    let mut cases = Vec::new();
    let mut case = |name: &'static str, inputs: Vec<Tensor>, f: CaseFn| {
        cases.push(OpCase { name, inputs, f })
    };

    case("matmul", vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &[4, 2])], Box::new(|t, v| {
        let y = t.matmul(v[0], v[1])?;
        t.sum(y)
    }));
    case("matmul_weighted", vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[3, 5])], Box::new(|t, v| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, 1)
    }));
    for (name, shape_b) in [("add_same", [3, 4]), ("add_row", [1, 4]), ("add_col", [3, 1]), ("add_scalar_bcast", [1, 1])] {
        case(name, vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &shape_b)], Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y, 2)
        }));
    }
    for (name, shape_b) in [("sub_same", [3, 4]), ("sub_row", [1, 4]), ("sub_col", [3, 1])] {
        case(name, vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &shape_b)], Box::new(|t, v| {
            let y = t.sub(v[0], v[1])?;
            weighted_sum(t, y, 3)
        }));
    }
    for (name, shape_b) in [("mul_same", [3, 4]), ("mul_row", [1, 4]), ("mul_col", [3, 1]), ("mul_scalar_bcast", [1, 1])] {
        case(name, vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &shape_b)], Box::new(|t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y, 4)
        }));
    }
    case("mul_self", vec![rand_tensor(rng, &[2, 3])], Box::new(|t, v| {
        let y = t.mul(v[0], v[0])?;
        weighted_sum(t, y, 5)
    }));
    case("scale", vec![rand_tensor(rng, &[2, 3])], Box::new(|t, v| {
        let y = t.scale(v[0], -1.7)?;
        weighted_sum(t, y, 6)
    }));
    case("one_minus", vec![rand_tensor(rng, &[2, 3])], Box::new(|t, v| {
        let y = t.one_minus(v[0])?;
        weighted_sum(t, y, 7)
    }));
    case("tanh", vec![rand_tensor(rng, &[3, 3])], Box::new(|t, v| {
        let y = t.tanh(v[0])?;
        weighted_sum(t, y, 8)
    }));
    case("sigmoid", vec![rand_tensor(rng, &[3, 3])], Box::new(|t, v| {
        let y = t.sigmoid(v[0])?;
        weighted_sum(t, y, 9)
    }));
    case("relu", vec![rand_tensor(rng, &[3, 3])], Box::new(|t, v| {
        let y = t.relu(v[0])?;
        weighted_sum(t, y, 10)
    }));
    case("exp", vec![rand_tensor(rng, &[3, 3])], Box::new(|t, v| {
        let y = t.exp(v[0])?;
        weighted_sum(t, y, 11)
    }));
    case("abs", vec![rand_tensor(rng, &[3, 3])], Box::new(|t, v| {
        let y = t.abs(v[0])?;
        weighted_sum(t, y, 12)
    }));
    case("softmax", vec![rand_tensor(rng, &[1, 5])], Box::new(|t, v| {
        let y = t.softmax(v[0])?;
        weighted_sum(t, y, 13)
    }));
    case("softmax_rows", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let y = t.softmax(v[0])?;
        weighted_sum(t, y, 14)
    }));
    case("log_softmax", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let y = t.log_softmax(v[0])?;
        weighted_sum(t, y, 15)
    }));
    case("concat_cols", vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[2, 2])], Box::new(|t, v| {
        let y = t.concat_cols(&[v[0], v[1], v[0]])?;
        weighted_sum(t, y, 16)
    }));
    case("concat_rows", vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[1, 3])], Box::new(|t, v| {
        let y = t.concat_rows(&[v[0], v[1]])?;
        weighted_sum(t, y, 17)
    }));
    case("slice_rows", vec![rand_tensor(rng, &[4, 3])], Box::new(|t, v| {
        let y = t.slice_rows(v[0], 1, 2)?;
        weighted_sum(t, y, 18)
    }));
    case("slice_cols", vec![rand_tensor(rng, &[3, 5])], Box::new(|t, v| {
        let y = t.slice_cols(v[0], 2, 2)?;
        weighted_sum(t, y, 19)
    }));
    case("mean", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let sq = t.mul(v[0], v[0])?;
        t.mean(sq)
    }));
    case("sum_cols", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let y = t.sum_cols(v[0])?;
        weighted_sum(t, y, 20)
    }));
    case("segment_sum", vec![rand_tensor(rng, &[5, 3])], Box::new(|t, v| {
        let y = t.segment_sum(v[0], &[0, 0, 1, 2, 1], &[0.5, 0.25, 1.0, -0.3, 2.0], 3)?;
        weighted_sum(t, y, 21)
    }));
    case("segment_max", vec![rand_tensor(rng, &[6, 3])], Box::new(|t, v| {
        let y = t.segment_max(v[0], &[(0, 4), (4, 2)])?;
        weighted_sum(t, y, 22)
    }));
    case("embedding", vec![rand_tensor(rng, &[4, 3])], Box::new(|t, v| {
        let y = t.embedding(v[0], &[3, 0, 3, 1])?;
        weighted_sum(t, y, 23)
    }));
    case("pick", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let y = t.pick(v[0], &[2, 0, 3])?;
        weighted_sum(t, y, 24)
    }));
    case("cross_entropy", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        t.cross_entropy(v[0], &[1, 3, 0])
    }));
    case("cross_entropy_rows", vec![rand_tensor(rng, &[3, 4])], Box::new(|t, v| {
        let y = t.cross_entropy_rows(v[0], &[2, 2, 1])?;
        weighted_sum(t, y, 25)
    }));
    case("unfold", vec![rand_tensor(rng, &[2 * 4, 2])], Box::new(|t, v| {
        let y = t.unfold(v[0], 2, 4, 3)?;
        weighted_sum(t, y, 26)
    }));
    case("composite_gru_like", vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[3, 3]), rand_tensor(rng, &[1, 3])], Box::new(|t, v| {
        let a = t.matmul(v[0], v[1])?;
        let a = t.add(a, v[2])?;
        let z = t.sigmoid(a)?;
        let n = t.tanh(a)?;
        let keep = t.one_minus(z)?;
        let h = t.mul(keep, n)?;
        let zh = t.mul(z, v[0])?;
        let h = t.add(h, zh)?;
        weighted_sum(t, h, 27)
    }));
    cases
}
