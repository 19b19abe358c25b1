use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn set_with(values: &[(&str, Tensor<f64>)]) -> (ParamSet<f64>, Vec<ParamId>) {
    let mut ps = ParamSet::new();
    let ids = values
        .iter()
        .map(|(n, t)| ps.insert(*n, t.clone()).unwrap())
        .collect();
    (ps, ids)
}

#[test]
fn softmax_uniform_logits() {
    let ps = ParamSet::<f64>::new();
    let mut g = Graph::new(&ps);
    let z = g.constant(Tensor::vector(vec![1.0; 4]));
    let s = g.forward(Primitive::SoftmaxLastDim, &[z]).unwrap();
    assert_eq!(g.value(s).data(), &[0.25; 4]);
}

#[test]
fn sigmoid_and_tanh_at_zero() {
    let ps = ParamSet::<f64>::new();
    let mut g = Graph::new(&ps);
    let z = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(z);
    let t = g.tanh(z);
    assert_eq!(g.item(s), 0.5);
    assert_eq!(g.item(t), 0.0);
}

#[test]
fn identity_matmul() {
    let ps = ParamSet::<f64>::new();
    let mut g = Graph::new(&ps);
    let eye = g.constant(
        Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
    );
    let v = g.constant(Tensor::vector(vec![2.0, -1.0, 5.0]));
    let y = g.forward(Primitive::MatMul, &[eye, v]).unwrap();
    assert_eq!(g.value(y).data(), &[2.0, -1.0, 5.0]);
}

#[test]
fn shape_mismatch_names_kind_and_shapes() {
    let ps = ParamSet::<f64>::new();
    let mut g = Graph::new(&ps);
    let a = g.zeros(&[2, 3]);
    let b = g.zeros(&[2]);
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    let err = g.mul(b, a).unwrap_err();
    assert!(err.to_string().contains("elementwise_mul"));
}

#[test]
fn lookup_out_of_range() {
    let ps = ParamSet::<f64>::new();
    let mut g = Graph::new(&ps);
    let t = g.zeros(&[4, 2]);
    match g.row_lookup(t, 4) {
        Err(Error::IndexOutOfRange { index: 4, size: 4 }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn grad_of_sum_of_squares() {
    let (ps, ids) = set_with(&[("x", Tensor::vector(vec![1.0, 2.0, 3.0]))]);
    let mut g = Graph::new(&ps);
    let x = g.param(ids[0]);
    let xx = g.mul(x, x).unwrap();
    let loss = g.sum(xx);
    g.backward(loss).unwrap();
    assert_eq!(g.param_grad(ids[0]).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn grad_of_sigmoid_at_zero() {
    let (ps, ids) = set_with(&[("x", Tensor::scalar(0.0))]);
    let mut g = Graph::new(&ps);
    let x = g.param(ids[0]);
    let loss = g.sigmoid(x);
    g.backward(loss).unwrap();
    assert_eq!(g.param_grad(ids[0]).data(), &[0.25]);
}

#[test]
fn grad_of_softmax_nll_is_softmax_minus_onehot() {
    let z = vec![0.3, -1.2, 2.0, 0.1];
    let (ps, ids) = set_with(&[("z", Tensor::vector(z.clone()))]);
    let mut g = Graph::new(&ps);
    let zv = g.param(ids[0]);
    let p = g.softmax(zv);
    let pk = g.pick(p, 2).unwrap();
    let lp = g.log(pk).unwrap();
    let loss = g.neg(lp);
    g.backward(loss).unwrap();
    let probs = g.value(p).data().to_vec();
    let grad = g.param_grad(ids[0]);
    for (i, (&gr, &pr)) in grad.data().iter().zip(&probs).enumerate() {
        let expected = pr - if i == 2 { 1.0 } else { 0.0 };
        assert!((gr - expected).abs() < 1e-12, "{i}: {gr} vs {expected}");
    }
}

#[test]
fn backward_requires_scalar_and_single_use() {
    let (ps, ids) = set_with(&[("x", Tensor::vector(vec![1.0, 2.0]))]);
    let mut g = Graph::new(&ps);
    let x = g.param(ids[0]);
    let sq = g.square(x);
    assert!(g.backward(sq).is_err());
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    assert!(matches!(g.backward(loss), Err(Error::BackwardTwice)));
    g.reset_grads();
    g.backward(loss).unwrap();
    assert_eq!(g.param_grad(ids[0]).data(), &[2.0, 4.0]);
}

#[test]
fn non_participating_params_have_zero_grad() {
    let (ps, ids) = set_with(&[
        ("x", Tensor::vector(vec![1.0, 2.0])),
        ("y", Tensor::vector(vec![3.0, 4.0])),
    ]);
    let mut g = Graph::new(&ps);
    let x = g.param(ids[0]);
    let loss = g.sum(x);
    g.backward(loss).unwrap();
    assert_eq!(g.param_grad(ids[1]).data(), &[0.0, 0.0]);
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::<f64>::new();
    let w = ps.insert_glorot("w", &[5, 4], &mut rng).unwrap();
    let v = ps.insert_glorot("v", &[4], &mut rng).unwrap();
    let run = || {
        let mut g = Graph::new(&ps);
        let (wv, vv) = (g.param(w), g.param(v));
        let h = g.matmul(wv, vv).unwrap();
        let t = g.tanh(h);
        let s = g.log_softmax(t);
        let l = g.sum(s);
        g.item(l)
    };
    assert_eq!(run().to_bits(), run().to_bits());
}

fn linear_nll(g: &mut Graph<'_, f64>, w: ParamId, b: ParamId, x: &[f64], label: usize) -> Var {
    let (wv, bv) = (g.param(w), g.param(b));
    let xv = g.constant(Tensor::vector(x.to_vec()));
    let h = g.matmul(wv, xv).unwrap();
    let logits = g.add(h, bv).unwrap();
    let lp = g.log_softmax(logits);
    let pick = g.pick(lp, label).unwrap();
    g.neg(pick)
}

#[test]
fn grad_check_linear_layer_nll() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ps = ParamSet::<f64>::new();
    let w = ps.insert_glorot("w", &[3, 5], &mut rng).unwrap();
    let b = ps.insert_glorot("b", &[3], &mut rng).unwrap();
    let x = [0.5, -1.0, 0.25, 2.0, -0.3];
    let report = grad_check(
        &mut ps,
        &[w, b],
        |g| Ok(linear_nll(g, w, b, &x, 1)),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{}", report.max_relative_error);

    // Negative control: a 10% corrupted gradient must be caught.
    let corrupted: Vec<f64> = report.analytic.iter().map(|a| a * 1.1).collect();
    let err = max_relative_error(&corrupted, &report.numeric);
    assert!(err > 1e-2, "{err}");
}

#[test]
fn grad_check_detects_nondeterminism() {
    use std::cell::Cell;
    let mut ps = ParamSet::<f64>::new();
    let x = ps.insert("x", Tensor::scalar(1.0)).unwrap();
    let calls = Cell::new(0.0);
    let res = grad_check(
        &mut ps,
        &[x],
        |g| {
            calls.set(calls.get() + 1.0);
            let c = g.constant(Tensor::scalar(calls.get()));
            let xv = g.param(x);
            g.mul(xv, c)
        },
        1e-5,
        1e-4,
    );
    assert!(matches!(res, Err(Error::NonDeterministic { .. })));
}

#[test]
fn gradients_accumulate_additively() {
    let (ps, ids) = set_with(&[("e", Tensor::matrix(3, 2, vec![1.0; 6]).unwrap())]);
    let mut g = Graph::new(&ps);
    let e = g.param(ids[0]);
    let r0 = g.row_lookup(e, 1).unwrap();
    let r1 = g.row_lookup(e, 1).unwrap();
    let r2 = g.row_lookup(e, 2).unwrap();
    let all = g.concat(&[r0, r1, r2]).unwrap();
    let loss = g.sum(all);
    g.backward(loss).unwrap();
    assert_eq!(g.param_grad(ids[0]).data(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    let mut acc = Gradients::zeros_like(&ps);
    g.accumulate_param_grads(&mut acc, [ids[0]]);
    g.accumulate_param_grads(&mut acc, [ids[0]]);
    assert_eq!(acc.get(ids[0]).data(), &[0.0, 0.0, 4.0, 4.0, 2.0, 2.0]);
}

#[derive(Clone, Copy, Debug)]
enum Case {
    Add,
    AddRow,
    Sub,
    Mul,
    MatMulMM,
    MatMulMV,
    MatMulVM,
    Concat,
    Stack,
    Lookup,
    Pick,
    Sigmoid,
    Tanh,
    Softmax,
    LogSoftmax,
    Log,
    Square,
    Sum,
    Scale,
    AddScalar,
}

const CASES: [Case; 20] = [
    Case::Add,
    Case::AddRow,
    Case::Sub,
    Case::Mul,
    Case::MatMulMM,
    Case::MatMulMV,
    Case::MatMulVM,
    Case::Concat,
    Case::Stack,
    Case::Lookup,
    Case::Pick,
    Case::Sigmoid,
    Case::Tanh,
    Case::Softmax,
    Case::LogSoftmax,
    Case::Log,
    Case::Square,
    Case::Sum,
    Case::Scale,
    Case::AddScalar,
];

/// Applies one primitive to parameters `a` ([m,k]), `b` ([m,k]), `v` ([k]),
/// `c` ([k,n]), then projects onto a fixed random direction so the whole Jacobian is exercised.
fn primitive_loss(
    g: &mut Graph<'_, f64>,
    case: Case,
    ids: &[ParamId],
    dir_seed: u64,
) -> crate::Result<Var> {
    let (a, b, v, c) = (g.param(ids[0]), g.param(ids[1]), g.param(ids[2]), g.param(ids[3]));
    let out = match case {
        Case::Add => g.add(a, b)?,
        Case::AddRow => g.add(a, v)?,
        Case::Sub => g.sub(a, b)?,
        Case::Mul => g.mul(a, b)?,
        Case::MatMulMM => g.matmul(a, c)?,
        Case::MatMulMV => g.matmul(a, v)?,
        Case::MatMulVM => g.matmul(v, c)?,
        Case::Concat => {
            let r = g.row_lookup(a, 0)?;
            g.concat(&[v, r])?
        }
        Case::Stack => {
            let r = g.row_lookup(b, 0)?;
            g.stack(&[v, r, v])?
        }
        Case::Lookup => g.row_lookup(a, g.shape(a)[0] - 1)?,
        Case::Pick => g.pick(v, 0)?,
        Case::Sigmoid => g.sigmoid(a),
        Case::Tanh => g.tanh(a),
        Case::Softmax => g.softmax(a),
        Case::LogSoftmax => g.log_softmax(a),
        Case::Log => {
            let sq = g.square(v);
            let pos = g.add_scalar(sq, 0.5);
            g.log(pos)?
        }
        Case::Square => g.square(b),
        Case::Sum => g.sum(a),
        Case::Scale => g.scale(a, -1.7),
        Case::AddScalar => g.add_scalar(a, 0.3),
    };
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(dir_seed);
    let dir: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
    let d = g.constant(Tensor::new(shape, dir)?);
    let prod = g.mul(out, d)?;
    Ok(g.sum(prod))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_primitive_matches_central_differences(
        m in 1usize..=8, k in 1usize..=8, n in 1usize..=8, seed in 0u64..1000, case_idx in 0usize..CASES.len(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::<f64>::new();
        let mut draw = |shape: &[usize]| {
            let len = shape.iter().product();
            let data = (0..len).map(|_| rand::Rng::gen_range(&mut rng, -1.5..1.5)).collect();
            Tensor::new(shape.to_vec(), data).unwrap()
        };
        let ids = vec![
            ps.insert("a", draw(&[m, k])).unwrap(),
            ps.insert("b", draw(&[m, k])).unwrap(),
            ps.insert("v", draw(&[k])).unwrap(),
            ps.insert("c", draw(&[k, n])).unwrap(),
        ];
        let case = CASES[case_idx];
        let report = grad_check(&mut ps, &ids, |g| primitive_loss(g, case, &ids, seed + 1), 1e-5, 1e-4).unwrap();
        prop_assert!(report.passed(), "{:?}: {}", case, report.max_relative_error);
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..9, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rand::Rng::gen_range(&mut rng, -30.0..30.0)).collect();
        let ps = ParamSet::<f64>::new();
        let mut g = Graph::new(&ps);
        let z = g.constant(Tensor::matrix(rows, cols, data).unwrap());
        let s = g.softmax(z);
        for r in 0..rows {
            let row = g.value(s).row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
