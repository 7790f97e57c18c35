mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use stcx_core::tensor::{grad_check, Tape, Tensor, Var};
use stcx_core::Result;

const EPS: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    let a = random_tensor(&mut r, &[5, 7]);
    let b = random_tensor(&mut r, &[7, 3]);
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), &[5, 3]);
    for i in 0..5 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..7 {
                acc += a.get(&[i, k]) * b.get(&[k, j]);
            }
            assert!((c.get(&[i, j]) - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_matches_direct_formula() {
    let x = random_tensor(&mut rng(2), &[8]).map(|v| 4.0 * v);
    let s = x.softmax(0).unwrap();
    let total: f64 = x.data().iter().map(|v| v.exp()).sum();
    for (p, v) in s.data().iter().zip(x.data()) {
        assert!((p - v.exp() / total).abs() < 1e-12);
    }
}

#[test]
fn reductions_match_loops_on_every_axis() {
    let x = random_tensor(&mut rng(3), &[4, 3, 2]);
    let dims = [4, 3, 2];
    for axis in 0..3 {
        let mean = x.mean_axis(axis).unwrap();
        let max = x.max_axis(axis).unwrap();
        let mut out_shape = dims.to_vec();
        out_shape.remove(axis);
        assert_eq!(mean.shape(), out_shape.as_slice());
        for a in 0..out_shape[0] {
            for b in 0..out_shape[1] {
                let at = |k: usize| {
                    let mut idx = vec![a, b];
                    idx.insert(axis, k);
                    x.get(&idx)
                };
                let values: Vec<f64> = (0..dims[axis]).map(at).collect();
                let m = values.iter().sum::<f64>() / values.len() as f64;
                let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!((mean.get(&[a, b]) - m).abs() < 1e-12);
                assert_eq!(max.get(&[a, b]), top);
            }
        }
    }
}

#[test]
fn reshape_and_permute_round_trip_exactly() {
    let x = random_tensor(&mut rng(4), &[2, 3, 4]);
    let back = x.reshape([6, 4]).unwrap().reshape([2, 3, 4]).unwrap();
    assert_eq!(back, x);
    let p = x.permute(&[2, 0, 1]).unwrap();
    assert_eq!(p.shape(), &[4, 2, 3]);
    assert_eq!(p.permute(&[1, 2, 0]).unwrap(), x);
}

/// Scalar readout with fixed, non-uniform weights so no gradient cancels.
fn readout<'t>(tape: &'t Tape, y: Var<'t>) -> Result<Var<'t>> {
    let shape = y.shape();
    let n = shape.iter().product::<usize>();
    let w = Tensor::new(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).cos()).collect())?;
    Ok(y.mul(tape.constant(w))?.sum_all())
}

fn check<F>(x: &Tensor, op: F) -> f64
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check(|tape, v| readout(tape, op(tape, v)?), x, EPS).unwrap().max_rel_error
}

fn tensor_from(seed: u64, shape: &[usize]) -> Tensor {
    random_tensor(&mut rng(seed), shape)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn elementwise_gradients(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let x = tensor_from(seed, &[n, m]);
        let other = tensor_from(seed ^ 1, &[n, m]);
        let bias = tensor_from(seed ^ 2, &[m]);
        let errors = [
            check(&x, |t, v| v.add(t.constant(other.clone()))),
            check(&x, |t, v| t.constant(other.clone()).sub(v)),
            check(&x, |t, v| v.mul(t.constant(other.clone()))),
            check(&x, |_, v| v.mul(v)),
            check(&x, |t, v| v.add_broadcast(t.constant(bias.clone()))),
            check(&bias, |t, v| t.constant(x.clone()).add_broadcast(v)),
            check(&x, |_, v| Ok(v.scale(-2.5).add_scalar(0.3).neg())),
            check(&x, |_, v| Ok(v.exp())),
            check(&x, |_, v| Ok(v.relu())),
            check(&x, |_, v| Ok(v.gelu())),
            check(&x, |_, v| Ok(v.sigmoid())),
        ];
        for (i, e) in errors.iter().enumerate() {
            prop_assert!(*e < TOLERANCE, "op {} error {}", i, e);
        }
    }

    #[test]
    fn matrix_gradients(seed in any::<u64>(), n in 1usize..4, k in 1usize..4, m in 1usize..4) {
        let a = tensor_from(seed, &[n, k]);
        let b = tensor_from(seed ^ 1, &[k, m]);
        let bt = tensor_from(seed ^ 2, &[m, k]);
        let errors = [
            check(&a, |t, v| v.matmul(t.constant(b.clone()))),
            check(&b, |t, v| t.constant(a.clone()).matmul(v)),
            check(&a, |t, v| v.matmul_transposed(t.constant(bt.clone()))),
            check(&bt, |t, v| t.constant(a.clone()).matmul_transposed(v)),
            check(&a, |_, v| v.transpose()),
        ];
        for (i, e) in errors.iter().enumerate() {
            prop_assert!(*e < TOLERANCE, "op {} error {}", i, e);
        }
    }

    #[test]
    fn structural_gradients(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 2usize..4) {
        let x = tensor_from(seed, &[a, b, c]);
        let y = tensor_from(seed ^ 1, &[a, b, c]);
        let errors = [
            check(&x, |_, v| v.permute(&[2, 0, 1])),
            check(&x, |_, v| v.reshape([a * b, c])),
            check(&x, |t, v| Var::concat(&[t.constant(y.clone()), v, v], 2)),
            check(&x, |_, v| v.slice(2, 1, c - 1)),
            check(&x, |_, v| v.gather(2, &[c - 1, 0, c - 1])),
            check(&x, |_, v| Ok(v.sum_all())),
            check(&x, |_, v| Ok(v.mean_all())),
        ];
        for (i, e) in errors.iter().enumerate() {
            prop_assert!(*e < TOLERANCE, "op {} error {}", i, e);
        }
    }

    #[test]
    fn reduction_gradients(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let x = tensor_from(seed, &[a, b, c]);
        for axis in 0..3 {
            let errors = [
                check(&x, |_, v| v.softmax(axis)),
                check(&x, |_, v| v.mean(axis)),
                check(&x, |_, v| v.max(axis)),
            ];
            for (i, e) in errors.iter().enumerate() {
                prop_assert!(*e < TOLERANCE, "op {} axis {} error {}", i, axis, e);
            }
        }
    }

    #[test]
    fn bce_gradient(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let z = tensor_from(seed, &[n, m]).map(|v| 3.0 * v);
        let labels = tensor_from(seed ^ 1, &[n, m]).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let e = grad_check(|_, v| v.bce_with_logits(&labels), &z, EPS).unwrap().max_rel_error;
        prop_assert!(e < TOLERANCE);
    }

    #[test]
    fn softmax_slices_sum_to_one(seed in any::<u64>(), a in 1usize..5, b in 1usize..5, scale in 0.1f64..30.0) {
        let x = tensor_from(seed, &[a, b]).map(|v| v * scale);
        let s = x.softmax(1).unwrap();
        for row in s.data().chunks(b) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }
}
