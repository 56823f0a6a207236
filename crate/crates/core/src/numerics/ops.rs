//! Eager tensor functions.
//!
//! Each function records onto a throwaway [`Tape`], so the eager and the
//! differentiable paths share one implementation.

use rand::Rng;

use super::{Tape, Tensor};
use crate::error::Result;

fn unary(x: &Tensor, f: impl FnOnce(&mut Tape, super::Var) -> Result<super::Var>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).clone())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let out = tape.matmul(a, b)?;
    Ok(tape.value(out).clone())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let out = tape.add(a, b)?;
    Ok(tape.value(out).clone())
}

pub fn scale(x: &Tensor, s: f64) -> Tensor {
    x.map(|v| v * s)
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    unary(x, |t, v| t.softmax_rows(v))
}

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(super::tape::gelu)
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let g = tape.constant(gain.clone());
    let b = tape.constant(bias.clone());
    let out = tape.layer_norm(v, g, b, eps)?;
    Ok(tape.value(out).clone())
}

pub fn cross_entropy(logits: &Tensor, gold: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(logits.clone());
    let out = tape.cross_entropy(v, gold)?;
    Ok(tape.value(out).data()[0])
}

pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<_> = parts.iter().map(|p| tape.constant(p.clone())).collect();
    let out = tape.concat_cols(&vars)?;
    Ok(tape.value(out).clone())
}

pub fn mean_rows(x: &Tensor, rows: &[usize]) -> Result<Tensor> {
    unary(x, |t, v| t.mean_rows(v, rows))
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, rng: &mut R) -> Result<Tensor> {
    unary(x, |t, v| t.dropout(v, rate, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn oracle_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, p) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for j in 0..p {
                let mut s = 0.0;
                for t in 0..k {
                    s += a.get(i, t) * b.get(t, j);
                }
                out[i * p + j] = s;
            }
        }
        Tensor::matrix(m, p, out).unwrap()
    }

    fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> Tensor {
        Tensor::matrix(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&a, &Tensor::identity(2)).unwrap(), a);
        let mut rng = seeded(3);
        let r = random_matrix(&mut rng, 3, 5);
        assert_eq!(matmul(&r, &Tensor::identity(5)).unwrap(), r);
    }

    #[test]
    fn matmul_value_and_gradients_match_loop_oracle() {
        let mut rng = seeded(11);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let upstream = random_matrix(&mut rng, 3, 2);

        let mut tape = Tape::new();
        let (va, vb) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
        let c = tape.matmul(va, vb).unwrap();
        assert!(tape.value(c).max_abs_diff(&oracle_matmul(&a, &b)) <= 1e-12);

        // loss = sum(C ∘ U) so dC = U
        let u = tape.constant(upstream.clone());
        let prod = tape.mul(c, u).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap();

        let da = oracle_matmul(&upstream, &b.transpose().unwrap());
        let db = oracle_matmul(&a.transpose().unwrap(), &upstream);
        assert!(tape.grad(va).max_abs_diff(&da) <= 1e-12);
        assert!(tape.grad(vb).max_abs_diff(&db) <= 1e-12);
    }

    #[test]
    fn matmul_dimension_mismatch_names_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] vs [2, 3]"), "{err}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&Tensor::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let s = softmax_rows(&Tensor::from_rows(&[[1000.0, 1000.0, 1000.0]]).unwrap()).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let s = softmax_rows(&Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        let z: f64 = [-2.0f64, -1.0, 0.0].iter().map(|v| v.exp()).sum();
        for (i, v) in s.data().iter().enumerate() {
            let expected = ((i as f64 + 1.0) - 3.0).exp() / z;
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Tensor::vector(vec![1.0; 3]);
        let zeros = Tensor::vector(vec![0.0; 3]);
        let c = layer_norm(&Tensor::from_rows(&[[5.0, 5.0, 5.0]]).unwrap(), &ones, &zeros, 1e-12)
            .unwrap();
        assert_eq!(c.data(), &[0.0, 0.0, 0.0]);

        let eps = 1e-12;
        let y = layer_norm(&Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap(), &ones, &zeros, eps)
            .unwrap();
        // mean 2, biased variance 2/3
        let inv = 1.0 / (2.0f64 / 3.0 + eps).sqrt();
        let expected = [-inv, 0.0, inv];
        for (v, e) in y.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(y.sum().abs() < 1e-12);

        let bias = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let y = layer_norm(
            &Tensor::from_rows(&[[1.0, 7.0, 3.0], [0.2, 0.1, -4.0]]).unwrap(),
            &zeros,
            &bias,
            eps,
        )
        .unwrap();
        assert_eq!(y.row(0), bias.data());
        assert_eq!(y.row(1), bias.data());
    }

    #[test]
    fn cross_entropy_examples() {
        let l = cross_entropy(&Tensor::from_rows(&[[0.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

        let l = cross_entropy(&Tensor::from_rows(&[[800.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert_eq!(l, 0.0);

        let logits = Tensor::from_rows(&[[0.3, -1.2, 2.0], [1.5, 0.1, -0.4]]).unwrap();
        let gold = [2, 0];
        let direct: f64 = gold
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let row = logits.row(i);
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                -(row[g].exp() / z).ln()
            })
            .sum::<f64>()
            / 2.0;
        let l = cross_entropy(&logits, &gold).unwrap();
        assert!((l - direct).abs() < 1e-12);

        assert!(matches!(
            cross_entropy(&logits, &[3, 0]),
            Err(crate::Error::Index { .. })
        ));
    }

    #[test]
    fn concat_and_mean_rows() {
        let a = Tensor::from_rows(&[[1.0], [2.0]]).unwrap();
        let b = Tensor::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let c = concat_cols(&[a, b]).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let m = mean_rows(&c, &[0, 1]).unwrap();
        assert_eq!(m.data(), &[1.5, 4.0, 5.0]);
        assert!(mean_rows(&c, &[]).is_err());
    }

    #[test]
    fn dropout_identity_at_zero_rate_and_seed_reproducible() {
        let mut rng = seeded(5);
        let x = random_matrix(&mut rng, 4, 6);
        assert_eq!(dropout(&x, 0.0, &mut seeded(1)).unwrap(), x);

        let a = dropout(&x, 0.3, &mut seeded(99)).unwrap();
        let b = dropout(&x, 0.3, &mut seeded(99)).unwrap();
        assert_eq!(a, b);
        let c = dropout(&x, 0.3, &mut seeded(100)).unwrap();
        assert_ne!(a, c);
        for (o, i) in a.data().iter().zip(x.data()) {
            assert!(*o == 0.0 || (o - i / 0.7).abs() < 1e-15);
        }
        assert!(dropout(&x, 1.0, &mut seeded(1)).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 5), 1..6)) {
            let t = Tensor::from_rows(&rows).unwrap();
            let s = softmax_rows(&t).unwrap();
            for i in 0..s.rows() {
                let total: f64 = s.row(i).iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn forward_ops_stay_finite(data in prop::collection::vec(-1e3f64..1e3, 12)) {
            let x = Tensor::matrix(3, 4, data).unwrap();
            let ones = Tensor::vector(vec![1.0; 4]);
            let zeros = Tensor::vector(vec![0.0; 4]);
            prop_assert!(softmax_rows(&x).unwrap().is_finite());
            prop_assert!(layer_norm(&x, &ones, &zeros, 1e-12).unwrap().is_finite());
            prop_assert!(gelu(&x).is_finite());
            prop_assert!(matmul(&x, &x.transpose().unwrap()).unwrap().is_finite());
            prop_assert!(cross_entropy(&x, &[0, 1, 3]).unwrap().is_finite());
        }
    }
}
