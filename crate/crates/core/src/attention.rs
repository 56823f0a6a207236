//! Multi-head scaled dot-product attention over all tokens (self-attention)
//! or over a fixed per-token neighbor set (neighbor attention).
//!
//! Both variants share one parameter layout and one code path: neighbor
//! attention is self-attention whose softmax for query `i` only ranges over
//! the keys allowed by row `i` of a [`NeighborMask`]. With a complete mask
//! the two are the same function.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::rng::truncated_normal;
use crate::numerics::{Tape, Tensor, Var};

/// Query/key/value/output projections of one attention layer.
///
/// Each projection is `h×h`; head `j` uses columns `[j·h′, (j+1)·h′)` of the
/// query, key and value projections, with `h′ = h / heads`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T = Tensor> {
    pub heads: usize,
    pub query: T,
    pub key: T,
    pub value: T,
    pub output: T,
}

impl AttentionParams<Tensor> {
    pub fn init<R: Rng + ?Sized>(hidden: usize, heads: usize, std: f64, rng: &mut R) -> Result<Self> {
        head_width(hidden, heads)?;
        let mut mat = || {
            let data = (0..hidden * hidden).map(|_| truncated_normal(rng, std)).collect();
            Tensor::matrix(hidden, hidden, data)
        };
        Ok(Self {
            heads,
            query: mat()?,
            key: mat()?,
            value: mat()?,
            output: mat()?,
        })
    }

    /// Model width `h` after checking shapes, divisibility and finiteness.
    pub fn validate(&self) -> Result<usize> {
        let h = self.query.rows();
        head_width(h, self.heads)?;
        for m in [&self.query, &self.key, &self.value, &self.output] {
            if m.shape() != [h, h] {
                return Err(Error::shape("attention params", &[h, h], m.shape()));
            }
            if !m.is_finite() {
                return Err(Error::Config("attention parameters must be finite".into()));
            }
        }
        Ok(h)
    }
}

impl<T> AttentionParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> AttentionParams<U> {
        AttentionParams {
            heads: self.heads,
            query: f(&self.query),
            key: f(&self.key),
            value: f(&self.value),
            output: f(&self.output),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.query"), &self.query);
        f(format!("{prefix}.key"), &self.key);
        f(format!("{prefix}.value"), &self.value);
        f(format!("{prefix}.output"), &self.output);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        f(&mut self.query);
        f(&mut self.key);
        f(&mut self.value);
        f(&mut self.output);
    }
}

/// Per-head width `h / heads`.
pub fn head_width(hidden: usize, heads: usize) -> Result<usize> {
    if heads == 0 || !hidden.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "hidden size {hidden} is not divisible by head count {heads}"
        )));
    }
    Ok(hidden / heads)
}

/// Which keys each query token may attend to, as a `T×T` boolean matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborMask {
    len: usize,
    allowed: Arc<[bool]>,
}

impl NeighborMask {
    /// Every token may attend to every token.
    pub fn complete(len: usize) -> Self {
        Self {
            len,
            allowed: vec![true; len * len].into(),
        }
    }

    pub fn from_matrix(len: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != len * len {
            return Err(Error::shape("neighbor mask", &[len, len], &[allowed.len()]));
        }
        Ok(Self {
            len,
            allowed: allowed.into(),
        })
    }

    /// Row `i` allows exactly the indices in `sets[i]`.
    pub fn from_sets<S: AsRef<[usize]>>(sets: &[S]) -> Result<Self> {
        let len = sets.len();
        let mut allowed = vec![false; len * len];
        for (i, set) in sets.iter().enumerate() {
            for &j in set.as_ref() {
                if j >= len {
                    return Err(Error::Index {
                        what: "neighbor index",
                        index: j,
                        len,
                    });
                }
                allowed[i * len + j] = true;
            }
        }
        Self::from_matrix(len, allowed)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.len + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.allowed[query * self.len..(query + 1) * self.len]
    }

    pub fn neighbors(&self, query: usize) -> Vec<usize> {
        (0..self.len).filter(|&k| self.allows(query, k)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    /// Every row must allow at least one key.
    pub fn validate(&self) -> Result<()> {
        match (0..self.len).find(|&i| !self.row(i).iter().any(|&a| a)) {
            Some(i) => Err(Error::Graph(format!("token {i} has an empty neighbor set"))),
            None => Ok(()),
        }
    }

    pub(crate) fn shared(&self) -> &Arc<[bool]> {
        &self.allowed
    }
}

/// Column slices `[j·h′, (j+1)·h′)` of `x`, one per head.
pub fn head_split(x: &Tensor, heads: usize) -> Result<Vec<Tensor>> {
    let width = head_width(x.cols(), heads)?;
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    (0..heads)
        .map(|j| {
            let s = tape.slice_cols(v, j * width, width)?;
            Ok(tape.value(s).clone())
        })
        .collect()
}

struct Attended {
    output: Var,
    weights: Vec<Var>,
}

fn attend_inner(
    tape: &mut Tape,
    x: Var,
    params: &AttentionParams<Var>,
    mask: Option<&NeighborMask>,
) -> Result<Attended> {
    let hidden = tape.value(params.query).rows();
    let width = head_width(hidden, params.heads)?;
    let tokens = tape.value(x).rows();
    if let Some(mask) = mask {
        if mask.len() != tokens {
            return Err(Error::Graph(format!(
                "neighbor mask covers {} tokens, input has {tokens}",
                mask.len()
            )));
        }
        mask.validate()?;
    }
    let q = tape.matmul(x, params.query)?;
    let k = tape.matmul(x, params.key)?;
    let v = tape.matmul(x, params.value)?;
    let scale = 1.0 / (width as f64).sqrt();

    let mut heads = Vec::with_capacity(params.heads);
    let mut weights = Vec::with_capacity(params.heads);
    for j in 0..params.heads {
        let qh = tape.slice_cols(q, j * width, width)?;
        let kh = tape.slice_cols(k, j * width, width)?;
        let vh = tape.slice_cols(v, j * width, width)?;
        let raw = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(raw, scale);
        let probs = match mask {
            Some(mask) => tape.masked_softmax_rows(scores, mask.shared())?,
            None => tape.softmax_rows(scores)?,
        };
        heads.push(tape.matmul(probs, vh)?);
        weights.push(probs);
    }
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)?
    };
    let output = tape.matmul(joined, params.output)?;
    Ok(Attended { output, weights })
}

/// Records multi-head attention on `tape`. `mask = None` is self-attention.
pub fn attend(
    tape: &mut Tape,
    x: Var,
    params: &AttentionParams<Var>,
    mask: Option<&NeighborMask>,
) -> Result<Var> {
    Ok(attend_inner(tape, x, params, mask)?.output)
}

fn eager(x: &Tensor, params: &AttentionParams, mask: Option<&NeighborMask>) -> Result<Tensor> {
    params.validate()?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = params.map(&mut |t| tape.constant(t.clone()));
    let out = attend(&mut tape, xv, &pv, mask)?;
    Ok(tape.value(out).clone())
}

/// Multi-head self-attention: every token attends to every token.
pub fn self_attention(x: &Tensor, params: &AttentionParams) -> Result<Tensor> {
    eager(x, params, None)
}

/// Multi-head attention where token `i` attends only to `mask.neighbors(i)`.
pub fn neighbor_attention(x: &Tensor, params: &AttentionParams, mask: &NeighborMask) -> Result<Tensor> {
    eager(x, params, Some(mask))
}

/// Per-head attention probabilities (`T×T` each).
pub fn attention_weights(
    x: &Tensor,
    params: &AttentionParams,
    mask: Option<&NeighborMask>,
) -> Result<Vec<Tensor>> {
    params.validate()?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = params.map(&mut |t| tape.constant(t.clone()));
    let attended = attend_inner(&mut tape, xv, &pv, mask)?;
    Ok(attended.weights.iter().map(|&w| tape.value(w).clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::matmul;
    use crate::numerics::rng::seeded;
    use crate::numerics::{grad_check_many, ops};
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
            .unwrap()
    }

    fn random_params(rng: &mut impl Rng, hidden: usize, heads: usize) -> AttentionParams {
        AttentionParams {
            heads,
            query: random(rng, hidden, hidden, 0.6),
            key: random(rng, hidden, hidden, 0.6),
            value: random(rng, hidden, hidden, 0.6),
            output: random(rng, hidden, hidden, 0.6),
        }
    }

    fn random_mask(rng: &mut impl Rng, len: usize, density: f64) -> NeighborMask {
        let sets: Vec<Vec<usize>> = (0..len)
            .map(|i| {
                (0..len)
                    .filter(|&j| j == i || rng.random_bool(density))
                    .collect()
            })
            .collect();
        NeighborMask::from_sets(&sets).unwrap()
    }

    /// Explicit per-element evaluation of single-head attention.
    fn scalar_attention(x: &Tensor, p: &AttentionParams) -> Tensor {
        let (t, h) = (x.rows(), x.cols());
        let proj = |w: &Tensor| -> Vec<Vec<f64>> {
            (0..t)
                .map(|i| (0..h).map(|c| (0..h).map(|r| x.get(i, r) * w.get(r, c)).sum()).collect())
                .collect()
        };
        let (q, k, v) = (proj(&p.query), proj(&p.key), proj(&p.value));
        let mut z = vec![vec![0.0; h]; t];
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..h).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (h as f64).sqrt())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..t {
                for c in 0..h {
                    z[i][c] += exps[j] / total * v[j][c];
                }
            }
        }
        let mut out = vec![0.0; t * h];
        for i in 0..t {
            for c in 0..h {
                out[i * h + c] = (0..h).map(|r| z[i][r] * p.output.get(r, c)).sum();
            }
        }
        Tensor::matrix(t, h, out).unwrap()
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = seeded(1);
        let p = random_params(&mut rng, 8, 2);
        let x = random(&mut rng, 1, 8, 1.0);
        let out = self_attention(&x, &p).unwrap();
        let expected = matmul(&matmul(&x, &p.value).unwrap(), &p.output).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn zero_value_projection_gives_zero_output() {
        let mut rng = seeded(2);
        let mut p = random_params(&mut rng, 8, 4);
        p.value = Tensor::zeros(vec![8, 8]);
        let x = random(&mut rng, 5, 8, 1.0);
        assert_eq!(self_attention(&x, &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn two_tokens_match_scalar_oracle() {
        let x = Tensor::from_rows(&[[0.5, -1.0, 0.25], [1.5, 0.2, -0.7]]).unwrap();
        let p = AttentionParams {
            heads: 1,
            query: Tensor::from_rows(&[[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.3, 0.0, 1.0]]).unwrap(),
            key: Tensor::from_rows(&[[0.2, 0.1, 0.0], [0.0, -0.5, 1.0], [1.0, 0.0, 0.0]]).unwrap(),
            value: Tensor::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [0.5, 0.0, 1.0]]).unwrap(),
            output: Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap(),
        };
        let out = self_attention(&x, &p).unwrap();
        assert!(out.max_abs_diff(&scalar_attention(&x, &p)) <= 1e-12);
    }

    #[test]
    fn singleton_mask_row_matches_isolated_token() {
        let mut rng = seeded(3);
        let p = random_params(&mut rng, 8, 2);
        let x = random(&mut rng, 4, 8, 1.0);
        let mut sets: Vec<Vec<usize>> = (0..4).map(|_| (0..4).collect()).collect();
        sets[2] = vec![2];
        let out = neighbor_attention(&x, &p, &NeighborMask::from_sets(&sets).unwrap()).unwrap();
        let alone = self_attention(&Tensor::from_rows(&[x.row(2)]).unwrap(), &p).unwrap();
        for (a, b) in out.row(2).iter().zip(alone.row(0)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_mask_row_is_a_graph_error() {
        let mut rng = seeded(4);
        let p = random_params(&mut rng, 4, 1);
        let x = random(&mut rng, 2, 4, 1.0);
        let mask = NeighborMask::from_sets(&[vec![0], vec![]]).unwrap();
        assert!(matches!(neighbor_attention(&x, &p, &mask), Err(Error::Graph(_))));
    }

    #[test]
    fn indivisible_heads_is_a_config_error() {
        let mut rng = seeded(5);
        let mut p = random_params(&mut rng, 6, 2);
        p.heads = 4;
        let x = random(&mut rng, 2, 6, 1.0);
        assert!(matches!(self_attention(&x, &p), Err(Error::Config(_))));
        assert!(matches!(head_split(&x, 4), Err(Error::Config(_))));
    }

    #[test]
    fn head_split_examples() {
        let mut rng = seeded(6);
        let x = random(&mut rng, 3, 8, 1.0);
        assert_eq!(head_split(&x, 1).unwrap(), vec![x.clone()]);
        let parts = head_split(&x, 2).unwrap();
        assert_eq!(parts.len(), 2);
        for (j, part) in parts.iter().enumerate() {
            assert_eq!(part.shape(), &[3, 4]);
            for i in 0..3 {
                assert_eq!(part.row(i), &x.row(i)[j * 4..(j + 1) * 4]);
            }
        }
        assert_eq!(ops::concat_cols(&parts).unwrap(), x);
    }

    #[test]
    fn attention_gradients_pass_grad_check() {
        let mut rng = seeded(7);
        let p = random_params(&mut rng, 4, 2);
        let x = random(&mut rng, 3, 4, 1.0);
        let probe = random(&mut rng, 3, 4, 1.0);
        let mask = NeighborMask::from_sets(&[vec![0, 2], vec![1], vec![0, 1, 2]]).unwrap();
        for m in [None, Some(&mask)] {
            let report = grad_check_many(
                |tape, v| {
                    let params = AttentionParams {
                        heads: 2,
                        query: v[1],
                        key: v[2],
                        value: v[3],
                        output: v[4],
                    };
                    let out = attend(tape, v[0], &params, m)?;
                    let pr = tape.constant(probe.clone());
                    let prod = tape.mul(out, pr)?;
                    Ok(tape.sum(prod))
                },
                &[x.clone(), p.query.clone(), p.key.clone(), p.value.clone(), p.output.clone()],
                1e-5,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn complete_mask_equals_self_attention(seed in any::<u64>(), t in 1usize..10, heads_pow in 0u32..3) {
            let heads = 1 << heads_pow;
            let mut rng = seeded(seed);
            let p = random_params(&mut rng, 8, heads);
            let x = random(&mut rng, t, 8, 2.0);
            let a = neighbor_attention(&x, &p, &NeighborMask::complete(t)).unwrap();
            let z = self_attention(&x, &p).unwrap();
            prop_assert!(a.max_abs_diff(&z) <= 1e-10);
        }

        #[test]
        fn masked_keys_cannot_influence_query(seed in any::<u64>(), t in 2usize..9) {
            let mut rng = seeded(seed);
            let p = random_params(&mut rng, 8, 2);
            let x = random(&mut rng, t, 8, 1.0);
            let mask = random_mask(&mut rng, t, 0.4);
            let base = neighbor_attention(&x, &p, &mask).unwrap();
            let i = rng.random_range(0..t);
            let mut perturbed = x.clone();
            for j in (0..t).filter(|&j| !mask.allows(i, j)) {
                for c in 0..8 {
                    perturbed.data_mut()[j * 8 + c] += rng.random_range(-3.0..3.0);
                }
            }
            let out = neighbor_attention(&perturbed, &p, &mask).unwrap();
            prop_assert_eq!(base.row(i), out.row(i));
        }

        #[test]
        fn weights_are_distributions_over_allowed_keys(seed in any::<u64>(), t in 1usize..9) {
            let mut rng = seeded(seed);
            let p = random_params(&mut rng, 8, 2);
            let x = random(&mut rng, t, 8, 1.0);
            let mask = random_mask(&mut rng, t, 0.5);
            for w in attention_weights(&x, &p, Some(&mask)).unwrap() {
                for i in 0..t {
                    let row = w.row(i);
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    for (j, &pij) in row.iter().enumerate() {
                        prop_assert!(pij >= 0.0);
                        if !mask.allows(i, j) {
                            prop_assert_eq!(pij, 0.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn permutation_consistency(seed in any::<u64>(), t in 2usize..8) {
            let mut rng = seeded(seed);
            let p = random_params(&mut rng, 8, 2);
            let x = random(&mut rng, t, 8, 1.0);
            let mask = random_mask(&mut rng, t, 0.5);
            let mut perm: Vec<usize> = (0..t).collect();
            for i in (1..t).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            // new position k holds old token perm[k]
            let px = Tensor::from_rows(&perm.iter().map(|&o| x.row(o).to_vec()).collect::<Vec<_>>()).unwrap();
            let mut inverse = vec![0; t];
            for (k, &o) in perm.iter().enumerate() {
                inverse[o] = k;
            }
            let sets: Vec<Vec<usize>> = perm
                .iter()
                .map(|&o| mask.neighbors(o).into_iter().map(|j| inverse[j]).collect())
                .collect();
            let pmask = NeighborMask::from_sets(&sets).unwrap();
            let base = neighbor_attention(&x, &p, &mask).unwrap();
            let out = neighbor_attention(&px, &p, &pmask).unwrap();
            for (k, &o) in perm.iter().enumerate() {
                for (a, b) in out.row(k).iter().zip(base.row(o)) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
