//! Masked multi-head self-attention block with pre-norm residual layout:
//! `x += MHA(LN1(x))` then `x += FF(LN2(x))`.
//!
//! Masked score entries are never computed at all — softmax normalization and
//! context accumulation iterate exclusively over the allowed entries, which
//! is mathematically identical to setting masked logits to negative infinity
//! but additionally makes causal outputs bit-invariant to future inputs.

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use super::layers::{tanh_backward, tanh_forward, LayerNorm, LayerNormCache, Linear};
use super::ModelError;

/// Which steps each step may attend to. Row `i` lists the allowed source
/// steps in increasing order; the diagonal is always allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    allowed: Vec<Vec<usize>>,
}

impl AttentionMask {
    /// Every step attends to every step.
    pub fn full(len: usize) -> Self {
        AttentionMask { allowed: (0..len).map(|_| (0..len).collect()).collect() }
    }

    /// Step `i` attends to steps `0..=i` only.
    pub fn causal(len: usize) -> Self {
        AttentionMask { allowed: (0..len).map(|i| (0..=i).collect()).collect() }
    }

    /// Build from a boolean matrix; `allowed[i][j]` means step `i` may read
    /// step `j`. Every diagonal entry must be allowed.
    pub fn from_bool(matrix: &[Vec<bool>]) -> Result<Self, ModelError> {
        let len = matrix.len();
        let mut allowed = Vec::with_capacity(len);
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != len {
                return Err(ModelError::ShapeMismatch {
                    what: "attention mask row".to_string(),
                    expected: len,
                    found: row.len(),
                });
            }
            if !row[i] {
                return Err(ModelError::MaskedDiagonal(i));
            }
            allowed.push((0..len).filter(|&j| row[j]).collect());
        }
        Ok(AttentionMask { allowed })
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn allowed(&self, i: usize) -> &[usize] {
        &self.allowed[i]
    }
}

/// Parameters of one attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub ln1: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
}

/// Per-head forward intermediates.
#[derive(Debug, Clone)]
struct HeadCache {
    /// Softmax weights per row, aligned with the mask's allowed lists.
    weights: Vec<Vec<f64>>,
}

/// Forward intermediates for one block.
#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1_cache: LayerNormCache,
    ln1_out: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    heads: Vec<HeadCache>,
    concat: Array2<f64>,
    ln2_cache: LayerNormCache,
    ln2_out: Array2<f64>,
    ff_act: Array2<f64>,
}

impl AttentionBlock {
    pub fn xavier(
        dim: usize,
        heads: usize,
        ff_expansion: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(ModelError::HeadsMismatch { dim, heads });
        }
        Ok(AttentionBlock {
            ln1: LayerNorm::identity(dim),
            wq: Linear::xavier(dim, dim, rng),
            wk: Linear::xavier(dim, dim, rng),
            wv: Linear::xavier(dim, dim, rng),
            wo: Linear::xavier(dim, dim, rng),
            ln2: LayerNorm::identity(dim),
            ff1: Linear::xavier(dim * ff_expansion, dim, rng),
            ff2: Linear::xavier(dim, dim * ff_expansion, rng),
            heads,
        })
    }

    pub fn zeros_like(&self) -> Self {
        AttentionBlock {
            ln1: LayerNorm::zeros(self.ln1.gamma.len()),
            wq: Linear::zeros(self.wq.out_dim(), self.wq.in_dim()),
            wk: Linear::zeros(self.wk.out_dim(), self.wk.in_dim()),
            wv: Linear::zeros(self.wv.out_dim(), self.wv.in_dim()),
            wo: Linear::zeros(self.wo.out_dim(), self.wo.in_dim()),
            ln2: LayerNorm::zeros(self.ln2.gamma.len()),
            ff1: Linear::zeros(self.ff1.out_dim(), self.ff1.in_dim()),
            ff2: Linear::zeros(self.ff2.out_dim(), self.ff2.in_dim()),
            heads: self.heads,
        }
    }

    /// Zero the residual-branch output layers so the block starts as an
    /// identity map; used when warm-starting the temporal phase.
    pub fn zero_residual_outputs(&mut self) {
        self.wo.w.fill(0.0);
        self.wo.b.fill(0.0);
        self.ff2.w.fill(0.0);
        self.ff2.b.fill(0.0);
    }

    pub fn forward(
        &self,
        x: &Array2<f64>,
        mask: &AttentionMask,
    ) -> Result<Array2<f64>, ModelError> {
        Ok(self.forward_cached(x, mask)?.0)
    }

    pub fn forward_cached(
        &self,
        x: &Array2<f64>,
        mask: &AttentionMask,
    ) -> Result<(Array2<f64>, BlockCache), ModelError> {
        let n = x.nrows();
        let dim = x.ncols();
        if mask.len() != n {
            return Err(ModelError::ShapeMismatch {
                what: "attention mask length".to_string(),
                expected: n,
                found: mask.len(),
            });
        }
        if dim != self.wq.in_dim() {
            return Err(ModelError::ShapeMismatch {
                what: "attention input dimension".to_string(),
                expected: self.wq.in_dim(),
                found: dim,
            });
        }
        let dk = dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let (ln1_out, ln1_cache) = self.ln1.forward(x);
        let q = self.wq.forward(&ln1_out);
        let k = self.wk.forward(&ln1_out);
        let v = self.wv.forward(&ln1_out);

        let mut concat = Array2::zeros((n, dim));
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut weights = Vec::with_capacity(n);
            for i in 0..n {
                let allowed = mask.allowed(i);
                let mut scores = Vec::with_capacity(allowed.len());
                for &j in allowed {
                    let dot: f64 = qh.row(i).iter().zip(kh.row(j)).map(|(a, b)| a * b).sum();
                    scores.push(dot * scale);
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in scores.iter_mut() {
                    *s /= sum;
                }
                for (&j, &w) in allowed.iter().zip(&scores) {
                    for d in 0..dk {
                        concat[[i, h * dk + d]] += w * vh[[j, d]];
                    }
                }
                weights.push(scores);
            }
            heads.push(HeadCache { weights });
        }

        let attn_out = self.wo.forward(&concat);
        let x_mid = x + &attn_out;

        let (ln2_out, ln2_cache) = self.ln2.forward(&x_mid);
        let ff_act = tanh_forward(&self.ff1.forward(&ln2_out));
        let ff_out = self.ff2.forward(&ff_act);
        let y = &x_mid + &ff_out;

        Ok((
            y,
            BlockCache { ln1_cache, ln1_out, q, k, v, heads, concat, ln2_cache, ln2_out, ff_act },
        ))
    }

    /// Backward pass; accumulates parameter gradients into `grads` and
    /// returns the gradient w.r.t. the block input.
    pub fn backward(
        &self,
        cache: &BlockCache,
        mask: &AttentionMask,
        dy: &Array2<f64>,
        grads: &mut AttentionBlock,
    ) -> Array2<f64> {
        let n = dy.nrows();
        let dim = dy.ncols();
        let dk = dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();

        // y = x_mid + ff2(tanh(ff1(ln2(x_mid))))
        let d_ff_act = {
            let d_ff_out = dy;
            let d_act = self.ff2.backward(&cache.ff_act, d_ff_out, &mut grads.ff2);
            tanh_backward(&cache.ff_act, &d_act)
        };
        let d_ln2_out = self.ff1.backward(&cache.ln2_out, &d_ff_act, &mut grads.ff1);
        let d_x_mid = dy + &self.ln2.backward(&cache.ln2_cache, &d_ln2_out, &mut grads.ln2);

        // x_mid = x + wo(concat)
        let d_concat = self.wo.backward(&cache.concat, &d_x_mid, &mut grads.wo);

        let mut dq = Array2::zeros((n, dim));
        let mut dkk = Array2::zeros((n, dim));
        let mut dv = Array2::zeros((n, dim));
        for h in 0..self.heads {
            let col0 = h * dk;
            let weights = &cache.heads[h].weights;
            for i in 0..n {
                let allowed = mask.allowed(i);
                let w_row = &weights[i];
                // d(context)/d(weights) and /d(values).
                let mut dw = vec![0.0; allowed.len()];
                for (a, &j) in allowed.iter().enumerate() {
                    let mut acc = 0.0;
                    for d in 0..dk {
                        let g = d_concat[[i, col0 + d]];
                        acc += g * cache.v[[j, col0 + d]];
                        dv[[j, col0 + d]] += w_row[a] * g;
                    }
                    dw[a] = acc;
                }
                // Softmax backward over the allowed entries.
                let inner: f64 = w_row.iter().zip(&dw).map(|(w, d)| w * d).sum();
                for (a, &j) in allowed.iter().enumerate() {
                    let ds = w_row[a] * (dw[a] - inner) * scale;
                    for d in 0..dk {
                        dq[[i, col0 + d]] += ds * cache.k[[j, col0 + d]];
                        dkk[[j, col0 + d]] += ds * cache.q[[i, col0 + d]];
                    }
                }
            }
        }

        let mut d_ln1_out = self.wq.backward(&cache.ln1_out, &dq, &mut grads.wq);
        d_ln1_out = d_ln1_out + self.wk.backward(&cache.ln1_out, &dkk, &mut grads.wk);
        d_ln1_out = d_ln1_out + self.wv.backward(&cache.ln1_out, &dv, &mut grads.wv);

        &d_x_mid + &self.ln1.backward(&cache.ln1_cache, &d_ln1_out, &mut grads.ln1)
    }

    /// Attention weights of head `h` at row `i` from a cached forward pass,
    /// aligned with the mask's allowed list. Exposed for tests and
    /// diagnostics.
    pub fn attention_weights(cache: &BlockCache, head: usize, row: usize) -> &[f64] {
        &cache.heads[head].weights[row]
    }
}

/// Convenience: zero-mean inputs for `dim`-sized blocks in tests.
#[cfg(test)]
fn random_input(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    use rand::distributions::{Distribution, Uniform};
    let dist = Uniform::new(-1.0, 1.0);
    Array2::from_shape_fn((n, dim), |_| dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn single_step_attends_fully_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = AttentionBlock::xavier(8, 2, 4, &mut rng).unwrap();
        let x = random_input(1, 8, &mut rng);
        let (_, cache) = block.forward_cached(&x, &AttentionMask::full(1)).unwrap();
        for h in 0..2 {
            assert_eq!(AttentionBlock::attention_weights(&cache, h, 0), &[1.0]);
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = AttentionBlock::xavier(8, 2, 4, &mut rng).unwrap();
        // Zero the key projection: all keys collapse to the bias.
        block.wk.w.fill(0.0);
        let x = random_input(5, 8, &mut rng);

        let (_, cache) = block.forward_cached(&x, &AttentionMask::full(5)).unwrap();
        for w in AttentionBlock::attention_weights(&cache, 0, 2) {
            assert_abs_diff_eq!(*w, 0.2, epsilon = 1e-12);
        }

        let (_, cache) = block.forward_cached(&x, &AttentionMask::causal(5)).unwrap();
        for i in 0..5 {
            let row = AttentionBlock::attention_weights(&cache, 1, i);
            assert_eq!(row.len(), i + 1);
            for w in row {
                assert_abs_diff_eq!(*w, 1.0 / (i + 1) as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let block = AttentionBlock::xavier(8, 4, 4, &mut rng).unwrap();
        let x = random_input(6, 8, &mut rng);
        let (_, cache) = block.forward_cached(&x, &AttentionMask::causal(6)).unwrap();
        for h in 0..4 {
            for i in 0..6 {
                let sum: f64 = AttentionBlock::attention_weights(&cache, h, i).iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn causal_output_bit_invariant_to_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = AttentionBlock::xavier(8, 2, 4, &mut rng).unwrap();
        let mask = AttentionMask::causal(6);
        let x = random_input(6, 8, &mut rng);
        let y = block.forward(&x, &mask).unwrap();

        let mut perturbed = x.clone();
        for j in 0..8 {
            perturbed[[4, j]] += 3.7;
            perturbed[[5, j]] -= 11.1;
        }
        let y2 = block.forward(&perturbed, &mask).unwrap();
        for i in 0..4 {
            for j in 0..8 {
                // Exact equality: the masked entries are never touched.
                assert_eq!(y[[i, j]], y2[[i, j]], "row {i} col {j} changed");
            }
        }
        assert_ne!(y.row(4), y2.row(4));
    }

    #[test]
    fn full_mask_lets_information_flow_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = AttentionBlock::xavier(8, 2, 4, &mut rng).unwrap();
        let mask = AttentionMask::full(4);
        let x = random_input(4, 8, &mut rng);
        let y = block.forward(&x, &mask).unwrap();
        let mut perturbed = x.clone();
        perturbed[[3, 0]] += 1.0;
        let y2 = block.forward(&perturbed, &mask).unwrap();
        assert_ne!(y.row(0), y2.row(0));
    }

    #[test]
    fn zeroed_residual_outputs_make_identity_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut block = AttentionBlock::xavier(8, 2, 4, &mut rng).unwrap();
        block.zero_residual_outputs();
        let x = random_input(5, 8, &mut rng);
        let y = block.forward(&x, &AttentionMask::full(5)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn mask_constructors_and_validation() {
        let causal = AttentionMask::causal(3);
        assert_eq!(causal.allowed(0), &[0]);
        assert_eq!(causal.allowed(2), &[0, 1, 2]);
        let full = AttentionMask::full(2);
        assert_eq!(full.allowed(1), &[0, 1]);

        let ok = AttentionMask::from_bool(&[vec![true, true], vec![false, true]]).unwrap();
        assert_eq!(ok.allowed(1), &[1]);
        assert!(matches!(
            AttentionMask::from_bool(&[vec![false, true], vec![true, true]]),
            Err(ModelError::MaskedDiagonal(0))
        ));
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let block = AttentionBlock::xavier(6, 2, 2, &mut rng).unwrap();
        let mask = AttentionMask::causal(3);
        let x = random_input(3, 6, &mut rng);
        // Weighted-sum objective over the block output.
        let weight = |i: usize, j: usize| ((2 * i + j) as f64).sin() + 0.3;
        let objective = |b: &AttentionBlock, x: &Array2<f64>| {
            let y = b.forward(x, &mask).unwrap();
            y.indexed_iter().map(|((i, j), v)| v * weight(i, j)).sum::<f64>()
        };

        let (_, cache) = block.forward_cached(&x, &mask).unwrap();
        let dy = Array2::from_shape_fn((3, 6), |(i, j)| weight(i, j));
        let mut grads = block.zeros_like();
        let dx = block.backward(&cache, &mask, &dy, &mut grads);

        let base = objective(&block, &x);
        assert!(base.is_finite());

        // Input gradient.
        for i in 0..3 {
            for j in 0..6 {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let expect = (objective(&block, &xp) - objective(&block, &xm)) / (2.0 * h);
                assert_abs_diff_eq!(dx[[i, j]], expect, epsilon = 1e-5);
            }
        }

        // Spot-check each parameter family.
        let check = |get: &dyn Fn(&AttentionBlock) -> f64,
                     set: &dyn Fn(&mut AttentionBlock, f64),
                     grad: f64| {
            let at = get(&block);
            let h = 1e-6 * at.abs().max(1.0);
            let mut bp = block.clone();
            set(&mut bp, at + h);
            let mut bm = block.clone();
            set(&mut bm, at - h);
            let expect = (objective(&bp, &x) - objective(&bm, &x)) / (2.0 * h);
            assert_abs_diff_eq!(grad, expect, epsilon = 1e-5);
        };
        check(&|b| b.wq.w[[1, 2]], &|b, v| b.wq.w[[1, 2]] = v, grads.wq.w[[1, 2]]);
        check(&|b| b.wk.w[[0, 3]], &|b, v| b.wk.w[[0, 3]] = v, grads.wk.w[[0, 3]]);
        check(&|b| b.wv.w[[4, 1]], &|b, v| b.wv.w[[4, 1]] = v, grads.wv.w[[4, 1]]);
        check(&|b| b.wo.w[[2, 2]], &|b, v| b.wo.w[[2, 2]] = v, grads.wo.w[[2, 2]]);
        check(&|b| b.wo.b[0], &|b, v| b.wo.b[0] = v, grads.wo.b[0]);
        check(&|b| b.ln1.gamma[2], &|b, v| b.ln1.gamma[2] = v, grads.ln1.gamma[2]);
        check(&|b| b.ln1.beta[4], &|b, v| b.ln1.beta[4] = v, grads.ln1.beta[4]);
        check(&|b| b.ln2.gamma[0], &|b, v| b.ln2.gamma[0] = v, grads.ln2.gamma[0]);
        check(&|b| b.ff1.w[[5, 2]], &|b, v| b.ff1.w[[5, 2]] = v, grads.ff1.w[[5, 2]]);
        check(&|b| b.ff2.w[[1, 7]], &|b, v| b.ff2.w[[1, 7]] = v, grads.ff2.w[[1, 7]]);
        check(&|b| b.ff2.b[3], &|b, v| b.ff2.b[3] = v, grads.ff2.b[3]);
    }

    #[test]
    fn dimension_mismatches_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            AttentionBlock::xavier(6, 4, 2, &mut rng),
            Err(ModelError::HeadsMismatch { dim: 6, heads: 4 })
        ));
        let block = AttentionBlock::xavier(8, 2, 2, &mut rng).unwrap();
        let x = random_input(3, 8, &mut rng);
        assert!(block.forward(&x, &AttentionMask::full(4)).is_err());
        let bad = random_input(3, 6, &mut rng);
        assert!(block.forward(&bad, &AttentionMask::full(3)).is_err());
    }
}
