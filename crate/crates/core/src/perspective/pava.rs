//! Pool-adjacent-violators for the isotonic weighted-Huber problem
//!
//! ```text
//! min_ν  Σ_j ½(ν_j − t_j)² + w_j H_M(ν_j)   s.t.  ν_1 ≥ ν_2 ≥ … ≥ ν_m
//! ```
//!
//! where `t` is sorted in nonincreasing order. A block `b` of pooled positions
//! carries `(P_b, S_b, N_b)`, the sums of weights, targets and the count, and
//! its fitted value is `prox_{(P_b/N_b) H_M}(S_b / N_b)`.

use super::prox_huber;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub weight_sum: f64,
    pub target_sum: f64,
    pub count: usize,
    pub value: f64,
}

impl Block {
    fn single(m: f64, weight: f64, target: f64) -> Block {
        Block {
            weight_sum: weight,
            target_sum: target,
            count: 1,
            value: prox_huber(m, weight, target),
        }
    }

    fn merge(self, other: Block, m: f64) -> Block {
        let weight_sum = self.weight_sum + other.weight_sum;
        let target_sum = self.target_sum + other.target_sum;
        let count = self.count + other.count;
        let n = count as f64;
        Block {
            weight_sum,
            target_sum,
            count,
            value: prox_huber(m, weight_sum / n, target_sum / n),
        }
    }
}

/// Runs the up-and-down block scheme over `targets` (nonincreasing) with
/// per-position `weights`, returning the final blocks in order.
pub(crate) fn pava_blocks(m: f64, targets: &[f64], weights: &[f64]) -> Vec<Block> {
    debug_assert_eq!(targets.len(), weights.len());
    let len = targets.len();
    let mut blocks: Vec<Block> = Vec::with_capacity(len.min(64));
    let mut j = 0;
    while j < len {
        let mut cur = Block::single(m, weights[j], targets[j]);
        if let Some(&last) = blocks.last() {
            if cur.value > last.value {
                blocks.pop();
                cur = last.merge(cur, m);
                // up: absorb following singletons that still violate
                while j + 1 < len {
                    let next = Block::single(m, weights[j + 1], targets[j + 1]);
                    if cur.value > next.value {
                        break;
                    }
                    cur = cur.merge(next, m);
                    j += 1;
                }
                // down: pool with earlier blocks until monotone again
                while let Some(&prev) = blocks.last() {
                    if prev.value >= cur.value {
                        break;
                    }
                    blocks.pop();
                    cur = prev.merge(cur, m);
                }
            }
        }
        blocks.push(cur);
        j += 1;
    }
    blocks
}

/// Expands blocks into per-position fitted values.
pub(crate) fn expand(blocks: &[Block], out: &mut Vec<f64>) {
    out.clear();
    for b in blocks {
        out.extend(std::iter::repeat_n(b.value, b.count));
    }
}
