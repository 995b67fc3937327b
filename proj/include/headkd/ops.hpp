#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "headkd/autodiff.hpp"

namespace headkd {

// Clamp applied before every log or division by a probability.
inline constexpr double kProbEpsilon = 1e-12;

// a: [..., k], b: [k, n] -> [..., n]. Leading dims of `a` are flattened.
Var matmul(const Var& a, const Var& b);
// a: [..., k], b: [n, k] -> [..., n], i.e. a times b transposed.
Var matmul_bt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// x: [..., n], bias: [n]
Var add_bias(const Var& x, const Var& bias);
Var relu(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
// Sum of x * weights with constant weights of the same shape.
Var weighted_sum(const Var& x, const Tensor& weights);
Var reshape(const Var& x, Shape shape);

Var softmax(const Var& x, std::size_t axis);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// table: [vocab, d]; ids laid out as `leading` -> [leading..., d]
Var embedding(const Var& table, std::span<const int> ids, const Shape& leading);

// Concatenates along the last axis; all other dims must agree.
Var concat_last(const std::vector<Var>& parts);

// q: [B, Tq, H*dk], k: [B, Tk, H*dk] -> probabilities [B, H, Tq, Tk].
// key_valid: [B*Tk], non-zero marks a real key. Masked keys get exactly 0.
Var attention_probs(const Var& q, const Var& k, std::size_t heads, std::span<const std::uint8_t> key_valid,
                    bool causal);
// probs: [B, H, Tq, Tk], v: [B, Tk, H*dk] -> [B, Tq, H*dk]
Var attention_apply(const Var& probs, const Var& v);
// Multiplies the h-th d_k block of the last axis by gates[h].
Var scale_head_blocks(const Var& x, std::span<const double> gates);
// [B, H, Tq, Tk] -> [B, Tq, Tk]
Var mean_heads(const Var& probs);

// logits: [..., V]; one target per row. Rows whose target is pad_id are skipped.
Var cross_entropy(const Var& logits, std::span<const int> targets, int pad_id);
// Per-row KL(p || q) over the last axis -> shape of the leading dims.
Var kl_rows(const Var& p, const Var& q);
// Sum over all rows of KL(p || q).
Var kl_divergence(const Var& p, const Var& q);
Var mse(const Var& a, const Var& b);

}  // namespace headkd
