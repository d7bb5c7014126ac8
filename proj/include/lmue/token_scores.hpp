#pragma once

#include <span>
#include <string_view>

namespace lmue {

// How the positive logits of one step are combined into a magnitude.
enum class MagnitudeFormula {
    relu_l2,   // sqrt(sum_k max(l_k, 0)^2), the default
    relu_sum,  // sum_k max(l_k, 0), kept for sensitivity checks
};

// Logit Magnitude token score over a top-K logit slice. Always >= 0.
// Throws std::invalid_argument on empty or non-finite input.
double logit_magnitude(std::span<const double> topk_logits, MagnitudeFormula formula = MagnitudeFormula::relu_l2);

// Shannon entropy (nats) of softmax restricted to the K provided logits.
double token_entropy(std::span<const double> topk_logits);

// KL(p || uniform_K) = ln K - entropy. Higher means more peaked.
double token_self_certainty(std::span<const double> topk_logits);

enum class TokenScorer { logit_magnitude, entropy, self_certainty };

TokenScorer parse_scorer(std::string_view name);
std::string_view to_string(TokenScorer scorer);
MagnitudeFormula parse_formula(std::string_view name);
std::string_view to_string(MagnitudeFormula formula);

// Per-token signal oriented so that higher means less reliable: the logit
// magnitude, the entropy, or the negated self-certainty.
double token_uncertainty(TokenScorer scorer, std::span<const double> topk_logits,
                         MagnitudeFormula formula = MagnitudeFormula::relu_l2);

}  // namespace lmue
