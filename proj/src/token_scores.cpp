#include "lmue/token_scores.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmue {

namespace {

void check_logits(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("empty top-K logit slice");
    }
    for (double x : logits) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("non-finite logit");
        }
    }
}

// Softmax over the slice, shifted by the max for stability.
std::vector<double> softmax(std::span<const double> logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - top);
        z += p[k];
    }
    for (double & v : p) {
        v /= z;
    }
    return p;
}

}  // namespace

double logit_magnitude(std::span<const double> topk_logits, MagnitudeFormula formula) {
    check_logits(topk_logits);
    if (formula == MagnitudeFormula::relu_sum) {
        double sum = 0.0;
        for (double x : topk_logits) {
            sum += std::max(x, 0.0);
        }
        return sum;
    }
    double sq = 0.0;
    for (double x : topk_logits) {
        if (x > 0.0) {
            sq += x * x;
        }
    }
    return std::sqrt(sq);
}

double token_entropy(std::span<const double> topk_logits) {
    check_logits(topk_logits);
    const auto p = softmax(topk_logits);
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

double token_self_certainty(std::span<const double> topk_logits) {
    const double h = token_entropy(topk_logits);
    return std::log(static_cast<double>(topk_logits.size())) - h;
}

TokenScorer parse_scorer(std::string_view name) {
    if (name == "logit_magnitude") return TokenScorer::logit_magnitude;
    if (name == "entropy") return TokenScorer::entropy;
    if (name == "self_certainty") return TokenScorer::self_certainty;
    throw std::invalid_argument("unknown scorer '" + std::string(name) + "'");
}

std::string_view to_string(TokenScorer scorer) {
    switch (scorer) {
        case TokenScorer::logit_magnitude: return "logit_magnitude";
        case TokenScorer::entropy: return "entropy";
        case TokenScorer::self_certainty: return "self_certainty";
    }
    return "?";
}

MagnitudeFormula parse_formula(std::string_view name) {
    if (name == "relu_l2" || name == "l2") return MagnitudeFormula::relu_l2;
    if (name == "relu_sum") return MagnitudeFormula::relu_sum;
    throw std::invalid_argument("unknown magnitude formula '" + std::string(name) + "'");
}

std::string_view to_string(MagnitudeFormula formula) {
    return formula == MagnitudeFormula::relu_l2 ? "relu_l2" : "relu_sum";
}

double token_uncertainty(TokenScorer scorer, std::span<const double> topk_logits, MagnitudeFormula formula) {
    switch (scorer) {
        case TokenScorer::logit_magnitude: return logit_magnitude(topk_logits, formula);
        case TokenScorer::entropy: return token_entropy(topk_logits);
        case TokenScorer::self_certainty: return -token_self_certainty(topk_logits);
    }
    throw std::invalid_argument("unknown scorer");
}

}  // namespace lmue
