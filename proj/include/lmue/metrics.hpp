#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

namespace lmue {

// One scored evaluation item. Higher scores mean "less reliable"; the
// positive class for detection is the incorrect (unreliable) answer.
struct EvalSample {
    double score = 0.0;
    bool correct = false;
    std::optional<std::size_t> tau;

    bool unreliable() const noexcept { return !correct; }
};

// P(score of a random incorrect sample > score of a random correct one),
// ties counted as 1/2. Rank-based, O(n log n). Throws UndefinedMetricError
// unless both classes are present.
double auroc(std::span<const EvalSample> samples);

// Mean accuracy of the retained samples when the k most uncertain are
// rejected, averaged over k = 0..N-1. Sorting is stable on input order.
double aurac(std::span<const EvalSample> samples);

// Threshold maximizing TPR - FPR over the midpoints between consecutive
// distinct scores plus -inf/+inf. Ties go to the smallest threshold.
double youden_threshold(std::span<const EvalSample> samples);

// Mean of TPR and TNR when flagging score >= threshold as unreliable.
double balanced_accuracy(std::span<const EvalSample> samples, double threshold);

// Mean number of consumed tokens. Throws std::invalid_argument if any
// sample lacks tau.
double n_tok(std::span<const EvalSample> samples);

using Metric = std::function<double(std::span<const EvalSample>)>;

struct BootstrapResult {
    double mean = 0.0;
    double std = 0.0;          // population std across resamples
    std::size_t resamples = 0;
    std::size_t redrawn = 0;   // resamples on which the metric was undefined
};

// B resamples with replacement of size N. Resample b draws from its own
// generator seeded from (seed, b), so results do not depend on evaluation
// order. Undefined resamples are redrawn; more than B/2 of them raises
// UndefinedMetricError.
BootstrapResult bootstrap(const Metric & metric, std::span<const EvalSample> samples, std::size_t resamples,
                          std::uint64_t seed);

struct MetricSummary {
    double value = 0.0;  // on the full set
    double mean = 0.0;   // bootstrap
    double std = 0.0;
    std::size_t redrawn = 0;
};

struct MetricsReport {
    MetricSummary auroc;
    MetricSummary aurac;
    MetricSummary bal_acc;
    std::optional<double> n_tok;
    double threshold = 0.0;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    std::size_t n_test = 0;
    std::size_t n_val = 0;
};

// Fits the Youden threshold on `val`, then scores `test` with bootstrap.
MetricsReport evaluate(std::span<const EvalSample> test, std::span<const EvalSample> val, std::size_t resamples,
                       std::uint64_t seed);

}  // namespace lmue
