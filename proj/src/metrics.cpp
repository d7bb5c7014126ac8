#include "lmue/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lmue/errors.hpp"
#include "lmue/random.hpp"

namespace lmue {

namespace {

struct ClassCounts {
    std::size_t positives = 0;  // unreliable
    std::size_t negatives = 0;  // correct
};

ClassCounts count_classes(std::span<const EvalSample> samples) {
    ClassCounts c;
    for (const auto & s : samples) {
        (s.unreliable() ? c.positives : c.negatives)++;
    }
    return c;
}

ClassCounts require_both_classes(std::span<const EvalSample> samples, const char * metric) {
    const auto c = count_classes(samples);
    if (c.positives == 0 || c.negatives == 0) {
        throw UndefinedMetricError(std::string(metric) + " needs both correct and incorrect samples (got " +
                                   std::to_string(c.negatives) + " correct, " + std::to_string(c.positives) +
                                   " incorrect)");
    }
    return c;
}

std::vector<std::size_t> order_by_score(std::span<const EvalSample> samples) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
    return idx;
}

}  // namespace

double auroc(std::span<const EvalSample> samples) {
    const auto counts = require_both_classes(samples, "AUROC");
    const auto idx = order_by_score(samples);

    // Mann-Whitney U via mid-ranks.
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) {
            ++j;
        }
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (samples[idx[k]].unreliable()) {
                positive_rank_sum += mid_rank;
            }
        }
        i = j;
    }
    const auto np = static_cast<double>(counts.positives);
    const auto nn = static_cast<double>(counts.negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double aurac(std::span<const EvalSample> samples) {
    if (samples.empty()) {
        throw UndefinedMetricError("AURAC of an empty sample set");
    }
    const auto idx = order_by_score(samples);
    const std::size_t n = samples.size();
    std::vector<double> prefix_correct(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        prefix_correct[i + 1] = prefix_correct[i] + (samples[idx[i]].correct ? 1.0 : 0.0);
    }
    double area = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t kept = n - k;
        area += prefix_correct[kept] / static_cast<double>(kept);
    }
    return area / static_cast<double>(n);
}

double youden_threshold(std::span<const EvalSample> samples) {
    const auto counts = require_both_classes(samples, "Youden threshold");
    const auto idx = order_by_score(samples);
    // TPR - FPR scaled by np * nn, kept integral so equal indices compare equal.
    const auto np = static_cast<long long>(counts.positives);
    const auto nn = static_cast<long long>(counts.negatives);

    // Threshold -inf flags everything: TPR = FPR = 1.
    double best_threshold = -std::numeric_limits<double>::infinity();
    long long best_j = 0;
    std::size_t tp = counts.positives;
    std::size_t fp = counts.negatives;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) {
            const auto & s = samples[idx[j]];
            (s.unreliable() ? tp : fp)--;
            ++j;
        }
        // Flagged set is now everything strictly above this distinct score.
        const double candidate = j < idx.size()
                                     ? samples[idx[i]].score + (samples[idx[j]].score - samples[idx[i]].score) / 2.0
                                     : std::numeric_limits<double>::infinity();
        const long long youden = static_cast<long long>(tp) * nn - static_cast<long long>(fp) * np;
        if (youden > best_j) {
            best_j = youden;
            best_threshold = candidate;
        }
        i = j;
    }
    return best_threshold;
}

double balanced_accuracy(std::span<const EvalSample> samples, double threshold) {
    const auto counts = require_both_classes(samples, "balanced accuracy");
    std::size_t tp = 0;
    std::size_t tn = 0;
    for (const auto & s : samples) {
        const bool flagged = s.score >= threshold;
        if (s.unreliable() && flagged) ++tp;
        if (!s.unreliable() && !flagged) ++tn;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(counts.positives);
    const double tnr = static_cast<double>(tn) / static_cast<double>(counts.negatives);
    return (tpr + tnr) / 2.0;
}

double n_tok(std::span<const EvalSample> samples) {
    if (samples.empty()) {
        throw std::invalid_argument("N-tok of an empty sample set");
    }
    double sum = 0.0;
    for (const auto & s : samples) {
        if (!s.tau) {
            throw std::invalid_argument("N-tok needs a token count on every sample");
        }
        sum += static_cast<double>(*s.tau);
    }
    return sum / static_cast<double>(samples.size());
}

BootstrapResult bootstrap(const Metric & metric, std::span<const EvalSample> samples, std::size_t resamples,
                          std::uint64_t seed) {
    if (resamples < 1) {
        throw std::invalid_argument("bootstrap needs at least one resample");
    }
    if (samples.empty()) {
        throw UndefinedMetricError("bootstrap over an empty sample set");
    }
    const std::size_t n = samples.size();
    std::vector<double> values;
    values.reserve(resamples);
    std::vector<EvalSample> draw(n);
    BootstrapResult out;
    out.resamples = resamples;
    for (std::size_t b = 0; b < resamples; ++b) {
        auto rng = make_engine(seed, b);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (;;) {
            for (auto & d : draw) {
                d = samples[pick(rng)];
            }
            try {
                values.push_back(metric(draw));
                break;
            } catch (const UndefinedMetricError &) {
                if (++out.redrawn * 2 > resamples) {
                    throw UndefinedMetricError("metric undefined on " + std::to_string(out.redrawn) + " of " +
                                               std::to_string(resamples) + " bootstrap resamples");
                }
            }
        }
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size()));
    return out;
}

MetricsReport evaluate(std::span<const EvalSample> test, std::span<const EvalSample> val, std::size_t resamples,
                       std::uint64_t seed) {
    MetricsReport r;
    r.threshold = youden_threshold(val);
    r.resamples = resamples;
    r.seed = seed;
    r.n_test = test.size();
    r.n_val = val.size();

    auto summarize = [&](const Metric & metric, std::uint64_t stream) {
        MetricSummary s;
        s.value = metric(test);
        // Each metric gets its own resample streams; seeds stay reproducible.
        const auto boot = bootstrap(metric, test, resamples, derive_seed(seed, stream));
        s.mean = boot.mean;
        s.std = boot.std;
        s.redrawn = boot.redrawn;
        return s;
    };
    r.auroc = summarize([](auto s) { return auroc(s); }, 0);
    r.aurac = summarize([](auto s) { return aurac(s); }, 1);
    const double threshold = r.threshold;
    r.bal_acc = summarize([threshold](auto s) { return balanced_accuracy(s, threshold); }, 2);

    const bool have_tau = std::all_of(test.begin(), test.end(), [](const auto & s) { return s.tau.has_value(); });
    if (have_tau && !test.empty()) {
        r.n_tok = n_tok(test);
    }
    return r;
}

}  // namespace lmue
