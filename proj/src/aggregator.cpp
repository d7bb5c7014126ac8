#include "lmue/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "lmue/errors.hpp"

namespace lmue {

using nlohmann::json;

void StoppingConfig::validate() const {
    if (top_m < 1) {
        throw std::invalid_argument("top-M size must be >= 1");
    }
    if (patience_window < 1) {
        throw std::invalid_argument("patience window must be >= 1");
    }
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("fraction must lie in (0, 1]");
    }
}

StopMode parse_stop_mode(std::string_view name) {
    if (name == "early_stop") return StopMode::early_stop;
    if (name == "full_generation" || name == "full") return StopMode::full_generation;
    if (name == "fixed_fraction" || name == "fraction") return StopMode::fixed_fraction;
    throw std::invalid_argument("unknown stopping mode '" + std::string(name) + "'");
}

std::string_view to_string(StopMode mode) {
    switch (mode) {
        case StopMode::early_stop: return "early_stop";
        case StopMode::full_generation: return "full_generation";
        case StopMode::fixed_fraction: return "fixed_fraction";
    }
    return "?";
}

SequenceAggregation parse_aggregation(std::string_view name) {
    if (name == "top_m_mean") return SequenceAggregation::top_m_mean;
    if (name == "prefix_mean") return SequenceAggregation::prefix_mean;
    throw std::invalid_argument("unknown aggregation '" + std::string(name) + "'");
}

std::string_view to_string(SequenceAggregation aggregation) {
    return aggregation == SequenceAggregation::top_m_mean ? "top_m_mean" : "prefix_mean";
}

std::size_t fraction_length(double fraction, std::size_t length) {
    const double x = fraction * static_cast<double>(length);
    const double nearest = std::round(x);
    double n = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
    n = std::clamp(n, 1.0, static_cast<double>(length));
    return static_cast<std::size_t>(n);
}

namespace {

// Heap "less" = ranks higher, so the heap front is the lowest-ranked entry.
bool ranks_higher(const ScoreEntry & a, const ScoreEntry & b) {
    return a.score > b.score || (a.score == b.score && a.step < b.step);
}

}  // namespace

TopMTracker::TopMTracker(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw std::invalid_argument("top-M capacity must be >= 1");
    }
    heap_.reserve(capacity);
}

bool TopMTracker::observe(std::size_t step, double score) {
    if (!std::isfinite(score)) {
        throw std::invalid_argument("non-finite token score at step " + std::to_string(step));
    }
    if (step <= last_step_) {
        throw std::invalid_argument("step index " + std::to_string(step) + " does not increase past " +
                                    std::to_string(last_step_));
    }
    last_step_ = step;

    if (heap_.size() < capacity_) {
        heap_.push_back({step, score});
        std::push_heap(heap_.begin(), heap_.end(), ranks_higher);
        patience_ = 0;
        return true;
    }
    if (score > heap_.front().score) {
        std::pop_heap(heap_.begin(), heap_.end(), ranks_higher);
        heap_.back() = {step, score};
        std::push_heap(heap_.begin(), heap_.end(), ranks_higher);
        patience_ = 0;
        return true;
    }
    ++patience_;
    return false;
}

std::vector<ScoreEntry> TopMTracker::entries() const {
    std::vector<ScoreEntry> out = heap_;
    std::sort(out.begin(), out.end(), [](const auto & a, const auto & b) { return a.step < b.step; });
    return out;
}

double TopMTracker::mean() const {
    if (heap_.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto & e : entries()) {
        sum += e.score;
    }
    return sum / static_cast<double>(heap_.size());
}

bool should_stop(const TopMTracker & tracker, bool is_eos, std::size_t patience_window) {
    return is_eos || (tracker.full() && tracker.patience() >= patience_window);
}

std::string_view to_string(StopReason reason) {
    switch (reason) {
        case StopReason::eos: return "eos";
        case StopReason::patience: return "patience";
        case StopReason::fraction: return "fraction";
        case StopReason::end_of_stream: return "end_of_stream";
    }
    return "?";
}

StopReason parse_stop_reason(std::string_view name) {
    if (name == "eos") return StopReason::eos;
    if (name == "patience") return StopReason::patience;
    if (name == "fraction") return StopReason::fraction;
    if (name == "end_of_stream") return StopReason::end_of_stream;
    throw std::invalid_argument("unknown stop reason '" + std::string(name) + "'");
}

namespace {

template <class ScoreAt, class EosAt>
ScoredSequence aggregate(std::string record_id, std::size_t length, const StoppingConfig & config,
                         ScoreAt && score_at, EosAt && eos_at, std::vector<ScoreEntry> * final_entries) {
    config.validate();
    if (length == 0) {
        throw InputError("record has no steps", std::nullopt, record_id);
    }
    const std::size_t limit =
        config.mode == StopMode::fixed_fraction ? fraction_length(config.fraction, length) : length;

    TopMTracker tracker(config.top_m);
    ScoredSequence out;
    out.record_id = std::move(record_id);
    double prefix_sum = 0.0;
    for (std::size_t t = 1; t <= limit; ++t) {
        const double score = score_at(t);
        tracker.observe(t, score);
        prefix_sum += score;
        const bool eos = eos_at(t);
        out.tau = t;
        if (eos) {
            out.stopped_by = StopReason::eos;
            break;
        }
        if (config.mode == StopMode::early_stop && should_stop(tracker, false, config.patience_window)) {
            out.stopped_by = StopReason::patience;
            break;
        }
        if (t == limit) {
            out.stopped_by = limit < length ? StopReason::fraction : StopReason::end_of_stream;
        }
    }
    out.tokens_consumed = out.tau;
    out.raw_score = config.aggregation == SequenceAggregation::top_m_mean
                        ? tracker.mean()
                        : prefix_sum / static_cast<double>(out.tau);
    if (final_entries) {
        *final_entries = tracker.entries();
    }
    return out;
}

}  // namespace

ScoredSequence run_stream(const GenerationRecord & record, const StoppingConfig & config, TokenScorer scorer,
                          MagnitudeFormula formula) {
    const auto & steps = record.steps;
    auto score_at = [&](std::size_t t) {
        try {
            return token_uncertainty(scorer, steps[t - 1].topk_logits, formula);
        } catch (const std::invalid_argument & e) {
            throw InputError("step " + std::to_string(t) + ": " + e.what(), std::nullopt, record.id);
        }
    };
    auto eos_at = [&](std::size_t t) { return steps[t - 1].is_eos; };
    return aggregate(record.id, steps.size(), config, score_at, eos_at, nullptr);
}

ScoredSequence run_scores(std::string record_id, std::span<const double> scores, bool final_is_eos,
                          const StoppingConfig & config, std::vector<ScoreEntry> & final_entries) {
    const std::size_t n = scores.size();
    return aggregate(
        std::move(record_id), n, config, [&](std::size_t t) { return scores[t - 1]; },
        [&](std::size_t t) { return final_is_eos && t == n; }, &final_entries);
}

ScoredSequence run_scores(std::string record_id, std::span<const double> scores, bool final_is_eos,
                          const StoppingConfig & config) {
    const std::size_t n = scores.size();
    return aggregate(
        std::move(record_id), n, config, [&](std::size_t t) { return scores[t - 1]; },
        [&](std::size_t t) { return final_is_eos && t == n; }, nullptr);
}

NormStats fit_minmax(std::span<const double> raw_scores) {
    if (raw_scores.empty()) {
        throw std::invalid_argument("cannot fit min-max statistics on an empty list");
    }
    const auto [lo, hi] = std::minmax_element(raw_scores.begin(), raw_scores.end());
    return {*lo, *hi};
}

double normalize(double raw, const NormStats & stats) {
    if (stats.min == stats.max) {
        return 0.5;
    }
    return std::clamp((raw - stats.min) / (stats.max - stats.min), 0.0, 1.0);
}

std::string serialize_scored(const ScoredSequence & s) {
    json j{{"id", s.record_id},
           {"tau", s.tau},
           {"raw_score", s.raw_score},
           {"norm_score", s.norm_score ? json(*s.norm_score) : json(nullptr)},
           {"tokens_consumed", s.tokens_consumed},
           {"stopped_by", std::string(to_string(s.stopped_by))}};
    return j.dump();
}

ScoredSequence parse_scored(std::string_view line, std::size_t line_number) {
    try {
        const json j = json::parse(line);
        ScoredSequence s;
        s.record_id = j.at("id").get<std::string>();
        s.tau = j.at("tau").get<std::size_t>();
        s.raw_score = j.at("raw_score").get<double>();
        if (auto it = j.find("norm_score"); it != j.end() && !it->is_null()) {
            s.norm_score = it->get<double>();
        }
        s.tokens_consumed = j.at("tokens_consumed").get<std::size_t>();
        s.stopped_by = parse_stop_reason(j.at("stopped_by").get<std::string>());
        return s;
    } catch (const json::exception & e) {
        throw InputError(std::string("bad scored-sequence line: ") + e.what(), line_number);
    } catch (const std::invalid_argument & e) {
        throw InputError(e.what(), line_number);
    }
}

std::vector<ScoredSequence> read_scored(const std::filesystem::path & path) {
    auto in = open_input(path);
    std::vector<ScoredSequence> out;
    for_each_jsonl_line(in, [&](std::string_view line, std::size_t n) { out.push_back(parse_scored(line, n)); });
    return out;
}

std::string serialize_norm_stats(const NormStats & stats) {
    return json{{"min", stats.min}, {"max", stats.max}}.dump();
}

NormStats read_norm_stats(const std::filesystem::path & path) {
    auto in = open_input(path);
    try {
        const json j = json::parse(in);
        NormStats s{j.at("min").get<double>(), j.at("max").get<double>()};
        if (!(s.min <= s.max)) {
            throw InputError(path.string() + ": normalization min exceeds max");
        }
        return s;
    } catch (const json::exception & e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

}  // namespace lmue
