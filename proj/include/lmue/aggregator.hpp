#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmue/stream.hpp"
#include "lmue/token_scores.hpp"

namespace lmue {

enum class StopMode { early_stop, full_generation, fixed_fraction };

// How token scores become the sequence score at the stopping time.
enum class SequenceAggregation {
    top_m_mean,   // mean of the final top-M set
    prefix_mean,  // mean over every observed token (baseline scorers)
};

struct StoppingConfig {
    std::size_t top_m = 5;
    std::size_t patience_window = 10;
    StopMode mode = StopMode::early_stop;
    double fraction = 1.0;  // only used by fixed_fraction
    SequenceAggregation aggregation = SequenceAggregation::top_m_mean;

    // Throws std::invalid_argument unless M >= 1, W >= 1 and fraction in (0, 1].
    void validate() const;
};

StopMode parse_stop_mode(std::string_view name);
std::string_view to_string(StopMode mode);
SequenceAggregation parse_aggregation(std::string_view name);
std::string_view to_string(SequenceAggregation aggregation);

// Number of leading tokens read in fixed-fraction mode: ceil(f * T), at
// least 1. Products within 1e-9 of an integer are snapped to it so that
// decimal fractions like 0.3 do not round up an extra token.
std::size_t fraction_length(double fraction, std::size_t length);

struct ScoreEntry {
    std::size_t step = 0;  // 1-based
    double score = 0.0;

    bool operator==(const ScoreEntry &) const = default;
};

// Streaming top-M set with a patience counter.
//
// Entries are ranked by (score desc, step asc). A new score enters a full
// set only if it is strictly greater than the current minimum; the evicted
// entry is the lowest-ranked one (minimum score, newest among equal minima).
// The set therefore always equals the first M items of the offline ranking.
class TopMTracker {
public:
    explicit TopMTracker(std::size_t capacity);

    // Offers the score of step `step`. Returns true if it entered the set.
    // Throws std::invalid_argument on non-finite scores or non-increasing steps.
    bool observe(std::size_t step, double score);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return heap_.size(); }
    bool full() const noexcept { return heap_.size() == capacity_; }
    std::size_t patience() const noexcept { return patience_; }

    // Current entries ordered by step.
    std::vector<ScoreEntry> entries() const;

    // Mean of the entry scores, summed in step order. 0 when empty.
    double mean() const;

private:
    std::size_t capacity_;
    std::vector<ScoreEntry> heap_;  // min-heap on rank
    std::size_t patience_ = 0;
    std::size_t last_step_ = 0;
};

// True iff the step was end-of-sequence or the set is full and has been
// unchanged for at least W consecutive steps.
bool should_stop(const TopMTracker & tracker, bool is_eos, std::size_t patience_window);

enum class StopReason { eos, patience, fraction, end_of_stream };

std::string_view to_string(StopReason reason);
StopReason parse_stop_reason(std::string_view name);

struct ScoredSequence {
    std::string record_id;
    std::size_t tau = 0;
    double raw_score = 0.0;
    std::optional<double> norm_score;
    std::size_t tokens_consumed = 0;
    StopReason stopped_by = StopReason::end_of_stream;

    bool operator==(const ScoredSequence &) const = default;
};

// Scores a record step by step and stops per `config`. Steps after the
// stopping time are never read. Scorer failures surface as InputError
// naming the record and step.
ScoredSequence run_stream(const GenerationRecord & record, const StoppingConfig & config,
                          TokenScorer scorer = TokenScorer::logit_magnitude,
                          MagnitudeFormula formula = MagnitudeFormula::relu_l2);

// Same aggregation over precomputed token scores. `final_is_eos` flags the
// last element as the end-of-sequence step.
ScoredSequence run_scores(std::string record_id, std::span<const double> scores, bool final_is_eos,
                          const StoppingConfig & config);

// Also returns the final top-M entries (used by tests and the sweep).
ScoredSequence run_scores(std::string record_id, std::span<const double> scores, bool final_is_eos,
                          const StoppingConfig & config, std::vector<ScoreEntry> & final_entries);

struct NormStats {
    double min = 0.0;
    double max = 0.0;

    bool operator==(const NormStats &) const = default;
};

NormStats fit_minmax(std::span<const double> raw_scores);

// (raw - min) / (max - min) clamped to [0, 1]; 0.5 when min == max.
double normalize(double raw, const NormStats & stats);

std::string serialize_scored(const ScoredSequence & s);
ScoredSequence parse_scored(std::string_view line, std::size_t line_number = 1);
std::vector<ScoredSequence> read_scored(const std::filesystem::path & path);

std::string serialize_norm_stats(const NormStats & stats);
NormStats read_norm_stats(const std::filesystem::path & path);

}  // namespace lmue
