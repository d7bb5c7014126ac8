#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmue/aggregator.hpp"
#include "lmue/stream.hpp"
#include "lmue/token_scores.hpp"

namespace lmue {

struct SweepSpec {
    std::vector<std::size_t> m_grid{1, 3, 5, 10, 20, 50, 100};
    std::vector<std::size_t> w_grid{1, 3, 5, 10, 20, 50, 100};
    std::vector<double> fraction_grid = default_fractions();

    static std::vector<double> default_fractions();  // 0.1, 0.2, ..., 1.0
    void validate() const;
};

// Token scores of every record, computed once and shared by all cells.
struct ScoreCache {
    struct Entry {
        std::string id;
        std::vector<double> scores;
        bool final_is_eos = false;
        bool correct = false;
    };
    std::vector<Entry> entries;
};

// Scores each record once. Every record must have a correctness label.
ScoreCache build_score_cache(const std::vector<GenerationRecord> & records,
                             const std::unordered_map<std::string, bool> & correct,
                             TokenScorer scorer = TokenScorer::logit_magnitude,
                             MagnitudeFormula formula = MagnitudeFormula::relu_l2);

struct SweepCell {
    std::size_t top_m = 0;
    std::size_t patience_window = 0;
    double auroc = 0.0;
    double mean_tau_ratio = 0.0;
    std::size_t patience_stops = 0;  // records stopped by the patience rule
};

struct FractionCell {
    double fraction = 0.0;
    std::size_t top_m = 0;
    double auroc = 0.0;
};

// AUROC of the sequence scores produced under `config` over the cache.
double cache_auroc(const ScoreCache & cache, const StoppingConfig & config, double * mean_tau_ratio = nullptr,
                   std::size_t * patience_stops = nullptr);

// One cell per (M, W) in row-major order over (m_grid, w_grid).
std::vector<SweepCell> run_mw_sweep(const ScoreCache & cache, const SweepSpec & spec);

// One cell per (fraction, M), fractions outermost.
std::vector<FractionCell> run_fraction_sweep(const ScoreCache & cache, const SweepSpec & spec);

void write_mw_csv(std::ostream & out, const std::vector<SweepCell> & cells);
void write_fraction_csv(std::ostream & out, const std::vector<FractionCell> & cells);

}  // namespace lmue
