#include "lmue/sweep.hpp"

#include <ostream>
#include <stdexcept>

#include "lmue/errors.hpp"
#include "lmue/format.hpp"
#include "lmue/metrics.hpp"

namespace lmue {

std::vector<double> SweepSpec::default_fractions() {
    std::vector<double> f;
    for (int k = 1; k <= 10; ++k) {
        f.push_back(static_cast<double>(k) / 10.0);
    }
    return f;
}

void SweepSpec::validate() const {
    if (m_grid.empty() || w_grid.empty() || fraction_grid.empty()) {
        throw std::invalid_argument("sweep grids must be non-empty");
    }
    for (auto m : m_grid) {
        if (m == 0) throw std::invalid_argument("M grid entries must be positive");
    }
    for (auto w : w_grid) {
        if (w == 0) throw std::invalid_argument("W grid entries must be positive");
    }
    for (double f : fraction_grid) {
        if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("fractions must lie in (0, 1]");
    }
}

ScoreCache build_score_cache(const std::vector<GenerationRecord> & records,
                             const std::unordered_map<std::string, bool> & correct, TokenScorer scorer,
                             MagnitudeFormula formula) {
    ScoreCache cache;
    cache.entries.reserve(records.size());
    for (const auto & r : records) {
        auto it = correct.find(r.id);
        if (it == correct.end()) {
            throw InputError("no correctness label", std::nullopt, r.id);
        }
        ScoreCache::Entry e;
        e.id = r.id;
        e.correct = it->second;
        e.final_is_eos = r.steps.back().is_eos;
        e.scores.reserve(r.steps.size());
        for (std::size_t t = 0; t < r.steps.size(); ++t) {
            try {
                e.scores.push_back(token_uncertainty(scorer, r.steps[t].topk_logits, formula));
            } catch (const std::invalid_argument & ex) {
                throw InputError("step " + std::to_string(t + 1) + ": " + ex.what(), std::nullopt, r.id);
            }
        }
        cache.entries.push_back(std::move(e));
    }
    return cache;
}

double cache_auroc(const ScoreCache & cache, const StoppingConfig & config, double * mean_tau_ratio,
                   std::size_t * patience_stops) {
    std::vector<EvalSample> samples;
    samples.reserve(cache.entries.size());
    double ratio_sum = 0.0;
    std::size_t stops = 0;
    for (const auto & e : cache.entries) {
        const auto s = run_scores(e.id, e.scores, e.final_is_eos, config);
        samples.push_back({s.raw_score, e.correct, s.tau});
        ratio_sum += static_cast<double>(s.tau) / static_cast<double>(e.scores.size());
        if (s.stopped_by == StopReason::patience) ++stops;
    }
    if (mean_tau_ratio) {
        *mean_tau_ratio = cache.entries.empty() ? 0.0 : ratio_sum / static_cast<double>(cache.entries.size());
    }
    if (patience_stops) {
        *patience_stops = stops;
    }
    return auroc(samples);
}

std::vector<SweepCell> run_mw_sweep(const ScoreCache & cache, const SweepSpec & spec) {
    spec.validate();
    std::vector<SweepCell> cells;
    for (auto m : spec.m_grid) {
        for (auto w : spec.w_grid) {
            StoppingConfig config{m, w, StopMode::early_stop, 1.0};
            SweepCell cell;
            cell.top_m = m;
            cell.patience_window = w;
            cell.auroc = cache_auroc(cache, config, &cell.mean_tau_ratio, &cell.patience_stops);
            cells.push_back(cell);
        }
    }
    return cells;
}

std::vector<FractionCell> run_fraction_sweep(const ScoreCache & cache, const SweepSpec & spec) {
    spec.validate();
    std::vector<FractionCell> cells;
    for (double f : spec.fraction_grid) {
        for (auto m : spec.m_grid) {
            StoppingConfig config{m, 1, StopMode::fixed_fraction, f};
            cells.push_back({f, m, cache_auroc(cache, config)});
        }
    }
    return cells;
}

void write_mw_csv(std::ostream & out, const std::vector<SweepCell> & cells) {
    out << "M,W,auroc,mean_tau_ratio\n";
    for (const auto & c : cells) {
        out << c.top_m << ',' << c.patience_window << ',' << format_double(c.auroc) << ','
            << format_double(c.mean_tau_ratio) << '\n';
    }
}

void write_fraction_csv(std::ostream & out, const std::vector<FractionCell> & cells) {
    out << "fraction,M,auroc\n";
    for (const auto & c : cells) {
        out << format_double(c.fraction) << ',' << c.top_m << ',' << format_double(c.auroc) << '\n';
    }
}

}  // namespace lmue
