#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lmue {

// Zero-mean increment distributions; the running sum of independent draws
// is a martingale. Variances are non-increasing in t for every kind.
struct IncrementModel {
    enum class Kind { gaussian, shrinking_gaussian, bernoulli_pm };

    Kind kind = Kind::gaussian;
    double sigma = 1.0;
    double decay = 1.0;  // shrinking_gaussian: sd_t = sigma * decay^(t-1)

    // Variance of the t-th increment (1-based); also its conditional
    // variance given the past, since increments are independent.
    double variance(std::size_t t) const;
    std::string name() const;
    void validate() const;

    // "gaussian:SIGMA", "shrinking_gaussian:SIGMA:DECAY", "bernoulli_pm:SIGMA"
    static IncrementModel parse(std::string_view spec);
};

// n_paths x horizon increments, row-major; M_0 = 0.
class PathCollection {
public:
    PathCollection(IncrementModel model, std::size_t horizon, std::size_t n_paths);

    const IncrementModel & model() const noexcept { return model_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t size() const noexcept { return n_paths_; }

    std::span<const double> increments(std::size_t path) const;
    std::span<double> increments(std::size_t path);
    // M_0..M_T for one path.
    std::vector<double> values(std::size_t path) const;

    bool operator==(const PathCollection & other) const { return data_ == other.data_; }

private:
    IncrementModel model_;
    std::size_t horizon_;
    std::size_t n_paths_;
    std::vector<double> data_;
};

// Path i draws from its own generator seeded from (seed, i).
PathCollection simulate_paths(std::size_t horizon, const IncrementModel & model, std::size_t n_paths,
                              std::uint64_t seed);

struct StoppingRule {
    enum class Kind { fixed, small_increment_patience };

    Kind kind = Kind::fixed;
    std::size_t fixed_time = 0;
    double threshold = 0.0;  // |increment| <= threshold counts as small
    std::size_t window = 1;  // consecutive small increments required

    // Stopping time for one path given its increments (only the prefix up
    // to the returned time is inspected). Returns a value in [0, T].
    std::size_t stop(std::span<const double> increments) const;

    // Smallest stopping time the rule can produce on a horizon-T path.
    std::size_t min_stopping_time(std::size_t horizon) const;

    std::string name() const;

    // "fixed:TAU0" or "patience:THRESHOLD:W"
    static StoppingRule parse(std::string_view spec);
};

std::vector<std::size_t> apply_stopping(const PathCollection & paths, const StoppingRule & rule);

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};

// E[(M_T - M_tau)^2]
McEstimate penalty(const PathCollection & paths, std::span<const std::size_t> taus);
// E[sum_{t > tau} increment_t^2]
McEstimate residual_qv(const PathCollection & paths, std::span<const std::size_t> taus);

struct BoundReport {
    std::string model;
    std::string rule;
    std::size_t horizon = 0;
    std::size_t n_paths = 0;
    McEstimate penalty;
    McEstimate residual_qv;
    double eps = 0.0;
    double mean_remaining = 0.0;  // E[T - tau]
    double eps_bound = 0.0;       // eps * E[T - tau]
    double eps_horizon = 0.0;     // eps * T
    double bound_se = 0.0;        // SE of penalty - eps * (T - tau), per path
    bool identity_holds = false;  // |penalty - residual_qv| <= 3 (se_p + se_q)
    bool hypothesis_holds = false;  // conditional variance <= eps after tau, by construction
    bool bound_holds = false;     // penalty <= eps_bound + 3 bound_se

    // "true"/"false" when the hypothesis holds, "unverified" otherwise.
    std::string pass_label() const;
};

BoundReport bound_report(const PathCollection & paths, const StoppingRule & rule,
                         std::span<const std::size_t> taus, double eps);

void write_bound_csv_header(std::ostream & out);
void write_bound_csv_row(std::ostream & out, const BoundReport & report);

}  // namespace lmue
