#include "lmue/martingale.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "lmue/format.hpp"
#include "lmue/random.hpp"

namespace lmue {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(const std::string & s, std::string_view spec) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used != s.size() || s.empty()) {
        throw std::invalid_argument("bad number '" + s + "' in '" + std::string(spec) + "'");
    }
    return v;
}

std::size_t to_size(const std::string & s, std::string_view spec) {
    const double v = to_double(s, spec);
    if (v < 0 || v != std::floor(v)) {
        throw std::invalid_argument("expected a non-negative integer in '" + std::string(spec) + "'");
    }
    return static_cast<std::size_t>(v);
}

McEstimate mean_and_se(const std::vector<double> & xs) {
    McEstimate e;
    if (xs.empty()) return e;
    const auto n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    e.mean = sum / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - e.mean) * (x - e.mean);
        e.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return e;
}

}  // namespace

double IncrementModel::variance(std::size_t t) const {
    switch (kind) {
        case Kind::gaussian:
        case Kind::bernoulli_pm:
            return sigma * sigma;
        case Kind::shrinking_gaussian: {
            const double sd = sigma * std::pow(decay, static_cast<double>(t) - 1.0);
            return sd * sd;
        }
    }
    return 0.0;
}

std::string IncrementModel::name() const {
    switch (kind) {
        case Kind::gaussian: return "gaussian(" + format_double(sigma) + ")";
        case Kind::shrinking_gaussian:
            return "shrinking_gaussian(" + format_double(sigma) + ";" + format_double(decay) + ")";
        case Kind::bernoulli_pm: return "bernoulli_pm(" + format_double(sigma) + ")";
    }
    return "?";
}

void IncrementModel::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("increment sigma must be finite and >= 0");
    }
    if (kind == Kind::shrinking_gaussian && !(decay > 0.0 && decay <= 1.0)) {
        throw std::invalid_argument("shrinking_gaussian decay must lie in (0, 1]");
    }
}

IncrementModel IncrementModel::parse(std::string_view spec) {
    const auto parts = split(spec, ':');
    IncrementModel m;
    if (parts[0] == "gaussian" && parts.size() == 2) {
        m.kind = Kind::gaussian;
    } else if (parts[0] == "bernoulli_pm" && parts.size() == 2) {
        m.kind = Kind::bernoulli_pm;
    } else if (parts[0] == "shrinking_gaussian" && parts.size() == 3) {
        m.kind = Kind::shrinking_gaussian;
        m.decay = to_double(parts[2], spec);
    } else {
        throw std::invalid_argument("bad increment model '" + std::string(spec) + "'");
    }
    m.sigma = to_double(parts[1], spec);
    m.validate();
    return m;
}

PathCollection::PathCollection(IncrementModel model, std::size_t horizon, std::size_t n_paths)
    : model_(model), horizon_(horizon), n_paths_(n_paths), data_(horizon * n_paths, 0.0) {}

std::span<const double> PathCollection::increments(std::size_t path) const {
    return {data_.data() + path * horizon_, horizon_};
}

std::span<double> PathCollection::increments(std::size_t path) {
    return {data_.data() + path * horizon_, horizon_};
}

std::vector<double> PathCollection::values(std::size_t path) const {
    std::vector<double> v(horizon_ + 1, 0.0);
    const auto inc = increments(path);
    for (std::size_t t = 1; t <= horizon_; ++t) {
        v[t] = v[t - 1] + inc[t - 1];
    }
    return v;
}

PathCollection simulate_paths(std::size_t horizon, const IncrementModel & model, std::size_t n_paths,
                              std::uint64_t seed) {
    if (horizon < 1 || n_paths < 1) {
        throw std::invalid_argument("simulation needs T >= 1 and at least one path");
    }
    model.validate();
    PathCollection paths(model, horizon, n_paths);
    if (model.sigma == 0.0) {
        return paths;
    }
    for (std::size_t i = 0; i < n_paths; ++i) {
        auto rng = make_engine(seed, i);
        auto inc = paths.increments(i);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::bernoulli_distribution coin(0.5);
        for (std::size_t t = 1; t <= horizon; ++t) {
            const double sd = std::sqrt(model.variance(t));
            inc[t - 1] = model.kind == IncrementModel::Kind::bernoulli_pm ? (coin(rng) ? sd : -sd)
                                                                           : sd * normal(rng);
        }
    }
    return paths;
}

std::size_t StoppingRule::stop(std::span<const double> increments) const {
    const std::size_t horizon = increments.size();
    if (kind == Kind::fixed) {
        return std::min(fixed_time, horizon);
    }
    std::size_t run = 0;
    for (std::size_t t = 1; t <= horizon; ++t) {
        run = std::abs(increments[t - 1]) <= threshold ? run + 1 : 0;
        if (run >= window) {
            return t;
        }
    }
    return horizon;
}

std::size_t StoppingRule::min_stopping_time(std::size_t horizon) const {
    return kind == Kind::fixed ? std::min(fixed_time, horizon) : std::min(window, horizon);
}

std::string StoppingRule::name() const {
    if (kind == Kind::fixed) {
        return "fixed(" + std::to_string(fixed_time) + ")";
    }
    return "patience(" + format_double(threshold) + ";" + std::to_string(window) + ")";
}

StoppingRule StoppingRule::parse(std::string_view spec) {
    const auto parts = split(spec, ':');
    StoppingRule r;
    if (parts[0] == "fixed" && parts.size() == 2) {
        r.kind = Kind::fixed;
        r.fixed_time = to_size(parts[1], spec);
    } else if (parts[0] == "patience" && parts.size() == 3) {
        r.kind = Kind::small_increment_patience;
        r.threshold = to_double(parts[1], spec);
        r.window = to_size(parts[2], spec);
        if (r.window < 1 || !(r.threshold >= 0.0)) {
            throw std::invalid_argument("patience rule needs W >= 1 and threshold >= 0");
        }
    } else {
        throw std::invalid_argument("bad stopping rule '" + std::string(spec) + "'");
    }
    return r;
}

std::vector<std::size_t> apply_stopping(const PathCollection & paths, const StoppingRule & rule) {
    std::vector<std::size_t> taus(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        taus[i] = rule.stop(paths.increments(i));
    }
    return taus;
}

namespace {

void check_taus(const PathCollection & paths, std::span<const std::size_t> taus) {
    if (taus.size() != paths.size()) {
        throw std::invalid_argument("one stopping time per path required");
    }
    for (auto tau : taus) {
        if (tau > paths.horizon()) throw std::invalid_argument("stopping time beyond the horizon");
    }
}

double tail_sum(std::span<const double> inc, std::size_t tau) {
    double s = 0.0;
    for (std::size_t t = tau; t < inc.size(); ++t) s += inc[t];
    return s;
}

double tail_energy(std::span<const double> inc, std::size_t tau) {
    double s = 0.0;
    for (std::size_t t = tau; t < inc.size(); ++t) s += inc[t] * inc[t];
    return s;
}

}  // namespace

McEstimate penalty(const PathCollection & paths, std::span<const std::size_t> taus) {
    check_taus(paths, taus);
    std::vector<double> xs(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const double gap = tail_sum(paths.increments(i), taus[i]);  // M_T - M_tau
        xs[i] = gap * gap;
    }
    return mean_and_se(xs);
}

McEstimate residual_qv(const PathCollection & paths, std::span<const std::size_t> taus) {
    check_taus(paths, taus);
    std::vector<double> xs(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        xs[i] = tail_energy(paths.increments(i), taus[i]);
    }
    return mean_and_se(xs);
}

std::string BoundReport::pass_label() const {
    if (!hypothesis_holds) return "unverified";
    return bound_holds ? "true" : "false";
}

BoundReport bound_report(const PathCollection & paths, const StoppingRule & rule,
                         std::span<const std::size_t> taus, double eps) {
    if (!(eps >= 0.0)) {
        throw std::invalid_argument("epsilon must be >= 0");
    }
    check_taus(paths, taus);
    const std::size_t horizon = paths.horizon();

    BoundReport r;
    r.model = paths.model().name();
    r.rule = rule.name();
    r.horizon = horizon;
    r.n_paths = paths.size();
    r.eps = eps;
    r.penalty = penalty(paths, taus);
    r.residual_qv = residual_qv(paths, taus);

    std::vector<double> diff(paths.size());
    double remaining = 0.0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const double gap = tail_sum(paths.increments(i), taus[i]);
        const auto rest = static_cast<double>(horizon - taus[i]);
        remaining += rest;
        diff[i] = gap * gap - eps * rest;
    }
    r.mean_remaining = remaining / static_cast<double>(paths.size());
    r.eps_bound = eps * r.mean_remaining;
    r.eps_horizon = eps * static_cast<double>(horizon);
    r.bound_se = mean_and_se(diff).se;

    r.identity_holds = std::abs(r.penalty.mean - r.residual_qv.mean) <= 3.0 * (r.penalty.se + r.residual_qv.se);
    // Variances never increase with t, so the first post-stop step is the worst case.
    const std::size_t earliest = rule.min_stopping_time(horizon);
    r.hypothesis_holds = earliest >= horizon || paths.model().variance(earliest + 1) <= eps;
    r.bound_holds = r.penalty.mean <= r.eps_bound + 3.0 * r.bound_se;
    return r;
}

void write_bound_csv_header(std::ostream & out) {
    out << "model,rule,T,n_paths,penalty,penalty_se,residual_qv,residual_se,eps_bound,pass\n";
}

void write_bound_csv_row(std::ostream & out, const BoundReport & r) {
    out << r.model << ',' << r.rule << ',' << r.horizon << ',' << r.n_paths << ',' << format_double(r.penalty.mean)
        << ',' << format_double(r.penalty.se) << ',' << format_double(r.residual_qv.mean) << ','
        << format_double(r.residual_qv.se) << ',' << format_double(r.eps_bound) << ',' << r.pass_label() << '\n';
}

}  // namespace lmue
