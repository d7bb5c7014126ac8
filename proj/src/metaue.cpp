#include "lmue/metaue.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "lmue/errors.hpp"
#include "lmue/metrics.hpp"
#include "lmue/random.hpp"
#include "lmue/stream.hpp"

namespace lmue {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Embeddings

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path & path) {
    auto in = open_input(path);
    std::vector<EmbeddingRecord> out;
    std::unordered_set<std::string> seen;
    std::optional<std::size_t> dim;
    for_each_jsonl_line(in, [&](std::string_view line, std::size_t n) {
        EmbeddingRecord rec;
        try {
            const json j = json::parse(line);
            if (j.is_object() && j.contains("_header") && !j.contains("vector")) {
                return;
            }
            rec.id = j.at("id").get<std::string>();
            const json & v = j.at("vector");
            if (!v.is_array() || v.empty()) {
                throw InputError("'vector' must be a non-empty array", n, rec.id);
            }
            rec.vector.reserve(v.size());
            for (const auto & x : v) {
                if (!x.is_number()) {
                    throw InputError("non-numeric embedding entry", n, rec.id);
                }
                const double d = x.get<double>();
                if (!std::isfinite(d)) {
                    throw InputError("non-finite embedding entry", n, rec.id);
                }
                rec.vector.push_back(d);
            }
        } catch (const json::exception & e) {
            throw InputError(path.string() + ": bad embedding line: " + e.what(), n);
        }
        if (!dim) {
            dim = rec.vector.size();
        } else if (*dim != rec.vector.size()) {
            throw InputError("embedding dimension " + std::to_string(rec.vector.size()) + " differs from " +
                                 std::to_string(*dim),
                             n, rec.id);
        }
        if (!seen.insert(rec.id).second) {
            throw InputError("duplicate id", n, rec.id);
        }
        out.push_back(std::move(rec));
    });
    return out;
}

std::string serialize_embedding(const EmbeddingRecord & record) {
    return json{{"id", record.id}, {"vector", record.vector}}.dump();
}

// ---------------------------------------------------------------------------
// Parameters

MLPParams MLPParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
    MLPParams p;
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    p.w1 = Eigen::MatrixXd::Zero(d, h);
    p.b1 = Eigen::VectorXd::Zero(h);
    p.w2 = Eigen::VectorXd::Zero(h);
    p.b2 = 0.0;
    return p;
}

MLPParams MLPParams::init(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64 & rng) {
    MLPParams p = zeros(input_dim, hidden_dim);
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> u1(-bound1, bound1);
    std::uniform_real_distribution<double> u2(-bound2, bound2);
    for (Eigen::Index j = 0; j < p.w1.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.w1.rows(); ++i) {
            p.w1(i, j) = u1(rng);
        }
    }
    for (Eigen::Index j = 0; j < p.b1.size(); ++j) p.b1(j) = u1(rng);
    for (Eigen::Index j = 0; j < p.w2.size(); ++j) p.w2(j) = u2(rng);
    p.b2 = u2(rng);
    return p;
}

bool MLPParams::all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2);
}

bool MLPParams::operator==(const MLPParams & o) const {
    return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 &&
           b2 == o.b2;
}

void TrainConfig::validate() const {
    if (lr_grid.empty() || batch_grid.empty()) {
        throw std::invalid_argument("learning-rate and batch-size grids must be non-empty");
    }
    for (double lr : lr_grid) {
        if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
    }
    for (std::size_t b : batch_grid) {
        if (b == 0) throw std::invalid_argument("batch sizes must be positive");
    }
    if (max_epochs == 0 || hidden_dim == 0) {
        throw std::invalid_argument("max_epochs and hidden_dim must be positive");
    }
    auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_open_unit(warmup_fraction) || !in_open_unit(early_stop_patience_fraction)) {
        throw std::invalid_argument("warmup and patience fractions must lie in (0, 1)");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("dropout rate must lie in [0, 1)");
    }
    if (seeds.empty()) {
        throw std::invalid_argument("seed set must be non-empty");
    }
}

// ---------------------------------------------------------------------------
// Forward / loss / gradients

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd & z) {
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

void check_dim(const MLPParams & params, std::size_t d) {
    if (d != params.input_dim()) {
        throw std::invalid_argument("input dimension " + std::to_string(d) + " does not match model dimension " +
                                    std::to_string(params.input_dim()));
    }
}

}  // namespace

double forward(const MLPParams & params, std::span<const double> x, double dropout_rate, bool training,
               std::mt19937_64 * rng) {
    check_dim(params, x.size());
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd h = params.w1.transpose() * xv + params.b1;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
        h(j) = silu(h(j));
    }
    if (training && dropout_rate > 0.0) {
        if (rng == nullptr) {
            throw std::invalid_argument("dropout in training mode needs a generator");
        }
        h = h.cwiseProduct(dropout_mask(1, params.hidden_dim(), dropout_rate, *rng).row(0).transpose());
    }
    const double out = params.w2.dot(h) + params.b2;
    if (!std::isfinite(out)) {
        throw NumericError("non-finite MetaUE activation");
    }
    return out;
}

Eigen::VectorXd forward_batch(const MLPParams & params, const Eigen::MatrixXd & x) {
    check_dim(params, static_cast<std::size_t>(x.cols()));
    Eigen::MatrixXd z = x * params.w1;
    z.rowwise() += params.b1.transpose();
    const Eigen::MatrixXd h = z.cwiseProduct(sigmoid(z));
    Eigen::VectorXd out = h * params.w2;
    out.array() += params.b2;
    return out;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) {
        throw std::invalid_argument("prediction and target lengths differ");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("MSE of an empty batch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        sum += e * e;
    }
    return sum / static_cast<double>(predictions.size());
}

Eigen::MatrixXd dropout_mask(std::size_t rows, std::size_t hidden_dim, double rate, std::mt19937_64 & rng) {
    Eigen::MatrixXd mask(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hidden_dim));
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
            mask(i, j) = keep(rng) ? scale : 0.0;
        }
    }
    return mask;
}

MLPParams gradients(const MLPParams & params, const Eigen::MatrixXd & x, const Eigen::VectorXd & y,
                    const Eigen::MatrixXd & mask, double & loss, double loss_scale) {
    check_dim(params, static_cast<std::size_t>(x.cols()));
    const Eigen::Index n = x.rows();
    if (n == 0 || y.size() != n) {
        throw std::invalid_argument("gradient batch must be non-empty with one target per row");
    }
    const bool masked = mask.size() != 0;
    if (masked && (mask.rows() != n || mask.cols() != params.w1.cols())) {
        throw std::invalid_argument("dropout mask shape mismatch");
    }

    Eigen::MatrixXd z = x * params.w1;
    z.rowwise() += params.b1.transpose();
    const Eigen::MatrixXd s = sigmoid(z);
    Eigen::MatrixXd h = z.cwiseProduct(s);
    if (masked) {
        h = h.cwiseProduct(mask);
    }
    Eigen::VectorXd out = h * params.w2;
    out.array() += params.b2;
    const Eigen::VectorXd residual = out - y;
    loss = residual.squaredNorm() / static_cast<double>(n);

    // d(scale * mean(r^2)) / d out_i = 2 * scale * r_i / n
    const Eigen::VectorXd g = residual * (2.0 * loss_scale / static_cast<double>(n));

    MLPParams grad;
    grad.w2 = h.transpose() * g;
    grad.b2 = g.sum();
    Eigen::MatrixXd dh = g * params.w2.transpose();
    if (masked) {
        dh = dh.cwiseProduct(mask);
    }
    // silu'(z) = s (1 + z (1 - s))
    const Eigen::MatrixXd dsilu = s.array() * (1.0 + z.array() * (1.0 - s.array()));
    const Eigen::MatrixXd dz = dh.cwiseProduct(dsilu);
    grad.w1 = x.transpose() * dz;
    grad.b1 = dz.colwise().sum().transpose();
    return grad;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_fraction) {
    if (total_steps == 0) {
        throw std::invalid_argument("learning-rate schedule needs total_steps > 0");
    }
    if (step > total_steps) {
        throw std::invalid_argument("schedule step beyond total_steps");
    }
    const auto warmup = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
    if (step < warmup) {
        return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// AdamW

AdamWState AdamWState::for_params(const MLPParams & params) {
    AdamWState s;
    s.m = MLPParams::zeros(params.input_dim(), params.hidden_dim());
    s.v = s.m;
    return s;
}

namespace {

template <class P, class G, class M, class V>
void adam_tensor(P & p, const G & g, M & m, V & v, double lr, double bc1, double bc2, const AdamWHyper & hp) {
    m = hp.beta1 * m + (1.0 - hp.beta1) * g;
    v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
    p = p * (1.0 - lr * hp.weight_decay);
    p = p - lr * (m / bc1) / ((v / bc2).sqrt() + hp.eps);
}

}  // namespace

void adamw_step(MLPParams & params, const MLPParams & grads, AdamWState & state, double lr, const AdamWHyper & hp) {
    if (grads.w1.rows() != params.w1.rows() || grads.w1.cols() != params.w1.cols() ||
        state.m.w1.rows() != params.w1.rows() || state.m.w1.cols() != params.w1.cols()) {
        throw std::invalid_argument("AdamW shape mismatch");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);

    auto w1 = params.w1.array();
    auto mw1 = state.m.w1.array();
    auto vw1 = state.v.w1.array();
    adam_tensor(w1, grads.w1.array(), mw1, vw1, lr, bc1, bc2, hp);
    auto b1 = params.b1.array();
    auto mb1 = state.m.b1.array();
    auto vb1 = state.v.b1.array();
    adam_tensor(b1, grads.b1.array(), mb1, vb1, lr, bc1, bc2, hp);
    auto w2 = params.w2.array();
    auto mw2 = state.m.w2.array();
    auto vw2 = state.v.w2.array();
    adam_tensor(w2, grads.w2.array(), mw2, vw2, lr, bc1, bc2, hp);

    state.m.b2 = hp.beta1 * state.m.b2 + (1.0 - hp.beta1) * grads.b2;
    state.v.b2 = hp.beta2 * state.v.b2 + (1.0 - hp.beta2) * grads.b2 * grads.b2;
    params.b2 *= 1.0 - lr * hp.weight_decay;
    params.b2 -= lr * (state.m.b2 / bc1) / (std::sqrt(state.v.b2 / bc2) + hp.eps);

    if (!params.all_finite()) {
        throw NumericError("non-finite parameter after AdamW step " + std::to_string(state.step));
    }
}

// ---------------------------------------------------------------------------
// Training

namespace {

Eigen::MatrixXd stack_rows(const std::vector<const EmbeddingRecord *> & rows) {
    if (rows.empty()) {
        return {};
    }
    const auto d = static_cast<Eigen::Index>(rows.front()->vector.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Eigen::Index k = 0; k < d; ++k) {
            x(static_cast<Eigen::Index>(i), k) = rows[i]->vector[static_cast<std::size_t>(k)];
        }
    }
    return x;
}

template <class V>
std::vector<const EmbeddingRecord *> join(const std::vector<EmbeddingRecord> & embeddings,
                                          const std::unordered_map<std::string, V> & labels) {
    std::unordered_set<std::string> have;
    std::vector<const EmbeddingRecord *> rows;
    for (const auto & e : embeddings) {
        if (labels.count(e.id)) {
            rows.push_back(&e);
            have.insert(e.id);
        }
    }
    if (have.size() != labels.size()) {
        // Report the smallest missing id so the message is deterministic.
        std::string missing;
        for (const auto & [id, _] : labels) {
            if (!have.count(id) && (missing.empty() || id < missing)) missing = id;
        }
        throw InputError(std::to_string(labels.size() - have.size()) + " labeled id(s) have no embedding, e.g. '" +
                         missing + "'");
    }
    return rows;
}

double validation_auroc(const MLPParams & params, const ValSet & val) {
    const Eigen::VectorXd scores = forward_batch(params, val.x);
    std::vector<EvalSample> samples(val.correct.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].score = scores(static_cast<Eigen::Index>(i));
        samples[i].correct = val.correct[i];
    }
    return auroc(samples);
}

}  // namespace

TrainSet make_train_set(const std::vector<EmbeddingRecord> & embeddings,
                        const std::unordered_map<std::string, double> & targets) {
    const auto rows = join(embeddings, targets);
    TrainSet t;
    t.x = stack_rows(rows);
    t.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        t.y(static_cast<Eigen::Index>(i)) = targets.at(rows[i]->id);
        t.ids.push_back(rows[i]->id);
    }
    return t;
}

ValSet make_val_set(const std::vector<EmbeddingRecord> & embeddings,
                    const std::unordered_map<std::string, bool> & correct) {
    const auto rows = join(embeddings, correct);
    ValSet v;
    v.x = stack_rows(rows);
    for (const auto * r : rows) {
        v.correct.push_back(correct.at(r->id));
        v.ids.push_back(r->id);
    }
    return v;
}

TrainResult train(const TrainSet & train_set, const ValSet & val_set, const TrainConfig & config, double lr,
                  std::size_t batch_size, std::uint64_t seed) {
    config.validate();
    const auto n = static_cast<std::size_t>(train_set.x.rows());
    if (n == 0 || static_cast<std::size_t>(train_set.y.size()) != n) {
        throw std::invalid_argument("training set is empty or misaligned");
    }
    if (batch_size == 0 || !(lr > 0.0)) {
        throw std::invalid_argument("batch size and learning rate must be positive");
    }
    const auto d = static_cast<std::size_t>(train_set.x.cols());
    if (static_cast<std::size_t>(val_set.x.cols()) != d || val_set.x.rows() == 0) {
        throw std::invalid_argument("validation set is empty or has a different dimension");
    }

    auto init_rng = make_engine(seed, 0);
    auto rng = make_engine(seed, 1);
    MLPParams params = MLPParams::init(d, config.hidden_dim, init_rng);
    AdamWState state = AdamWState::for_params(params);
    const AdamWHyper hyper{config.beta1, config.beta2, config.eps, config.weight_decay};

    const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
    const std::size_t total_steps = config.max_epochs * steps_per_epoch;
    const auto patience_steps =
        static_cast<std::size_t>(std::ceil(config.early_stop_patience_fraction * static_cast<double>(total_steps)));

    TrainResult result;
    result.best_val_auroc = -std::numeric_limits<double>::infinity();
    MLPParams best = params;
    std::size_t last_improvement = 0;
    std::size_t step = 0;
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t begin = b * batch_size;
            const std::size_t end = std::min(n, begin + batch_size);
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const Eigen::MatrixXd xb = train_set.x(idx, Eigen::all);
            const Eigen::VectorXd yb = train_set.y(idx);
            Eigen::MatrixXd mask;
            if (config.dropout_rate > 0.0) {
                mask = dropout_mask(idx.size(), config.hidden_dim, config.dropout_rate, rng);
            }
            double loss = 0.0;
            const MLPParams grad = gradients(params, xb, yb, mask, loss);
            if (!grad.all_finite()) {
                throw NumericError("non-finite gradient in epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            adamw_step(params, grad, state, lr_schedule(step, total_steps, lr, config.warmup_fraction), hyper);
            ++step;
        }

        EpochLog log;
        log.lr = lr;
        log.batch_size = batch_size;
        log.seed = seed;
        log.epoch = epoch;
        log.steps = step;
        const Eigen::VectorXd fitted = forward_batch(params, train_set.x);
        log.train_mse = (fitted - train_set.y).squaredNorm() / static_cast<double>(n);
        log.val_auroc = validation_auroc(params, val_set);
        log.lr_at_epoch_end = lr_schedule(step, total_steps, lr, config.warmup_fraction);
        result.history.push_back(log);
        result.epochs_run = epoch;

        if (log.val_auroc > result.best_val_auroc) {
            result.best_val_auroc = log.val_auroc;
            result.best_epoch = epoch;
            best = params;
            last_improvement = step;
        } else if (config.early_stopping && step - last_improvement >= patience_steps) {
            result.stopped_early = true;
            break;
        }
    }
    result.params = config.keep_best ? std::move(best) : std::move(params);
    return result;
}

GridResult grid_search(const TrainConfig & config, const CellTrainer & trainer) {
    config.validate();
    GridResult out;
    std::exception_ptr first_error;
    std::optional<std::size_t> best;
    for (double lr : config.lr_grid) {
        for (std::size_t batch : config.batch_grid) {
            GridCell cell;
            cell.lr = lr;
            cell.batch_size = batch;
            try {
                cell.result = trainer(lr, batch);
            } catch (const std::exception & e) {
                cell.error = e.what();
                if (!first_error) first_error = std::current_exception();
            }
            out.cells.push_back(std::move(cell));
            const auto & c = out.cells.back();
            if (!c.result) continue;
            if (!best) {
                best = out.cells.size() - 1;
                continue;
            }
            const auto & incumbent = out.cells[*best];
            const double a = c.result->best_val_auroc;
            const double b = incumbent.result->best_val_auroc;
            const bool better = a > b || (a == b && (c.lr < incumbent.lr ||
                                                     (c.lr == incumbent.lr && c.batch_size < incumbent.batch_size)));
            if (better) best = out.cells.size() - 1;
        }
    }
    if (!best) {
        std::rethrow_exception(first_error);
    }
    out.best = *best;
    return out;
}

GridResult grid_search(const TrainSet & train_set, const ValSet & val_set, const TrainConfig & config,
                       std::uint64_t seed) {
    return grid_search(config, [&](double lr, std::size_t batch) {
        return train(train_set, val_set, config, lr, batch, seed);
    });
}

// ---------------------------------------------------------------------------
// Prediction and checkpoints

std::vector<Prediction> predict(const MLPParams & params, const std::vector<EmbeddingRecord> & embeddings) {
    std::vector<const EmbeddingRecord *> rows;
    rows.reserve(embeddings.size());
    for (const auto & e : embeddings) {
        if (e.vector.size() != params.input_dim()) {
            throw InputError("embedding dimension " + std::to_string(e.vector.size()) +
                                 " does not match checkpoint dimension " + std::to_string(params.input_dim()),
                             std::nullopt, e.id);
        }
        rows.push_back(&e);
    }
    std::vector<Prediction> out;
    if (rows.empty()) {
        return out;
    }
    const Eigen::VectorXd scores = forward_batch(params, stack_rows(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double raw = scores(static_cast<Eigen::Index>(i));
        if (!std::isfinite(raw)) {
            throw NumericError("non-finite prediction for '" + rows[i]->id + "'");
        }
        out.push_back({rows[i]->id, raw, std::clamp(raw, 0.0, 1.0)});
    }
    return out;
}

std::string serialize_prediction(const Prediction & p) {
    return json{{"id", p.id}, {"score_raw", p.raw}, {"score_clamped", p.clamped}}.dump();
}

namespace {

constexpr const char * kCheckpointFormat = "lmue.metaue.checkpoint";
constexpr int kCheckpointVersion = 1;

json config_to_json(const TrainConfig & c) {
    return json{{"lr_grid", c.lr_grid},
                {"batch_grid", c.batch_grid},
                {"max_epochs", c.max_epochs},
                {"hidden_dim", c.hidden_dim},
                {"warmup_fraction", c.warmup_fraction},
                {"early_stop_patience_fraction", c.early_stop_patience_fraction},
                {"dropout_rate", c.dropout_rate},
                {"weight_decay", c.weight_decay},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"early_stopping", c.early_stopping},
                {"keep_best", c.keep_best},
                {"seeds", c.seeds}};
}

TrainConfig config_from_json(const json & j) {
    TrainConfig c;
    c.lr_grid = j.at("lr_grid").get<std::vector<double>>();
    c.batch_grid = j.at("batch_grid").get<std::vector<std::size_t>>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
    c.early_stop_patience_fraction = j.at("early_stop_patience_fraction").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.early_stopping = j.at("early_stopping").get<bool>();
    c.keep_best = j.at("keep_best").get<bool>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path & path, const Checkpoint & ck) {
    const auto & p = ck.params;
    std::vector<double> w1;
    w1.reserve(static_cast<std::size_t>(p.w1.size()));
    for (Eigen::Index i = 0; i < p.w1.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.w1.cols(); ++j) {
            w1.push_back(p.w1(i, j));
        }
    }
    const json j{{"format", kCheckpointFormat},
                 {"version", kCheckpointVersion},
                 {"input_dim", p.input_dim()},
                 {"hidden_dim", p.hidden_dim()},
                 {"w1", w1},
                 {"b1", std::vector<double>(p.b1.data(), p.b1.data() + p.b1.size())},
                 {"w2", std::vector<double>(p.w2.data(), p.w2.data() + p.w2.size())},
                 {"b2", p.b2},
                 {"lr", ck.lr},
                 {"batch_size", ck.batch_size},
                 {"seed", ck.seed},
                 {"config", config_to_json(ck.config)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write checkpoint '" + path.string() + "'");
    }
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path & path) {
    auto in = open_input(path);
    try {
        const json j = json::parse(in);
        if (j.at("format") != kCheckpointFormat || j.at("version").get<int>() != kCheckpointVersion) {
            throw InputError(path.string() + ": unsupported checkpoint format or version");
        }
        const auto d = j.at("input_dim").get<std::size_t>();
        const auto h = j.at("hidden_dim").get<std::size_t>();
        const auto w1 = j.at("w1").get<std::vector<double>>();
        const auto b1 = j.at("b1").get<std::vector<double>>();
        const auto w2 = j.at("w2").get<std::vector<double>>();
        if (w1.size() != d * h || b1.size() != h || w2.size() != h) {
            throw InputError(path.string() + ": checkpoint parameter shapes do not match its dimensions");
        }
        Checkpoint ck;
        ck.params = MLPParams::zeros(d, h);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t k = 0; k < h; ++k) {
                ck.params.w1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w1[i * h + k];
            }
        }
        for (std::size_t k = 0; k < h; ++k) {
            ck.params.b1(static_cast<Eigen::Index>(k)) = b1[k];
            ck.params.w2(static_cast<Eigen::Index>(k)) = w2[k];
        }
        ck.params.b2 = j.at("b2").get<double>();
        ck.lr = j.at("lr").get<double>();
        ck.batch_size = j.at("batch_size").get<std::size_t>();
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.config = config_from_json(j.at("config"));
        if (!ck.params.all_finite()) {
            throw InputError(path.string() + ": checkpoint contains non-finite parameters");
        }
        return ck;
    } catch (const json::exception & e) {
        throw InputError(path.string() + ": bad checkpoint: " + e.what());
    }
}

}  // namespace lmue
