#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace lmue {

// Frozen-encoder output for one prompt. Read-only input to MetaUE.
struct EmbeddingRecord {
    std::string id;
    std::vector<double> vector;
};

// Reads an embeddings JSONL file ({id, vector}); all vectors must share one
// dimension and be finite, ids must be unique.
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path & path);
std::string serialize_embedding(const EmbeddingRecord & record);

// Two-layer head: out = w2 . dropout(silu(w1^T x + b1)) + b2.
struct MLPParams {
    Eigen::MatrixXd w1;  // d x H
    Eigen::VectorXd b1;  // H
    Eigen::VectorXd w2;  // H
    double b2 = 0.0;

    static MLPParams zeros(std::size_t input_dim, std::size_t hidden_dim);
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    static MLPParams init(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64 & rng);

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w1.rows()); }
    std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
    bool all_finite() const;

    bool operator==(const MLPParams & other) const;
};

struct TrainConfig {
    std::vector<double> lr_grid{3e-3, 1e-3, 3e-4};
    std::vector<std::size_t> batch_grid{64, 128, 256};
    std::size_t max_epochs = 100;
    std::size_t hidden_dim = 256;
    double warmup_fraction = 0.10;
    double early_stop_patience_fraction = 0.10;
    double dropout_rate = 0.1;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool early_stopping = true;
    // Return the best-validation checkpoint (true) or the last epoch's params.
    bool keep_best = true;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

    void validate() const;
};

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }

// Single-sample forward pass. In training mode inverted dropout is applied
// with `dropout_rate` using `rng` (required when training with rate > 0).
double forward(const MLPParams & params, std::span<const double> x, double dropout_rate, bool training,
               std::mt19937_64 * rng = nullptr);

// Eval-mode forward over the rows of `x` (n x d).
Eigen::VectorXd forward_batch(const MLPParams & params, const Eigen::MatrixXd & x);

double mse_loss(std::span<const double> predictions, std::span<const double> targets);

// Samples an n x H inverted-dropout mask (entries 0 or 1/(1-rate)).
Eigen::MatrixXd dropout_mask(std::size_t rows, std::size_t hidden_dim, double rate, std::mt19937_64 & rng);

// Analytic gradient of loss_scale * MSE(forward(x), y) with respect to every
// parameter. `mask` may be empty (no dropout). Also returns the unscaled loss.
MLPParams gradients(const MLPParams & params, const Eigen::MatrixXd & x, const Eigen::VectorXd & y,
                    const Eigen::MatrixXd & mask, double & loss, double loss_scale = 1.0);

// Linear warmup over round(warmup_fraction * total) steps, then cosine decay
// to zero at `total_steps`.
double lr_schedule(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_fraction = 0.10);

struct AdamWState {
    MLPParams m;
    MLPParams v;
    std::size_t step = 0;

    static AdamWState for_params(const MLPParams & params);
};

struct AdamWHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay (params *= 1 - lr * wd) followed by the
// bias-corrected Adam update. Throws NumericError on a non-finite result.
void adamw_step(MLPParams & params, const MLPParams & grads, AdamWState & state, double lr, const AdamWHyper & hyper);

// Training inputs: one row of `x` per sample, aligned with `y` and `ids`.
struct TrainSet {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::string> ids;
};

// Validation inputs with correctness labels for AUROC-based selection.
struct ValSet {
    Eigen::MatrixXd x;
    std::vector<bool> correct;
    std::vector<std::string> ids;
};

// Joins embeddings with per-id targets. Throws InputError if any target id
// lacks an embedding. Rows follow the order of `embeddings`.
TrainSet make_train_set(const std::vector<EmbeddingRecord> & embeddings,
                        const std::unordered_map<std::string, double> & targets);
ValSet make_val_set(const std::vector<EmbeddingRecord> & embeddings,
                    const std::unordered_map<std::string, bool> & correct);

struct EpochLog {
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;       // 1-based
    std::size_t steps = 0;       // optimizer steps so far
    double train_mse = 0.0;      // eval-mode MSE on the full training set
    double val_auroc = 0.0;
    double lr_at_epoch_end = 0.0;
};

struct TrainResult {
    MLPParams params;
    std::vector<EpochLog> history;
    std::size_t best_epoch = 0;
    double best_val_auroc = 0.0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
};

TrainResult train(const TrainSet & train_set, const ValSet & val_set, const TrainConfig & config, double lr,
                  std::size_t batch_size, std::uint64_t seed);

struct GridCell {
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::optional<TrainResult> result;
    std::string error;  // set when the cell failed
};

struct GridResult {
    std::vector<GridCell> cells;
    std::size_t best = 0;  // index into cells

    const GridCell & winner() const { return cells.at(best); }
};

using CellTrainer = std::function<TrainResult(double lr, std::size_t batch_size)>;

// Trains every (lr, batch) cell and keeps the one with the highest
// validation AUROC; ties go to the smaller lr, then the smaller batch.
// A failing cell is recorded and does not abort the others; if every cell
// fails the first error is rethrown.
GridResult grid_search(const TrainConfig & config, const CellTrainer & trainer);
GridResult grid_search(const TrainSet & train_set, const ValSet & val_set, const TrainConfig & config,
                       std::uint64_t seed);

struct Prediction {
    std::string id;
    double raw = 0.0;
    double clamped = 0.0;
};

std::vector<Prediction> predict(const MLPParams & params, const std::vector<EmbeddingRecord> & embeddings);
std::string serialize_prediction(const Prediction & p);

struct Checkpoint {
    MLPParams params;
    TrainConfig config;
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path & path, const Checkpoint & checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path & path);

}  // namespace lmue
