#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmue/aggregator.hpp"
#include "lmue/errors.hpp"
#include "lmue/format.hpp"
#include "lmue/labeling.hpp"
#include "lmue/martingale.hpp"
#include "lmue/metaue.hpp"
#include "lmue/metrics.hpp"
#include "lmue/random.hpp"
#include "lmue/stream.hpp"
#include "lmue/sweep.hpp"
#include "lmue/synthetic.hpp"
#include "run_dir.hpp"

namespace lmue::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
    std::string output_dir;
    std::uint64_t seed = 0;
};

void add_common(CLI::App * sub, Common & c) {
    sub->add_option("-o,--output-dir", c.output_dir, "Run directory (created if missing)")->required();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->fallthrough();
}

// CLI11 echoes vector defaults as one quoted string, "[a,b]"; rewrite them
// as arrays so the echo reads back the same as explicitly given values.
std::string normalize_array_value(const std::string & value) {
    if (value.size() < 4 || value.front() != '"' || value[1] != '[' || value[value.size() - 2] != ']' ||
        value.back() != '"') {
        return value;
    }
    std::string out = "[";
    std::istringstream items(value.substr(2, value.size() - 4));
    std::string item;
    bool first = true;
    while (std::getline(items, item, ',')) {
        if (!first) out += ", ";
        first = false;
        char * end = nullptr;
        std::strtod(item.c_str(), &end);
        const bool numeric = !item.empty() && end == item.c_str() + item.size();
        out += numeric ? item : "\"" + item + "\"";
    }
    return out + "]";
}

// Resolved options of the subcommand as a config file that --config accepts
// ("subcommand.key=value" lines). The output directory is left out so reruns
// into different directories compare equal.
std::string config_echo(const CLI::App * sub) {
    std::istringstream in(sub->get_parent()->config_to_str(true, false));
    const std::string prefix = sub->get_name() + ".";
    std::string out;
    std::string line;
    while (std::getline(in, line)) {
        const auto key = line.substr(0, line.find('='));
        if (key.rfind(prefix, 0) != 0 || key == prefix + "output-dir") continue;
        if (key.size() < line.size()) line = key + "=" + normalize_array_value(line.substr(key.size() + 1));
        out += line;
        out += '\n';
    }
    return out;
}

std::unordered_map<std::string, bool> read_correct_map(const fs::path & path) {
    std::unordered_map<std::string, bool> out;
    for (const auto & l : read_labels(path)) {
        if (!out.emplace(l.record_id, l.correct).second) {
            throw InputError(path.string() + ": duplicate label for id '" + l.record_id + "'");
        }
    }
    return out;
}

// Labels from a file, or computed from the records' references.
std::unordered_map<std::string, bool> resolve_correct(const std::vector<GenerationRecord> & records,
                                                      const std::string & labels_path, double threshold) {
    if (!labels_path.empty()) return read_correct_map(labels_path);
    std::unordered_map<std::string, bool> out;
    for (const auto & r : records) out[r.id] = label(r, threshold).correct;
    return out;
}

// ---------------------------------------------------------------- gen-synthetic

struct GenOpts {
    Common c;
    SyntheticSpec spec;
};

void cmd_gen_synthetic(const GenOpts & o, const CLI::App * sub) {
    SyntheticSpec spec = o.spec;
    spec.seed = o.c.seed;
    const auto corpus = generate_synthetic(spec);

    RunDir run(o.c.output_dir, "gen-synthetic");
    SplitManifest manifest;
    const std::pair<const char *, const SyntheticSplit *> splits[] = {
        {"train", &corpus.train}, {"val", &corpus.val}, {"test", &corpus.test}};
    for (const auto & [name, split] : splits) {
        const std::string file = std::string(name) + ".jsonl";
        {
            auto out = run.open(file);
            write_split(out, split->records);
        }
        std::optional<fs::path> emb_file;
        if (spec.embed_dim > 0) {
            emb_file = "embeddings_" + std::string(name) + ".jsonl";
            auto out = run.open(emb_file->string());
            for (const auto & e : split->embeddings) out << serialize_embedding(e) << '\n';
        }
        if (std::string_view(name) == "train") {
            manifest.train_path = file;
            manifest.train_embeddings = emb_file;
        } else if (std::string_view(name) == "val") {
            manifest.val_path = file;
            manifest.val_embeddings = emb_file;
        } else {
            manifest.test_path = file;
            manifest.test_embeddings = emb_file;
        }
    }
    write_manifest(run.output_path("splits.json"), manifest);
    run.finish(config_echo(sub));
    std::cout << "wrote " << corpus.train.records.size() << "/" << corpus.val.records.size() << "/"
              << corpus.test.records.size() << " train/val/test records to " << run.dir().string() << "\n";
}

// ---------------------------------------------------------------- score

struct ScoreOpts {
    Common c;
    std::string input;
    std::string scorer = "logit_magnitude";
    std::string formula = "relu_l2";
    std::string mode = "early_stop";
    std::string aggregation = "auto";
    std::size_t top_m = 5;
    std::size_t window = 10;
    double fraction = 1.0;
    std::string norm;
};

void cmd_score(const ScoreOpts & o, const CLI::App * sub) {
    const auto scorer = parse_scorer(o.scorer);
    const auto formula = parse_formula(o.formula);
    StoppingConfig config;
    config.top_m = o.top_m;
    config.patience_window = o.window;
    config.mode = parse_stop_mode(o.mode);
    config.fraction = o.fraction;
    if (o.aggregation == "auto") {
        config.aggregation = scorer == TokenScorer::logit_magnitude ? SequenceAggregation::top_m_mean
                                                                    : SequenceAggregation::prefix_mean;
    } else {
        config.aggregation = parse_aggregation(o.aggregation);
    }
    config.validate();

    std::vector<ScoredSequence> scored;
    auto in = open_input(o.input);
    for_each_record(in, [&](GenerationRecord && record, std::size_t n) {
        try {
            scored.push_back(run_stream(record, config, scorer, formula));
        } catch (const InputError & e) {
            throw InputError(e.what(), n);
        }
    });
    if (scored.empty()) {
        throw InputError(o.input + ": no records");
    }

    RunDir run(o.c.output_dir, "score");
    run.add_input(o.input);
    NormStats stats;
    if (!o.norm.empty()) {
        stats = read_norm_stats(o.norm);
        run.add_input(o.norm);
    } else {
        std::vector<double> raw;
        for (const auto & s : scored) raw.push_back(s.raw_score);
        stats = fit_minmax(raw);
    }
    {
        auto out = run.open("scores.jsonl");
        for (auto & s : scored) {
            s.norm_score = normalize(s.raw_score, stats);
            out << serialize_scored(s) << '\n';
        }
    }
    run.write("norm_stats.json", serialize_norm_stats(stats) + "\n");
    run.finish(config_echo(sub));

    double tokens = 0.0;
    for (const auto & s : scored) tokens += static_cast<double>(s.tokens_consumed);
    std::cout << "scored " << scored.size() << " records, mean tokens consumed "
              << format_double(tokens / static_cast<double>(scored.size())) << "\n";
}

// ---------------------------------------------------------------- label

struct LabelOpts {
    Common c;
    std::string input;
    double threshold = kDefaultRougeThreshold;
    double beta = 1.0;
    bool skip_unlabeled = false;
};

void cmd_label(const LabelOpts & o, const CLI::App * sub) {
    if (!(o.beta > 0.0)) throw std::invalid_argument("beta must be positive");
    std::vector<LabeledRecord> labels;
    std::size_t skipped = 0;
    auto in = open_input(o.input);
    for_each_record(in, [&](GenerationRecord && record, std::size_t n) {
        if (!record.reference) {
            if (o.skip_unlabeled) {
                ++skipped;
                return;
            }
            throw InputError("record has no reference", n, record.id);
        }
        labels.push_back(label(record, o.threshold, o.beta));
    });

    RunDir run(o.c.output_dir, "label");
    run.add_input(o.input);
    std::size_t n_correct = 0;
    {
        auto out = run.open("labels.jsonl");
        for (const auto & l : labels) {
            out << serialize_label(l) << '\n';
            n_correct += l.correct ? 1 : 0;
        }
    }
    ojson summary;
    summary["n_labeled"] = labels.size();
    summary["n_correct"] = n_correct;
    summary["n_skipped"] = skipped;
    run.write("label_summary.json", summary.dump(2) + "\n");
    run.finish(config_echo(sub));
    std::cout << "labeled " << labels.size() << " records (" << n_correct << " correct, " << skipped
              << " skipped without reference)\n";
}

// ---------------------------------------------------------------- evaluate

struct ScoreRow {
    std::string id;
    double score = 0.0;
    std::optional<std::size_t> tau;
};

// Reads a scored-sequence or prediction file. "auto" picks raw_score, then
// score_clamped.
std::vector<ScoreRow> read_score_rows(const fs::path & path, const std::string & field) {
    std::vector<ScoreRow> rows;
    std::unordered_set<std::string> seen;
    auto in = open_input(path);
    for_each_jsonl_line(in, [&](std::string_view line, std::size_t n) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception & e) {
            throw InputError(path.string() + ": malformed JSON: " + e.what(), n);
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
            throw InputError(path.string() + ": missing string field 'id'", n);
        }
        ScoreRow row;
        row.id = j["id"].get<std::string>();
        std::string key = field;
        if (key == "auto") key = j.contains("raw_score") ? "raw_score" : "score_clamped";
        if (!j.contains(key) || !j[key].is_number()) {
            throw InputError(path.string() + ": missing numeric field '" + key + "'", n, row.id);
        }
        row.score = j[key].get<double>();
        if (!std::isfinite(row.score)) {
            throw InputError(path.string() + ": non-finite score", n, row.id);
        }
        if (j.contains("tokens_consumed") && j["tokens_consumed"].is_number_unsigned()) {
            row.tau = j["tokens_consumed"].get<std::size_t>();
        }
        if (!seen.insert(row.id).second) {
            throw InputError(path.string() + ": duplicate id", n, row.id);
        }
        rows.push_back(std::move(row));
    });
    if (rows.empty()) {
        throw InputError(path.string() + ": no scores");
    }
    return rows;
}

std::vector<EvalSample> join_labels(const std::vector<ScoreRow> & rows,
                                    const std::unordered_map<std::string, bool> & correct, const fs::path & where) {
    std::vector<EvalSample> out;
    out.reserve(rows.size());
    std::size_t unmatched = 0;
    std::string first_unmatched;
    for (const auto & r : rows) {
        auto it = correct.find(r.id);
        if (it == correct.end()) {
            if (unmatched++ == 0) first_unmatched = r.id;
            continue;
        }
        out.push_back({r.score, it->second, r.tau});
    }
    if (unmatched > 0) {
        throw InputError(where.string() + ": " + std::to_string(unmatched) + " of " + std::to_string(rows.size()) +
                             " ids have no label (first: '" + first_unmatched + "')");
    }
    return out;
}

ojson summary_json(const MetricSummary & m) {
    ojson j;
    j["value"] = m.value;
    j["mean"] = m.mean;
    j["std"] = m.std;
    j["redrawn"] = m.redrawn;
    return j;
}

ojson report_json(const MetricsReport & r) {
    ojson j;
    j["auroc"] = summary_json(r.auroc);
    j["aurac"] = summary_json(r.aurac);
    j["bal_acc"] = summary_json(r.bal_acc);
    j["n_tok"] = r.n_tok ? ojson(*r.n_tok) : ojson(nullptr);
    j["threshold"] = std::isfinite(r.threshold) ? ojson(r.threshold) : ojson(format_double(r.threshold));
    j["B"] = r.resamples;
    j["seed"] = r.seed;
    j["n_test"] = r.n_test;
    j["n_val"] = r.n_val;
    return j;
}

struct EvalOpts {
    Common c;
    std::vector<std::string> scores;
    std::string labels;
    std::vector<std::string> val_scores;
    std::string val_labels;
    std::size_t bootstrap = 1000;
    std::string field = "auto";
};

void cmd_evaluate(const EvalOpts & o, const CLI::App * sub) {
    if (o.scores.size() != o.val_scores.size()) {
        throw InputError("--input and --val-scores must be given the same number of times");
    }
    if (o.bootstrap == 0) throw std::invalid_argument("bootstrap needs B >= 1");
    const auto test_correct = read_correct_map(o.labels);
    const auto val_correct = read_correct_map(o.val_labels);

    RunDir run(o.c.output_dir, "evaluate");
    std::vector<MetricsReport> reports;
    for (std::size_t i = 0; i < o.scores.size(); ++i) {
        const auto test = join_labels(read_score_rows(o.scores[i], o.field), test_correct, o.scores[i]);
        const auto val = join_labels(read_score_rows(o.val_scores[i], o.field), val_correct, o.val_scores[i]);
        reports.push_back(evaluate(test, val, o.bootstrap, o.c.seed));
        run.add_input(o.scores[i]);
        run.add_input(o.val_scores[i]);
    }
    run.add_input(o.labels);
    run.add_input(o.val_labels);

    ojson out;
    if (reports.size() == 1) {
        out = report_json(reports.front());
    } else {
        // Spread across runs (e.g. training seeds) of the full-set values.
        auto across = [&](auto get) {
            double mean = 0.0;
            for (const auto & r : reports) mean += get(r);
            mean /= static_cast<double>(reports.size());
            double var = 0.0;
            for (const auto & r : reports) var += (get(r) - mean) * (get(r) - mean);
            ojson j;
            j["mean"] = mean;
            j["std"] = std::sqrt(var / static_cast<double>(reports.size()));
            return j;
        };
        out["runs"] = ojson::array();
        for (const auto & r : reports) out["runs"].push_back(report_json(r));
        out["across_runs"]["auroc"] = across([](const MetricsReport & r) { return r.auroc.value; });
        out["across_runs"]["aurac"] = across([](const MetricsReport & r) { return r.aurac.value; });
        out["across_runs"]["bal_acc"] = across([](const MetricsReport & r) { return r.bal_acc.value; });
        out["across_runs"]["n_runs"] = reports.size();
    }
    run.write("report.json", out.dump(2) + "\n");
    run.finish(config_echo(sub));

    const auto & r = reports.front();
    std::cout << "auroc " << format_double(r.auroc.value) << " aurac " << format_double(r.aurac.value) << " bal_acc "
              << format_double(r.bal_acc.value) << "\n";
}

// ---------------------------------------------------------------- train-metaue

struct TrainOpts {
    Common c;
    std::string train_embeddings;
    std::string val_embeddings;
    std::string targets;
    std::string target_field = "norm_score";
    std::string label_source = "scores";
    std::string train_labels;
    std::string val_labels;
    std::size_t replicates = 5;
    bool no_early_stopping = false;
    TrainConfig config;
};

void write_history(std::ostream & out, const std::vector<EpochLog> & rows, bool header) {
    if (header) out << "lr,batch_size,seed,epoch,steps,train_mse,val_auroc,lr_at_epoch_end\n";
    for (const auto & h : rows) {
        out << format_double(h.lr) << ',' << h.batch_size << ',' << h.seed << ',' << h.epoch << ',' << h.steps << ','
            << format_double(h.train_mse) << ',' << format_double(h.val_auroc) << ','
            << format_double(h.lr_at_epoch_end) << '\n';
    }
}

void cmd_train_metaue(const TrainOpts & o, const CLI::App * sub) {
    TrainConfig config = o.config;
    config.early_stopping = !o.no_early_stopping;
    if (o.replicates == 0) throw std::invalid_argument("need at least one replicate");
    config.seeds.clear();
    for (std::size_t r = 0; r < o.replicates; ++r) config.seeds.push_back(o.c.seed + r);
    config.validate();

    RunDir run(o.c.output_dir, "train-metaue");
    std::unordered_map<std::string, double> targets;
    if (o.label_source == "scores") {
        if (o.targets.empty()) throw InputError("--targets is required with --label-source scores");
        if (o.target_field != "norm_score" && o.target_field != "raw_score") {
            throw std::invalid_argument("target field must be norm_score or raw_score");
        }
        for (const auto & s : read_scored(o.targets)) {
            double y = s.raw_score;
            if (o.target_field == "norm_score") {
                if (!s.norm_score) throw InputError("score has no norm_score", std::nullopt, s.record_id);
                y = *s.norm_score;
            }
            targets[s.record_id] = y;
        }
        run.add_input(o.targets);
    } else if (o.label_source == "correctness") {
        if (o.train_labels.empty()) throw InputError("--train-labels is required with --label-source correctness");
        for (const auto & [id, ok] : read_correct_map(o.train_labels)) targets[id] = ok ? 0.0 : 1.0;
        run.add_input(o.train_labels);
    } else {
        throw std::invalid_argument("label source must be 'scores' or 'correctness'");
    }

    const auto train_emb = read_embeddings(o.train_embeddings);
    const auto val_emb = read_embeddings(o.val_embeddings);
    run.add_input(o.train_embeddings);
    run.add_input(o.val_embeddings);
    run.add_input(o.val_labels);
    const auto train_set = make_train_set(train_emb, targets);
    const auto val_set = make_val_set(val_emb, read_correct_map(o.val_labels));

    const auto grid = grid_search(train_set, val_set, config, config.seeds.front());
    const auto & win = grid.winner();

    {
        auto out = run.open("history.csv");
        bool header = true;
        for (const auto & cell : grid.cells) {
            if (!cell.result) continue;
            write_history(out, cell.result->history, header);
            header = false;
        }
        if (header) write_history(out, {}, true);
    }
    ojson g;
    g["cells"] = ojson::array();
    for (const auto & cell : grid.cells) {
        ojson c;
        c["lr"] = cell.lr;
        c["batch_size"] = cell.batch_size;
        if (cell.result) {
            c["best_val_auroc"] = cell.result->best_val_auroc;
            c["best_epoch"] = cell.result->best_epoch;
            c["epochs_run"] = cell.result->epochs_run;
            c["stopped_early"] = cell.result->stopped_early;
        } else {
            c["error"] = cell.error;
        }
        g["cells"].push_back(c);
    }
    g["winner"] = {{"lr", win.lr}, {"batch_size", win.batch_size}};
    g["seeds"] = config.seeds;

    Checkpoint ckpt{win.result->params, config, win.lr, win.batch_size, config.seeds.front()};
    save_checkpoint(run.output_path("checkpoint.json"), ckpt);

    // Further seeds retrain the winning cell.
    std::vector<EpochLog> replicate_history;
    g["replicates"] = ojson::array();
    g["replicates"].push_back({{"seed", config.seeds.front()},
                               {"checkpoint", "checkpoint.json"},
                               {"best_val_auroc", win.result->best_val_auroc}});
    for (std::size_t r = 1; r < config.seeds.size(); ++r) {
        const auto seed = config.seeds[r];
        auto result = train(train_set, val_set, config, win.lr, win.batch_size, seed);
        const std::string name = "checkpoint_seed" + std::to_string(seed) + ".json";
        save_checkpoint(run.output_path(name), Checkpoint{result.params, config, win.lr, win.batch_size, seed});
        replicate_history.insert(replicate_history.end(), result.history.begin(), result.history.end());
        g["replicates"].push_back({{"seed", seed}, {"checkpoint", name}, {"best_val_auroc", result.best_val_auroc}});
    }
    if (!replicate_history.empty()) {
        auto out = run.open("replicate_history.csv");
        write_history(out, replicate_history, true);
    }
    run.write("grid.json", g.dump(2) + "\n");
    run.finish(config_echo(sub));
    std::cout << "best lr " << format_double(win.lr) << " batch " << win.batch_size << " val auroc "
              << format_double(win.result->best_val_auroc) << "\n";
}

// ---------------------------------------------------------------- predict-metaue

struct PredictOpts {
    Common c;
    std::string input;
    std::string checkpoint;
};

void cmd_predict_metaue(const PredictOpts & o, const CLI::App * sub) {
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto embeddings = read_embeddings(o.input);
    const auto predictions = predict(ckpt.params, embeddings);
    RunDir run(o.c.output_dir, "predict-metaue");
    run.add_input(o.checkpoint);
    run.add_input(o.input);
    {
        auto out = run.open("predictions.jsonl");
        for (const auto & p : predictions) out << serialize_prediction(p) << '\n';
    }
    run.finish(config_echo(sub));
    std::cout << "wrote " << predictions.size() << " predictions\n";
}

// ---------------------------------------------------------------- sweep / fraction-sweep

struct SweepOpts {
    Common c;
    std::string input;
    std::string labels;
    double threshold = kDefaultRougeThreshold;
    std::string scorer = "logit_magnitude";
    std::string formula = "relu_l2";
    SweepSpec spec;
};

ScoreCache load_sweep_cache(const SweepOpts & o, RunDir & run) {
    const auto records = read_split(fs::path(o.input));
    run.add_input(o.input);
    if (!o.labels.empty()) run.add_input(o.labels);
    const auto correct = resolve_correct(records, o.labels, o.threshold);
    return build_score_cache(records, correct, parse_scorer(o.scorer), parse_formula(o.formula));
}

void cmd_sweep(const SweepOpts & o, const CLI::App * sub) {
    o.spec.validate();
    RunDir run(o.c.output_dir, "sweep");
    const auto cache = load_sweep_cache(o, run);
    const auto cells = run_mw_sweep(cache, o.spec);
    {
        auto out = run.open("mw_sweep.csv");
        write_mw_csv(out, cells);
    }
    ojson summary;
    summary["cells"] = cells.size();
    ojson full = ojson::object();
    for (auto m : o.spec.m_grid) {
        StoppingConfig config;
        config.top_m = m;
        config.mode = StopMode::full_generation;
        full[std::to_string(m)] = cache_auroc(cache, config);
    }
    summary["full_generation_auroc"] = full;
    const SweepCell * best = &cells.front();
    for (const auto & c : cells) {
        if (c.auroc > best->auroc) best = &c;
    }
    summary["best"] = {{"M", best->top_m}, {"W", best->patience_window}, {"auroc", best->auroc},
                       {"mean_tau_ratio", best->mean_tau_ratio}};
    run.write("sweep_summary.json", summary.dump(2) + "\n");
    run.finish(config_echo(sub));
    std::cout << "swept " << cells.size() << " cells; best M=" << best->top_m << " W=" << best->patience_window
              << " auroc " << format_double(best->auroc) << "\n";
}

void cmd_fraction_sweep(const SweepOpts & o, const CLI::App * sub) {
    o.spec.validate();
    RunDir run(o.c.output_dir, "fraction-sweep");
    const auto cache = load_sweep_cache(o, run);
    const auto cells = run_fraction_sweep(cache, o.spec);
    {
        auto out = run.open("fraction_sweep.csv");
        write_fraction_csv(out, cells);
    }
    run.finish(config_echo(sub));
    std::cout << "swept " << cells.size() << " cells\n";
}

// ---------------------------------------------------------------- simulate

struct SimOpts {
    Common c;
    std::size_t horizon = 32;
    std::size_t paths = 100000;
    std::vector<std::string> models{"gaussian:1", "shrinking_gaussian:1:0.8", "bernoulli_pm:1"};
    std::vector<std::string> rules{"fixed:0", "fixed:16", "fixed:32", "patience:0.5:3"};
    double eps = 1.0;
};

void cmd_simulate(const SimOpts & o, const CLI::App * sub) {
    if (o.horizon == 0 || o.paths < 2) throw std::invalid_argument("need T >= 1 and at least 2 paths");
    if (!(o.eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
    std::vector<IncrementModel> models;
    for (const auto & m : o.models) models.push_back(IncrementModel::parse(m));
    std::vector<StoppingRule> rules;
    for (const auto & r : o.rules) rules.push_back(StoppingRule::parse(r));

    RunDir run(o.c.output_dir, "simulate");
    auto csv = run.open("martingale.csv");
    write_bound_csv_header(csv);
    ojson rows = ojson::array();
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const auto paths = simulate_paths(o.horizon, models[mi], o.paths, derive_seed(o.c.seed, mi));
        for (const auto & rule : rules) {
            const auto taus = apply_stopping(paths, rule);
            const auto report = bound_report(paths, rule, taus, o.eps);
            write_bound_csv_row(csv, report);
            ojson row;
            row["model"] = report.model;
            row["rule"] = report.rule;
            row["penalty"] = report.penalty.mean;
            row["penalty_se"] = report.penalty.se;
            row["residual_qv"] = report.residual_qv.mean;
            row["residual_se"] = report.residual_qv.se;
            row["identity_holds"] = report.identity_holds;
            row["mean_remaining"] = report.mean_remaining;
            row["eps_bound"] = report.eps_bound;
            row["bound"] = report.pass_label();
            if (rule.kind == StoppingRule::Kind::fixed) {
                // Deterministic tau: the penalty is the summed variance after it.
                double expected = 0.0;
                for (std::size_t t = std::min(rule.fixed_time, o.horizon) + 1; t <= o.horizon; ++t) {
                    expected += models[mi].variance(t);
                }
                row["closed_form_penalty"] = expected;
                row["closed_form_within_3se"] = std::abs(report.penalty.mean - expected) <= 3.0 * report.penalty.se;
            }
            rows.push_back(row);
        }
    }
    csv.close();
    ojson summary;
    summary["T"] = o.horizon;
    summary["n_paths"] = o.paths;
    summary["eps"] = o.eps;
    summary["rows"] = rows;
    run.write("simulate_summary.json", summary.dump(2) + "\n");
    run.finish(config_echo(sub));
    std::cout << "simulated " << models.size() << " models x " << rules.size() << " rules\n";
}

}  // namespace

int run(const std::vector<std::string> & args) {
    CLI::App app{"Token-level uncertainty scoring with top-M logit magnitude and early stopping", "lmue"};
    app.require_subcommand(1, 1);
    app.set_config("--config", "", "TOML file with option values under [subcommand] sections; flags take precedence");

    GenOpts gen;
    auto * gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic two-population corpus");
    add_common(gen_cmd, gen.c);
    {
        auto & s = gen.spec;
        gen_cmd->add_option("-n,--n", s.n, "Number of records")->capture_default_str();
        gen_cmd->add_option("--min-length", s.min_length, "Shortest generation")->capture_default_str();
        gen_cmd->add_option("--max-length", s.max_length, "Longest generation")->capture_default_str();
        gen_cmd->add_option("-k,--k", s.k, "Logits kept per step")->capture_default_str();
        gen_cmd->add_option("-s,--separation", s.separation, "Magnitude shift of unreliable records")
            ->capture_default_str();
        gen_cmd->add_option("--unreliable-fraction", s.unreliable_fraction)->capture_default_str();
        gen_cmd->add_option("--base-magnitude", s.base_magnitude)->capture_default_str();
        gen_cmd->add_option("--token-noise", s.token_noise)->capture_default_str();
        gen_cmd->add_option("--record-noise", s.record_noise)->capture_default_str();
        gen_cmd->add_option("--eos-probability", s.eos_probability)->capture_default_str();
        gen_cmd->add_option("--train-fraction", s.train_fraction)->capture_default_str();
        gen_cmd->add_option("--val-fraction", s.val_fraction)->capture_default_str();
        gen_cmd->add_option("--embed-dim", s.embed_dim, "Embedding dimension, 0 for none")->capture_default_str();
        gen_cmd->add_option("--embed-separation", s.embed_separation)->capture_default_str();
        gen_cmd->add_option("--vocab-size", s.vocab_size)->capture_default_str();
    }

    ScoreOpts score;
    auto * score_cmd = app.add_subcommand("score", "Score generation records");
    add_common(score_cmd, score.c);
    score_cmd->add_option("-i,--input", score.input, "Generation records (JSONL)")->required();
    score_cmd->add_option("--scorer", score.scorer, "logit_magnitude | entropy | self_certainty")
        ->capture_default_str();
    score_cmd->add_option("--formula", score.formula, "relu_l2 | relu_sum")->capture_default_str();
    score_cmd->add_option("--mode", score.mode, "early_stop | full_generation | fixed_fraction")
        ->capture_default_str();
    score_cmd->add_option("--aggregation", score.aggregation, "auto | top_m_mean | prefix_mean")
        ->capture_default_str();
    score_cmd->add_option("-M,--top-m", score.top_m, "Top-M set size")->capture_default_str();
    score_cmd->add_option("-W,--patience-window", score.window, "Patience window")->capture_default_str();
    score_cmd->add_option("--fraction", score.fraction, "Prefix fraction for fixed_fraction mode")
        ->capture_default_str();
    score_cmd->add_option("--norm", score.norm, "Apply these min-max stats instead of fitting on the input");

    LabelOpts lab;
    auto * label_cmd = app.add_subcommand("label", "ROUGE-L correctness labels");
    add_common(label_cmd, lab.c);
    label_cmd->add_option("-i,--input", lab.input, "Generation records (JSONL)")->required();
    label_cmd->add_option("--threshold", lab.threshold, "Correct iff ROUGE-L exceeds this")->capture_default_str();
    label_cmd->add_option("--beta", lab.beta, "F-measure beta")->capture_default_str();
    label_cmd->add_flag("--skip-unlabeled", lab.skip_unlabeled, "Skip records without a reference");

    EvalOpts ev;
    auto * eval_cmd = app.add_subcommand("evaluate", "AUROC, AURAC and balanced accuracy with bootstrap");
    add_common(eval_cmd, ev.c);
    eval_cmd->add_option("-i,--input,--scores", ev.scores, "Test scores; repeat for several runs")->required();
    eval_cmd->add_option("--labels", ev.labels, "Test correctness labels")->required();
    eval_cmd->add_option("--val-scores", ev.val_scores, "Validation scores, one per test file")->required();
    eval_cmd->add_option("--val-labels", ev.val_labels, "Validation correctness labels")->required();
    eval_cmd->add_option("-B,--bootstrap", ev.bootstrap, "Bootstrap resamples")->capture_default_str();
    eval_cmd->add_option("--score-field", ev.field, "auto | raw_score | norm_score | score_raw | score_clamped")
        ->capture_default_str();

    TrainOpts tr;
    auto * train_cmd = app.add_subcommand("train-metaue", "Grid-search and train the MetaUE head");
    add_common(train_cmd, tr.c);
    train_cmd->add_option("-i,--input,--train-embeddings", tr.train_embeddings, "Training embeddings")->required();
    train_cmd->add_option("--val-embeddings", tr.val_embeddings, "Validation embeddings")->required();
    train_cmd->add_option("--val-labels", tr.val_labels, "Validation correctness labels")->required();
    train_cmd->add_option("--targets", tr.targets, "Scores of the training split (pseudo-labels)");
    train_cmd->add_option("--target-field", tr.target_field, "norm_score | raw_score")->capture_default_str();
    train_cmd->add_option("--label-source", tr.label_source, "scores | correctness")->capture_default_str();
    train_cmd->add_option("--train-labels", tr.train_labels, "Training correctness labels (correctness source)");
    train_cmd->add_option("--replicates", tr.replicates, "Training seeds (seed, seed+1, ...)")->capture_default_str();
    train_cmd->add_option("--lr-grid", tr.config.lr_grid)->delimiter(',')->capture_default_str();
    train_cmd->add_option("--batch-grid", tr.config.batch_grid)->delimiter(',')->capture_default_str();
    train_cmd->add_option("--max-epochs", tr.config.max_epochs)->capture_default_str();
    train_cmd->add_option("--hidden", tr.config.hidden_dim)->capture_default_str();
    train_cmd->add_option("--dropout", tr.config.dropout_rate)->capture_default_str();
    train_cmd->add_option("--weight-decay", tr.config.weight_decay)->capture_default_str();
    train_cmd->add_option("--warmup-fraction", tr.config.warmup_fraction)->capture_default_str();
    train_cmd->add_option("--patience-fraction", tr.config.early_stop_patience_fraction)->capture_default_str();
    train_cmd->add_flag("--no-early-stopping", tr.no_early_stopping);

    PredictOpts pr;
    auto * predict_cmd = app.add_subcommand("predict-metaue", "Apply a MetaUE checkpoint to embeddings");
    add_common(predict_cmd, pr.c);
    predict_cmd->add_option("-i,--input", pr.input, "Embeddings (JSONL)")->required();
    predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint written by train-metaue")->required();

    SweepOpts sw;
    auto * sweep_cmd = app.add_subcommand("sweep", "AUROC over the (M, W) grid");
    SweepOpts fs_opts;
    auto * fsweep_cmd = app.add_subcommand("fraction-sweep", "AUROC over (prefix fraction, M)");
    for (auto [cmd, o] : {std::pair{sweep_cmd, &sw}, std::pair{fsweep_cmd, &fs_opts}}) {
        add_common(cmd, o->c);
        cmd->add_option("-i,--input", o->input, "Generation records, usually the validation split")->required();
        cmd->add_option("--labels", o->labels, "Correctness labels; computed from references if absent");
        cmd->add_option("--threshold", o->threshold, "ROUGE-L threshold when labeling inline")->capture_default_str();
        cmd->add_option("--scorer", o->scorer)->capture_default_str();
        cmd->add_option("--formula", o->formula)->capture_default_str();
        cmd->add_option("--m-grid", o->spec.m_grid)->delimiter(',')->capture_default_str();
    }
    sweep_cmd->add_option("--w-grid", sw.spec.w_grid)->delimiter(',')->capture_default_str();
    fsweep_cmd->add_option("--fractions", fs_opts.spec.fraction_grid)->delimiter(',')->capture_default_str();

    SimOpts sim;
    auto * sim_cmd = app.add_subcommand("simulate", "Monte Carlo check of the early-stopping penalty");
    add_common(sim_cmd, sim.c);
    sim_cmd->add_option("-T,--horizon", sim.horizon, "Path length")->capture_default_str();
    sim_cmd->add_option("--paths", sim.paths, "Number of paths")->capture_default_str();
    sim_cmd->add_option("--model", sim.models, "gaussian:S | shrinking_gaussian:S:D | bernoulli_pm:S")
        ->capture_default_str();
    sim_cmd->add_option("--rule", sim.rules, "fixed:TAU | patience:THRESHOLD:W")->capture_default_str();
    sim_cmd->add_option("--eps", sim.eps, "Variance bound after stopping")->capture_default_str();

    std::vector<const char *> argv;
    for (const auto & a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (gen_cmd->parsed()) cmd_gen_synthetic(gen, gen_cmd);
        else if (score_cmd->parsed()) cmd_score(score, score_cmd);
        else if (label_cmd->parsed()) cmd_label(lab, label_cmd);
        else if (eval_cmd->parsed()) cmd_evaluate(ev, eval_cmd);
        else if (train_cmd->parsed()) cmd_train_metaue(tr, train_cmd);
        else if (predict_cmd->parsed()) cmd_predict_metaue(pr, predict_cmd);
        else if (sweep_cmd->parsed()) cmd_sweep(sw, sweep_cmd);
        else if (fsweep_cmd->parsed()) cmd_fraction_sweep(fs_opts, fsweep_cmd);
        else if (sim_cmd->parsed()) cmd_simulate(sim, sim_cmd);
        return kOk;
    } catch (const InputError & e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const UndefinedMetricError & e) {
        std::cerr << "undefined metric: " << e.what() << "\n";
        return kUndefinedMetric;
    } catch (const NumericError & e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::invalid_argument & e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace lmue::cli
