#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lmue/errors.hpp"
#include "lmue/metaue.hpp"
#include "lmue/metrics.hpp"
#include "metaue_data.hpp"
#include "oracles.hpp"

using namespace lmue;

namespace {

MLPParams unit_net() {
    MLPParams p = MLPParams::zeros(1, 1);
    p.w1(0, 0) = 1.0;
    p.w2(0) = 1.0;
    return p;
}

TrainConfig small_config() {
    TrainConfig c;
    c.hidden_dim = 32;
    c.max_epochs = 30;
    c.dropout_rate = 0.0;
    return c;
}

}  // namespace

TEST_SUITE("metaue") {

TEST_CASE("forward examples") {
    const std::vector<double> x4{0.3, -1.0, 2.0, 5.0};
    CHECK(forward(MLPParams::zeros(4, 8), x4, 0.0, false) == 0.0);

    const auto p = unit_net();
    CHECK(forward(p, std::vector<double>{0.0}, 0.0, false) == 0.0);
    CHECK(forward(p, std::vector<double>{100.0}, 0.0, false) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(forward(p, std::vector<double>{2.0}, 0.0, false) == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))));

    std::mt19937_64 rng(1);
    auto q = MLPParams::init(4, 16, rng);
    std::mt19937_64 drop(2);
    CHECK(forward(q, x4, 0.0, true, &drop) == forward(q, x4, 0.0, false));
    CHECK_THROWS_AS(forward(q, std::vector<double>{1.0, 2.0}, 0.0, false), std::invalid_argument);
    CHECK_THROWS_AS(forward(q, x4, 0.5, true, nullptr), std::invalid_argument);

    // forward_batch agrees with the single-sample path
    Eigen::MatrixXd xs(2, 4);
    xs << 0.3, -1.0, 2.0, 5.0, 1.0, 1.0, 1.0, 1.0;
    const auto batch = forward_batch(q, xs);
    CHECK(batch(0) == doctest::Approx(forward(q, x4, 0.0, false)).epsilon(1e-14));
}

TEST_CASE("dropout in training mode is inverted") {
    std::mt19937_64 rng(3);
    const auto mask = dropout_mask(200, 50, 0.2, rng);
    double kept = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        const double v = mask.data()[i];
        CHECK((v == 0.0 || v == doctest::Approx(1.25)));
        kept += v > 0;
    }
    CHECK(kept / mask.size() == doctest::Approx(0.8).epsilon(0.03));
}

TEST_CASE("mse examples") {
    CHECK(mse_loss(std::vector<double>{0.2, 0.4}, std::vector<double>{0.2, 0.4}) == 0.0);
    CHECK(mse_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 0.0}) == 0.5);
    CHECK(mse_loss(std::vector<double>{0.3}, std::vector<double>{0.7}) == doctest::Approx(0.16).epsilon(1e-15));
    CHECK_THROWS_AS(mse_loss(std::vector<double>{0.3}, std::vector<double>{0.7, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(mse_loss(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = oracle::random_grad_case(rng);
        worst = std::max(worst, oracle::gradient_check_error(c.params, c.x, c.y));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("gradients: zero error, loss scale, reported loss") {
    std::mt19937_64 rng(5);
    auto c = oracle::random_grad_case(rng);
    c.y = forward_batch(c.params, c.x);
    double loss = 1.0;
    const auto g = gradients(c.params, c.x, c.y, Eigen::MatrixXd(), loss);
    CHECK(loss == 0.0);
    CHECK(g.w1.isZero(0.0));
    CHECK(g.b1.isZero(0.0));
    CHECK(g.w2.isZero(0.0));
    CHECK(g.b2 == 0.0);

    const auto d = oracle::random_grad_case(rng);
    double l1 = 0, l2 = 0;
    const auto g1 = gradients(d.params, d.x, d.y, Eigen::MatrixXd(), l1, 1.0);
    const auto g2 = gradients(d.params, d.x, d.y, Eigen::MatrixXd(), l2, 2.0);
    CHECK(l1 == l2);
    CHECK(l1 == doctest::Approx(oracle::plain_mse(d.params, d.x, d.y)).epsilon(1e-12));
    CHECK(g2.w1 == 2.0 * g1.w1);
    CHECK(g2.b1 == 2.0 * g1.b1);
    CHECK(g2.w2 == 2.0 * g1.w2);
    CHECK(g2.b2 == 2.0 * g1.b2);

    CHECK_THROWS_AS(gradients(d.params, d.x, Eigen::VectorXd(0), Eigen::MatrixXd(), l1), std::invalid_argument);
    CHECK_THROWS_AS(gradients(d.params, d.x, d.y, Eigen::MatrixXd::Ones(1, 1), l1), std::invalid_argument);
}

TEST_CASE("gradients with a dropout mask match differences on the masked net") {
    // With a fixed mask the net is deterministic; fold the mask into w2 for
    // a single-row batch and compare.
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = oracle::random_grad_case(rng);
        c.x.conservativeResize(1, Eigen::NoChange);
        c.y.conservativeResize(1);
        const auto mask = dropout_mask(1, 3, 0.5, rng);
        double loss = 0;
        const auto gm = gradients(c.params, c.x, c.y, mask, loss);
        MLPParams folded = c.params;
        folded.w2 = c.params.w2.cwiseProduct(mask.row(0).transpose());
        double loss_f = 0;
        const auto gf = gradients(folded, c.x, c.y, Eigen::MatrixXd(), loss_f);
        CHECK(loss == doctest::Approx(loss_f).epsilon(1e-12));
        CHECK((gm.w1 - gf.w1).norm() <= 1e-12 * (1.0 + gf.w1.norm()));
        CHECK(gm.b2 == doctest::Approx(gf.b2).epsilon(1e-12));
        CHECK(oracle::gradient_check_error(folded, c.x, c.y) <= 1e-5);
    }
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_schedule(0, 100, 1e-3) == 0.0);
    CHECK(lr_schedule(5, 100, 1e-3) == doctest::Approx(5e-4));
    CHECK(lr_schedule(10, 100, 1e-3) == 1e-3);
    CHECK(lr_schedule(100, 100, 1e-3) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(lr_schedule(55, 100, 1e-3) == doctest::Approx(5e-4));
    CHECK_THROWS_AS(lr_schedule(0, 0, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(lr_schedule(11, 10, 1e-3), std::invalid_argument);

    // both branches meet at peak_lr; the schedule is continuous
    for (std::size_t total : {10u, 37u, 250u, 1000u}) {
        const auto warm = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(total)));
        CHECK(lr_schedule(warm, total, 2.0) == 2.0);
        double prev = 0.0;
        for (std::size_t s = 0; s <= total; ++s) {
            const double v = lr_schedule(s, total, 2.0);
            CHECK(std::abs(v - prev) <= 2.0 / static_cast<double>(std::max<std::size_t>(warm, 1)) + 1e-12);
            prev = v;
        }
    }
    // warmup rounds to zero steps: cosine from step 0
    CHECK(lr_schedule(0, 4, 1.0) == 1.0);
}

TEST_CASE("adamw step") {
    std::mt19937_64 rng(7);
    const auto p0 = MLPParams::init(3, 4, rng);
    const auto zero = MLPParams::zeros(3, 4);

    SUBCASE("zero gradient without decay leaves params unchanged") {
        auto p = p0;
        auto s = AdamWState::for_params(p);
        for (int i = 0; i < 5; ++i) adamw_step(p, zero, s, 1e-2, {0.9, 0.999, 1e-8, 0.0});
        CHECK(p == p0);
        CHECK(s.step == 5);
    }
    SUBCASE("zero gradient with decay scales params") {
        auto p = p0;
        auto s = AdamWState::for_params(p);
        adamw_step(p, zero, s, 0.1, {0.9, 0.999, 1e-8, 0.5});
        CHECK((p.w1 - 0.95 * p0.w1).norm() <= 1e-15);
        CHECK((p.w2 - 0.95 * p0.w2).norm() <= 1e-15);
        CHECK(p.b2 == doctest::Approx(0.95 * p0.b2).epsilon(1e-15));
    }
    SUBCASE("constant gradient moves each parameter by lr per step") {
        auto p = p0;
        auto s = AdamWState::for_params(p);
        MLPParams g = MLPParams::zeros(3, 4);
        g.w1.setConstant(0.37);
        g.b1.setConstant(-2.5);
        g.w2.setConstant(1e-3);
        g.b2 = 40.0;
        const double lr = 1e-3;
        for (int i = 0; i < 200; ++i) {
            const auto before = p;
            adamw_step(p, g, s, lr, {0.9, 0.999, 1e-8, 0.0});
            CHECK(((before.w1 - p.w1).array().abs() - lr).abs().maxCoeff() <= 1e-6 * lr);
            CHECK(((p.b1 - before.b1).array() - lr).abs().maxCoeff() <= 1e-6 * lr);
            CHECK(std::abs(before.b2 - p.b2 - lr) <= 1e-6 * lr);
        }
    }
    SUBCASE("non-finite update is reported") {
        auto p = p0;
        auto s = AdamWState::for_params(p);
        MLPParams g = MLPParams::zeros(3, 4);
        g.b2 = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(adamw_step(p, g, s, 1e-3, {}), NumericError);
    }
}

TEST_CASE("training is deterministic in the seed") {
    const auto data = oracle::constant_dataset(300, 6, 0.42, 8);
    const auto ts = make_train_set(data.embeddings, data.targets);
    const auto vs = make_val_set(data.embeddings, data.correct);
    auto cfg = small_config();
    cfg.max_epochs = 5;
    cfg.dropout_rate = 0.1;
    const auto a = train(ts, vs, cfg, 1e-3, 64, 11);
    const auto b = train(ts, vs, cfg, 1e-3, 64, 11);
    const auto c = train(ts, vs, cfg, 1e-3, 64, 12);
    CHECK(a.params == b.params);
    CHECK(a.history.size() == b.history.size());
    CHECK_FALSE(a.params == c.params);
}

TEST_CASE("constant targets converge to the constant") {
    const auto data = oracle::constant_dataset(500, 8, 0.42, 9);
    const auto ts = make_train_set(data.embeddings, data.targets);
    const auto vs = make_val_set(data.embeddings, data.correct);
    auto cfg = small_config();
    cfg.hidden_dim = 64;
    cfg.max_epochs = 100;
    cfg.keep_best = false;
    cfg.early_stopping = false;
    const auto r = train(ts, vs, cfg, 1e-2, 32, 1);
    CHECK(r.epochs_run == cfg.max_epochs);
    const auto preds = predict(r.params, data.embeddings);
    for (const auto & p : preds) CHECK(std::abs(p.raw - 0.42) <= 0.02);
    CHECK(r.history.back().train_mse <= r.history.front().train_mse);
}

TEST_CASE("linearly realizable targets are fitted") {
    const auto a = oracle::random_direction(8, 10);
    const auto train_data = oracle::linear_dataset(2000, 8, 11, "t", a);
    const auto val_data = oracle::linear_dataset(400, 8, 12, "v", a);
    const auto ts = make_train_set(train_data.embeddings, train_data.targets);
    const auto vs = make_val_set(val_data.embeddings, val_data.correct);
    // Validation AUROC saturates long before the MSE floor, so fit to the
    // end of the schedule and keep the last parameters.
    auto cfg = small_config();
    cfg.hidden_dim = 64;
    cfg.max_epochs = 100;
    cfg.keep_best = false;
    cfg.early_stopping = false;
    const auto r = train(ts, vs, cfg, 1e-2, 32, 2);
    const Eigen::VectorXd fitted = forward_batch(r.params, ts.x);
    CHECK((fitted - ts.y).squaredNorm() / static_cast<double>(ts.y.size()) <= 1e-3);
    CHECK(r.best_val_auroc >= 0.95);
}

TEST_CASE("history and early stopping bookkeeping") {
    const auto data = oracle::constant_dataset(200, 4, 0.3, 13);
    const auto ts = make_train_set(data.embeddings, data.targets);
    const auto vs = make_val_set(data.embeddings, data.correct);
    auto cfg = small_config();
    cfg.max_epochs = 40;
    const auto r = train(ts, vs, cfg, 1e-3, 64, 3);
    REQUIRE(r.history.size() == r.epochs_run);
    const std::size_t steps_per_epoch = 4;  // ceil(200 / 64)
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        CHECK(r.history[e].epoch == e + 1);
        CHECK(r.history[e].steps == (e + 1) * steps_per_epoch);
    }
    // With random labels validation AUROC plateaus, so the patience budget
    // (ceil(0.1 * 160) = 16 steps = 4 epochs) ends training early.
    if (r.stopped_early) {
        CHECK(r.epochs_run < cfg.max_epochs);
        CHECK((r.epochs_run - r.best_epoch) * steps_per_epoch >= 16);
    }
    CHECK(r.best_val_auroc == r.history[r.best_epoch - 1].val_auroc);
    for (const auto & h : r.history) CHECK(h.val_auroc <= r.best_val_auroc);
}

TEST_CASE("training input errors") {
    const auto data = oracle::constant_dataset(20, 4, 0.3, 14);
    auto targets = data.targets;
    targets["missing"] = 0.5;
    CHECK_THROWS_AS(make_train_set(data.embeddings, targets), InputError);
    auto correct = data.correct;
    correct["missing"] = true;
    CHECK_THROWS_AS(make_val_set(data.embeddings, correct), InputError);

    // single-class validation leaves AUROC undefined
    std::unordered_map<std::string, bool> all_correct;
    for (const auto & [id, c] : data.correct) all_correct[id] = true;
    const auto ts = make_train_set(data.embeddings, data.targets);
    const auto vs = make_val_set(data.embeddings, all_correct);
    CHECK_THROWS_AS(train(ts, vs, small_config(), 1e-3, 8, 1), UndefinedMetricError);
}

TEST_CASE("grid search") {
    TrainConfig cfg;
    SUBCASE("3x3 grid trains nine cells") {
        int calls = 0;
        const auto g = grid_search(cfg, [&](double lr, std::size_t batch) {
            ++calls;
            TrainResult r;
            r.best_val_auroc = lr * 100 + static_cast<double>(batch) / 1000;
            return r;
        });
        CHECK(calls == 9);
        CHECK(g.cells.size() == 9);
        CHECK(g.winner().lr == 3e-3);
        CHECK(g.winner().batch_size == 256);
    }
    SUBCASE("single cell") {
        cfg.lr_grid = {1e-3};
        cfg.batch_grid = {128};
        const auto g = grid_search(cfg, [](double, std::size_t) { return TrainResult{}; });
        CHECK(g.cells.size() == 1);
        CHECK(g.best == 0);
    }
    SUBCASE("all cells tie") {
        const auto g = grid_search(cfg, [](double, std::size_t) {
            TrainResult r;
            r.best_val_auroc = 0.8;
            return r;
        });
        CHECK(g.winner().lr == 3e-4);
        CHECK(g.winner().batch_size == 64);
    }
    SUBCASE("a failing cell is recorded, the others still run") {
        const auto g = grid_search(cfg, [](double lr, std::size_t batch) {
            if (lr == 3e-3 && batch == 64) throw NumericError("diverged");
            TrainResult r;
            r.best_val_auroc = lr == 3e-3 ? 0.9 : 0.7;
            return r;
        });
        CHECK(g.cells.size() == 9);
        CHECK(g.cells[0].error == "diverged");
        CHECK_FALSE(g.cells[0].result.has_value());
        CHECK(g.winner().lr == 3e-3);
        CHECK(g.winner().batch_size == 128);
    }
    SUBCASE("every cell failing rethrows") {
        CHECK_THROWS_AS(grid_search(cfg, [](double, std::size_t) -> TrainResult { throw NumericError("x"); }),
                        NumericError);
    }
    SUBCASE("real training over a small grid") {
        const auto data = oracle::constant_dataset(120, 4, 0.5, 15);
        const auto ts = make_train_set(data.embeddings, data.targets);
        const auto vs = make_val_set(data.embeddings, data.correct);
        TrainConfig small = small_config();
        small.max_epochs = 3;
        small.lr_grid = {1e-3, 3e-4};
        small.batch_grid = {32, 64};
        const auto g = grid_search(ts, vs, small, 4);
        CHECK(g.cells.size() == 4);
        for (const auto & c : g.cells) CHECK(c.result.has_value());
    }
}

TEST_CASE("predict") {
    const std::vector<EmbeddingRecord> embs{{"a", {1.0, 2.0}}, {"b", {-1.0, 0.5}}};
    for (const auto & p : predict(MLPParams::zeros(2, 5), embs)) {
        CHECK(p.raw == 0.0);
        CHECK(p.clamped == 0.0);
    }

    MLPParams high = MLPParams::zeros(2, 5);
    high.b2 = 1.3;
    const auto hp = predict(high, embs);
    CHECK(hp[0].raw == 1.3);
    CHECK(hp[0].clamped == 1.0);
    high.b2 = -0.2;
    CHECK(predict(high, embs)[1].clamped == 0.0);

    std::mt19937_64 rng(16);
    const auto p = MLPParams::init(2, 5, rng);
    const auto first = predict(p, embs);
    const auto second = predict(p, embs);
    CHECK(first[0].raw == second[0].raw);
    CHECK(first[1].raw == second[1].raw);
    CHECK(first[0].id == "a");

    CHECK_THROWS_AS(predict(p, {{"c", {1.0, 2.0, 3.0}}}), InputError);
    CHECK(serialize_prediction({"a", 1.3, 1.0}) == R"({"id":"a","score_clamped":1.0,"score_raw":1.3})");
}

TEST_CASE("auroc of predictions ignores clamping inside the unit interval") {
    std::mt19937_64 rng(17);
    MLPParams p = MLPParams::init(3, 4, rng);
    p.w2 *= 0.01;
    p.b2 = 0.5;
    std::vector<EmbeddingRecord> embs;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 50; ++i) embs.push_back({std::to_string(i), {normal(rng), normal(rng), normal(rng)}});
    const auto preds = predict(p, embs);
    std::vector<EvalSample> raw, clamped;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        REQUIRE(preds[i].raw >= 0.0);
        REQUIRE(preds[i].raw <= 1.0);
        raw.push_back({preds[i].raw, i % 3 == 0, std::nullopt});
        clamped.push_back({preds[i].clamped, i % 3 == 0, std::nullopt});
    }
    CHECK(auroc(raw) == auroc(clamped));
}

TEST_CASE("checkpoint round trip") {
    oracle::TempDir dir;
    std::mt19937_64 rng(18);
    Checkpoint ck;
    ck.params = MLPParams::init(3, 7, rng);
    ck.params.b2 = 0.1 + 0.2;  // not exactly representable in short decimal
    ck.config.hidden_dim = 7;
    ck.config.lr_grid = {1e-2};
    ck.config.keep_best = false;
    ck.lr = 1e-2;
    ck.batch_size = 32;
    ck.seed = 12345678901234ull;
    save_checkpoint(dir / "ck.json", ck);
    const auto back = load_checkpoint(dir / "ck.json");
    CHECK(back.params == ck.params);
    CHECK(back.lr == ck.lr);
    CHECK(back.batch_size == 32);
    CHECK(back.seed == ck.seed);
    CHECK(back.config.hidden_dim == 7);
    CHECK(back.config.lr_grid == std::vector<double>{1e-2});
    CHECK_FALSE(back.config.keep_best);

    oracle::write_file(dir / "bad.json", R"({"format":"other","version":1})");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), InputError);
    oracle::write_file(dir / "trunc.json", oracle::slurp(dir / "ck.json").substr(0, 40));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.json"), InputError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), InputError);
}

TEST_CASE("embedding files") {
    oracle::TempDir dir;
    const std::vector<EmbeddingRecord> embs{{"a", {1.0, 2.5}}, {"b", {-1.0, 0.0}}};
    {
        std::string body = R"({"_header":{"encoder":"toy"}})" "\n";
        for (const auto & e : embs) body += serialize_embedding(e) + "\n";
        oracle::write_file(dir / "ok.jsonl", body);
    }
    const auto back = read_embeddings(dir / "ok.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[1].vector == std::vector<double>{-1.0, 0.0});

    auto rejects = [&](const std::string & body, std::size_t line) {
        oracle::write_file(dir / "bad.jsonl", body);
        try {
            read_embeddings(dir / "bad.jsonl");
            FAIL("accepted: " << body);
        } catch (const InputError & e) {
            CHECK(e.line() == line);
        }
    };
    rejects("{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1]}\n", 2);
    rejects("{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"a\",\"vector\":[3,4]}\n", 2);
    rejects("{\"id\":\"a\",\"vector\":[]}\n", 1);
    rejects("{\"id\":\"a\",\"vector\":[1,\"x\"]}\n", 1);
    rejects("{\"id\":\"a\",\"vector\":[1,NaN]}\n", 1);
    rejects("{\"id\":\"a\"}\n", 1);
}

}  // TEST_SUITE
