#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "opsd/checkpoint.hpp"
#include "opsd/eval.hpp"
#include "opsd/metrics.hpp"
#include "opsd/optim.hpp"
#include "opsd/trainer.hpp"

using namespace opsd;

namespace {

lm::ModelConfig tiny_config() {
    lm::ModelConfig c;
    c.embed_dim = 32;
    c.num_layers = 2;
    c.num_heads = 4;
    c.context_length = 96;
    c.seed = 7;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("learning-rate schedule endpoints and midpoints") {
    optim::LrSchedule s{1e-3, 100, 0.1};
    CHECK(optim::lr_at(10.0, s) == doctest::Approx(1e-3).epsilon(1e-12));   // warmup endpoint
    CHECK(optim::lr_at(5.0, s) == doctest::Approx(0.5e-3).epsilon(1e-12));  // warmup is linear
    CHECK(optim::lr_at(100.0, s) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(optim::lr_at(55.0, s) == doctest::Approx(0.5e-3).epsilon(1e-12));  // cosine midpoint
    CHECK(optim::lr_at(0.0, s) == 0.0);

    optim::LrSchedule no_warmup{2.0, 10, 0.0};
    CHECK(optim::lr_at(0.0, no_warmup) == doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_AS(optim::lr_at(-1.0, s), std::invalid_argument);
    CHECK_THROWS_AS(optim::lr_at(101.0, s), std::invalid_argument);
    CHECK_THROWS_AS(optim::lr_at(0.0, optim::LrSchedule{1.0, 0, 0.1}), std::invalid_argument);
}

TEST_CASE("adamw: no-op on zero gradients, descent, bias correction, nan rejection") {
    lm::ParameterSet<double> p{{"x", Tensor<double>::full({1}, 1.0)}};
    lm::ParameterSet<double> zero{{"x", Tensor<double>::zeros({1})}};

    optim::AdamW<double> opt;
    auto before = p.at("x")[0];
    opt.step(p, zero, 0.1);
    CHECK(p.at("x")[0] == before);  // bitwise: zero grad, zero decay

    // one step on f(x) = x^2 from x = 1 shrinks |x|
    optim::AdamW<double> opt2;
    lm::ParameterSet<double> q{{"x", Tensor<double>::full({1}, 1.0)}};
    lm::ParameterSet<double> g{{"x", Tensor<double>::full({1}, 2.0)}};  // f'(1)
    opt2.step(q, g, 0.1);
    CHECK(std::abs(q.at("x")[0]) < 1.0);

    // bias-corrected first step has magnitude ~lr for a unit gradient
    optim::AdamW<double> opt3;
    lm::ParameterSet<double> r{{"x", Tensor<double>::zeros({1})}};
    lm::ParameterSet<double> unit{{"x", Tensor<double>::full({1}, 1.0)}};
    opt3.step(r, unit, 1e-3);
    CHECK(std::abs(r.at("x")[0]) == doctest::Approx(1e-3).epsilon(1e-6));

    optim::AdamW<double> opt4;
    lm::ParameterSet<double> nan_g{{"x", Tensor<double>::full({1}, std::nan(""))}};
    try {
        opt4.step(p, nan_g, 0.1);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("x") != std::string::npos);
    }

    // decoupled weight decay shrinks parameters even with zero gradient
    optim::AdamW<double> opt5;
    opt5.cfg.weight_decay = 0.1;
    lm::ParameterSet<double> w{{"x", Tensor<double>::full({1}, 1.0)}};
    opt5.step(w, zero, 0.5);
    CHECK(w.at("x")[0] == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("train config validation names the offending field") {
    trainer::TrainConfig tc;
    tc.method = "bogus";
    try {
        tc.validate();
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("method") != std::string::npos);
    }
    tc = {};
    tc.method = "grpo";
    tc.generations_per_prompt = 1;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = {};
    tc.warmup_ratio = 1.0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = {};
    tc.jsd_beta = 1.0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = {};
    tc.resume = true;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("sft overfits a small dataset and prompt tokens carry no loss") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(3, 8, 1, 1);
    trainer::TrainConfig tc;
    tc.method = "sft";
    tc.learning_rate = 3e-3;
    tc.total_steps = 60;
    tc.effective_batch_size = 8;
    tc.seed = 1;
    tc.metrics_path = "test_trainer_sft.csv";
    auto result = trainer::train(cfg, tc, ds);

    auto rows = metrics::load_metrics(tc.metrics_path);
    REQUIRE(static_cast<int>(rows.size()) == tc.total_steps);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) {
        early += rows[i].loss;
        late += rows[rows.size() - 10 + i].loss;
    }
    CHECK(late < early);  // moving-average descent in the overfit regime
    for (const auto& r : rows) {
        CHECK(r.method == "sft");
        CHECK(r.cumulative_generated_tokens == 0);  // SFT samples nothing
        CHECK(r.wallclock_seconds == 0.0);
    }
    CHECK(result.cumulative_tokens == 0);
    std::remove(tc.metrics_path.c_str());
}

TEST_CASE("training twice with one config gives byte-identical metrics") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(5, 12, 1, 2);
    trainer::TrainConfig tc;
    tc.method = "opsd_full";
    tc.learning_rate = 1e-3;
    tc.total_steps = 4;
    tc.effective_batch_size = 2;
    tc.max_completion_length = 16;
    tc.seed = 2;
    tc.metrics_path = "test_trainer_repro_a.csv";
    auto a = trainer::train(cfg, tc, ds);
    tc.metrics_path = "test_trainer_repro_b.csv";
    auto b = trainer::train(cfg, tc, ds);
    CHECK(slurp("test_trainer_repro_a.csv") != "");
    CHECK(slurp("test_trainer_repro_a.csv") == slurp("test_trainer_repro_b.csv"));
    CHECK(lm::params_hash(a.params) == lm::params_hash(b.params));
    CHECK(a.cumulative_tokens == b.cumulative_tokens);
    CHECK(a.cumulative_tokens > 0);
    std::remove("test_trainer_repro_a.csv");
    std::remove("test_trainer_repro_b.csv");
}

TEST_CASE("opsd teacher is the frozen initial policy") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(9, 10, 1, 1);
    trainer::TrainConfig tc;
    tc.method = "opsd_sampled";
    tc.learning_rate = 1e-3;
    tc.total_steps = 3;
    tc.effective_batch_size = 2;
    tc.max_completion_length = 16;
    tc.seed = 3;
    auto result = trainer::train(cfg, tc, ds);
    auto init = lm::init_params<float>(cfg);
    CHECK(result.teacher_hash == lm::params_hash(init));
    CHECK(lm::params_hash(result.params) != result.teacher_hash);  // student moved
}

TEST_CASE("learning rate zero leaves parameters and eval accuracy untouched") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(11, 10, 1, 1);
    trainer::TrainConfig tc;
    tc.method = "opsd_full";
    tc.learning_rate = 0.0;
    tc.total_steps = 2;
    tc.effective_batch_size = 2;
    tc.max_completion_length = 16;
    tc.seed = 4;
    auto result = trainer::train(cfg, tc, ds);
    auto init = lm::init_params<float>(cfg);
    CHECK(lm::params_hash(result.params) == lm::params_hash(init));

    lm::SamplingParams sp;
    sp.temperature = 0.0;
    sp.max_new_tokens = 16;
    auto before = eval::evaluate(cfg, init, ds, sp, 1);
    auto after = eval::evaluate(cfg, result.params, ds, sp, 1);
    CHECK(before.accuracy == after.accuracy);
}

TEST_CASE("resume reproduces the uninterrupted run bit for bit") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(13, 16, 1, 2);
    trainer::TrainConfig tc;
    tc.method = "sft";
    tc.learning_rate = 2e-3;
    tc.total_steps = 6;
    tc.effective_batch_size = 4;
    tc.seed = 5;
    tc.metrics_path = "test_trainer_full.csv";
    tc.checkpoint_path = "test_trainer_full.ckpt";
    auto full = trainer::train(cfg, tc, ds);

    trainer::TrainConfig first = tc;
    first.stop_step = 3;
    first.metrics_path = "test_trainer_split.csv";
    first.checkpoint_path = "test_trainer_split.ckpt";
    trainer::train(cfg, first, ds);

    trainer::TrainConfig second = tc;
    second.metrics_path = "test_trainer_split.csv";
    second.checkpoint_path = "test_trainer_split2.ckpt";
    second.init_checkpoint = "test_trainer_split.ckpt";
    second.resume = true;
    auto resumed = trainer::train(cfg, second, ds);

    CHECK(slurp("test_trainer_full.csv") == slurp("test_trainer_split.csv"));
    CHECK(lm::params_hash(full.params) == lm::params_hash(resumed.params));
    for (const char* f : {"test_trainer_full.csv", "test_trainer_full.ckpt",
                          "test_trainer_split.csv", "test_trainer_split.ckpt",
                          "test_trainer_split2.ckpt"})
        std::remove(f);
}

TEST_CASE("grpo runs, rewards are binary means, and token counter grows") {
    auto cfg = tiny_config();
    auto ds = tasks::gen_dataset(15, 10, 1, 1);
    trainer::TrainConfig tc;
    tc.method = "grpo";
    tc.learning_rate = 1e-3;
    tc.total_steps = 2;
    tc.effective_batch_size = 2;
    tc.generations_per_prompt = 4;
    tc.max_completion_length = 16;
    tc.seed = 6;
    tc.metrics_path = "test_trainer_grpo.csv";
    auto result = trainer::train(cfg, tc, ds);
    auto rows = metrics::load_metrics(tc.metrics_path);
    REQUIRE(rows.size() == 2);
    long long prev = 0;
    for (const auto& r : rows) {
        CHECK(r.mean_reward >= 0.0);
        CHECK(r.mean_reward <= 1.0);
        CHECK(r.cumulative_generated_tokens > prev);
        prev = r.cumulative_generated_tokens;
    }
    CHECK(result.cumulative_tokens == rows.back().cumulative_generated_tokens);
    std::remove(tc.metrics_path.c_str());
}

TEST_CASE("empty dataset rejected") {
    tasks::Dataset empty;
    trainer::TrainConfig tc;
    CHECK_THROWS_AS(trainer::train(tiny_config(), tc, empty), std::invalid_argument);
}
