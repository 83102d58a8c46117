#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "opsd/checkpoint.hpp"
#include "opsd/model.hpp"
#include "opsd/numerics.hpp"
#include "opsd/prompts.hpp"
#include "opsd/sampler.hpp"

using namespace opsd;
using namespace opsd::lm;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.embed_dim = 32;
    c.num_layers = 2;
    c.num_heads = 4;
    c.context_length = 96;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("init_params determinism and seed sensitivity") {
    auto c = tiny_config();
    auto a = init_params<float>(c);
    auto b = init_params<float>(c);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) CHECK(t.data == b.at(name).data);

    c.seed = 6;
    auto d = init_params<float>(c);
    bool any_diff = false;
    for (const auto& [name, t] : a)
        if (t.data != d.at(name).data) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("parameter count matches the closed-form formula") {
    for (auto cfg : {tiny_config(), ModelConfig{30, 128, 48, 3, 6, 2, 1}}) {
        auto p = init_params<float>(cfg);
        long long total = 0;
        for (const auto& [name, t] : p) total += static_cast<long long>(t.size());
        CHECK(total == param_count(cfg));
    }
}

TEST_CASE("invalid config rejected") {
    auto c = tiny_config();
    c.num_heads = 5;  // 32 % 5 != 0
    CHECK_THROWS_AS(init_params<float>(c), std::invalid_argument);
    c = tiny_config();
    c.num_layers = 0;
    CHECK_THROWS_AS(init_params<float>(c), std::invalid_argument);
}

TEST_CASE("causality: prefix rows are bit-identical under suffix edits") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    std::mt19937_64 rng(3);
    std::vector<TokenId> tokens(20);
    for (auto& t : tokens) t = static_cast<TokenId>(rng() % c.vocab_size);
    auto base = forward_logits(c, params, tokens);
    CHECK(base.rows() == 20);
    CHECK(base.cols() == c.vocab_size);
    for (int j : {5, 12, 19}) {
        auto edited = tokens;
        edited[j] = (edited[j] + 1) % c.vocab_size;
        auto out = forward_logits(c, params, edited);
        for (int r = 0; r < j; ++r)
            for (int col = 0; col < c.vocab_size; ++col) CHECK(out.at(r, col) == base.at(r, col));
        bool row_changed = false;
        for (int col = 0; col < c.vocab_size; ++col)
            if (out.at(j, col) != base.at(j, col)) row_changed = true;
        CHECK(row_changed);
    }
    CHECK_THROWS_AS(forward_logits(c, params, std::vector<TokenId>(c.context_length + 1, 0)),
                    std::invalid_argument);
}

TEST_CASE("incremental session matches full forward bit for bit") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    std::mt19937_64 rng(4);
    std::vector<TokenId> tokens(24);
    for (auto& t : tokens) t = static_cast<TokenId>(rng() % c.vocab_size);
    auto full = forward_logits(c, params, tokens);
    InferenceSession<float> session(c, params);
    for (int i = 0; i < 24; ++i) {
        auto row = session.step(tokens[i]);
        for (int j = 0; j < c.vocab_size; ++j) CHECK(row[j] == full.at(i, j));
    }
}

TEST_CASE("sampling: determinism, greedy limit, and no-op filters") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    std::vector<TokenId> ctx{vocab::PROB, 1, 2, vocab::ANS};

    SamplingParams sp;
    sp.max_new_tokens = 16;
    sp.seed = 42;
    auto a = sample(c, params, ctx, sp);
    auto b = sample(c, params, ctx, sp);
    CHECK(a.tokens == b.tokens);
    CHECK(a.log_probs == b.log_probs);
    CHECK(a.prompt_token_count == 4);
    REQUIRE(!a.tokens.empty());
    for (double lp : a.log_probs) CHECK(lp <= 0.0);

    // temperature 0 and top_k=1 both reproduce greedy argmax
    SamplingParams greedy = sp;
    greedy.temperature = 0.0;
    auto g1 = sample(c, params, ctx, greedy);
    SamplingParams topk1 = sp;
    topk1.top_k = 1;
    auto g2 = sample(c, params, ctx, topk1);
    CHECK(g1.tokens == g2.tokens);

    InferenceSession<float> session(c, params);
    std::vector<float> logits;
    for (TokenId t : ctx) logits = session.step(t);
    int argmax = 0;
    for (int j = 1; j < c.vocab_size; ++j)
        if (logits[j] > logits[argmax]) argmax = j;
    CHECK(g1.tokens[0] == argmax);

    // unfiltered settings leave the distribution untouched
    SamplingParams raw = sp;
    raw.top_p = 1.0;
    raw.top_k = c.vocab_size;
    raw.min_p = 0.0;
    auto dist = filtered_distribution(logits.data(), c.vocab_size, raw);
    std::vector<float> ls(c.vocab_size);
    kernels::log_softmax_row(logits.data(), ls.data(), c.vocab_size);
    for (int j = 0; j < c.vocab_size; ++j)
        CHECK(dist[j] == doctest::Approx(std::exp(static_cast<double>(ls[j]))).epsilon(1e-6));
}

TEST_CASE("filter pipeline: top_k, top_p, min_p") {
    std::vector<float> logits{2.0f, 1.0f, 0.0f, -1.0f};
    SamplingParams sp;
    sp.top_k = 2;
    auto d = filtered_distribution(logits.data(), 4, sp);
    CHECK(d[2] == 0.0);
    CHECK(d[3] == 0.0);
    CHECK(d[0] + d[1] == doctest::Approx(1.0));
    CHECK(d[0] / d[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));

    SamplingParams nucleus;
    nucleus.top_p = 0.7;  // top prob ~0.64 -> needs two tokens to reach 0.7
    auto d2 = filtered_distribution(logits.data(), 4, nucleus);
    CHECK(d2[0] > 0.0);
    CHECK(d2[1] > 0.0);
    CHECK(d2[2] == 0.0);

    SamplingParams minp;
    minp.min_p = 0.5;  // cutoff at half the max prob
    auto d3 = filtered_distribution(logits.data(), 4, minp);
    CHECK(d3[0] > 0.0);
    CHECK(d3[1] == 0.0);

    CHECK_THROWS_AS([&] { SamplingParams bad; bad.top_p = 0.0; bad.validate(); }(),
                    std::invalid_argument);
    CHECK_THROWS_AS([&] { SamplingParams bad; bad.temperature = -1.0; bad.validate(); }(),
                    std::invalid_argument);
}

TEST_CASE("recorded log-probs equal re-scoring through the full forward") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    std::vector<TokenId> ctx{vocab::PROB, 3, 11, 4, vocab::ANS};
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        SamplingParams sp;
        sp.max_new_tokens = 20;
        sp.seed = seed;
        sp.temperature = 0.9;
        sp.top_p = 0.95;
        auto traj = sample(c, params, ctx, sp);
        auto rescored = rescore_log_probs(c, params, ctx, traj, sp);
        REQUIRE(rescored.size() == traj.log_probs.size());
        for (std::size_t i = 0; i < rescored.size(); ++i)
            CHECK(std::abs(rescored[i] - traj.log_probs[i]) < 1e-5);
    }
}

TEST_CASE("context budget enforced") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    SamplingParams sp;
    sp.max_new_tokens = c.context_length;
    CHECK_THROWS_AS(sample(c, params, {0, 1}, sp), std::invalid_argument);
    CHECK_THROWS_AS(sample(c, params, {}, sp), std::invalid_argument);
}

TEST_CASE("weight sharing: teacher context equal to student context gives equal rows") {
    auto c = tiny_config();
    auto params = init_params<float>(c);
    auto student = prompts::build_student_context("12+7");
    auto a = forward_logits(c, params, student);
    auto b = forward_logits(c, params, student);  // "teacher" with the same tokens
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    auto c = tiny_config();
    Checkpoint ck;
    ck.config = c;
    ck.step = 1234;
    ck.arrays = init_params<float>(c);
    std::string path = "test_lm_ckpt.bin";
    save_checkpoint(path, ck);
    auto back = load_checkpoint(path);
    CHECK(back.config == c);
    CHECK(back.step == 1234);
    REQUIRE(back.arrays.size() == ck.arrays.size());
    for (const auto& [name, t] : ck.arrays) {
        CHECK(back.arrays.at(name).shape == t.shape);
        CHECK(back.arrays.at(name).data == t.data);
    }
    CHECK(params_hash(back.arrays) == params_hash(ck.arrays));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}
