#include "opsd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>

#include "opsd/checkpoint.hpp"
#include "opsd/eval.hpp"
#include "opsd/metrics.hpp"
#include "opsd/objectives.hpp"
#include "opsd/optim.hpp"
#include "opsd/prompts.hpp"
#include "opsd/sampler.hpp"

namespace opsd::trainer {

namespace {

using objectives::LossResult;
using Params = lm::ParameterSet<float>;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t step, std::uint64_t lane,
                          std::uint64_t idx) {
    return tasks::mix64(base ^ tasks::mix64(step * 0x9E3779B97F4A7C15ull + lane * 0x100000001B3ull +
                                            idx));
}

double unit_uniform(std::uint64_t seed) {
    return static_cast<double>(tasks::mix64(seed) >> 11) * 0x1.0p-53;
}

bool is_empty_rollout(const lm::Trajectory& t) {
    return t.tokens.empty() || (t.tokens.size() == 1 && t.tokens[0] == vocab::EOS);
}

void add_scaled(Params& into, const Params& grads, float scale) {
    for (const auto& [name, g] : grads) {
        auto it = into.find(name);
        if (it == into.end()) {
            Tensor<float> t = g;
            for (auto& v : t.data) v *= scale;
            into.emplace(name, std::move(t));
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i] * scale;
        }
    }
}

}  // namespace

void TrainConfig::validate() const {
    static const std::set<std::string> methods{"sft", "grpo", "opsd_full", "opsd_sampled"};
    if (!methods.count(method)) throw std::invalid_argument("method: unknown value '" + method + "'");
    if (learning_rate < 0.0) throw std::invalid_argument("learning_rate: must be nonnegative");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
        throw std::invalid_argument("warmup_ratio: must be in [0,1)");
    if (total_steps < 1) throw std::invalid_argument("total_steps: must be positive");
    if (effective_batch_size < 1) throw std::invalid_argument("effective_batch_size: must be positive");
    if (method == "grpo" && generations_per_prompt < 2)
        throw std::invalid_argument("generations_per_prompt: GRPO needs at least 2");
    if (generations_per_prompt < 1)
        throw std::invalid_argument("generations_per_prompt: must be positive");
    if (max_completion_length < 1)
        throw std::invalid_argument("max_completion_length: must be positive");
    if (temperature < 0.0) throw std::invalid_argument("temperature: must be nonnegative");
    (void)objectives::divergence_from_string(divergence);
    if (jsd_beta <= 0.0 || jsd_beta >= 1.0)
        throw std::invalid_argument("jsd_beta: must be in (0,1)");
    if (clip_eps <= 0.0) throw std::invalid_argument("clip_eps: must be positive");
    if (kl_coef < 0.0) throw std::invalid_argument("kl_coef: must be nonnegative");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay: must be nonnegative");
    if (sft_teacher_fraction < 0.0 || sft_teacher_fraction > 1.0)
        throw std::invalid_argument("sft_teacher_fraction: must be in [0,1]");
    if (eval_every < 0) throw std::invalid_argument("eval_every: must be nonnegative");
    if (eval_samples_per_prompt < 1)
        throw std::invalid_argument("eval_samples_per_prompt: must be positive");
    if (eval_temperature < 0.0) throw std::invalid_argument("eval_temperature: must be nonnegative");
    if (resume && init_checkpoint.empty())
        throw std::invalid_argument("resume: requires init_checkpoint");
    if (stop_step < 0 || stop_step > total_steps)
        throw std::invalid_argument("stop_step: must be in [0, total_steps]");
}

TrainResult train(const lm::ModelConfig& cfg, const TrainConfig& tc,
                  const tasks::Dataset& train_ds, const tasks::Dataset* eval_ds) {
    cfg.validate();
    tc.validate();
    if (train_ds.instances.empty()) throw std::invalid_argument("train: empty dataset");
    const bool is_opsd = tc.method == "opsd_full" || tc.method == "opsd_sampled";
    const auto divergence = objectives::divergence_from_string(tc.divergence);

    Params params;
    optim::AdamW<float> opt;
    opt.cfg.weight_decay = tc.weight_decay;
    int start_step = 0;
    long long cumulative_tokens = 0;
    if (!tc.init_checkpoint.empty()) {
        auto ck = lm::load_checkpoint(tc.init_checkpoint);
        if (!(ck.config == cfg))
            throw std::invalid_argument("init_checkpoint: model config mismatch");
        for (const auto& [name, t] : ck.arrays) {
            if (name.rfind("opt.", 0) == 0) continue;
            params[name] = t;
        }
        if (tc.resume) {
            start_step = static_cast<int>(ck.step);
            for (const auto& [name, t] : ck.arrays) {
                if (name.rfind("opt.m.", 0) == 0) opt.m[name.substr(6)] = t;
                else if (name.rfind("opt.v.", 0) == 0) opt.v[name.substr(6)] = t;
                else if (name == "opt.t") opt.t = static_cast<long long>(t[0]);
                else if (name == "opt.tokens") cumulative_tokens = static_cast<long long>(t[0]);
            }
        }
    } else {
        params = lm::init_params<float>(cfg);
    }
    const int end_step = tc.stop_step > 0 ? tc.stop_step : tc.total_steps;
    if (start_step >= end_step)
        throw std::invalid_argument("resume: checkpoint already at or past the stop step");

    // the teacher is a frozen snapshot of the initial policy
    Params teacher_snapshot;
    std::uint64_t teacher_hash = 0;
    if (is_opsd) {
        teacher_snapshot = params;
        teacher_hash = lm::params_hash(teacher_snapshot);
    }
    Params grpo_reference;
    if (tc.method == "grpo" && tc.kl_coef > 0.0) grpo_reference = params;

    optim::LrSchedule sched{tc.learning_rate, tc.total_steps, tc.warmup_ratio};
    std::unique_ptr<metrics::MetricsWriter> writer;
    if (!tc.metrics_path.empty())
        writer = std::make_unique<metrics::MetricsWriter>(tc.metrics_path,
                                                          tc.resume && start_step > 0);
    auto t0 = std::chrono::steady_clock::now();
    auto wallclock = [&] {
        if (!tc.record_wallclock) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    lm::SamplingParams roll_sp;
    roll_sp.temperature = tc.temperature;
    roll_sp.top_p = tc.top_p;
    roll_sp.top_k = tc.top_k;
    roll_sp.min_p = tc.min_p;
    roll_sp.max_new_tokens = tc.max_completion_length;

    const int B = tc.effective_batch_size;
    const int n_train = static_cast<int>(train_ds.instances.size());
    double last_loss = 0.0;

    for (int step = start_step; step < end_step; ++step) {
        double lr = optim::lr_at(static_cast<double>(step), sched);
        Params grads;
        double batch_loss = 0.0;
        double reward_sum = 0.0;
        long long reward_count = 0;
        int used = 0;
        bool any_signal = false;  // GRPO: at least one non-degenerate group

        std::vector<LossResult<float>> pending;  // deferred so 1/used is known
        for (int b = 0; b < B; ++b) {
            int pi = static_cast<int>(derive_seed(tc.seed, step, 1, b) % n_train);
            const auto& inst = train_ds.instances[pi];

            if (tc.method == "sft") {
                bool teacher_side =
                    unit_uniform(derive_seed(tc.seed, step, 2, b)) < tc.sft_teacher_fraction;
                auto ctx = teacher_side
                               ? prompts::build_teacher_context(inst.problem_text,
                                                                inst.reference_solution,
                                                                tc.answer_only)
                               : prompts::build_student_context(inst.problem_text);
                auto target = vocab::encode(inst.reference_solution);
                target.push_back(vocab::EOS);
                if (static_cast<int>(ctx.size() + target.size()) > cfg.context_length) continue;
                pending.push_back(objectives::sft_loss(cfg, params, ctx, target));
                ++used;
                continue;
            }

            auto pair = prompts::build_context_pair(inst.problem_text, inst.reference_solution,
                                                    tc.answer_only);
            if (static_cast<int>(pair.student_context.size()) + tc.max_completion_length >
                cfg.context_length)
                continue;

            auto draw = [&](std::uint64_t lane, std::uint64_t idx) {
                lm::SamplingParams sp = roll_sp;
                sp.seed = derive_seed(tc.seed, step, lane, idx);
                auto traj = lm::sample(cfg, params, pair.student_context, sp);
                cumulative_tokens += static_cast<long long>(traj.tokens.size());
                if (is_empty_rollout(traj)) {  // resample once, then give up
                    sp.seed = derive_seed(tc.seed, step, lane + 1000, idx);
                    traj = lm::sample(cfg, params, pair.student_context, sp);
                    cumulative_tokens += static_cast<long long>(traj.tokens.size());
                }
                return traj;
            };

            if (tc.method == "grpo") {
                objectives::GroupRollouts group;
                group.context = pair.student_context;
                for (int g = 0; g < tc.generations_per_prompt; ++g) {
                    auto traj = draw(10 + static_cast<std::uint64_t>(b) * 2048, g);
                    if (is_empty_rollout(traj)) continue;
                    group.rewards.push_back(static_cast<double>(tasks::verify(inst, traj.tokens)));
                    group.rollouts.push_back(std::move(traj));
                }
                if (group.rollouts.size() < 2) continue;
                for (double r : group.rewards) reward_sum += r;
                reward_count += static_cast<long long>(group.rewards.size());
                bool uniform = true;
                for (double r : group.rewards)
                    if (r != group.rewards.front()) uniform = false;
                if (!uniform) any_signal = true;
                if (uniform && tc.kl_coef == 0.0) {
                    ++used;  // zero advantages: the group contributes nothing
                    pending.push_back({});
                    continue;
                }
                if (tc.kl_coef > 0.0) {
                    for (const auto& traj : group.rollouts) {
                        std::vector<TokenId> full = group.context;
                        full.insert(full.end(), traj.tokens.begin(), traj.tokens.end());
                        auto ls = log_softmax(lm::forward_logits(cfg, grpo_reference, full));
                        int off = static_cast<int>(group.context.size()) - 1;
                        std::vector<double> ref(traj.tokens.size());
                        for (std::size_t i = 0; i < ref.size(); ++i)
                            ref[i] = ls.at(off + static_cast<int>(i), traj.tokens[i]);
                        group.ref_log_probs.push_back(std::move(ref));
                    }
                    any_signal = true;
                }
                pending.push_back(objectives::grpo_loss(cfg, params, group, tc.clip_eps,
                                                        tc.kl_coef));
                ++used;
                continue;
            }

            // opsd_full / opsd_sampled: one rollout per prompt
            auto traj = draw(20, b);
            if (is_empty_rollout(traj)) continue;
            if (static_cast<int>(pair.teacher_context.size() + traj.tokens.size()) >
                cfg.context_length)
                continue;
            reward_sum += static_cast<double>(tasks::verify(inst, traj.tokens));
            reward_count += 1;
            const Params& teacher = tc.live_teacher ? params : teacher_snapshot;
            if (tc.method == "opsd_full")
                pending.push_back(objectives::opsd_full_vocab_loss(
                    cfg, params, teacher, pair, traj, divergence,
                    static_cast<float>(tc.jsd_beta)));
            else
                pending.push_back(
                    objectives::opsd_sampled_token_loss(cfg, params, teacher, pair, traj));
            ++used;
        }

        if (used > 0) {
            float inv = 1.0f / static_cast<float>(used);
            for (const auto& res : pending) {
                batch_loss += res.loss / used;
                add_scaled(grads, res.grads, inv);
            }
        }
        bool skip_update = used == 0 || (tc.method == "grpo" && !any_signal && tc.kl_coef == 0.0);
        if (!skip_update) opt.step(params, grads, lr);
        last_loss = batch_loss;

        double mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
        if (writer)
            writer->write({step + 1, tc.method, batch_loss, mean_reward, cumulative_tokens, lr,
                           wallclock()});

        bool do_eval = eval_ds && tc.eval_every > 0 &&
                       ((step + 1) % tc.eval_every == 0 || step + 1 == tc.total_steps);
        if (do_eval) {
            lm::SamplingParams esp;
            esp.temperature = tc.eval_temperature;
            esp.max_new_tokens = tc.max_completion_length;
            esp.seed = tasks::mix64(tc.seed ^ 0xE7A1E7A1ull);
            auto report = eval::evaluate(cfg, params, *eval_ds, esp, tc.eval_samples_per_prompt,
                                         tc.eval_max_problems);
            if (writer)
                writer->write({step + 1, tc.method + ".eval", batch_loss, report.accuracy,
                               cumulative_tokens, lr, wallclock()});
        }
    }

    if (!tc.checkpoint_path.empty()) {
        lm::Checkpoint ck;
        ck.config = cfg;
        ck.step = end_step;
        ck.arrays = params;
        for (const auto& [name, t] : opt.m) ck.arrays["opt.m." + name] = t;
        for (const auto& [name, t] : opt.v) ck.arrays["opt.v." + name] = t;
        ck.arrays["opt.t"] = Tensor<float>::full({1}, static_cast<float>(opt.t));
        ck.arrays["opt.tokens"] = Tensor<float>::full({1}, static_cast<float>(cumulative_tokens));
        lm::save_checkpoint(tc.checkpoint_path, ck);
    }

    TrainResult r;
    r.params = std::move(params);
    r.cumulative_tokens = cumulative_tokens;
    r.teacher_hash = teacher_hash;
    r.final_loss = last_loss;
    return r;
}

}  // namespace opsd::trainer
