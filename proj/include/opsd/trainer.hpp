#pragma once

#include <cstdint>
#include <string>

#include "opsd/model.hpp"
#include "opsd/tasks.hpp"

namespace opsd::trainer {

struct TrainConfig {
    std::string method = "sft";  // sft | grpo | opsd_full | opsd_sampled
    double learning_rate = 1e-3;
    double warmup_ratio = 0.1;
    int total_steps = 100;
    int effective_batch_size = 8;
    int generations_per_prompt = 1;  // GRPO group size G
    int max_completion_length = 64;
    double temperature = 1.0;
    double top_p = 1.0;
    int top_k = 0;
    double min_p = 0.0;
    std::string divergence = "jsd";
    double jsd_beta = 0.5;
    double clip_eps = 0.2;
    double kl_coef = 0.0;
    double weight_decay = 0.0;
    bool answer_only = false;   // teacher privilege narrowed to the final answer
    bool live_teacher = false;  // ablation: teacher tracks the current policy
    double sft_teacher_fraction = 0.0;  // share of SFT examples in teacher context
    std::uint64_t seed = 0;
    int eval_every = 0;  // 0 disables periodic eval rows
    int eval_samples_per_prompt = 1;
    int eval_max_problems = 64;
    double eval_temperature = 0.0;
    bool record_wallclock = false;  // off keeps metrics byte-reproducible
    bool resume = false;            // continue step count/optimizer from init_checkpoint
    int stop_step = 0;              // pause after this step, keeping the full schedule (0 = run to end)
    std::string metrics_path;
    std::string checkpoint_path;
    std::string init_checkpoint;

    void validate() const;
};

struct TrainResult {
    lm::ParameterSet<float> params;
    long long cumulative_tokens = 0;
    std::uint64_t teacher_hash = 0;  // set for OPSD methods
    double final_loss = 0.0;
};

TrainResult train(const lm::ModelConfig& cfg, const TrainConfig& tc,
                  const tasks::Dataset& train_ds, const tasks::Dataset* eval_ds = nullptr);

}  // namespace opsd::trainer
