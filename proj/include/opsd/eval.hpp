#pragma once

#include <string>
#include <vector>

#include "opsd/metrics.hpp"
#include "opsd/model.hpp"
#include "opsd/sampler.hpp"
#include "opsd/tasks.hpp"

namespace opsd::eval {

struct ProblemOutcome {
    int problem_index = 0;
    int n = 0;  // samples drawn
    int c = 0;  // verified correct
    std::vector<int> correct;              // per-sample 0/1
    std::vector<std::string> completions;  // decoded rollouts, same order
};

struct EvalReport {
    std::vector<ProblemOutcome> problems;
    double accuracy = 0.0;  // mean of per-sample outcomes over all problems
    long long generated_tokens = 0;
};

// Unbiased estimator 1 - C(n-c,k)/C(n,k), computed as a product of ratios.
double pass_at_k(int n, int c, int k);

double average_at_n(const std::vector<int>& outcomes);

// Mean pass@k across the report's problems.
double report_pass_at_k(const EvalReport& report, int k);

EvalReport evaluate(const lm::ModelConfig& cfg, const lm::ParameterSet<float>& params,
                    const tasks::Dataset& dataset, const lm::SamplingParams& sp,
                    int samples_per_prompt, int max_problems = 0);

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

struct EfficiencyRow {
    std::string method;
    long long step = 0;
    long long cumulative_tokens = 0;
    double accuracy = 0.0;
};

// Merge eval rows ("<method>.eval") from several metrics streams, sorted by
// cumulative token count.
std::vector<EfficiencyRow> efficiency_table(
    const std::vector<std::vector<metrics::MetricsRecord>>& streams);

// Cumulative tokens when `method` first reaches `accuracy`; -1 if never.
long long tokens_to_reach(const std::vector<EfficiencyRow>& table, const std::string& method,
                          double accuracy);

// tokens_a / tokens_b at the highest accuracy both methods reach.
double matched_accuracy_ratio(const std::vector<EfficiencyRow>& table, const std::string& method_a,
                              const std::string& method_b);

}  // namespace opsd::eval
