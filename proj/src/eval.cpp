#include "opsd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "opsd/prompts.hpp"

namespace opsd::eval {

double pass_at_k(int n, int c, int k) {
    if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
    if (c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
    if (n - c < k) return 1.0;
    double miss = 1.0;
    for (int i = 0; i < k; ++i) miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - miss;
}

double average_at_n(const std::vector<int>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("average_at_n: empty outcomes");
    double s = 0.0;
    for (int v : outcomes) s += v ? 1.0 : 0.0;
    return s / static_cast<double>(outcomes.size());
}

double report_pass_at_k(const EvalReport& report, int k) {
    if (report.problems.empty()) throw std::invalid_argument("report_pass_at_k: empty report");
    double s = 0.0;
    for (const auto& p : report.problems) s += pass_at_k(p.n, p.c, k);
    return s / static_cast<double>(report.problems.size());
}

EvalReport evaluate(const lm::ModelConfig& cfg, const lm::ParameterSet<float>& params,
                    const tasks::Dataset& dataset, const lm::SamplingParams& sp,
                    int samples_per_prompt, int max_problems) {
    if (dataset.instances.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (samples_per_prompt < 1) throw std::invalid_argument("evaluate: samples_per_prompt < 1");
    sp.validate();
    int count = static_cast<int>(dataset.instances.size());
    if (max_problems > 0) count = std::min(count, max_problems);

    EvalReport report;
    long long hits = 0, total = 0;
    for (int i = 0; i < count; ++i) {
        const auto& inst = dataset.instances[i];
        auto ctx = prompts::build_student_context(inst.problem_text);
        ProblemOutcome out;
        out.problem_index = i;
        for (int s = 0; s < samples_per_prompt; ++s) {
            lm::SamplingParams draw = sp;
            draw.seed = tasks::mix64(sp.seed ^ tasks::mix64(
                static_cast<std::uint64_t>(i) * 131071u + static_cast<std::uint64_t>(s)));
            auto traj = lm::sample(cfg, params, ctx, draw);
            report.generated_tokens += static_cast<long long>(traj.tokens.size());
            int ok = tasks::verify(inst, traj.tokens);
            out.correct.push_back(ok);
            out.completions.push_back(vocab::decode(traj.tokens));
            out.n += 1;
            out.c += ok;
        }
        hits += out.c;
        total += out.n;
        report.problems.push_back(std::move(out));
    }
    report.accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    return report;
}

void save_report(const EvalReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_report: cannot open '" + path + "'");
    std::fprintf(f, "# accuracy=%.17g generated_tokens=%lld problems=%zu\n", report.accuracy,
                 report.generated_tokens, report.problems.size());
    for (const auto& p : report.problems) {
        std::fprintf(f, "%d\t%d\t%d", p.problem_index, p.n, p.c);
        for (int s = 0; s < p.n; ++s)
            std::fprintf(f, "\t%d:%s", p.correct[s], p.completions[s].c_str());
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

EvalReport load_report(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load_report: cannot open '" + path + "'");
    EvalReport report;
    char buf[8192];
    int line = 0;
    long long problems = -1;
    while (std::fgets(buf, sizeof buf, f)) {
        ++line;
        std::string s(buf);
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        if (s.empty()) continue;
        if (line == 1) {
            std::size_t pcount = 0;
            if (std::sscanf(s.c_str(), "# accuracy=%lg generated_tokens=%lld problems=%zu",
                            &report.accuracy, &report.generated_tokens, &pcount) != 3) {
                std::fclose(f);
                throw std::runtime_error("load_report: bad header in '" + path + "'");
            }
            problems = static_cast<long long>(pcount);
            continue;
        }
        ProblemOutcome p;
        std::size_t pos = 0;
        auto next_field = [&](bool required) {
            auto tab = s.find('\t', pos);
            std::string field = s.substr(pos, tab == std::string::npos ? tab : tab - pos);
            if (required && field.empty())
                throw std::runtime_error("load_report: malformed line " + std::to_string(line));
            pos = (tab == std::string::npos) ? s.size() : tab + 1;
            return field;
        };
        try {
            p.problem_index = std::stoi(next_field(true));
            p.n = std::stoi(next_field(true));
            p.c = std::stoi(next_field(true));
            for (int i = 0; i < p.n; ++i) {
                std::string field = next_field(false);
                if (field.size() < 2 || field[1] != ':')
                    throw std::runtime_error("load_report: malformed line " + std::to_string(line));
                p.correct.push_back(field[0] == '1' ? 1 : 0);
                p.completions.push_back(field.substr(2));
            }
        } catch (const std::exception&) {
            std::fclose(f);
            throw std::runtime_error("load_report: malformed line " + std::to_string(line) +
                                     " of '" + path + "'");
        }
        report.problems.push_back(std::move(p));
    }
    std::fclose(f);
    if (problems != static_cast<long long>(report.problems.size()))
        throw std::runtime_error("load_report: problem count mismatch in '" + path + "'");
    return report;
}

std::vector<EfficiencyRow> efficiency_table(
    const std::vector<std::vector<metrics::MetricsRecord>>& streams) {
    if (streams.empty()) throw std::invalid_argument("efficiency_table: no streams");
    std::vector<EfficiencyRow> table;
    for (std::size_t i = 0; i < streams.size(); ++i) {
        bool any = false;
        for (const auto& r : streams[i]) {
            const std::string suffix = ".eval";
            if (r.method.size() > suffix.size() &&
                r.method.compare(r.method.size() - suffix.size(), suffix.size(), suffix) == 0) {
                any = true;
                table.push_back({r.method.substr(0, r.method.size() - suffix.size()), r.step,
                                 r.cumulative_generated_tokens, r.mean_reward});
            }
        }
        if (!any)
            throw std::invalid_argument("efficiency_table: stream " + std::to_string(i) +
                                        " has no eval rows");
    }
    std::stable_sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
        return a.cumulative_tokens < b.cumulative_tokens;
    });
    return table;
}

long long tokens_to_reach(const std::vector<EfficiencyRow>& table, const std::string& method,
                          double accuracy) {
    for (const auto& row : table)
        if (row.method == method && row.accuracy >= accuracy) return row.cumulative_tokens;
    return -1;
}

double matched_accuracy_ratio(const std::vector<EfficiencyRow>& table, const std::string& method_a,
                              const std::string& method_b) {
    double best_a = -1.0, best_b = -1.0;
    for (const auto& row : table) {
        if (row.method == method_a) best_a = std::max(best_a, row.accuracy);
        if (row.method == method_b) best_b = std::max(best_b, row.accuracy);
    }
    if (best_a < 0.0 || best_b < 0.0)
        throw std::invalid_argument("matched_accuracy_ratio: method missing from table");
    double target = std::min(best_a, best_b);
    long long ta = tokens_to_reach(table, method_a, target);
    long long tb = tokens_to_reach(table, method_b, target);
    if (ta < 0 || tb < 0 || tb == 0)
        throw std::invalid_argument("matched_accuracy_ratio: milestone unreached");
    return static_cast<double>(ta) / static_cast<double>(tb);
}

}  // namespace opsd::eval
