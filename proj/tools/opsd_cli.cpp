#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "opsd/checkpoint.hpp"
#include "opsd/eval.hpp"
#include "opsd/metrics.hpp"
#include "opsd/runconfig.hpp"
#include "opsd/tasks.hpp"
#include "opsd/trainer.hpp"

namespace fs = std::filesystem;
using namespace opsd;

namespace {

int cmd_gen_data(std::uint64_t seed, int size, int min_d, int max_d, const std::string& out) {
    auto ds = tasks::gen_dataset(seed, size, min_d, max_d);
    tasks::save_dataset(ds, out);
    std::map<int, int> hist;
    for (const auto& p : ds.instances) hist[p.difficulty]++;
    std::printf("wrote %zu instances to %s\n", ds.instances.size(), out.c_str());
    for (const auto& [d, n] : hist) std::printf("difficulty %d: %d\n", d, n);
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              int threads) {
    (void)threads;  // sampling/objective evaluation run single-threaded for reproducibility
    auto rc = runconfig::parse_file(config_path);
    for (const auto& o : overrides) {
        runconfig::apply_override(rc, o);
        std::printf("override: %s\n", o.c_str());
    }
    rc.validate();
    if (!rc.out_dir.empty()) {
        fs::create_directories(rc.out_dir);
        runconfig::write_config(rc, rc.out_dir + "/config.txt");
        if (rc.train.metrics_path.empty()) rc.train.metrics_path = rc.out_dir + "/metrics.csv";
        if (rc.train.checkpoint_path.empty())
            rc.train.checkpoint_path = rc.out_dir + "/final.ckpt";
    }
    auto train_ds = tasks::load_dataset(rc.train_dataset);
    tasks::Dataset eval_ds;
    bool have_eval = !rc.eval_dataset.empty();
    if (have_eval) eval_ds = tasks::load_dataset(rc.eval_dataset);
    auto result = trainer::train(rc.model, rc.train, train_ds, have_eval ? &eval_ds : nullptr);
    std::printf("trained %s for %d steps; final loss %.6f; generated tokens %lld\n",
                rc.train.method.c_str(), rc.train.total_steps, result.final_loss,
                result.cumulative_tokens);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path, int samples,
             const lm::SamplingParams& sp, int max_problems, const std::string& out) {
    auto ck = lm::load_checkpoint(ckpt_path);
    lm::ParameterSet<float> params;
    for (const auto& [name, t] : ck.arrays)
        if (name.rfind("opt.", 0) != 0) params[name] = t;
    auto ds = tasks::load_dataset(dataset_path);
    auto report = eval::evaluate(ck.config, params, ds, sp, samples, max_problems);
    std::printf("accuracy %.4f over %zu problems x %d samples\n", report.accuracy,
                report.problems.size(), samples);
    for (int k = 1; k <= samples; k *= 2)
        std::printf("pass@%d %.4f\n", k, eval::report_pass_at_k(report, k));
    if (!out.empty()) {
        eval::save_report(report, out);
        std::printf("report written to %s\n", out.c_str());
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& metrics_files, const std::string& out) {
    std::vector<std::vector<metrics::MetricsRecord>> streams;
    for (const auto& path : metrics_files) streams.push_back(metrics::load_metrics(path));
    auto table = eval::efficiency_table(streams);
    std::set<std::string> methods;
    for (const auto& row : table) methods.insert(row.method);
    double ratio = 1.0;
    if (methods.size() >= 2) {
        auto it = methods.begin();
        std::string a = *it++;
        std::string b = *it;
        ratio = eval::matched_accuracy_ratio(table, a, b);
    }
    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) throw std::runtime_error("report: cannot write '" + out + "'");
    std::fprintf(f, "method,step,cumulative_tokens,accuracy,matched_accuracy_ratio\n");
    for (const auto& row : table)
        std::fprintf(f, "%s,%lld,%lld,%.17g,%.17g\n", row.method.c_str(), row.step,
                     row.cumulative_tokens, row.accuracy, ratio);
    std::fclose(f);
    std::printf("wrote %zu rows to %s (matched-accuracy ratio %.4f)\n", table.size(), out.c_str(),
                ratio);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale post-training lab: on-policy self-distillation and baselines"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic arithmetic dataset");
    std::uint64_t gen_seed = 0;
    int gen_size = 1000, gen_min = 1, gen_max = 3;
    std::string gen_out = "dataset.tsv";
    gen->add_option("--seed", gen_seed);
    gen->add_option("--size", gen_size)->required();
    gen->add_option("--min-difficulty", gen_min);
    gen->add_option("--max-difficulty", gen_max);
    gen->add_option("--out", gen_out)->required();

    auto* train = app.add_subcommand("train", "Train with the method selected in the config");
    std::string train_config;
    std::vector<std::string> overrides;
    int threads = 1;
    train->add_option("--config", train_config)->required();
    train->add_option("--set", overrides, "key=value config override (repeatable)");
    train->add_option("--threads", threads, "worker threads (1 = bit-reproducible)");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_dataset, ev_out;
    int ev_samples = 1, ev_max_problems = 0;
    lm::SamplingParams ev_sp;
    ev_sp.temperature = 0.0;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--dataset", ev_dataset)->required();
    ev->add_option("--samples", ev_samples);
    ev->add_option("--temperature", ev_sp.temperature);
    ev->add_option("--top-p", ev_sp.top_p);
    ev->add_option("--max-new-tokens", ev_sp.max_new_tokens);
    ev->add_option("--seed", ev_sp.seed);
    ev->add_option("--max-problems", ev_max_problems);
    ev->add_option("--out", ev_out, "write the full eval report here");

    auto* rep = app.add_subcommand("report", "Merge metrics CSVs into an efficiency table");
    std::vector<std::string> rep_files;
    std::string rep_out = "report.csv";
    rep->add_option("files", rep_files, "metrics CSV files")->required();
    rep->add_option("--out", rep_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen_data(gen_seed, gen_size, gen_min, gen_max, gen_out);
        if (*train) return cmd_train(train_config, overrides, threads);
        if (*ev) return cmd_eval(ev_ckpt, ev_dataset, ev_samples, ev_sp, ev_max_problems, ev_out);
        if (*rep) return cmd_report(rep_files, rep_out);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
