#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opsd/eval.hpp"
#include "opsd/metrics.hpp"
#include "opsd/runconfig.hpp"
#include "opsd/tasks.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli;  // path to the opsd binary, passed by ctest

int run(const std::string& args) {
    std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kDir = "test_cli_tmp";

}  // namespace

TEST_CASE("gen-data writes a deterministic dataset of the requested size") {
    fs::create_directories(kDir);
    std::string out = std::string(kDir) + "/data.tsv";
    CHECK(run("gen-data --seed 3 --size 50 --min-difficulty 1 --max-difficulty 2 --out " + out) ==
          0);
    auto ds = opsd::tasks::load_dataset(out);
    CHECK(ds.instances.size() == 50);
    auto bytes = slurp(out);
    CHECK(run("gen-data --seed 3 --size 50 --min-difficulty 1 --max-difficulty 2 --out " + out) ==
          0);
    CHECK(slurp(out) == bytes);
    CHECK(run("gen-data --size 10 --out /nonexistent_dir_xyz/a.tsv") != 0);
}

TEST_CASE("train command produces config echo, metrics, and a checkpoint") {
    fs::create_directories(kDir);
    std::string train_tsv = std::string(kDir) + "/train.tsv";
    std::string eval_tsv = std::string(kDir) + "/eval.tsv";
    REQUIRE(run("gen-data --seed 5 --size 12 --min-difficulty 1 --max-difficulty 1 --out " +
                train_tsv) == 0);
    REQUIRE(run("gen-data --seed 6 --size 6 --min-difficulty 1 --max-difficulty 1 --out " +
                eval_tsv) == 0);

    std::string cfg_path = std::string(kDir) + "/run.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "# smoke-test run\n"
            << "embed_dim=32\nnum_layers=2\nnum_heads=4\ncontext_length=96\nmodel_seed=1\n"
            << "method=sft\nlearning_rate=0.002\ntotal_steps=6\neffective_batch_size=4\n"
            << "max_completion_length=24\nseed=9\neval_every=3\n"
            << "train_dataset=" << train_tsv << "\neval_dataset=" << eval_tsv << "\n"
            << "out_dir=" << kDir << "/run1\n";
    }
    CHECK(run("train --config " + cfg_path) == 0);
    CHECK(fs::exists(std::string(kDir) + "/run1/config.txt"));
    CHECK(fs::exists(std::string(kDir) + "/run1/final.ckpt"));
    auto rows = opsd::metrics::load_metrics(std::string(kDir) + "/run1/metrics.csv");
    int train_rows = 0, eval_rows = 0;
    for (const auto& r : rows) (r.method == "sft" ? train_rows : eval_rows) += 1;
    CHECK(train_rows == 6);
    CHECK(eval_rows == 2);

    // the echoed config parses back and reproduces the run settings
    auto echoed = opsd::runconfig::parse_file(std::string(kDir) + "/run1/config.txt");
    CHECK(echoed.train.method == "sft");
    CHECK(echoed.train.total_steps == 6);
    CHECK(echoed.model.embed_dim == 32);

    // overrides are applied and invalid values exit with the validation code
    CHECK(run("train --config " + cfg_path + " --set method=bogus --set out_dir=" + kDir +
              "/run2") == 1);
    CHECK(run("train --config " + cfg_path + " --set total_steps=2 --set out_dir=" + kDir +
              "/run3") == 0);
    auto rows3 = opsd::metrics::load_metrics(std::string(kDir) + "/run3/metrics.csv");
    int train3 = 0;
    for (const auto& r : rows3) train3 += r.method == "sft";
    CHECK(train3 == 2);

    CHECK(run("train --config /no/such/config.cfg") == 2);
}

TEST_CASE("eval command reports accuracy and writes a parseable report") {
    std::string ckpt = std::string(kDir) + "/run1/final.ckpt";
    std::string eval_tsv = std::string(kDir) + "/eval.tsv";
    REQUIRE(fs::exists(ckpt));
    std::string report = std::string(kDir) + "/eval_report.txt";
    CHECK(run("eval --checkpoint " + ckpt + " --dataset " + eval_tsv +
              " --samples 2 --temperature 0.8 --seed 4 --max-new-tokens 24 --out " + report) == 0);
    auto r = opsd::eval::load_report(report);
    CHECK(r.problems.size() == 6);
    auto bytes = slurp(report);
    CHECK(run("eval --checkpoint " + ckpt + " --dataset " + eval_tsv +
              " --samples 2 --temperature 0.8 --seed 4 --max-new-tokens 24 --out " + report) == 0);
    CHECK(slurp(report) == bytes);  // rerun determinism

    CHECK(run("eval --checkpoint /no/such.ckpt --dataset " + eval_tsv) == 2);
}

TEST_CASE("report command merges metrics into an efficiency table") {
    std::string m1 = std::string(kDir) + "/run1/metrics.csv";
    std::string out = std::string(kDir) + "/report.csv";
    CHECK(run("report --out " + out + " " + m1) == 0);
    auto text = slurp(out);
    CHECK(text.find("method,step,cumulative_tokens,accuracy,matched_accuracy_ratio") !=
          std::string::npos);
    int lines = 0;
    for (char c : text) lines += c == '\n';
    CHECK(lines == 3);  // header + two eval rows

    // two-file merge keeps every eval row
    CHECK(run("report --out " + out + " " + m1 + " " + m1) == 0);
    lines = 0;
    for (char c : slurp(out)) lines += c == '\n';
    CHECK(lines == 5);

    std::string bad = std::string(kDir) + "/bad.csv";
    {
        std::ofstream f(bad);
        f << "not,a,metrics,file\n";
    }
    CHECK(run("report --out " + out + " " + bad) == 2);
    fs::remove_all(kDir);
}

int main(int argc, char** argv) {
    doctest::Context ctx;
    int keep = 1;
    std::vector<char*> pass{argv[0]};
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("-", 0) != 0 && g_cli.empty() && a.find("opsd") != std::string::npos)
            g_cli = a;
        else
            pass.push_back(argv[i]);
        (void)keep;
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-opsd-binary>\n");
        return 1;
    }
    ctx.applyCommandLine(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
