#include "opsd/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace opsd::runconfig {

namespace {

struct Field {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        auto add_int = [&](const std::string& n, auto member) {
            f.push_back({n,
                         [n, member](RunConfig& rc, const std::string& v) {
                             std::invoke(member, rc) =
                                 static_cast<std::decay_t<decltype(std::invoke(member, rc))>>(
                                     parse_int(n, v));
                         },
                         [member](const RunConfig& rc) {
                             return std::to_string(std::invoke(member, rc));
                         }});
        };
        auto add_dbl = [&](const std::string& n, auto member) {
            f.push_back({n,
                         [n, member](RunConfig& rc, const std::string& v) {
                             std::invoke(member, rc) = parse_double(n, v);
                         },
                         [member](const RunConfig& rc) {
                             return fmt_double(std::invoke(member, rc));
                         }});
        };
        auto add_bool = [&](const std::string& n, auto member) {
            f.push_back({n,
                         [n, member](RunConfig& rc, const std::string& v) {
                             std::invoke(member, rc) = parse_bool(n, v);
                         },
                         [member](const RunConfig& rc) {
                             return std::invoke(member, rc) ? "true" : "false";
                         }});
        };
        auto add_str = [&](const std::string& n, auto member) {
            f.push_back({n,
                         [member](RunConfig& rc, const std::string& v) {
                             std::invoke(member, rc) = v;
                         },
                         [member](const RunConfig& rc) { return std::invoke(member, rc); }});
        };

        add_int("context_length", [](auto& rc) -> auto& { return rc.model.context_length; });
        add_int("embed_dim", [](auto& rc) -> auto& { return rc.model.embed_dim; });
        add_int("num_layers", [](auto& rc) -> auto& { return rc.model.num_layers; });
        add_int("num_heads", [](auto& rc) -> auto& { return rc.model.num_heads; });
        add_int("mlp_multiplier", [](auto& rc) -> auto& { return rc.model.mlp_multiplier; });
        add_int("model_seed", [](auto& rc) -> auto& { return rc.model.seed; });

        add_str("method", [](auto& rc) -> auto& { return rc.train.method; });
        add_dbl("learning_rate", [](auto& rc) -> auto& { return rc.train.learning_rate; });
        add_dbl("warmup_ratio", [](auto& rc) -> auto& { return rc.train.warmup_ratio; });
        add_int("total_steps", [](auto& rc) -> auto& { return rc.train.total_steps; });
        add_int("effective_batch_size",
                [](auto& rc) -> auto& { return rc.train.effective_batch_size; });
        add_int("generations_per_prompt",
                [](auto& rc) -> auto& { return rc.train.generations_per_prompt; });
        add_int("max_completion_length",
                [](auto& rc) -> auto& { return rc.train.max_completion_length; });
        add_dbl("temperature", [](auto& rc) -> auto& { return rc.train.temperature; });
        add_dbl("top_p", [](auto& rc) -> auto& { return rc.train.top_p; });
        add_int("top_k", [](auto& rc) -> auto& { return rc.train.top_k; });
        add_dbl("min_p", [](auto& rc) -> auto& { return rc.train.min_p; });
        add_str("divergence", [](auto& rc) -> auto& { return rc.train.divergence; });
        add_dbl("jsd_beta", [](auto& rc) -> auto& { return rc.train.jsd_beta; });
        add_dbl("clip_eps", [](auto& rc) -> auto& { return rc.train.clip_eps; });
        add_dbl("kl_coef", [](auto& rc) -> auto& { return rc.train.kl_coef; });
        add_dbl("weight_decay", [](auto& rc) -> auto& { return rc.train.weight_decay; });
        add_bool("answer_only", [](auto& rc) -> auto& { return rc.train.answer_only; });
        add_bool("live_teacher", [](auto& rc) -> auto& { return rc.train.live_teacher; });
        add_dbl("sft_teacher_fraction",
                [](auto& rc) -> auto& { return rc.train.sft_teacher_fraction; });
        add_int("seed", [](auto& rc) -> auto& { return rc.train.seed; });
        add_int("eval_every", [](auto& rc) -> auto& { return rc.train.eval_every; });
        add_int("eval_samples_per_prompt",
                [](auto& rc) -> auto& { return rc.train.eval_samples_per_prompt; });
        add_int("eval_max_problems", [](auto& rc) -> auto& { return rc.train.eval_max_problems; });
        add_dbl("eval_temperature", [](auto& rc) -> auto& { return rc.train.eval_temperature; });
        add_bool("record_wallclock", [](auto& rc) -> auto& { return rc.train.record_wallclock; });
        add_bool("resume", [](auto& rc) -> auto& { return rc.train.resume; });
        add_int("stop_step", [](auto& rc) -> auto& { return rc.train.stop_step; });
        add_str("metrics_path", [](auto& rc) -> auto& { return rc.train.metrics_path; });
        add_str("checkpoint_path", [](auto& rc) -> auto& { return rc.train.checkpoint_path; });
        add_str("init_checkpoint", [](auto& rc) -> auto& { return rc.train.init_checkpoint; });

        add_str("train_dataset", [](auto& rc) -> auto& { return rc.train_dataset; });
        add_str("eval_dataset", [](auto& rc) -> auto& { return rc.eval_dataset; });
        add_str("out_dir", [](auto& rc) -> auto& { return rc.out_dir; });
        return f;
    }();
    return table;
}

void set_field(RunConfig& rc, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.name == key) {
            f.set(rc, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (train_dataset.empty()) throw std::invalid_argument("train_dataset: required");
}

RunConfig parse_lines(const std::map<std::string, std::string>& kv) {
    RunConfig rc;
    for (const auto& [k, v] : kv) set_field(rc, k, v);
    return rc;
}

RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    RunConfig rc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        set_field(rc, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return rc;
}

void apply_override(RunConfig& rc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override '" + assignment + "' is not key=value");
    set_field(rc, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void write_config(const RunConfig& rc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write '" + path + "'");
    for (const auto& f : fields()) out << f.name << "=" << f.get(rc) << "\n";
}

}  // namespace opsd::runconfig
