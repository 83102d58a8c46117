#include "opsd/tasks.hpp"

#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

namespace opsd::tasks {
namespace {

struct Expr {
    // leaf when op == 0
    char op = 0;
    long long value = 0;
    std::unique_ptr<Expr> lhs, rhs;

    bool leaf() const { return op == 0; }
};

int precedence(char op) { return (op == '+' || op == '-') ? 1 : 2; }

long long apply(char op, long long a, long long b) {
    switch (op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '%':
            if (b == 0) throw std::domain_error("mod by zero");
            return a % b;  // truncated, matching C++ semantics end to end
        default: throw std::logic_error("bad operator");
    }
}

long long evaluate(const Expr& e) {
    if (e.leaf()) return e.value;
    return apply(e.op, evaluate(*e.lhs), evaluate(*e.rhs));
}

std::unique_ptr<Expr> build(std::mt19937_64& rng, int ops) {
    auto node = std::make_unique<Expr>();
    if (ops == 0) {
        node->value = static_cast<long long>(rng() % (kMaxOperand + 1));
        return node;
    }
    static const char kOps[] = "+-*%";
    node->op = kOps[rng() % 4];
    int left_ops = static_cast<int>(rng() % static_cast<std::uint64_t>(ops));
    node->lhs = build(rng, left_ops);
    node->rhs = build(rng, ops - 1 - left_ops);
    return node;
}

// Minimal-parenthesis rendering; '-' and '%' need parens around a
// same-precedence right child (left-associative grammar).
void render(const Expr& e, int parent_prec, bool right_child, std::string& out) {
    if (e.leaf()) {
        out += std::to_string(e.value);
        return;
    }
    int prec = precedence(e.op);
    bool parens = prec < parent_prec || (prec == parent_prec && right_child);
    if (parens) out += '(';
    render(*e.lhs, prec, false, out);
    out += e.op;
    render(*e.rhs, prec, true, out);
    if (parens) out += ')';
}

// Reduce the leftmost-innermost operation; returns false when fully reduced.
bool reduce_once(Expr& e, std::string& step) {
    if (e.leaf()) return false;
    if (e.lhs->leaf() && e.rhs->leaf()) {
        long long a = e.lhs->value, b = e.rhs->value;
        long long c = apply(e.op, a, b);
        step = std::to_string(a) + e.op + std::to_string(b) + "=" + std::to_string(c);
        e.op = 0;
        e.lhs.reset();
        e.rhs.reset();
        e.value = c;
        return true;
    }
    if (reduce_once(*e.lhs, step)) return true;
    return reduce_once(*e.rhs, step);
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

ProblemInstance gen_problem(std::uint64_t seed, int difficulty) {
    if (difficulty < 1 || difficulty > kMaxDifficulty)
        throw std::invalid_argument("gen_problem: difficulty out of [1," +
                                    std::to_string(kMaxDifficulty) + "]");
    for (std::uint64_t attempt = 0;; ++attempt) {
        std::mt19937_64 rng(mix64(seed ^ mix64(attempt)) ^ static_cast<std::uint64_t>(difficulty));
        auto root = build(rng, difficulty);
        try {
            evaluate(*root);
        } catch (const std::domain_error&) {
            continue;  // mod by zero somewhere in the tree; redraw
        }
        ProblemInstance p;
        p.difficulty = difficulty;
        render(*root, 0, false, p.problem_text);
        std::string steps, step;
        while (reduce_once(*root, step)) {
            if (!steps.empty()) steps += ';';
            steps += step;
        }
        p.final_answer = root->value;
        p.reference_solution = steps + "####" + std::to_string(p.final_answer);
        return p;
    }
}

Dataset gen_dataset(std::uint64_t seed, int size, int min_difficulty, int max_difficulty) {
    if (size < 0 || min_difficulty < 1 || max_difficulty > kMaxDifficulty ||
        min_difficulty > max_difficulty)
        throw std::invalid_argument("gen_dataset: bad arguments");
    Dataset ds;
    ds.seed = seed;
    ds.min_difficulty = min_difficulty;
    ds.max_difficulty = max_difficulty;
    ds.instances.reserve(static_cast<std::size_t>(size));
    int span = max_difficulty - min_difficulty + 1;
    for (int i = 0; i < size; ++i) {
        std::uint64_t s = mix64(seed ^ mix64(static_cast<std::uint64_t>(i) + 1));
        int difficulty = min_difficulty + static_cast<int>(mix64(s) % static_cast<std::uint64_t>(span));
        ds.instances.push_back(gen_problem(s, difficulty));
    }
    return ds;
}

int verify(const ProblemInstance& instance, const std::string& completion) {
    auto pos = completion.rfind("####");
    if (pos == std::string::npos) return 0;
    std::size_t i = pos + 4;
    std::size_t start = i;
    if (i < completion.size() && completion[i] == '-') ++i;
    std::size_t digits_begin = i;
    while (i < completion.size() && completion[i] >= '0' && completion[i] <= '9') ++i;
    if (i == digits_begin) return 0;
    long long parsed;
    try {
        parsed = std::stoll(completion.substr(start, i - start));
    } catch (const std::exception&) {
        return 0;
    }
    return parsed == instance.final_answer ? 1 : 0;
}

int verify(const ProblemInstance& instance, const std::vector<TokenId>& completion) {
    return verify(instance, vocab::decode(completion));
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    out << "# seed=" << ds.seed << " min_difficulty=" << ds.min_difficulty
        << " max_difficulty=" << ds.max_difficulty << "\n";
    for (const auto& p : ds.instances)
        out << p.problem_text << '\t' << p.reference_solution << '\t' << p.final_answer << '\t'
            << p.difficulty << '\n';
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hdr(line.substr(1));
            std::string field;
            while (hdr >> field) {
                auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                std::string key = field.substr(0, eq), v = field.substr(eq + 1);
                if (key == "seed") ds.seed = std::stoull(v);
                else if (key == "min_difficulty") ds.min_difficulty = std::stoi(v);
                else if (key == "max_difficulty") ds.max_difficulty = std::stoi(v);
            }
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4)
            throw std::runtime_error("load_dataset: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        ProblemInstance p;
        p.problem_text = fields[0];
        p.reference_solution = fields[1];
        try {
            p.final_answer = std::stoll(fields[2]);
            p.difficulty = std::stoi(fields[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("load_dataset: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        }
        ds.instances.push_back(std::move(p));
    }
    return ds;
}

}  // namespace opsd::tasks
