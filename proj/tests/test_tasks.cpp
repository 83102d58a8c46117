#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <string>

#include "opsd/tasks.hpp"

using namespace opsd::tasks;

namespace {

// Independent oracle: recursive-descent evaluator for the generator's
// expression grammar (left-associative; '*' and '%' bind tighter; '%' is
// truncated like C++).
struct Parser {
    const std::string& s;
    std::size_t i = 0;

    explicit Parser(const std::string& text) : s(text) {}

    long long parse() {
        long long v = expr();
        REQUIRE(i == s.size());
        return v;
    }
    long long expr() {
        long long v = term();
        while (i < s.size() && (s[i] == '+' || s[i] == '-')) {
            char op = s[i++];
            long long rhs = term();
            v = (op == '+') ? v + rhs : v - rhs;
        }
        return v;
    }
    long long term() {
        long long v = factor();
        while (i < s.size() && (s[i] == '*' || s[i] == '%')) {
            char op = s[i++];
            long long rhs = factor();
            v = (op == '*') ? v * rhs : v % rhs;
        }
        return v;
    }
    long long factor() {
        if (s[i] == '(') {
            ++i;
            long long v = expr();
            REQUIRE(s[i] == ')');
            ++i;
            return v;
        }
        std::size_t start = i;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
        REQUIRE(i > start);
        return std::stoll(s.substr(start, i - start));
    }
};

}  // namespace

TEST_CASE("generated expressions evaluate to the stated answer") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        for (int d = 1; d <= 4; ++d) {
            auto p = gen_problem(seed, d);
            CHECK(Parser(p.problem_text).parse() == p.final_answer);
        }
    }
}

TEST_CASE("difficulty controls the operation count") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (int d = 1; d <= 5; ++d) {
            auto p = gen_problem(seed, d);
            int ops = 0;
            for (char c : p.problem_text)
                if (c == '+' || c == '*' || c == '%') ++ops;
            // '-' may also be a negative sign, but operands are nonnegative here
            for (char c : p.problem_text)
                if (c == '-') ++ops;
            CHECK(ops == d);
        }
    }
}

TEST_CASE("difficulty 1 has the single-step structure a op b = c") {
    auto p = gen_problem(7, 1);
    CHECK(p.difficulty == 1);
    auto eq = p.reference_solution.find('=');
    REQUIRE(eq != std::string::npos);
    CHECK(p.reference_solution.substr(0, eq) == p.problem_text);
    CHECK(p.reference_solution.find(';') == std::string::npos);
    CHECK(p.reference_solution.substr(eq + 1) ==
          std::to_string(p.final_answer) + "####" + std::to_string(p.final_answer));
}

TEST_CASE("generation is deterministic in seed") {
    for (std::uint64_t seed : {0ULL, 9ULL, 123456789ULL}) {
        CHECK(gen_problem(seed, 3) == gen_problem(seed, 3));
    }
    auto a = gen_dataset(5, 50, 1, 3);
    auto b = gen_dataset(5, 50, 1, 3);
    CHECK(a.instances == b.instances);
}

TEST_CASE("reference solutions always verify; perturbed answers do not") {
    auto ds = gen_dataset(11, 2000, 1, 5);
    for (const auto& p : ds.instances) {
        CHECK(verify(p, p.reference_solution) == 1);
        ProblemInstance off = p;
        off.final_answer += 1;
        CHECK(verify(off, p.reference_solution) == 0);
        off.final_answer = p.final_answer - 1;
        CHECK(verify(off, p.reference_solution) == 0);
    }
}

TEST_CASE("every intermediate step in the reference is arithmetically correct") {
    auto ds = gen_dataset(21, 500, 1, 5);
    for (const auto& p : ds.instances) {
        auto marker = p.reference_solution.rfind("####");
        REQUIRE(marker != std::string::npos);
        std::string steps = p.reference_solution.substr(0, marker);
        std::size_t start = 0;
        int count = 0;
        while (start < steps.size()) {
            auto end = steps.find(';', start);
            if (end == std::string::npos) end = steps.size();
            std::string step = steps.substr(start, end - start);
            auto eq = step.find('=');
            REQUIRE(eq != std::string::npos);
            // lhs is a single binary op over (possibly negative) literals
            std::string lhs = step.substr(0, eq);
            std::size_t op_pos = std::string::npos;
            for (std::size_t i = 1; i < lhs.size(); ++i) {
                char c = lhs[i];
                if (c == '+' || c == '*' || c == '%' ||
                    (c == '-' && (lhs[i - 1] >= '0' && lhs[i - 1] <= '9'))) {
                    op_pos = i;
                    break;
                }
            }
            REQUIRE(op_pos != std::string::npos);
            long long a = std::stoll(lhs.substr(0, op_pos));
            long long b = std::stoll(lhs.substr(op_pos + 1));
            long long c = std::stoll(step.substr(eq + 1));
            switch (lhs[op_pos]) {
                case '+': CHECK(a + b == c); break;
                case '-': CHECK(a - b == c); break;
                case '*': CHECK(a * b == c); break;
                case '%': CHECK(a % b == c); break;
            }
            ++count;
            start = end + 1;
        }
        CHECK(count == p.difficulty);
    }
}

TEST_CASE("verify extraction rules") {
    ProblemInstance p;
    p.final_answer = 5;
    CHECK(verify(p, "junk #### 5") == 0);  // space after marker: no integer
    CHECK(verify(p, "junk####5") == 1);
    CHECK(verify(p, "####4") == 0);
    CHECK(verify(p, "no marker at all 5") == 0);
    CHECK(verify(p, "####3####5") == 1);  // last marker wins
    CHECK(verify(p, "####5extra") == 1);
    p.final_answer = -7;
    CHECK(verify(p, "x####-7") == 1);
    CHECK(verify(p, "x####7") == 0);
    CHECK(verify(p, "####-") == 0);
    CHECK(verify(p, "") == 0);
}

TEST_CASE("invalid difficulty rejected") {
    CHECK_THROWS_AS(gen_problem(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_problem(1, kMaxDifficulty + 1), std::invalid_argument);
}

TEST_CASE("dataset save/load round-trips") {
    auto ds = gen_dataset(33, 100, 1, 4);
    std::string path = "test_tasks_roundtrip.tsv";
    save_dataset(ds, path);
    auto back = load_dataset(path);
    CHECK(back.instances == ds.instances);
    CHECK(back.seed == ds.seed);
    CHECK(back.min_difficulty == ds.min_difficulty);
    CHECK(back.max_difficulty == ds.max_difficulty);

    Dataset empty;
    empty.seed = 1;
    save_dataset(empty, path);
    auto back2 = load_dataset(path);
    CHECK(back2.instances.empty());
    std::remove(path.c_str());
}

TEST_CASE("malformed dataset line reports its line number") {
    std::string path = "test_tasks_bad.tsv";
    {
        FILE* f = fopen(path.c_str(), "w");
        fputs("1+1\t1+1=2####2\t2\t1\n", f);
        fputs("broken line without tabs\n", f);
        fclose(f);
    }
    try {
        load_dataset(path);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("problem text stays inside the task vocabulary") {
    auto ds = gen_dataset(77, 300, 1, 6);
    for (const auto& p : ds.instances) {
        CHECK_NOTHROW(opsd::vocab::encode(p.problem_text));
        CHECK_NOTHROW(opsd::vocab::encode(p.reference_solution));
    }
}
