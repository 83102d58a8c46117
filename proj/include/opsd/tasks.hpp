#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opsd/vocab.hpp"

namespace opsd::tasks {

inline constexpr int kMaxDifficulty = 8;
inline constexpr int kMaxOperand = 99;

struct ProblemInstance {
    std::string problem_text;        // arithmetic expression, e.g. "(3+4)*5%7"
    std::string reference_solution;  // "3+4=7;7*5=35;35%7=0####0"
    long long final_answer = 0;
    int difficulty = 0;

    bool operator==(const ProblemInstance&) const = default;
};

struct Dataset {
    std::vector<ProblemInstance> instances;
    std::uint64_t seed = 0;
    int min_difficulty = 1;
    int max_difficulty = 1;
};

// Deterministic in (seed, difficulty); expression has exactly `difficulty`
// binary operations over operands in [0, 99].
ProblemInstance gen_problem(std::uint64_t seed, int difficulty);

Dataset gen_dataset(std::uint64_t seed, int size, int min_difficulty, int max_difficulty);

// 1 iff the integer after the last "####" equals the instance's answer.
int verify(const ProblemInstance& instance, const std::string& completion);
int verify(const ProblemInstance& instance, const std::vector<TokenId>& completion);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::uint64_t mix64(std::uint64_t x);  // splitmix64 finalizer

}  // namespace opsd::tasks
