#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "opsd/vocab.hpp"

namespace opsd::prompts {

struct ContextPair {
    std::vector<TokenId> student_context;  // [PROB] x [ANS]
    std::vector<TokenId> teacher_context;  // [PROB] x [REF] y* [RETRY] [ANS]
};

// Row offsets into the two logit matrices: rollout token n (1-based) is
// predicted by student row student_offset+n-1 and teacher row
// teacher_offset+n-1 (rows are 0-based and row t predicts token t+1).
struct AlignmentMap {
    int student_offset = 0;
    int teacher_offset = 0;
};

inline std::vector<TokenId> build_student_context(const std::string& problem_text) {
    std::vector<TokenId> out{vocab::PROB};
    auto body = vocab::encode(problem_text);
    out.insert(out.end(), body.begin(), body.end());
    out.push_back(vocab::ANS);
    return out;
}

// answer_only narrows the privileged text to the final "####<answer>" part
// of the reference solution.
inline std::vector<TokenId> build_teacher_context(const std::string& problem_text,
                                                  const std::string& reference_solution,
                                                  bool answer_only = false) {
    std::string privileged = reference_solution;
    if (answer_only) {
        auto pos = reference_solution.rfind("####");
        if (pos == std::string::npos)
            throw std::invalid_argument("build_teacher_context: reference lacks answer marker");
        privileged = reference_solution.substr(pos);
    }
    std::vector<TokenId> out{vocab::PROB};
    auto body = vocab::encode(problem_text);
    out.insert(out.end(), body.begin(), body.end());
    out.push_back(vocab::REF);
    auto ref = vocab::encode(privileged);
    out.insert(out.end(), ref.begin(), ref.end());
    out.push_back(vocab::RETRY);
    out.push_back(vocab::ANS);
    return out;
}

inline ContextPair build_context_pair(const std::string& problem_text,
                                      const std::string& reference_solution,
                                      bool answer_only = false) {
    return ContextPair{build_student_context(problem_text),
                       build_teacher_context(problem_text, reference_solution, answer_only)};
}

template <class Trajectory>
AlignmentMap align(const ContextPair& pair, const Trajectory& rollout) {
    if (pair.student_context.empty() || pair.teacher_context.empty())
        throw std::invalid_argument("align: empty context");
    if (pair.student_context.back() != pair.teacher_context.back())
        throw std::invalid_argument("align: contexts end with different markers");
    if (rollout.tokens.empty()) throw std::invalid_argument("align: empty rollout");
    if (rollout.prompt_token_count != static_cast<int>(pair.student_context.size()))
        throw std::invalid_argument("align: rollout was not sampled from this student context");
    return AlignmentMap{static_cast<int>(pair.student_context.size()),
                        static_cast<int>(pair.teacher_context.size())};
}

}  // namespace opsd::prompts
