#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "opsd/graph.hpp"
#include "opsd/model.hpp"
#include "opsd/numerics.hpp"
#include "opsd/prompts.hpp"
#include "opsd/sampler.hpp"

namespace opsd::objectives {

inline constexpr double kProbFloor = 1e-12;

enum class Divergence { forward_kl, reverse_kl, jsd };

inline Divergence divergence_from_string(const std::string& s) {
    if (s == "forward_kl") return Divergence::forward_kl;
    if (s == "reverse_kl") return Divergence::reverse_kl;
    if (s == "jsd") return Divergence::jsd;
    throw std::invalid_argument("unknown divergence '" + s + "'");
}

// KL(p || q) in nats; q floored at kProbFloor before the log.
inline double kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kProbFloor)));
    return s;
}

// beta*KL(p_T || m) + (1-beta)*KL(p_S || m), m = beta*p_T + (1-beta)*p_S.
inline double jsd_beta(std::span<const double> p_t, std::span<const double> p_s, double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("jsd_beta: beta not in [0,1]");
    if (p_t.size() != p_s.size()) throw std::invalid_argument("jsd_beta: shape mismatch");
    std::vector<double> m(p_t.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = beta * p_t[i] + (1.0 - beta) * p_s[i];
    return beta * kl(p_t, m) + (1.0 - beta) * kl(p_s, m);
}

inline double divergence_value(std::span<const double> p_t, std::span<const double> p_s,
                               Divergence d, double beta) {
    switch (d) {
        case Divergence::forward_kl: return kl(p_t, p_s);
        case Divergence::reverse_kl: return kl(p_s, p_t);
        case Divergence::jsd: return jsd_beta(p_t, p_s, beta);
    }
    throw std::logic_error("divergence_value");
}

// Aligned per-position distribution rows for one rollout.
template <class T>
struct TokenDistributionRows {
    Tensor<T> teacher_probs;  // [g, vocab], already softmaxed
    Tensor<T> student_probs;  // [g, vocab]
    std::vector<int> mask;    // 1 = generated position contributes
};

// Numeric (no-grad) trajectory-averaged divergence; mean over masked rows.
template <class T>
double per_token_divergence(const TokenDistributionRows<T>& rows, Divergence d, double beta) {
    int g = rows.teacher_probs.rows(), v = rows.teacher_probs.cols();
    if (!rows.student_probs.same_shape(rows.teacher_probs) ||
        static_cast<int>(rows.mask.size()) != g)
        throw std::invalid_argument("per_token_divergence: shape mismatch");
    int cnt = 0;
    double sum = 0.0;
    std::vector<double> pt(v), ps(v);
    for (int i = 0; i < g; ++i) {
        if (!rows.mask[i]) continue;
        ++cnt;
        for (int j = 0; j < v; ++j) {
            pt[j] = static_cast<double>(rows.teacher_probs.at(i, j));
            ps[j] = static_cast<double>(rows.student_probs.at(i, j));
        }
        sum += divergence_value(pt, ps, d, beta);
    }
    if (cnt == 0) throw std::invalid_argument("per_token_divergence: no unmasked positions");
    return sum / cnt;
}

// Graph version: teacher rows enter as constants, gradient flows only through
// the student logits. Returns a scalar node (mean over masked positions).
template <class T>
typename Graph<T>::NodeId per_token_divergence_node(Graph<T>& g, int student_logit_rows,
                                                    const Tensor<T>& teacher_probs,
                                                    const std::vector<int>& mask, Divergence d,
                                                    T beta) {
    if (d == Divergence::jsd && (beta < T(0) || beta > T(1)))
        throw std::invalid_argument("per_token_divergence: beta not in [0,1]");
    const Tensor<T>& sl = g.value(student_logit_rows);
    int rows = sl.rows(), v = sl.cols();
    if (teacher_probs.rows() != rows || teacher_probs.cols() != v)
        throw std::invalid_argument("per_token_divergence: teacher/student row mismatch");
    if (static_cast<int>(mask.size()) != rows)
        throw std::invalid_argument("per_token_divergence: mask length mismatch");
    int cnt = 0;
    for (int m : mask) cnt += m ? 1 : 0;
    if (cnt == 0) throw std::invalid_argument("per_token_divergence: no unmasked positions");

    const T floor = static_cast<T>(kProbFloor);
    Tensor<T> mask_mat = Tensor<T>::zeros({rows, v});
    Tensor<T> pt_masked = Tensor<T>::zeros({rows, v});
    double teacher_entropy_term = 0.0;  // sum over masked rows of p_T log p_T
    for (int i = 0; i < rows; ++i) {
        if (!mask[i]) continue;
        for (int j = 0; j < v; ++j) {
            T p = teacher_probs.at(i, j);
            mask_mat.at(i, j) = T(1);
            pt_masked.at(i, j) = p;
            if (p > T(0))
                teacher_entropy_term += static_cast<double>(p) *
                                        std::log(std::max(static_cast<double>(p), kProbFloor));
        }
    }

    auto ls = g.log_softmax_rows(student_logit_rows);
    if (d == Divergence::forward_kl) {
        // sum p_T log p_T - sum p_T log p_S
        auto cross = g.sum_all(g.mul_const(ls, pt_masked));
        return g.affine(cross, T(-1) / T(cnt), static_cast<T>(teacher_entropy_term) / T(cnt));
    }
    auto ps = g.softmax_rows(student_logit_rows);
    if (d == Divergence::reverse_kl) {
        Tensor<T> neg_log_pt = Tensor<T>::zeros({rows, v});
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < v; ++j)
                neg_log_pt.at(i, j) = -std::log(std::max(teacher_probs.at(i, j), floor));
        auto inner = g.mul(ps, g.add_const(ls, neg_log_pt));
        return g.affine(g.sum_all(g.mul_const(inner, mask_mat)), T(1) / T(cnt), T(0));
    }
    // jsd: m = beta*p_T + (1-beta)*p_S
    Tensor<T> beta_pt = pt_masked;  // masked rows only; unmasked rows drop out below
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < v; ++j) beta_pt.at(i, j) = beta * teacher_probs.at(i, j);
    auto mix = g.add_const(g.affine(ps, T(1) - beta, T(0)), beta_pt);
    auto log_mix = g.log_floor(mix, floor);
    // KL(p_T||m) summed over masked rows
    auto kl_t = g.affine(g.sum_all(g.mul_const(log_mix, pt_masked)), T(-1),
                         static_cast<T>(teacher_entropy_term));
    // KL(p_S||m) summed over masked rows
    auto kl_s = g.sum_all(g.mul_const(g.mul(ps, g.sub(ls, log_mix)), mask_mat));
    auto total = g.add(g.affine(kl_t, beta, T(0)), g.affine(kl_s, T(1) - beta, T(0)));
    return g.affine(total, T(1) / T(cnt), T(0));
}

template <class T>
struct LossResult {
    double loss = 0.0;
    lm::ParameterSet<T> grads;
};

template <class T>
void accumulate_grads(lm::ParameterSet<T>& into, const Graph<T>& g,
                      const std::map<std::string, int>& param_nodes, double scale = 1.0) {
    for (const auto& [name, id] : param_nodes) {
        Tensor<T> gr = g.gradient(id);
        auto it = into.find(name);
        if (it == into.end()) {
            if (scale != 1.0)
                for (auto& v : gr.data) v = static_cast<T>(v * scale);
            into[name] = std::move(gr);
        } else {
            for (std::size_t i = 0; i < gr.size(); ++i)
                it->second[i] += static_cast<T>(gr[i] * scale);
        }
    }
}

// Teacher next-token probability rows for the rollout positions, computed
// without gradient bookkeeping (or with it and a detach, for the equivalence
// check; values are identical either way).
template <class T>
Tensor<T> teacher_prob_rows(const lm::ModelConfig& c, const lm::ParameterSet<T>& teacher,
                            const std::vector<TokenId>& teacher_context,
                            const lm::Trajectory& rollout, bool grad_bookkeeping = false) {
    std::vector<TokenId> full = teacher_context;
    full.insert(full.end(), rollout.tokens.begin(), rollout.tokens.end());
    Graph<T> g;
    auto fwd = lm::forward_logits(g, c, teacher, full, grad_bookkeeping);
    int off = static_cast<int>(teacher_context.size()) - 1;
    int n = static_cast<int>(rollout.tokens.size());
    auto rows = g.rows_slice(fwd.logits, off, off + n);
    if (grad_bookkeeping) rows = g.detach(rows);
    return softmax(g.value(rows));
}

// Full-vocabulary OPSD loss for one rollout: mean over rollout positions of
// D(p_T || p_S) with the teacher rows detached.
template <class T>
LossResult<T> opsd_full_vocab_loss(const lm::ModelConfig& c, const lm::ParameterSet<T>& student,
                                   const lm::ParameterSet<T>& teacher,
                                   const prompts::ContextPair& pair, const lm::Trajectory& rollout,
                                   Divergence d, T beta, bool teacher_grad_bookkeeping = false) {
    auto map = prompts::align(pair, rollout);
    Tensor<T> pt = teacher_prob_rows(c, teacher, pair.teacher_context, rollout,
                                     teacher_grad_bookkeeping);
    std::vector<TokenId> full = pair.student_context;
    full.insert(full.end(), rollout.tokens.begin(), rollout.tokens.end());
    Graph<T> g;
    auto fwd = lm::forward_logits(g, c, student, full, true);
    int n = static_cast<int>(rollout.tokens.size());
    auto rows = g.rows_slice(fwd.logits, map.student_offset - 1, map.student_offset - 1 + n);
    std::vector<int> mask(n, 1);
    auto loss = per_token_divergence_node(g, rows, pt, mask, d, beta);
    g.backward(loss);
    LossResult<T> r;
    r.loss = static_cast<double>(g.value(loss)[0]);
    accumulate_grads(r.grads, g, fwd.param_nodes);
    return r;
}

// Sampled-token variant: A_n = log p_T(y_n) - log p_S(y_n), detached, then
// loss = -(1/g) sum A_n log p_S(y_n); gradient is A_n * grad log p_S.
template <class T>
LossResult<T> opsd_sampled_token_loss(const lm::ModelConfig& c, const lm::ParameterSet<T>& student,
                                      const lm::ParameterSet<T>& teacher,
                                      const prompts::ContextPair& pair,
                                      const lm::Trajectory& rollout) {
    auto map = prompts::align(pair, rollout);
    int n = static_cast<int>(rollout.tokens.size());

    Tensor<T> pt = teacher_prob_rows(c, teacher, pair.teacher_context, rollout);
    std::vector<TokenId> full = pair.student_context;
    full.insert(full.end(), rollout.tokens.begin(), rollout.tokens.end());
    Graph<T> g;
    auto fwd = lm::forward_logits(g, c, student, full, true);
    auto rows = g.rows_slice(fwd.logits, map.student_offset - 1, map.student_offset - 1 + n);
    auto picked = g.pick(g.log_softmax_rows(rows), rollout.tokens);

    Tensor<T> advantage = Tensor<T>::zeros({n});
    const Tensor<T>& student_logp = g.value(picked);
    for (int i = 0; i < n; ++i) {
        double tlp = std::log(std::max(static_cast<double>(pt.at(i, rollout.tokens[i])), kProbFloor));
        advantage[i] = static_cast<T>(tlp) - student_logp[i];  // constant w.r.t. theta
    }
    auto loss = g.affine(g.sum_all(g.mul_const(picked, advantage)), T(-1) / T(n), T(0));
    g.backward(loss);
    LossResult<T> r;
    r.loss = static_cast<double>(g.value(loss)[0]);
    accumulate_grads(r.grads, g, fwd.param_nodes);
    return r;
}

// G rollouts for one prompt with binary rewards and stored sampling-time
// ("old") per-token log-probs; reference log-probs only when kl_coef > 0.
struct GroupRollouts {
    std::vector<TokenId> context;
    std::vector<lm::Trajectory> rollouts;
    std::vector<double> rewards;
    std::vector<std::vector<double>> ref_log_probs;
};

// (r_i - mean) / population std; all zeros when the group is degenerate.
inline std::vector<double> grpo_advantages(const std::vector<double>& rewards) {
    std::size_t g = rewards.size();
    if (g < 2) throw std::invalid_argument("grpo_advantages: need G >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    double sd = std::sqrt(var / static_cast<double>(g));
    std::vector<double> a(g, 0.0);
    if (sd < 1e-8) return a;
    for (std::size_t i = 0; i < g; ++i) a[i] = (rewards[i] - mean) / sd;
    return a;
}

// Clipped surrogate J over one group; returns loss = -J and its gradients.
// All tokens of rollout i share advantage A_i.
template <class T>
LossResult<T> grpo_loss(const lm::ModelConfig& c, const lm::ParameterSet<T>& params,
                        const GroupRollouts& group, double clip_eps, double kl_coef,
                        const lm::ParameterSet<T>* ref_params = nullptr) {
    std::size_t G = group.rollouts.size();
    if (G < 2 || group.rewards.size() != G) throw std::invalid_argument("grpo_loss: need G >= 2 groups");
    auto adv = grpo_advantages(group.rewards);
    LossResult<T> r;
    for (std::size_t i = 0; i < G; ++i) {
        const lm::Trajectory& traj = group.rollouts[i];
        int n = static_cast<int>(traj.tokens.size());
        if (static_cast<int>(traj.policy_log_probs.size()) != n)
            throw std::invalid_argument("grpo_loss: missing old-policy log-probs");
        std::vector<TokenId> full = group.context;
        full.insert(full.end(), traj.tokens.begin(), traj.tokens.end());
        Graph<T> g;
        auto fwd = lm::forward_logits(g, c, params, full, true);
        int off = static_cast<int>(group.context.size()) - 1;
        auto cur = g.pick(g.log_softmax_rows(g.rows_slice(fwd.logits, off, off + n)), traj.tokens);

        Tensor<T> neg_old = Tensor<T>::zeros({n});
        for (int k = 0; k < n; ++k) neg_old[k] = static_cast<T>(-traj.policy_log_probs[k]);
        auto ratio = g.exp_(g.add_const(cur, neg_old));
        auto unclipped = g.affine(ratio, static_cast<T>(adv[i]), T(0));
        auto clipped = g.affine(g.clamp(ratio, static_cast<T>(1.0 - clip_eps),
                                        static_cast<T>(1.0 + clip_eps)),
                                static_cast<T>(adv[i]), T(0));
        auto objective = g.mean_all(g.elem_min(unclipped, clipped));
        if (kl_coef > 0.0) {
            if (group.ref_log_probs.size() != G ||
                static_cast<int>(group.ref_log_probs[i].size()) != n)
                throw std::invalid_argument("grpo_loss: missing reference log-probs");
            (void)ref_params;
            Tensor<T> ref = Tensor<T>::zeros({n});
            for (int k = 0; k < n; ++k) ref[k] = static_cast<T>(group.ref_log_probs[i][k]);
            // k3 estimator of KL(pi_theta || pi_ref) on sampled tokens
            auto delta = g.add_const(g.affine(cur, T(-1), T(0)), ref);  // ref - cur
            auto k3 = g.add(g.exp_(delta), g.affine(delta, T(-1), T(-1)));
            objective = g.add(objective, g.affine(g.mean_all(k3), static_cast<T>(-kl_coef), T(0)));
        }
        auto loss = g.affine(objective, T(-1) / T(G), T(0));
        g.backward(loss);
        r.loss += static_cast<double>(g.value(loss)[0]);
        accumulate_grads(r.grads, g, fwd.param_nodes);
    }
    return r;
}

// Mean NLL of the target tokens given the context; prompt positions are
// excluded from the loss by construction.
template <class T>
LossResult<T> sft_loss(const lm::ModelConfig& c, const lm::ParameterSet<T>& params,
                       const std::vector<TokenId>& context, const std::vector<TokenId>& target) {
    if (target.empty()) throw std::invalid_argument("sft_loss: empty target");
    if (context.empty()) throw std::invalid_argument("sft_loss: empty context");
    std::vector<TokenId> full = context;
    full.insert(full.end(), target.begin(), target.end());
    Graph<T> g;
    auto fwd = lm::forward_logits(g, c, params, full, true);
    int off = static_cast<int>(context.size()) - 1;
    int n = static_cast<int>(target.size());
    auto picked = g.pick(g.log_softmax_rows(g.rows_slice(fwd.logits, off, off + n)), target);
    auto loss = g.affine(g.sum_all(picked), T(-1) / T(n), T(0));
    g.backward(loss);
    LossResult<T> r;
    r.loss = static_cast<double>(g.value(loss)[0]);
    accumulate_grads(r.grads, g, fwd.param_nodes);
    return r;
}

}  // namespace opsd::objectives
