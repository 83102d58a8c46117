#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "opsd/kernels.hpp"
#include "opsd/model.hpp"

namespace opsd::lm {

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 1.0;
    int top_k = 0;  // 0 disables
    double min_p = 0.0;
    int max_new_tokens = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (temperature < 0.0) throw std::invalid_argument("SamplingParams: temperature < 0");
        if (top_p <= 0.0 || top_p > 1.0) throw std::invalid_argument("SamplingParams: top_p not in (0,1]");
        if (top_k < 0) throw std::invalid_argument("SamplingParams: top_k < 0");
        if (min_p < 0.0 || min_p > 1.0) throw std::invalid_argument("SamplingParams: min_p not in [0,1]");
        if (max_new_tokens < 1) throw std::invalid_argument("SamplingParams: max_new_tokens < 1");
    }
};

enum class StopReason { eos, max_len };

struct Trajectory {
    int prompt_token_count = 0;
    std::vector<TokenId> tokens;          // generated tokens, EOS included when sampled
    std::vector<double> log_probs;        // under the filtered, renormalized sampling distribution
    std::vector<double> policy_log_probs; // unfiltered log-softmax of the raw logits
    StopReason stop_reason = StopReason::max_len;
};

// Filter pipeline: temperature -> top_k -> top_p -> min_p -> renormalize.
// Returns the renormalized distribution (zero where filtered out). All filter
// arithmetic runs in double on the raw logits, so re-applying it to re-scored
// logits reproduces sampling-time values exactly.
template <class T>
std::vector<double> filtered_distribution(const T* logits, int vocab, const SamplingParams& sp) {
    std::vector<double> p(vocab, 0.0);
    if (sp.temperature == 0.0) {  // greedy limit; lowest id wins ties
        int best = 0;
        for (int i = 1; i < vocab; ++i)
            if (logits[i] > logits[best]) best = i;
        p[best] = 1.0;
        return p;
    }
    std::vector<int> order(vocab);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return logits[a] > logits[b]; });
    int kept = vocab;
    if (sp.top_k > 0) kept = std::min(kept, sp.top_k);

    double mx = static_cast<double>(logits[order[0]]) / sp.temperature;
    double sum = 0.0;
    for (int i = 0; i < kept; ++i) {
        p[order[i]] = std::exp(static_cast<double>(logits[order[i]]) / sp.temperature - mx);
        sum += p[order[i]];
    }
    if (sp.top_p < 1.0) {
        double cum = 0.0;
        int cut = kept;
        for (int i = 0; i < kept; ++i) {
            cum += p[order[i]] / sum;
            if (cum >= sp.top_p) {
                cut = i + 1;
                break;
            }
        }
        for (int i = cut; i < kept; ++i) p[order[i]] = 0.0;
        kept = cut;
    }
    if (sp.min_p > 0.0) {
        double cutoff = sp.min_p * p[order[0]];
        for (int i = 1; i < kept; ++i)
            if (p[order[i]] < cutoff) p[order[i]] = 0.0;
    }
    double z = 0.0;
    for (double v : p) z += v;
    for (double& v : p) v /= z;
    return p;
}

// Incremental decoder with per-head KV caches. Routes through the same
// kernels as the graph forward, so logits match it bit for bit.
template <class T>
class InferenceSession {
  public:
    InferenceSession(const ModelConfig& c, const ParameterSet<T>& params)
        : c_(c), p_(params), pos_(0) {
        c_.validate();
        int hd = c_.embed_dim / c_.num_heads;
        keys_.assign(static_cast<std::size_t>(c_.num_layers) * c_.num_heads, {});
        vals_.assign(keys_.size(), {});
        for (auto& v : keys_) v.reserve(static_cast<std::size_t>(c_.context_length) * hd);
        for (auto& v : vals_) v.reserve(static_cast<std::size_t>(c_.context_length) * hd);
    }

    int position() const { return pos_; }

    // Feed one token; returns logits for the next position.
    std::vector<T> step(TokenId tok) {
        if (pos_ >= c_.context_length) throw std::invalid_argument("InferenceSession: context overflow");
        if (tok < 0 || tok >= c_.vocab_size) throw std::invalid_argument("InferenceSession: bad token");
        int d = c_.embed_dim, H = c_.num_heads, hd = d / H, m = c_.mlp_multiplier * d;
        T inv = T(1) / std::sqrt(T(hd));

        const Tensor<T>& emb = p_.at("tok_emb");
        const Tensor<T>& pos = p_.at("pos_emb");
        std::vector<T> x(d), xn(d), qkv(3 * d), att(d), tmp(std::max(d, m)), scratch(pos_ + 1);
        for (int j = 0; j < d; ++j) x[j] = emb.at(tok, j) + pos.at(pos_, j);

        for (int l = 0; l < c_.num_layers; ++l) {
            std::string pre = layer_prefix(l);
            kernels::layer_norm_row(x.data(), p_.at(pre + "ln1.g").data.data(),
                                    p_.at(pre + "ln1.b").data.data(), xn.data(), d);
            kernels::matmul(xn.data(), p_.at(pre + "attn.wqkv").data.data(), qkv.data(), 1, d, 3 * d);
            const Tensor<T>& bqkv = p_.at(pre + "attn.bqkv");
            for (int j = 0; j < 3 * d; ++j) qkv[j] += bqkv[j];
            for (int h = 0; h < H; ++h) {
                auto& K = keys_[static_cast<std::size_t>(l) * H + h];
                auto& V = vals_[static_cast<std::size_t>(l) * H + h];
                K.insert(K.end(), qkv.begin() + d + h * hd, qkv.begin() + d + (h + 1) * hd);
                V.insert(V.end(), qkv.begin() + 2 * d + h * hd, qkv.begin() + 2 * d + (h + 1) * hd);
                kernels::attend_prefix(qkv.data() + h * hd, K.data(), V.data(), pos_ + 1, hd, inv,
                                       scratch.data(), att.data() + h * hd);
            }
            kernels::matmul(att.data(), p_.at(pre + "attn.wo").data.data(), tmp.data(), 1, d, d);
            const Tensor<T>& bo = p_.at(pre + "attn.bo");
            for (int j = 0; j < d; ++j) x[j] += tmp[j] + bo[j];

            kernels::layer_norm_row(x.data(), p_.at(pre + "ln2.g").data.data(),
                                    p_.at(pre + "ln2.b").data.data(), xn.data(), d);
            std::vector<T> hbuf(m);
            kernels::matmul(xn.data(), p_.at(pre + "mlp.wfc").data.data(), hbuf.data(), 1, d, m);
            const Tensor<T>& bfc = p_.at(pre + "mlp.bfc");
            for (int j = 0; j < m; ++j) hbuf[j] = kernels::gelu(hbuf[j] + bfc[j]);
            kernels::matmul(hbuf.data(), p_.at(pre + "mlp.wproj").data.data(), tmp.data(), 1, m, d);
            const Tensor<T>& bproj = p_.at(pre + "mlp.bproj");
            for (int j = 0; j < d; ++j) x[j] += tmp[j] + bproj[j];
        }
        kernels::layer_norm_row(x.data(), p_.at("lnf.g").data.data(), p_.at("lnf.b").data.data(),
                                xn.data(), d);
        std::vector<T> logits(c_.vocab_size);
        kernels::matmul_nt(xn.data(), emb.data.data(), logits.data(), 1, d, c_.vocab_size);
        ++pos_;
        return logits;
    }

  private:
    ModelConfig c_;
    const ParameterSet<T>& p_;
    int pos_;
    std::vector<std::vector<T>> keys_, vals_;  // [layer*H + h] -> [len, hd] flat
};

inline TokenId draw_from(const std::vector<double>& dist, std::mt19937_64& rng) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double cum = 0.0;
    int last = -1;
    for (int i = 0; i < static_cast<int>(dist.size()); ++i) {
        if (dist[i] <= 0.0) continue;
        last = i;
        cum += dist[i];
        if (u < cum) return i;
    }
    return last;  // guard against rounding at the tail
}

template <class T>
Trajectory sample(const ModelConfig& c, const ParameterSet<T>& params,
                  const std::vector<TokenId>& context, const SamplingParams& sp) {
    sp.validate();
    if (context.empty()) throw std::invalid_argument("sample: empty context");
    if (static_cast<int>(context.size()) + sp.max_new_tokens > c.context_length)
        throw std::invalid_argument("sample: context + max_new_tokens exceeds context_length");

    std::mt19937_64 rng(sp.seed);
    InferenceSession<T> session(c, params);
    std::vector<T> logits;
    for (TokenId t : context) logits = session.step(t);

    Trajectory traj;
    traj.prompt_token_count = static_cast<int>(context.size());
    traj.stop_reason = StopReason::max_len;
    std::vector<T> ls(c.vocab_size);
    for (int n = 0; n < sp.max_new_tokens; ++n) {
        auto dist = filtered_distribution(logits.data(), c.vocab_size, sp);
        TokenId tok = draw_from(dist, rng);
        kernels::log_softmax_row(logits.data(), ls.data(), c.vocab_size);
        traj.tokens.push_back(tok);
        traj.log_probs.push_back(std::log(dist[tok]));
        traj.policy_log_probs.push_back(static_cast<double>(ls[tok]));
        if (tok == vocab::EOS) {
            traj.stop_reason = StopReason::eos;
            break;
        }
        if (n + 1 < sp.max_new_tokens) logits = session.step(tok);
    }
    return traj;
}

// Re-derives the per-token log-probabilities of an existing trajectory from a
// fresh full forward plus the identical filter pipeline.
template <class T>
std::vector<double> rescore_log_probs(const ModelConfig& c, const ParameterSet<T>& params,
                                      const std::vector<TokenId>& context, const Trajectory& traj,
                                      const SamplingParams& sp) {
    std::vector<TokenId> full = context;
    full.insert(full.end(), traj.tokens.begin(), traj.tokens.end());
    Tensor<T> logits = forward_logits(c, params, full);
    std::vector<double> out;
    out.reserve(traj.tokens.size());
    int base = static_cast<int>(context.size()) - 1;
    for (std::size_t n = 0; n < traj.tokens.size(); ++n) {
        const T* row = &logits.at(base + static_cast<int>(n), 0);
        auto dist = filtered_distribution(row, c.vocab_size, sp);
        out.push_back(std::log(dist[traj.tokens[n]]));
    }
    return out;
}

}  // namespace opsd::lm
