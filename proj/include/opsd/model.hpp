#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "opsd/graph.hpp"
#include "opsd/tensor.hpp"
#include "opsd/vocab.hpp"

namespace opsd::lm {

struct ModelConfig {
    int vocab_size = vocab::kSize;
    int context_length = 256;
    int embed_dim = 64;
    int num_layers = 2;
    int num_heads = 4;
    int mlp_multiplier = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 2 || context_length < 2 || embed_dim < 1 || num_layers < 1 ||
            num_heads < 1 || mlp_multiplier < 1)
            throw std::invalid_argument("ModelConfig: non-positive dimension");
        if (embed_dim % num_heads != 0)
            throw std::invalid_argument("ModelConfig: embed_dim not divisible by num_heads");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Named parameter arrays; std::map keeps iteration order deterministic.
template <class T>
using ParameterSet = std::map<std::string, Tensor<T>>;

inline std::string layer_prefix(int i) { return "layer" + std::to_string(i) + "."; }

// Input/output embeddings are tied: "tok_emb" doubles as the LM head.
inline long long param_count(const ModelConfig& c) {
    long long d = c.embed_dim, m = static_cast<long long>(c.mlp_multiplier) * d;
    long long per_layer = 2 * d            // ln1
                          + d * 3 * d + 3 * d  // qkv
                          + d * d + d          // out proj
                          + 2 * d              // ln2
                          + d * m + m          // fc
                          + m * d + d;         // proj
    return static_cast<long long>(c.vocab_size) * d + static_cast<long long>(c.context_length) * d +
           c.num_layers * per_layer + 2 * d;  // final ln
}

// Scaled-normal init (0.02), residual projections additionally scaled by
// 1/sqrt(2*num_layers). Draws happen in double in a fixed order, so the
// float and double instantiations see the same underlying values.
template <class T>
ParameterSet<T> init_params(const ModelConfig& c) {
    c.validate();
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto randn = [&](std::vector<int> shape, double scale) {
        Tensor<T> t = Tensor<T>::zeros(std::move(shape));
        for (auto& v : t.data) v = static_cast<T>(normal(rng) * scale);
        return t;
    };
    const double s = 0.02;
    const double rs = s / std::sqrt(2.0 * c.num_layers);
    int d = c.embed_dim, m = c.mlp_multiplier * d;

    ParameterSet<T> p;
    p["tok_emb"] = randn({c.vocab_size, d}, s);
    p["pos_emb"] = randn({c.context_length, d}, s);
    for (int i = 0; i < c.num_layers; ++i) {
        std::string pre = layer_prefix(i);
        p[pre + "ln1.g"] = Tensor<T>::full({d}, T(1));
        p[pre + "ln1.b"] = Tensor<T>::zeros({d});
        p[pre + "attn.wqkv"] = randn({d, 3 * d}, s);
        p[pre + "attn.bqkv"] = Tensor<T>::zeros({3 * d});
        p[pre + "attn.wo"] = randn({d, d}, rs);
        p[pre + "attn.bo"] = Tensor<T>::zeros({d});
        p[pre + "ln2.g"] = Tensor<T>::full({d}, T(1));
        p[pre + "ln2.b"] = Tensor<T>::zeros({d});
        p[pre + "mlp.wfc"] = randn({d, m}, s);
        p[pre + "mlp.bfc"] = Tensor<T>::zeros({m});
        p[pre + "mlp.wproj"] = randn({m, d}, rs);
        p[pre + "mlp.bproj"] = Tensor<T>::zeros({d});
    }
    p["lnf.g"] = Tensor<T>::full({d}, T(1));
    p["lnf.b"] = Tensor<T>::zeros({d});
    return p;
}

template <class T>
struct ForwardResult {
    typename Graph<T>::NodeId logits = -1;              // [len(tokens), vocab]
    std::map<std::string, int> param_nodes;             // empty unless track_grad
};

// Builds the causal forward pass on the tape. With track_grad=false the
// parameters enter as constants and the tape carries no gradient state, so
// values are bit-identical either way.
template <class T>
ForwardResult<T> forward_logits(Graph<T>& g, const ModelConfig& c, const ParameterSet<T>& params,
                                const std::vector<TokenId>& tokens, bool track_grad) {
    c.validate();
    int n = static_cast<int>(tokens.size());
    if (n == 0) throw std::invalid_argument("forward_logits: empty token sequence");
    if (n > c.context_length) throw std::invalid_argument("forward_logits: sequence exceeds context_length");
    for (TokenId t : tokens)
        if (t < 0 || t >= c.vocab_size) throw std::invalid_argument("forward_logits: token out of vocab");

    ForwardResult<T> r;
    std::map<std::string, int> node;
    for (const auto& [name, tensor] : params)
        node[name] = track_grad ? g.param(tensor) : g.input(tensor);
    if (track_grad) r.param_nodes = node;

    auto x = g.add(g.embedding(node.at("tok_emb"), tokens), g.rows_slice(node.at("pos_emb"), 0, n));
    for (int i = 0; i < c.num_layers; ++i) {
        std::string pre = layer_prefix(i);
        auto h = g.layer_norm(x, node.at(pre + "ln1.g"), node.at(pre + "ln1.b"));
        auto qkv = g.add_bias(g.matmul(h, node.at(pre + "attn.wqkv")), node.at(pre + "attn.bqkv"));
        auto att = g.causal_attention(qkv, c.num_heads);
        auto proj = g.add_bias(g.matmul(att, node.at(pre + "attn.wo")), node.at(pre + "attn.bo"));
        x = g.add(x, proj);
        auto h2 = g.layer_norm(x, node.at(pre + "ln2.g"), node.at(pre + "ln2.b"));
        auto fc = g.gelu(g.add_bias(g.matmul(h2, node.at(pre + "mlp.wfc")), node.at(pre + "mlp.bfc")));
        auto mlp = g.add_bias(g.matmul(fc, node.at(pre + "mlp.wproj")), node.at(pre + "mlp.bproj"));
        x = g.add(x, mlp);
    }
    x = g.layer_norm(x, node.at("lnf.g"), node.at("lnf.b"));
    r.logits = g.matmul_nt(x, node.at("tok_emb"));
    return r;
}

// Value-only forward; row t holds the logits predicting token t+1.
template <class T>
Tensor<T> forward_logits(const ModelConfig& c, const ParameterSet<T>& params,
                         const std::vector<TokenId>& tokens) {
    Graph<T> g;
    return g.value(forward_logits(g, c, params, tokens, false).logits);
}

}  // namespace opsd::lm
