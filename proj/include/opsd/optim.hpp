#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "opsd/model.hpp"

namespace opsd::optim {

struct LrSchedule {
    double peak_lr = 1e-3;
    long long total_steps = 0;
    double warmup_ratio = 0.1;
};

// Linear warmup from 0 to peak over W = warmup_ratio * total_steps, then
// cosine decay to 0 at total_steps.
inline double lr_at(double step, const LrSchedule& s) {
    if (s.total_steps <= 0) throw std::invalid_argument("lr_at: total_steps must be positive");
    if (s.warmup_ratio < 0.0 || s.warmup_ratio >= 1.0)
        throw std::invalid_argument("lr_at: warmup_ratio must be in [0,1)");
    if (step < 0.0 || step > static_cast<double>(s.total_steps))
        throw std::invalid_argument("lr_at: step out of range");
    double w = s.warmup_ratio * static_cast<double>(s.total_steps);
    if (step < w) return s.peak_lr * step / w;
    double t = (step - w) / (static_cast<double>(s.total_steps) - w);
    return s.peak_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Moments live in `m`/`v` keyed like the
// parameters so the trainer can serialize them into checkpoints.
template <class T>
struct AdamW {
    AdamWConfig cfg;
    long long t = 0;  // completed update count
    lm::ParameterSet<T> m, v;

    void step(lm::ParameterSet<T>& params, const lm::ParameterSet<T>& grads, double lr) {
        ++t;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (auto& [name, p] : params) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            const Tensor<T>& g = git->second;
            if (!g.same_shape(p)) throw std::invalid_argument("AdamW: shape mismatch for " + name);
            auto& mi = m.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
            auto& vi = v.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
            for (std::size_t i = 0; i < p.size(); ++i) {
                double gi = static_cast<double>(g[i]);
                if (!std::isfinite(gi))
                    throw std::runtime_error("AdamW: non-finite gradient in " + name);
                double mn = cfg.beta1 * static_cast<double>(mi[i]) + (1.0 - cfg.beta1) * gi;
                double vn = cfg.beta2 * static_cast<double>(vi[i]) + (1.0 - cfg.beta2) * gi * gi;
                mi[i] = static_cast<T>(mn);
                vi[i] = static_cast<T>(vn);
                double update = (mn / bc1) / (std::sqrt(vn / bc2) + cfg.eps);
                double decayed = static_cast<double>(p[i]) * (1.0 - lr * cfg.weight_decay);
                p[i] = static_cast<T>(decayed - lr * update);
            }
        }
    }
};

}  // namespace opsd::optim
