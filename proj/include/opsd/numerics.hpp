#pragma once

#include <functional>
#include <stdexcept>

#include "opsd/kernels.hpp"
#include "opsd/tensor.hpp"

namespace opsd {

// Row-wise softmax, max-subtracted. Errors on non-finite input.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (!logits.all_finite()) throw std::invalid_argument("softmax: non-finite input");
    Tensor<T> out = logits;
    int m = out.rows(), n = out.cols();
    for (int i = 0; i < m; ++i) kernels::softmax_prefix(&out.at(i, 0), n);
    return out;
}

// Row-wise log-softmax via log-sum-exp (never materializes softmax).
template <class T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
    if (!logits.all_finite()) throw std::invalid_argument("log_softmax: non-finite input");
    Tensor<T> out = Tensor<T>::zeros(logits.shape);
    int m = logits.rows(), n = logits.cols();
    for (int i = 0; i < m; ++i) kernels::log_softmax_row(&logits.at(i, 0), &out.at(i, 0), n);
    return out;
}

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), where
// numeric is the central difference (f(x+h) - f(x-h)) / 2h per coordinate.
inline double finite_diff_check(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, const Tensor<double>& analytic_grad,
                                double h) {
    if (!x.same_shape(analytic_grad))
        throw std::invalid_argument("finite_diff_check: gradient shape mismatch");
    Tensor<double> xp = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = xp[i];
        xp[i] = orig + h;
        double fp = f(xp);
        xp[i] = orig - h;
        double fm = f(xp);
        xp[i] = orig;
        double numeric = (fp - fm) / (2.0 * h);
        double err = std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace opsd
