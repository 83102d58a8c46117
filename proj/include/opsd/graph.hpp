#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "opsd/kernels.hpp"
#include "opsd/tensor.hpp"

namespace opsd {

// Reverse-mode tape. Nodes are appended in execution order; backward() walks
// the tape in reverse, so every node reachable from the loss gets exactly one
// accumulation pass. Confined to one thread.
template <class T>
class Graph {
  public:
    using NodeId = int;

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;  // allocated lazily
        bool rg = false;
        std::function<void(Graph&)> back;
    };

    const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].val; }

    // Zero tensor if the node never received gradient.
    Tensor<T> gradient(NodeId id) const {
        const Node& n = nodes_[check(id)];
        if (n.grad.data.empty()) return Tensor<T>::zeros(n.val.shape);
        return n.grad;
    }

    bool requires_grad(NodeId id) const { return nodes_[check(id)].rg; }
    std::size_t num_nodes() const { return nodes_.size(); }

    NodeId input(Tensor<T> v) { return push(std::move(v), false, nullptr); }
    NodeId param(Tensor<T> v) { return push(std::move(v), true, nullptr); }

    NodeId detach(NodeId a) { return input(nodes_[check(a)].val); }

    NodeId add(NodeId a, NodeId b) { return binary_elem(a, b, "add", [](T x, T y) { return x + y; },
                                                        [](T) { return T(1); }, [](T) { return T(1); }); }
    NodeId sub(NodeId a, NodeId b) { return binary_elem(a, b, "sub", [](T x, T y) { return x - y; },
                                                        [](T) { return T(1); }, [](T) { return T(-1); }); }

    NodeId mul(NodeId a, NodeId b) {
        require_same(a, b, "mul");
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {
                Tensor<T>& ga = g.grad_ref(a);
                const Tensor<T>& vb2 = g.val(b);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb2[i];
            }
            if (g.rg(b)) {
                Tensor<T>& gb = g.grad_ref(b);
                const Tensor<T>& va2 = g.val(a);
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va2[i];
            }
        });
    }

    // s*a + c, elementwise with scalar constants
    NodeId affine(NodeId a, T s, T c) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = s * v + c;
        return push(std::move(out), rg(a), [a, s](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
        });
    }

    NodeId add_const(NodeId a, const Tensor<T>& c) {
        if (val(a).shape != c.shape) throw std::invalid_argument("add_const: shape mismatch");
        Tensor<T> out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
        return push(std::move(out), rg(a), pass_through(a));
    }

    NodeId mul_const(NodeId a, const Tensor<T>& c) {
        if (val(a).shape != c.shape) throw std::invalid_argument("mul_const: shape mismatch");
        Tensor<T> out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
        Tensor<T> cc = c;
        return push(std::move(out), rg(a), [a, cc = std::move(cc)](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * cc[i];
        });
    }

    // [m,n] + row vector [n]
    NodeId add_bias(NodeId a, NodeId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.cols() != static_cast<int>(vb.size()))
            throw std::invalid_argument("add_bias: bias length != cols");
        Tensor<T> out = va;
        int m = va.rows(), n = va.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) += vb[j];
        return push(std::move(out), rg(a) || rg(b), [a, b, m, n](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {
                Tensor<T>& ga = g.grad_ref(a);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.rg(b)) {
                Tensor<T>& gb = g.grad_ref(b);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb[j] += go.at(i, j);
            }
        });
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int m = va.rows(), k = va.cols(), n = vb.cols();
        if (vb.rows() != k) throw std::invalid_argument("matmul: inner dims " + shape_str(va.shape) +
                                                        " x " + shape_str(vb.shape));
        Tensor<T> out = Tensor<T>::zeros({m, n});
        kernels::matmul(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), rg(a) || rg(b), [a, b, m, k, n](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {  // dA += dC * B^T
                Tensor<T> tmp = Tensor<T>::zeros({m, k});
                kernels::matmul_nt(go.data.data(), g.val(b).data.data(), tmp.data.data(), m, n, k);
                g.accumulate(a, tmp);
            }
            if (g.rg(b)) {  // dB += A^T * dC
                Tensor<T> tmp = Tensor<T>::zeros({k, n});
                kernels::matmul_tn(g.val(a).data.data(), go.data.data(), tmp.data.data(), m, k, n);
                g.accumulate(b, tmp);
            }
        });
    }

    // a[m,k] * b[n,k]^T -> [m,n]
    NodeId matmul_nt(NodeId a, NodeId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int m = va.rows(), k = va.cols(), n = vb.rows();
        if (vb.cols() != k) throw std::invalid_argument("matmul_nt: inner dims");
        Tensor<T> out = Tensor<T>::zeros({m, n});
        kernels::matmul_nt(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        return push(std::move(out), rg(a) || rg(b), [a, b, m, k, n](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {  // dA += dC * B
                Tensor<T> tmp = Tensor<T>::zeros({m, k});
                kernels::matmul(go.data.data(), g.val(b).data.data(), tmp.data.data(), m, n, k);
                g.accumulate(a, tmp);
            }
            if (g.rg(b)) {  // dB += dC^T * A
                Tensor<T> tmp = Tensor<T>::zeros({n, k});
                kernels::matmul_tn(go.data.data(), g.val(a).data.data(), tmp.data.data(), m, n, k);
                g.accumulate(b, tmp);
            }
        });
    }

    NodeId rows_slice(NodeId a, int r0, int r1) {
        const Tensor<T>& va = val(a);
        int n = va.cols();
        if (r0 < 0 || r1 > va.rows() || r0 >= r1) throw std::invalid_argument("rows_slice: bad range");
        Tensor<T> out = Tensor<T>::zeros({r1 - r0, n});
        std::copy(va.data.begin() + static_cast<std::size_t>(r0) * n,
                  va.data.begin() + static_cast<std::size_t>(r1) * n, out.data.begin());
        return push(std::move(out), rg(a), [a, r0, n](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& ga = g.grad_ref(a);
            std::size_t off = static_cast<std::size_t>(r0) * n;
            for (std::size_t i = 0; i < go.size(); ++i) ga[off + i] += go[i];
        });
    }

    NodeId concat_rows(NodeId a, NodeId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.cols() != vb.cols()) throw std::invalid_argument("concat_rows: col mismatch");
        Tensor<T> out = Tensor<T>::zeros({va.rows() + vb.rows(), va.cols()});
        std::copy(va.data.begin(), va.data.end(), out.data.begin());
        std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.size());
        std::size_t na = va.size();
        return push(std::move(out), rg(a) || rg(b), [a, b, na](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {
                Tensor<T>& ga = g.grad_ref(a);
                for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
            }
            if (g.rg(b)) {
                Tensor<T>& gb = g.grad_ref(b);
                for (std::size_t i = na; i < go.size(); ++i) gb[i - na] += go[i];
            }
        });
    }

    NodeId gelu(NodeId a) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = kernels::gelu(v);
        return push(std::move(out), rg(a), [a](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& x = g.val(a);
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * kernels::gelu_grad(x[i]);
        });
    }

    NodeId exp_(NodeId a) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = std::exp(v);
        return push(std::move(out), rg(a), [a, self = int(nodes_.size())](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& y = g.val(self);
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
        });
    }

    // log(max(x, floor)); zero gradient where the floor is active
    NodeId log_floor(NodeId a, T floor) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = std::log(std::max(v, floor));
        return push(std::move(out), rg(a), [a, floor](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& x = g.val(a);
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i)
                if (x[i] > floor) ga[i] += go[i] / x[i];
        });
    }

    NodeId elem_min(NodeId a, NodeId b) {
        require_same(a, b, "elem_min");
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(va[i], vb[i]);
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& va2 = g.val(a);
            const Tensor<T>& vb2 = g.val(b);
            for (std::size_t i = 0; i < go.size(); ++i) {
                if (va2[i] <= vb2[i]) {
                    if (g.rg(a)) g.grad_ref(a)[i] += go[i];
                } else if (g.rg(b)) {
                    g.grad_ref(b)[i] += go[i];
                }
            }
        });
    }

    NodeId clamp(NodeId a, T lo, T hi) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = std::min(std::max(v, lo), hi);
        return push(std::move(out), rg(a), [a, lo, hi](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& x = g.val(a);
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i)
                if (x[i] > lo && x[i] < hi) ga[i] += go[i];
        });
    }

    NodeId layer_norm(NodeId a, NodeId gain, NodeId bias) {
        const Tensor<T>& va = val(a);
        int m = va.rows(), d = va.cols();
        if (static_cast<int>(val(gain).size()) != d || static_cast<int>(val(bias).size()) != d)
            throw std::invalid_argument("layer_norm: affine length != cols");
        Tensor<T> out = Tensor<T>::zeros({m, d});
        for (int i = 0; i < m; ++i)
            kernels::layer_norm_row(&va.at(i, 0), val(gain).data.data(), val(bias).data.data(),
                                    &out.at(i, 0), d);
        return push(std::move(out), rg(a) || rg(gain) || rg(bias), [a, gain, bias, m, d](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& x = g.val(a);
            const Tensor<T>& gn = g.val(gain);
            for (int i = 0; i < m; ++i) {
                const T* xr = &x.at(i, 0);
                const T* dy = &go.at(i, 0);
                T mean = T(0);
                for (int j = 0; j < d; ++j) mean += xr[j];
                mean /= T(d);
                T var = T(0);
                for (int j = 0; j < d; ++j) {
                    T c = xr[j] - mean;
                    var += c * c;
                }
                var /= T(d);
                T inv = T(1) / std::sqrt(var + T(kernels::kLayerNormEps));
                if (g.rg(gain) || g.rg(bias)) {
                    for (int j = 0; j < d; ++j) {
                        T xh = (xr[j] - mean) * inv;
                        if (g.rg(gain)) g.grad_ref(gain)[j] += dy[j] * xh;
                        if (g.rg(bias)) g.grad_ref(bias)[j] += dy[j];
                    }
                }
                if (g.rg(a)) {
                    T mh = T(0), mhx = T(0);
                    for (int j = 0; j < d; ++j) {
                        T h = gn[j] * dy[j];
                        T xh = (xr[j] - mean) * inv;
                        mh += h;
                        mhx += h * xh;
                    }
                    mh /= T(d);
                    mhx /= T(d);
                    Tensor<T>& ga = g.grad_ref(a);
                    for (int j = 0; j < d; ++j) {
                        T h = gn[j] * dy[j];
                        T xh = (xr[j] - mean) * inv;
                        ga.at(i, j) += (h - mh - xh * mhx) * inv;
                    }
                }
            }
        });
    }

    NodeId embedding(NodeId table, const std::vector<int>& ids) {
        const Tensor<T>& tb = val(table);
        int d = tb.cols();
        for (int id : ids)
            if (id < 0 || id >= tb.rows()) throw std::invalid_argument("embedding: id out of range");
        Tensor<T> out = Tensor<T>::zeros({static_cast<int>(ids.size()), d});
        for (std::size_t i = 0; i < ids.size(); ++i)
            std::copy(&tb.at(ids[i], 0), &tb.at(ids[i], 0) + d, &out.at(static_cast<int>(i), 0));
        return push(std::move(out), rg(table), [table, ids, d](Graph& g) {
            if (!g.rg(table)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& gt = g.grad_ref(table);
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j) gt.at(ids[i], j) += go.at(static_cast<int>(i), j);
        });
    }

    // Multi-head causal self-attention over packed qkv [n, 3*d].
    NodeId causal_attention(NodeId qkv, int num_heads) {
        const Tensor<T>& v = val(qkv);
        int n = v.rows();
        if (v.cols() % 3 != 0) throw std::invalid_argument("causal_attention: qkv cols not 3*d");
        int d = v.cols() / 3;
        if (d % num_heads != 0) throw std::invalid_argument("causal_attention: d % heads != 0");
        int hd = d / num_heads;
        T inv = T(1) / std::sqrt(T(hd));

        // Strided head-major copies so attend_prefix sees contiguous [n,hd] rows.
        auto gather = [&](const Tensor<T>& src, int col0, int h) {
            Tensor<T> out = Tensor<T>::zeros({n, hd});
            for (int i = 0; i < n; ++i)
                std::copy(&src.at(i, col0 + h * hd), &src.at(i, col0 + h * hd) + hd, &out.at(i, 0));
            return out;
        };

        Tensor<T> out = Tensor<T>::zeros({n, d});
        auto att = std::make_shared<std::vector<Tensor<T>>>();  // per head, [n,n] lower-tri
        std::vector<T> scratch(static_cast<std::size_t>(n));
        for (int h = 0; h < num_heads; ++h) {
            Tensor<T> Q = gather(v, 0, h), K = gather(v, d, h), V = gather(v, 2 * d, h);
            Tensor<T> A = Tensor<T>::zeros({n, n});
            for (int i = 0; i < n; ++i) {
                kernels::attend_prefix(&Q.at(i, 0), K.data.data(), V.data.data(), i + 1, hd, inv,
                                       scratch.data(), &out.at(i, h * hd));
                std::copy(scratch.begin(), scratch.begin() + i + 1, &A.at(i, 0));
            }
            att->push_back(std::move(A));
        }
        return push(std::move(out), rg(qkv), [qkv, num_heads, n, d, hd, inv, att](Graph& g) {
            if (!g.rg(qkv)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& v2 = g.val(qkv);
            Tensor<T>& gq = g.grad_ref(qkv);
            for (int h = 0; h < num_heads; ++h) {
                const Tensor<T>& A = (*att)[h];
                int qc = h * hd, kc = d + h * hd, vc = 2 * d + h * hd;
                for (int i = 0; i < n; ++i) {
                    const T* dout = &go.at(i, h * hd);
                    // da_j = <dout, v_j>;  dv_j += a_j * dout
                    std::vector<T> da(i + 1);
                    for (int j = 0; j <= i; ++j) {
                        da[j] = kernels::dot(dout, &v2.at(j, vc), hd);
                        kernels::axpy(A.at(i, j), dout, &gq.at(j, vc), hd);
                    }
                    T s = T(0);
                    for (int j = 0; j <= i; ++j) s += A.at(i, j) * da[j];
                    for (int j = 0; j <= i; ++j) {
                        T ds = A.at(i, j) * (da[j] - s) * inv;
                        kernels::axpy(ds, &v2.at(j, kc), &gq.at(i, qc), hd);
                        kernels::axpy(ds, &v2.at(i, qc), &gq.at(j, kc), hd);
                    }
                }
            }
        });
    }

    NodeId softmax_rows(NodeId a) {
        require_finite(a, "softmax");
        const Tensor<T>& va = val(a);
        Tensor<T> out = va;
        int m = va.rows(), n = va.cols();
        for (int i = 0; i < m; ++i) kernels::softmax_prefix(&out.at(i, 0), n);
        return push(std::move(out), rg(a), [a, m, n, self = int(nodes_.size())](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& p = g.val(self);
            Tensor<T>& ga = g.grad_ref(a);
            for (int i = 0; i < m; ++i) {
                T s = T(0);
                for (int j = 0; j < n; ++j) s += p.at(i, j) * go.at(i, j);
                for (int j = 0; j < n; ++j) ga.at(i, j) += p.at(i, j) * (go.at(i, j) - s);
            }
        });
    }

    NodeId log_softmax_rows(NodeId a) {
        require_finite(a, "log_softmax");
        const Tensor<T>& va = val(a);
        int m = va.rows(), n = va.cols();
        Tensor<T> out = Tensor<T>::zeros({m, n});
        for (int i = 0; i < m; ++i) kernels::log_softmax_row(&va.at(i, 0), &out.at(i, 0), n);
        return push(std::move(out), rg(a), [a, m, n, self = int(nodes_.size())](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            const Tensor<T>& ls = g.val(self);
            Tensor<T>& ga = g.grad_ref(a);
            for (int i = 0; i < m; ++i) {
                T s = T(0);
                for (int j = 0; j < n; ++j) s += go.at(i, j);
                for (int j = 0; j < n; ++j) ga.at(i, j) += go.at(i, j) - std::exp(ls.at(i, j)) * s;
            }
        });
    }

    // out[i] = a[i, idx[i]]
    NodeId pick(NodeId a, const std::vector<int>& idx) {
        const Tensor<T>& va = val(a);
        if (static_cast<int>(idx.size()) != va.rows()) throw std::invalid_argument("pick: index count != rows");
        Tensor<T> out = Tensor<T>::zeros({static_cast<int>(idx.size())});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= va.cols()) throw std::invalid_argument("pick: index out of range");
            out[i] = va.at(static_cast<int>(i), idx[i]);
        }
        return push(std::move(out), rg(a), [a, idx](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < idx.size(); ++i) ga.at(static_cast<int>(i), idx[i]) += go[i];
        });
    }

    NodeId sum_all(NodeId a) {
        const Tensor<T>& va = val(a);
        T s = T(0);
        for (T v : va.data) s += v;
        return push(Tensor<T>::scalar(s), rg(a), [a](Graph& g) {
            if (!g.rg(a)) return;
            T go = g.out_grad()[0];
            Tensor<T>& ga = g.grad_ref(a);
            for (T& v : ga.data) v += go;
        });
    }

    NodeId mean_all(NodeId a) {
        auto n = static_cast<T>(val(a).size());
        return affine(sum_all(a), T(1) / n, T(0));
    }

    // loss must be scalar. One reverse sweep over the tape.
    void backward(NodeId loss) {
        Node& ln = nodes_[check(loss)];
        if (ln.val.size() != 1) throw std::invalid_argument("backward: loss is not scalar");
        grad_ref(loss)[0] += T(1);
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.rg || !n.back || n.grad.data.empty()) continue;
            cur_ = id;
            n.back(*this);
        }
        cur_ = -1;
    }

    // -- helpers used by op closures --
    const Tensor<T>& val(NodeId id) const { return nodes_[check(id)].val; }
    bool rg(NodeId id) const { return nodes_[check(id)].rg; }
    Tensor<T>& grad_ref(NodeId id) {
        Node& n = nodes_[check(id)];
        if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
        return n.grad;
    }
    const Tensor<T>& out_grad() const { return nodes_[cur_].grad; }
    void accumulate(NodeId id, const Tensor<T>& t) {
        Tensor<T>& g = grad_ref(id);
        for (std::size_t i = 0; i < t.size(); ++i) g[i] += t[i];
    }

  private:
    std::vector<Node> nodes_;
    int cur_ = -1;

    NodeId check(NodeId id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) throw std::out_of_range("graph: bad node id");
        return id;
    }

    NodeId push(Tensor<T> v, bool needs_grad, std::function<void(Graph&)> back) {
        nodes_.push_back(
            Node{std::move(v), Tensor<T>{}, needs_grad, needs_grad ? std::move(back) : nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::function<void(Graph&)> pass_through(NodeId a) {
        return [a](Graph& g) {
            if (!g.rg(a)) return;
            const Tensor<T>& go = g.out_grad();
            Tensor<T>& ga = g.grad_ref(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }

    void require_same(NodeId a, NodeId b, const char* op) const {
        if (!val(a).same_shape(val(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(val(a).shape) +
                                        " vs " + shape_str(val(b).shape));
    }

    void require_finite(NodeId a, const char* op) const {
        if (!val(a).all_finite()) throw std::invalid_argument(std::string(op) + ": non-finite input");
    }

    template <class F, class Da, class Db>
    NodeId binary_elem(NodeId a, NodeId b, const char* name, F f, Da, Db db) {
        require_same(a, b, name);
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        Tensor<T> out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i], vb[i]);
        T sb = db(T(0));
        return push(std::move(out), rg(a) || rg(b), [a, b, sb](Graph& g) {
            const Tensor<T>& go = g.out_grad();
            if (g.rg(a)) {
                Tensor<T>& ga = g.grad_ref(a);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.rg(b)) {
                Tensor<T>& gb = g.grad_ref(b);
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += sb * go[i];
            }
        });
    }
};

}  // namespace opsd
