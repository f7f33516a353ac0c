#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "clift/tensor.hpp"

namespace clift {

// Reverse-mode autodiff over Tensor<T>. Each Var wraps a graph node holding
// the forward value, an accumulated gradient, and a backward closure that
// scatters the node's gradient into its parents. backward() walks the graph
// once in reverse topological order.

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;
    int backward_visits = 0;  // inspected by tests

    void ensure_grad() {
        if (grad.data.size() != value.data.size()) {
            grad = Tensor<T>(value.shape);
        }
    }
    void zero_grad() {
        if (grad.data.size() == value.data.size())
            grad.fill(T(0));
        else
            grad = Tensor<T>(value.shape);
    }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

    static Var constant(Tensor<T> v) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = false;
        return Var(n);
    }

    static Var param(Tensor<T> v) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = true;
        n->zero_grad();
        return Var(n);
    }

    bool valid() const { return n_ != nullptr; }
    const Tensor<T>& value() const { return n_->value; }
    Tensor<T>& value() { return n_->value; }
    Tensor<T>& grad() { return n_->grad; }
    const Tensor<T>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    Node<T>* node() const { return n_.get(); }
    std::shared_ptr<Node<T>> ptr() const { return n_; }

private:
    std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    for (auto& p : parents) {
        n->parents.push_back(p.ptr());
        n->requires_grad = n->requires_grad || p.requires_grad();
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Var<T>(n);
}

template <class T>
void accum(Node<T>* p, const Tensor<T>& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
}

// Post-order over the DAG, iterative to survive deep graphs.
template <class T>
void topo_order(Node<T>* root, std::vector<Node<T>*>& order) {
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* next = node->parents[idx++].get();
            if (seen.insert(next).second) stack.push_back({next, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Seeds d(root)/d(root) = 1 and propagates. The root must be scalar-shaped.
template <class T>
void backward(const Var<T>& root) {
    if (root.value().numel() != 1)
        throw std::invalid_argument("backward: root must be a scalar, got " +
                                    shape_str(root.value().shape));
    if (!root.requires_grad()) return;

    std::vector<Node<T>*> order;
    detail::topo_order(root.node(), order);

    root.node()->ensure_grad();
    root.node()->grad.data[0] += T(1);

    // order is post-order, so parents come before children; walk it backward.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->requires_grad && n->backward_fn) {
            n->backward_visits++;
            n->backward_fn(*n);
        }
    }
}

// ---- primitive ops ----

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
        detail::accum(pa, n.grad);
        detail::accum(pb, n.grad);
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
        detail::accum(pa, n.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i) pb->grad.data[i] -= n.grad.data[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(std::move(out), {a, b}, [pa, pb](Node<T>& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                pa->grad.data[i] += n.grad.data[i] * pb->value.data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                pb->grad.data[i] += n.grad.data[i] * pa->value.data[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, double s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data) v = static_cast<T>(v * s);
    auto pa = a.node();
    return detail::make_op<T>(std::move(out), {a}, [pa, s](Node<T>& n) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            pa->grad.data[i] += static_cast<T>(n.grad.data[i] * s);
    });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
    Tensor<T> out = t_matmul(a.value(), b.value(), ta, tb);
    auto pa = a.node();
    auto pb = b.node();
    return detail::make_op<T>(std::move(out), {a, b}, [pa, pb, ta, tb](Node<T>& n) {
        // C = op(A)·op(B); dA and dB fall out of the four transpose cases.
        if (pa->requires_grad) {
            Tensor<T> da = ta ? t_matmul(pb->value, n.grad, tb, true)
                              : t_matmul(n.grad, pb->value, false, !tb);
            detail::accum(pa, da);
        }
        if (pb->requires_grad) {
            Tensor<T> db = tb ? t_matmul(n.grad, pa->value, true, ta)
                              : t_matmul(pa->value, n.grad, !ta, false);
            detail::accum(pb, db);
        }
    });
}

// x: NxD, bias: 1xD broadcast over rows.
template <class T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& bias) {
    const int nr = x.value().rows(), nc = x.value().cols();
    if (bias.value().rows() != 1 || bias.value().cols() != nc)
        throw std::invalid_argument("add_rowvec: bias must be 1x" + std::to_string(nc));
    Tensor<T> out = x.value();
    for (int i = 0; i < nr; ++i) {
        T* row = out.row_ptr(i);
        const T* b = bias.value().row_ptr(0);
        for (int j = 0; j < nc; ++j) row[j] += b[j];
    }
    auto px = x.node();
    auto pb = bias.node();
    return detail::make_op<T>(std::move(out), {x, bias}, [px, pb, nr, nc](Node<T>& n) {
        detail::accum(px, n.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int i = 0; i < nr; ++i) {
                const T* g = n.grad.row_ptr(i);
                T* bg = pb->grad.row_ptr(0);
                for (int j = 0; j < nc; ++j) bg[j] += g[j];
            }
        }
    });
}

template <class T>
Var<T> gelu(const Var<T>& x) {
    static const double inv_sqrt2 = 0.70710678118654752440;
    static const double inv_sqrt2pi = 0.39894228040143267794;
    Tensor<T> out = x.value();
    for (auto& v : out.data) {
        const double xv = static_cast<double>(v);
        v = static_cast<T>(0.5 * xv * (1.0 + std::erf(xv * inv_sqrt2)));
    }
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px](Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            const double xv = static_cast<double>(px->value.data[i]);
            const double phi = 0.5 * (1.0 + std::erf(xv * inv_sqrt2));
            const double pdf = std::exp(-0.5 * xv * xv) * inv_sqrt2pi;
            px->grad.data[i] += static_cast<T>(static_cast<double>(n.grad.data[i]) * (phi + xv * pdf));
        }
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    auto px = x.node();
    Tensor<T> saved = out;
    return detail::make_op<T>(std::move(out), {x}, [px, saved](Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            const T s = saved.data[i];
            px->grad.data[i] += n.grad.data[i] * s * (T(1) - s);
        }
    });
}

// Row softmax with an optional additive logit mask (not differentiated).
// Masked-out entries should carry a large negative value in `mask`.
template <class T>
Var<T> softmax_rows(const Var<T>& x, const Tensor<T>* mask = nullptr) {
    const int nr = x.value().rows(), nc = x.value().cols();
    if (mask && (mask->rows() != nr || mask->cols() != nc))
        throw std::invalid_argument("softmax_rows: mask shape mismatch");
    Tensor<T> out(nr, nc);
    for (int i = 0; i < nr; ++i) {
        const T* in = x.value().row_ptr(i);
        const T* mk = mask ? mask->row_ptr(i) : nullptr;
        T* o = out.row_ptr(i);
        double mx = -1e300;
        for (int j = 0; j < nc; ++j) {
            const double v = static_cast<double>(in[j]) + (mk ? static_cast<double>(mk[j]) : 0.0);
            if (v > mx) mx = v;
        }
        double sum = 0;
        for (int j = 0; j < nc; ++j) {
            const double v = static_cast<double>(in[j]) + (mk ? static_cast<double>(mk[j]) : 0.0);
            const double e = std::exp(v - mx);
            o[j] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < nc; ++j) o[j] = static_cast<T>(static_cast<double>(o[j]) * inv);
    }
    auto px = x.node();
    Tensor<T> saved = out;
    return detail::make_op<T>(std::move(out), {x}, [px, saved, nr, nc](Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int i = 0; i < nr; ++i) {
            const T* g = n.grad.row_ptr(i);
            const T* y = saved.row_ptr(i);
            T* gx = px->grad.row_ptr(i);
            double dot = 0;
            for (int j = 0; j < nc; ++j) dot += static_cast<double>(g[j]) * static_cast<double>(y[j]);
            for (int j = 0; j < nc; ++j)
                gx[j] += static_cast<T>(static_cast<double>(y[j]) *
                                        (static_cast<double>(g[j]) - dot));
        }
    });
}

// Normalizes each row to zero mean / unit variance, then applies the
// per-column affine (gamma, beta). Population variance, eps inside the sqrt.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5) {
    const int nr = x.value().rows(), nc = x.value().cols();
    if (gamma.value().rows() != 1 || gamma.value().cols() != nc ||
        beta.value().rows() != 1 || beta.value().cols() != nc)
        throw std::invalid_argument("layer_norm: gamma/beta must be 1x" + std::to_string(nc));
    Tensor<T> out(nr, nc);
    Tensor<T> xhat(nr, nc);
    std::vector<double> inv_sigma(nr);
    for (int i = 0; i < nr; ++i) {
        const T* in = x.value().row_ptr(i);
        double mean = 0;
        for (int j = 0; j < nc; ++j) mean += static_cast<double>(in[j]);
        mean /= nc;
        double var = 0;
        for (int j = 0; j < nc; ++j) {
            const double d = static_cast<double>(in[j]) - mean;
            var += d * d;
        }
        var /= nc;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = is;
        const T* g = gamma.value().row_ptr(0);
        const T* b = beta.value().row_ptr(0);
        T* xh = xhat.row_ptr(i);
        T* o = out.row_ptr(i);
        for (int j = 0; j < nc; ++j) {
            const double h = (static_cast<double>(in[j]) - mean) * is;
            xh[j] = static_cast<T>(h);
            o[j] = static_cast<T>(h * static_cast<double>(g[j]) + static_cast<double>(b[j]));
        }
    }
    auto px = x.node();
    auto pg = gamma.node();
    auto pb = beta.node();
    return detail::make_op<T>(
        std::move(out), {x, gamma, beta},
        [px, pg, pb, xhat, inv_sigma, nr, nc](Node<T>& n) {
            for (int i = 0; i < nr; ++i) {
                const T* g = n.grad.row_ptr(i);
                const T* xh = xhat.row_ptr(i);
                if (pg->requires_grad) {
                    pg->ensure_grad();
                    T* gg = pg->grad.row_ptr(0);
                    for (int j = 0; j < nc; ++j) gg[j] += g[j] * xh[j];
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    T* gb = pb->grad.row_ptr(0);
                    for (int j = 0; j < nc; ++j) gb[j] += g[j];
                }
                if (px->requires_grad) {
                    px->ensure_grad();
                    const T* gam = pg->value.row_ptr(0);
                    T* gx = px->grad.row_ptr(i);
                    double mean_dh = 0, mean_dh_h = 0;
                    for (int j = 0; j < nc; ++j) {
                        const double dh = static_cast<double>(g[j]) * static_cast<double>(gam[j]);
                        mean_dh += dh;
                        mean_dh_h += dh * static_cast<double>(xh[j]);
                    }
                    mean_dh /= nc;
                    mean_dh_h /= nc;
                    for (int j = 0; j < nc; ++j) {
                        const double dh = static_cast<double>(g[j]) * static_cast<double>(gam[j]);
                        gx[j] += static_cast<T>(inv_sigma[i] *
                                                (dh - mean_dh - static_cast<double>(xh[j]) * mean_dh_h));
                    }
                }
            }
        });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
    Tensor<T> out(1, 1);
    double s = 0;
    for (T v : x.value().data) s += static_cast<double>(v);
    const size_t n = x.value().numel();
    out.data[0] = static_cast<T>(s / static_cast<double>(n));
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px, n](Node<T>& nd) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const T g = nd.grad.data[0] / static_cast<T>(n);
        for (auto& v : px->grad.data) v += g;
    });
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
    Tensor<T> out(1, 1);
    double s = 0;
    for (T v : x.value().data) s += static_cast<double>(v);
    out.data[0] = static_cast<T>(s);
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px](Node<T>& nd) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const T g = nd.grad.data[0];
        for (auto& v : px->grad.data) v += g;
    });
}

template <class T>
Var<T> gather_rows(const Var<T>& x, std::vector<int> rows) {
    const int nc = x.value().cols();
    const int nr = x.value().rows();
    Tensor<T> out(static_cast<int>(rows.size()), nc);
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= nr)
            throw std::out_of_range("gather_rows: index " + std::to_string(rows[r]));
        std::copy_n(x.value().row_ptr(rows[r]), nc, out.row_ptr(static_cast<int>(r)));
    }
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px, rows = std::move(rows), nc](Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t r = 0; r < rows.size(); ++r) {
            const T* g = n.grad.row_ptr(static_cast<int>(r));
            T* gx = px->grad.row_ptr(rows[r]);
            for (int j = 0; j < nc; ++j) gx[j] += g[j];
        }
    });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, int c0, int n) {
    const int nr = x.value().rows(), nc = x.value().cols();
    if (c0 < 0 || n <= 0 || c0 + n > nc) throw std::out_of_range("slice_cols: bad range");
    Tensor<T> out(nr, n);
    for (int i = 0; i < nr; ++i) std::copy_n(x.value().row_ptr(i) + c0, n, out.row_ptr(i));
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px, c0, n, nr](Node<T>& nd) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int i = 0; i < nr; ++i) {
            const T* g = nd.grad.row_ptr(i);
            T* gx = px->grad.row_ptr(i) + c0;
            for (int j = 0; j < n; ++j) gx[j] += g[j];
        }
    });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int nr = parts[0].value().rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.value().rows() != nr) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.value().cols();
    }
    Tensor<T> out(nr, total);
    int off = 0;
    for (const auto& p : parts) {
        const int w = p.value().cols();
        for (int i = 0; i < nr; ++i) std::copy_n(p.value().row_ptr(i), w, out.row_ptr(i) + off);
        off += w;
    }
    std::vector<Node<T>*> pn;
    std::vector<int> widths;
    for (const auto& p : parts) {
        pn.push_back(p.node());
        widths.push_back(p.value().cols());
    }
    return detail::make_op<T>(std::move(out), parts, [pn, widths, nr](Node<T>& nd) {
        int off = 0;
        for (size_t k = 0; k < pn.size(); ++k) {
            if (pn[k]->requires_grad) {
                pn[k]->ensure_grad();
                for (int i = 0; i < nr; ++i) {
                    const T* g = nd.grad.row_ptr(i) + off;
                    T* gx = pn[k]->grad.row_ptr(i);
                    for (int j = 0; j < widths[k]; ++j) gx[j] += g[j];
                }
            }
            off += widths[k];
        }
    });
}

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
    if (Tensor<T>::numel_of(shape) != x.value().numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor<T> out;
    out.shape = shape;
    out.data = x.value().data;
    auto px = x.node();
    return detail::make_op<T>(std::move(out), {x}, [px](Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) px->grad.data[i] += n.grad.data[i];
    });
}

// mean((a - b)^2) over all elements.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

}  // namespace clift
