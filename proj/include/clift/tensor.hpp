#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clift {

inline constexpr double kPi = 3.14159265358979323846;

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. Mostly used as a 2-D matrix; 1-D and scalar
// values are stored as [n] and [1x1].
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
    Tensor(int r, int c) : Tensor(std::vector<int>{r, c}) {}

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    bool is_matrix() const { return shape.size() == 2; }

    int rows() const {
        if (!is_matrix()) throw std::logic_error("tensor is not 2-D: " + shape_str(shape));
        return shape[0];
    }
    int cols() const {
        if (!is_matrix()) throw std::logic_error("tensor is not 2-D: " + shape_str(shape));
        return shape[1];
    }

    T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    T* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * shape[1]; }
    const T* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * shape[1]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, T v) {
        Tensor t(r, c);
        t.fill(v);
        return t;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

namespace detail {

// C += A * B with A:MxK, B:KxN, all contiguous row-major. The k-loop is
// outside the j-loop so the inner loop is a contiguous axpy; accumulation
// order is fixed, which keeps results bitwise reproducible.
template <class T>
void mm_accum(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
Tensor<T> transposed(const Tensor<T>& x) {
    Tensor<T> t(x.cols(), x.rows());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) t.at(j, i) = x.at(i, j);
    return t;
}

}  // namespace detail

// Plain (non-differentiated) matrix product with optional transposes.
template <class T>
Tensor<T> t_matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
    const Tensor<T> at = ta ? detail::transposed(a) : Tensor<T>();
    const Tensor<T> bt = tb ? detail::transposed(b) : Tensor<T>();
    const Tensor<T>& A = ta ? at : a;
    const Tensor<T>& B = tb ? bt : b;
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(A.shape) +
                                    " vs " + shape_str(B.shape));
    Tensor<T> c(A.rows(), B.cols());
    detail::mm_accum(A.data.data(), B.data.data(), c.data.data(), A.rows(), A.cols(), B.cols());
    return c;
}

template <class T>
void t_axpy(Tensor<T>& y, const Tensor<T>& x, T alpha = T(1)) {
    check_same_shape(y, x, "axpy");
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

}  // namespace clift
