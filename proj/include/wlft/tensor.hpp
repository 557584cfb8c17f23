#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wlft {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("tensor dimension must be non-negative");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major n-d array. All model values, gradients and image buffers
// use this one type; T is float at runtime and double in gradient checks.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor from(Shape s, std::vector<T> values) {
        if (shape_numel(s) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("tensor data does not match shape " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool defined() const { return !shape.empty() || !data.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // rank-2 [n, d]
    T& at(int n, int d) { return data[static_cast<std::size_t>(n) * dim(1) + d]; }
    const T& at(int n, int d) const { return data[static_cast<std::size_t>(n) * dim(1) + d]; }

    // rank-3 [c, h, w]
    T& at(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
    }
    const T& at(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
    }

    // rank-4 [n, c, h, w]
    T& at(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& s, const char* where) {
    if (t.shape != s)
        throw std::invalid_argument(std::string(where) + ": expected shape " + shape_str(s) +
                                    ", got " + shape_str(t.shape));
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* where) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(where) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got shape " + shape_str(t.shape));
}

}  // namespace wlft
