#include "dato/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dato {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Shape::Shape(std::initializer_list<int> d) : dims(d) {
    for (int v : dims) require(v >= 1, "shape: every dim must be >= 1, got " + str());
}

Shape::Shape(std::vector<int> d) : dims(std::move(d)) {
    for (int v : dims) require(v >= 1, "shape: every dim must be >= 1, got " + str());
}

long Shape::elements() const {
    long n = 1;
    for (int v : dims) n *= v;
    return n;
}

std::string Shape::str() const {
    std::string s = "(";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

int SeededRng::next_int(int n) {
    if (n <= 0) throw std::invalid_argument("next_int: n must be positive");
    int v = (int)(next_double() * n);
    return v >= n ? n - 1 : v;
}

double SeededRng::gaussian() {
    if (have_spare) {
        have_spare = false;
        return spare;
    }
    // Box-Muller; u1 = 0 is shifted away to keep log finite.
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare = r * std::sin(a);
    have_spare = true;
    return r * std::cos(a);
}

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    // splitmix64 finalizer over the combined value.
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
    data.assign((size_t)shape.elements(), fill);
}

double& Tensor::at2(int i, int j) {
    return data[(size_t)((long)i * shape[1] + j)];
}
double Tensor::at2(int i, int j) const {
    return data[(size_t)((long)i * shape[1] + j)];
}
double& Tensor::at3(int i, int j, int k) {
    return data[(size_t)(((long)i * shape[1] + j) * shape[2] + k)];
}
double Tensor::at3(int i, int j, int k) const {
    return data[(size_t)(((long)i * shape[1] + j) * shape[2] + k)];
}
double& Tensor::at4(int b, int c, int h, int w) {
    return data[(size_t)((((long)b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
}
double Tensor::at4(int b, int c, int h, int w) const {
    return data[(size_t)((((long)b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
}

bool Tensor::same_bits(const Tensor& o) const {
    if (shape != o.shape) return false;
    if (data.empty()) return o.data.empty();
    return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(double)) == 0;
}

Tensor seeded_fill(const Shape& shape, uint64_t seed, double scale) {
    require(shape.rank() >= 1, "seeded_fill: rank-0 shape");
    Tensor t(shape);
    SeededRng rng(seed);
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

Tensor gaussian_fill(const Shape& shape, uint64_t seed) {
    require(shape.rank() >= 1, "gaussian_fill: rank-0 shape");
    Tensor t(shape);
    SeededRng rng(seed);
    for (double& v : t.data) v = rng.gaussian();
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b, kernels::Exec e) {
    require(a.shape.rank() == 2 && b.shape.rank() == 2, "matmul: rank-2 operands required");
    require(a.shape[1] == b.shape[0],
            "matmul: inner dims mismatch " + a.shape.str() + " x " + b.shape.str());
    Tensor c(Shape{a.shape[0], b.shape[1]});
    kernels::matmul(a.ptr(), b.ptr(), c.ptr(), a.shape[0], a.shape[1], b.shape[1], e);
    return c;
}

Tensor softmax_rows(const Tensor& x, kernels::Exec e) {
    require(x.shape.rank() == 2, "softmax_rows: rank-2 input required");
    Tensor y(x.shape);
    kernels::softmax_rows(x.ptr(), y.ptr(), x.shape[0], x.shape[1], e);
    return y;
}

Tensor avg_pool2(const Tensor& x, kernels::Exec e) {
    require(x.shape.rank() == 4, "avg_pool2: rank-4 input required");
    const int h = x.shape[2], w = x.shape[3];
    require(h % 2 == 0 && w % 2 == 0, "avg_pool2: odd spatial dims " + x.shape.str());
    Tensor y(Shape{x.shape[0], x.shape[1], h / 2, w / 2});
    kernels::avg_pool2(x.ptr(), y.ptr(), x.shape[0] * x.shape[1], h, w, e);
    return y;
}

Tensor upsample_nearest2(const Tensor& x, kernels::Exec e) {
    require(x.shape.rank() == 4, "upsample_nearest2: rank-4 input required");
    Tensor y(Shape{x.shape[0], x.shape[1], x.shape[2] * 2, x.shape[3] * 2});
    kernels::upsample2(x.ptr(), y.ptr(), x.shape[0] * x.shape[1], x.shape[2], x.shape[3], e);
    return y;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape == b.shape, std::string(op) + ": shape mismatch " +
                                    a.shape.str() + " vs " + b.shape.str());
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b, kernels::Exec e) {
    require_same_shape(a, b, "add");
    Tensor c(a.shape);
    kernels::add(a.ptr(), b.ptr(), c.ptr(), a.size(), e);
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b, kernels::Exec e) {
    require_same_shape(a, b, "sub");
    Tensor c(a.shape);
    kernels::sub(a.ptr(), b.ptr(), c.ptr(), a.size(), e);
    return c;
}

Tensor tanh_map(const Tensor& x, kernels::Exec e) {
    Tensor y(x.shape);
    kernels::tanh_map(x.ptr(), y.ptr(), x.size(), e);
    return y;
}

Tensor scaled(const Tensor& x, double s) {
    Tensor y(x.shape);
    for (long i = 0; i < x.size(); ++i) y.data[i] = x.data[i] * s;
    return y;
}

Tensor grid_to_tokens(const Tensor& x) {
    require(x.shape.rank() == 4, "grid_to_tokens: rank-4 input required");
    const int b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor t(Shape{b, h * w, c});
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    t.at3(bi, i * w + j, ci) = x.at4(bi, ci, i, j);
    return t;
}

Tensor tokens_to_grid(const Tensor& t, int h, int w) {
    require(t.shape.rank() == 3, "tokens_to_grid: rank-3 input required");
    require(t.shape[1] == h * w, "tokens_to_grid: token count " +
                                     std::to_string(t.shape[1]) + " != " +
                                     std::to_string(h) + "*" + std::to_string(w));
    const int b = t.shape[0], c = t.shape[2];
    Tensor x(Shape{b, c, h, w});
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    x.at4(bi, ci, i, j) = t.at3(bi, i * w + j, ci);
    return x;
}

Tensor tokens_to_grid(const Tensor& t) {
    require(t.shape.rank() == 3, "tokens_to_grid: rank-3 input required");
    const int n = t.shape[1];
    const int side = (int)std::lround(std::sqrt((double)n));
    require(side * side == n, "tokens_to_grid: token count not a perfect square");
    return tokens_to_grid(t, side, side);
}

Tensor batch_item(const Tensor& t, int b) {
    require(t.shape.rank() >= 2, "batch_item: rank >= 2 required");
    require(b >= 0 && b < t.shape[0], "batch_item: index out of range");
    std::vector<int> d(t.shape.dims.begin() + 1, t.shape.dims.end());
    Tensor item((Shape(d)));
    const long stride = item.size();
    std::memcpy(item.data.data(), t.data.data() + (size_t)b * stride,
                (size_t)stride * sizeof(double));
    return item;
}

void set_batch_item(Tensor& t, int b, const Tensor& item) {
    require(t.shape.rank() >= 2, "set_batch_item: rank >= 2 required");
    require(b >= 0 && b < t.shape[0], "set_batch_item: index out of range");
    const long stride = t.size() / t.shape[0];
    require(item.size() == stride, "set_batch_item: item size mismatch");
    std::memcpy(t.data.data() + (size_t)b * stride, item.data.data(),
                (size_t)stride * sizeof(double));
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
    require(a.shape.rank() == b.shape.rank() && a.shape.rank() >= 2,
            "concat_batch: rank mismatch");
    for (int i = 1; i < a.shape.rank(); ++i)
        require(a.shape[i] == b.shape[i], "concat_batch: trailing dims mismatch");
    std::vector<int> d = a.shape.dims;
    d[0] += b.shape[0];
    Tensor c((Shape(d)));
    std::memcpy(c.data.data(), a.data.data(), a.data.size() * sizeof(double));
    std::memcpy(c.data.data() + a.data.size(), b.data.data(),
                b.data.size() * sizeof(double));
    return c;
}

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (long i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / (double)a.size();
}

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace dato
