#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "dato/kernels.hpp"

// Dense float64 tensors with row-major layout and deterministic arithmetic:
// every reduction runs over ascending indices, so results are reproducible
// bit-for-bit across runs and across the serial/parallel kernel paths.

namespace dato {

struct Shape {
    std::vector<int> dims;

    Shape() = default;
    Shape(std::initializer_list<int> d);
    explicit Shape(std::vector<int> d);

    int rank() const { return (int)dims.size(); }
    int operator[](int i) const { return dims[i]; }
    long elements() const;
    bool operator==(const Shape& o) const { return dims == o.dims; }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;  // "(2,3,4)"
};

// std::mt19937_64 with an explicit output mapping instead of the standard
// distributions, so the value stream does not depend on the C++ library.
struct SeededRng {
    explicit SeededRng(uint64_t seed) : engine(seed) {}

    uint64_t next_u64() { return engine(); }
    // 53-bit mantissa mapping, uniform on [0,1).
    double next_double() { return (double)(engine() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
    int next_int(int n);  // [0,n)
    double gaussian();    // Box-Muller on the uniform stream

    std::mt19937_64 engine;
    bool have_spare = false;
    double spare = 0.0;
};

// Deterministic derivation of per-purpose seeds from one master seed
// (splitmix64 finalizer over seed ^ rotated tag).
uint64_t mix_seed(uint64_t seed, uint64_t tag);

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);

    long size() const { return (long)data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& at2(int i, int j);
    double at2(int i, int j) const;
    double& at3(int i, int j, int k);
    double at3(int i, int j, int k) const;
    double& at4(int b, int c, int h, int w);
    double at4(int b, int c, int h, int w) const;

    bool same_bits(const Tensor& o) const;  // shape + bitwise payload equality
};

// Seeded fills. seeded_fill draws uniform [-scale, scale); gaussian_fill
// draws standard normals.
Tensor seeded_fill(const Shape& shape, uint64_t seed, double scale = 1.0);
Tensor gaussian_fill(const Shape& shape, uint64_t seed);

Tensor matmul(const Tensor& a, const Tensor& b, kernels::Exec e = kernels::Exec::Auto);
Tensor softmax_rows(const Tensor& x, kernels::Exec e = kernels::Exec::Auto);
Tensor avg_pool2(const Tensor& x, kernels::Exec e = kernels::Exec::Auto);
Tensor upsample_nearest2(const Tensor& x, kernels::Exec e = kernels::Exec::Auto);
Tensor add(const Tensor& a, const Tensor& b, kernels::Exec e = kernels::Exec::Auto);
Tensor sub(const Tensor& a, const Tensor& b, kernels::Exec e = kernels::Exec::Auto);
Tensor tanh_map(const Tensor& x, kernels::Exec e = kernels::Exec::Auto);
Tensor scaled(const Tensor& x, double s);

// (B,C,H,W) <-> (B,N,C) with N = H*W, token n = h*W + w.
Tensor grid_to_tokens(const Tensor& x);
Tensor tokens_to_grid(const Tensor& t, int h, int w);
Tensor tokens_to_grid(const Tensor& t);  // N must be a perfect square

// Batch helpers: copy one batch item out of / into a rank>=2 tensor.
Tensor batch_item(const Tensor& t, int b);
void set_batch_item(Tensor& t, int b, const Tensor& item);
Tensor concat_batch(const Tensor& a, const Tensor& b);

double mse(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace dato
