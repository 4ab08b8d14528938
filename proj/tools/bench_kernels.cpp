#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "dato/kernels.hpp"
#include "dato/tensor.hpp"

// Serial vs parallel kernel timing plus a bit-equality check per kernel.
// The parallel paths must reproduce the serial reference exactly; any
// mismatch makes the tool exit nonzero.

using dato::kernels::Exec;
namespace k = dato::kernels;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

bool report(const char* name, double serial_s, double parallel_s, bool equal) {
    std::printf("%-24s %10.4f ms %10.4f ms %7.2fx   %s\n", name, serial_s * 1e3,
                parallel_s * 1e3, serial_s / parallel_s,
                equal ? "bit-equal" : "MISMATCH");
    return equal;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
    if (!k::parallel_available()) {
        std::printf("parallel path unavailable (built without OpenMP); "
                    "timing the serial path only\n");
    }
    std::printf("threads: %d\n\n", k::threads());
    std::printf("%-24s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    const int reps = 5;
    bool all_equal = true;
    dato::SeededRng rng(123);

    {
        const int m = 512, kk = 256, p = 512;
        std::vector<double> a(m * kk), b(kk * p), cs(m * p), cp(m * p);
        for (double& v : a) v = rng.uniform(-1, 1);
        for (double& v : b) v = rng.uniform(-1, 1);
        const double ts = time_best_of(reps, [&] {
            k::matmul(a.data(), b.data(), cs.data(), m, kk, p, Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::matmul(a.data(), b.data(), cp.data(), m, kk, p, Exec::Parallel);
        });
        all_equal &= report("matmul 512x256x512", ts, tp, same_bits(cs, cp));
    }
    {
        const int rows = 4096, cols = 512;
        std::vector<double> in(rows * cols), os(in.size()), op(in.size());
        for (double& v : in) v = rng.uniform(-4, 4);
        const double ts = time_best_of(reps, [&] {
            k::softmax_rows(in.data(), os.data(), rows, cols, Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::softmax_rows(in.data(), op.data(), rows, cols, Exec::Parallel);
        });
        all_equal &= report("softmax 4096x512", ts, tp, same_bits(os, op));
    }
    {
        const int planes = 256, h = 128, w = 128;
        std::vector<double> in(planes * h * w), os(planes * h / 2 * w / 2), op(os.size());
        for (double& v : in) v = rng.uniform(-1, 1);
        const double ts = time_best_of(reps, [&] {
            k::avg_pool2(in.data(), os.data(), planes, h, w, Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::avg_pool2(in.data(), op.data(), planes, h, w, Exec::Parallel);
        });
        all_equal &= report("avg_pool2 256x128x128", ts, tp, same_bits(os, op));
    }
    {
        const int planes = 256, h = 64, w = 64;
        std::vector<double> in(planes * h * w), os(planes * h * 2 * w * 2), op(os.size());
        for (double& v : in) v = rng.uniform(-1, 1);
        const double ts = time_best_of(reps, [&] {
            k::upsample2(in.data(), os.data(), planes, h, w, Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::upsample2(in.data(), op.data(), planes, h, w, Exec::Parallel);
        });
        all_equal &= report("upsample2 256x64x64", ts, tp, same_bits(os, op));
    }
    {
        const long n = 1 << 22;
        std::vector<double> in(n), os(n), op(n);
        for (double& v : in) v = rng.uniform(-2, 2);
        const double ts =
            time_best_of(reps, [&] { k::tanh_map(in.data(), os.data(), n, Exec::Serial); });
        const double tp = time_best_of(
            reps, [&] { k::tanh_map(in.data(), op.data(), n, Exec::Parallel); });
        all_equal &= report("tanh_map 4M", ts, tp, same_bits(os, op));
    }
    {
        const int batch = 8, channels = 64, plane = 64 * 64;
        std::vector<double> a(batch * channels * plane), b(a.size());
        std::vector<double> os(batch * plane), op(batch * plane);
        for (double& v : a) v = rng.uniform(-1, 1);
        for (double& v : b) v = rng.uniform(-1, 1);
        const double ts = time_best_of(reps, [&] {
            k::channel_mean_abs_diff(a.data(), b.data(), os.data(), batch, channels,
                                     plane, Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::channel_mean_abs_diff(a.data(), b.data(), op.data(), batch, channels,
                                     plane, Exec::Parallel);
        });
        all_equal &= report("mean_abs_diff 8x64x4096", ts, tp, same_bits(os, op));
    }
    {
        const int n = 4096, c = 64, n_base = 1024;
        std::vector<double> tokens(n * c);
        for (double& v : tokens) v = rng.uniform(-1, 1);
        std::vector<int> base(n_base);
        for (int i = 0; i < n_base; ++i) base[i] = i * (n / n_base);
        std::vector<double> ss(n), sp(n);
        std::vector<int> bs(n), bp(n);
        const double ts = time_best_of(reps, [&] {
            k::cosine_best_match(tokens.data(), n, c, base.data(), n_base, ss.data(),
                                 bs.data(), Exec::Serial);
        });
        const double tp = time_best_of(reps, [&] {
            k::cosine_best_match(tokens.data(), n, c, base.data(), n_base, sp.data(),
                                 bp.data(), Exec::Parallel);
        });
        all_equal &=
            report("cosine_match 4096/1024", ts, tp, same_bits(ss, sp) && bs == bp);
    }

    std::printf("\n%s\n", all_equal ? "all kernels bit-equal across paths"
                                    : "BIT MISMATCH between serial and parallel paths");
    return all_equal ? 0 : 1;
}
