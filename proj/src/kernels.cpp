#include "dato/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dato::kernels {

namespace {

std::atomic<int> g_threads{
#ifdef _OPENMP
    0  // 0 = use omp_get_max_threads()
#else
    1
#endif
};

// Work-size floor below which the parallel path is never worth it.
constexpr long kGrain = 1 << 14;

bool use_parallel(Exec e, long work, long outer) {
#ifdef _OPENMP
    if (outer < 2) return false;
    if (e == Exec::Serial) return false;
    if (threads() <= 1) return false;
    if (omp_in_parallel()) return false;  // nested: stay serial inside workers
    if (e == Exec::Parallel) return true;
    return work >= kGrain;
#else
    (void)e; (void)work; (void)outer;
    return false;
#endif
}

// ---- per-output-element bodies (shared by both paths) ----

inline void matmul_row(const double* a, const double* b, double* c, int i,
                       int k, int p) {
    const double* ai = a + (long)i * k;
    double* ci = c + (long)i * p;
    for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += ai[kk] * b[(long)kk * p + j];
        ci[j] = acc;
    }
}

inline void softmax_row(const double* in, double* out, int r, int cols) {
    const double* x = in + (long)r * cols;
    double* y = out + (long)r * cols;
    double mx = x[0];
    for (int j = 1; j < cols; ++j)
        if (x[j] > mx) mx = x[j];
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    for (int j = 0; j < cols; ++j) y[j] /= sum;
}

inline void pool_plane(const double* in, double* out, int pl, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    const double* src = in + (long)pl * h * w;
    double* dst = out + (long)pl * oh * ow;
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            const double* p0 = src + (long)(2 * i) * w + 2 * j;
            const double* p1 = p0 + w;
            dst[(long)i * ow + j] = (p0[0] + p0[1] + p1[0] + p1[1]) * 0.25;
        }
}

inline void upsample_plane(const double* in, double* out, int pl, int h, int w) {
    const int oh = 2 * h, ow = 2 * w;
    const double* src = in + (long)pl * h * w;
    double* dst = out + (long)pl * oh * ow;
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            dst[(long)i * ow + j] = src[(long)(i / 2) * w + j / 2];
}

inline void diff_row(const double* a, const double* b, double* out, int bi,
                     int channels, int plane) {
    const double* pa = a + (long)bi * channels * plane;
    const double* pb = b + (long)bi * channels * plane;
    double* po = out + (long)bi * plane;
    for (int i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c)
            acc += std::fabs(pa[(long)c * plane + i] - pb[(long)c * plane + i]);
        po[i] = acc / (double)channels;
    }
}

inline double cosine(const double* x, const double* y, int c) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (int i = 0; i < c; ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    const double dx = std::sqrt(nx), dy = std::sqrt(ny);
    if (dx == 0.0 || dy == 0.0) return 0.0;
    return dot / (dx * dy);
}

inline void best_match_token(const double* tokens, int i, int c, const int* base,
                             int n_base, double* best_score, int* best_base) {
    const double* x = tokens + (long)i * c;
    double best = 0.0;
    int arg = -1;
    for (int j = 0; j < n_base; ++j) {
        const double s = cosine(x, tokens + (long)base[j] * c, c);
        if (arg < 0 || s > best || (s == best && base[j] < arg)) {
            best = s;
            arg = base[j];
        }
    }
    best_score[i] = best;
    best_base[i] = arg;
}

}  // namespace

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }

int threads() {
int t = g_threads.load();
#ifdef _OPENMP
    if (t == 0) return omp_get_max_threads();
#endif
    return t < 1 ? 1 : t;
}

bool parallel_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

void matmul(const double* a, const double* b, double* c, int m, int k, int p, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)m * k * p, m)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, k, p);
        return;
    }
#endif
    (void)e;
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, k, p);
}

void softmax_rows(const double* in, double* out, int rows, int cols, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)rows * cols, rows)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int r = 0; r < rows; ++r) softmax_row(in, out, r, cols);
        return;
    }
#endif
    (void)e;
    for (int r = 0; r < rows; ++r) softmax_row(in, out, r, cols);
}

void avg_pool2(const double* in, double* out, int planes, int h, int w, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)planes * h * w, planes)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int pl = 0; pl < planes; ++pl) pool_plane(in, out, pl, h, w);
        return;
    }
#endif
    (void)e;
    for (int pl = 0; pl < planes; ++pl) pool_plane(in, out, pl, h, w);
}

void upsample2(const double* in, double* out, int planes, int h, int w, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)planes * h * w * 4, planes)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int pl = 0; pl < planes; ++pl) upsample_plane(in, out, pl, h, w);
        return;
    }
#endif
    (void)e;
    for (int pl = 0; pl < planes; ++pl) upsample_plane(in, out, pl, h, w);
}

void tanh_map(const double* in, double* out, long n, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, n, n)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (long i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
        return;
    }
#endif
    (void)e;
    for (long i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

void add(const double* a, const double* b, double* out, long n, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, n, n)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (long i = 0; i < n; ++i) out[i] = a[i] + b[i];
        return;
    }
#endif
    (void)e;
    for (long i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, long n, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, n, n)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (long i = 0; i < n; ++i) out[i] = a[i] - b[i];
        return;
    }
#endif
    (void)e;
    for (long i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void channel_mean_abs_diff(const double* a, const double* b, double* out,
                           int batch, int channels, int plane, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)batch * channels * plane, batch)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int bi = 0; bi < batch; ++bi) diff_row(a, b, out, bi, channels, plane);
        return;
    }
#endif
    (void)e;
    for (int bi = 0; bi < batch; ++bi) diff_row(a, b, out, bi, channels, plane);
}

void cosine_best_match(const double* tokens, int n, int c, const int* base,
                       int n_base, double* best_score, int* best_base, Exec e) {
#ifdef _OPENMP
    if (use_parallel(e, (long)n * n_base * c, n)) {
        #pragma omp parallel for num_threads(threads()) schedule(static)
        for (int i = 0; i < n; ++i)
            best_match_token(tokens, i, c, base, n_base, best_score, best_base);
        return;
    }
#endif
    (void)e;
    for (int i = 0; i < n; ++i)
        best_match_token(tokens, i, c, base, n_base, best_score, best_base);
}

}  // namespace dato::kernels
