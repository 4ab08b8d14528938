#pragma once

// Data-parallel inner loops shared by the tensor ops and the denoiser.
// Every kernel has exactly one arithmetic body; the parallel path only
// distributes independent output elements across OpenMP threads, so serial
// and parallel execution produce bit-identical results. Exec::Serial is the
// reference implementation used by the equivalence tests and the benchmark.

namespace dato::kernels {

enum class Exec { Auto, Serial, Parallel };

// Thread count used by the parallel path. <= 1 disables it.
void set_threads(int n);
int threads();
bool parallel_available();

// c[m,p] = a[m,k] * b[k,p], reductions run over ascending k.
void matmul(const double* a, const double* b, double* c, int m, int k, int p,
            Exec e = Exec::Auto);

// Row-wise softmax with max-subtraction.
void softmax_rows(const double* in, double* out, int rows, int cols,
                  Exec e = Exec::Auto);

// 2x2 mean pooling / nearest-neighbour upsampling on `planes` independent
// h*w planes. h and w must be even for avg_pool2.
void avg_pool2(const double* in, double* out, int planes, int h, int w,
               Exec e = Exec::Auto);
void upsample2(const double* in, double* out, int planes, int h, int w,
               Exec e = Exec::Auto);

void tanh_map(const double* in, double* out, long n, Exec e = Exec::Auto);
void add(const double* a, const double* b, double* out, long n,
         Exec e = Exec::Auto);
void sub(const double* a, const double* b, double* out, long n,
         Exec e = Exec::Auto);

// out[b*plane + i] = mean over channels of |a - b| at spatial position i.
// Inputs are (batch, channels, plane) with plane = h*w.
void channel_mean_abs_diff(const double* a, const double* b, double* out,
                           int batch, int channels, int plane,
                           Exec e = Exec::Auto);

// For every token i in tokens[n,c]: best_score[i] = max cosine similarity
// against the base token rows, best_base[i] = flat token index of the argmax
// base. Ties take the smallest base token index; zero-norm pairs score 0.
void cosine_best_match(const double* tokens, int n, int c, const int* base,
                       int n_base, double* best_score, int* best_base,
                       Exec e = Exec::Auto);

}  // namespace dato::kernels
