#pragma once

// Numeric kernels behind the differentiable ops.
//
// Two implementations exist for every kernel: `serial` is a direct
// transcription of the defining sums and is kept as the reference for tests
// and benchmarks; `omp` is the one used for training. The omp kernels split
// work over the batch axis only and reduce weight gradients from per-sample
// partials in batch order, so results do not depend on the thread count.
//
// All backward kernels accumulate (+=) into their gradient outputs. Any
// gradient output pointer may be null to skip it.

#include <cstddef>
#include <vector>

namespace impz::kernels {

enum class Backend { serial, omp };

void set_backend(Backend b);
Backend backend();

/// Number of worker threads the omp kernels will use.
int max_threads();
void set_max_threads(int n);

struct Conv1dDims {
  std::size_t batch = 1, in_ch = 1, out_ch = 1, length = 1;
  std::size_t kernel = 1, dilation = 1, padding = 0, stride = 1;
  std::size_t out_length = 1;
};
// conv1d weights are [out_ch, in_ch, kernel]; bias may be null.

struct ConvTransposeDims {
  std::size_t batch = 1, in_ch = 1, out_ch = 1, length = 1;
  std::size_t kernel = 1, dilation = 1, padding = 0, stride = 1;
  std::size_t out_length = 1;
};
// conv_transpose1d weights are [in_ch, out_ch, kernel]; bias may be null.

struct GroupNormDims {
  std::size_t batch = 1, channels = 1, length = 1, groups = 1;
  double eps = 1e-5;
};

struct GruDims {
  std::size_t batch = 1, in_ch = 1, hidden = 1, length = 1;
  bool reverse = false;
};

/// Activations saved by the GRU forward pass, laid out [batch, time, .].
struct GruCache {
  std::vector<double> gates;   // z, r, n after activation: [B, L, 3H]
  std::vector<double> hh_n;    // candidate recurrent term U_n h_prev: [B, L, H]
  std::vector<double> states;  // h_t: [B, L, H]
};

namespace serial {
void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y);
void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias);
void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y);
void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias);
void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std);
void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta);
void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache);
void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias);
}  // namespace serial

namespace omp {
void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y);
void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias);
void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y);
void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias);
void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std);
void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta);
void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache);
void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias);
}  // namespace omp

// Dispatch on the active backend.
void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y);
void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias);
void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y);
void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias);
void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std);
void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta);
void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache);
void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias);

}  // namespace impz::kernels
