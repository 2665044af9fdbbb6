// OpenMP kernels. Parallel over the batch axis; each sample's weight-gradient
// contribution goes to its own slot and slots are summed in batch order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "impz/kernels.hpp"

namespace impz::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::omp};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Range [lo, hi) of t such that 0 <= t*stride + offset < length.
inline void valid_range(long offset, std::size_t stride, std::size_t length,
                        std::size_t count, std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(stride);
  const long n = static_cast<long>(length);
  long first = offset >= 0 ? 0 : (-offset + s - 1) / s;
  long last = (n - 1 - offset) < 0 ? -1 : (n - 1 - offset) / s;
  lo = static_cast<std::size_t>(std::max(0L, first));
  hi = static_cast<std::size_t>(
      std::clamp(last + 1, 0L, static_cast<long>(count)));
  if (hi < lo) hi = lo;
}

// Sums per-sample partials [batch][n] into dst in batch order.
void reduce_partials(const std::vector<double>& partials, std::size_t batch,
                     std::size_t n, double* dst) {
  if (!dst) return;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* p = partials.data() + b * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] += p[i];
  }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace omp {

void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y) {
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      double* yo = y + (b * d.out_ch + o) * d.out_length;
      std::fill(yo, yo + d.out_length, bias ? bias[o] : 0.0);
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        const double* xc = x + (b * d.in_ch + c) * d.length;
        const double* wk = w + (o * d.in_ch + c) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          long off = static_cast<long>(k * d.dilation) - static_cast<long>(d.padding);
          std::size_t lo, hi;
          valid_range(off, d.stride, d.length, d.out_length, lo, hi);
          const double wv = wk[k];
          if (d.stride == 1) {
            for (std::size_t t = lo; t < hi; ++t) {
              yo[t] += wv * xc[static_cast<long>(t) + off];
            }
          } else {
            for (std::size_t t = lo; t < hi; ++t) {
              yo[t] += wv * xc[static_cast<long>(t * d.stride) + off];
            }
          }
        }
      }
    }
  }
}

void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias) {
  const std::size_t nw = d.out_ch * d.in_ch * d.kernel;
  std::vector<double> pw(dw ? d.batch * nw : 0, 0.0);
  std::vector<double> pb(dbias ? d.batch * d.out_ch : 0, 0.0);
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      const double* go = dy + (b * d.out_ch + o) * d.out_length;
      if (dbias) {
        double s = 0.0;
        for (std::size_t t = 0; t < d.out_length; ++t) s += go[t];
        pb[b * d.out_ch + o] = s;
      }
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        const double* xc = x + (b * d.in_ch + c) * d.length;
        double* gxc = dx ? dx + (b * d.in_ch + c) * d.length : nullptr;
        const std::size_t wbase = (o * d.in_ch + c) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          long off = static_cast<long>(k * d.dilation) - static_cast<long>(d.padding);
          std::size_t lo, hi;
          valid_range(off, d.stride, d.length, d.out_length, lo, hi);
          const double wv = w[wbase + k];
          double acc = 0.0;
          for (std::size_t t = lo; t < hi; ++t) {
            long i = static_cast<long>(t * d.stride) + off;
            acc += go[t] * xc[i];
            if (gxc) gxc[i] += go[t] * wv;
          }
          if (dw) pw[b * nw + wbase + k] = acc;
        }
      }
    }
  }
  reduce_partials(pw, d.batch, nw, dw);
  reduce_partials(pb, d.batch, d.out_ch, dbias);
}

void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y) {
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      double* yo = y + (b * d.out_ch + o) * d.out_length;
      std::fill(yo, yo + d.out_length, bias ? bias[o] : 0.0);
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        const double* xc = x + (b * d.in_ch + c) * d.length;
        const double* wk = w + (c * d.out_ch + o) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          long off = static_cast<long>(k * d.dilation) - static_cast<long>(d.padding);
          std::size_t lo, hi;
          valid_range(off, d.stride, d.out_length, d.length, lo, hi);
          const double wv = wk[k];
          for (std::size_t i = lo; i < hi; ++i) {
            yo[static_cast<long>(i * d.stride) + off] += wv * xc[i];
          }
        }
      }
    }
  }
}

void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias) {
  const std::size_t nw = d.in_ch * d.out_ch * d.kernel;
  std::vector<double> pw(dw ? d.batch * nw : 0, 0.0);
  std::vector<double> pb(dbias ? d.batch * d.out_ch : 0, 0.0);
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      const double* go = dy + (b * d.out_ch + o) * d.out_length;
      if (dbias) {
        double s = 0.0;
        for (std::size_t j = 0; j < d.out_length; ++j) s += go[j];
        pb[b * d.out_ch + o] = s;
      }
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        const double* xc = x + (b * d.in_ch + c) * d.length;
        double* gxc = dx ? dx + (b * d.in_ch + c) * d.length : nullptr;
        const std::size_t wbase = (c * d.out_ch + o) * d.kernel;
        for (std::size_t k = 0; k < d.kernel; ++k) {
          long off = static_cast<long>(k * d.dilation) - static_cast<long>(d.padding);
          std::size_t lo, hi;
          valid_range(off, d.stride, d.out_length, d.length, lo, hi);
          const double wv = w[wbase + k];
          double acc = 0.0;
          for (std::size_t i = lo; i < hi; ++i) {
            const double g = go[static_cast<long>(i * d.stride) + off];
            acc += g * xc[i];
            if (gxc) gxc[i] += g * wv;
          }
          if (dw) pw[b * nw + wbase + k] = acc;
        }
      }
    }
  }
  reduce_partials(pw, d.batch, nw, dw);
  reduce_partials(pb, d.batch, d.out_ch, dbias);
}

void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std) {
  const std::size_t cpg = d.channels / d.groups;
  const std::size_t span = cpg * d.length;
  const double n = static_cast<double>(span);
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      const std::size_t base = (b * d.channels + g * cpg) * d.length;
      const double* xg = x + base;
      double s = 0.0;
      for (std::size_t i = 0; i < span; ++i) s += xg[i];
      const double mu = s / n;
      double v = 0.0;
      for (std::size_t i = 0; i < span; ++i) v += (xg[i] - mu) * (xg[i] - mu);
      const double inv = 1.0 / std::sqrt(v / n + d.eps);
      mean[b * d.groups + g] = mu;
      inv_std[b * d.groups + g] = inv;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t c = g * cpg + cc;
        const double* xr = xg + cc * d.length;
        double* yr = y + base + cc * d.length;
        const double ga = gamma[c], be = beta[c];
        for (std::size_t t = 0; t < d.length; ++t) {
          yr[t] = ga * (xr[t] - mu) * inv + be;
        }
      }
    }
  }
}

void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta) {
  const std::size_t cpg = d.channels / d.groups;
  const double n = static_cast<double>(cpg * d.length);
  std::vector<double> pg(dgamma ? d.batch * d.channels : 0, 0.0);
  std::vector<double> pbeta(dbeta ? d.batch * d.channels : 0, 0.0);
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < nb; ++b) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      const double mu = mean[b * d.groups + g];
      const double inv = inv_std[b * d.groups + g];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t c = g * cpg + cc;
        const std::size_t row = (b * d.channels + c) * d.length;
        double sg = 0.0, sb = 0.0;
        for (std::size_t t = 0; t < d.length; ++t) {
          const double xhat = (x[row + t] - mu) * inv;
          sg += dy[row + t] * xhat;
          sb += dy[row + t];
        }
        if (dgamma) pg[b * d.channels + c] = sg;
        if (dbeta) pbeta[b * d.channels + c] = sb;
        sum_dxhat += gamma[c] * sb;
        sum_dxhat_xhat += gamma[c] * sg;
      }
      if (!dx) continue;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t c = g * cpg + cc;
        const std::size_t row = (b * d.channels + c) * d.length;
        const double ga = gamma[c];
        for (std::size_t t = 0; t < d.length; ++t) {
          const double xhat = (x[row + t] - mu) * inv;
          dx[row + t] +=
              inv / n * (n * dy[row + t] * ga - sum_dxhat - xhat * sum_dxhat_xhat);
        }
      }
    }
  }
  reduce_partials(pg, d.batch, d.channels, dgamma);
  reduce_partials(pbeta, d.batch, d.channels, dbeta);
}

namespace {

void gru_forward_sample(const GruDims& d, std::size_t b, const double* x,
                        const double* w_ih, const double* w_hh,
                        const double* bias, double* y, GruCache* cache,
                        std::vector<double>& proj) {
  const std::size_t H = d.hidden, C = d.in_ch, L = d.length, G = 3 * H;
  // Input projections for every time step: proj[t][j].
  proj.resize(L * G);
  for (std::size_t t = 0; t < L; ++t) {
    std::copy(bias, bias + G, proj.data() + t * G);
  }
  for (std::size_t c = 0; c < C; ++c) {
    const double* xc = x + (b * C + c) * L;
    const double* wr = w_ih + c * G;
    for (std::size_t t = 0; t < L; ++t) {
      const double xv = xc[t];
      double* p = proj.data() + t * G;
      for (std::size_t j = 0; j < G; ++j) p[j] += xv * wr[j];
    }
  }

  std::vector<double> h(H, 0.0), hh(G);
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t t = d.reverse ? L - 1 - step : step;
    std::fill(hh.begin(), hh.end(), 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      const double hv = h[i];
      const double* wr = w_hh + i * G;
      for (std::size_t j = 0; j < G; ++j) hh[j] += hv * wr[j];
    }
    const double* p = proj.data() + t * G;
    double* gt = cache ? cache->gates.data() + (b * L + t) * G : nullptr;
    for (std::size_t i = 0; i < H; ++i) {
      const double z = sigmoid(p[i] + hh[i]);
      const double r = sigmoid(p[H + i] + hh[H + i]);
      const double n = std::tanh(p[2 * H + i] + r * hh[2 * H + i]);
      h[i] = (1.0 - z) * n + z * h[i];
      if (gt) {
        gt[i] = z;
        gt[H + i] = r;
        gt[2 * H + i] = n;
        cache->hh_n[(b * L + t) * H + i] = hh[2 * H + i];
        cache->states[(b * L + t) * H + i] = h[i];
      }
      y[(b * H + i) * L + t] = h[i];
    }
  }
}

}  // namespace

void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache) {
  const std::size_t H = d.hidden, L = d.length, G = 3 * H;
  if (cache) {
    cache->gates.assign(d.batch * L * G, 0.0);
    cache->hh_n.assign(d.batch * L * H, 0.0);
    cache->states.assign(d.batch * L * H, 0.0);
  }
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel
  {
    std::vector<double> proj;
#pragma omp for schedule(static)
    for (long b = 0; b < nb; ++b) {
      gru_forward_sample(d, b, x, w_ih, w_hh, bias, y, cache, proj);
    }
  }
}

void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias) {
  const std::size_t H = d.hidden, C = d.in_ch, L = d.length, G = 3 * H;
  const std::size_t n_ih = C * G, n_hh = H * G;
  std::vector<double> p_ih(dw_ih ? d.batch * n_ih : 0, 0.0);
  std::vector<double> p_hh(dw_hh ? d.batch * n_hh : 0, 0.0);
  std::vector<double> p_b(dbias ? d.batch * G : 0, 0.0);
  const long nb = static_cast<long>(d.batch);
#pragma omp parallel
  {
    std::vector<double> dpre_all(L * G), dh(H), dh_prev(H), dhh(G);
    const std::vector<double> zeros(H, 0.0);
#pragma omp for schedule(static)
    for (long b = 0; b < nb; ++b) {
      std::fill(dh.begin(), dh.end(), 0.0);
      double* gw_hh = dw_hh ? p_hh.data() + b * n_hh : nullptr;
      for (std::size_t step = L; step-- > 0;) {
        const std::size_t t = d.reverse ? L - 1 - step : step;
        const double* h_prev = zeros.data();
        if (step > 0) {
          const std::size_t tp = d.reverse ? t + 1 : t - 1;
          h_prev = cache.states.data() + (b * L + tp) * H;
        }
        const double* gt = cache.gates.data() + (b * L + t) * G;
        const double* hn = cache.hh_n.data() + (b * L + t) * H;
        double* dpre = dpre_all.data() + t * G;
        for (std::size_t i = 0; i < H; ++i) {
          const double g = dh[i] + dy[(b * H + i) * L + t];
          const double z = gt[i], r = gt[H + i], n = gt[2 * H + i];
          const double dz = g * (h_prev[i] - n);
          const double dn_pre = g * (1.0 - z) * (1.0 - n * n);
          const double dr = dn_pre * hn[i];
          dpre[i] = dz * z * (1.0 - z);
          dpre[H + i] = dr * r * (1.0 - r);
          dpre[2 * H + i] = dn_pre;
          dhh[i] = dpre[i];
          dhh[H + i] = dpre[H + i];
          dhh[2 * H + i] = dn_pre * r;
          dh_prev[i] = g * z;
        }
        for (std::size_t i = 0; i < H; ++i) {
          const double* wr = w_hh + i * G;
          double acc = 0.0;
          for (std::size_t j = 0; j < G; ++j) acc += wr[j] * dhh[j];
          dh_prev[i] += acc;
          if (gw_hh) {
            const double hv = h_prev[i];
            double* gr = gw_hh + i * G;
            for (std::size_t j = 0; j < G; ++j) gr[j] += hv * dhh[j];
          }
        }
        dh.swap(dh_prev);
      }
      // Input-side gradients from the stacked pre-activation gradients.
      if (dbias) {
        double* gb = p_b.data() + b * G;
        for (std::size_t t = 0; t < L; ++t) {
          const double* dp = dpre_all.data() + t * G;
          for (std::size_t j = 0; j < G; ++j) gb[j] += dp[j];
        }
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x + (b * C + c) * L;
        double* gxc = dx ? dx + (b * C + c) * L : nullptr;
        const double* wr = w_ih + c * G;
        double* gw = dw_ih ? p_ih.data() + b * n_ih + c * G : nullptr;
        for (std::size_t t = 0; t < L; ++t) {
          const double* dp = dpre_all.data() + t * G;
          if (gxc) {
            double acc = 0.0;
            for (std::size_t j = 0; j < G; ++j) acc += wr[j] * dp[j];
            gxc[t] += acc;
          }
          if (gw) {
            const double xv = xc[t];
            for (std::size_t j = 0; j < G; ++j) gw[j] += xv * dp[j];
          }
        }
      }
    }
  }
  reduce_partials(p_ih, d.batch, n_ih, dw_ih);
  reduce_partials(p_hh, d.batch, n_hh, dw_hh);
  reduce_partials(p_b, d.batch, G, dbias);
}

}  // namespace omp

#define IMPZ_DISPATCH(fn, ...)                                 \
  if (backend() == Backend::serial) return serial::fn(__VA_ARGS__); \
  return omp::fn(__VA_ARGS__)

void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y) {
  IMPZ_DISPATCH(conv1d_forward, d, x, w, bias, y);
}
void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias) {
  IMPZ_DISPATCH(conv1d_backward, d, x, w, dy, dx, dw, dbias);
}
void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y) {
  IMPZ_DISPATCH(conv_transpose1d_forward, d, x, w, bias, y);
}
void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias) {
  IMPZ_DISPATCH(conv_transpose1d_backward, d, x, w, dy, dx, dw, dbias);
}
void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std) {
  IMPZ_DISPATCH(group_norm_forward, d, x, gamma, beta, y, mean, inv_std);
}
void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta) {
  IMPZ_DISPATCH(group_norm_backward, d, x, gamma, mean, inv_std, dy, dx, dgamma,
                dbeta);
}
void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache) {
  IMPZ_DISPATCH(gru_forward, d, x, w_ih, w_hh, bias, y, cache);
}
void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias) {
  IMPZ_DISPATCH(gru_backward, d, x, w_ih, w_hh, cache, dy, dx, dw_ih, dw_hh,
                dbias);
}

#undef IMPZ_DISPATCH

}  // namespace impz::kernels
