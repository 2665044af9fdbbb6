// Reference kernels: straight transcriptions of the defining sums.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "impz/kernels.hpp"

namespace impz::kernels::serial {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Input index touched by output t and tap k, or -1 when it falls in padding.
long conv_input_index(const Conv1dDims& d, std::size_t t, std::size_t k) {
  long idx = static_cast<long>(t * d.stride + k * d.dilation) -
             static_cast<long>(d.padding);
  return (idx < 0 || idx >= static_cast<long>(d.length)) ? -1 : idx;
}

long convt_output_index(const ConvTransposeDims& d, std::size_t i,
                        std::size_t k) {
  long idx = static_cast<long>(i * d.stride + k * d.dilation) -
             static_cast<long>(d.padding);
  return (idx < 0 || idx >= static_cast<long>(d.out_length)) ? -1 : idx;
}

}  // namespace

void conv1d_forward(const Conv1dDims& d, const double* x, const double* w,
                    const double* bias, double* y) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      for (std::size_t t = 0; t < d.out_length; ++t) {
        double sum = bias ? bias[o] : 0.0;
        for (std::size_t c = 0; c < d.in_ch; ++c) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            long i = conv_input_index(d, t, k);
            if (i < 0) continue;
            sum += w[(o * d.in_ch + c) * d.kernel + k] *
                   x[(b * d.in_ch + c) * d.length + i];
          }
        }
        y[(b * d.out_ch + o) * d.out_length + t] = sum;
      }
    }
  }
}

void conv1d_backward(const Conv1dDims& d, const double* x, const double* w,
                     const double* dy, double* dx, double* dw, double* dbias) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      for (std::size_t t = 0; t < d.out_length; ++t) {
        double g = dy[(b * d.out_ch + o) * d.out_length + t];
        if (dbias) dbias[o] += g;
        for (std::size_t c = 0; c < d.in_ch; ++c) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            long i = conv_input_index(d, t, k);
            if (i < 0) continue;
            std::size_t wi = (o * d.in_ch + c) * d.kernel + k;
            std::size_t xi = (b * d.in_ch + c) * d.length + i;
            if (dx) dx[xi] += g * w[wi];
            if (dw) dw[wi] += g * x[xi];
          }
        }
      }
    }
  }
}

void conv_transpose1d_forward(const ConvTransposeDims& d, const double* x,
                              const double* w, const double* bias, double* y) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      double* yo = y + (b * d.out_ch + o) * d.out_length;
      for (std::size_t j = 0; j < d.out_length; ++j) yo[j] = bias ? bias[o] : 0.0;
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        for (std::size_t i = 0; i < d.length; ++i) {
          double xv = x[(b * d.in_ch + c) * d.length + i];
          for (std::size_t k = 0; k < d.kernel; ++k) {
            long j = convt_output_index(d, i, k);
            if (j < 0) continue;
            yo[j] += xv * w[(c * d.out_ch + o) * d.kernel + k];
          }
        }
      }
    }
  }
}

void conv_transpose1d_backward(const ConvTransposeDims& d, const double* x,
                               const double* w, const double* dy, double* dx,
                               double* dw, double* dbias) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      const double* go = dy + (b * d.out_ch + o) * d.out_length;
      if (dbias) {
        for (std::size_t j = 0; j < d.out_length; ++j) dbias[o] += go[j];
      }
      for (std::size_t c = 0; c < d.in_ch; ++c) {
        for (std::size_t i = 0; i < d.length; ++i) {
          std::size_t xi = (b * d.in_ch + c) * d.length + i;
          for (std::size_t k = 0; k < d.kernel; ++k) {
            long j = convt_output_index(d, i, k);
            if (j < 0) continue;
            std::size_t wi = (c * d.out_ch + o) * d.kernel + k;
            if (dx) dx[xi] += go[j] * w[wi];
            if (dw) dw[wi] += go[j] * x[xi];
          }
        }
      }
    }
  }
}

void group_norm_forward(const GroupNormDims& d, const double* x,
                        const double* gamma, const double* beta, double* y,
                        double* mean, double* inv_std) {
  std::size_t cpg = d.channels / d.groups;
  double n = static_cast<double>(cpg * d.length);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      const double* xg = x + (b * d.channels + g * cpg) * d.length;
      double s = 0.0;
      for (std::size_t i = 0; i < cpg * d.length; ++i) s += xg[i];
      double mu = s / n;
      double v = 0.0;
      for (std::size_t i = 0; i < cpg * d.length; ++i) {
        v += (xg[i] - mu) * (xg[i] - mu);
      }
      double inv = 1.0 / std::sqrt(v / n + d.eps);
      mean[b * d.groups + g] = mu;
      inv_std[b * d.groups + g] = inv;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        std::size_t c = g * cpg + cc;
        for (std::size_t t = 0; t < d.length; ++t) {
          std::size_t idx = (b * d.channels + c) * d.length + t;
          y[idx] = gamma[c] * (x[idx] - mu) * inv + beta[c];
        }
      }
    }
  }
}

void group_norm_backward(const GroupNormDims& d, const double* x,
                         const double* gamma, const double* mean,
                         const double* inv_std, const double* dy, double* dx,
                         double* dgamma, double* dbeta) {
  std::size_t cpg = d.channels / d.groups;
  double n = static_cast<double>(cpg * d.length);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      double mu = mean[b * d.groups + g];
      double inv = inv_std[b * d.groups + g];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        std::size_t c = g * cpg + cc;
        for (std::size_t t = 0; t < d.length; ++t) {
          std::size_t idx = (b * d.channels + c) * d.length + t;
          double xhat = (x[idx] - mu) * inv;
          if (dgamma) dgamma[c] += dy[idx] * xhat;
          if (dbeta) dbeta[c] += dy[idx];
          double dxhat = dy[idx] * gamma[c];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
      }
      if (!dx) continue;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        std::size_t c = g * cpg + cc;
        for (std::size_t t = 0; t < d.length; ++t) {
          std::size_t idx = (b * d.channels + c) * d.length + t;
          double xhat = (x[idx] - mu) * inv;
          double dxhat = dy[idx] * gamma[c];
          dx[idx] += inv / n * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
        }
      }
    }
  }
}

void gru_forward(const GruDims& d, const double* x, const double* w_ih,
                 const double* w_hh, const double* bias, double* y,
                 GruCache* cache) {
  const std::size_t H = d.hidden, C = d.in_ch, L = d.length, G = 3 * H;
  if (cache) {
    cache->gates.assign(d.batch * L * G, 0.0);
    cache->hh_n.assign(d.batch * L * H, 0.0);
    cache->states.assign(d.batch * L * H, 0.0);
  }
  std::vector<double> h(H), h_next(H), pre(G), hh(G);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t step = 0; step < L; ++step) {
      std::size_t t = d.reverse ? L - 1 - step : step;
      for (std::size_t j = 0; j < G; ++j) {
        double a = bias[j];
        for (std::size_t c = 0; c < C; ++c) {
          a += x[(b * C + c) * L + t] * w_ih[c * G + j];
        }
        pre[j] = a;
        double u = 0.0;
        for (std::size_t i = 0; i < H; ++i) u += h[i] * w_hh[i * G + j];
        hh[j] = u;
      }
      for (std::size_t i = 0; i < H; ++i) {
        double z = sigmoid(pre[i] + hh[i]);
        double r = sigmoid(pre[H + i] + hh[H + i]);
        double n = std::tanh(pre[2 * H + i] + r * hh[2 * H + i]);
        h_next[i] = (1.0 - z) * n + z * h[i];
        if (cache) {
          double* gt = cache->gates.data() + (b * L + t) * G;
          gt[i] = z;
          gt[H + i] = r;
          gt[2 * H + i] = n;
          cache->hh_n[(b * L + t) * H + i] = hh[2 * H + i];
        }
      }
      h.swap(h_next);
      for (std::size_t i = 0; i < H; ++i) {
        y[(b * H + i) * L + t] = h[i];
        if (cache) cache->states[(b * L + t) * H + i] = h[i];
      }
    }
  }
}

void gru_backward(const GruDims& d, const double* x, const double* w_ih,
                  const double* w_hh, const GruCache& cache, const double* dy,
                  double* dx, double* dw_ih, double* dw_hh, double* dbias) {
  const std::size_t H = d.hidden, C = d.in_ch, L = d.length, G = 3 * H;
  std::vector<double> dh(H), dh_prev(H), dpre(G), dhh(G);
  const std::vector<double> zeros(H, 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t step = L; step-- > 0;) {
      std::size_t t = d.reverse ? L - 1 - step : step;
      const double* h_prev = zeros.data();
      if (step > 0) {
        std::size_t tp = d.reverse ? t + 1 : t - 1;
        h_prev = cache.states.data() + (b * L + tp) * H;
      }
      const double* gt = cache.gates.data() + (b * L + t) * G;
      const double* hn = cache.hh_n.data() + (b * L + t) * H;
      for (std::size_t i = 0; i < H; ++i) {
        dh[i] += dy[(b * H + i) * L + t];
        double z = gt[i], r = gt[H + i], n = gt[2 * H + i];
        double dz = dh[i] * (h_prev[i] - n);
        double dn = dh[i] * (1.0 - z);
        double dn_pre = dn * (1.0 - n * n);
        double dr = dn_pre * hn[i];
        dpre[i] = dz * z * (1.0 - z);
        dpre[H + i] = dr * r * (1.0 - r);
        dpre[2 * H + i] = dn_pre;
        dhh[i] = dpre[i];
        dhh[H + i] = dpre[H + i];
        dhh[2 * H + i] = dn_pre * r;
        dh_prev[i] = dh[i] * z;
      }
      for (std::size_t j = 0; j < G; ++j) {
        if (dbias) dbias[j] += dpre[j];
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t xi = (b * C + c) * L + t;
          if (dw_ih) dw_ih[c * G + j] += x[xi] * dpre[j];
          if (dx) dx[xi] += w_ih[c * G + j] * dpre[j];
        }
        for (std::size_t i = 0; i < H; ++i) {
          if (dw_hh) dw_hh[i * G + j] += h_prev[i] * dhh[j];
          dh_prev[i] += w_hh[i * G + j] * dhh[j];
        }
      }
      dh.swap(dh_prev);
    }
  }
}

}  // namespace impz::kernels::serial
