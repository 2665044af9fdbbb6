#include "impz/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "impz/error.hpp"
#include "impz/kernels.hpp"
#include "impz/param_store.hpp"

namespace impz {

// ---------------------------------------------------------------- Var / Tape

const Tensor& Var::value() const { return tape().value(*this); }

Tape& Var::tape() const {
  if (!tape_) throw Error("use of an unbound Var");
  return *tape_;
}

bool Var::requires_grad() const { return tape().requires_grad(*this); }

void Tape::check_live(const Var& v) const {
  if (v.tape_ != this) throw Error("Var belongs to a different tape");
  if (v.generation_ != generation_ || v.id_ >= nodes_.size()) {
    throw Error("stale Var: tape was reset after it was created");
  }
}

Var Tape::push(Node node) {
  if (backward_done_) {
    throw Error("cannot record on a tape after backward(); call reset()");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  for (const auto& [bound, id] : bound_) {
    if (bound == &p) return Var(this, id, generation_);
  }
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  n.store = &store;
  Var v = push(std::move(n));
  bound_.emplace_back(&p, v.id_);
  return v;
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& parents,
                 BackwardFn fn) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    check_live(p);
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

double* Tape::grad_buffer(const Var& v) {
  check_live(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad.data();
}

const Tensor& Tape::value(const Var& v) const {
  check_live(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_live(v);
  return nodes_[v.id_].requires_grad;
}

Tensor Tape::grad(const Var& v) const {
  check_live(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(const Var& loss) {
  check_live(loss);
  if (backward_done_) {
    throw Error("backward() already ran on this recording; call reset() first");
  }
  if (nodes_[loss.id_].value.size() != 1) {
    throw ShapeError("backward() needs a scalar root, got " +
                     shape_str(nodes_[loss.id_].value.shape()));
  }
  backward_done_ = true;
  if (double* g = grad_buffer(loss)) g[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(n.grad);
  }
  for (auto& [p, id] : bound_) {
    const Node& n = nodes_[id];
    if (p->grad.size() != p->value.size()) p->grad = Tensor(p->value.shape(), 0.0);
    if (!n.grad.empty()) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) p->grad[k] += n.grad[k];
    }
    n.store->mark_grads_ready();
  }
}

void Tape::reset() {
  nodes_.clear();
  bound_.clear();
  ++generation_;
  backward_done_ = false;
}

// ----------------------------------------------------------------------- ops

namespace ad {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

void add_into(double* dst, const Tensor& src, double c = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += c * src[i];
}

enum class Bin { add, sub, mul };

Var binary(const Var& a, const Var& b, Bin kind, const char* name) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_bcast = av.size() == 1 && bv.size() != 1;
  const bool b_bcast = bv.size() == 1 && av.size() != 1;
  require(a_bcast || b_bcast || av.shape() == bv.shape(),
          std::string(name) + ": shape mismatch " + shape_str(av.shape()) +
              " vs " + shape_str(bv.shape()));
  const Tensor& big = a_bcast ? bv : av;
  Tensor out(big.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_bcast ? 0 : i];
    const double y = bv[b_bcast ? 0 : i];
    out[i] = kind == Bin::add ? x + y : kind == Bin::sub ? x - y : x * y;
  }
  return tape.record(name, std::move(out), {a, b},
                     [a, b, kind, a_bcast, b_bcast](const Tensor& g) {
                       Tape& t = a.tape();
                       double* ga = t.grad_buffer(a);
                       double* gb = t.grad_buffer(b);
                       const Tensor& av = a.value();
                       const Tensor& bv = b.value();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t ia = a_bcast ? 0 : i;
                         const std::size_t ib = b_bcast ? 0 : i;
                         double da = g[i], db = g[i];
                         if (kind == Bin::sub) db = -g[i];
                         if (kind == Bin::mul) {
                           da = g[i] * bv[ib];
                           db = g[i] * av[ia];
                         }
                         if (ga) ga[ia] += da;
                         if (gb) gb[ib] += db;
                       }
                     });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, Bin::add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, Bin::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, Bin::mul, "mul"); }

Var scale(const Var& x, double c) {
  Tensor out = x.value();
  for (double& v : out.raw()) v *= c;
  return x.tape().record("scale", std::move(out), {x}, [x, c](const Tensor& g) {
    add_into(x.tape().grad_buffer(x), g, c);
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.raw()) v = std::tanh(v);
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record("tanh", std::move(out), {x}, [x, y](const Tensor& g) {
    double* gx = x.tape().grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.raw()) v = 1.0 / (1.0 + std::exp(-v));
  auto y = std::make_shared<Tensor>(out);
  return x.tape().record("sigmoid", std::move(out), {x},
                         [x, y](const Tensor& g) {
                           double* gx = x.tape().grad_buffer(x);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
                           }
                         });
}

Var matmul(const Var& x, const Var& w) {
  Tape& tape = same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() >= 2 && wv.rank() == 2, "matmul: expected [...,M,K] x [K,N]");
  const std::size_t K = xv.dim(xv.rank() - 1);
  require(K == wv.dim(0), "matmul: inner dimensions " + shape_str(xv.shape()) +
                              " x " + shape_str(wv.shape()));
  const std::size_t N = wv.dim(1);
  const std::size_t rows = xv.size() / K;
  Shape shape = xv.shape();
  shape.back() = N;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < K; ++k) {
      const double a = xv[r * K + k];
      for (std::size_t n = 0; n < N; ++n) out[r * N + n] += a * wv[k * N + n];
    }
  }
  return tape.record("matmul", std::move(out), {x, w},
                     [x, w, rows, K, N](const Tensor& g) {
                       Tape& t = x.tape();
                       double* gx = t.grad_buffer(x);
                       double* gw = t.grad_buffer(w);
                       const Tensor& xv = x.value();
                       const Tensor& wv = w.value();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t k = 0; k < K; ++k) {
                           double acc = 0.0;
                           for (std::size_t n = 0; n < N; ++n) {
                             acc += g[r * N + n] * wv[k * N + n];
                             if (gw) gw[k * N + n] += xv[r * K + k] * g[r * N + n];
                           }
                           if (gx) gx[r * K + k] += acc;
                         }
                       }
                     });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().raw()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x}, [x](const Tensor& g) {
    double* gx = x.tape().grad_buffer(x);
    const std::size_t n = x.value().size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

Var mse(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "mse: shape mismatch " +
                                        shape_str(av.shape()) + " vs " +
                                        shape_str(bv.shape()));
  require(av.size() > 0, "mse: empty operands");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double n = static_cast<double>(av.size());
  return tape.record("mse", Tensor::scalar(s / n), {a, b},
                     [a, b, n](const Tensor& g) {
                       Tape& t = a.tape();
                       double* ga = t.grad_buffer(a);
                       double* gb = t.grad_buffer(b);
                       const Tensor& av = a.value();
                       const Tensor& bv = b.value();
                       const double c = 2.0 * g[0] / n;
                       for (std::size_t i = 0; i < av.size(); ++i) {
                         const double d = c * (av[i] - bv[i]);
                         if (ga) ga[i] += d;
                         if (gb) gb[i] -= d;
                       }
                     });
}

namespace {

kernels::Conv1dDims conv_dims(const Tensor& x, const Tensor& w,
                              std::size_t dilation, std::size_t padding,
                              std::size_t stride) {
  require(x.rank() == 3, "conv1d: input must be [B,Cin,L], got " +
                             shape_str(x.shape()));
  require(w.rank() == 3, "conv1d: weight must be [Cout,Cin,K], got " +
                             shape_str(w.shape()));
  require(w.dim(1) == x.dim(1), "conv1d: weight " + shape_str(w.shape()) +
                                    " does not match input " +
                                    shape_str(x.shape()));
  require(dilation >= 1 && stride >= 1 && w.dim(2) >= 1,
          "conv1d: dilation, stride and kernel must be >= 1");
  kernels::Conv1dDims d;
  d.batch = x.dim(0);
  d.in_ch = x.dim(1);
  d.length = x.dim(2);
  d.out_ch = w.dim(0);
  d.kernel = w.dim(2);
  d.dilation = dilation;
  d.padding = padding;
  d.stride = stride;
  const long span = static_cast<long>(d.length + 2 * padding) -
                    static_cast<long>(dilation * (d.kernel - 1)) - 1;
  require(span >= 0, "conv1d: output length < 1 (input " +
                         std::to_string(d.length) + ", receptive field " +
                         std::to_string(dilation * (d.kernel - 1) + 1) + ")");
  d.out_length = static_cast<std::size_t>(span) / stride + 1;
  return d;
}

Var conv1d_impl(const Var& x, const Var& w, const Var* bias,
                std::size_t dilation, std::size_t padding, std::size_t stride) {
  Tape& tape = same_tape(x, w);
  const auto d = conv_dims(x.value(), w.value(), dilation, padding, stride);
  std::vector<Var> parents{x, w};
  if (bias) {
    require(bias->value().size() == d.out_ch, "conv1d: bias must have Cout entries");
    parents.push_back(*bias);
  }
  Tensor out({d.batch, d.out_ch, d.out_length});
  kernels::conv1d_forward(d, x.value().data(), w.value().data(),
                          bias ? bias->value().data() : nullptr, out.data());
  const Var b = bias ? *bias : Var();
  const bool has_bias = bias != nullptr;
  return tape.record("conv1d", std::move(out), parents,
                     [x, w, b, has_bias, d](const Tensor& g) {
                       Tape& t = x.tape();
                       kernels::conv1d_backward(
                           d, x.value().data(), w.value().data(), g.data(),
                           t.grad_buffer(x), t.grad_buffer(w),
                           has_bias ? t.grad_buffer(b) : nullptr);
                     });
}

kernels::ConvTransposeDims convt_dims(const Tensor& x, const Tensor& w,
                                      std::size_t stride, std::size_t padding,
                                      std::size_t dilation) {
  require(x.rank() == 3, "conv_transpose1d: input must be [B,Cin,L], got " +
                             shape_str(x.shape()));
  require(w.rank() == 3, "conv_transpose1d: weight must be [Cin,Cout,K], got " +
                             shape_str(w.shape()));
  require(w.dim(0) == x.dim(1), "conv_transpose1d: weight " +
                                    shape_str(w.shape()) +
                                    " does not match input " +
                                    shape_str(x.shape()));
  require(stride >= 1 && dilation >= 1 && w.dim(2) >= 1,
          "conv_transpose1d: stride, dilation and kernel must be >= 1");
  kernels::ConvTransposeDims d;
  d.batch = x.dim(0);
  d.in_ch = x.dim(1);
  d.length = x.dim(2);
  d.out_ch = w.dim(1);
  d.kernel = w.dim(2);
  d.stride = stride;
  d.padding = padding;
  d.dilation = dilation;
  const long lout = static_cast<long>((d.length - 1) * stride +
                                      dilation * (d.kernel - 1) + 1) -
                    2 * static_cast<long>(padding);
  require(lout >= 1, "conv_transpose1d: output length < 1");
  d.out_length = static_cast<std::size_t>(lout);
  return d;
}

Var convt_impl(const Var& x, const Var& w, const Var* bias, std::size_t stride,
               std::size_t padding, std::size_t dilation) {
  Tape& tape = same_tape(x, w);
  const auto d = convt_dims(x.value(), w.value(), stride, padding, dilation);
  std::vector<Var> parents{x, w};
  if (bias) {
    require(bias->value().size() == d.out_ch,
            "conv_transpose1d: bias must have Cout entries");
    parents.push_back(*bias);
  }
  Tensor out({d.batch, d.out_ch, d.out_length});
  kernels::conv_transpose1d_forward(d, x.value().data(), w.value().data(),
                                    bias ? bias->value().data() : nullptr,
                                    out.data());
  const Var b = bias ? *bias : Var();
  const bool has_bias = bias != nullptr;
  return tape.record("conv_transpose1d", std::move(out), parents,
                     [x, w, b, has_bias, d](const Tensor& g) {
                       Tape& t = x.tape();
                       kernels::conv_transpose1d_backward(
                           d, x.value().data(), w.value().data(), g.data(),
                           t.grad_buffer(x), t.grad_buffer(w),
                           has_bias ? t.grad_buffer(b) : nullptr);
                     });
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& bias, std::size_t dilation,
           std::size_t padding, std::size_t stride) {
  return conv1d_impl(x, w, &bias, dilation, padding, stride);
}

Var conv1d(const Var& x, const Var& w, std::size_t dilation,
           std::size_t padding, std::size_t stride) {
  return conv1d_impl(x, w, nullptr, dilation, padding, stride);
}

Var conv_transpose1d(const Var& x, const Var& w, const Var& bias,
                     std::size_t stride, std::size_t padding,
                     std::size_t dilation) {
  return convt_impl(x, w, &bias, stride, padding, dilation);
}

Var conv_transpose1d(const Var& x, const Var& w, std::size_t stride,
                     std::size_t padding, std::size_t dilation) {
  return convt_impl(x, w, nullptr, stride, padding, dilation);
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta,
               std::size_t groups, double eps) {
  Tape& tape = same_tape(x, gamma);
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "group_norm: input must be [B,C,L]");
  require(groups >= 1 && xv.dim(1) % groups == 0,
          "group_norm: " + std::to_string(xv.dim(1)) +
              " channels not divisible into " + std::to_string(groups) +
              " groups");
  require(gamma.value().size() == xv.dim(1) && beta.value().size() == xv.dim(1),
          "group_norm: gamma/beta must have C entries");
  if (!(eps > 0.0)) throw UsageError("group_norm: eps must be positive");
  kernels::GroupNormDims d{xv.dim(0), xv.dim(1), xv.dim(2), groups, eps};
  Tensor out(xv.shape());
  auto stats = std::make_shared<std::vector<double>>(2 * d.batch * groups);
  double* mean = stats->data();
  double* inv = stats->data() + d.batch * groups;
  kernels::group_norm_forward(d, xv.data(), gamma.value().data(),
                              beta.value().data(), out.data(), mean, inv);
  return tape.record("group_norm", std::move(out), {x, gamma, beta},
                     [x, gamma, beta, d, stats](const Tensor& g) {
                       Tape& t = x.tape();
                       const double* mean = stats->data();
                       const double* inv = stats->data() + d.batch * d.groups;
                       kernels::group_norm_backward(
                           d, x.value().data(), gamma.value().data(), mean, inv,
                           g.data(), t.grad_buffer(x), t.grad_buffer(gamma),
                           t.grad_buffer(beta));
                     });
}

Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias,
        bool reverse) {
  Tape& tape = same_tape(x, w_ih);
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "gru: input must be [B,C,L], got " + shape_str(xv.shape()));
  const std::size_t C = xv.dim(1);
  const Tensor& whh = w_hh.value();
  require(whh.rank() == 2 && whh.dim(1) == 3 * whh.dim(0),
          "gru: w_hh must be [H,3H], got " + shape_str(whh.shape()));
  const std::size_t H = whh.dim(0);
  require(w_ih.value().rank() == 2 && w_ih.value().dim(0) == C &&
              w_ih.value().dim(1) == 3 * H,
          "gru: w_ih must be [" + std::to_string(C) + "," +
              std::to_string(3 * H) + "], got " + shape_str(w_ih.value().shape()));
  require(bias.value().size() == 3 * H, "gru: bias must have 3H entries");
  require(xv.dim(2) >= 1, "gru: empty sequence");
  kernels::GruDims d{xv.dim(0), C, H, xv.dim(2), reverse};
  Tensor out({d.batch, H, d.length});
  auto cache = std::make_shared<kernels::GruCache>();
  kernels::gru_forward(d, xv.data(), w_ih.value().data(), whh.data(),
                       bias.value().data(), out.data(), cache.get());
  return tape.record("gru", std::move(out), {x, w_ih, w_hh, bias},
                     [x, w_ih, w_hh, bias, d, cache](const Tensor& g) {
                       Tape& t = x.tape();
                       kernels::gru_backward(
                           d, x.value().data(), w_ih.value().data(),
                           w_hh.value().data(), *cache, g.data(),
                           t.grad_buffer(x), t.grad_buffer(w_ih),
                           t.grad_buffer(w_hh), t.grad_buffer(bias));
                     });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](const Tensor& g) {
    add_into(x.tape().grad_buffer(x), g);
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  Tape& tape = xs.front().tape();
  const Shape& s0 = xs.front().shape();
  require(s0.size() == 3, "concat_channels: inputs must be [B,C,L]");
  std::size_t channels = 0;
  for (const Var& v : xs) {
    const Shape& s = v.shape();
    require(s.size() == 3 && s[0] == s0[0] && s[2] == s0[2],
            "concat_channels: incompatible shapes " + shape_str(s0) + " and " +
                shape_str(s));
    channels += s[1];
  }
  const std::size_t B = s0[0], L = s0[2];
  Tensor out({B, channels, L});
  std::size_t c0 = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    const std::size_t C = t.dim(1);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(t.data() + b * C * L, C * L, out.data() + (b * channels + c0) * L);
    }
    c0 += C;
  }
  return tape.record("concat_channels", std::move(out), xs,
                     [xs, B, L, channels](const Tensor& g) {
                       std::size_t c0 = 0;
                       for (const Var& v : xs) {
                         const std::size_t C = v.dim(1);
                         if (double* gv = v.tape().grad_buffer(v)) {
                           for (std::size_t b = 0; b < B; ++b) {
                             const double* src = g.data() + (b * channels + c0) * L;
                             double* dst = gv + b * C * L;
                             for (std::size_t i = 0; i < C * L; ++i) dst[i] += src[i];
                           }
                         }
                         c0 += C;
                       }
                     });
}

Var slice_last(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && begin < end && end <= xv.shape().back(),
          "slice_last: range out of bounds for " + shape_str(xv.shape()));
  const std::size_t N = xv.shape().back(), W = end - begin;
  const std::size_t rows = xv.size() / N;
  Shape shape = xv.shape();
  shape.back() = W;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * N + begin, W, out.data() + r * W);
  }
  return x.tape().record("slice_last", std::move(out), {x},
                         [x, rows, N, W, begin](const Tensor& g) {
                           double* gx = x.tape().grad_buffer(x);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < W; ++j) {
                               gx[r * N + begin + j] += g[r * W + j];
                             }
                           }
                         });
}

Var batch_slice(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && begin < end && end <= xv.dim(0),
          "batch_slice: range out of bounds for " + shape_str(xv.shape()));
  const std::size_t row = xv.size() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy_n(xv.data() + begin * row, (end - begin) * row, out.data());
  return x.tape().record("batch_slice", std::move(out), {x},
                         [x, row, begin](const Tensor& g) {
                           double* gx = x.tape().grad_buffer(x) + begin * row;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

Var time_slice(const Var& x, std::size_t t) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && t < xv.dim(2), "time_slice: bad index or shape");
  const std::size_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
  Tensor out({B, C});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) out[b * C + c] = xv[(b * C + c) * L + t];
  }
  return x.tape().record("time_slice", std::move(out), {x},
                         [x, B, C, L, t](const Tensor& g) {
                           double* gx = x.tape().grad_buffer(x);
                           for (std::size_t i = 0; i < B * C; ++i) {
                             gx[i * L + t] += g[i];
                           }
                         });
}

Var stack_time(const std::vector<Var>& steps) {
  require(!steps.empty(), "stack_time: no steps");
  const Shape& s0 = steps.front().shape();
  require(s0.size() == 2, "stack_time: steps must be [B,C]");
  for (const Var& v : steps) {
    require(v.shape() == s0, "stack_time: inconsistent step shapes");
  }
  const std::size_t B = s0[0], C = s0[1], L = steps.size();
  Tensor out({B, C, L});
  for (std::size_t t = 0; t < L; ++t) {
    const Tensor& v = steps[t].value();
    for (std::size_t i = 0; i < B * C; ++i) out[i * L + t] = v[i];
  }
  return steps.front().tape().record(
      "stack_time", std::move(out), steps, [steps, B, C, L](const Tensor& g) {
        for (std::size_t t = 0; t < L; ++t) {
          if (double* gv = steps[t].tape().grad_buffer(steps[t])) {
            for (std::size_t i = 0; i < B * C; ++i) gv[i] += g[i * L + t];
          }
        }
      });
}

}  // namespace ad

}  // namespace impz
