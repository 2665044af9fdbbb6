#include "impz/layers.hpp"

#include <cmath>

#include "impz/error.hpp"

namespace impz::layers {

namespace {

Tensor uniform(Shape shape, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.raw()) v = dist(rng);
  return t;
}

const char* direction(bool reverse) { return reverse ? ".bwd" : ".fwd"; }

}  // namespace

void GruSpec::validate() const {
  if (hidden_size < 1) throw UsageError("GRU hidden size must be >= 1");
  if (input_size < 1) throw UsageError("GRU input size must be >= 1");
}

void ConvBlockSpec::validate() const {
  if (in_ch < 1 || out_ch < 1 || kernel < 1 || dilation < 1 || norm_groups < 1) {
    throw UsageError("conv block: sizes must be >= 1");
  }
  if (kernel % 2 == 0) {
    throw UsageError("conv block: kernel must be odd for length-preserving padding");
  }
  if (out_ch % norm_groups != 0) {
    throw UsageError("conv block: " + std::to_string(out_ch) +
                     " channels not divisible into " +
                     std::to_string(norm_groups) + " groups");
  }
}

void DeconvBlockSpec::validate() const {
  if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || norm_groups < 1) {
    throw UsageError("deconv block: sizes must be >= 1");
  }
  if (kernel < stride || (kernel - stride) % 2 != 0) {
    throw UsageError("deconv block: kernel " + std::to_string(kernel) +
                     " cannot give output length " + std::to_string(stride) +
                     "*L (need kernel >= stride with even difference)");
  }
  if (out_ch % norm_groups != 0) {
    throw UsageError("deconv block: channels not divisible into groups");
  }
}

void init_gru(ParamStore& store, const std::string& prefix, const GruSpec& spec,
              Rng& rng) {
  spec.validate();
  const std::size_t C = spec.input_size, H = spec.hidden_size;
  for (bool reverse : {false, true}) {
    if (reverse && !spec.bidirectional) break;
    const std::string p = prefix + direction(reverse);
    store.add(p + ".w_ih", uniform({C, 3 * H}, static_cast<double>(C), rng));
    store.add(p + ".w_hh", uniform({H, 3 * H}, static_cast<double>(H), rng));
    store.add(p + ".bias", Tensor({3 * H}, 0.0));
  }
}

void init_conv_block(ParamStore& store, const std::string& prefix,
                     const ConvBlockSpec& spec, Rng& rng) {
  spec.validate();
  store.add(prefix + ".weight",
            uniform({spec.out_ch, spec.in_ch, spec.kernel},
                    static_cast<double>(spec.in_ch * spec.kernel), rng));
  store.add(prefix + ".bias", Tensor({spec.out_ch}, 0.0));
  store.add(prefix + ".gamma", Tensor({spec.out_ch}, 1.0));
  store.add(prefix + ".beta", Tensor({spec.out_ch}, 0.0));
}

void init_deconv_block(ParamStore& store, const std::string& prefix,
                       const DeconvBlockSpec& spec, Rng& rng) {
  spec.validate();
  store.add(prefix + ".weight",
            uniform({spec.in_ch, spec.out_ch, spec.kernel},
                    static_cast<double>(spec.in_ch * spec.kernel), rng));
  store.add(prefix + ".bias", Tensor({spec.out_ch}, 0.0));
  store.add(prefix + ".gamma", Tensor({spec.out_ch}, 1.0));
  store.add(prefix + ".beta", Tensor({spec.out_ch}, 0.0));
}

void init_linear(ParamStore& store, const std::string& prefix,
                 std::size_t in_features, Rng& rng) {
  store.add(prefix + ".weight",
            uniform({in_features, 1}, static_cast<double>(in_features), rng));
  store.add(prefix + ".bias", Tensor({1}, 0.0));
}

Var gru_cell_step(const Var& x_t, const Var& h_prev, const GruCellParams& p) {
  const std::size_t B = x_t.dim(0);
  const std::size_t H = p.w_hh.dim(0);
  if (h_prev.shape() != Shape{B, H}) {
    throw ShapeError("gru_cell_step: h_prev must be " + shape_str({B, H}) +
                     ", got " + shape_str(h_prev.shape()));
  }
  Tape& tape = x_t.tape();
  // Row-broadcast the bias as ones[B,1] x bias[1,3H].
  Var ones = tape.constant(Tensor({B, 1}, 1.0));
  Var bias_rows = ad::matmul(ones, ad::reshape(p.bias, {1, 3 * H}));
  Var gx = ad::add(ad::matmul(x_t, p.w_ih), bias_rows);
  Var gh = ad::matmul(h_prev, p.w_hh);
  Var z = ad::sigmoid(ad::add(ad::slice_last(gx, 0, H), ad::slice_last(gh, 0, H)));
  Var r = ad::sigmoid(
      ad::add(ad::slice_last(gx, H, 2 * H), ad::slice_last(gh, H, 2 * H)));
  Var n = ad::tanh(ad::add(ad::slice_last(gx, 2 * H, 3 * H),
                           ad::mul(r, ad::slice_last(gh, 2 * H, 3 * H))));
  return ad::add(n, ad::mul(z, ad::sub(h_prev, n)));
}

Var gru_sequence(Tape& tape, ParamStore& store, const std::string& prefix,
                 const GruSpec& spec, const Var& x) {
  if (x.shape().size() != 3 || x.dim(1) != spec.input_size) {
    throw ShapeError("gru_sequence: expected [B," + std::to_string(spec.input_size) +
                     ",L], got " + shape_str(x.shape()));
  }
  auto pass = [&](bool reverse) {
    const std::string p = prefix + direction(reverse);
    return ad::gru(x, tape.param(store, p + ".w_ih"), tape.param(store, p + ".w_hh"),
                   tape.param(store, p + ".bias"), reverse);
  };
  Var fwd = pass(false);
  if (!spec.bidirectional) return fwd;
  return ad::concat_channels({fwd, pass(true)});
}

Var gru_sequence_stepwise(Tape& tape, ParamStore& store,
                          const std::string& prefix, const GruSpec& spec,
                          const Var& x) {
  if (x.shape().size() != 3 || x.dim(1) != spec.input_size) {
    throw ShapeError("gru_sequence_stepwise: expected [B," +
                     std::to_string(spec.input_size) + ",L], got " +
                     shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), L = x.dim(2), H = spec.hidden_size;
  auto pass = [&](bool reverse) {
    const std::string p = prefix + direction(reverse);
    GruCellParams params{tape.param(store, p + ".w_ih"),
                         tape.param(store, p + ".w_hh"),
                         tape.param(store, p + ".bias")};
    std::vector<Var> states(L);
    Var h = tape.constant(Tensor({B, H}, 0.0));
    for (std::size_t step = 0; step < L; ++step) {
      const std::size_t t = reverse ? L - 1 - step : step;
      h = gru_cell_step(ad::time_slice(x, t), h, params);
      states[t] = h;
    }
    return ad::stack_time(states);
  };
  Var fwd = pass(false);
  if (!spec.bidirectional) return fwd;
  return ad::concat_channels({fwd, pass(true)});
}

Var conv_block(Tape& tape, ParamStore& store, const std::string& prefix,
               const ConvBlockSpec& spec, const Var& x) {
  spec.validate();
  Var y = ad::conv1d(x, tape.param(store, prefix + ".weight"),
                     tape.param(store, prefix + ".bias"), spec.dilation,
                     spec.padding(), 1);
  y = ad::group_norm(y, tape.param(store, prefix + ".gamma"),
                     tape.param(store, prefix + ".beta"), spec.norm_groups);
  return ad::tanh(y);
}

Var deconv_block(Tape& tape, ParamStore& store, const std::string& prefix,
                 const DeconvBlockSpec& spec, const Var& x) {
  spec.validate();
  Var y = ad::conv_transpose1d(x, tape.param(store, prefix + ".weight"),
                               tape.param(store, prefix + ".bias"), spec.stride,
                               spec.padding());
  y = ad::group_norm(y, tape.param(store, prefix + ".gamma"),
                     tape.param(store, prefix + ".beta"), spec.norm_groups);
  return ad::tanh(y);
}

Var linear(Tape& tape, ParamStore& store, const std::string& prefix,
           const Var& x) {
  Var w = tape.param(store, prefix + ".weight");
  if (w.shape().size() != 2 || w.dim(1) != 1 || x.shape().size() != 3 ||
      x.dim(1) != w.dim(0)) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  Var kernel = ad::reshape(w, {1, w.dim(0), 1});
  return ad::conv1d(x, kernel, tape.param(store, prefix + ".bias"), 1, 0, 1);
}

}  // namespace impz::layers
