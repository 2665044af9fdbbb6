#pragma once

#include <string>

#include "impz/autodiff.hpp"
#include "impz/param_store.hpp"
#include "impz/rng.hpp"

namespace impz::layers {

struct GruSpec {
  std::size_t input_size = 1;
  std::size_t hidden_size = 1;
  bool bidirectional = true;

  std::size_t output_channels() const {
    return bidirectional ? 2 * hidden_size : hidden_size;
  }
  void validate() const;
};

/// conv1d ("same" padding) -> group_norm -> tanh. Kernel must be odd.
struct ConvBlockSpec {
  std::size_t in_ch = 1, out_ch = 1, kernel = 3, dilation = 1;
  std::size_t norm_groups = 1;

  std::size_t padding() const { return dilation * (kernel - 1) / 2; }
  std::size_t receptive_field() const { return dilation * (kernel - 1) + 1; }
  void validate() const;
};

/// conv_transpose1d -> group_norm -> tanh with output length stride * L.
/// Requires kernel >= stride and (kernel - stride) even.
struct DeconvBlockSpec {
  std::size_t in_ch = 1, out_ch = 1, kernel = 4, stride = 2;
  std::size_t norm_groups = 1;

  std::size_t padding() const { return (kernel - stride) / 2; }
  void validate() const;
};

// Parameter registration. Weights are uniform in +-1/sqrt(fan_in), biases
// zero, group-norm gamma one and beta zero.
void init_gru(ParamStore& store, const std::string& prefix, const GruSpec& spec,
              Rng& rng);
void init_conv_block(ParamStore& store, const std::string& prefix,
                     const ConvBlockSpec& spec, Rng& rng);
void init_deconv_block(ParamStore& store, const std::string& prefix,
                       const DeconvBlockSpec& spec, Rng& rng);
void init_linear(ParamStore& store, const std::string& prefix,
                 std::size_t in_features, Rng& rng);

struct GruCellParams {
  Var w_ih;  // [C, 3H]
  Var w_hh;  // [H, 3H]
  Var bias;  // [3H]
};

/// One GRU step built from elementary ops. x_t: [B, C], h_prev: [B, H].
///   z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r)
///   n = tanh(W_n x + r * (U_n h) + b_n), h = (1 - z) * n + z * h_prev
Var gru_cell_step(const Var& x_t, const Var& h_prev, const GruCellParams& p);

/// GRU over [B, C, L] -> [B, H', L]. The bidirectional form runs a second
/// pass in reversed time and concatenates (forward, backward) channel-wise.
Var gru_sequence(Tape& tape, ParamStore& store, const std::string& prefix,
                 const GruSpec& spec, const Var& x);

/// Same contract as gru_sequence, unrolled step by step with gru_cell_step.
/// Slow; kept as the reference route for the fused GRU op.
Var gru_sequence_stepwise(Tape& tape, ParamStore& store,
                          const std::string& prefix, const GruSpec& spec,
                          const Var& x);

Var conv_block(Tape& tape, ParamStore& store, const std::string& prefix,
               const ConvBlockSpec& spec, const Var& x);
Var deconv_block(Tape& tape, ParamStore& store, const std::string& prefix,
                 const DeconvBlockSpec& spec, const Var& x);

/// Per-time-step affine map of channels to one value. x: [B, C, L] with
/// weight [C, 1] and bias [1]; returns [B, 1, L].
Var linear(Tape& tape, ParamStore& store, const std::string& prefix,
           const Var& x);

}  // namespace impz::layers
