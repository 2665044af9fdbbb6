#pragma once

#include <filesystem>

#include <json.hpp>

#include "impz/layers.hpp"

namespace impz {

struct ForwardModelConfig {
  std::size_t feat_channels = 8;
  std::size_t feat_kernel = 5;
  std::size_t wavelet_kernel_length = 51;
  std::size_t downsample_stride = 2;  // equals the inverse model's upsample factor
  std::size_t norm_groups = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const ForwardModelConfig& c);
void from_json(const nlohmann::json& j, ForwardModelConfig& c);

/// Learned forward operator: impedance [B,1,L'] -> seismic [B,1,L'/s].
/// Two conv blocks extract features; a final plain strided convolution plays
/// the role of the wavelet. Parameters live under the "fwd." prefix.
class ForwardModel {
 public:
  explicit ForwardModel(ForwardModelConfig cfg);

  const ForwardModelConfig& config() const { return cfg_; }
  void init_params(ParamStore& store, Rng& rng) const;

  Var features(Tape& tape, ParamStore& store, const Var& m) const;
  /// The final linear stage on its own: [B, F, L'] -> [B, 1, L'/s].
  Var wavelet_layer(Tape& tape, ParamStore& store, const Var& feats) const;
  Var synthesize(Tape& tape, ParamStore& store, const Var& m) const;

  layers::ConvBlockSpec feature_block(std::size_t i) const;

  /// Final-layer kernel summed over feature channels. Feature polarity is
  /// arbitrary, so each channel is sign-flipped to correlate non-negatively
  /// with the highest-energy channel before summing.
  Tensor extract_wavelet(const ParamStore& store) const;

 private:
  ForwardModelConfig cfg_;
};

/// CSV with header "sample_index,amplitude"; amplitudes at full precision.
void write_wavelet_csv(const std::filesystem::path& path, const Tensor& wavelet);
Tensor read_wavelet_csv(const std::filesystem::path& path);

}  // namespace impz
