#pragma once

#include <vector>

#include <json.hpp>

#include "impz/layers.hpp"

namespace impz {

/// Layer widths of the seismic-to-impedance network. Sequence-modeling and
/// local-pattern branches both produce 2 * gru_hidden channels so they can be
/// summed.
struct InverseModelConfig {
  std::size_t gru_hidden = 8;         // per direction
  std::size_t lpa_channels = 8;       // per dilation branch
  std::vector<std::size_t> dilation_set{1, 3, 6};
  std::size_t lpa_kernel = 5;
  std::size_t upsample_factor = 2;    // impedance samples per seismic sample
  std::size_t upsample_channels = 8;
  std::size_t regression_hidden = 8;  // per direction
  std::size_t norm_groups = 1;

  std::size_t branch_channels() const { return 2 * gru_hidden; }
  std::size_t upsample_stages() const;
  /// Shortest trace accepted by the local-pattern branch.
  std::size_t min_length() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const InverseModelConfig& c);
void from_json(const nlohmann::json& j, InverseModelConfig& c);

/// Learned inverse operator: seismic [B,1,L] -> impedance [B,1,u*L].
/// Parameters live under the "inv." prefix of a ParamStore.
class InverseModel {
 public:
  explicit InverseModel(InverseModelConfig cfg);

  const InverseModelConfig& config() const { return cfg_; }
  void init_params(ParamStore& store, Rng& rng) const;

  /// Three stacked bidirectional GRUs.
  Var sequence_modeling(Tape& tape, ParamStore& store, const Var& d) const;
  /// Parallel dilated conv blocks, concatenated and merged by one more block.
  Var local_pattern_analysis(Tape& tape, ParamStore& store, const Var& d) const;
  static Var branch_merge(const Var& low, const Var& high);
  /// log2(upsample_factor) stride-2 deconv blocks; identity when the factor is 1.
  Var upsample(Tape& tape, ParamStore& store, const Var& x) const;
  /// Bidirectional GRU then per-step linear map to one channel.
  Var regression_head(Tape& tape, ParamStore& store, const Var& x) const;

  Var invert(Tape& tape, ParamStore& store, const Var& d) const;

  // Specs of the individual stages, exposed for composition tests.
  layers::GruSpec sequence_layer(std::size_t i) const;
  layers::ConvBlockSpec dilation_block(std::size_t dilation) const;
  layers::ConvBlockSpec merge_block() const;
  layers::DeconvBlockSpec upsample_block(std::size_t stage) const;
  layers::GruSpec regression_gru() const;

 private:
  InverseModelConfig cfg_;
};

}  // namespace impz
