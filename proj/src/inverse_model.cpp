#include "impz/inverse_model.hpp"

#include <algorithm>

#include "impz/error.hpp"

namespace impz {

namespace {
const std::string kSeq = "inv.seq";
const std::string kLpa = "inv.lpa";
const std::string kUp = "inv.up";
const std::string kReg = "inv.reg";
}  // namespace

std::size_t InverseModelConfig::upsample_stages() const {
  std::size_t stages = 0;
  for (std::size_t u = upsample_factor; u > 1; u /= 2) ++stages;
  return stages;
}

std::size_t InverseModelConfig::min_length() const {
  const std::size_t dmax = *std::max_element(dilation_set.begin(), dilation_set.end());
  return dmax * (lpa_kernel - 1) + 1;
}

void InverseModelConfig::validate() const {
  if (gru_hidden < 1 || lpa_channels < 1 || regression_hidden < 1 ||
      upsample_channels < 1 || norm_groups < 1) {
    throw UsageError("inverse model: layer sizes must be >= 1");
  }
  if (dilation_set.empty()) throw UsageError("inverse model: empty dilation set");
  for (std::size_t d : dilation_set) {
    if (d < 1) throw UsageError("inverse model: dilations must be >= 1");
  }
  if (lpa_kernel % 2 == 0) throw UsageError("inverse model: lpa_kernel must be odd");
  if (upsample_factor < 1 || (upsample_factor & (upsample_factor - 1)) != 0) {
    throw UsageError("inverse model: upsample factor " +
                     std::to_string(upsample_factor) + " is not a power of two");
  }
  for (std::size_t ch : {lpa_channels, branch_channels(), upsample_channels}) {
    if (ch % norm_groups != 0) {
      throw UsageError("inverse model: channel count " + std::to_string(ch) +
                       " not divisible by norm_groups");
    }
  }
}

void to_json(nlohmann::json& j, const InverseModelConfig& c) {
  j = {{"gru_hidden", c.gru_hidden},
       {"lpa_channels", c.lpa_channels},
       {"dilation_set", c.dilation_set},
       {"lpa_kernel", c.lpa_kernel},
       {"upsample_factor", c.upsample_factor},
       {"upsample_channels", c.upsample_channels},
       {"regression_hidden", c.regression_hidden},
       {"norm_groups", c.norm_groups}};
}

void from_json(const nlohmann::json& j, InverseModelConfig& c) {
  InverseModelConfig d;
  c.gru_hidden = j.value("gru_hidden", d.gru_hidden);
  c.lpa_channels = j.value("lpa_channels", d.lpa_channels);
  c.dilation_set = j.value("dilation_set", d.dilation_set);
  c.lpa_kernel = j.value("lpa_kernel", d.lpa_kernel);
  c.upsample_factor = j.value("upsample_factor", d.upsample_factor);
  c.upsample_channels = j.value("upsample_channels", d.upsample_channels);
  c.regression_hidden = j.value("regression_hidden", d.regression_hidden);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
}

InverseModel::InverseModel(InverseModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

layers::GruSpec InverseModel::sequence_layer(std::size_t i) const {
  return {i == 0 ? 1 : cfg_.branch_channels(), cfg_.gru_hidden, true};
}

layers::ConvBlockSpec InverseModel::dilation_block(std::size_t dilation) const {
  return {1, cfg_.lpa_channels, cfg_.lpa_kernel, dilation, cfg_.norm_groups};
}

layers::ConvBlockSpec InverseModel::merge_block() const {
  return {cfg_.lpa_channels * cfg_.dilation_set.size(), cfg_.branch_channels(),
          cfg_.lpa_kernel, 1, cfg_.norm_groups};
}

layers::DeconvBlockSpec InverseModel::upsample_block(std::size_t stage) const {
  return {stage == 0 ? cfg_.branch_channels() : cfg_.upsample_channels,
          cfg_.upsample_channels, 4, 2, cfg_.norm_groups};
}

layers::GruSpec InverseModel::regression_gru() const {
  const std::size_t in =
      cfg_.upsample_stages() == 0 ? cfg_.branch_channels() : cfg_.upsample_channels;
  return {in, cfg_.regression_hidden, true};
}

void InverseModel::init_params(ParamStore& store, Rng& rng) const {
  for (std::size_t i = 0; i < 3; ++i) {
    layers::init_gru(store, kSeq + "." + std::to_string(i), sequence_layer(i), rng);
  }
  for (std::size_t i = 0; i < cfg_.dilation_set.size(); ++i) {
    layers::init_conv_block(store, kLpa + ".dil" + std::to_string(i),
                            dilation_block(cfg_.dilation_set[i]), rng);
  }
  layers::init_conv_block(store, kLpa + ".merge", merge_block(), rng);
  for (std::size_t s = 0; s < cfg_.upsample_stages(); ++s) {
    layers::init_deconv_block(store, kUp + "." + std::to_string(s),
                              upsample_block(s), rng);
  }
  layers::init_gru(store, kReg + ".gru", regression_gru(), rng);
  layers::init_linear(store, kReg + ".linear", regression_gru().output_channels(),
                      rng);
}

Var InverseModel::sequence_modeling(Tape& tape, ParamStore& store,
                                    const Var& d) const {
  Var h = d;
  for (std::size_t i = 0; i < 3; ++i) {
    h = layers::gru_sequence(tape, store, kSeq + "." + std::to_string(i),
                             sequence_layer(i), h);
  }
  return h;
}

Var InverseModel::local_pattern_analysis(Tape& tape, ParamStore& store,
                                         const Var& d) const {
  if (d.shape().size() != 3 || d.dim(2) < cfg_.min_length()) {
    throw ShapeError("local_pattern_analysis: trace of " +
                     std::to_string(d.shape().size() == 3 ? d.dim(2) : 0) +
                     " samples is shorter than the receptive field of " +
                     std::to_string(cfg_.min_length()));
  }
  std::vector<Var> branches;
  for (std::size_t i = 0; i < cfg_.dilation_set.size(); ++i) {
    branches.push_back(layers::conv_block(tape, store,
                                          kLpa + ".dil" + std::to_string(i),
                                          dilation_block(cfg_.dilation_set[i]), d));
  }
  return layers::conv_block(tape, store, kLpa + ".merge", merge_block(),
                            ad::concat_channels(branches));
}

Var InverseModel::branch_merge(const Var& low, const Var& high) {
  return ad::add(low, high);
}

Var InverseModel::upsample(Tape& tape, ParamStore& store, const Var& x) const {
  Var y = x;
  for (std::size_t s = 0; s < cfg_.upsample_stages(); ++s) {
    y = layers::deconv_block(tape, store, kUp + "." + std::to_string(s),
                             upsample_block(s), y);
  }
  return y;
}

Var InverseModel::regression_head(Tape& tape, ParamStore& store,
                                  const Var& x) const {
  Var h = layers::gru_sequence(tape, store, kReg + ".gru", regression_gru(), x);
  return layers::linear(tape, store, kReg + ".linear", h);
}

Var InverseModel::invert(Tape& tape, ParamStore& store, const Var& d) const {
  if (d.shape().size() != 3 || d.dim(1) != 1) {
    throw ShapeError("invert: expected seismic [B,1,L], got " + shape_str(d.shape()));
  }
  Var low = sequence_modeling(tape, store, d);
  Var high = local_pattern_analysis(tape, store, d);
  return regression_head(tape, store, upsample(tape, store, branch_merge(low, high)));
}

}  // namespace impz
