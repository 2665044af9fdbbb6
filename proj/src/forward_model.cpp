#include "impz/forward_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "impz/error.hpp"

namespace impz {

namespace {
const std::string kFeat = "fwd.feat";
const std::string kWavelet = "fwd.wavelet";
}  // namespace

void ForwardModelConfig::validate() const {
  if (feat_channels < 1 || feat_kernel < 1 || downsample_stride < 1 ||
      norm_groups < 1) {
    throw UsageError("forward model: sizes must be >= 1");
  }
  if (wavelet_kernel_length % 2 == 0) {
    throw UsageError("forward model: wavelet_kernel_length must be odd");
  }
  if (feat_kernel % 2 == 0) throw UsageError("forward model: feat_kernel must be odd");
  if (feat_channels % norm_groups != 0) {
    throw UsageError("forward model: feat_channels not divisible by norm_groups");
  }
}

void to_json(nlohmann::json& j, const ForwardModelConfig& c) {
  j = {{"feat_channels", c.feat_channels},
       {"feat_kernel", c.feat_kernel},
       {"wavelet_kernel_length", c.wavelet_kernel_length},
       {"downsample_stride", c.downsample_stride},
       {"norm_groups", c.norm_groups}};
}

void from_json(const nlohmann::json& j, ForwardModelConfig& c) {
  ForwardModelConfig d;
  c.feat_channels = j.value("feat_channels", d.feat_channels);
  c.feat_kernel = j.value("feat_kernel", d.feat_kernel);
  c.wavelet_kernel_length = j.value("wavelet_kernel_length", d.wavelet_kernel_length);
  c.downsample_stride = j.value("downsample_stride", d.downsample_stride);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
}

ForwardModel::ForwardModel(ForwardModelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

layers::ConvBlockSpec ForwardModel::feature_block(std::size_t i) const {
  return {i == 0 ? 1 : cfg_.feat_channels, cfg_.feat_channels, cfg_.feat_kernel, 1,
          cfg_.norm_groups};
}

void ForwardModel::init_params(ParamStore& store, Rng& rng) const {
  layers::init_conv_block(store, kFeat + ".0", feature_block(0), rng);
  layers::init_conv_block(store, kFeat + ".1", feature_block(1), rng);
  const double bound =
      1.0 / std::sqrt(static_cast<double>(cfg_.feat_channels * cfg_.wavelet_kernel_length));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({1, cfg_.feat_channels, cfg_.wavelet_kernel_length});
  for (double& v : w.raw()) v = dist(rng);
  store.add(kWavelet + ".weight", std::move(w));
  store.add(kWavelet + ".bias", Tensor({1}, 0.0));
}

Var ForwardModel::features(Tape& tape, ParamStore& store, const Var& m) const {
  Var h = layers::conv_block(tape, store, kFeat + ".0", feature_block(0), m);
  return layers::conv_block(tape, store, kFeat + ".1", feature_block(1), h);
}

Var ForwardModel::wavelet_layer(Tape& tape, ParamStore& store,
                                const Var& feats) const {
  return ad::conv1d(feats, tape.param(store, kWavelet + ".weight"),
                    tape.param(store, kWavelet + ".bias"), 1,
                    (cfg_.wavelet_kernel_length - 1) / 2, cfg_.downsample_stride);
}

Var ForwardModel::synthesize(Tape& tape, ParamStore& store, const Var& m) const {
  if (m.shape().size() != 3 || m.dim(1) != 1) {
    throw ShapeError("synthesize: expected impedance [B,1,L], got " +
                     shape_str(m.shape()));
  }
  if (m.dim(2) % cfg_.downsample_stride != 0) {
    throw ShapeError("synthesize: length " + std::to_string(m.dim(2)) +
                     " not divisible by stride " +
                     std::to_string(cfg_.downsample_stride));
  }
  return wavelet_layer(tape, store, features(tape, store, m));
}

Tensor ForwardModel::extract_wavelet(const ParamStore& store) const {
  const std::string name = kWavelet + ".weight";
  if (!store.contains(name)) {
    throw UsageError("extract_wavelet: parameter store has no " + name);
  }
  const Tensor& w = store.at(name).value;
  const std::size_t C = w.dim(1), K = w.dim(2);
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += w[a * K + k] * w[b * K + k];
    return s;
  };
  std::size_t ref = 0;
  for (std::size_t c = 1; c < C; ++c) {
    if (dot(c, c) > dot(ref, ref)) ref = c;
  }
  Tensor out({K}, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double sign = dot(c, ref) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < K; ++k) out[k] += sign * w[c * K + k];
  }
  return out;
}

void write_wavelet_csv(const std::filesystem::path& path, const Tensor& wavelet) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "sample_index,amplitude\n";
  char buf[64];
  for (std::size_t i = 0; i < wavelet.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", wavelet[i]);
    out << i << ',' << buf << '\n';
  }
  if (!out) throw UsageError("write failed: " + path.string());
}

Tensor read_wavelet_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "sample_index,amplitude") {
    throw FormatError(path.string() + ": missing wavelet CSV header");
  }
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad wavelet row: " + line);
    if (std::stoul(line.substr(0, comma)) != values.size()) {
      throw FormatError("wavelet rows out of order at: " + line);
    }
    values.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
  }
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

}  // namespace impz
