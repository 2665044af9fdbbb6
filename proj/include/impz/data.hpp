#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "impz/tensor.hpp"

namespace impz {

enum class TraceKind { seismic, impedance };

std::string to_string(TraceKind kind);
TraceKind trace_kind_from_string(const std::string& s);

/// A survey section: n_traces time series of n_samples each, trace-major.
/// Impedance is in physical units (m/s * g/cc) until normalized.
struct TraceSet {
  TraceKind kind = TraceKind::seismic;
  std::size_t n_traces = 0;
  std::size_t n_samples = 0;
  double dt_ms = 1.0;
  double dx_m = 12.5;
  std::vector<double> values;

  std::span<const double> trace(std::size_t i) const {
    return {values.data() + i * n_samples, n_samples};
  }
  std::span<double> trace(std::size_t i) {
    return {values.data() + i * n_samples, n_samples};
  }
  void validate() const;
};

/// Seismic and impedance over the same traces; the impedance is sampled
/// resolution_ratio times finer in time.
struct SurveyPair {
  TraceSet seismic;
  TraceSet impedance;
  std::size_t resolution_ratio = 1;

  void validate() const;
};

/// Builds a pair from separately loaded sections, deriving the ratio.
SurveyPair make_survey_pair(TraceSet seismic, TraceSet impedance);

struct Split {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

struct LayeredModelOptions {
  double dt_ms = 1.0;
  double dx_m = 12.5;
  bool fault = true;
};

/// Laterally continuous layered impedance section with gently dipping,
/// undulating interfaces and an optional normal-fault offset. Piecewise
/// constant along each trace, values within [2000, 14000].
TraceSet make_layered_model(std::size_t n_traces, std::size_t n_samples,
                            std::size_t n_layers, std::uint64_t seed,
                            const LayeredModelOptions& opt = {});

/// Normal-incidence reflectivity, length n - 1.
std::vector<double> reflectivity(std::span<const double> ai);

/// Ricker wavelet of the given peak frequency, centred, odd length.
std::vector<double> ricker(double f_peak_hz, double dt_ms, std::size_t length);

/// Wavelet length used by the survey generator: odd, spanning +-1.5/f_peak.
std::size_t default_ricker_length(double f_peak_hz, double dt_ms);

struct SurveyOptions {
  double f_peak_hz = 30.0;
  double noise_snr_db = 20.0;  // +inf for noiseless data
  std::size_t resolution_ratio = 2;
  std::uint64_t seed = 1234;
};

/// Convolutional forward modelling: reflectivity at impedance sampling,
/// convolved with a Ricker wavelet, decimated by the resolution ratio, plus
/// white Gaussian noise scaled to the requested survey-wide SNR. When the
/// noiseless section is identically zero the noise is scaled to unit power.
/// `clean`, when given, receives the noiseless seismic.
SurveyPair synthesize_survey(const TraceSet& impedance, const SurveyOptions& opt,
                             TraceSet* clean = nullptr);

/// Everything needed to regenerate a synthetic survey.
struct SynthConfig {
  std::size_t traces = 200;
  std::size_t samples = 512;  // impedance samples per trace
  std::size_t layers = 12;
  std::size_t ratio = 2;
  double f_peak_hz = 30.0;
  double snr_db = 20.0;
  std::uint64_t seed = 1234;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Layered impedance model (seeded with `seed`) and its noisy seismic
/// (noise seeded with `seed + 1`).
SurveyPair generate_survey(const SynthConfig& cfg);

/// Evenly spaced labeled traces: index_i = round(i (n - 1) / (k - 1)); the
/// middle trace (n - 1) / 2 when k == 1. Every other trace is unlabeled.
Split pick_labeled_traces(std::size_t n_traces, std::size_t n_labeled);
/// Split for an explicit labeled index list.
Split make_split(std::size_t n_traces, std::vector<std::size_t> labeled);

struct NormStats {
  double seismic_mean = 0.0;
  double seismic_std = 1.0;
  double ai_min = 0.0;
  double ai_max = 1.0;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

/// Seismic statistics over the whole survey; impedance range over the
/// labeled traces only.
NormStats fit_norm_stats(const SurveyPair& pair, const Split& split);

/// [n_traces, 1, n_samples] tensors in model units.
Tensor normalize_seismic(const TraceSet& seismic, const NormStats& s);
Tensor normalize_impedance(const TraceSet& impedance, const NormStats& s);
double denormalize_impedance(double v, const NormStats& s);

struct NormalizedSurvey {
  Tensor seismic;
  Tensor impedance;
  NormStats stats;
};

NormalizedSurvey normalize(const SurveyPair& pair, const Split& split);

/// Survey file: "SURV1", u64 LE header length, JSON header {kind, n_traces,
/// n_samples, dt_ms, dx_m, endianness, dtype}, trace-major f64 LE raster.
void save_survey(const std::filesystem::path& path, const TraceSet& traces);
TraceSet load_survey(const std::filesystem::path& path);

}  // namespace impz
