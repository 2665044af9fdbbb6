#include "impz/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "impz/binary_io.hpp"
#include "impz/error.hpp"
#include "impz/rng.hpp"

namespace impz {

namespace {
constexpr const char* kSurveyMagic = "SURV1";
constexpr double kAiFloor = 2000.0;
constexpr double kAiCeil = 14000.0;
}  // namespace

std::string to_string(TraceKind kind) {
  return kind == TraceKind::seismic ? "seismic" : "impedance";
}

TraceKind trace_kind_from_string(const std::string& s) {
  if (s == "seismic") return TraceKind::seismic;
  if (s == "impedance") return TraceKind::impedance;
  throw FormatError("unknown trace kind: " + s);
}

void TraceSet::validate() const {
  if (n_traces == 0 || n_samples == 0) throw UsageError("empty trace set");
  if (values.size() != n_traces * n_samples) {
    throw FormatError("raster has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(n_traces) + "x" +
                      std::to_string(n_samples));
  }
}

void SurveyPair::validate() const {
  seismic.validate();
  impedance.validate();
  if (seismic.n_traces != impedance.n_traces) {
    throw UsageError("seismic and impedance trace counts differ (" +
                     std::to_string(seismic.n_traces) + " vs " +
                     std::to_string(impedance.n_traces) + ")");
  }
  if (resolution_ratio < 1 ||
      impedance.n_samples != resolution_ratio * seismic.n_samples) {
    throw UsageError("impedance samples (" + std::to_string(impedance.n_samples) +
                     ") != ratio " + std::to_string(resolution_ratio) +
                     " x seismic samples (" + std::to_string(seismic.n_samples) + ")");
  }
}

SurveyPair make_survey_pair(TraceSet seismic, TraceSet impedance) {
  if (seismic.n_samples == 0 || impedance.n_samples % seismic.n_samples != 0) {
    throw UsageError("impedance length " + std::to_string(impedance.n_samples) +
                     " is not a multiple of seismic length " +
                     std::to_string(seismic.n_samples));
  }
  SurveyPair p{std::move(seismic), std::move(impedance), 0};
  p.resolution_ratio = p.impedance.n_samples / p.seismic.n_samples;
  p.validate();
  return p;
}

TraceSet make_layered_model(std::size_t n_traces, std::size_t n_samples,
                            std::size_t n_layers, std::uint64_t seed,
                            const LayeredModelOptions& opt) {
  if (n_layers < 2) throw UsageError("layered model needs at least 2 layers");
  if (n_traces < 1 || n_samples < 4 * n_layers) {
    throw UsageError("layered model: " + std::to_string(n_samples) +
                     " samples cannot hold " + std::to_string(n_layers) + " layers");
  }
  Rng rng(seed);
  auto uni = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };

  const std::size_t n_if = n_layers - 1;
  const double spacing = static_cast<double>(n_samples) / static_cast<double>(n_layers);
  const double width = static_cast<double>(n_traces);
  const double regional_dip = uni(-0.08, 0.08) * spacing / std::max(1.0, width / 20.0);

  struct Interface {
    double base, dip, amp, wavelength, phase;
  };
  std::vector<Interface> ifs(n_if);
  for (std::size_t k = 0; k < n_if; ++k) {
    ifs[k].base = spacing * static_cast<double>(k + 1) + uni(-0.25, 0.25) * spacing;
    ifs[k].dip = regional_dip * uni(0.5, 1.5);
    ifs[k].amp = uni(0.0, 0.2) * spacing;
    ifs[k].wavelength = uni(0.5, 2.0) * width + 1.0;
    ifs[k].phase = uni(0.0, 2.0 * std::numbers::pi);
  }
  const double fault_x = opt.fault ? uni(0.3, 0.7) * width : width + 1.0;
  const double fault_throw = uni(0.3, 0.7) * spacing;

  // Layer impedances: trending upward with depth, adjacent layers at least
  // 300 apart; a small linear lateral gradient keeps them distinct per trace.
  std::vector<double> level(n_layers), lateral(n_layers);
  level[0] = uni(2500.0, 4500.0);
  for (std::size_t k = 1; k < n_layers; ++k) {
    double v = std::clamp(level[k - 1] + uni(-1200.0, 2200.0), 2200.0, 13800.0);
    if (std::abs(v - level[k - 1]) < 300.0) {
      v = level[k - 1] + (level[k - 1] + 300.0 <= 13800.0 ? 300.0 : -300.0);
    }
    level[k] = v;
  }
  for (double& g : lateral) g = uni(-70.0, 70.0);

  TraceSet ts;
  ts.kind = TraceKind::impedance;
  ts.n_traces = n_traces;
  ts.n_samples = n_samples;
  ts.dt_ms = opt.dt_ms;
  ts.dx_m = opt.dx_m;
  ts.values.resize(n_traces * n_samples);

  const long last = static_cast<long>(n_samples) - 1;
  std::vector<long> pos(n_if);
  for (std::size_t x = 0; x < n_traces; ++x) {
    const double xf = static_cast<double>(x);
    for (std::size_t k = 0; k < n_if; ++k) {
      const Interface& f = ifs[k];
      double z = f.base + f.dip * (xf - width / 2.0) +
                 f.amp * std::sin(2.0 * std::numbers::pi * xf / f.wavelength + f.phase);
      if (xf >= fault_x) z += fault_throw;
      pos[k] = std::lround(z);
    }
    // Interfaces strictly inside the trace, ordered, at least 2 samples apart.
    for (std::size_t k = 0; k < n_if; ++k) {
      const long lo = k == 0 ? 1 : pos[k - 1] + 2;
      pos[k] = std::max(pos[k], lo);
    }
    for (std::size_t k = n_if; k-- > 0;) {
      const long hi = k + 1 == n_if ? last : pos[k + 1] - 2;
      pos[k] = std::min(pos[k], hi);
    }
    auto tr = ts.trace(x);
    std::size_t layer = 0;
    for (long t = 0; t <= last; ++t) {
      while (layer < n_if && t >= pos[layer]) ++layer;
      const double v = level[layer] + lateral[layer] * (xf / std::max(1.0, width - 1.0) - 0.5);
      tr[static_cast<std::size_t>(t)] = std::clamp(v, kAiFloor, kAiCeil);
    }
  }
  return ts;
}

std::vector<double> reflectivity(std::span<const double> ai) {
  std::vector<double> r;
  if (ai.size() < 2) return r;
  r.reserve(ai.size() - 1);
  for (std::size_t t = 0; t < ai.size(); ++t) {
    if (!(ai[t] > 0.0)) {
      throw UsageError("reflectivity: impedance must be strictly positive");
    }
  }
  for (std::size_t t = 0; t + 1 < ai.size(); ++t) {
    r.push_back((ai[t + 1] - ai[t]) / (ai[t + 1] + ai[t]));
  }
  return r;
}

std::vector<double> ricker(double f_peak_hz, double dt_ms, std::size_t length) {
  if (!(f_peak_hz > 0.0)) throw UsageError("ricker: peak frequency must be > 0");
  if (!(dt_ms > 0.0)) throw UsageError("ricker: dt must be > 0");
  if (length % 2 == 0) throw UsageError("ricker: length must be odd");
  std::vector<double> w(length);
  const long half = static_cast<long>(length / 2);
  const double a = std::numbers::pi * std::numbers::pi * f_peak_hz * f_peak_hz;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(static_cast<long>(i) - half) * dt_ms * 1e-3;
    w[i] = (1.0 - 2.0 * a * t * t) * std::exp(-a * t * t);
  }
  return w;
}

std::size_t default_ricker_length(double f_peak_hz, double dt_ms) {
  const double half = std::ceil(1.5 / (f_peak_hz * dt_ms * 1e-3));
  return 2 * static_cast<std::size_t>(half) + 1;
}

SurveyPair synthesize_survey(const TraceSet& impedance, const SurveyOptions& opt,
                             TraceSet* clean) {
  impedance.validate();
  const std::size_t ratio = opt.resolution_ratio;
  if (ratio < 1 || impedance.n_samples % ratio != 0) {
    throw UsageError("resolution ratio " + std::to_string(ratio) +
                     " does not divide " + std::to_string(impedance.n_samples) +
                     " samples");
  }
  const std::size_t n = impedance.n_samples;
  const std::size_t ns = n / ratio;
  const std::vector<double> w =
      ricker(opt.f_peak_hz, impedance.dt_ms, default_ricker_length(opt.f_peak_hz, impedance.dt_ms));
  const long half = static_cast<long>(w.size() / 2);

  TraceSet seis;
  seis.kind = TraceKind::seismic;
  seis.n_traces = impedance.n_traces;
  seis.n_samples = ns;
  seis.dt_ms = impedance.dt_ms * static_cast<double>(ratio);
  seis.dx_m = impedance.dx_m;
  seis.values.assign(seis.n_traces * ns, 0.0);

  std::vector<double> full(n);
  for (std::size_t x = 0; x < impedance.n_traces; ++x) {
    const std::vector<double> r = reflectivity(impedance.trace(x));
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const long j = static_cast<long>(t) - (static_cast<long>(k) - half);
        if (j >= 0 && j < static_cast<long>(r.size())) s += w[k] * r[static_cast<std::size_t>(j)];
      }
      full[t] = s;
    }
    auto out = seis.trace(x);
    for (std::size_t i = 0; i < ns; ++i) out[i] = full[i * ratio];
  }
  if (clean) *clean = seis;

  if (std::isfinite(opt.noise_snr_db)) {
    double power = 0.0;
    for (double v : seis.values) power += v * v;
    power /= static_cast<double>(seis.values.size());
    const double ref = power > 0.0 ? power : 1.0;
    const double sigma = std::sqrt(ref / std::pow(10.0, opt.noise_snr_db / 10.0));
    Rng rng(opt.seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : seis.values) v += noise(rng);
  } else if (opt.noise_snr_db < 0) {
    throw UsageError("noise SNR must be finite or +inf");
  }

  SurveyPair pair{std::move(seis), impedance, ratio};
  pair.validate();
  return pair;
}

void SynthConfig::validate() const {
  if (traces < 1 || samples < 2) throw UsageError("survey needs at least 1 trace and 2 samples");
  if (layers < 2) throw UsageError("at least 2 layers are required");
  if (ratio < 1 || samples % ratio != 0) {
    throw UsageError("resolution ratio " + std::to_string(ratio) + " does not divide " +
                     std::to_string(samples) + " samples");
  }
  if (!(f_peak_hz > 0.0)) throw UsageError("peak frequency must be positive");
  if (std::isnan(snr_db)) throw UsageError("SNR must be a number or inf");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  // JSON has no infinity; a noiseless survey is written as the string "inf".
  j = {{"traces", c.traces}, {"samples", c.samples}, {"layers", c.layers},
       {"ratio", c.ratio},   {"f_peak_hz", c.f_peak_hz}, {"seed", c.seed}};
  if (std::isinf(c.snr_db)) {
    j["snr_db"] = "inf";
  } else {
    j["snr_db"] = c.snr_db;
  }
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.traces = j.value("traces", c.traces);
  c.samples = j.value("samples", c.samples);
  c.layers = j.value("layers", c.layers);
  c.ratio = j.value("ratio", c.ratio);
  c.f_peak_hz = j.value("f_peak_hz", c.f_peak_hz);
  c.seed = j.value("seed", c.seed);
  if (j.contains("snr_db")) {
    const auto& v = j.at("snr_db");
    c.snr_db = v.is_string() ? std::strtod(v.get<std::string>().c_str(), nullptr)
                             : v.get<double>();
  }
}

SurveyPair generate_survey(const SynthConfig& cfg) {
  cfg.validate();
  const TraceSet ai = make_layered_model(cfg.traces, cfg.samples, cfg.layers, cfg.seed);
  SurveyOptions opt;
  opt.f_peak_hz = cfg.f_peak_hz;
  opt.noise_snr_db = cfg.snr_db;
  opt.resolution_ratio = cfg.ratio;
  opt.seed = cfg.seed + 1;
  return synthesize_survey(ai, opt);
}

Split make_split(std::size_t n_traces, std::vector<std::size_t> labeled) {
  std::sort(labeled.begin(), labeled.end());
  if (std::adjacent_find(labeled.begin(), labeled.end()) != labeled.end()) {
    throw UsageError("labeled trace indices must be unique");
  }
  if (!labeled.empty() && labeled.back() >= n_traces) {
    throw UsageError("labeled trace index " + std::to_string(labeled.back()) +
                     " out of range for " + std::to_string(n_traces) + " traces");
  }
  Split s;
  s.labeled = std::move(labeled);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n_traces; ++i) {
    if (j < s.labeled.size() && s.labeled[j] == i) {
      ++j;
    } else {
      s.unlabeled.push_back(i);
    }
  }
  return s;
}

Split pick_labeled_traces(std::size_t n_traces, std::size_t n_labeled) {
  if (n_labeled < 1 || n_labeled > n_traces) {
    throw UsageError("cannot pick " + std::to_string(n_labeled) +
                     " labeled traces out of " + std::to_string(n_traces));
  }
  std::vector<std::size_t> idx;
  if (n_labeled == 1) {
    idx.push_back((n_traces - 1) / 2);
  } else {
    for (std::size_t i = 0; i < n_labeled; ++i) {
      idx.push_back(static_cast<std::size_t>(
          std::llround(static_cast<double>(i) * static_cast<double>(n_traces - 1) /
                       static_cast<double>(n_labeled - 1))));
    }
  }
  return make_split(n_traces, std::move(idx));
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"seismic_mean", s.seismic_mean},
       {"seismic_std", s.seismic_std},
       {"ai_min", s.ai_min},
       {"ai_max", s.ai_max}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  s.seismic_mean = j.at("seismic_mean").get<double>();
  s.seismic_std = j.at("seismic_std").get<double>();
  s.ai_min = j.at("ai_min").get<double>();
  s.ai_max = j.at("ai_max").get<double>();
}

NormStats fit_norm_stats(const SurveyPair& pair, const Split& split) {
  pair.validate();
  if (split.labeled.empty()) throw UsageError("normalization needs labeled traces");
  NormStats s;
  const auto& sv = pair.seismic.values;
  double sum = 0.0;
  for (double v : sv) sum += v;
  s.seismic_mean = sum / static_cast<double>(sv.size());
  double var = 0.0;
  for (double v : sv) var += (v - s.seismic_mean) * (v - s.seismic_mean);
  s.seismic_std = std::sqrt(var / static_cast<double>(sv.size()));
  if (!(s.seismic_std > 0.0)) throw UsageError("seismic data has zero variance");

  s.ai_min = std::numeric_limits<double>::infinity();
  s.ai_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : split.labeled) {
    for (double v : pair.impedance.trace(i)) {
      s.ai_min = std::min(s.ai_min, v);
      s.ai_max = std::max(s.ai_max, v);
    }
  }
  if (!(s.ai_max > s.ai_min)) {
    throw UsageError("labeled impedance has zero range");
  }
  return s;
}

Tensor normalize_seismic(const TraceSet& seismic, const NormStats& s) {
  Tensor out({seismic.n_traces, 1, seismic.n_samples});
  for (std::size_t i = 0; i < seismic.values.size(); ++i) {
    out[i] = (seismic.values[i] - s.seismic_mean) / s.seismic_std;
  }
  return out;
}

Tensor normalize_impedance(const TraceSet& impedance, const NormStats& s) {
  Tensor out({impedance.n_traces, 1, impedance.n_samples});
  const double range = s.ai_max - s.ai_min;
  for (std::size_t i = 0; i < impedance.values.size(); ++i) {
    out[i] = 2.0 * (impedance.values[i] - s.ai_min) / range - 1.0;
  }
  return out;
}

double denormalize_impedance(double v, const NormStats& s) {
  return (v + 1.0) * 0.5 * (s.ai_max - s.ai_min) + s.ai_min;
}

NormalizedSurvey normalize(const SurveyPair& pair, const Split& split) {
  NormalizedSurvey n;
  n.stats = fit_norm_stats(pair, split);
  n.seismic = normalize_seismic(pair.seismic, n.stats);
  n.impedance = normalize_impedance(pair.impedance, n.stats);
  return n;
}

void save_survey(const std::filesystem::path& path, const TraceSet& traces) {
  traces.validate();
  nlohmann::json h = {{"kind", to_string(traces.kind)},
                      {"n_traces", traces.n_traces},
                      {"n_samples", traces.n_samples},
                      {"dt_ms", traces.dt_ms},
                      {"dx_m", traces.dx_m},
                      {"endianness", "little"},
                      {"dtype", "f64"}};
  io::write_container(path, kSurveyMagic, h, traces.values);
}

TraceSet load_survey(const std::filesystem::path& path) {
  io::Container c = io::read_container(path, kSurveyMagic);
  TraceSet ts;
  try {
    const auto& h = c.header;
    if (h.at("dtype") != "f64" || h.at("endianness") != "little") {
      throw FormatError(path.string() + ": unsupported dtype/endianness");
    }
    ts.kind = trace_kind_from_string(h.at("kind").get<std::string>());
    ts.n_traces = h.at("n_traces").get<std::size_t>();
    ts.n_samples = h.at("n_samples").get<std::size_t>();
    ts.dt_ms = h.at("dt_ms").get<double>();
    ts.dx_m = h.at("dx_m").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad survey header: " + e.what());
  }
  if (c.payload.size() != ts.n_traces * ts.n_samples) {
    throw FormatError(path.string() + ": header says " + std::to_string(ts.n_traces) +
                      "x" + std::to_string(ts.n_samples) + " but payload has " +
                      std::to_string(c.payload.size()) + " values");
  }
  ts.values = std::move(c.payload);
  return ts;
}

}  // namespace impz
