#include "impz/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "impz/error.hpp"

namespace impz {

namespace {

void require_same(std::span<const double> y, std::span<const double> y_hat,
                  const char* what) {
  if (y.size() != y_hat.size() || y.empty()) {
    throw ShapeError(std::string(what) + ": inputs must be non-empty and equal length");
  }
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> gather(const TraceSet& ts, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size() * ts.n_samples);
  for (std::size_t i : idx) {
    auto tr = ts.trace(i);
    out.insert(out.end(), tr.begin(), tr.end());
  }
  return out;
}

}  // namespace

double stddev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double pcc(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "pcc");
  const double my = mean(y), mh = mean(y_hat);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my, b = y_hat[i] - mh;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericError("pcc: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double r2(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, "r2");
  const double my = mean(y);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  if (!(ss_tot > 0.0)) throw NumericError("r2: zero total sum of squares");
  return 1.0 - ss_res / ss_tot;
}

double pcc_per_trace(std::span<const double> y, std::span<const double> y_hat,
                     std::size_t samples) {
  require_same(y, y_hat, "pcc_per_trace");
  if (samples == 0 || y.size() % samples != 0) {
    throw ShapeError("pcc_per_trace: length not a multiple of trace length");
  }
  const std::size_t n = y.size() / samples;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += pcc(y.subspan(i * samples, samples), y_hat.subspan(i * samples, samples));
  }
  return acc / static_cast<double>(n);
}

double r2_per_trace(std::span<const double> y, std::span<const double> y_hat,
                    std::size_t samples) {
  require_same(y, y_hat, "r2_per_trace");
  if (samples == 0 || y.size() % samples != 0) {
    throw ShapeError("r2_per_trace: length not a multiple of trace length");
  }
  const std::size_t n = y.size() / samples;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += r2(y.subspan(i * samples, samples), y_hat.subspan(i * samples, samples));
  }
  return acc / static_cast<double>(n);
}

std::pair<MetricsReport, MetricsReport> evaluate(const TraceSet& truth,
                                                 const TraceSet& estimate,
                                                 const Split& split,
                                                 Pooling pooling) {
  truth.validate();
  estimate.validate();
  if (truth.n_traces != estimate.n_traces || truth.n_samples != estimate.n_samples) {
    throw ShapeError("evaluate: estimate is " + std::to_string(estimate.n_traces) +
                     "x" + std::to_string(estimate.n_samples) + ", truth is " +
                     std::to_string(truth.n_traces) + "x" +
                     std::to_string(truth.n_samples));
  }
  auto score = [&](const std::string& name, const std::vector<std::size_t>& idx) {
    MetricsReport r;
    r.split = name;
    r.n_traces = idx.size();
    if (idx.empty()) {
      r.pcc = r.r2 = std::nan("");
      return r;
    }
    const std::vector<double> y = gather(truth, idx);
    const std::vector<double> y_hat = gather(estimate, idx);
    r.sigma_ai = stddev(y);
    if (pooling == Pooling::pooled) {
      r.pcc = pcc(y, y_hat);
      r.r2 = r2(y, y_hat);
    } else {
      r.pcc = pcc_per_trace(y, y_hat, truth.n_samples);
      r.r2 = r2_per_trace(y, y_hat, truth.n_samples);
    }
    return r;
  };
  return {score("training", split.labeled), score("validation", split.unlabeled)};
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsReport>& rows) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "split,pcc,r2,n_traces,sigma_ai\n";
  for (const auto& r : rows) {
    out << r.split << ',' << fmt(r.pcc) << ',' << fmt(r.r2) << ',' << r.n_traces
        << ',' << fmt(r.sigma_ai) << '\n';
  }
  if (!out) throw UsageError("write failed: " + path.string());
}

double band_fraction(std::span<const double> y, std::span<const double> y_hat,
                     double sigma) {
  require_same(y, y_hat, "band_fraction");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y_hat[i] - y[i]) <= sigma) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

double export_scatter(std::span<const double> y, std::span<const double> y_hat,
                      const std::filesystem::path& path) {
  require_same(y, y_hat, "export_scatter");
  const double sigma = stddev(y);
  const double frac = band_fraction(y, y_hat, sigma);
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "# sigma_ai=" << fmt(sigma) << '\n';
  out << "# band_fraction=" << fmt(frac) << '\n';
  out << "true,estimated\n";
  for (std::size_t i = 0; i < y.size(); ++i) {
    out << fmt(y[i]) << ',' << fmt(y_hat[i]) << '\n';
  }
  if (!out) throw UsageError("write failed: " + path.string());
  return frac;
}

ScatterData read_scatter(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  ScatterData d;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# sigma_ai=", 0) == 0) {
      d.sigma_ai = std::strtod(line.c_str() + 11, nullptr);
    } else if (line.rfind("# band_fraction=", 0) == 0) {
      d.band_fraction = std::strtod(line.c_str() + 16, nullptr);
    } else if (line == "true,estimated") {
      header = true;
    } else {
      const auto comma = line.find(',');
      if (!header || comma == std::string::npos) {
        throw FormatError(path.string() + ": unexpected line: " + line);
      }
      d.truth.push_back(std::strtod(line.c_str(), nullptr));
      d.estimate.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
    }
  }
  return d;
}

}  // namespace impz
