#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "impz/data.hpp"

namespace impz {

/// Pearson correlation over all samples pooled. Throws on zero variance.
double pcc(std::span<const double> y, std::span<const double> y_hat);
/// Coefficient of determination 1 - SS_res / SS_tot, pooled. Throws when
/// SS_tot is zero.
double r2(std::span<const double> y, std::span<const double> y_hat);

/// Per-trace variants: the metric on each trace of length `samples`, averaged.
double pcc_per_trace(std::span<const double> y, std::span<const double> y_hat,
                     std::size_t samples);
double r2_per_trace(std::span<const double> y, std::span<const double> y_hat,
                    std::size_t samples);

struct MetricsReport {
  std::string split;
  double pcc = 0.0;
  double r2 = 0.0;
  std::size_t n_traces = 0;
  double sigma_ai = 0.0;  // std of the true impedance in this split
};

enum class Pooling { pooled, per_trace };

/// Scores estimated against true impedance on the labeled ("training") and
/// unlabeled ("validation") traces separately.
std::pair<MetricsReport, MetricsReport> evaluate(const TraceSet& truth,
                                                 const TraceSet& estimate,
                                                 const Split& split,
                                                 Pooling pooling = Pooling::pooled);

/// CSV: split,pcc,r2,n_traces,sigma_ai
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsReport>& rows);

/// Fraction of samples with |y_hat - y| <= sigma.
double band_fraction(std::span<const double> y, std::span<const double> y_hat,
                     double sigma);

struct ScatterData {
  std::vector<double> truth;
  std::vector<double> estimate;
  double sigma_ai = 0.0;
  double band_fraction = 0.0;
};

/// Writes "# sigma_ai=<v>" and "# band_fraction=<v>" comment lines, a
/// "true,estimated" header, then one pair per sample. Returns the band
/// fraction, using the standard deviation of y as sigma_ai.
double export_scatter(std::span<const double> y, std::span<const double> y_hat,
                      const std::filesystem::path& path);
ScatterData read_scatter(const std::filesystem::path& path);

double stddev(std::span<const double> v);

}  // namespace impz
