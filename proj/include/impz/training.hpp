#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "impz/data.hpp"
#include "impz/forward_model.hpp"
#include "impz/inverse_model.hpp"
#include "impz/metrics.hpp"

namespace impz {

enum class Regime { semi, supervised, unsupervised };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
  double alpha = 0.2;  // weight of the property (impedance) loss
  double beta = 1.0;   // weight of the seismic reconstruction loss
  std::vector<std::size_t> labeled_indices;
  std::size_t batch_unlabeled = 16;
  std::size_t epochs = 100;
  double lr = 0.005;
  std::uint64_t seed = 1234;
  Regime regime = Regime::semi;
  std::size_t eval_every = 1;  // epochs between validation passes
  // Semi regime: the seismic loss also compares forward(well-log impedance)
  // with the seismic on labeled traces.
  bool labeled_synthetics = true;

  /// alpha with the regime applied: zero for unsupervised training.
  double effective_alpha() const;
  /// beta with the regime applied: zero for supervised training.
  double effective_beta() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossBreakdown {
  double property_loss = 0.0;
  double seismic_loss = 0.0;
  double total = 0.0;
};

struct LossVars {
  Var property;  // invalid when no labeled traces were given
  Var seismic;
  Var total;

  LossBreakdown values() const;
};

/// total = alpha * mse(m_hat_lab, m_lab) + beta * mse(d_hat, d).
/// Pass default-constructed Vars for the labeled pair when the batch holds
/// no labeled traces; alpha must then be zero.
LossVars semi_supervised_loss(const Var& m_hat_lab, const Var& m_lab,
                              const Var& d_hat, const Var& d, double alpha,
                              double beta);

struct WorkflowConfig {
  InverseModelConfig inverse;
  ForwardModelConfig forward;

  void validate() const;
};

void to_json(nlohmann::json& j, const WorkflowConfig& c);
void from_json(const nlohmann::json& j, WorkflowConfig& c);

/// Inverse and forward models sharing one parameter store.
struct Workflow {
  InverseModel inverse;
  ForwardModel forward;
  ParamStore params;

  Workflow(const WorkflowConfig& cfg, std::uint64_t seed);
  Workflow(const WorkflowConfig& cfg, ParamStore params);

  WorkflowConfig config() const { return {inverse.config(), forward.config()}; }
};

/// One optimizer step. `seismic` is [B,1,L] with the labeled traces first;
/// `labeled_ai` is [n_labeled,1,u*L] aligned with them (may be empty when
/// n_labeled is zero). With cfg.labeled_synthetics in the semi regime the
/// seismic loss is the mse over forward(inverse(seismic)) followed by
/// forward(labeled_ai) against the matching seismic traces. Returns the loss
/// before the update.
LossBreakdown train_step(Workflow& wf, Tape& tape, const Tensor& seismic,
                         const Tensor& labeled_ai, const TrainConfig& cfg);

/// Copies traces `idx` of a [N,C,L] tensor into a [idx.size(),C,L] tensor.
Tensor gather_traces(const Tensor& x, const std::vector<std::size_t>& idx);

/// Normalized inverse-model output for every trace of `seismic` [N,1,L],
/// evaluated `chunk` traces at a time.
Tensor predict_normalized(const InverseModel& model, const ParamStore& params,
                          const Tensor& seismic, std::size_t chunk = 32);
/// Impedance estimate in physical units.
TraceSet predict_ai(const InverseModel& model, const ParamStore& params,
                    const TraceSet& seismic, const NormStats& stats,
                    std::size_t resolution_ratio, std::size_t chunk = 32);
/// Forward-model output for normalized impedance [N,1,L'].
Tensor synthesize_normalized(const ForwardModel& model, const ParamStore& params,
                             const Tensor& ai, std::size_t chunk = 32);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct EvalRecord {
  std::size_t epoch = 0;
  MetricsReport training;
  MetricsReport validation;
};

struct TrainResult {
  std::vector<StepRecord> history;
  std::vector<EvalRecord> evaluations;
  ParamStore best;           // snapshot with the highest validation PCC
  double best_validation_pcc = 0.0;
  std::size_t best_epoch = 0;  // 0 means the initial parameters
  Split split;
  NormStats stats;
};

struct TrainOptions {
  std::optional<std::filesystem::path> loss_csv;
  std::function<void(const EvalRecord&)> on_eval;
};

/// Runs cfg.epochs epochs. Each epoch visits every unlabeled trace once in a
/// seeded random order, batch_unlabeled at a time, always together with all
/// labeled traces. Parameters in `wf` end at their final values; the best
/// validation snapshot is returned.
TrainResult train_loop(Workflow& wf, const SurveyPair& survey,
                       const TrainConfig& cfg, const TrainOptions& opt = {});

/// Writes the header "step,epoch,property_loss,seismic_loss,total" and rows.
void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<StepRecord>& history);

}  // namespace impz
