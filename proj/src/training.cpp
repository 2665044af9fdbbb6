#include "impz/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "impz/error.hpp"

namespace impz {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_loss_row(std::ostream& out, const StepRecord& r) {
  out << r.step << ',' << r.epoch << ',' << fmt(r.loss.property_loss) << ','
      << fmt(r.loss.seismic_loss) << ',' << fmt(r.loss.total) << '\n';
}

constexpr const char* kLossHeader = "step,epoch,property_loss,seismic_loss,total\n";

// Shuffling gets its own stream so it does not depend on how many draws the
// parameter initialization used.
constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::semi: return "semi";
    case Regime::supervised: return "supervised";
    case Regime::unsupervised: return "unsupervised";
  }
  return "semi";
}

Regime regime_from_string(const std::string& s) {
  if (s == "semi") return Regime::semi;
  if (s == "supervised") return Regime::supervised;
  if (s == "unsupervised") return Regime::unsupervised;
  throw UsageError("unknown regime '" + s + "' (expected semi, supervised or unsupervised)");
}

double TrainConfig::effective_alpha() const {
  return regime == Regime::unsupervised ? 0.0 : alpha;
}

double TrainConfig::effective_beta() const {
  return regime == Regime::supervised ? 0.0 : beta;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw UsageError("alpha and beta must be finite and non-negative");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("lr must be finite and non-negative");
  if (labeled_indices.empty()) {
    throw UsageError("at least one labeled trace is required (impedance scaling uses them)");
  }
  if (eval_every == 0) throw UsageError("eval_every must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"alpha", c.alpha},
       {"beta", c.beta},
       {"labeled_indices", c.labeled_indices},
       {"batch_unlabeled", c.batch_unlabeled},
       {"epochs", c.epochs},
       {"lr", c.lr},
       {"seed", c.seed},
       {"regime", to_string(c.regime)},
       {"eval_every", c.eval_every},
       {"labeled_synthetics", c.labeled_synthetics}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.labeled_indices = j.value("labeled_indices", c.labeled_indices);
  c.batch_unlabeled = j.value("batch_unlabeled", c.batch_unlabeled);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  if (j.contains("regime")) c.regime = regime_from_string(j.at("regime").get<std::string>());
  c.eval_every = j.value("eval_every", c.eval_every);
  c.labeled_synthetics = j.value("labeled_synthetics", c.labeled_synthetics);
}

LossBreakdown LossVars::values() const {
  LossBreakdown b;
  b.property_loss = property.valid() ? property.value().item() : 0.0;
  b.seismic_loss = seismic.value().item();
  b.total = total.value().item();
  return b;
}

LossVars semi_supervised_loss(const Var& m_hat_lab, const Var& m_lab,
                              const Var& d_hat, const Var& d, double alpha,
                              double beta) {
  if (alpha < 0.0 || beta < 0.0) throw UsageError("loss weights must be non-negative");
  if (m_hat_lab.valid() != m_lab.valid()) {
    throw UsageError("labeled prediction and target must both be given");
  }
  if (!m_hat_lab.valid() && alpha > 0.0) {
    throw UsageError("property loss weight is positive but no labeled traces were given");
  }
  LossVars l;
  l.seismic = ad::mse(d_hat, d);
  if (m_hat_lab.valid()) {
    l.property = ad::mse(m_hat_lab, m_lab);
    l.total = ad::add(ad::scale(l.property, alpha), ad::scale(l.seismic, beta));
  } else {
    l.total = ad::scale(l.seismic, beta);
  }
  return l;
}

void WorkflowConfig::validate() const {
  inverse.validate();
  forward.validate();
  if (forward.downsample_stride != inverse.upsample_factor) {
    throw UsageError("forward model stride " + std::to_string(forward.downsample_stride) +
                     " must equal the inverse model upsample factor " +
                     std::to_string(inverse.upsample_factor));
  }
}

void to_json(nlohmann::json& j, const WorkflowConfig& c) {
  j = {{"inverse", c.inverse}, {"forward", c.forward}};
}

void from_json(const nlohmann::json& j, WorkflowConfig& c) {
  if (j.contains("inverse")) c.inverse = j.at("inverse").get<InverseModelConfig>();
  if (j.contains("forward")) c.forward = j.at("forward").get<ForwardModelConfig>();
}

Workflow::Workflow(const WorkflowConfig& cfg, std::uint64_t seed)
    : inverse(cfg.inverse), forward(cfg.forward) {
  cfg.validate();
  Rng rng(seed);
  inverse.init_params(params, rng);
  forward.init_params(params, rng);
}

Workflow::Workflow(const WorkflowConfig& cfg, ParamStore p)
    : inverse(cfg.inverse), forward(cfg.forward), params(std::move(p)) {
  cfg.validate();
  ParamStore expected;
  Rng rng(0);
  inverse.init_params(expected, rng);
  forward.init_params(expected, rng);
  for (const auto& e : expected) {
    if (!params.contains(e.name)) {
      throw UsageError("parameter '" + e.name + "' missing for this model configuration");
    }
    if (params.at(e.name).value.shape() != e.value.shape()) {
      throw UsageError("parameter '" + e.name + "' has shape " +
                       shape_str(params.at(e.name).value.shape()) + ", model expects " +
                       shape_str(e.value.shape()));
    }
  }
  if (params.size() != expected.size()) {
    throw UsageError("checkpoint holds parameters this model configuration does not use");
  }
}

namespace {

Var batch_concat(const Var& a, const Var& b) {
  const Shape sa = a.shape(), sb = b.shape();
  const Var joined = ad::concat_channels({ad::reshape(a, {1, sa[0], sa[1] * sa[2]}),
                                          ad::reshape(b, {1, sb[0], sb[1] * sb[2]})});
  return ad::reshape(joined, {sa[0] + sb[0], sa[1], sa[2]});
}

}  // namespace

LossBreakdown train_step(Workflow& wf, Tape& tape, const Tensor& seismic,
                         const Tensor& labeled_ai, const TrainConfig& cfg) {
  const std::size_t n_lab = labeled_ai.empty() ? 0 : labeled_ai.dim(0);
  if (seismic.rank() != 3 || seismic.dim(1) != 1) {
    throw ShapeError("train_step: seismic batch must be [B,1,L], got " +
                     shape_str(seismic.shape()));
  }
  if (n_lab > seismic.dim(0)) throw ShapeError("train_step: more labels than traces");

  tape.reset();
  Var d = tape.constant(seismic);
  const Var m_hat = wf.inverse.invert(tape, wf.params, d);
  Var m_hat_lab, m_lab;
  Var fwd_in = m_hat;
  if (n_lab > 0) {
    m_lab = tape.constant(labeled_ai);
    m_hat_lab = ad::batch_slice(m_hat, 0, n_lab);
    if (cfg.regime == Regime::semi && cfg.labeled_synthetics) {
      fwd_in = batch_concat(m_hat, m_lab);
      d = batch_concat(d, ad::batch_slice(d, 0, n_lab));
    }
  }
  const Var d_hat = wf.forward.synthesize(tape, wf.params, fwd_in);
  const LossVars loss = semi_supervised_loss(m_hat_lab, m_lab, d_hat, d,
                                             cfg.effective_alpha(), cfg.effective_beta());
  const LossBreakdown out = loss.values();
  if (!std::isfinite(out.total)) {
    throw NumericError("training diverged: non-finite loss at step " +
                       std::to_string(wf.params.step()));
  }
  tape.backward(loss.total);
  AdamOptions adam;
  adam.lr = cfg.lr;
  adam_step(wf.params, adam);
  return out;
}

Tensor gather_traces(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() != 3) throw ShapeError("gather_traces expects [N,C,L]");
  const std::size_t per = x.dim(1) * x.dim(2);
  Tensor out({idx.size(), x.dim(1), x.dim(2)});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= x.dim(0)) throw ShapeError("gather_traces: index out of range");
    std::copy_n(x.data() + idx[k] * per, per, out.data() + k * per);
  }
  return out;
}

namespace {

template <typename Fn>
Tensor chunked(const Tensor& in, std::size_t chunk, Fn&& fn) {
  if (in.rank() != 3) throw ShapeError("expected [N,C,L], got " + shape_str(in.shape()));
  if (chunk == 0) chunk = 1;
  const std::size_t n = in.dim(0);
  Tensor out;
  std::size_t per_out = 0;
  Tape tape;
  for (std::size_t b0 = 0; b0 < n; b0 += chunk) {
    const std::size_t b1 = std::min(n, b0 + chunk);
    std::vector<std::size_t> idx(b1 - b0);
    std::iota(idx.begin(), idx.end(), b0);
    tape.reset();
    const Tensor y = fn(tape, tape.constant(gather_traces(in, idx))).value();
    if (out.empty()) {
      out = Tensor({n, y.dim(1), y.dim(2)});
      per_out = y.dim(1) * y.dim(2);
    }
    std::copy(y.raw().begin(), y.raw().end(), out.data() + b0 * per_out);
  }
  return out;
}

}  // namespace

Tensor predict_normalized(const InverseModel& model, const ParamStore& params,
                          const Tensor& seismic, std::size_t chunk) {
  // Tape::param copies values into the tape and never writes to the store
  // unless backward() runs, which inference never calls.
  auto& store = const_cast<ParamStore&>(params);
  return chunked(seismic, chunk, [&](Tape& tape, const Var& d) {
    return model.invert(tape, store, d);
  });
}

Tensor synthesize_normalized(const ForwardModel& model, const ParamStore& params,
                             const Tensor& ai, std::size_t chunk) {
  auto& store = const_cast<ParamStore&>(params);
  return chunked(ai, chunk, [&](Tape& tape, const Var& m) {
    return model.synthesize(tape, store, m);
  });
}

TraceSet predict_ai(const InverseModel& model, const ParamStore& params,
                    const TraceSet& seismic, const NormStats& stats,
                    std::size_t resolution_ratio, std::size_t chunk) {
  if (resolution_ratio != model.config().upsample_factor) {
    throw UsageError("model upsamples by " + std::to_string(model.config().upsample_factor) +
                     " but the data has resolution ratio " +
                     std::to_string(resolution_ratio));
  }
  const Tensor pred = predict_normalized(model, params, normalize_seismic(seismic, stats), chunk);
  TraceSet out;
  out.kind = TraceKind::impedance;
  out.n_traces = seismic.n_traces;
  out.n_samples = pred.dim(2);
  out.dt_ms = seismic.dt_ms / static_cast<double>(resolution_ratio);
  out.dx_m = seismic.dx_m;
  out.values.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.values[i] = denormalize_impedance(pred[i], stats);
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<StepRecord>& history) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << kLossHeader;
  for (const auto& r : history) write_loss_row(out, r);
  if (!out) throw UsageError("write failed: " + path.string());
}

TrainResult train_loop(Workflow& wf, const SurveyPair& survey,
                       const TrainConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  survey.validate();
  if (survey.resolution_ratio != wf.inverse.config().upsample_factor) {
    throw UsageError("survey resolution ratio " + std::to_string(survey.resolution_ratio) +
                     " does not match the model upsample factor " +
                     std::to_string(wf.inverse.config().upsample_factor));
  }
  const Split split = make_split(survey.seismic.n_traces, cfg.labeled_indices);
  const NormalizedSurvey norm = normalize(survey, split);
  const Tensor lab_seis = gather_traces(norm.seismic, split.labeled);
  const Tensor lab_ai = gather_traces(norm.impedance, split.labeled);
  const std::size_t n_lab = split.labeled.size();
  const std::size_t per_trace = norm.seismic.dim(2);

  std::ofstream csv;
  if (opt.loss_csv) {
    csv.open(*opt.loss_csv);
    if (!csv) throw UsageError("cannot write " + opt.loss_csv->string());
    csv << kLossHeader;
  }

  TrainResult res;
  res.split = split;
  res.stats = norm.stats;
  auto run_eval = [&](std::size_t epoch) {
    const TraceSet est = predict_ai(wf.inverse, wf.params, survey.seismic, norm.stats,
                                    survey.resolution_ratio);
    auto [tr, va] = evaluate(survey.impedance, est, split);
    EvalRecord rec{epoch, tr, va};
    res.evaluations.push_back(rec);
    if (opt.on_eval) opt.on_eval(rec);
    // Without unlabeled traces the labeled score stands in for validation.
    const double score = split.unlabeled.empty() ? tr.pcc : va.pcc;
    if (res.evaluations.size() == 1 || score > res.best_validation_pcc) {
      res.best_validation_pcc = score;
      res.best_epoch = epoch;
      res.best = wf.params;
    }
  };
  run_eval(0);

  Rng rng(cfg.seed ^ kShuffleSalt);
  std::vector<std::size_t> order = split.unlabeled;
  const std::size_t bu = cfg.batch_unlabeled;
  Tape tape;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_batches =
        (bu == 0 || order.empty()) ? 1 : (order.size() + bu - 1) / bu;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t u0 = std::min(order.size(), b * bu);
      const std::size_t u1 = bu == 0 ? u0 : std::min(order.size(), u0 + bu);
      Tensor batch({n_lab + (u1 - u0), 1, per_trace});
      std::copy(lab_seis.raw().begin(), lab_seis.raw().end(), batch.data());
      for (std::size_t k = u0; k < u1; ++k) {
        std::copy_n(norm.seismic.data() + order[k] * per_trace, per_trace,
                    batch.data() + (n_lab + k - u0) * per_trace);
      }
      StepRecord rec{++step, epoch, train_step(wf, tape, batch, lab_ai, cfg)};
      res.history.push_back(rec);
      if (csv.is_open()) write_loss_row(csv, rec);
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) run_eval(epoch);
  }
  if (csv.is_open()) {
    csv.flush();
    if (!csv) throw UsageError("write failed: " + opt.loss_csv->string());
  }
  return res;
}

}  // namespace impz
