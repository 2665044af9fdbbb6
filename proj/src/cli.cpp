#include "impz/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "impz/binary_io.hpp"
#include "impz/data.hpp"
#include "impz/error.hpp"
#include "impz/gradcheck.hpp"
#include "impz/kernels.hpp"
#include "impz/metrics.hpp"
#include "impz/training.hpp"

#ifndef IMPZ_GIT_DESCRIBE
#define IMPZ_GIT_DESCRIBE "unknown"
#endif

namespace impz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_describe() { return IMPZ_GIT_DESCRIBE; }

json RunManifest::to_json() const {
  json in = json::array();
  for (const auto& [path, digest] : inputs) in.push_back({{"path", path}, {"fnv1a64", digest}});
  return {{"command", command}, {"config", config},         {"seed", seed},
          {"git_describe", git_describe}, {"inputs", in}, {"outputs", outputs}};
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw UsageError("write failed: " + path.string());
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || std::isnan(v)) {
    throw UsageError(what + ": not a number: '" + s + "'");
  }
  return v;
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

fs::path sibling_manifest(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".manifest.json");
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Options whose values override the config file only when given on the
// command line.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& target,
                   const std::string& desc) {
    auto holder = std::make_shared<T>(target);
    CLI::Option* o = app->add_option(name, *holder, desc)->capture_default_str();
    apply_.push_back([o, holder, &target] {
      if (o->count() > 0) target = *holder;
    });
    return o;
  }
  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

void add_model_flags(CLI::App* app, Overrides& ov, WorkflowConfig& m) {
  ov.add(app, "--gru-hidden", m.inverse.gru_hidden, "GRU hidden size per direction");
  ov.add(app, "--lpa-channels", m.inverse.lpa_channels, "channels per dilation branch");
  ov.add(app, "--dilations", m.inverse.dilation_set, "dilation factors")->delimiter(',');
  ov.add(app, "--lpa-kernel", m.inverse.lpa_kernel, "dilated conv kernel size (odd)");
  ov.add(app, "--upsample-factor", m.inverse.upsample_factor,
         "impedance samples per seismic sample");
  ov.add(app, "--upsample-channels", m.inverse.upsample_channels, "deconv block channels");
  ov.add(app, "--regression-hidden", m.inverse.regression_hidden,
         "regression GRU hidden size per direction");
  ov.add(app, "--norm-groups", m.inverse.norm_groups, "group-norm groups (inverse model)");
  ov.add(app, "--feat-channels", m.forward.feat_channels, "forward model feature channels");
  ov.add(app, "--feat-kernel", m.forward.feat_kernel, "forward model feature kernel (odd)");
  ov.add(app, "--wavelet-length", m.forward.wavelet_kernel_length,
         "learned wavelet length (odd)");
}

struct LoadedModel {
  WorkflowConfig config;
  std::unique_ptr<Workflow> workflow;
  NormStats stats;
  std::size_t resolution_ratio = 0;
  std::vector<std::size_t> labeled;
  json meta;
};

LoadedModel load_model(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(path);
  LoadedModel lm;
  lm.meta = ck.meta;
  try {
    lm.config = ck.meta.at("model").get<WorkflowConfig>();
    lm.stats = ck.meta.at("norm").get<NormStats>();
    lm.resolution_ratio = ck.meta.at("resolution_ratio").get<std::size_t>();
    lm.labeled = ck.meta.at("labeled_indices").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": checkpoint metadata incomplete: " + e.what());
  }
  lm.workflow = std::make_unique<Workflow>(lm.config, std::move(ck.params));
  return lm;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig cfg;
  std::string snr = "20";
  std::string out_prefix = "survey";
  std::string config;
};

int cmd_synth(const Context& cx, SynthArgs& a, const Overrides& ov, CLI::Option* snr_opt) {
  const json file = read_config(a.config);
  if (file.contains("synth")) a.cfg = file.at("synth").get<SynthConfig>();
  ov.apply();
  if (snr_opt->count() > 0) a.cfg.snr_db = parse_real(a.snr, "--snr-db");
  a.cfg.validate();

  const SurveyPair pair = generate_survey(a.cfg);
  const fs::path ai_path = a.out_prefix + "_impedance.surv";
  const fs::path seis_path = a.out_prefix + "_seismic.surv";
  const fs::path man_path = a.out_prefix + "_manifest.json";
  ensure_parent(ai_path);
  save_survey(ai_path, pair.impedance);
  save_survey(seis_path, pair.seismic);

  RunManifest m;
  m.command = "synth";
  m.config = a.cfg;
  m.seed = a.cfg.seed;
  m.git_describe = git_describe();
  m.outputs = {ai_path.string(), seis_path.string()};
  m.write(man_path);
  cx.out << "wrote " << ai_path.string() << " and " << seis_path.string() << " ("
         << pair.seismic.n_traces << " traces, " << pair.seismic.n_samples
         << " seismic samples, ratio " << pair.resolution_ratio << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  WorkflowConfig model;
  TrainConfig train;
  std::size_t labeled = 20;
  std::string seismic, impedance, out_dir = "run", config;
};

int cmd_train(const Context& cx, TrainArgs& a, const Overrides& ov,
              CLI::Option* regime_opt, std::string& regime_str) {
  const json file = read_config(a.config);
  if (file.contains("model")) a.model = file.at("model").get<WorkflowConfig>();
  if (file.contains("train")) a.train = file.at("train").get<TrainConfig>();
  if (file.contains("labeled")) a.labeled = file.at("labeled").get<std::size_t>();
  ov.apply();
  if (regime_opt->count() > 0) a.train.regime = regime_from_string(regime_str);
  a.model.forward.downsample_stride = a.model.inverse.upsample_factor;
  a.model.validate();

  const TraceSet seis = load_survey(a.seismic);
  const TraceSet ai = load_survey(a.impedance);
  const SurveyPair pair = make_survey_pair(seis, ai);
  if (pair.resolution_ratio != a.model.inverse.upsample_factor) {
    throw UsageError("survey resolution ratio " + std::to_string(pair.resolution_ratio) +
                     " is incompatible with model upsample factor " +
                     std::to_string(a.model.inverse.upsample_factor));
  }
  if (a.train.labeled_indices.empty()) {
    a.train.labeled_indices = pick_labeled_traces(seis.n_traces, a.labeled).labeled;
  }
  if (a.train.regime == Regime::unsupervised && a.train.alpha != 0.0) {
    cx.err << "warning: regime unsupervised ignores the property loss; alpha forced to 0\n";
    a.train.alpha = 0.0;
  }
  if (a.train.regime == Regime::supervised && a.train.beta != 0.0) {
    cx.err << "warning: regime supervised ignores the seismic loss; beta forced to 0\n";
    a.train.beta = 0.0;
  }
  a.train.validate();

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  const fs::path ck_path = dir / "checkpoint.impz";
  const fs::path loss_path = dir / "loss.csv";
  const fs::path eval_path = dir / "evaluations.csv";

  Workflow wf(a.model, a.train.seed);
  TrainOptions opt;
  opt.loss_csv = loss_path;
  opt.on_eval = [&](const EvalRecord& r) {
    cx.out << "epoch " << r.epoch << ": training pcc " << r.training.pcc << " r2 "
           << r.training.r2 << ", validation pcc " << r.validation.pcc << " r2 "
           << r.validation.r2 << '\n';
  };
  const TrainResult res = train_loop(wf, pair, a.train, opt);

  json meta = {{"format", "impz-workflow"},
               {"model", a.model},
               {"train", a.train},
               {"norm", res.stats},
               {"resolution_ratio", pair.resolution_ratio},
               {"labeled_indices", res.split.labeled},
               {"best_epoch", res.best_epoch},
               {"best_validation_pcc", res.best_validation_pcc}};
  save_checkpoint(ck_path, res.best, meta);

  {
    std::ofstream ev(eval_path);
    if (!ev) throw UsageError("cannot write " + eval_path.string());
    ev << "epoch,training_pcc,training_r2,validation_pcc,validation_r2\n";
    for (const auto& r : res.evaluations) {
      ev << r.epoch << ',' << fmt(r.training.pcc) << ',' << fmt(r.training.r2) << ','
         << fmt(r.validation.pcc) << ',' << fmt(r.validation.r2) << '\n';
    }
  }

  RunManifest m;
  m.command = "train";
  m.config = {{"model", a.model}, {"train", a.train}};
  m.seed = a.train.seed;
  m.git_describe = git_describe();
  m.inputs = {{a.seismic, io::file_digest(a.seismic)},
              {a.impedance, io::file_digest(a.impedance)}};
  m.outputs = {ck_path.string(), loss_path.string(), eval_path.string()};
  m.write(dir / "manifest.json");

  cx.out << "best validation pcc " << fmt(res.best_validation_pcc) << " at epoch "
         << res.best_epoch << "; checkpoint " << ck_path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- invert

struct InvertArgs {
  std::string checkpoint, seismic, out = "estimate_impedance.surv";
};

int cmd_invert(const Context& cx, const InvertArgs& a) {
  const LoadedModel lm = load_model(a.checkpoint);
  const TraceSet seis = load_survey(a.seismic);
  if (seis.kind != TraceKind::seismic) throw UsageError(a.seismic + " is not a seismic survey");
  const TraceSet est = predict_ai(lm.workflow->inverse, lm.workflow->params, seis, lm.stats,
                                  lm.resolution_ratio);
  ensure_parent(a.out);
  save_survey(a.out, est);

  RunManifest m;
  m.command = "invert";
  m.config = {{"model", lm.config}};
  m.seed = lm.meta.value("train", json::object()).value("seed", std::uint64_t{0});
  m.git_describe = git_describe();
  m.inputs = {{a.checkpoint, io::file_digest(a.checkpoint)},
              {a.seismic, io::file_digest(a.seismic)}};
  m.outputs = {a.out};
  m.write(sibling_manifest(a.out));
  cx.out << "wrote " << a.out << " (" << est.n_traces << " traces, " << est.n_samples
         << " samples)\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint, seismic, estimate, impedance, out = "metrics.csv", scatter;
  std::string pooling = "pooled";
  std::vector<std::size_t> labeled_indices;
  std::size_t labeled = 0;
};

int cmd_evaluate(const Context& cx, const EvaluateArgs& a) {
  if (a.pooling != "pooled" && a.pooling != "per-trace") {
    throw UsageError("--pooling must be pooled or per-trace");
  }
  const TraceSet truth = load_survey(a.impedance);
  std::unique_ptr<LoadedModel> lm;
  if (!a.checkpoint.empty()) lm = std::make_unique<LoadedModel>(load_model(a.checkpoint));

  TraceSet est;
  if (!a.estimate.empty()) {
    est = load_survey(a.estimate);
  } else {
    if (!lm) throw UsageError("give --estimate, or --checkpoint with --seismic");
    if (a.seismic.empty()) throw UsageError("--seismic is required with --checkpoint");
    est = predict_ai(lm->workflow->inverse, lm->workflow->params, load_survey(a.seismic),
                     lm->stats, lm->resolution_ratio);
  }

  Split split;
  if (!a.labeled_indices.empty()) {
    split = make_split(truth.n_traces, a.labeled_indices);
  } else if (a.labeled > 0) {
    split = pick_labeled_traces(truth.n_traces, a.labeled);
  } else if (lm) {
    split = make_split(truth.n_traces, lm->labeled);
  } else {
    throw UsageError("no split: give --labeled, --labeled-indices or --checkpoint");
  }

  const auto [tr, va] = evaluate(truth, est, split,
                                 a.pooling == "pooled" ? Pooling::pooled : Pooling::per_trace);
  ensure_parent(a.out);
  write_metrics_csv(a.out, {tr, va});
  for (const auto& r : {tr, va}) {
    cx.out << r.split << ": pcc " << fmt(r.pcc) << " r2 " << fmt(r.r2) << " traces "
           << r.n_traces << '\n';
  }

  RunManifest m;
  m.command = "evaluate";
  m.config = {{"pooling", a.pooling}, {"labeled_indices", split.labeled}};
  m.git_describe = git_describe();
  m.inputs = {{a.impedance, io::file_digest(a.impedance)}};
  for (const auto& p : {a.checkpoint, a.seismic, a.estimate}) {
    if (!p.empty()) m.inputs.emplace_back(p, io::file_digest(p));
  }
  m.outputs = {a.out};

  if (!a.scatter.empty()) {
    std::vector<double> y, y_hat;
    for (std::size_t i : split.unlabeled) {
      auto t = truth.trace(i);
      auto e = est.trace(i);
      y.insert(y.end(), t.begin(), t.end());
      y_hat.insert(y_hat.end(), e.begin(), e.end());
    }
    if (y.empty()) throw UsageError("no validation traces for the scatter export");
    ensure_parent(a.scatter);
    const double frac = export_scatter(y, y_hat, a.scatter);
    cx.out << "validation samples within one sigma_ai: " << fmt(frac) << '\n';
    m.outputs.push_back(a.scatter);
  }
  m.write(sibling_manifest(a.out));
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::uint64_t seed = 1;
  double h = 1e-6;
  double tol = 1e-4;
  std::size_t cases = 10;
  std::string out;
};

int cmd_gradcheck(const Context& cx, const GradcheckArgs& a) {
  if (!(a.h > 0.0) || !(a.tol > 0.0) || a.cases == 0) {
    throw UsageError("--step, --tol and --cases must be positive");
  }
  const auto reports = run_gradcheck_suite(a.seed, a.h, a.tol, a.cases);
  bool ok = true;
  for (const auto& r : reports) {
    ok = ok && r.passed;
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %-4s max_rel_error=%.3e entries=%zu\n",
                  r.name.c_str(), r.passed ? "ok" : "FAIL", r.max_rel_error, r.n_checked);
    cx.out << line;
  }
  if (!a.out.empty()) {
    ensure_parent(a.out);
    std::ofstream csv(a.out);
    if (!csv) throw UsageError("cannot write " + a.out);
    csv << "name,max_rel_error,entries,passed\n";
    for (const auto& r : reports) {
      csv << r.name << ',' << fmt(r.max_rel_error) << ',' << r.n_checked << ','
          << (r.passed ? 1 : 0) << '\n';
    }
    RunManifest m;
    m.command = "gradcheck";
    m.config = {{"h", a.h}, {"tol", a.tol}, {"cases", a.cases}};
    m.seed = a.seed;
    m.git_describe = git_describe();
    m.outputs = {a.out};
    m.write(sibling_manifest(a.out));
  }
  cx.out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kOk : kNumericFailure;
}

// ---------------------------------------------------------------- export-wavelet

struct WaveletArgs {
  std::string checkpoint, out = "wavelet.csv";
};

int cmd_export_wavelet(const Context& cx, const WaveletArgs& a) {
  const LoadedModel lm = load_model(a.checkpoint);
  const Tensor w = lm.workflow->forward.extract_wavelet(lm.workflow->params);
  ensure_parent(a.out);
  write_wavelet_csv(a.out, w);
  RunManifest m;
  m.command = "export-wavelet";
  m.config = {{"model", lm.config}};
  m.git_describe = git_describe();
  m.inputs = {{a.checkpoint, io::file_digest(a.checkpoint)}};
  m.outputs = {a.out};
  m.write(sibling_manifest(a.out));
  cx.out << "wrote " << a.out << " (" << w.size() << " samples)\n";
  return kOk;
}

void apply_thread_env() {
  const char* env = std::getenv("IMPZ_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError("IMPZ_THREADS must be a positive integer");
  kernels::set_max_threads(static_cast<int>(n));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Context cx{out, err};
  CLI::App app{"Seismic impedance inversion with jointly trained inverse and forward models"};
  app.require_subcommand(1);
  Overrides ov;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic impedance/seismic survey pair");
  ov.add(s, "--traces", synth.cfg.traces, "number of traces");
  ov.add(s, "--samples", synth.cfg.samples, "impedance samples per trace");
  ov.add(s, "--layers", synth.cfg.layers, "layers in the impedance model");
  ov.add(s, "--ratio", synth.cfg.ratio, "impedance samples per seismic sample");
  ov.add(s, "--fpeak", synth.cfg.f_peak_hz, "Ricker peak frequency (Hz)");
  auto* snr_opt = s->add_option("--snr-db", synth.snr, "noise SNR in dB, or inf")
                      ->capture_default_str();
  ov.add(s, "--seed", synth.cfg.seed, "random seed");
  s->add_option("--out-prefix", synth.out_prefix, "output path prefix")->capture_default_str();
  s->add_option("--config", synth.config, "JSON config file (\"synth\" section)");

  TrainArgs train;
  std::string regime_str = "semi";
  auto* t = app.add_subcommand("train", "train inverse and forward models on a survey pair");
  t->add_option("--seismic", train.seismic, "seismic survey file")->required();
  t->add_option("--impedance", train.impedance, "impedance survey file")->required();
  ov.add(t, "--labeled", train.labeled, "number of evenly spaced labeled traces");
  ov.add(t, "--labeled-indices", train.train.labeled_indices, "explicit labeled traces")
      ->delimiter(',');
  auto* regime_opt = t->add_option("--regime", regime_str, "semi, supervised or unsupervised")
                         ->check(CLI::IsMember({"semi", "supervised", "unsupervised"}))
                         ->capture_default_str();
  ov.add(t, "--alpha", train.train.alpha, "property loss weight");
  ov.add(t, "--beta", train.train.beta, "seismic loss weight");
  ov.add(t, "--batch-unlabeled", train.train.batch_unlabeled, "unlabeled traces per step");
  ov.add(t, "--epochs", train.train.epochs, "training epochs");
  ov.add(t, "--lr", train.train.lr, "Adam learning rate");
  ov.add(t, "--seed", train.train.seed, "random seed (initialization and shuffling)");
  ov.add(t, "--eval-every", train.train.eval_every, "epochs between validation passes");
  ov.add(t, "--labeled-synthetics", train.train.labeled_synthetics,
         "semi regime: also fit forward(well-log impedance) to the labeled seismic");
  add_model_flags(t, ov, train.model);
  t->add_option("--out-dir", train.out_dir, "output directory")->capture_default_str();
  t->add_option("--config", train.config, "JSON config file (\"model\", \"train\" sections)");

  InvertArgs inv;
  auto* i = app.add_subcommand("invert", "estimate impedance from seismic with a checkpoint");
  i->add_option("--checkpoint", inv.checkpoint, "trained checkpoint")->required();
  i->add_option("--seismic", inv.seismic, "seismic survey file")->required();
  i->add_option("--out", inv.out, "output impedance survey")->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "PCC and r2 on labeled and validation traces");
  e->add_option("--impedance", ev.impedance, "true impedance survey")->required();
  e->add_option("--estimate", ev.estimate, "estimated impedance survey");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint (inverts --seismic; gives the split)");
  e->add_option("--seismic", ev.seismic, "seismic survey, inverted with --checkpoint");
  e->add_option("--labeled", ev.labeled, "number of evenly spaced labeled traces");
  e->add_option("--labeled-indices", ev.labeled_indices, "explicit labeled traces")
      ->delimiter(',');
  e->add_option("--pooling", ev.pooling, "pooled or per-trace")->capture_default_str();
  e->add_option("--out", ev.out, "metrics CSV")->capture_default_str();
  e->add_option("--scatter", ev.scatter, "validation scatter CSV");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  g->add_option("--seed", gc.seed, "random seed")->capture_default_str();
  g->add_option("--step", gc.h, "central difference step h")->capture_default_str();
  g->add_option("--tol", gc.tol, "maximum relative error")->capture_default_str();
  g->add_option("--cases", gc.cases, "random cases per operation")->capture_default_str();
  g->add_option("--out", gc.out, "CSV report");

  WaveletArgs wv;
  auto* w = app.add_subcommand("export-wavelet", "write the learned wavelet as CSV");
  w->add_option("--checkpoint", wv.checkpoint, "trained checkpoint")->required();
  w->add_option("--out", wv.out, "output CSV")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    apply_thread_env();
    if (s->parsed()) return cmd_synth(cx, synth, ov, snr_opt);
    if (t->parsed()) return cmd_train(cx, train, ov, regime_opt, regime_str);
    if (i->parsed()) return cmd_invert(cx, inv);
    if (e->parsed()) return cmd_evaluate(cx, ev);
    if (g->parsed()) return cmd_gradcheck(cx, gc);
    if (w->parsed()) return cmd_export_wavelet(cx, wv);
  } catch (const NumericError& ex) {
    err << "error: " << ex.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace impz::cli
