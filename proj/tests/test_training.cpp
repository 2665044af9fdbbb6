#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "impz/error.hpp"
#include "impz/training.hpp"

using namespace impz;
using testing::random_tensor;

namespace {

WorkflowConfig tiny_workflow() {
  WorkflowConfig c;
  c.inverse.gru_hidden = 2;
  c.inverse.lpa_channels = 2;
  c.inverse.lpa_kernel = 3;
  c.inverse.upsample_channels = 2;
  c.inverse.regression_hidden = 2;
  c.forward.feat_channels = 2;
  c.forward.feat_kernel = 3;
  c.forward.wavelet_kernel_length = 5;
  return c;
}

SurveyPair tiny_survey(std::size_t traces = 12) {
  SynthConfig s;
  s.traces = traces;
  s.samples = 32;
  s.layers = 4;
  return generate_survey(s);
}

TrainConfig tiny_train(std::size_t traces = 12) {
  TrainConfig c;
  c.labeled_indices = pick_labeled_traces(traces, 3).labeled;
  c.batch_unlabeled = 4;
  c.epochs = 2;
  c.seed = 9;
  return c;
}

bool all_zero(const Tensor& t) {
  return std::all_of(t.raw().begin(), t.raw().end(), [](double v) { return v == 0.0; });
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

TEST_CASE("train config") {
  TrainConfig c = tiny_train();
  CHECK_NOTHROW(c.validate());
  c.regime = Regime::supervised;
  CHECK(c.effective_alpha() == 0.2);
  CHECK(c.effective_beta() == 0.0);
  c.regime = Regime::unsupervised;
  CHECK(c.effective_alpha() == 0.0);
  CHECK(c.effective_beta() == 1.0);
  const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK(regime_from_string(to_string(Regime::supervised)) == Regime::supervised);
  CHECK_THROWS_AS(regime_from_string("weak"), UsageError);
  CHECK(c.labeled_synthetics);
  c.labeled_synthetics = false;
  CHECK_FALSE(nlohmann::json(c).get<TrainConfig>().labeled_synthetics);

  TrainConfig bad = tiny_train();
  bad.alpha = -0.1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny_train();
  bad.lr = std::nan("");
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = tiny_train();
  bad.labeled_indices.clear();
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("semi_supervised_loss") {
  Tape t;
  auto row = [&](std::initializer_list<double> v) { return t.constant(Tensor::from(v)); };
  SUBCASE("perfect predictions") {
    const auto l = semi_supervised_loss(row({1, 2}), row({1, 2}), row({3}), row({3}), 0.2, 1.0);
    CHECK(l.values().total == 0.0);
  }
  SUBCASE("worked example") {
    // property mse 1, seismic mse 2
    const auto l = semi_supervised_loss(row({1, 1}), row({0, 2}), row({0, 0}), row({2, 0}), 0.2, 1.0);
    const LossBreakdown b = l.values();
    CHECK(b.property_loss == 1.0);
    CHECK(b.seismic_loss == 2.0);
    CHECK(b.total == doctest::Approx(2.2).epsilon(1e-15));
  }
  SUBCASE("alpha zero is the seismic misfit alone") {
    const auto l = semi_supervised_loss(row({5}), row({0}), row({0, 0}), row({2, 0}), 0.0, 1.0);
    CHECK(l.values().total == 2.0);
    const auto u = semi_supervised_loss(Var{}, Var{}, row({0, 0}), row({2, 0}), 0.0, 0.5);
    CHECK(u.values().total == 1.0);
    CHECK(u.values().property_loss == 0.0);
  }
  SUBCASE("linearity in the weights") {
    oracle::Gen g(600);
    const Var a = t.constant(random_tensor({3, 1, 8}, g)), b = t.constant(random_tensor({3, 1, 8}, g));
    const Var c = t.constant(random_tensor({5, 1, 4}, g)), d = t.constant(random_tensor({5, 1, 4}, g));
    const LossBreakdown base = semi_supervised_loss(a, b, c, d, 1.0, 1.0).values();
    for (int k = 0; k < 20; ++k) {
      const double alpha = g.real(0, 5), beta = g.real(0, 5), scale = g.real(0, 4);
      const LossBreakdown l = semi_supervised_loss(a, b, c, d, alpha, beta).values();
      CHECK(std::abs(l.total - (alpha * l.property_loss + beta * l.seismic_loss)) <= 1e-12);
      const LossBreakdown s = semi_supervised_loss(a, b, c, d, scale * alpha, beta).values();
      CHECK(std::abs((s.total - beta * s.seismic_loss) - scale * (l.total - beta * l.seismic_loss)) <=
            1e-12);
      CHECK(l.property_loss == base.property_loss);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(semi_supervised_loss(Var{}, Var{}, row({1}), row({1}), 0.2, 1.0), UsageError);
    CHECK_THROWS_AS(semi_supervised_loss(row({1}), row({1, 2}), row({1}), row({1}), 0.2, 1.0), ShapeError);
    CHECK_THROWS_AS(semi_supervised_loss(row({1}), row({1}), row({1}), row({1, 2}), 0.2, 1.0), ShapeError);
    CHECK_THROWS_AS(semi_supervised_loss(row({1}), row({1}), row({1}), row({1}), -1.0, 1.0), UsageError);
  }
}

TEST_CASE("gradient flow by regime") {
  oracle::Gen g(601);
  Workflow wf(tiny_workflow(), 4);
  const Tensor d = random_tensor({4, 1, 16}, g), m = random_tensor({2, 1, 32}, g);
  auto grads_for = [&](double alpha, double beta) {
    wf.params.zero_grad();
    Tape t;
    const Var dv = t.constant(d);
    const Var m_hat = wf.inverse.invert(t, wf.params, dv);
    const Var d_hat = wf.forward.synthesize(t, wf.params, m_hat);
    const auto l = semi_supervised_loss(ad::batch_slice(m_hat, 0, 2), t.constant(m), d_hat, dv, alpha, beta);
    t.backward(l.total);
  };
  grads_for(0.2, 0.0);
  for (const auto& p : wf.params) {
    if (starts_with(p.name, "fwd.")) CHECK_MESSAGE(all_zero(p.grad), p.name);
  }
  CHECK_FALSE(all_zero(wf.params.at("inv.reg.linear.weight").grad));
  grads_for(0.0, 1.0);
  for (const auto& p : wf.params) {
    if (starts_with(p.name, "fwd.wavelet")) CHECK_MESSAGE(!all_zero(p.grad), p.name);
  }
}

TEST_CASE("train_step") {
  oracle::Gen g(602);
  const Tensor batch = random_tensor({5, 1, 16}, g), lab = random_tensor({2, 1, 32}, g);
  TrainConfig cfg = tiny_train();
  SUBCASE("lr zero leaves parameters unchanged and the loss reproducible") {
    cfg.lr = 0.0;
    Workflow wf(tiny_workflow(), 1);
    const ParamStore before = wf.params;
    Tape t;
    const LossBreakdown a = train_step(wf, t, batch, lab, cfg);
    const LossBreakdown b = train_step(wf, t, batch, lab, cfg);
    CHECK(wf.params.same_values(before));
    CHECK(a.total == b.total);
    CHECK(wf.params.step() == 2);
  }
  SUBCASE("a small step decreases the loss on a frozen batch") {
    cfg.lr = 1e-4;
    for (std::uint64_t seed : {1, 2, 3}) {
      Workflow wf(tiny_workflow(), seed);
      Tape t;
      const LossBreakdown a = train_step(wf, t, batch, lab, cfg);
      cfg.lr = 0.0;
      const LossBreakdown b = train_step(wf, t, batch, lab, cfg);
      cfg.lr = 1e-4;
      CHECK(b.total < a.total);
    }
  }
  SUBCASE("supervised regime never moves the forward model") {
    cfg.regime = Regime::supervised;
    Workflow wf(tiny_workflow(), 1);
    const ParamStore before = wf.params;
    Tape t;
    for (int k = 0; k < 3; ++k) train_step(wf, t, batch, lab, cfg);
    for (const auto& p : wf.params) {
      if (starts_with(p.name, "fwd.")) CHECK(p.value == before.at(p.name).value);
    }
    CHECK_FALSE(wf.params.at("inv.reg.linear.weight").value == before.at("inv.reg.linear.weight").value);
  }
  SUBCASE("labeled synthetics extend the seismic misfit in the semi regime") {
    cfg.lr = 0.0;
    Workflow wf(tiny_workflow(), 4);
    Tape t;
    const Tensor d_hat = synthesize_normalized(wf.forward, wf.params,
                                               predict_normalized(wf.inverse, wf.params, batch));
    const Tensor d_log = synthesize_normalized(wf.forward, wf.params, lab);
    double se_all = 0.0, se_log = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) se_all += (d_hat[i] - batch[i]) * (d_hat[i] - batch[i]);
    for (std::size_t i = 0; i < d_log.size(); ++i) se_log += (d_log[i] - batch[i]) * (d_log[i] - batch[i]);
    const double plain = se_all / 80.0, extended = (se_all + se_log) / 112.0;

    const LossBreakdown on = train_step(wf, t, batch, lab, cfg);
    CHECK(std::abs(on.seismic_loss - extended) <= 1e-12);
    CHECK(std::abs(on.total - (0.2 * on.property_loss + on.seismic_loss)) <= 1e-12);
    cfg.labeled_synthetics = false;
    CHECK(std::abs(train_step(wf, t, batch, lab, cfg).seismic_loss - plain) <= 1e-12);
    cfg.labeled_synthetics = true;
    cfg.regime = Regime::unsupervised;
    CHECK(std::abs(train_step(wf, t, batch, lab, cfg).seismic_loss - plain) <= 1e-12);
    cfg.regime = Regime::supervised;
    CHECK(std::abs(train_step(wf, t, batch, lab, cfg).seismic_loss - plain) <= 1e-12);
  }
  SUBCASE("non-finite inputs abort with a numeric error") {
    Workflow wf(tiny_workflow(), 1);
    Tensor bad = batch;
    bad[3] = std::nan("");
    Tape t;
    CHECK_THROWS_AS(train_step(wf, t, bad, lab, cfg), NumericError);
  }
  SUBCASE("shape errors") {
    Workflow wf(tiny_workflow(), 1);
    Tape t;
    CHECK_THROWS_AS(train_step(wf, t, Tensor({5, 2, 16}, 0.0), lab, cfg), ShapeError);
    CHECK_THROWS_AS(train_step(wf, t, batch, random_tensor({6, 1, 32}, g), cfg), ShapeError);
  }
}

TEST_CASE("gather_traces") {
  oracle::Gen g(603);
  const Tensor x = random_tensor({5, 2, 3}, g);
  const Tensor y = gather_traces(x, {4, 0, 4});
  CHECK(y.shape() == Shape{3, 2, 3});
  CHECK(y.at(0, 1, 2) == x.at(4, 1, 2));
  CHECK(y.at(1, 0, 1) == x.at(0, 0, 1));
  CHECK_THROWS_AS(gather_traces(x, {5}), ShapeError);
}

TEST_CASE("train_loop") {
  const SurveyPair survey = tiny_survey();
  const TrainConfig cfg = tiny_train();
  SUBCASE("zero epochs returns the initial parameters") {
    TrainConfig c = cfg;
    c.epochs = 0;
    Workflow wf(tiny_workflow(), 2);
    const ParamStore init = wf.params;
    const TrainResult r = train_loop(wf, survey, c);
    CHECK(r.history.empty());
    CHECK(r.best_epoch == 0);
    CHECK(r.best.same_values(init));
    CHECK(wf.params.same_values(init));
    REQUIRE(r.evaluations.size() == 1);
    CHECK(r.best_validation_pcc == r.evaluations[0].validation.pcc);
  }
  SUBCASE("batches cover every unlabeled trace once per epoch") {
    Workflow wf(tiny_workflow(), 2);
    const TrainResult r = train_loop(wf, survey, cfg);
    // 9 unlabeled traces in chunks of 4: 3 steps per epoch.
    REQUIRE(r.history.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(r.history[i].step == i + 1);
      CHECK(r.history[i].epoch == i / 3 + 1);
      CHECK(std::isfinite(r.history[i].loss.total));
      CHECK(std::abs(r.history[i].loss.total - (0.2 * r.history[i].loss.property_loss +
                                                r.history[i].loss.seismic_loss)) <= 1e-12);
    }
    CHECK(r.split.labeled == cfg.labeled_indices);
    CHECK(r.split.unlabeled.size() == 9);
    CHECK(r.evaluations.size() == 3);
    for (const auto& e : r.evaluations) {
      CHECK(e.training.n_traces == 3);
      CHECK(e.validation.n_traces == 9);
      CHECK(r.best_validation_pcc >= e.validation.pcc);
    }
  }
  SUBCASE("fixed seed gives identical histories") {
    const auto dir = testing::scratch_dir("train_loop");
    Workflow a(tiny_workflow(), 2), b(tiny_workflow(), 2);
    TrainOptions oa, ob;
    oa.loss_csv = dir / "a.csv";
    ob.loss_csv = dir / "b.csv";
    const TrainResult ra = train_loop(a, survey, cfg, oa);
    const TrainResult rb = train_loop(b, survey, cfg, ob);
    CHECK(a.params.same_values(b.params));
    CHECK(ra.best.same_values(rb.best));
    CHECK(testing::slurp(dir / "a.csv") == testing::slurp(dir / "b.csv"));
    const std::string csv = testing::slurp(dir / "a.csv");
    CHECK(starts_with(csv, "step,epoch,property_loss,seismic_loss,total\n1,1,"));
    write_loss_csv(dir / "c.csv", ra.history);
    CHECK(testing::slurp(dir / "c.csv") == csv);
  }
  SUBCASE("eval cadence and callback") {
    TrainConfig c = cfg;
    c.epochs = 5;
    c.eval_every = 2;
    std::vector<std::size_t> seen;
    TrainOptions o;
    o.on_eval = [&](const EvalRecord& e) { seen.push_back(e.epoch); };
    Workflow wf(tiny_workflow(), 2);
    train_loop(wf, survey, c, o);
    CHECK(seen == std::vector<std::size_t>{0, 2, 4, 5});
  }
  SUBCASE("ratio mismatch") {
    WorkflowConfig w = tiny_workflow();
    w.inverse.upsample_factor = 4;
    w.forward.downsample_stride = 4;
    Workflow wf(w, 2);
    CHECK_THROWS_AS(train_loop(wf, survey, cfg), UsageError);
  }
}

TEST_CASE("inference helpers") {
  const SurveyPair survey = tiny_survey();
  Workflow wf(tiny_workflow(), 3);
  const ParamStore before = wf.params;
  const NormStats stats = fit_norm_stats(survey, pick_labeled_traces(12, 3));
  const TraceSet est = predict_ai(wf.inverse, wf.params, survey.seismic, stats, 2, 5);
  CHECK(est.kind == TraceKind::impedance);
  CHECK(est.n_samples == 32);
  CHECK(est.dt_ms == survey.impedance.dt_ms);
  CHECK(wf.params.same_values(before));
  CHECK(est.values == predict_ai(wf.inverse, wf.params, survey.seismic, stats, 2, 32).values);
  CHECK_THROWS_AS(predict_ai(wf.inverse, wf.params, survey.seismic, stats, 4), UsageError);

  const Tensor ai = normalize_impedance(survey.impedance, stats);
  const Tensor syn = synthesize_normalized(wf.forward, wf.params, ai, 7);
  CHECK(syn.shape() == Shape{12, 1, 16});
  Tape t;
  const Var direct = wf.forward.synthesize(t, wf.params, t.constant(gather_traces(ai, {11})));
  for (std::size_t i = 0; i < 16; ++i) CHECK(syn.at(11, 0, i) == direct.value()[i]);
}
