#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "impz/error.hpp"
#include "impz/metrics.hpp"

using namespace impz;
using V = std::vector<double>;

TEST_CASE("pcc and r2 worked examples") {
  const V y{1, 2, 3};
  CHECK(pcc(y, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pcc(y, V{-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pcc(y, V{1, 2, 4}) == doctest::Approx(0.98198050606).epsilon(1e-10));
  CHECK(r2(y, y) == 1.0);
  CHECK(r2(y, V{2, 2, 2}) == 0.0);
  CHECK(r2(y, V{1, 2, 4}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(pcc(y, V{2, 2, 2}), NumericError);
  CHECK_THROWS_AS(r2(V{2, 2, 2}, y), NumericError);
  CHECK_THROWS_AS(pcc(y, V{1, 2}), ShapeError);
}

TEST_CASE("pcc and r2 match the oracle on random pairs") {
  oracle::Gen g(500);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = g.size(2, 200);
    const V y = g.vec(n), p = g.vec(n);
    CHECK(std::abs(pcc(y, p) - oracle::pcc(y, p)) <= 1e-12);
    CHECK(std::abs(r2(y, p) - oracle::r2(y, p)) <= 1e-12);
    const double v = pcc(y, p);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    CHECK(r2(y, p) <= 1.0);
  }
}

TEST_CASE("pcc is invariant to positive affine maps and r2 is not") {
  oracle::Gen g(501);
  for (int c = 0; c < 20; ++c) {
    const V y = g.vec(50);
    V p = y;
    for (double& v : p) v += 0.3 * g.real();
    const double a = g.real(0.5, 3.0), b = g.real(-2.0, 2.0);
    V q = p;
    for (double& v : q) v = a * v + b;
    CHECK(std::abs(pcc(y, q) - pcc(y, p)) <= 1e-12);
    CHECK(std::abs(r2(y, q) - r2(y, p)) > 1e-6);
  }
}

TEST_CASE("per-trace variants") {
  const V y{1, 2, 3, 1, 2, 3}, p{1, 2, 4, 3, 2, 1};
  CHECK(pcc_per_trace(y, p, 3) == doctest::Approx((oracle::pcc({1, 2, 3}, {1, 2, 4}) - 1.0) / 2));
  CHECK(r2_per_trace(y, p, 3) == doctest::Approx((0.5 + oracle::r2({1, 2, 3}, {3, 2, 1})) / 2));
  CHECK_THROWS_AS(pcc_per_trace(y, p, 4), ShapeError);
}

TEST_CASE("evaluate") {
  oracle::Gen g(502);
  TraceSet truth;
  truth.kind = TraceKind::impedance;
  truth.n_traces = 30;
  truth.n_samples = 16;
  truth.values = g.vec(30 * 16, 2000, 9000);
  const Split split = pick_labeled_traces(30, 5);

  const auto [tr, va] = evaluate(truth, truth, split);
  CHECK(tr.split == "training");
  CHECK(va.split == "validation");
  CHECK(tr.pcc == doctest::Approx(1.0));
  CHECK(va.r2 == 1.0);
  CHECK(tr.n_traces == 5);
  CHECK(va.n_traces == 25);

  TraceSet est = truth;
  for (double& v : est.values) v += 300.0 * g.real();
  const auto [tr2, va2] = evaluate(truth, est, split);
  V ty, te, vy, ve;
  for (auto i : split.labeled) {
    ty.insert(ty.end(), truth.trace(i).begin(), truth.trace(i).end());
    te.insert(te.end(), est.trace(i).begin(), est.trace(i).end());
  }
  for (auto i : split.unlabeled) {
    vy.insert(vy.end(), truth.trace(i).begin(), truth.trace(i).end());
    ve.insert(ve.end(), est.trace(i).begin(), est.trace(i).end());
  }
  CHECK(std::abs(tr2.pcc - oracle::pcc(ty, te)) <= 1e-12);
  CHECK(std::abs(va2.r2 - oracle::r2(vy, ve)) <= 1e-12);
  CHECK(va2.sigma_ai == doctest::Approx(stddev(vy)).epsilon(1e-14));
  const auto [tr3, va3] = evaluate(truth, est, split, Pooling::per_trace);
  CHECK(std::abs(va3.pcc - pcc_per_trace(vy, ve, 16)) <= 1e-12);

  TraceSet wrong = est;
  wrong.n_samples = 8;
  wrong.n_traces = 60;
  CHECK_THROWS(evaluate(truth, wrong, split));

  const auto dir = testing::scratch_dir("metrics");
  write_metrics_csv(dir / "m.csv", {tr2, va2});
  const std::string text = testing::slurp(dir / "m.csv");
  CHECK(text.rfind("split,pcc,r2,n_traces,sigma_ai\ntraining,", 0) == 0);
  CHECK(text.find("\nvalidation,") != std::string::npos);
}

TEST_CASE("scatter export") {
  const auto dir = testing::scratch_dir("scatter");
  oracle::Gen g(503);
  const V y = g.vec(200, 2000, 9000);
  const double sigma = stddev(y);
  CHECK(export_scatter(y, y, dir / "a.csv") == 1.0);
  V shifted = y;
  for (double& v : shifted) v += 2.0 * sigma;
  CHECK(export_scatter(y, shifted, dir / "b.csv") == 0.0);
  V noisy = y;
  for (double& v : noisy) v += sigma * g.real(-2, 2);
  const double frac = export_scatter(y, noisy, dir / "c.csv");
  CHECK(frac == band_fraction(y, noisy, sigma));
  const ScatterData back = read_scatter(dir / "c.csv");
  CHECK(back.truth == y);
  CHECK(back.estimate == noisy);
  CHECK(back.sigma_ai == sigma);
  CHECK(back.band_fraction == frac);
  CHECK(testing::slurp(dir / "c.csv").find("true,estimated\n") != std::string::npos);
  CHECK(stddev(V{1, 3}) == 1.0);
}
