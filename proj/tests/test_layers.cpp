#include <doctest.h>

#include "helpers.hpp"
#include "impz/error.hpp"
#include "impz/gradcheck.hpp"
#include "impz/layers.hpp"

using namespace impz;
using namespace impz::layers;
using testing::random_tensor;

namespace {

void zero_all(ParamStore& s) {
  for (auto& p : s) p.value.fill(0.0);
}

void randomize(ParamStore& s, oracle::Gen& g) {
  for (auto& p : s)
    for (double& v : p.value.raw()) v = g.real();
}

Tensor reverse_time(const Tensor& x) {
  Tensor y = x;
  const std::size_t L = x.dim(2);
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t t = 0; t < L; ++t) y.at(b, c, t) = x.at(b, c, L - 1 - t);
  return y;
}

}  // namespace

TEST_CASE("gru_cell_step") {
  const std::size_t B = 2, C = 3, H = 4;
  Tape t;
  SUBCASE("zero params") {
    GruCellParams p{t.constant(Tensor({C, 3 * H}, 0.0)), t.constant(Tensor({H, 3 * H}, 0.0)),
                    t.constant(Tensor({3 * H}, 0.0))};
    const Var x = t.constant(Tensor({B, C}, 0.7));
    CHECK(gru_cell_step(x, t.constant(Tensor({B, H}, 0.0)), p).value().raw() ==
          std::vector<double>(B * H, 0.0));
    CHECK(gru_cell_step(x, t.constant(Tensor({B, H}, 0.8)), p).value().raw() ==
          std::vector<double>(B * H, 0.4));
  }
  SUBCASE("random cases match the scalar oracle") {
    oracle::Gen g(200);
    for (int c = 0; c < 20; ++c) {
      const Tensor wi = random_tensor({C, 3 * H}, g), wh = random_tensor({H, 3 * H}, g),
                   bias = random_tensor({3 * H}, g), x = random_tensor({B, C}, g),
                   h = random_tensor({B, H}, g);
      GruCellParams p{t.constant(wi), t.constant(wh), t.constant(bias)};
      const Tensor y = gru_cell_step(t.constant(x), t.constant(h), p).value();
      for (std::size_t b = 0; b < B; ++b) {
        const oracle::Vec xb(x.raw().begin() + b * C, x.raw().begin() + (b + 1) * C);
        const oracle::Vec hb(h.raw().begin() + b * H, h.raw().begin() + (b + 1) * H);
        const oracle::Vec want = oracle::gru_cell(xb, hb, wi.raw(), wh.raw(), bias.raw(), C, H);
        const oracle::Vec got(y.raw().begin() + b * H, y.raw().begin() + (b + 1) * H);
        CHECK(testing::max_abs_diff(got, want) <= 1e-12);
      }
    }
  }
  SUBCASE("shape mismatch") {
    GruCellParams p{t.constant(Tensor({C, 3 * H}, 0.0)), t.constant(Tensor({H, 3 * H}, 0.0)),
                    t.constant(Tensor({3 * H}, 0.0))};
    CHECK_THROWS_AS(gru_cell_step(t.constant(Tensor({B, C}, 0.0)), t.constant(Tensor({B, H + 1}, 0.0)), p),
                    ShapeError);
  }
}

TEST_CASE("gru_sequence") {
  oracle::Gen g(201);
  const GruSpec spec{2, 3, true};
  ParamStore s;
  Rng rng(1);
  init_gru(s, "g", spec, rng);
  CHECK(s.contains("g.fwd.w_ih"));
  CHECK(s.contains("g.bwd.bias"));

  SUBCASE("zero input and zero params give zero output") {
    zero_all(s);
    Tape t;
    const Var y = gru_sequence(t, s, "g", spec, t.constant(Tensor({2, 2, 5}, 0.0)));
    CHECK(y.shape() == Shape{2, 6, 5});
    CHECK(y.value().raw() == std::vector<double>(60, 0.0));
  }
  SUBCASE("L = 1 reduces to one cell step") {
    randomize(s, g);
    Tape t;
    const Tensor x = random_tensor({3, 2, 1}, g);
    const Tensor y = gru_sequence(t, s, "g", spec, t.constant(x)).value();
    GruCellParams p{t.param(s, "g.fwd.w_ih"), t.param(s, "g.fwd.w_hh"), t.param(s, "g.fwd.bias")};
    const Tensor h = gru_cell_step(t.constant(x.reshaped({3, 2})), t.constant(Tensor({3, 3}, 0.0)), p).value();
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t j = 0; j < 3; ++j) CHECK(y.at(b, j, 0) == doctest::Approx(h[b * 3 + j]).epsilon(1e-14));
  }
  SUBCASE("fused and stepwise routes agree") {
    for (int c = 0; c < 5; ++c) {
      randomize(s, g);
      const Tensor x = random_tensor({2, 2, 7}, g);
      Tape t1, t2;
      CHECK(testing::max_abs_diff(gru_sequence(t1, s, "g", spec, t1.constant(x)).value().raw(),
                                  gru_sequence_stepwise(t2, s, "g", spec, t2.constant(x)).value().raw()) <=
            1e-12);
    }
  }
  SUBCASE("bidirectional halves and time reversal") {
    randomize(s, g);
    const Tensor x = random_tensor({2, 2, 6}, g);
    Tape t;
    const Tensor y = gru_sequence(t, s, "g", spec, t.constant(x)).value();
    // Backward half equals a forward pass with the bwd weights over reversed time, reversed back.
    ParamStore as_fwd;
    as_fwd.add("r.fwd.w_ih", s.at("g.bwd.w_ih").value);
    as_fwd.add("r.fwd.w_hh", s.at("g.bwd.w_hh").value);
    as_fwd.add("r.fwd.bias", s.at("g.bwd.bias").value);
    const Tensor rev = reverse_time(
        gru_sequence(t, as_fwd, "r", {2, 3, false}, t.constant(reverse_time(x))).value());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 6; ++i) CHECK(y.at(b, 3 + j, i) == rev.at(b, j, i));

    // Swapping direction weights and reversing the input swaps and reverses the halves.
    ParamStore swapped;
    for (const char* part : {".w_ih", ".w_hh", ".bias"}) {
      swapped.add(std::string("g.fwd") + part, s.at(std::string("g.bwd") + part).value);
    }
    for (const char* part : {".w_ih", ".w_hh", ".bias"}) {
      swapped.add(std::string("g.bwd") + part, s.at(std::string("g.fwd") + part).value);
    }
    const Tensor ys = reverse_time(gru_sequence(t, swapped, "g", spec, t.constant(reverse_time(x))).value());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 6; ++i) {
          CHECK(ys.at(b, j, i) == y.at(b, 3 + j, i));
          CHECK(ys.at(b, 3 + j, i) == y.at(b, j, i));
        }
  }
  SUBCASE("forward half is causal") {
    randomize(s, g);
    const Tensor x = random_tensor({1, 2, 10}, g);
    Tape t;
    const Tensor full = gru_sequence(t, s, "g", spec, t.constant(x)).value();
    for (std::size_t cut = 1; cut < 10; ++cut) {
      const Tensor head = gru_sequence(t, s, "g", spec, ad::slice_last(t.constant(x), 0, cut)).value();
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < cut; ++i) CHECK(head.at(0, j, i) == full.at(0, j, i));
    }
  }
  SUBCASE("wrong input channels") {
    Tape t;
    CHECK_THROWS_AS(gru_sequence(t, s, "g", spec, t.constant(Tensor({1, 3, 4}, 0.0))), ShapeError);
  }
}

TEST_CASE("conv_block") {
  oracle::Gen g(202);
  Rng rng(2);
  SUBCASE("zero weights give zero output") {
    const ConvBlockSpec spec{2, 4, 3, 1, 1};
    ParamStore s;
    init_conv_block(s, "c", spec, rng);
    s.at("c.weight").value.fill(0.0);
    Tape t;
    const Var y = conv_block(t, s, "c", spec, t.constant(random_tensor({2, 2, 9}, g)));
    CHECK(y.value().raw() == std::vector<double>(2 * 4 * 9, 0.0));
  }
  SUBCASE("length is preserved over the search set") {
    for (std::size_t K : {1, 3, 5, 7})
      for (std::size_t dil : {1, 2, 3, 6}) {
        const ConvBlockSpec spec{1, 2, K, dil, 1};
        ParamStore s;
        init_conv_block(s, "c", spec, rng);
        Tape t;
        CHECK(conv_block(t, s, "c", spec, t.constant(random_tensor({1, 1, 64}, g))).dim(2) == 64);
      }
  }
  SUBCASE("equals composing the three ops") {
    const ConvBlockSpec spec{3, 4, 5, 2, 2};
    ParamStore s;
    init_conv_block(s, "c", spec, rng);
    randomize(s, g);
    const Tensor x = random_tensor({2, 3, 11}, g);
    Tape t;
    const Var ref = ad::tanh(ad::group_norm(
        ad::conv1d(t.constant(x), t.constant(s.at("c.weight").value), t.constant(s.at("c.bias").value), 2, 4, 1),
        t.constant(s.at("c.gamma").value), t.constant(s.at("c.beta").value), 2));
    const Var y = conv_block(t, s, "c", spec, t.constant(x));
    CHECK(y.shape() == ref.shape());
    CHECK(testing::max_abs_diff(y.value().raw(), ref.value().raw()) == 0.0);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(ConvBlockSpec({1, 2, 4, 1, 1}).validate(), UsageError);
    CHECK_THROWS_AS(ConvBlockSpec({1, 3, 3, 1, 2}).validate(), UsageError);
  }
}

TEST_CASE("deconv_block") {
  oracle::Gen g(203);
  Rng rng(3);
  SUBCASE("length contract") {
    for (std::size_t stride : {1, 2, 3})
      for (std::size_t extra : {0, 2, 4}) {
        const DeconvBlockSpec spec{2, 2, stride + extra, stride, 1};
        ParamStore s;
        init_deconv_block(s, "d", spec, rng);
        Tape t;
        CHECK(deconv_block(t, s, "d", spec, t.constant(random_tensor({1, 2, 16}, g))).dim(2) ==
              16 * stride);
      }
  }
  SUBCASE("equals composing the three ops") {
    const DeconvBlockSpec spec{3, 2, 4, 2, 1};
    ParamStore s;
    init_deconv_block(s, "d", spec, rng);
    randomize(s, g);
    const Tensor x = random_tensor({2, 3, 8}, g);
    Tape t;
    const Var ref = ad::tanh(ad::group_norm(
        ad::conv_transpose1d(t.constant(x), t.constant(s.at("d.weight").value),
                             t.constant(s.at("d.bias").value), 2, 1),
        t.constant(s.at("d.gamma").value), t.constant(s.at("d.beta").value), 1));
    const Var y = deconv_block(t, s, "d", spec, t.constant(x));
    CHECK(y.dim(2) == 16);
    CHECK(y.value() == ref.value());
  }
  SUBCASE("unreachable lengths are rejected") {
    CHECK_THROWS_AS(DeconvBlockSpec({1, 1, 3, 2, 1}).validate(), UsageError);
    CHECK_THROWS_AS(DeconvBlockSpec({1, 1, 1, 2, 1}).validate(), UsageError);
  }
}

TEST_CASE("linear") {
  Rng rng(4);
  ParamStore s;
  init_linear(s, "l", 3, rng);
  Tape t;
  Tensor x({1, 3, 2}, {1, 4, 2, 5, 3, 6});
  s.at("l.weight").value.fill(1.0);
  s.at("l.bias").value.fill(0.0);
  CHECK(linear(t, s, "l", t.constant(x)).value().raw() == std::vector<double>{6, 15});
  s.at("l.weight").value.fill(0.0);
  s.at("l.bias").value.fill(-2.5);
  Tape t2;
  CHECK(linear(t2, s, "l", t2.constant(x)).value().raw() == std::vector<double>{-2.5, -2.5});

  oracle::Gen g(204);
  randomize(s, g);
  const Tensor xr = random_tensor({2, 3, 5}, g);
  Tape t3;
  const Tensor y = linear(t3, s, "l", t3.constant(xr)).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 5; ++i) {
      oracle::Vec row{xr.at(b, 0, i), xr.at(b, 1, i), xr.at(b, 2, i)};
      const double want = oracle::matmul(row, s.at("l.weight").value.raw(), 1, 3, 1)[0] +
                          s.at("l.bias").value[0];
      CHECK(std::abs(y.at(b, 0, i) - want) <= 1e-12);
    }
  CHECK_THROWS_AS(linear(t3, s, "l", t3.constant(Tensor({1, 2, 2}, 0.0))), ShapeError);
}

TEST_CASE("layer blocks pass gradient checks") {
  oracle::Gen g(205);
  Rng rng(5);
  ParamStore s;
  const GruSpec gs{2, 2, true};
  const ConvBlockSpec cs{4, 2, 3, 2, 1};
  const DeconvBlockSpec ds{2, 2, 4, 2, 2};
  init_gru(s, "g", gs, rng);
  init_conv_block(s, "c", cs, rng);
  init_deconv_block(s, "d", ds, rng);
  init_linear(s, "l", 2, rng);
  randomize(s, g);
  const Tensor x = random_tensor({2, 2, 6}, g), r = random_tensor({2, 1, 12}, g);
  const auto rep = grad_check_params("stack", [&](Tape& t, ParamStore& ps) {
    const Var h = conv_block(t, ps, "c", cs, gru_sequence(t, ps, "g", gs, t.constant(x)));
    return ad::mse(linear(t, ps, "l", deconv_block(t, ps, "d", ds, h)), t.constant(r));
  }, s);
  CHECK(rep.passed);
  CHECK(rep.n_checked == s.total_elements());
}
