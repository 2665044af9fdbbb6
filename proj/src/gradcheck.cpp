#include "impz/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "impz/error.hpp"
#include "impz/forward_model.hpp"
#include "impz/inverse_model.hpp"
#include "impz/layers.hpp"
#include "impz/training.hpp"

namespace impz {

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::string& name, const InputClosure& f,
                           const std::vector<Tensor>& inputs, double h, double tol) {
  GradCheckReport rep;
  rep.name = name;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    const Var out = f(tape, leaves);
    tape.backward(out);
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));
  }

  std::vector<Tensor> xs = inputs;
  auto eval = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.constant(x));
    return f(tape, leaves).value().item();
  };
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t e = 0; e < xs[i].size(); ++e) {
      const double orig = xs[i][e];
      xs[i][e] = orig + h;
      const double fp = eval();
      xs[i][e] = orig - h;
      const double fm = eval();
      xs[i][e] = orig;
      const double num = (fp - fm) / (2.0 * h);
      rep.max_rel_error = std::max(rep.max_rel_error, grad_rel_error(analytic[i][e], num));
      ++rep.n_checked;
    }
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

GradCheckReport grad_check_params(const std::string& name, const ParamClosure& f,
                                  ParamStore& store, double h, double tol) {
  GradCheckReport rep;
  rep.name = name;

  store.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape, store));
  }
  std::vector<Tensor> analytic;
  for (const auto& p : store) analytic.push_back(p.grad);
  store.zero_grad();

  auto eval = [&]() {
    Tape tape;
    return f(tape, store).value().item();
  };
  std::size_t i = 0;
  for (auto& p : store) {
    for (std::size_t e = 0; e < p.value.size(); ++e) {
      const double orig = p.value[e];
      p.value[e] = orig + h;
      const double fp = eval();
      p.value[e] = orig - h;
      const double fm = eval();
      p.value[e] = orig;
      const double num = (fp - fm) / (2.0 * h);
      rep.max_rel_error = std::max(rep.max_rel_error, grad_rel_error(analytic[i][e], num));
      ++rep.n_checked;
    }
    ++i;
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.raw()) v = u(rng);
  return t;
}

// Reduces an arbitrary output to a scalar with fixed pseudo-random weights so
// every output element contributes a distinct amount to the gradient.
Var project(const Var& y, std::uint64_t salt) {
  Rng rng(0x5eed0000ULL + salt);
  const Var r = y.tape().constant(random_tensor(y.shape(), rng));
  return ad::sum(ad::mul(y, r));
}

void randomize(ParamStore& store, Rng& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : store) {
    for (auto& v : p.value.raw()) v += u(rng);
  }
}

struct Suite {
  std::vector<GradCheckReport> reports;
  double h;
  double tol;

  // Folds per-case reports into one entry per name.
  void add(GradCheckReport r) {
    for (auto& e : reports) {
      if (e.name == r.name) {
        e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
        e.n_checked += r.n_checked;
        e.passed = e.passed && r.passed;
        return;
      }
    }
    reports.push_back(std::move(r));
  }
  void inputs(const std::string& name, const InputClosure& f,
              const std::vector<Tensor>& xs) {
    add(grad_check(name, f, xs, h, tol));
  }
  void params(const std::string& name, const ParamClosure& f, ParamStore& store) {
    add(grad_check_params(name, f, store, h, tol));
  }
};

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, double h,
                                                 double tol, std::size_t cases) {
  Suite s{{}, h, tol};
  Rng rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  for (std::size_t c = 0; c < cases; ++c) {
    const Shape sh{2, pick(1, 3), pick(2, 5)};
    const Tensor a = random_tensor(sh, rng), b = random_tensor(sh, rng);
    const Tensor one = random_tensor({1}, rng);

    s.inputs("add", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::add(v[0], v[1]), c);
    }, {a, b});
    s.inputs("add_broadcast", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::add(v[0], v[1]), c);
    }, {a, one});
    s.inputs("sub", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::sub(v[0], v[1]), c);
    }, {a, b});
    s.inputs("sub_broadcast", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::sub(v[0], v[1]), c);
    }, {one, b});
    s.inputs("mul", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::mul(v[0], v[1]), c);
    }, {a, b});
    s.inputs("mul_broadcast", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::mul(v[0], v[1]), c);
    }, {a, one});
    const double k = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    s.inputs("scale", [c, k](Tape&, const std::vector<Var>& v) {
      return project(ad::scale(v[0], k), c);
    }, {a});
    s.inputs("tanh", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::tanh(v[0]), c);
    }, {random_tensor(sh, rng, -2.0, 2.0)});
    s.inputs("sigmoid", [c](Tape&, const std::vector<Var>& v) {
      return project(ad::sigmoid(v[0]), c);
    }, {random_tensor(sh, rng, -3.0, 3.0)});
    s.inputs("sum", [](Tape&, const std::vector<Var>& v) { return ad::sum(v[0]); }, {a});
    s.inputs("mse", [](Tape&, const std::vector<Var>& v) {
      return ad::mse(v[0], v[1]);
    }, {a, b});

    {
      const std::size_t m = pick(1, 3), kk = pick(1, 4), n = pick(1, 3);
      s.inputs("matmul", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::matmul(v[0], v[1]), c);
      }, {random_tensor({2, m, kk}, rng), random_tensor({kk, n}, rng)});
    }

    {
      const std::size_t cin = pick(1, 3), cout = pick(1, 3), kw = pick(1, 4);
      const std::size_t dil = pick(1, 2), stride = pick(1, 2), pad = pick(0, 2);
      const std::size_t len = dil * (kw - 1) + 1 + pick(0, 5);
      const Tensor x = random_tensor({2, cin, len}, rng);
      const Tensor w = random_tensor({cout, cin, kw}, rng);
      const Tensor bias = random_tensor({cout}, rng);
      s.inputs("conv1d", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::conv1d(v[0], v[1], v[2], dil, pad, stride), c);
      }, {x, w, bias});
      s.inputs("conv1d_nobias", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::conv1d(v[0], v[1], dil, pad, stride), c);
      }, {x, w});
    }

    {
      const std::size_t cin = pick(1, 3), cout = pick(1, 3), kw = pick(1, 4);
      const std::size_t dil = pick(1, 2), stride = pick(1, 3), len = pick(1, 5);
      const std::size_t full = (len - 1) * stride + dil * (kw - 1) + 1;
      const std::size_t pad = pick(0, (full - 1) / 2);
      const Tensor x = random_tensor({2, cin, len}, rng);
      const Tensor w = random_tensor({cin, cout, kw}, rng);
      const Tensor bias = random_tensor({cout}, rng);
      s.inputs("conv_transpose1d", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::conv_transpose1d(v[0], v[1], v[2], stride, pad, dil), c);
      }, {x, w, bias});
      s.inputs("conv_transpose1d_nobias", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::conv_transpose1d(v[0], v[1], stride, pad, dil), c);
      }, {x, w});
    }

    {
      const std::size_t groups = std::size_t{1} << pick(0, 2);
      const std::size_t ch = groups * pick(1, 2);
      s.inputs("group_norm", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::group_norm(v[0], v[1], v[2], groups), c);
      }, {random_tensor({2, ch, pick(2, 6)}, rng), random_tensor({ch}, rng, 0.5, 1.5),
          random_tensor({ch}, rng)});
    }

    {
      const std::size_t cin = pick(1, 3), hid = pick(1, 3), len = pick(1, 5);
      const bool reverse = c % 2 == 1;
      s.inputs(reverse ? "gru_reverse" : "gru", [=](Tape&, const std::vector<Var>& v) {
        return project(ad::gru(v[0], v[1], v[2], v[3], reverse), c);
      }, {random_tensor({2, cin, len}, rng), random_tensor({cin, 3 * hid}, rng),
          random_tensor({hid, 3 * hid}, rng), random_tensor({3 * hid}, rng)});
      s.inputs("gru_cell_step", [=](Tape&, const std::vector<Var>& v) {
        return project(layers::gru_cell_step(v[0], v[1], {v[2], v[3], v[4]}), c);
      }, {random_tensor({2, cin}, rng), random_tensor({2, hid}, rng),
          random_tensor({cin, 3 * hid}, rng), random_tensor({hid, 3 * hid}, rng),
          random_tensor({3 * hid}, rng)});
    }

    {
      const Tensor x = random_tensor({2, 3, 4}, rng);
      s.inputs("reshape", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::tanh(ad::reshape(v[0], {6, 4})), c);
      }, {x});
      s.inputs("concat_channels", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::concat_channels({v[0], v[1], v[0]}), c);
      }, {x, random_tensor({2, 2, 4}, rng)});
      s.inputs("slice_last", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::slice_last(v[0], 1, 3), c);
      }, {x});
      s.inputs("batch_slice", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::batch_slice(v[0], 1, 2), c);
      }, {x});
      s.inputs("time_slice", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::time_slice(v[0], c % 4), c);
      }, {x});
      s.inputs("stack_time", [c](Tape&, const std::vector<Var>& v) {
        return project(ad::stack_time({v[0], v[1], v[0]}), c);
      }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
    }

    // Layer blocks with randomized parameters (biases and affine terms away
    // from their initial zeros and ones).
    {
      ParamStore store;
      const layers::ConvBlockSpec conv{2, 4, 3, pick(1, 2), 2};
      const layers::DeconvBlockSpec deconv{2, 2, 4, 2, 1};
      const layers::GruSpec gru{2, 2, true};
      layers::init_conv_block(store, "conv", conv, rng);
      layers::init_deconv_block(store, "deconv", deconv, rng);
      layers::init_gru(store, "gru", gru, rng);
      layers::init_linear(store, "lin", 2, rng);
      randomize(store, rng, 0.3);
      const Tensor x = random_tensor({2, 2, 6}, rng);
      s.params("conv_block", [&](Tape& t, ParamStore& ps) {
        return project(layers::conv_block(t, ps, "conv", conv, t.constant(x)), c);
      }, store);
      s.params("deconv_block", [&](Tape& t, ParamStore& ps) {
        return project(layers::deconv_block(t, ps, "deconv", deconv, t.constant(x)), c);
      }, store);
      s.params("gru_sequence", [&](Tape& t, ParamStore& ps) {
        return project(layers::gru_sequence(t, ps, "gru", gru, t.constant(x)), c);
      }, store);
      s.params("gru_sequence_stepwise", [&](Tape& t, ParamStore& ps) {
        return project(layers::gru_sequence_stepwise(t, ps, "gru", gru, t.constant(x)), c);
      }, store);
      s.params("linear", [&](Tape& t, ParamStore& ps) {
        return project(layers::linear(t, ps, "lin", t.constant(x)), c);
      }, store);
    }
  }

  // Composite graphs on a miniature workflow with 16-sample seismic traces.
  WorkflowConfig mini;
  mini.inverse.gru_hidden = 2;
  mini.inverse.lpa_channels = 2;
  mini.inverse.dilation_set = {1, 3, 6};
  mini.inverse.lpa_kernel = 3;
  mini.inverse.upsample_factor = 2;
  mini.inverse.upsample_channels = 2;
  mini.inverse.regression_hidden = 2;
  mini.forward.feat_channels = 2;
  mini.forward.feat_kernel = 3;
  mini.forward.wavelet_kernel_length = 5;
  mini.forward.downsample_stride = 2;
  for (std::size_t c = 0; c < 2; ++c) {
    Workflow wf(mini, seed + c);
    randomize(wf.params, rng, 0.2);
    const Tensor d = random_tensor({2, 1, 16}, rng);
    const Tensor m = random_tensor({2, 1, 32}, rng);
    s.params("invert", [&](Tape& t, ParamStore& ps) {
      return project(wf.inverse.invert(t, ps, t.constant(d)), c);
    }, wf.params);
    s.inputs("invert_input", [&](Tape& t, const std::vector<Var>& v) {
      return project(wf.inverse.invert(t, wf.params, v[0]), c);
    }, {d});
    s.params("synthesize", [&](Tape& t, ParamStore& ps) {
      return project(wf.forward.synthesize(t, ps, t.constant(m)), c);
    }, wf.params);
    s.params("semi_supervised_loss", [&](Tape& t, ParamStore& ps) {
      const Var dv = t.constant(d);
      const Var m_hat = wf.inverse.invert(t, ps, dv);
      const Var d_hat = wf.forward.synthesize(t, ps, m_hat);
      const Var m_lab = t.constant(gather_traces(m, {0}));
      return semi_supervised_loss(ad::batch_slice(m_hat, 0, 1), m_lab, d_hat, dv, 0.2, 1.0)
          .total;
    }, wf.params);
  }
  return s.reports;
}

}  // namespace impz
