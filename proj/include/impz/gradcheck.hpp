#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "impz/autodiff.hpp"
#include "impz/param_store.hpp"

namespace impz {

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;  // gradient entries compared
  bool passed = false;
};

/// Error measure used for each gradient entry:
/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-4;

double grad_rel_error(double analytic, double numeric);

/// Builds a scalar from the leaves bound to `inputs`.
using InputClosure = std::function<Var(Tape&, const std::vector<Var>&)>;
/// Builds a scalar from the parameters in `store`.
using ParamClosure = std::function<Var(Tape&, ParamStore&)>;

/// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h for
/// every element of every input.
GradCheckReport grad_check(const std::string& name, const InputClosure& f,
                           const std::vector<Tensor>& inputs, double h = 1e-6,
                           double tol = 1e-4);

/// Same comparison for every element of every parameter in `store`. The store
/// is restored to its original values before returning.
GradCheckReport grad_check_params(const std::string& name, const ParamClosure& f,
                                  ParamStore& store, double h = 1e-6,
                                  double tol = 1e-4);

/// Every differentiable op on `cases` seeded random inputs each, every layer
/// block, and composite invert / synthesize / loss graphs on a miniature
/// configuration with traces of 16 samples.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, double h = 1e-6,
                                                 double tol = 1e-4,
                                                 std::size_t cases = 10);

}  // namespace impz
