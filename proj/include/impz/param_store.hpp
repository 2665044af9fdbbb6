#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "impz/tensor.hpp"

namespace impz {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment
};

/// Named trainable tensors plus optimizer state. Iteration follows insertion
/// order; parameter addresses are stable for the store's lifetime.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  bool grads_ready() const { return grads_ready_; }
  void mark_grads_ready() { grads_ready_ = true; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  /// Values only, compared bit for bit.
  bool same_values(const ParamStore& other) const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
  bool grads_ready_ = false;
};

struct AdamOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter, then zeroes grads.
/// Throws if no backward() has populated gradients since the last step.
void adam_step(ParamStore& store, const AdamOptions& opt);

/// Checkpoint file: "IMPZ1", u64 little-endian header length, UTF-8 JSON
/// header, then float64 little-endian payloads (values of every parameter in
/// header order, followed by m and v of every parameter when moments are
/// included). `meta` is stored verbatim under the header's "meta" key.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& meta, bool include_moments = true);

struct Checkpoint {
  ParamStore params;
  nlohmann::json meta;
  bool has_moments = false;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace impz
