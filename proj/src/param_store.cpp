#include "impz/param_store.hpp"

#include <cmath>

#include "impz/binary_io.hpp"
#include "impz/error.hpp"

namespace impz {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (name.empty()) throw UsageError("parameter name must not be empty");
  if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(init.shape(), 0.0);
  p.m = Tensor(init.shape(), 0.0);
  p.v = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter: " + name);
  return params_[it->second];
}

bool ParamStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
  grads_ready_ = false;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name ||
        !(params_[i].value == other.params_[i].value)) {
      return false;
    }
  }
  return true;
}

void adam_step(ParamStore& store, const AdamOptions& opt) {
  if (!store.grads_ready()) {
    throw Error("adam_step: gradients missing; run backward() first");
  }
  const std::uint64_t step = store.step() + 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (Parameter& p : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = opt.beta1 * p.m[i] + (1.0 - opt.beta1) * g;
      p.v[i] = opt.beta2 * p.v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
  store.set_step(step);
  store.zero_grad();
}

namespace {
constexpr const char* kCheckpointMagic = "IMPZ1";
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& meta, bool include_moments) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["endianness"] = "little";
  header["step"] = store.step();
  header["moments"] = include_moments;
  header["params"] = nlohmann::json::array();
  std::vector<double> payload;
  payload.reserve(store.total_elements() * (include_moments ? 3 : 1));
  for (const Parameter& p : store) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
    payload.insert(payload.end(), p.value.raw().begin(), p.value.raw().end());
  }
  if (include_moments) {
    for (const Parameter& p : store) {
      payload.insert(payload.end(), p.m.raw().begin(), p.m.raw().end());
    }
    for (const Parameter& p : store) {
      payload.insert(payload.end(), p.v.raw().begin(), p.v.raw().end());
    }
  }
  header["meta"] = meta;
  io::write_container(path, kCheckpointMagic, header, payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Container c = io::read_container(path, kCheckpointMagic);
  const std::string name = path.string();
  Checkpoint ck;
  try {
    const auto& h = c.header;
    if (h.at("dtype") != "f64" || h.at("endianness") != "little") {
      throw FormatError(name + ": unsupported dtype/endianness");
    }
    ck.has_moments = h.at("moments").get<bool>();
    ck.meta = h.value("meta", nlohmann::json::object());
    std::size_t total = 0;
    std::vector<std::pair<std::string, Shape>> entries;
    for (const auto& e : h.at("params")) {
      Shape shape = e.at("shape").get<Shape>();
      total += numel(shape);
      entries.emplace_back(e.at("name").get<std::string>(), std::move(shape));
    }
    const std::size_t expected = total * (ck.has_moments ? 3 : 1);
    if (c.payload.size() != expected) {
      throw FormatError(name + ": payload has " +
                        std::to_string(c.payload.size()) + " values, header implies " +
                        std::to_string(expected));
    }
    std::size_t pos = 0;
    for (auto& [pname, shape] : entries) {
      const std::size_t n = numel(shape);
      std::vector<double> vals(c.payload.begin() + static_cast<long>(pos),
                               c.payload.begin() + static_cast<long>(pos + n));
      ck.params.add(pname, Tensor(shape, std::move(vals)));
      pos += n;
    }
    if (ck.has_moments) {
      for (Parameter& p : ck.params) {
        std::copy_n(c.payload.begin() + static_cast<long>(pos), p.m.size(), p.m.data());
        pos += p.m.size();
      }
      for (Parameter& p : ck.params) {
        std::copy_n(c.payload.begin() + static_cast<long>(pos), p.v.size(), p.v.data());
        pos += p.v.size();
      }
    }
    ck.params.set_step(h.at("step").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": bad checkpoint header: " + e.what());
  }
  return ck;
}

}  // namespace impz
