#include "rtfe/ml.hpp"

#include <cmath>
#include <fstream>
#include <mutex>

#include "json.hpp"
#include "rtfe/error.hpp"

namespace rtfe {

double MlFunction::evaluate(std::span<const double> x) const {
  double z = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
  z += bias;
  if (link == Link::kIdentity) return z;
  // Split on sign so exp never overflows.
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void MlRegistry::register_function(MlFunction fn) {
  if (fn.name.empty()) throw Error(ErrorCode::kInvalidConfig, "ML function needs a name");
  for (double w : fn.weights) {
    if (!std::isfinite(w)) throw Error(ErrorCode::kNonFiniteWeight, fn.name + ": non-finite weight");
  }
  if (!std::isfinite(fn.bias)) throw Error(ErrorCode::kNonFiniteWeight, fn.name + ": non-finite bias");
  std::unique_lock lock(mu_);
  if (functions_.count(fn.name)) {
    throw Error(ErrorCode::kDuplicateName, "function '" + fn.name + "' already registered");
  }
  auto name = fn.name;
  functions_.emplace(std::move(name), std::make_shared<const MlFunction>(std::move(fn)));
}

std::shared_ptr<const MlFunction> MlRegistry::find(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = functions_.find(name);
  return it == functions_.end() ? nullptr : it->second;
}

std::vector<std::string> MlRegistry::names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [n, _] : functions_) out.push_back(n);
  return out;
}

void MlRegistry::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open model file " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("functions") || !doc["functions"].is_array()) {
    throw Error(ErrorCode::kInvalidConfig, "model file must hold a 'functions' array");
  }
  for (const auto& f : doc["functions"]) {
    try {
      MlFunction fn;
      fn.name = f.at("name").get<std::string>();
      fn.weights = f.at("weights").get<std::vector<double>>();
      fn.bias = f.value("bias", 0.0);
      const std::string link = f.value("link", "identity");
      if (link == "logistic") {
        fn.link = Link::kLogistic;
      } else if (link != "identity") {
        throw Error(ErrorCode::kInvalidConfig, fn.name + ": unknown link '" + link + "'");
      }
      register_function(std::move(fn));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, std::string("bad model entry: ") + e.what());
    }
  }
}

}  // namespace rtfe
