#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtfe {

enum class Link { kIdentity, kLogistic };

/// Linear scorer callable from SQL: link(w . x + b).
struct MlFunction {
  std::string name;
  std::vector<double> weights;
  double bias = 0.0;
  Link link = Link::kIdentity;

  std::size_t arity() const { return weights.size(); }
  double evaluate(std::span<const double> x) const;
};

class MlRegistry {
 public:
  /// Throws kDuplicateName or kNonFiniteWeight.
  void register_function(MlFunction fn);
  std::shared_ptr<const MlFunction> find(std::string_view name) const;
  std::vector<std::string> names() const;

  /// Registers every function in a model file:
  /// {"functions": [{"name": ..., "weights": [...], "bias": b, "link": "logistic"}]}
  void load_file(const std::filesystem::path& path);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const MlFunction>, std::less<>> functions_;
};

}  // namespace rtfe
