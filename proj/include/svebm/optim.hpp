#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "svebm/nn.hpp"

namespace svebm {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer over a named parameter group. Moment buffers are
/// keyed by parameter name so the state survives checkpoint round-trips
/// independent of pointer identity.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  /// Applies one descent step using each parameter's grad.
  void step(const ParamRefs& params);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps_taken() const noexcept { return t_; }

  // Serialization surface.
  std::uint64_t& step_counter() noexcept { return t_; }
  std::map<std::string, std::vector<double>>& first_moments() noexcept { return m_; }
  std::map<std::string, std::vector<double>>& second_moments() noexcept { return v_; }
  const std::map<std::string, std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::map<std::string, std::vector<double>>& second_moments() const noexcept { return v_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace svebm
