#include "svebm/optim.hpp"

#include <cmath>

#include "svebm/errors.hpp"
#include "svebm/kernels.hpp"

namespace svebm {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam|sgd)");
}

std::string_view optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd";
}

void Optimizer::step(const ParamRefs& params) {
  ++t_;
  const auto& k = kernels::active();
  if (cfg_.kind == OptimizerKind::Sgd) {
    for (Parameter* p : params) k.axpy(p->size(), -cfg_.lr, p->grad.data(), p->value.data());
    return;
  }
  const double td = static_cast<double>(t_);
  const kernels::AdamStep st{cfg_.lr,
                             cfg_.beta1,
                             cfg_.beta2,
                             cfg_.eps,
                             1.0 - std::pow(cfg_.beta1, td),
                             1.0 - std::pow(cfg_.beta2, td)};
  for (Parameter* p : params) {
    auto& m = m_[p->name];
    auto& v = v_[p->name];
    if (m.size() != p->size()) m.assign(p->size(), 0.0);
    if (v.size() != p->size()) v.assign(p->size(), 0.0);
    k.adam_update(p->size(), p->value.data(), p->grad.data(), m.data(), v.data(), st);
  }
}

}  // namespace svebm
