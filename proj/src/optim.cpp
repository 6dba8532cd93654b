#include "spikes4/optim.hpp"

#include <cmath>
#include <string>

#include "spikes4/error.hpp"

namespace spikes4::optim {

void RAdamConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("beta2 must be in (0, 1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
}

double rho(std::uint64_t step, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double bt = std::pow(beta2, static_cast<double>(step));
  return rho_inf - 2.0 * static_cast<double>(step) * bt / (1.0 - bt);
}

RAdam::RAdam(std::vector<NamedTensor> params, RAdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void RAdam::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho(step_, b2);
  last_adaptive_ = rho_t > 4.0;
  double rect = 0.0;
  if (last_adaptive_) {
    rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                     ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }

  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    auto grad = p.grad();
    auto data = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / bias1;
      if (last_adaptive_) {
        const double adaptive = std::sqrt(bias2) / (std::sqrt(v[j]) + cfg_.eps);
        data[j] -= cfg_.lr * rect * m_hat * adaptive;
      } else {
        data[j] -= cfg_.lr * m_hat;
      }
    }
  }
}

void RAdam::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void RAdam::load_state(std::uint64_t step, std::vector<std::vector<double>> m,
                       std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw FormatError("optimizer state has " + std::to_string(m.size()) + " moment sets for " +
                      std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].tensor.numel() || v[i].size() != params_[i].tensor.numel()) {
      throw FormatError("optimizer moments do not match parameter '" + params_[i].name + "'");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace spikes4::optim
