// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "scandiff/tensor.hpp"

namespace scandiff::optim {

// Adam with bias correction. Moment buffers are addressed by parameter
// order, so the parameter list must be stable across steps.
class Adam {
 public:
  Adam(std::vector<tensor::Tensor> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const tensor::Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      tensor::Tensor& p = params_[i];
      const tensor::real* g = p.grad();
      tensor::real* w = p.data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
        v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
        w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
      }
    }
  }

  void zero_grad() {
    for (tensor::Tensor& p : params_) p.zero_grad();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long long step_count() const { return t_; }

  // Optimizer state for bit-exact resume: [t][m...][v...] per parameter.
  std::vector<double> state() const {
    std::vector<double> s;
    s.push_back(static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      s.insert(s.end(), m_[i].begin(), m_[i].end());
      s.insert(s.end(), v_[i].begin(), v_[i].end());
    }
    return s;
  }
  void load_state(const std::vector<double>& s) {
    std::size_t at = 0;
    t_ = static_cast<long long>(s.at(at++));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (double& x : m_[i]) x = s.at(at++);
      for (double& x : v_[i]) x = s.at(at++);
    }
    if (at != s.size()) throw ContractError("Adam::load_state: size mismatch");
  }

 private:
  std::vector<tensor::Tensor> params_;
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace scandiff::optim
