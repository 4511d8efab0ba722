// Adaptive-moment gradient descent over one flat parameter block.
#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace nslam {

class Adam {
  public:
    Adam() = default;
    Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grads) {
        ++t_;
        double c1 = 1.0 - std::pow(b1_, double(t_));
        double c2 = 1.0 - std::pow(b2_, double(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            double g = grads[i];
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

    double lr() const { return lr_; }

  private:
    double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace nslam
