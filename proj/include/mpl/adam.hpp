#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mpl {

/// Bias-corrected adaptive-moment update with per-coordinate step sizes.
class Adam {
public:
    explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void reset() {
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
        t_ = 0;
        p1_ = p2_ = 1.0;
    }

    /// x -= lr * mhat / (sqrt(vhat) + eps). lr has size 1 (shared) or n.
    void step(std::span<double> x, std::span<const double> grad, std::span<const double> lr) {
        ++t_;
        p1_ *= beta1_;
        p2_ *= beta2_;
        const double c1 = 1.0 / (1.0 - p1_);
        const double c2 = 1.0 / (1.0 - p2_);
        const bool shared = lr.size() == 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            const double rate = shared ? lr[0] : lr[i];
            x[i] -= rate * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + eps_);
        }
    }

    long iterations() const { return t_; }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    double p1_ = 1.0, p2_ = 1.0;
};

}  // namespace mpl
