#ifndef POSEGEN_SRC_OPTIM_UTIL_HPP
#define POSEGEN_SRC_OPTIM_UTIL_HPP

#include <cmath>
#include <vector>

namespace posegen {

// Embedding optimizer: plain gradient descent, or Adam when configured.
// State is reset per timestep by constructing a fresh instance.
class EmbeddingOptimizer {
  public:
    EmbeddingOptimizer(bool use_adam, size_t dim) : adam_(use_adam) {
        if (adam_) {
            m_.assign(dim, 0.0);
            v_.assign(dim, 0.0);
        }
    }

    void update(std::vector<double>& x, const std::vector<double>& grad, double lr) {
        if (!adam_) {
            for (size_t i = 0; i < x.size(); ++i) x[i] -= lr * grad[i];
            return;
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(0.9, step_);
        const double bc2 = 1.0 - std::pow(0.999, step_);
        for (size_t i = 0; i < x.size(); ++i) {
            m_[i] = 0.9 * m_[i] + 0.1 * grad[i];
            v_[i] = 0.999 * v_[i] + 0.001 * grad[i] * grad[i];
            x[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + 1e-8);
        }
    }

  private:
    bool adam_;
    int step_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace posegen

#endif
