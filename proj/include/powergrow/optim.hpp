#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "powergrow/tensor.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Tensor> params, std::vector<std::string> names, AdamConfig cfg = {})
        : params_(std::move(params)), names_(std::move(names)), cfg_(cfg) {
        if (!names_.empty() && names_.size() != params_.size())
            throw UsageError("Adam: names/params length mismatch");
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].size(), 0.0);
            v_[i].assign(params_[i].size(), 0.0);
        }
    }

    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {})
        : Adam(std::move(params), {}, cfg) {}

    void zero_grad() {
        for (auto& p : params_) p.grad().assign(p.size(), 0.0);
    }

    // One update; a non-finite gradient aborts the step naming the parameter.
    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& g = params_[i].grad();
            if (g.empty()) continue;
            for (double gv : g)
                if (!std::isfinite(gv))
                    throw NumericalError("adam_step: non-finite gradient in parameter '" + name_of(i) + "'");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].data();
            const auto& g = params_[i].grad();
            if (g.empty()) continue;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                p[j] -= cfg_.learning_rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.epsilon);
            }
        }
    }

    std::size_t step_count() const { return t_; }

private:
    std::string name_of(std::size_t i) const {
        return i < names_.size() ? names_[i] : "param_" + std::to_string(i);
    }

    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// Max relative disagreement between reverse-mode and central finite
// differences of a scalar-valued function, elementwise over x.
inline double gradient_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-5) {
    x.set_requires_grad(true);
    x.grad().assign(x.size(), 0.0);
    Tensor y = f(x);
    if (y.size() != 1) throw UsageError("gradient_check: function output must be scalar");
    backward(y);
    std::vector<double> g_ad = x.grad();
    if (g_ad.empty()) g_ad.assign(x.size(), 0.0);

    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + h;
        double fp = f(x).value();
        x.data()[i] = orig - h;
        double fm = f(x).value();
        x.data()[i] = orig;
        const double g_fd = (fp - fm) / (2.0 * h);
        const double denom = std::max(1e-8, std::fabs(g_ad[i]) + std::fabs(g_fd));
        worst = std::max(worst, std::fabs(g_ad[i] - g_fd) / denom);
    }
    return worst;
}

}  // namespace powergrow
