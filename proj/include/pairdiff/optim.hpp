#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pairdiff/errors.hpp"
#include "pairdiff/graph.hpp"

namespace pairdiff {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kSgdMomentum;
    double lr = 1e-4;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Owns the update state for one network's parameter list. Each network in a
// CoupledModelSet gets its own instance.
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::vector<Param*> params)
        : cfg_(cfg), params_(std::move(params)) {
        state1_.reserve(params_.size());
        state2_.reserve(params_.size());
        for (Param* p : params_) {
            state1_.push_back(Tensor::zeros_like(p->value));
            state2_.push_back(Tensor::zeros_like(p->value));
        }
    }

    void step() {
        ++t_;
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Param& p = *params_[pi];
            Tensor& m = state1_[pi];
            if (cfg_.kind == OptimizerKind::kSgdMomentum) {
                for (size_t i = 0; i < p.value.size(); ++i) {
                    m[i] = cfg_.momentum * m[i] + p.grad[i];
                    p.value[i] -= cfg_.lr * m[i];
                }
            } else {
                Tensor& v = state2_[pi];
                const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
                const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
                for (size_t i = 0; i < p.value.size(); ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * p.grad[i];
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * p.grad[i] * p.grad[i];
                    p.value[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                }
            }
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

private:
    OptimizerConfig cfg_;
    std::vector<Param*> params_;
    std::vector<Tensor> state1_;  // momentum / first moment
    std::vector<Tensor> state2_;  // second moment (adam)
    long t_ = 0;
};

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd" || s == "sgd_momentum") return OptimizerKind::kSgdMomentum;
    if (s == "adam") return OptimizerKind::kAdam;
    throw ParameterError("unknown optimizer: " + s);
}

inline std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::kSgdMomentum ? "sgd_momentum" : "adam";
}

}  // namespace pairdiff
