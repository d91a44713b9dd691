// Parameter update rules (SGD with momentum + weight decay, Adam) and
// learning-rate schedules. Weight decay touches weight tensors only:
// decaying activation parameters would drag alpha/gamma toward 0, which
// collapses ErfAct/Pserf to the zero function, and biases are exempt as
// usual.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "erfact/network.hpp"

namespace erfact {

struct SgdRule {
    double momentum = 0.0;
    double weight_decay = 0.0;
};

struct AdamRule {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Optimizer {
public:
    static Optimizer sgd(double momentum, double weight_decay) {
        Optimizer o;
        o.rule_ = SgdRule{momentum, weight_decay};
        return o;
    }
    static Optimizer adam(double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8) {
        Optimizer o;
        o.rule_ = AdamRule{beta1, beta2, eps};
        return o;
    }

    std::uint64_t step_count() const { return step_count_; }

    // In-place update of every parameter block. Buffers mirror parameter
    // shapes exactly and are allocated on first use.
    void step(std::span<ParamRef> params, const GradientSet& grads, double lr) {
        if (grads.grads.size() != params.size()) {
            throw ContractError("optimizer: gradient/parameter count mismatch");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (grads.grads[i].size() != params[i].values.size()) {
                throw ContractError("optimizer: gradient shape mismatch at block " +
                                    std::to_string(i));
            }
        }
        if (buf1_.empty()) {
            for (const auto& p : params) buf1_.emplace_back(p.values.size(), 0.0);
            if (std::holds_alternative<AdamRule>(rule_)) {
                for (const auto& p : params)
                    buf2_.emplace_back(p.values.size(), 0.0);
            }
        }
        ++step_count_;
        if (const auto* s = std::get_if<SgdRule>(&rule_)) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto w = params[i].values;
                const auto& g = grads.grads[i];
                auto& v = buf1_[i];
                const double wd =
                    params[i].cls == ParamClass::Weight ? s->weight_decay : 0.0;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    const double grad = g[j] + wd * w[j];
                    v[j] = s->momentum * v[j] + grad;
                    w[j] -= lr * v[j];
                }
            }
        } else {
            const auto& a = std::get<AdamRule>(rule_);
            const double t = static_cast<double>(step_count_);
            const double c1 = 1.0 - std::pow(a.beta1, t);
            const double c2 = 1.0 - std::pow(a.beta2, t);
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto w = params[i].values;
                const auto& g = grads.grads[i];
                auto& m = buf1_[i];
                auto& v = buf2_[i];
                for (std::size_t j = 0; j < w.size(); ++j) {
                    m[j] = a.beta1 * m[j] + (1.0 - a.beta1) * g[j];
                    v[j] = a.beta2 * v[j] + (1.0 - a.beta2) * g[j] * g[j];
                    const double mhat = m[j] / c1;
                    const double vhat = v[j] / c2;
                    w[j] -= lr * mhat / (std::sqrt(vhat) + a.eps);
                }
            }
        }
    }

private:
    std::variant<SgdRule, AdamRule> rule_ = SgdRule{};
    std::vector<std::vector<double>> buf1_;  // velocity / first moment
    std::vector<std::vector<double>> buf2_;  // second moment
    std::uint64_t step_count_ = 0;
};

// Constant, cosine-annealing eta(t) = lr0 (1 + cos(pi t / T)) / 2, or
// step decay lr0 * factor^floor(t / every).
class LrSchedule {
public:
    enum class Kind { Constant, CosineAnnealing, StepDecay };

    static LrSchedule constant(double lr0) {
        return LrSchedule(Kind::Constant, lr0, 0, 0.0, 0);
    }
    static LrSchedule cosine(double lr0, std::uint64_t total_steps) {
        if (total_steps == 0) {
            throw std::invalid_argument("cosine schedule needs total_steps >= 1");
        }
        return LrSchedule(Kind::CosineAnnealing, lr0, total_steps, 0.0, 0);
    }
    static LrSchedule step_decay(double lr0, double factor,
                                 std::uint64_t every) {
        if (every == 0) {
            throw std::invalid_argument("step decay needs every >= 1");
        }
        return LrSchedule(Kind::StepDecay, lr0, 0, factor, every);
    }

    Kind kind() const { return kind_; }
    double lr0() const { return lr0_; }

    double at(std::uint64_t step) const {
        switch (kind_) {
            case Kind::Constant:
                return lr0_;
            case Kind::CosineAnnealing: {
                if (step > total_) {
                    throw std::out_of_range(
                        "cosine schedule: step " + std::to_string(step) +
                        " > total " + std::to_string(total_));
                }
                const double frac =
                    static_cast<double>(step) / static_cast<double>(total_);
                return lr0_ * (1.0 + std::cos(3.141592653589793 * frac)) / 2.0;
            }
            case Kind::StepDecay:
                return lr0_ * std::pow(factor_, static_cast<double>(step / every_));
        }
        return lr0_;
    }

private:
    LrSchedule(Kind k, double lr0, std::uint64_t total, double factor,
               std::uint64_t every)
        : kind_(k), lr0_(lr0), total_(total), factor_(factor), every_(every) {}

    Kind kind_;
    double lr0_;
    std::uint64_t total_;
    double factor_;
    std::uint64_t every_;
};

}  // namespace erfact
