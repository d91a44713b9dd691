// ErfAct and Pserf -- trainable erf-based activations -- together with the
// ten fixed/trainable baselines they are compared against. Every kind has
// a forward value and an analytic input derivative; the trainable kinds
// also expose per-sample parameter partials for backprop.
//
//   ErfAct(x; a, b) = x * erf(a * e^{b x})
//   Pserf (x; g, d) = x * erf(g * ln(1 + e^{d x}))
//
// Degenerate cases hold exactly: a = 0 (or g = 0) gives the zero function,
// b = 0 (or d = 0) gives a linear function, and Pserf(x; 1, 1) is Serf.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "erfact/special_functions.hpp"

namespace erfact {

enum class ActivationKind {
    ErfAct,
    Pserf,
    ReLU,
    LeakyReLU,
    PReLU,
    ReLU6,
    ELU,
    Softplus,
    Swish,
    GELU,
    Mish,
    Serf,
};

inline constexpr std::array<ActivationKind, 12> kAllActivationKinds = {
    ActivationKind::ErfAct, ActivationKind::Pserf,    ActivationKind::ReLU,
    ActivationKind::LeakyReLU, ActivationKind::PReLU, ActivationKind::ReLU6,
    ActivationKind::ELU,    ActivationKind::Softplus, ActivationKind::Swish,
    ActivationKind::GELU,   ActivationKind::Mish,     ActivationKind::Serf,
};

// Number of trainable scalars carried by the kind.
inline constexpr std::size_t param_arity(ActivationKind k) {
    switch (k) {
        case ActivationKind::ErfAct:
        case ActivationKind::Pserf:
            return 2;
        case ActivationKind::PReLU:
        case ActivationKind::Swish:
            return 1;
        default:
            return 0;
    }
}

inline constexpr const char* to_string(ActivationKind k) {
    switch (k) {
        case ActivationKind::ErfAct:    return "ErfAct";
        case ActivationKind::Pserf:     return "Pserf";
        case ActivationKind::ReLU:      return "ReLU";
        case ActivationKind::LeakyReLU: return "LeakyReLU";
        case ActivationKind::PReLU:     return "PReLU";
        case ActivationKind::ReLU6:     return "ReLU6";
        case ActivationKind::ELU:       return "ELU";
        case ActivationKind::Softplus:  return "Softplus";
        case ActivationKind::Swish:     return "Swish";
        case ActivationKind::GELU:      return "GELU";
        case ActivationKind::Mish:      return "Mish";
        case ActivationKind::Serf:      return "Serf";
    }
    return "?";
}

inline ActivationKind activation_from_string(std::string_view name) {
    for (ActivationKind k : kAllActivationKinds) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown activation: " + std::string(name));
}

// Initial parameter values: a=b=0.75 for ErfAct and g=1.25, d=0.85 for
// Pserf; PReLU starts at the customary 0.25 slope and Swish's beta at 1.
inline std::vector<double> default_params(ActivationKind k) {
    switch (k) {
        case ActivationKind::ErfAct: return {0.75, 0.75};
        case ActivationKind::Pserf:  return {1.25, 0.85};
        case ActivationKind::PReLU:  return {0.25};
        case ActivationKind::Swish:  return {1.0};
        default:                     return {};
    }
}

// Per-layer trainable activation parameters with their gradient
// accumulators. One ParamState is shared by every unit of a layer; its
// grads are written by exactly one thread at a time.
struct ParamState {
    std::vector<double> values;
    std::vector<double> grads;

    static ParamState for_kind(ActivationKind k) {
        ParamState s;
        s.values = default_params(k);
        s.grads.assign(s.values.size(), 0.0);
        return s;
    }
    static ParamState with_values(std::vector<double> v) {
        ParamState s;
        s.grads.assign(v.size(), 0.0);
        s.values = std::move(v);
        return s;
    }
    void zero_grads() { grads.assign(grads.size(), 0.0); }
};

namespace detail {

// Products of guarded factors can exceed the double range only when the
// true value does (saturate), or hit 0*inf where one factor is exactly
// zero and the limit is zero.
inline double saturate(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return 0.0;
    return std::copysign(std::numeric_limits<double>::max(), v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ErfAct
// ---------------------------------------------------------------------------

// Intermediates of the forward pass that the backward pass reuses.
struct ErfActTrace {
    double exp_bx;  // e^{b x}, guarded
    double erf_w;   // erf(a e^{b x})
};

struct ActGrads {
    double dx;
    double dp0;  // d/d(alpha) or d/d(gamma)
    double dp1;  // d/d(beta)  or d/d(delta)
};

inline ErfActTrace erfact_trace(double x, double alpha, double beta) {
    const double e = exp_guarded(beta * x);
    return {e, erf(alpha * e)};
}

inline double erfact_forward(double x, double alpha, double beta) {
    return x * erfact_trace(x, alpha, beta).erf_w;
}

// dx    = erf(a e^{bx}) + (2 x a b / sqrt(pi)) e^{bx} e^{-(a e^{bx})^2}
// da    = x   (2/sqrt(pi)) e^{-(a e^{bx})^2} e^{bx}
// db    = x^2 a (2/sqrt(pi)) e^{-(a e^{bx})^2} e^{bx}
// The Gaussian factor saturates to exactly 0 (never NaN), which kills the
// whole tail of each expression.
inline ActGrads erfact_grads(double x, double alpha, double beta,
                             const ErfActTrace& t) {
    const double gauss = detail::exp_neg_square(alpha * t.exp_bx);
    const double common = kTwoOverSqrtPi * gauss * t.exp_bx;  // always finite
    if (common == 0.0) return {t.erf_w, 0.0, 0.0};
    const double dalpha = detail::saturate(x * common);
    const double dbeta = detail::saturate(x * alpha * dalpha);
    const double slope_term = detail::saturate(x * alpha * beta * common);
    return {t.erf_w + slope_term, dalpha, dbeta};
}

inline double erfact_dx(double x, double alpha, double beta) {
    return erfact_grads(x, alpha, beta, erfact_trace(x, alpha, beta)).dx;
}

struct ParamGrads {
    double dp0;
    double dp1;
};

inline ParamGrads erfact_dparams(double x, double alpha, double beta) {
    const ActGrads g = erfact_grads(x, alpha, beta, erfact_trace(x, alpha, beta));
    return {g.dp0, g.dp1};
}

// ---------------------------------------------------------------------------
// Pserf
// ---------------------------------------------------------------------------

struct PserfTrace {
    double sp;     // softplus(d x)
    double sig;    // sigmoid(d x)
    double erf_v;  // erf(g softplus(d x))
};

inline PserfTrace pserf_trace(double x, double gamma, double delta) {
    const double dx = delta * x;
    const double sp = softplus_stable(dx);
    const double v = detail::saturate(gamma * sp);
    return {sp, sigmoid(dx), erf(v)};
}

inline double pserf_forward(double x, double gamma, double delta) {
    return x * pserf_trace(x, gamma, delta).erf_v;
}

// dx = erf(g s) + (2 x g d / sqrt(pi)) sigmoid(d x) e^{-(g s)^2}
// dg = x   (2/sqrt(pi)) e^{-(g s)^2} s
// dd = x^2 g (2/sqrt(pi)) e^{-(g s)^2} sigmoid(d x),  s = softplus(d x)
inline ActGrads pserf_grads(double x, double gamma, double delta,
                            const PserfTrace& t) {
    const double gauss = detail::exp_neg_square(gamma * t.sp);
    if (gauss == 0.0) return {t.erf_v, 0.0, 0.0};
    const double common = kTwoOverSqrtPi * gauss;  // in [0, 2/sqrt(pi)]
    const double dgamma = detail::saturate(x * common * t.sp);
    const double ddelta = detail::saturate(x * x * gamma * common * t.sig);
    const double slope_term =
        detail::saturate(x * gamma * delta * common * t.sig);
    return {t.erf_v + slope_term, dgamma, ddelta};
}

inline double pserf_dx(double x, double gamma, double delta) {
    return pserf_grads(x, gamma, delta, pserf_trace(x, gamma, delta)).dx;
}

inline ParamGrads pserf_dparams(double x, double gamma, double delta) {
    const ActGrads g = pserf_grads(x, gamma, delta, pserf_trace(x, gamma, delta));
    return {g.dp0, g.dp1};
}

// ---------------------------------------------------------------------------
// Baselines. Kink conventions for the piecewise kinds: the derivative at
// x = 0 is taken from the x > 0 branch, and at x = 6 (ReLU6) from the
// x < 6 branch.
// ---------------------------------------------------------------------------

inline double relu_forward(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_dx(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline double leaky_relu_forward(double x) { return x > 0.0 ? x : 0.01 * x; }
inline double leaky_relu_dx(double x) { return x >= 0.0 ? 1.0 : 0.01; }

inline double prelu_forward(double x, double a) { return x >= 0.0 ? x : a * x; }
inline double prelu_dx(double x, double a) { return x >= 0.0 ? 1.0 : a; }
inline double prelu_dparam(double x) { return x >= 0.0 ? 0.0 : x; }

inline double relu6_forward(double x) {
    return x < 0.0 ? 0.0 : (x > 6.0 ? 6.0 : x);
}
inline double relu6_dx(double x) { return (x >= 0.0 && x <= 6.0) ? 1.0 : 0.0; }

inline double elu_forward(double x) {
    if (x >= 0.0) return x;
    return x > -0.3 ? detail::expm1_small(x) : detail::exp_core(x) - 1.0;
}
inline double elu_dx(double x) {
    return x >= 0.0 ? 1.0 : detail::exp_core(x);
}

inline double swish_forward(double x, double b) { return x * sigmoid(b * x); }
inline double swish_dx(double x, double b) {
    const double s = sigmoid(b * x);
    return s + detail::saturate(x * b * s * (1.0 - s));
}
inline double swish_dparam(double x, double b) {
    const double s = sigmoid(b * x);
    return detail::saturate(x * x * s * (1.0 - s));
}

// tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
inline double gelu_forward(double x) {
    const double c = 0.7978845608028654;  // sqrt(2/pi)
    const double inner = detail::saturate(c * (x + 0.044715 * x * x * x));
    return 0.5 * x * (1.0 + tanh(inner));
}
inline double gelu_dx(double x) {
    const double c = 0.7978845608028654;
    const double inner = detail::saturate(c * (x + 0.044715 * x * x * x));
    const double t = tanh(inner);
    const double dinner = c * (1.0 + 0.134145 * x * x);
    return 0.5 * (1.0 + t) +
           detail::saturate(0.5 * x * (1.0 - t * t) * dinner);
}

inline double mish_forward(double x) {
    return x * tanh(softplus_stable(x));
}
inline double mish_dx(double x) {
    const double t = tanh(softplus_stable(x));
    return t + detail::saturate(x * (1.0 - t * t) * sigmoid(x));
}

// Serf, x erf(ln(1+e^x)), is by definition the fixed form of Pserf at
// gamma = delta = 1, so it shares that code path and matches it bit for
// bit (multiplying by 1.0 is exact).
inline double serf_forward(double x) { return pserf_forward(x, 1.0, 1.0); }
inline double serf_dx(double x) { return pserf_dx(x, 1.0, 1.0); }

// ---------------------------------------------------------------------------
// Kind-dispatched interface
// ---------------------------------------------------------------------------

namespace detail {

inline void check_arity(ActivationKind k, std::size_t got) {
    if (got != param_arity(k)) {
        throw std::invalid_argument(
            std::string(to_string(k)) + ": expected " +
            std::to_string(param_arity(k)) + " parameter(s), got " +
            std::to_string(got));
    }
}

}  // namespace detail

inline double activation_forward(ActivationKind k, double x,
                                 std::span<const double> p = {}) {
    detail::check_arity(k, p.size());
    switch (k) {
        case ActivationKind::ErfAct:    return erfact_forward(x, p[0], p[1]);
        case ActivationKind::Pserf:     return pserf_forward(x, p[0], p[1]);
        case ActivationKind::ReLU:      return relu_forward(x);
        case ActivationKind::LeakyReLU: return leaky_relu_forward(x);
        case ActivationKind::PReLU:     return prelu_forward(x, p[0]);
        case ActivationKind::ReLU6:     return relu6_forward(x);
        case ActivationKind::ELU:       return elu_forward(x);
        case ActivationKind::Softplus:  return softplus_stable(x);
        case ActivationKind::Swish:     return swish_forward(x, p[0]);
        case ActivationKind::GELU:      return gelu_forward(x);
        case ActivationKind::Mish:      return mish_forward(x);
        case ActivationKind::Serf:      return serf_forward(x);
    }
    return 0.0;  // unreachable
}

inline double activation_dx(ActivationKind k, double x,
                            std::span<const double> p = {}) {
    detail::check_arity(k, p.size());
    switch (k) {
        case ActivationKind::ErfAct:    return erfact_dx(x, p[0], p[1]);
        case ActivationKind::Pserf:     return pserf_dx(x, p[0], p[1]);
        case ActivationKind::ReLU:      return relu_dx(x);
        case ActivationKind::LeakyReLU: return leaky_relu_dx(x);
        case ActivationKind::PReLU:     return prelu_dx(x, p[0]);
        case ActivationKind::ReLU6:     return relu6_dx(x);
        case ActivationKind::ELU:       return elu_dx(x);
        case ActivationKind::Softplus:  return sigmoid(x);
        case ActivationKind::Swish:     return swish_dx(x, p[0]);
        case ActivationKind::GELU:      return gelu_dx(x);
        case ActivationKind::Mish:      return mish_dx(x);
        case ActivationKind::Serf:      return serf_dx(x);
    }
    return 0.0;  // unreachable
}

// Writes param_arity(k) partials into `out` (nothing for fixed kinds).
inline void activation_dparams(ActivationKind k, double x,
                               std::span<const double> p,
                               std::span<double> out) {
    detail::check_arity(k, p.size());
    if (out.size() != param_arity(k)) {
        throw std::invalid_argument(
            std::string(to_string(k)) + ": dparams output size mismatch");
    }
    switch (k) {
        case ActivationKind::ErfAct: {
            const ParamGrads g = erfact_dparams(x, p[0], p[1]);
            out[0] = g.dp0;
            out[1] = g.dp1;
            return;
        }
        case ActivationKind::Pserf: {
            const ParamGrads g = pserf_dparams(x, p[0], p[1]);
            out[0] = g.dp0;
            out[1] = g.dp1;
            return;
        }
        case ActivationKind::PReLU:
            out[0] = prelu_dparam(x);
            return;
        case ActivationKind::Swish:
            out[0] = swish_dparam(x, p[0]);
            return;
        default:
            return;
    }
}

}  // namespace erfact
