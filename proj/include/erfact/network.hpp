// Minimal feed-forward network with reverse-mode backprop: dense, conv,
// max-pool, flatten, dropout and activation layers over a softmax
// cross-entropy loss. Enough to train LeNet-scale models and to realize
// the per-layer activation-parameter gradient
//     dL/drho = sum_sites dL/df(x) * df(x)/drho
// end to end. A network instance and its caches belong to one thread at a
// time; independent instances may run in parallel.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "erfact/activation.hpp"
#include "erfact/rng.hpp"
#include "erfact/tensor.hpp"

namespace erfact {

// Shape algebra failures at build or run time; the message names the layer.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Misuse of the forward/backward contract (stale cache, wrong pairing).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

enum class Mode { Train, Eval };
enum class WeightInit { HeNormal, XavierUniform };
enum class ParamClass { Weight, Bias, ActivationParam };

struct LayerSpec {
    enum class Type { Dense, Conv2d, MaxPool2d, Flatten, Activation, Dropout };

    Type type = Type::Flatten;
    std::size_t in = 0, out = 0;                    // Dense
    std::size_t in_ch = 0, out_ch = 0;              // Conv2d
    std::size_t kernel = 0, stride = 1, padding = 0;  // Conv2d / MaxPool2d
    ActivationKind kind = ActivationKind::ReLU;     // Activation
    std::vector<double> act_params;                 // empty -> kind defaults
    double rate = 0.0;                              // Dropout

    static LayerSpec dense(std::size_t in, std::size_t out) {
        LayerSpec s;
        s.type = Type::Dense;
        s.in = in;
        s.out = out;
        return s;
    }
    static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch,
                            std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0) {
        LayerSpec s;
        s.type = Type::Conv2d;
        s.in_ch = in_ch;
        s.out_ch = out_ch;
        s.kernel = kernel;
        s.stride = stride;
        s.padding = padding;
        return s;
    }
    static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride) {
        LayerSpec s;
        s.type = Type::MaxPool2d;
        s.kernel = kernel;
        s.stride = stride;
        return s;
    }
    static LayerSpec flatten() {
        LayerSpec s;
        s.type = Type::Flatten;
        return s;
    }
    static LayerSpec activation(ActivationKind k,
                                std::vector<double> params = {}) {
        LayerSpec s;
        s.type = Type::Activation;
        s.kind = k;
        s.act_params = std::move(params);
        return s;
    }
    static LayerSpec dropout(double rate) {
        LayerSpec s;
        s.type = Type::Dropout;
        s.rate = rate;
        return s;
    }

    const char* name() const {
        switch (type) {
            case Type::Dense:      return "Dense";
            case Type::Conv2d:     return "Conv2d";
            case Type::MaxPool2d:  return "MaxPool2d";
            case Type::Flatten:    return "Flatten";
            case Type::Activation: return "Activation";
            case Type::Dropout:    return "Dropout";
        }
        return "?";
    }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
};

// View into a parameter block owned by the network, in the fixed order
// produced by Network::parameters(). The class decides weight-decay
// treatment in the optimizer.
struct ParamRef {
    ParamClass cls;
    std::span<double> values;
};

// Gradients aligned one-to-one with Network::parameters().
struct GradientSet {
    std::vector<std::vector<double>> grads;
};

struct LayerCache {
    Tensor input;                  // layer input as seen in forward
    std::vector<double> aux;       // activation traces / dropout mask
    std::vector<std::size_t> idx;  // maxpool argmax (first on ties)
};

struct ForwardCache {
    std::uint64_t net_id = 0;
    std::uint64_t ticket = 0;
    Mode mode = Mode::Eval;
    std::size_t batch = 0;
    std::vector<LayerCache> layers;
};

class Network {
public:
    // Validates the whole shape algebra up front; every layer either
    // computes its output shape or the constructor throws, naming it.
    Network(NetworkSpec spec, std::vector<std::size_t> input_shape)
        : spec_(std::move(spec)),
          input_shape_(std::move(input_shape)),
          net_id_(next_id()),
          dropout_rng_(0x6a09e667f3bcc909ULL) {
        std::vector<std::size_t> shp = input_shape_;
        for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
            LayerState st;
            st.spec = spec_.layers[li];
            st.in_shape = shp;
            infer_output_shape(li, st, shp);
            st.out_shape = shp;
            allocate_params(st);
            layers_.push_back(std::move(st));
        }
        out_shape_ = shp;
    }

    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    const std::vector<std::size_t>& output_shape() const { return out_shape_; }
    // Class count for nets ending in rank-1 logits; 0 otherwise.
    std::size_t num_classes() const {
        return out_shape_.size() == 1 ? out_shape_[0] : 0;
    }
    std::size_t num_layers() const { return layers_.size(); }
    const LayerSpec& layer_spec(std::size_t i) const { return layers_[i].spec; }

    // Trainable activation parameter values of layer i (must be an
    // Activation layer with arity > 0).
    const ParamState& activation_state(std::size_t i) const {
        return layers_.at(i).act;
    }

    // He normal: N(0, sqrt(2/fan_in)); Xavier uniform:
    // U(-b, b), b = sqrt(6/(fan_in+fan_out)). Biases zero. Activation
    // parameters are left at their configured initial values, so two
    // networks differing only in activation kind start from identical
    // weight tensors given the same seed.
    void init_weights(WeightInit scheme, std::uint64_t seed) {
        detail::Rng rng(seed);
        for (auto& st : layers_) {
            std::size_t fan_in = 0, fan_out = 0;
            if (st.spec.type == LayerSpec::Type::Dense) {
                fan_in = st.spec.in;
                fan_out = st.spec.out;
            } else if (st.spec.type == LayerSpec::Type::Conv2d) {
                fan_in = st.spec.in_ch * st.spec.kernel * st.spec.kernel;
                fan_out = st.spec.out_ch * st.spec.kernel * st.spec.kernel;
            } else {
                continue;
            }
            if (scheme == WeightInit::HeNormal) {
                const double std_dev = std::sqrt(2.0 / fan_in);
                for (double& w : st.weight.values()) w = std_dev * rng.normal();
            } else {
                const double bound = std::sqrt(6.0 / (fan_in + fan_out));
                for (double& w : st.weight.values())
                    w = rng.uniform(-bound, bound);
            }
            st.bias.fill(0.0);
        }
        // fresh, seed-derived dropout stream
        dropout_rng_ = detail::Rng(seed ^ 0x9e3779b97f4a7c15ULL);
    }

    // Fixed enumeration order: per layer, weight then bias; activation
    // parameter vectors where present.
    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        for (auto& st : layers_) {
            if (st.spec.type == LayerSpec::Type::Dense ||
                st.spec.type == LayerSpec::Type::Conv2d) {
                out.push_back({ParamClass::Weight, st.weight.values()});
                out.push_back({ParamClass::Bias, st.bias.values()});
            } else if (st.spec.type == LayerSpec::Type::Activation &&
                       !st.act.values.empty()) {
                out.push_back({ParamClass::ActivationParam, st.act.values});
            }
        }
        return out;
    }

    GradientSet make_gradients() {
        GradientSet g;
        for (const ParamRef& p : parameters()) {
            g.grads.emplace_back(p.values.size(), 0.0);
        }
        return g;
    }

    // Runs the batch through every layer, recording what backward needs.
    // Eval mode turns dropout into the identity.
    Tensor forward(const Tensor& batch, Mode mode, ForwardCache* cache = nullptr) {
        check_batch_shape(batch);
        ++ticket_;  // every forward invalidates previously issued caches
        if (cache) {
            cache->net_id = net_id_;
            cache->ticket = ticket_;
            cache->mode = mode;
            cache->batch = batch.extent(0);
            cache->layers.assign(layers_.size(), {});
        }
        Tensor cur = batch;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            LayerCache scratch;
            LayerCache& lc = cache ? cache->layers[li] : scratch;
            Tensor out = layer_forward(li, cur, mode, lc);
            if (cache) lc.input = std::move(cur);
            cur = std::move(out);
        }
        return cur;
    }

    // Reverse pass over a cache produced by the immediately preceding
    // forward on this network. Returns gradients for every weight, bias
    // and activation ParamState; activation-parameter gradients are the
    // fixed-order sum of upstream * dparams over all activation sites.
    GradientSet backward(const ForwardCache& cache, const Tensor& dlogits) {
        if (cache.net_id != net_id_) {
            throw ContractError("backward: cache belongs to another network");
        }
        if (cache.ticket != ticket_) {
            throw ContractError("backward: stale cache (ticket " +
                                std::to_string(cache.ticket) + ", expected " +
                                std::to_string(ticket_) + ")");
        }
        if (dlogits.rank() != out_shape_.size() + 1 ||
            dlogits.extent(0) != cache.batch) {
            throw ShapeError("backward: upstream gradient shape mismatch");
        }
        for (std::size_t i = 0; i < out_shape_.size(); ++i) {
            if (dlogits.extent(i + 1) != out_shape_[i]) {
                throw ShapeError("backward: upstream gradient shape mismatch");
            }
        }
        GradientSet grads = make_gradients();
        // map layer -> gradient slot
        std::vector<std::ptrdiff_t> slot(layers_.size(), -1);
        {
            std::size_t s = 0;
            for (std::size_t li = 0; li < layers_.size(); ++li) {
                const auto& st = layers_[li];
                if (st.spec.type == LayerSpec::Type::Dense ||
                    st.spec.type == LayerSpec::Type::Conv2d) {
                    slot[li] = static_cast<std::ptrdiff_t>(s);
                    s += 2;
                } else if (st.spec.type == LayerSpec::Type::Activation &&
                           !st.act.values.empty()) {
                    slot[li] = static_cast<std::ptrdiff_t>(s);
                    s += 1;
                }
            }
        }
        Tensor grad = dlogits;
        for (std::size_t k = layers_.size(); k-- > 0;) {
            const bool need_input_grad = k > 0;
            grad = layer_backward(k, cache.layers[k], cache.mode, grad,
                                  need_input_grad, slot[k], grads);
        }
        return grads;
    }

private:
    struct LayerState {
        LayerSpec spec;
        std::vector<std::size_t> in_shape, out_shape;  // per sample
        Tensor weight, bias;
        ParamState act;
    };

    static std::uint64_t next_id() {
        static std::atomic<std::uint64_t> c{1};
        return c.fetch_add(1);
    }

    void infer_output_shape(std::size_t li, const LayerState& st,
                            std::vector<std::size_t>& shp) const {
        const LayerSpec& s = st.spec;
        auto fail = [&](const std::string& msg) {
            throw ShapeError("layer " + std::to_string(li) + " (" + s.name() +
                             "): " + msg);
        };
        switch (s.type) {
            case LayerSpec::Type::Dense:
                if (shp.size() != 1) fail("expects rank-1 input, add Flatten");
                if (shp[0] != s.in) {
                    fail("input extent " + std::to_string(shp[0]) +
                         " != declared " + std::to_string(s.in));
                }
                shp = {s.out};
                return;
            case LayerSpec::Type::Conv2d: {
                if (shp.size() != 3) fail("expects [C,H,W] input");
                if (shp[0] != s.in_ch) {
                    fail("input channels " + std::to_string(shp[0]) +
                         " != declared " + std::to_string(s.in_ch));
                }
                if (s.kernel == 0 || s.stride == 0) fail("kernel/stride must be positive");
                const std::size_t h = shp[1] + 2 * s.padding;
                const std::size_t w = shp[2] + 2 * s.padding;
                if (h < s.kernel || w < s.kernel) fail("kernel larger than padded input");
                shp = {s.out_ch, (h - s.kernel) / s.stride + 1,
                       (w - s.kernel) / s.stride + 1};
                return;
            }
            case LayerSpec::Type::MaxPool2d: {
                if (shp.size() != 3) fail("expects [C,H,W] input");
                if (s.kernel == 0 || s.stride == 0) fail("kernel/stride must be positive");
                if (shp[1] < s.kernel || shp[2] < s.kernel) {
                    fail("window larger than input");
                }
                shp = {shp[0], (shp[1] - s.kernel) / s.stride + 1,
                       (shp[2] - s.kernel) / s.stride + 1};
                return;
            }
            case LayerSpec::Type::Flatten: {
                std::size_t n = 1;
                for (std::size_t e : shp) n *= e;
                shp = {n};
                return;
            }
            case LayerSpec::Type::Activation:
                if (s.act_params.size() != 0 &&
                    s.act_params.size() != param_arity(s.kind)) {
                    fail(std::string("activation ") + to_string(s.kind) +
                         " takes " + std::to_string(param_arity(s.kind)) +
                         " parameter(s)");
                }
                return;
            case LayerSpec::Type::Dropout:
                if (!(s.rate >= 0.0 && s.rate < 1.0)) {
                    fail("dropout rate must be in [0,1)");
                }
                return;
        }
    }

    void allocate_params(LayerState& st) {
        switch (st.spec.type) {
            case LayerSpec::Type::Dense:
                st.weight = Tensor({st.spec.out, st.spec.in});
                st.bias = Tensor({st.spec.out});
                return;
            case LayerSpec::Type::Conv2d:
                st.weight = Tensor({st.spec.out_ch, st.spec.in_ch,
                                    st.spec.kernel, st.spec.kernel});
                st.bias = Tensor({st.spec.out_ch});
                return;
            case LayerSpec::Type::Activation:
                st.act = st.spec.act_params.empty()
                             ? ParamState::for_kind(st.spec.kind)
                             : ParamState::with_values(st.spec.act_params);
                return;
            default:
                return;
        }
    }

    void check_batch_shape(const Tensor& batch) const {
        bool ok = batch.rank() == input_shape_.size() + 1 && batch.extent(0) > 0;
        if (ok) {
            for (std::size_t i = 0; i < input_shape_.size(); ++i) {
                ok = ok && batch.extent(i + 1) == input_shape_[i];
            }
        }
        if (!ok) {
            throw ShapeError(
                "forward: batch shape does not match network input shape");
        }
    }

    static std::vector<std::size_t> with_batch(std::size_t n,
                                               const std::vector<std::size_t>& s) {
        std::vector<std::size_t> r;
        r.reserve(s.size() + 1);
        r.push_back(n);
        r.insert(r.end(), s.begin(), s.end());
        return r;
    }

    Tensor layer_forward(std::size_t li, const Tensor& in, Mode mode,
                         LayerCache& lc) {
        LayerState& st = layers_[li];
        const std::size_t n = in.extent(0);
        switch (st.spec.type) {
            case LayerSpec::Type::Dense:
                return dense_forward(st, in);
            case LayerSpec::Type::Conv2d:
                return conv_forward(st, in);
            case LayerSpec::Type::MaxPool2d:
                return maxpool_forward(st, in, lc);
            case LayerSpec::Type::Flatten:
                return in.reshaped(with_batch(n, st.out_shape));
            case LayerSpec::Type::Activation:
                return activation_layer_forward(st, in, lc);
            case LayerSpec::Type::Dropout:
                return dropout_forward(st, in, mode, lc);
        }
        return in;
    }

    Tensor layer_backward(std::size_t li, const LayerCache& lc, Mode mode,
                          const Tensor& up, bool need_input_grad,
                          std::ptrdiff_t slot, GradientSet& grads) {
        LayerState& st = layers_[li];
        switch (st.spec.type) {
            case LayerSpec::Type::Dense:
                return dense_backward(st, lc, up, need_input_grad, slot, grads);
            case LayerSpec::Type::Conv2d:
                return conv_backward(st, lc, up, need_input_grad, slot, grads);
            case LayerSpec::Type::MaxPool2d:
                return maxpool_backward(st, lc, up);
            case LayerSpec::Type::Flatten:
                return up.reshaped(
                    with_batch(up.extent(0), st.in_shape));
            case LayerSpec::Type::Activation:
                return activation_layer_backward(st, lc, up, slot, grads);
            case LayerSpec::Type::Dropout:
                return dropout_backward(st, lc, mode, up);
        }
        return up;
    }

    // --- dense -----------------------------------------------------------

    Tensor dense_forward(const LayerState& st, const Tensor& in) const {
        const std::size_t n = in.extent(0);
        const std::size_t ni = st.spec.in, no = st.spec.out;
        Tensor out({n, no});
        const double* w = st.weight.data();
        const double* b = st.bias.data();
        for (std::size_t s = 0; s < n; ++s) {
            const double* x = in.data() + s * ni;
            double* y = out.data() + s * no;
            for (std::size_t o = 0; o < no; ++o) {
                const double* wr = w + o * ni;
                double acc = b[o];
                for (std::size_t i = 0; i < ni; ++i) acc += wr[i] * x[i];
                y[o] = acc;
            }
        }
        return out;
    }

    Tensor dense_backward(const LayerState& st, const LayerCache& lc,
                          const Tensor& up, bool need_input_grad,
                          std::ptrdiff_t slot, GradientSet& grads) const {
        const std::size_t n = up.extent(0);
        const std::size_t ni = st.spec.in, no = st.spec.out;
        double* dw = grads.grads[slot].data();
        double* db = grads.grads[slot + 1].data();
        const double* w = st.weight.data();
        Tensor din;
        if (need_input_grad) din = Tensor({n, ni});
        for (std::size_t s = 0; s < n; ++s) {
            const double* g = up.data() + s * no;
            const double* x = lc.input.data() + s * ni;
            double* dx = need_input_grad ? din.data() + s * ni : nullptr;
            for (std::size_t o = 0; o < no; ++o) {
                const double go = g[o];
                db[o] += go;
                double* dwr = dw + o * ni;
                const double* wr = w + o * ni;
                for (std::size_t i = 0; i < ni; ++i) dwr[i] += go * x[i];
                if (dx) {
                    for (std::size_t i = 0; i < ni; ++i) dx[i] += go * wr[i];
                }
            }
        }
        return din;
    }

    // --- conv ------------------------------------------------------------

    Tensor conv_forward(const LayerState& st, const Tensor& in) const {
        const LayerSpec& s = st.spec;
        const std::size_t n = in.extent(0);
        const std::size_t ic = s.in_ch, oc = s.out_ch, k = s.kernel;
        const std::size_t ih = st.in_shape[1], iw = st.in_shape[2];
        const std::size_t oh = st.out_shape[1], ow = st.out_shape[2];
        const std::size_t stride = s.stride, pad = s.padding;
        Tensor out({n, oc, oh, ow});
        const double* wts = st.weight.data();
        const double* bias = st.bias.data();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t o = 0; o < oc; ++o) {
                double* op = out.data() + ((b * oc + o) * oh) * ow;
                for (std::size_t i = 0; i < oh * ow; ++i) op[i] = bias[o];
                for (std::size_t c = 0; c < ic; ++c) {
                    const double* ip = in.data() + ((b * ic + c) * ih) * iw;
                    const double* wp = wts + ((o * ic + c) * k) * k;
                    for (std::size_t y = 0; y < oh; ++y) {
                        double* orow = op + y * ow;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const std::ptrdiff_t src_y =
                                static_cast<std::ptrdiff_t>(y * stride + ky) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (src_y < 0 ||
                                src_y >= static_cast<std::ptrdiff_t>(ih)) {
                                continue;
                            }
                            const double* irow = ip + src_y * iw;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const double wv = wp[ky * k + kx];
                                const std::ptrdiff_t off =
                                    static_cast<std::ptrdiff_t>(kx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                for (std::size_t x = 0; x < ow; ++x) {
                                    const std::ptrdiff_t src_x =
                                        static_cast<std::ptrdiff_t>(x * stride) +
                                        off;
                                    if (src_x < 0 ||
                                        src_x >=
                                            static_cast<std::ptrdiff_t>(iw)) {
                                        continue;
                                    }
                                    orow[x] += wv * irow[src_x];
                                }
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor conv_backward(const LayerState& st, const LayerCache& lc,
                         const Tensor& up, bool need_input_grad,
                         std::ptrdiff_t slot, GradientSet& grads) const {
        const LayerSpec& s = st.spec;
        const std::size_t n = up.extent(0);
        const std::size_t ic = s.in_ch, oc = s.out_ch, k = s.kernel;
        const std::size_t ih = st.in_shape[1], iw = st.in_shape[2];
        const std::size_t oh = st.out_shape[1], ow = st.out_shape[2];
        const std::size_t stride = s.stride, pad = s.padding;
        double* dw = grads.grads[slot].data();
        double* db = grads.grads[slot + 1].data();
        const double* wts = st.weight.data();
        Tensor din;
        if (need_input_grad) din = Tensor(lc.input.shape());
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t o = 0; o < oc; ++o) {
                const double* gp = up.data() + ((b * oc + o) * oh) * ow;
                double acc = 0.0;
                for (std::size_t i = 0; i < oh * ow; ++i) acc += gp[i];
                db[o] += acc;
                for (std::size_t c = 0; c < ic; ++c) {
                    const double* ip =
                        lc.input.data() + ((b * ic + c) * ih) * iw;
                    double* dip =
                        need_input_grad ? din.data() + ((b * ic + c) * ih) * iw
                                        : nullptr;
                    const double* wp = wts + ((o * ic + c) * k) * k;
                    double* dwp = dw + ((o * ic + c) * k) * k;
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* grow = gp + y * ow;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const std::ptrdiff_t src_y =
                                static_cast<std::ptrdiff_t>(y * stride + ky) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (src_y < 0 ||
                                src_y >= static_cast<std::ptrdiff_t>(ih)) {
                                continue;
                            }
                            const double* irow = ip + src_y * iw;
                            double* dirow = dip ? dip + src_y * iw : nullptr;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::ptrdiff_t off =
                                    static_cast<std::ptrdiff_t>(kx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                const double wv = wp[ky * k + kx];
                                double wacc = 0.0;
                                for (std::size_t x = 0; x < ow; ++x) {
                                    const std::ptrdiff_t src_x =
                                        static_cast<std::ptrdiff_t>(x * stride) +
                                        off;
                                    if (src_x < 0 ||
                                        src_x >=
                                            static_cast<std::ptrdiff_t>(iw)) {
                                        continue;
                                    }
                                    const double g = grow[x];
                                    wacc += g * irow[src_x];
                                    if (dirow) dirow[src_x] += g * wv;
                                }
                                dwp[ky * k + kx] += wacc;
                            }
                        }
                    }
                }
            }
        }
        return din;
    }

    // --- maxpool ---------------------------------------------------------

    Tensor maxpool_forward(const LayerState& st, const Tensor& in,
                           LayerCache& lc) const {
        const LayerSpec& s = st.spec;
        const std::size_t n = in.extent(0);
        const std::size_t c = st.in_shape[0];
        const std::size_t ih = st.in_shape[1], iw = st.in_shape[2];
        const std::size_t oh = st.out_shape[1], ow = st.out_shape[2];
        Tensor out({n, c, oh, ow});
        lc.idx.assign(out.numel(), 0);
        const double* ip = in.data();
        double* op = out.data();
        std::size_t oi = 0;
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t base = ((b * c + ch) * ih) * iw;
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t x = 0; x < ow; ++x, ++oi) {
                        // scan in linear-index order; strict > keeps the
                        // first occurrence on ties
                        std::size_t best = base + (y * s.stride) * iw +
                                           x * s.stride;
                        double bv = ip[best];
                        for (std::size_t ky = 0; ky < s.kernel; ++ky) {
                            const std::size_t row =
                                base + (y * s.stride + ky) * iw + x * s.stride;
                            for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                                if (ip[row + kx] > bv) {
                                    bv = ip[row + kx];
                                    best = row + kx;
                                }
                            }
                        }
                        op[oi] = bv;
                        lc.idx[oi] = best;
                    }
                }
            }
        }
        return out;
    }

    Tensor maxpool_backward(const LayerState& st, const LayerCache& lc,
                            const Tensor& up) const {
        Tensor din(lc.input.shape());
        double* d = din.data();
        const double* g = up.data();
        for (std::size_t i = 0; i < up.numel(); ++i) d[lc.idx[i]] += g[i];
        return din;
    }

    // --- activation ------------------------------------------------------

    Tensor activation_layer_forward(LayerState& st, const Tensor& in,
                                    LayerCache& lc) const {
        const std::size_t n = in.numel();
        Tensor out(in.shape());
        const double* x = in.data();
        double* y = out.data();
        switch (st.spec.kind) {
            case ActivationKind::ErfAct: {
                lc.aux.resize(2 * n);
                const double a = st.act.values[0], b = st.act.values[1];
                double* aux = lc.aux.data();
                for (std::size_t i = 0; i < n; ++i) {
                    const ErfActTrace t = erfact_trace(x[i], a, b);
                    aux[2 * i] = t.exp_bx;
                    aux[2 * i + 1] = t.erf_w;
                    y[i] = x[i] * t.erf_w;
                }
                return out;
            }
            case ActivationKind::Pserf: {
                lc.aux.resize(3 * n);
                const double g = st.act.values[0], d = st.act.values[1];
                double* aux = lc.aux.data();
                for (std::size_t i = 0; i < n; ++i) {
                    const PserfTrace t = pserf_trace(x[i], g, d);
                    aux[3 * i] = t.sp;
                    aux[3 * i + 1] = t.sig;
                    aux[3 * i + 2] = t.erf_v;
                    y[i] = x[i] * t.erf_v;
                }
                return out;
            }
            case ActivationKind::ReLU:
                for (std::size_t i = 0; i < n; ++i) y[i] = relu_forward(x[i]);
                return out;
            case ActivationKind::LeakyReLU:
                for (std::size_t i = 0; i < n; ++i)
                    y[i] = leaky_relu_forward(x[i]);
                return out;
            case ActivationKind::PReLU: {
                const double a = st.act.values[0];
                for (std::size_t i = 0; i < n; ++i)
                    y[i] = prelu_forward(x[i], a);
                return out;
            }
            case ActivationKind::ReLU6:
                for (std::size_t i = 0; i < n; ++i) y[i] = relu6_forward(x[i]);
                return out;
            case ActivationKind::ELU:
                for (std::size_t i = 0; i < n; ++i) y[i] = elu_forward(x[i]);
                return out;
            case ActivationKind::Softplus:
                for (std::size_t i = 0; i < n; ++i)
                    y[i] = softplus_stable(x[i]);
                return out;
            case ActivationKind::Swish: {
                const double b = st.act.values[0];
                for (std::size_t i = 0; i < n; ++i)
                    y[i] = swish_forward(x[i], b);
                return out;
            }
            case ActivationKind::GELU:
                for (std::size_t i = 0; i < n; ++i) y[i] = gelu_forward(x[i]);
                return out;
            case ActivationKind::Mish:
                for (std::size_t i = 0; i < n; ++i) y[i] = mish_forward(x[i]);
                return out;
            case ActivationKind::Serf:
                for (std::size_t i = 0; i < n; ++i) y[i] = serf_forward(x[i]);
                return out;
        }
        return out;
    }

    Tensor activation_layer_backward(LayerState& st, const LayerCache& lc,
                                     const Tensor& up, std::ptrdiff_t slot,
                                     GradientSet& grads) {
        const std::size_t n = up.numel();
        Tensor din(lc.input.shape());
        const double* x = lc.input.data();
        const double* g = up.data();
        double* dx = din.data();
        st.act.zero_grads();
        switch (st.spec.kind) {
            case ActivationKind::ErfAct: {
                const double a = st.act.values[0], b = st.act.values[1];
                const double* aux = lc.aux.data();
                double acc0 = 0.0, acc1 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const ErfActTrace t{aux[2 * i], aux[2 * i + 1]};
                    const ActGrads ag = erfact_grads(x[i], a, b, t);
                    dx[i] = g[i] * ag.dx;
                    acc0 += g[i] * ag.dp0;
                    acc1 += g[i] * ag.dp1;
                }
                st.act.grads[0] = acc0;
                st.act.grads[1] = acc1;
                break;
            }
            case ActivationKind::Pserf: {
                const double ga = st.act.values[0], d = st.act.values[1];
                const double* aux = lc.aux.data();
                double acc0 = 0.0, acc1 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const PserfTrace t{aux[3 * i], aux[3 * i + 1],
                                       aux[3 * i + 2]};
                    const ActGrads ag = pserf_grads(x[i], ga, d, t);
                    dx[i] = g[i] * ag.dx;
                    acc0 += g[i] * ag.dp0;
                    acc1 += g[i] * ag.dp1;
                }
                st.act.grads[0] = acc0;
                st.act.grads[1] = acc1;
                break;
            }
            case ActivationKind::ReLU:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * relu_dx(x[i]);
                break;
            case ActivationKind::LeakyReLU:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * leaky_relu_dx(x[i]);
                break;
            case ActivationKind::PReLU: {
                const double a = st.act.values[0];
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    dx[i] = g[i] * prelu_dx(x[i], a);
                    acc += g[i] * prelu_dparam(x[i]);
                }
                st.act.grads[0] = acc;
                break;
            }
            case ActivationKind::ReLU6:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * relu6_dx(x[i]);
                break;
            case ActivationKind::ELU:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * elu_dx(x[i]);
                break;
            case ActivationKind::Softplus:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * sigmoid(x[i]);
                break;
            case ActivationKind::Swish: {
                const double b = st.act.values[0];
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    dx[i] = g[i] * swish_dx(x[i], b);
                    acc += g[i] * swish_dparam(x[i], b);
                }
                st.act.grads[0] = acc;
                break;
            }
            case ActivationKind::GELU:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * gelu_dx(x[i]);
                break;
            case ActivationKind::Mish:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * mish_dx(x[i]);
                break;
            case ActivationKind::Serf:
                for (std::size_t i = 0; i < n; ++i)
                    dx[i] = g[i] * serf_dx(x[i]);
                break;
        }
        if (slot >= 0) {
            grads.grads[slot].assign(st.act.grads.begin(), st.act.grads.end());
        }
        return din;
    }

    // --- dropout ---------------------------------------------------------

    // Inverted scaling: surviving units are divided by the keep
    // probability at train time, so eval is the identity map.
    Tensor dropout_forward(const LayerState& st, const Tensor& in, Mode mode,
                           LayerCache& lc) {
        if (mode == Mode::Eval || st.spec.rate == 0.0) {
            lc.aux.clear();
            return in;
        }
        const double keep = 1.0 - st.spec.rate;
        const std::size_t n = in.numel();
        Tensor out(in.shape());
        lc.aux.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
            lc.aux[i] = m;
            out[i] = in[i] * m;
        }
        return out;
    }

    Tensor dropout_backward(const LayerState& st, const LayerCache& lc,
                            Mode mode, const Tensor& up) const {
        if (mode == Mode::Eval || st.spec.rate == 0.0) return up;
        Tensor din(up.shape());
        for (std::size_t i = 0; i < up.numel(); ++i) {
            din[i] = up[i] * lc.aux[i];
        }
        return din;
    }

    NetworkSpec spec_;
    std::vector<std::size_t> input_shape_;
    std::vector<LayerState> layers_;
    std::vector<std::size_t> out_shape_;
    std::uint64_t net_id_ = 0;
    std::uint64_t ticket_ = 0;
    detail::Rng dropout_rng_;
};

struct LossResult {
    double loss = 0.0;
    Tensor dlogits;
};

// Mean over the batch of -log softmax(logits)[label], max-subtracted for
// stability; dlogits = (softmax - onehot) / batch.
inline LossResult softmax_cross_entropy(const Tensor& logits,
                                        std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: logits must be [batch, classes]");
    }
    const std::size_t n = logits.extent(0);
    const std::size_t c = logits.extent(1);
    if (labels.size() != n) {
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    }
    LossResult r;
    r.dlogits = Tensor({n, c});
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const int label = labels[s];
        if (label < 0 || static_cast<std::size_t>(label) >= c) {
            throw std::out_of_range("softmax_cross_entropy: label " +
                                    std::to_string(label) + " outside [0, " +
                                    std::to_string(c) + ")");
        }
        const double* z = logits.data() + s * c;
        double* d = r.dlogits.data() + s * c;
        double m = z[0];
        for (std::size_t j = 1; j < c; ++j) m = std::fmax(m, z[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            d[j] = std::exp(z[j] - m);
            se += d[j];
        }
        const double inv_se = 1.0 / se;
        for (std::size_t j = 0; j < c; ++j) d[j] *= inv_se * inv_n;
        d[label] -= inv_n;
        total += std::log(se) - (z[label] - m);
    }
    r.loss = total * inv_n;
    return r;
}

}  // namespace erfact
