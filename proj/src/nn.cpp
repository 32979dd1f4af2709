#include "singulation/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace singulation::nn {

namespace {

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_layers(std::vector<Layer>& layers) {
    for (auto& l : layers) {
        l.weight = l.weight.unaryExpr(&to_float_precision);
        l.bias = l.bias.unaryExpr(&to_float_precision);
    }
}

std::vector<Layer> zero_layers(const std::vector<int>& dims) {
    std::vector<Layer> out;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        out.push_back({Matrix::Zero(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])});
    return out;
}

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

}  // namespace

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

Gradients Gradients::zeros_like(const NetworkParams& p) { return {zero_layers(p.layer_dims)}; }

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& l : layers) {
        if (l.weight.size()) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
        if (l.bias.size()) m = std::max(m, l.bias.cwiseAbs().maxCoeff());
    }
    return m;
}

AdamState AdamState::for_params(const NetworkParams& p, double lr) {
    AdamState s;
    s.m = zero_layers(p.layer_dims);
    s.v = zero_layers(p.layer_dims);
    s.lr = lr;
    return s;
}

NetworkParams init(const std::vector<int>& layer_dims, Rng& rng) {
    if (layer_dims.size() < 2) throw Error("nn: need at least input and output dims");
    for (int d : layer_dims)
        if (d < 1) throw Error("nn: layer dims must be positive");
    NetworkParams p;
    p.layer_dims = layer_dims;
    p.layers = zero_layers(layer_dims);
    for (auto& l : p.layers) {
        // He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.cols()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-limit, limit);
    }
    round_layers(p.layers);
    return p;
}

namespace {

// z = W a + b with every output accumulated over the inputs in index order,
// so a column's value does not depend on the other columns of the batch.
Matrix affine(const Layer& l, const Matrix& a) {
    constexpr Eigen::Index kBlock = 16;
    Matrix z(l.weight.rows(), a.cols());
    for (Eigen::Index c0 = 0; c0 < a.cols(); c0 += kBlock) {
        const Eigen::Index nb = std::min(kBlock, a.cols() - c0);
        auto zb = z.middleCols(c0, nb);
        zb.colwise() = l.bias;
        for (Eigen::Index k = 0; k < l.weight.cols(); ++k) zb.noalias() += l.weight.col(k) * a.block(k, c0, 1, nb);
    }
    return z;
}

}  // namespace

Matrix forward(const NetworkParams& params, const Matrix& x, ForwardCache* cache) {
    if (x.rows() != params.input_dim()) throw Error("nn: input dimension mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Matrix a = x;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const Layer& l = params.layers[i];
        Matrix z = affine(l, a);
        if (cache) {
            cache->inputs.push_back(a);
            cache->pre.push_back(z);
        }
        a = (i + 1 < params.layers.size()) ? relu(z) : std::move(z);
    }
    return a;
}

Vector forward(const NetworkParams& params, const Vector& x, ForwardCache* cache) {
    return forward(params, Matrix(x), cache).col(0);
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache, const Matrix& d_out) {
    Gradients g = Gradients::zeros_like(params);
    Matrix delta = d_out;
    for (std::size_t i = params.layers.size(); i-- > 0;) {
        if (i + 1 < params.layers.size()) delta = delta.cwiseProduct((cache.pre[i].array() > 0.0).cast<double>().matrix());
        g.layers[i].weight.noalias() = delta * cache.inputs[i].transpose();
        g.layers[i].bias = delta.rowwise().sum();
        if (i > 0) delta = params.layers[i].weight.transpose() * delta;
    }
    return g;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

namespace {

// Incremental re-evaluation of d_out . output when a single parameter of
// layer `l`, feeding unit `unit`, takes a new value. Only the perturbed unit
// is recomputed in layer l; later layers are re-evaluated from it.
class ProbeEvaluator {
public:
    ProbeEvaluator(const NetworkParams& p, const Vector& x, const Vector& d_out) : p_(p), d_out_(d_out) {
        Vector a = x;
        for (std::size_t i = 0; i < p.layers.size(); ++i) {
            inputs_.push_back(a);
            Vector z = p.layers[i].weight * a + p.layers[i].bias;
            pre_.push_back(z);
            a = (i + 1 < p.layers.size()) ? Vector(z.cwiseMax(0.0)) : z;
        }
        base_ = d_out_.dot(a);
    }

    double base() const { return base_; }

    struct Probe {
        double value;
        bool kink;  // some ReLU changed side relative to the unperturbed pass
    };

    // weight(unit, col) := w_new (col < 0 means bias := w_new)
    Probe eval(std::size_t l, Eigen::Index unit, Eigen::Index col, double new_value) const {
        const Layer& layer = p_.layers[l];
        const Vector& in = inputs_[l];
        double z = layer.bias(unit);
        if (col < 0) z = new_value;
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
            z += (c == col ? new_value : layer.weight(unit, c)) * in(c);

        const bool last = l + 1 == p_.layers.size();
        if (last) {
            Vector out = pre_[l];
            out(unit) = z;
            return {d_out_.dot(out), false};
        }
        bool kink = (z > 0.0) != (pre_[l](unit) > 0.0);
        const double dh = std::max(z, 0.0) - std::max(pre_[l](unit), 0.0);
        Vector next = pre_[l + 1] + p_.layers[l + 1].weight.col(unit) * dh;
        for (std::size_t i = l + 1; i < p_.layers.size(); ++i) {
            if (i + 1 == p_.layers.size()) return {d_out_.dot(next), kink};
            for (Eigen::Index k = 0; k < next.size(); ++k) kink = kink || ((next(k) > 0.0) != (pre_[i](k) > 0.0));
            next = p_.layers[i + 1].weight * next.cwiseMax(0.0) + p_.layers[i + 1].bias;
        }
        return {d_out_.dot(next), kink};
    }

    double derivative(std::size_t l, Eigen::Index unit, Eigen::Index col, double theta, double h) const {
        for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
            const Probe plus = eval(l, unit, col, theta + h);
            const Probe minus = eval(l, unit, col, theta - h);
            if (!plus.kink && !minus.kink) return (plus.value - minus.value) / (2.0 * h);
            if (!plus.kink) return (plus.value - base_) / h;
            if (!minus.kink) return (base_ - minus.value) / h;
        }
        return (eval(l, unit, col, theta + h).value - eval(l, unit, col, theta - h).value) / (2.0 * h);
    }

private:
    const NetworkParams& p_;
    Vector d_out_;
    std::vector<Vector> inputs_;
    std::vector<Vector> pre_;
    double base_ = 0.0;
};

}  // namespace

Gradients finite_diff_grad(const NetworkParams& params, const Vector& x, double h, const Vector& d_out) {
    if (!(h > 0.0)) throw Error("nn: finite difference step must be positive");
    if (d_out.size() != params.output_dim()) throw Error("nn: d_out dimension mismatch");
    const ProbeEvaluator probe(params, x, d_out);
    Gradients g = Gradients::zeros_like(params);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
                g.layers[l].weight(r, c) = probe.derivative(l, r, c, layer.weight(r, c), h);
            g.layers[l].bias(r) = probe.derivative(l, r, -1, layer.bias(r), h);
        }
    }
    return g;
}

Gradients finite_diff_grad(const NetworkParams& params, const Vector& x, double h) {
    return finite_diff_grad(params, x, h, Vector::Ones(params.output_dim()));
}

double max_relative_error(const Gradients& a, const Gradients& b, double floor) {
    if (a.layers.size() != b.layers.size()) throw Error("nn: gradient shape mismatch");
    double worst = 0.0;
    auto update = [&](double x, double y) {
        worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    };
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& la = a.layers[l];
        const auto& lb = b.layers[l];
        if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols())
            throw Error("nn: gradient shape mismatch");
        for (Eigen::Index i = 0; i < la.weight.size(); ++i) update(la.weight.data()[i], lb.weight.data()[i]);
        for (Eigen::Index i = 0; i < la.bias.size(); ++i) update(la.bias(i), lb.bias(i));
    }
    return worst;
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state) {
    if (grads.layers.size() != params.layers.size() || state.m.size() != params.layers.size())
        throw Error("nn: adam shape mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        m = m.unaryExpr(&to_float_precision);
        v = v.unaryExpr(&to_float_precision);
        w.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
        w = w.unaryExpr(&to_float_precision);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        update(params.layers[i].weight, grads.layers[i].weight, state.m[i].weight, state.v[i].weight);
        update(params.layers[i].bias, grads.layers[i].bias, state.m[i].bias, state.v[i].bias);
    }
}

void soft_update(NetworkParams& target, const NetworkParams& online, double tau) {
    if (target.layer_dims != online.layer_dims) throw Error("nn: soft update shape mismatch");
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error("nn: tau outside [0, 1]");
    for (std::size_t i = 0; i < target.layers.size(); ++i) {
        auto& t = target.layers[i];
        const auto& o = online.layers[i];
        t.weight = (tau * o.weight + (1.0 - tau) * t.weight).unaryExpr(&to_float_precision);
        t.bias = (tau * o.bias + (1.0 - tau) * t.bias).unaryExpr(&to_float_precision);
    }
}

MseResult mse(const Matrix& pred, const Matrix& target, const Matrix& mask) {
    const double k = static_cast<double>(pred.cols());
    const Matrix diff = (pred - target).cwiseProduct(mask);
    return {diff.squaredNorm() / k, diff * (2.0 / k)};
}

namespace {

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001B3ULL;
        }
    }
    void layers(const std::vector<Layer>& ls) {
        for (const auto& l : ls) {
            bytes(l.weight.data(), sizeof(double) * static_cast<std::size_t>(l.weight.size()));
            bytes(l.bias.data(), sizeof(double) * static_cast<std::size_t>(l.bias.size()));
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace

std::uint64_t digest(const NetworkParams& params) {
    Fnv1a h;
    for (int d : params.layer_dims) h.bytes(&d, sizeof d);
    h.layers(params.layers);
    return h.value();
}

std::uint64_t digest(const AdamState& state) {
    Fnv1a h;
    h.layers(state.m);
    h.layers(state.v);
    h.bytes(&state.step, sizeof state.step);
    return h.value();
}

// --- SQN1 checkpoint -------------------------------------------------------
//
//   "SQN1"
//   u32 n_dims, i32 dims[n_dims]
//   per layer: f32 weight (row-major, out x in), f32 bias[out]
//   u64 adam step, f64 lr, f64 beta1, f64 beta2, f64 eps
//   adam first moments, then second moments, laid out like the parameters
//
// All integers and floats little-endian.

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'N', '1'};

template <typename T>
void put(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    os.write(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bits{};
    if (!is.read(reinterpret_cast<char*>(bits.data()), sizeof(T))) throw CheckpointError("checkpoint: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    return std::bit_cast<T>(bits);
}

void put_layers(std::ostream& os, const std::vector<Layer>& layers) {
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put(os, static_cast<float>(l.weight(r, c)));
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) put(os, static_cast<float>(l.bias(r)));
    }
}

void get_layers(std::istream& is, std::vector<Layer>& layers) {
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get<float>(is);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get<float>(is);
    }
}

}  // namespace

void save_checkpoint(std::ostream& os, const NetworkParams& params, const AdamState& adam) {
    os.write(kMagic, 4);
    put(os, static_cast<std::uint32_t>(params.layer_dims.size()));
    for (int d : params.layer_dims) put(os, static_cast<std::int32_t>(d));
    put_layers(os, params.layers);
    put(os, adam.step);
    put(os, adam.lr);
    put(os, adam.beta1);
    put(os, adam.beta2);
    put(os, adam.eps);
    put_layers(os, adam.m);
    put_layers(os, adam.v);
    if (!os) throw CheckpointError("checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const NetworkParams& params, const AdamState& adam) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
    save_checkpoint(os, params, adam);
}

Checkpoint load_checkpoint(std::istream& is) {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic");
    const auto n_dims = get<std::uint32_t>(is);
    if (n_dims < 2 || n_dims > 64) throw CheckpointError("checkpoint: implausible layer count");
    std::vector<int> dims;
    for (std::uint32_t i = 0; i < n_dims; ++i) {
        const auto d = get<std::int32_t>(is);
        if (d < 1 || d > (1 << 20)) throw CheckpointError("checkpoint: invalid layer dimension");
        dims.push_back(d);
    }
    Checkpoint ck;
    ck.params.layer_dims = dims;
    ck.params.layers = zero_layers(dims);
    get_layers(is, ck.params.layers);
    ck.adam = AdamState::for_params(ck.params);
    ck.adam.step = get<std::uint64_t>(is);
    ck.adam.lr = get<double>(is);
    ck.adam.beta1 = get<double>(is);
    ck.adam.beta2 = get<double>(is);
    ck.adam.eps = get<double>(is);
    get_layers(is, ck.adam.m);
    get_layers(is, ck.adam.v);
    if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint: trailing bytes");
    return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path);
    return load_checkpoint(is);
}

GradCheckReport gradient_check(const std::vector<int>& layer_dims, int n_nets, std::uint64_t seed, double h) {
    GradCheckReport report;
    Rng rng(seed);
    for (int n = 0; n < n_nets; ++n) {
        NetworkParams p = init(layer_dims, rng);
        for (auto& l : p.layers)
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = static_cast<float>(rng.uniform(-0.1, 0.1));
        Vector x(layer_dims.front());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(0.0, 1.0);
        Vector d_out(layer_dims.back());
        for (Eigen::Index i = 0; i < d_out.size(); ++i) d_out(i) = rng.uniform(-1.0, 1.0);

        ForwardCache cache;
        forward(p, x, &cache);
        const Gradients analytic = backward(p, cache, Matrix(d_out));
        const Gradients numeric = finite_diff_grad(p, x, h, d_out);
        report.max_relative_error = std::max(report.max_relative_error, max_relative_error(analytic, numeric));
        report.parameters_checked += p.parameter_count();
        ++report.networks;
    }
    return report;
}

}  // namespace singulation::nn
