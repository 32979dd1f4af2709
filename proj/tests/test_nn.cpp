#include "singulation/nn.hpp"

#include <doctest.h>

#include <sstream>

using namespace singulation;
using namespace singulation::nn;

namespace {

NetworkParams scalar_net(double w1, double b1, double w2, double b2) {
    NetworkParams p;
    p.layer_dims = {1, 1, 1};
    p.layers.resize(2);
    p.layers[0].weight = Matrix::Constant(1, 1, w1);
    p.layers[0].bias = Vector::Constant(1, b1);
    p.layers[1].weight = Matrix::Constant(1, 1, w2);
    p.layers[1].bias = Vector::Constant(1, b2);
    return p;
}

double scalar_forward(const NetworkParams& p, double x) { return forward(p, Vector(Vector::Constant(1, x)))(0); }

// Naive oracle: perturb one parameter, rerun the full forward pass.
Gradients naive_fd(NetworkParams p, const Vector& x, double h) {
    Gradients g = Gradients::zeros_like(p);
    auto eval = [&] { return forward(p, x).sum(); };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto probe = [&](double& theta, double& out) {
            const double keep = theta;
            theta = keep + h;
            const double up = eval();
            theta = keep - h;
            const double down = eval();
            theta = keep;
            out = (up - down) / (2.0 * h);
        };
        for (Eigen::Index i = 0; i < p.layers[l].weight.size(); ++i)
            probe(p.layers[l].weight.data()[i], g.layers[l].weight.data()[i]);
        for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i)
            probe(p.layers[l].bias.data()[i], g.layers[l].bias.data()[i]);
    }
    return g;
}

Gradients backprop(const NetworkParams& p, const Vector& x) {
    ForwardCache cache;
    const Matrix out = forward(p, Matrix(x), &cache);
    return backward(p, cache, Matrix::Ones(out.rows(), out.cols()));
}

std::string serialize(const NetworkParams& p, const AdamState& a) {
    std::ostringstream os(std::ios::binary);
    save_checkpoint(os, p, a);
    return os.str();
}

}  // namespace

TEST_CASE("parameter counts") {
    Rng rng(1);
    CHECK(init({263, 100, 100, 1}, rng).parameter_count() == 36601);
    CHECK(init({1, 1}, rng).parameter_count() == 2);
    CHECK(init({2104, 140, 140, 16}, rng).parameter_count() == 2104u * 140 + 140 + 140 * 140 + 140 + 140 * 16 + 16);
}

TEST_CASE("initialization is seeded and float representable") {
    Rng a(5), b(5), c(6);
    const NetworkParams pa = init({263, 100, 100, 1}, a);
    CHECK(pa == init({263, 100, 100, 1}, b));
    CHECK_FALSE(pa == init({263, 100, 100, 1}, c));
    for (const auto& layer : pa.layers) {
        CHECK(layer.bias.isZero());
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
            const double w = layer.weight.data()[i];
            CHECK(static_cast<double>(static_cast<float>(w)) == w);
        }
    }
}

TEST_CASE("forward pass hand values") {
    NetworkParams zero = scalar_net(0, 0, 0, 0.75);
    CHECK(scalar_forward(zero, 12.0) == 0.75);

    const NetworkParams net = scalar_net(2, 0, 1, 0);
    CHECK(scalar_forward(net, 3.0) == 6.0);
    CHECK(scalar_forward(net, -3.0) == 0.0);

    // Batch columns are independent samples.
    Matrix x(1, 3);
    x << 3.0, -3.0, 0.5;
    const Matrix y = forward(net, x);
    CHECK(y(0, 0) == 6.0);
    CHECK(y(0, 1) == 0.0);
    CHECK(y(0, 2) == 1.0);
}

TEST_CASE("backward pass hand values") {
    const NetworkParams net = scalar_net(2, 0, 1, 0);
    ForwardCache cache;
    forward(net, Matrix(Matrix::Constant(1, 1, 3.0)), &cache);
    const Gradients g = backward(net, cache, Matrix::Ones(1, 1));
    CHECK(g.layers[0].weight(0, 0) == 3.0);
    CHECK(g.layers[0].bias(0) == 1.0);
    CHECK(g.layers[1].weight(0, 0) == 6.0);
    CHECK(g.layers[1].bias(0) == 1.0);

    const Gradients none = backward(net, cache, Matrix::Zero(1, 1));
    CHECK(none.max_abs() == 0.0);

    // Inactive ReLU blocks the first layer.
    forward(net, Matrix(Matrix::Constant(1, 1, -3.0)), &cache);
    const Gradients dead = backward(net, cache, Matrix::Ones(1, 1));
    CHECK(dead.layers[0].weight(0, 0) == 0.0);
    CHECK(dead.layers[1].bias(0) == 1.0);
}

TEST_CASE("batched gradients sum the per-sample gradients") {
    Rng rng(3);
    const NetworkParams p = init({6, 5, 3}, rng);
    Matrix x = Matrix::NullaryExpr(6, 4, [&] { return rng.uniform(-1, 1); });
    ForwardCache cache;
    forward(p, x, &cache);
    const Gradients batch = backward(p, cache, Matrix::Ones(3, 4));
    Gradients sum = Gradients::zeros_like(p);
    for (int k = 0; k < 4; ++k) {
        const Gradients one = backprop(p, x.col(k));
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            sum.layers[l].weight += one.layers[l].weight;
            sum.layers[l].bias += one.layers[l].bias;
        }
    }
    CHECK(max_relative_error(batch, sum, 1e-9) < 1e-12);
}

TEST_CASE("finite differences") {
    SUBCASE("exact on a linear layer") {
        Rng rng(2);
        const NetworkParams p = init({4, 3}, rng);
        const Vector x = Vector::NullaryExpr(4, [&] { return rng.uniform(); });
        const Gradients fd = finite_diff_grad(p, x, 1e-4);
        CHECK(max_relative_error(fd, backprop(p, x), 1e-6) < 1e-9);
    }
    SUBCASE("scalar net derivative") {
        const Gradients fd = finite_diff_grad(scalar_net(2, 0, 1, 0), Vector(Vector::Constant(1, 3.0)), 1e-4);
        CHECK(fd.layers[0].weight(0, 0) == doctest::Approx(3.0).epsilon(1e-8));
    }
    SUBCASE("second-order convergence on a smooth function") {
        auto f = [](double x) { return std::sin(x) * std::exp(0.3 * x); };
        const double exact = std::cos(0.7) * std::exp(0.21) + 0.3 * std::sin(0.7) * std::exp(0.21);
        const double e1 = std::abs(central_difference(f, 0.7, 1e-2) - exact);
        const double e2 = std::abs(central_difference(f, 0.7, 5e-3) - exact);
        CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
    }
    SUBCASE("incremental probe matches the naive full-forward oracle") {
        Rng rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            NetworkParams p = init({7, 6, 5, 2}, rng);
            for (auto& l : p.layers) l.bias = Vector::NullaryExpr(l.bias.size(), [&] { return rng.uniform(-0.1, 0.1); });
            const Vector x = Vector::NullaryExpr(7, [&] { return rng.uniform(); });
            const Gradients fast = finite_diff_grad(p, x, 1e-6);
            const Gradients slow = naive_fd(p, x, 1e-6);
            CHECK(max_relative_error(fast, slow) < 1e-6);
            CHECK(max_relative_error(fast, backprop(p, x)) < 1e-6);
        }
    }
}

TEST_CASE("gradient check over small random nets") {
    const GradCheckReport r = gradient_check({12, 10, 8, 1}, 50, 9);
    CHECK(r.networks == 50);
    CHECK(r.parameters_checked == 50u * (12 * 10 + 10 + 10 * 8 + 8 + 8 + 1));
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("adam update rules") {
    SUBCASE("zero gradient leaves weights") {
        NetworkParams p = scalar_net(0.5, 0.25, -1, 0);
        const NetworkParams before = p;
        AdamState s = AdamState::for_params(p);
        adam_step(p, Gradients::zeros_like(p), s);
        CHECK(p == before);
        CHECK(s.step == 1);
    }
    SUBCASE("first step moves by lr against the gradient sign") {
        NetworkParams p = scalar_net(0, 0, 0, 0);
        AdamState s = AdamState::for_params(p, 1e-3);
        Gradients g = Gradients::zeros_like(p);
        g.layers[0].weight(0, 0) = 0.3;
        g.layers[1].bias(0) = -7.0;
        adam_step(p, g, s);
        CHECK(p.layers[0].weight(0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
        CHECK(p.layers[1].bias(0) == doctest::Approx(1e-3).epsilon(1e-6));
        CHECK(p.layers[0].bias(0) == 0.0);
    }
}

TEST_CASE("adam on a scalar quadratic follows the reference trace") {
    // minimize (w - 5)^2 from w = 0 with a plain double-precision Adam as reference.
    auto run = [](double lr, int steps, std::vector<double>& trace) {
        NetworkParams p;
        p.layer_dims = {1, 1};
        p.layers.resize(1);
        p.layers[0].weight = Matrix::Zero(1, 1);
        p.layers[0].bias = Vector::Zero(1);
        AdamState s = AdamState::for_params(p, lr);
        for (int i = 0; i < steps; ++i) {
            Gradients g = Gradients::zeros_like(p);
            g.layers[0].weight(0, 0) = 2.0 * (p.layers[0].weight(0, 0) - 5.0);
            adam_step(p, g, s);
            trace.push_back(p.layers[0].weight(0, 0));
        }
    };
    auto reference = [](double lr, int steps) {
        std::vector<double> out;
        double w = 0, m = 0, v = 0;
        for (int t = 1; t <= steps; ++t) {
            const double g = 2.0 * (w - 5.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            w -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
            out.push_back(w);
        }
        return out;
    };

    std::vector<double> slow;
    run(1e-3, 2000, slow);
    const auto ref = reference(1e-3, 2000);
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(slow[i] - ref[i]));
    CHECK(worst < 1e-4);
    for (std::size_t i = 1; i < slow.size(); ++i) CHECK(std::abs(slow[i] - 5.0) <= std::abs(slow[i - 1] - 5.0));
    // Each step moves at most about lr, so 2000 steps stay short of the optimum.
    CHECK(slow.back() < 2.0);
    CHECK(slow.back() > 1.5);

    std::vector<double> fast;
    run(1e-2, 2000, fast);
    CHECK(std::abs(fast.back() - 5.0) < 0.5);
}

TEST_CASE("soft update") {
    NetworkParams target = scalar_net(0, 0, 0, 0);
    const NetworkParams online = scalar_net(2, 2, 2, 2);
    NetworkParams t = target;
    soft_update(t, online, 0.0);
    CHECK(t == target);
    soft_update(t, online, 0.5);
    CHECK(t.layers[0].weight(0, 0) == 1.0);
    soft_update(t, online, 1.0);
    CHECK(t == online);
    CHECK_THROWS_AS(soft_update(t, online, 1.5), Error);

    // Distance to the online net never grows.
    Rng rng(4);
    NetworkParams a = init({5, 4, 1}, rng), b = init({5, 4, 1}, rng);
    auto dist = [&] {
        double d = 0;
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            d += (a.layers[l].weight - b.layers[l].weight).squaredNorm() + (a.layers[l].bias - b.layers[l].bias).squaredNorm();
        return d;
    };
    double prev = dist();
    for (int i = 0; i < 50; ++i) {
        soft_update(a, b, 0.005);
        CHECK(dist() <= prev);
        prev = dist();
    }
}

TEST_CASE("masked mean squared error") {
    Matrix pred(1, 2), target(1, 2), mask(1, 2);
    pred << 1, 2;
    target << 0, 0;
    mask << 1, 1;
    const MseResult r = mse(pred, target, mask);
    CHECK(r.loss == 2.5);
    CHECK(r.d_pred(0, 0) == 1.0);
    CHECK(r.d_pred(0, 1) == 2.0);

    mask << 1, 0;
    const MseResult masked = mse(pred, target, mask);
    CHECK(masked.loss == 0.5);
    CHECK(masked.d_pred(0, 1) == 0.0);
}

TEST_CASE("digests track parameter changes") {
    Rng rng(8);
    NetworkParams p = init({4, 3, 1}, rng);
    const auto d = digest(p);
    CHECK(digest(p) == d);
    p.layers[1].bias(0) = 1e-3f;
    CHECK(digest(p) != d);
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(10);
    NetworkParams p = init({263, 100, 100, 1}, rng);
    AdamState s = AdamState::for_params(p, 5e-4);
    Gradients g = Gradients::zeros_like(p);
    for (auto& l : g.layers) l.weight.setConstant(0.01);
    adam_step(p, g, s);
    adam_step(p, g, s);

    const std::string bytes = serialize(p, s);
    std::istringstream is(bytes, std::ios::binary);
    const Checkpoint c = load_checkpoint(is);
    CHECK(c.params == p);
    CHECK(c.adam == s);
    CHECK(serialize(c.params, c.adam) == bytes);
    CHECK(bytes.substr(0, 4) == "SQN1");
}

TEST_CASE("malformed checkpoints are rejected") {
    Rng rng(11);
    const NetworkParams p = init({6, 4, 1}, rng);
    const std::string bytes = serialize(p, AdamState::for_params(p));
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        std::istringstream is(bytes.substr(0, cut), std::ios::binary);
        CHECK_THROWS_AS(load_checkpoint(is), CheckpointError);
    }
    std::istringstream trailing(bytes + "x", std::ios::binary);
    CHECK_THROWS_AS(load_checkpoint(trailing), CheckpointError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream magic(bad, std::ios::binary);
    CHECK_THROWS_AS(load_checkpoint(magic), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(std::string("/nonexistent/ckpt.sqn")), CheckpointError);
}
