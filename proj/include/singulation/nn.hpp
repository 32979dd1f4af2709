#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "singulation/common.hpp"

namespace singulation::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out

    bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Fully connected network: ReLU on hidden layers, linear output.
/// Parameters are held in double precision but always take float32
/// representable values, so checkpoints round-trip exactly.
struct NetworkParams {
    std::vector<int> layer_dims;
    std::vector<Layer> layers;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t parameter_count() const;
    bool operator==(const NetworkParams&) const = default;
};

/// Partial derivatives shaped like NetworkParams.
struct Gradients {
    std::vector<Layer> layers;

    static Gradients zeros_like(const NetworkParams& p);
    double max_abs() const;
};

struct AdamState {
    std::vector<Layer> m;
    std::vector<Layer> v;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const NetworkParams& p, double lr = 1e-3);
    bool operator==(const AdamState&) const = default;
};

/// Per-layer inputs and pre-activations of a batch (columns are samples).
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
};

NetworkParams init(const std::vector<int>& layer_dims, Rng& rng);

Matrix forward(const NetworkParams& params, const Matrix& x, ForwardCache* cache = nullptr);
Vector forward(const NetworkParams& params, const Vector& x, ForwardCache* cache = nullptr);

/// Reverse-mode gradients of sum(d_out .* output), summed over the batch.
Gradients backward(const NetworkParams& params, const ForwardCache& cache, const Matrix& d_out);

/// Central-difference gradient of d_out . forward(x) for a single input.
/// Where a +-h probe changes a ReLU's active set the one-sided difference
/// from the unaffected side is used (the network is piecewise linear).
Gradients finite_diff_grad(const NetworkParams& params, const Vector& x, double h, const Vector& d_out);
Gradients finite_diff_grad(const NetworkParams& params, const Vector& x, double h);

/// Plain central difference of a scalar function.
double central_difference(const std::function<double(double)>& f, double x, double h);

/// max |a - b| / max(|a|, |b|, floor) over all parameters.
double max_relative_error(const Gradients& a, const Gradients& b, double floor = 1e-6);

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state);

void soft_update(NetworkParams& target, const NetworkParams& online, double tau);

/// Masked squared error averaged over batch columns, and its gradient
/// w.r.t. the predictions. Only entries with mask 1 contribute.
struct MseResult {
    double loss;
    Matrix d_pred;
};
MseResult mse(const Matrix& pred, const Matrix& target, const Matrix& mask);

/// FNV-1a over the raw bytes of every parameter, for equality tracking.
std::uint64_t digest(const NetworkParams& params);
std::uint64_t digest(const AdamState& state);

struct Checkpoint {
    NetworkParams params;
    AdamState adam;
};

void save_checkpoint(std::ostream& os, const NetworkParams& params, const AdamState& adam);
void save_checkpoint(const std::string& path, const NetworkParams& params, const AdamState& adam);
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::string& path);

struct GradCheckReport {
    double max_relative_error = 0.0;
    int networks = 0;
    std::size_t parameters_checked = 0;
};

/// Backprop vs finite differences over `n_nets` random nets of the given shape.
GradCheckReport gradient_check(const std::vector<int>& layer_dims, int n_nets, std::uint64_t seed, double h = 1e-4);

}  // namespace singulation::nn
