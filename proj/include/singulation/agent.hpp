#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "singulation/env.hpp"
#include "singulation/nn.hpp"

namespace singulation {

struct Transition {
    StatePtr state;
    int action = 0;
    double reward = 0.0;
    StatePtr next_state;
    bool terminal = false;
};

/// FIFO ring of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 20000);

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    /// Uniform sampling with replacement.
    std::vector<const Transition*> sample(std::size_t k, Rng& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t next_ = 0;
    std::uint64_t inserted_ = 0;
};

/// eps(t) = start * (end / start)^(t / horizon), held at `end` afterwards.
struct EpsilonSchedule {
    double start = 0.9;
    double end = 0.25;
    double horizon = 20000.0;

    double operator()(std::uint64_t t) const;
};

struct AgentConfig {
    int w = 8;
    double gamma = 0.9;
    double lr = 1e-3;
    double tau = 0.005;
    int batch_size = 64;
    std::size_t buffer_capacity = 20000;
    std::vector<int> split_hidden{100, 100};
    std::vector<int> vanilla_hidden{140, 140};
    EpsilonSchedule epsilon;
};

/// Lowest index wins ties.
int argmax(const std::vector<double>& q);

/// Common surface of the Q-learning policies driven by the harness.
class QAgent {
public:
    virtual ~QAgent() = default;

    virtual int w() const = 0;
    virtual int n_actions() const = 0;
    virtual std::vector<double> q_values(const State& state) const = 0;
    virtual void store(Transition t) = 0;
    /// One gradient step for the explored action; nullopt when the relevant
    /// buffer holds fewer than batch_size transitions.
    virtual std::optional<double> train_step(int explored_u, Rng& rng) = 0;
    /// Smallest buffer fill, used to drive preloading.
    virtual std::size_t min_buffer_size() const = 0;
    virtual void save(const std::string& dir) const = 0;
    virtual std::string kind() const = 0;

    const AgentConfig& config() const { return cfg_; }

    int greedy_action(const State& state) const { return argmax(q_values(state)); }
    int select_action(const State& state, std::uint64_t t, Rng& rng) const;

protected:
    explicit QAgent(AgentConfig cfg) : cfg_(std::move(cfg)) {}
    AgentConfig cfg_;
};

struct PrimitiveNet {
    nn::NetworkParams online;
    nn::NetworkParams target;
    nn::AdamState adam;
};

/// One value network and one replay buffer per pushing primitive; every
/// network scores the rotated feature vector of its direction.
class SplitAgent : public QAgent {
public:
    SplitAgent(AgentConfig cfg, int n_primitives, Rng& rng);

    int w() const override { return cfg_.w; }
    int n_actions() const override { return n_primitives() * cfg_.w; }
    int n_primitives() const { return static_cast<int>(nets_.size()); }

    std::vector<double> q_values(const State& state) const override;
    void store(Transition t) override;
    std::optional<double> train_step(int explored_u, Rng& rng) override;
    std::size_t min_buffer_size() const override;
    void save(const std::string& dir) const override;
    std::string kind() const override { return "split"; }

    /// y_k = r_k for terminal transitions, else r_k + gamma * max_u Q^-(x_next, u).
    std::vector<double> td_targets(const std::vector<const Transition*>& batch) const;

    /// Appends a primitive, optionally warm-started from a checkpoint.
    void add_primitive(const std::optional<nn::Checkpoint>& pretrained, Rng& rng);

    const PrimitiveNet& net(int p) const { return nets_.at(static_cast<std::size_t>(p)); }
    PrimitiveNet& net(int p) { return nets_.at(static_cast<std::size_t>(p)); }
    const ReplayBuffer& buffer(int p) const { return buffers_.at(static_cast<std::size_t>(p)); }

    /// Digest of a primitive's online, target and optimizer state.
    std::uint64_t primitive_digest(int p) const;

    static SplitAgent load(const std::string& dir);

private:
    SplitAgent(AgentConfig cfg) : QAgent(std::move(cfg)) {}
    std::vector<int> net_dims() const;

    std::vector<PrimitiveNet> nets_;
    std::vector<ReplayBuffer> buffers_;
};

/// Single network over the concatenated state [f_0 | ... | f_{w-1}] with
/// one output per action.
class VanillaAgent : public QAgent {
public:
    VanillaAgent(AgentConfig cfg, int n_primitives, Rng& rng);

    int w() const override { return cfg_.w; }
    int n_actions() const override { return net_.online.output_dim(); }
    std::vector<double> q_values(const State& state) const override;
    void store(Transition t) override;
    std::optional<double> train_step(int explored_u, Rng& rng) override;
    std::size_t min_buffer_size() const override { return buffer_.size(); }
    void save(const std::string& dir) const override;
    std::string kind() const override { return "vanilla"; }

    std::vector<double> td_targets(const std::vector<const Transition*>& batch) const;

    const PrimitiveNet& net() const { return net_; }
    PrimitiveNet& net() { return net_; }
    const ReplayBuffer& buffer() const { return buffer_; }

    static VanillaAgent load(const std::string& dir);

private:
    VanillaAgent(AgentConfig cfg) : QAgent(std::move(cfg)) {}

    PrimitiveNet net_;
    ReplayBuffer buffer_;
};

/// Feature columns, as doubles, for a batch of (state, orientation) pairs.
nn::Matrix feature_columns(const std::vector<std::pair<const State*, int>>& items);
nn::Vector concatenated_state(const State& state);

}  // namespace singulation
