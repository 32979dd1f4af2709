#include "singulation/agent.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace singulation {

namespace fs = std::filesystem;

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error("replay: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
    ++inserted_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
    std::vector<const Transition*> out;
    if (data_.empty()) return out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(&data_[rng.below(data_.size())]);
    return out;
}

double EpsilonSchedule::operator()(std::uint64_t t) const {
    if (static_cast<double>(t) >= horizon) return end;
    return start * std::pow(end / start, static_cast<double>(t) / horizon);
}

int argmax(const std::vector<double>& q) {
    return static_cast<int>(std::distance(q.begin(), std::max_element(q.begin(), q.end())));
}

int QAgent::select_action(const State& state, std::uint64_t t, Rng& rng) const {
    if (rng.uniform() < cfg_.epsilon(t)) return static_cast<int>(rng.below(static_cast<std::uint64_t>(n_actions())));
    return greedy_action(state);
}

nn::Matrix feature_columns(const std::vector<std::pair<const State*, int>>& items) {
    nn::Matrix x(kFeatureLength, static_cast<Eigen::Index>(items.size()));
    for (std::size_t k = 0; k < items.size(); ++k) {
        const FeatureVector& f = items[k].first->features.at(static_cast<std::size_t>(items[k].second));
        for (int j = 0; j < kFeatureLength; ++j) x(j, static_cast<Eigen::Index>(k)) = f[j];
    }
    return x;
}

nn::Vector concatenated_state(const State& state) {
    nn::Vector x(static_cast<Eigen::Index>(state.features.size()) * kFeatureLength);
    Eigen::Index k = 0;
    for (const auto& f : state.features)
        for (float v : f) x(k++) = v;
    return x;
}

namespace {

void write_manifest(const std::string& dir, const nlohmann::json& manifest) {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw CheckpointError("agent: cannot write manifest in " + dir);
    os << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw CheckpointError("agent: missing manifest in " + dir);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("agent: bad manifest: ") + e.what());
    }
}

nlohmann::json config_json(const AgentConfig& c) {
    return {{"w", c.w},
            {"gamma", c.gamma},
            {"lr", c.lr},
            {"tau", c.tau},
            {"batch_size", c.batch_size},
            {"buffer_capacity", c.buffer_capacity},
            {"split_hidden", c.split_hidden},
            {"vanilla_hidden", c.vanilla_hidden},
            {"epsilon", {{"start", c.epsilon.start}, {"end", c.epsilon.end}, {"horizon", c.epsilon.horizon}}}};
}

AgentConfig config_from_json(const nlohmann::json& j) {
    AgentConfig c;
    c.w = j.at("w").get<int>();
    c.gamma = j.at("gamma").get<double>();
    c.lr = j.at("lr").get<double>();
    c.tau = j.at("tau").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
    c.split_hidden = j.at("split_hidden").get<std::vector<int>>();
    c.vanilla_hidden = j.at("vanilla_hidden").get<std::vector<int>>();
    c.epsilon.start = j.at("epsilon").at("start").get<double>();
    c.epsilon.end = j.at("epsilon").at("end").get<double>();
    c.epsilon.horizon = j.at("epsilon").at("horizon").get<double>();
    return c;
}

void save_net(const std::string& dir, const std::string& stem, const PrimitiveNet& n) {
    nn::save_checkpoint((fs::path(dir) / (stem + "_online.sqn")).string(), n.online, n.adam);
    nn::save_checkpoint((fs::path(dir) / (stem + "_target.sqn")).string(), n.target, nn::AdamState::for_params(n.target));
}

PrimitiveNet load_net(const std::string& dir, const std::string& stem) {
    auto online = nn::load_checkpoint((fs::path(dir) / (stem + "_online.sqn")).string());
    auto target = nn::load_checkpoint((fs::path(dir) / (stem + "_target.sqn")).string());
    if (online.params.layer_dims != target.params.layer_dims)
        throw CheckpointError("agent: online/target shape mismatch for " + stem);
    return {std::move(online.params), std::move(target.params), std::move(online.adam)};
}

PrimitiveNet fresh_net(const std::vector<int>& dims, double lr, Rng& rng) {
    PrimitiveNet n;
    n.online = nn::init(dims, rng);
    n.target = n.online;
    n.adam = nn::AdamState::for_params(n.online, lr);
    return n;
}

std::string primitive_stem(int p) { return std::string("primitive_") + std::to_string(p); }

}  // namespace

// --- SplitAgent -----------------------------------------------------------

SplitAgent::SplitAgent(AgentConfig cfg, int n_primitives, Rng& rng) : QAgent(std::move(cfg)) {
    if (cfg_.w < 1 || n_primitives < 1) throw Error("agent: invalid split agent shape");
    for (int p = 0; p < n_primitives; ++p) add_primitive(std::nullopt, rng);
}

std::vector<int> SplitAgent::net_dims() const {
    std::vector<int> dims{kFeatureLength};
    dims.insert(dims.end(), cfg_.split_hidden.begin(), cfg_.split_hidden.end());
    dims.push_back(1);
    return dims;
}

std::vector<double> SplitAgent::q_values(const State& state) const {
    if (state.w() != cfg_.w) throw Error("agent: state orientation count mismatch");
    std::vector<std::pair<const State*, int>> items;
    for (int i = 0; i < cfg_.w; ++i) items.emplace_back(&state, i);
    const nn::Matrix x = feature_columns(items);
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(n_actions()));
    for (const auto& n : nets_) {
        const nn::Matrix out = nn::forward(n.online, x);
        for (int i = 0; i < cfg_.w; ++i) q.push_back(out(0, i));
    }
    return q;
}

void SplitAgent::store(Transition t) {
    const int p = t.action / cfg_.w;
    if (t.action < 0 || p >= n_primitives()) throw std::out_of_range("agent: action outside action space");
    buffers_[static_cast<std::size_t>(p)].push(std::move(t));
}

std::size_t SplitAgent::min_buffer_size() const {
    std::size_t m = SIZE_MAX;
    for (const auto& b : buffers_) m = std::min(m, b.size());
    return m;
}

std::vector<double> SplitAgent::td_targets(const std::vector<const Transition*>& batch) const {
    std::vector<double> y(batch.size());
    std::vector<std::pair<const State*, int>> items;
    std::vector<std::size_t> owners;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        y[k] = batch[k]->reward;
        if (batch[k]->terminal) continue;
        owners.push_back(k);
        for (int i = 0; i < cfg_.w; ++i) items.emplace_back(batch[k]->next_state.get(), i);
    }
    if (owners.empty()) return y;

    const nn::Matrix x = feature_columns(items);
    std::vector<double> best(owners.size(), -kInfiniteDistance);
    for (const auto& n : nets_) {
        const nn::Matrix out = nn::forward(n.target, x);
        for (std::size_t o = 0; o < owners.size(); ++o)
            for (int i = 0; i < cfg_.w; ++i)
                best[o] = std::max(best[o], out(0, static_cast<Eigen::Index>(o * cfg_.w + i)));
    }
    for (std::size_t o = 0; o < owners.size(); ++o) y[owners[o]] += cfg_.gamma * best[o];
    return y;
}

std::optional<double> SplitAgent::train_step(int explored_u, Rng& rng) {
    const int p = explored_u / cfg_.w;
    if (explored_u < 0 || p >= n_primitives()) throw std::out_of_range("agent: action outside action space");
    const ReplayBuffer& buf = buffers_[static_cast<std::size_t>(p)];
    const auto k = static_cast<std::size_t>(cfg_.batch_size);
    if (buf.size() < k) return std::nullopt;

    const auto batch = buf.sample(k, rng);
    const std::vector<double> y = td_targets(batch);

    std::vector<std::pair<const State*, int>> items;
    for (const auto* t : batch) items.emplace_back(t->state.get(), t->action % cfg_.w);
    const nn::Matrix x = feature_columns(items);

    PrimitiveNet& net = nets_[static_cast<std::size_t>(p)];
    nn::ForwardCache cache;
    const nn::Matrix pred = nn::forward(net.online, x, &cache);
    const nn::Matrix target = Eigen::Map<const nn::Matrix>(y.data(), 1, static_cast<Eigen::Index>(y.size()));
    const auto loss = nn::mse(pred, target, nn::Matrix::Ones(1, pred.cols()));
    const nn::Gradients g = nn::backward(net.online, cache, loss.d_pred);
    nn::adam_step(net.online, g, net.adam);
    nn::soft_update(net.target, net.online, cfg_.tau);
    return loss.loss;
}

void SplitAgent::add_primitive(const std::optional<nn::Checkpoint>& pretrained, Rng& rng) {
    const auto dims = net_dims();
    if (pretrained) {
        const auto& got = pretrained->params.layer_dims;
        if (got.front() != kFeatureLength || got.back() != 1)
            throw CheckpointError("agent: pretrained network must map 263 features to one value");
        if (got != dims) throw CheckpointError("agent: pretrained hidden layers differ from the agent's");
        PrimitiveNet n{pretrained->params, pretrained->params, pretrained->adam};
        nets_.push_back(std::move(n));
    } else {
        nets_.push_back(fresh_net(dims, cfg_.lr, rng));
    }
    buffers_.emplace_back(cfg_.buffer_capacity);
}

std::uint64_t SplitAgent::primitive_digest(int p) const {
    const auto& n = net(p);
    std::uint64_t h = nn::digest(n.online);
    h = h * 31 + nn::digest(n.target);
    h = h * 31 + nn::digest(n.adam);
    return h;
}

void SplitAgent::save(const std::string& dir) const {
    nlohmann::json names = nlohmann::json::array();
    for (int p = 0; p < n_primitives(); ++p) names.push_back(primitive_name(static_cast<Primitive>(std::min(p, 2))));
    write_manifest(dir, {{"kind", kind()}, {"config", config_json(cfg_)}, {"primitives", names}});
    for (int p = 0; p < n_primitives(); ++p) save_net(dir, primitive_stem(p), nets_[static_cast<std::size_t>(p)]);
}

SplitAgent SplitAgent::load(const std::string& dir) {
    const auto m = read_manifest(dir);
    if (m.value("kind", "") != "split") throw CheckpointError("agent: " + dir + " is not a split agent");
    SplitAgent a(config_from_json(m.at("config")));
    const auto n = m.at("primitives").size();
    for (std::size_t p = 0; p < n; ++p) {
        PrimitiveNet net = load_net(dir, primitive_stem(static_cast<int>(p)));
        if (net.online.layer_dims != a.net_dims()) throw CheckpointError("agent: primitive network shape mismatch");
        a.nets_.push_back(std::move(net));
        a.buffers_.emplace_back(a.cfg_.buffer_capacity);
    }
    return a;
}

// --- VanillaAgent ---------------------------------------------------------

VanillaAgent::VanillaAgent(AgentConfig cfg, int n_primitives, Rng& rng)
    : QAgent(std::move(cfg)), buffer_(cfg_.buffer_capacity) {
    std::vector<int> dims{cfg_.w * kFeatureLength};
    dims.insert(dims.end(), cfg_.vanilla_hidden.begin(), cfg_.vanilla_hidden.end());
    dims.push_back(n_primitives * cfg_.w);
    net_ = fresh_net(dims, cfg_.lr, rng);
}

std::vector<double> VanillaAgent::q_values(const State& state) const {
    if (state.w() != cfg_.w) throw Error("agent: state orientation count mismatch");
    const nn::Vector out = nn::forward(net_.online, concatenated_state(state));
    return {out.data(), out.data() + out.size()};
}

void VanillaAgent::store(Transition t) {
    if (t.action < 0 || t.action >= n_actions()) throw std::out_of_range("agent: action outside action space");
    buffer_.push(std::move(t));
}

std::vector<double> VanillaAgent::td_targets(const std::vector<const Transition*>& batch) const {
    std::vector<double> y(batch.size());
    std::vector<std::size_t> owners;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        y[k] = batch[k]->reward;
        if (!batch[k]->terminal) owners.push_back(k);
    }
    if (owners.empty()) return y;
    nn::Matrix x(net_.target.input_dim(), static_cast<Eigen::Index>(owners.size()));
    for (std::size_t o = 0; o < owners.size(); ++o)
        x.col(static_cast<Eigen::Index>(o)) = concatenated_state(*batch[owners[o]]->next_state);
    const nn::Matrix q = nn::forward(net_.target, x);
    for (std::size_t o = 0; o < owners.size(); ++o)
        y[owners[o]] += cfg_.gamma * q.col(static_cast<Eigen::Index>(o)).maxCoeff();
    return y;
}

std::optional<double> VanillaAgent::train_step(int /*explored_u*/, Rng& rng) {
    const auto k = static_cast<std::size_t>(cfg_.batch_size);
    if (buffer_.size() < k) return std::nullopt;
    const auto batch = buffer_.sample(k, rng);
    const std::vector<double> y = td_targets(batch);

    const Eigen::Index in = net_.online.input_dim();
    nn::Matrix x(in, static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) x.col(static_cast<Eigen::Index>(i)) = concatenated_state(*batch[i]->state);

    nn::ForwardCache cache;
    const nn::Matrix pred = nn::forward(net_.online, x, &cache);
    nn::Matrix target = pred;
    nn::Matrix mask = nn::Matrix::Zero(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < k; ++i) {
        target(batch[i]->action, static_cast<Eigen::Index>(i)) = y[i];
        mask(batch[i]->action, static_cast<Eigen::Index>(i)) = 1.0;
    }
    const auto loss = nn::mse(pred, target, mask);
    const nn::Gradients g = nn::backward(net_.online, cache, loss.d_pred);
    nn::adam_step(net_.online, g, net_.adam);
    nn::soft_update(net_.target, net_.online, cfg_.tau);
    return loss.loss;
}

void VanillaAgent::save(const std::string& dir) const {
    write_manifest(dir, {{"kind", kind()}, {"config", config_json(cfg_)}, {"n_actions", n_actions()}});
    save_net(dir, "vanilla", net_);
}

VanillaAgent VanillaAgent::load(const std::string& dir) {
    const auto m = read_manifest(dir);
    if (m.value("kind", "") != "vanilla") throw CheckpointError("agent: " + dir + " is not a vanilla agent");
    VanillaAgent a(config_from_json(m.at("config")));
    a.buffer_ = ReplayBuffer(a.cfg_.buffer_capacity);
    a.net_ = load_net(dir, "vanilla");
    if (a.net_.online.input_dim() != a.cfg_.w * kFeatureLength)
        throw CheckpointError("agent: vanilla network input does not match w");
    return a;
}

}  // namespace singulation
