#include "fixtures.hpp"
#include "singulation/agent.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace singulation;

namespace {

StatePtr random_state(int w, Rng& rng) {
    auto s = std::make_shared<State>();
    for (int i = 0; i < w; ++i) {
        FeatureVector f;
        for (auto& v : f) v = static_cast<float>(rng.uniform());
        s->features.push_back(f);
    }
    return s;
}

AgentConfig small_cfg(int w = 8) {
    AgentConfig c;
    c.w = w;
    c.split_hidden = {16, 16};
    c.vanilla_hidden = {24, 24};
    c.batch_size = 8;
    c.buffer_capacity = 100;
    return c;
}

void make_constant(nn::NetworkParams& p, double c) {
    for (auto& l : p.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    p.layers.back().bias.setConstant(c);
}

Transition transition(StatePtr s, int u, double r, StatePtr next, bool terminal) {
    return Transition{std::move(s), u, r, std::move(next), terminal};
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("singulation_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("epsilon schedule") {
    const EpsilonSchedule eps;
    CHECK(eps(0) == 0.9);
    CHECK(eps(20000) == 0.25);
    CHECK(eps(40000) == 0.25);
    CHECK(eps(10000) == doctest::Approx(std::sqrt(0.9 * 0.25)).epsilon(1e-12));
    CHECK(eps(10000) == doctest::Approx(0.4743).epsilon(1e-4));
    double prev = eps(0);
    for (std::uint64_t t = 1; t <= 30000; t += 7) {
        CHECK(eps(t) <= prev);
        prev = eps(t);
    }
}

TEST_CASE("argmax prefers the lowest index on ties") {
    CHECK(argmax({1.0, 3.0, 3.0, 2.0}) == 1);
    CHECK(argmax({0.0, 0.0}) == 0);
}

TEST_CASE("replay buffer is a FIFO ring") {
    ReplayBuffer buf(3);
    Rng rng(1);
    const StatePtr s = random_state(1, rng);
    for (int u = 0; u < 5; ++u) buf.push(transition(s, u, 0, s, true));
    CHECK(buf.size() == 3);
    CHECK(buf.inserted() == 5);
    std::multiset<int> actions;
    for (std::size_t i = 0; i < buf.size(); ++i) actions.insert(buf[i].action);
    CHECK(actions == std::multiset<int>{2, 3, 4});
    CHECK(buf.sample(10, rng).size() == 10);
    CHECK_THROWS_AS(ReplayBuffer(0), Error);
}

TEST_CASE("constant networks give constant Q-values") {
    Rng rng(2);
    SplitAgent agent(small_cfg(), 2, rng);
    make_constant(agent.net(0).online, 1.0);
    make_constant(agent.net(1).online, 2.0);
    const StatePtr s = random_state(8, rng);
    const auto q = agent.q_values(*s);
    REQUIRE(q.size() == 16);
    for (int i = 0; i < 8; ++i) {
        CHECK(q[i] == 1.0);
        CHECK(q[8 + i] == 2.0);
    }
    CHECK(agent.greedy_action(*s) == 8);

    make_constant(agent.net(1).online, 1.0);
    CHECK(agent.greedy_action(*s) == 0);
    CHECK_THROWS_AS(agent.q_values(*random_state(4, rng)), Error);
}

TEST_CASE("split maximum equals the brute-force maximum") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        SplitAgent agent(small_cfg(), 2 + trial % 2, rng);
        const StatePtr s = random_state(8, rng);
        double brute = -1e300;
        int brute_u = -1;
        for (int p = 0; p < agent.n_primitives(); ++p) {
            for (int i = 0; i < 8; ++i) {
                const nn::Vector x = Eigen::Map<const Eigen::VectorXf>(s->features[i].data(), kFeatureLength).cast<double>();
                const double v = nn::forward(agent.net(p).online, x)(0);
                if (v > brute) {
                    brute = v;
                    brute_u = p * 8 + i;
                }
            }
        }
        const auto q = agent.q_values(*s);
        CHECK(*std::max_element(q.begin(), q.end()) == brute);
        CHECK(agent.greedy_action(*s) == brute_u);
    }
}

TEST_CASE("transitions are routed to the buffer of their primitive") {
    Rng rng(4);
    SplitAgent agent(small_cfg(), 3, rng);
    const StatePtr s = random_state(8, rng);
    agent.store(transition(s, 3, -1, s, false));
    CHECK(agent.buffer(0).size() == 1);
    CHECK(agent.buffer(1).size() == 0);
    agent.store(transition(s, 8, -1, s, false));
    CHECK(agent.buffer(1).size() == 1);
    agent.store(transition(s, 23, -1, s, false));
    CHECK(agent.buffer(2).size() == 1);
    CHECK(agent.min_buffer_size() == 1);
    CHECK_THROWS_AS(agent.store(transition(s, 24, -1, s, false)), std::out_of_range);
}

TEST_CASE("temporal-difference targets") {
    Rng rng(5);
    AgentConfig cfg = small_cfg();
    SplitAgent agent(cfg, 2, rng);
    make_constant(agent.net(0).target, 2.0);
    make_constant(agent.net(1).target, 1.0);
    const StatePtr s = random_state(8, rng);
    const Transition terminal = transition(s, 0, 10, s, true);
    const Transition ongoing = transition(s, 9, -1, s, false);
    const auto y = agent.td_targets({&terminal, &ongoing});
    CHECK(y[0] == 10.0);
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-12));

    cfg.gamma = 0.0;
    SplitAgent myopic(cfg, 2, rng);
    CHECK(myopic.td_targets({&ongoing})[0] == -1.0);

    // The vanilla agent uses the same rule over its single target network.
    VanillaAgent vanilla(small_cfg(), 2, rng);
    make_constant(vanilla.net().target, 2.0);
    const auto yv = vanilla.td_targets({&terminal, &ongoing});
    CHECK(yv[0] == 10.0);
    CHECK(yv[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("training steps") {
    Rng rng(6);
    AgentConfig cfg = small_cfg();
    SplitAgent agent(cfg, 2, rng);
    const StatePtr s = random_state(8, rng);
    CHECK_FALSE(agent.train_step(0, rng).has_value());

    SUBCASE("a perfect network has zero loss") {
        make_constant(agent.net(0).online, 10.0);
        for (int i = 0; i < cfg.batch_size; ++i) agent.store(transition(s, i % 8, 10, s, true));
        const auto loss = agent.train_step(0, rng);
        REQUIRE(loss.has_value());
        CHECK(*loss == 0.0);
        CHECK(agent.net(0).adam.step == 1);
    }
    SUBCASE("single-sample batch loss") {
        cfg.batch_size = 1;
        SplitAgent one(cfg, 2, rng);
        make_constant(one.net(1).online, 0.5);
        one.store(transition(s, 8, 1.0, s, true));
        CHECK(*one.train_step(8, rng) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("repeated steps fit a fixed target") {
        for (int i = 0; i < 32; ++i) agent.store(transition(s, i % 8, 10, s, true));
        const double first = *agent.train_step(0, rng);
        double last = first;
        for (int i = 0; i < 300; ++i) last = *agent.train_step(0, rng);
        CHECK(last < 0.1 * first);
    }
}

TEST_CASE("training one primitive leaves the others untouched") {
    Rng rng(7);
    SplitAgent agent(small_cfg(), 3, rng);
    for (int i = 0; i < 60; ++i) {
        const StatePtr s = random_state(8, rng), n = random_state(8, rng);
        agent.store(transition(s, rng.integer(0, 23), rng.uniform(-10, 10), n, rng.bernoulli(0.3)));
    }
    for (int step = 0; step < 100; ++step) {
        const int u = rng.integer(0, 23);
        const int p = u / 8;
        std::array<std::uint64_t, 3> before{};
        for (int q = 0; q < 3; ++q) before[q] = agent.primitive_digest(q);
        if (!agent.train_step(u, rng)) continue;
        for (int q = 0; q < 3; ++q) {
            if (q == p)
                CHECK(agent.primitive_digest(q) != before[q]);
            else
                CHECK(agent.primitive_digest(q) == before[q]);
        }
    }
}

TEST_CASE("exploration") {
    Rng rng(8);
    AgentConfig cfg = small_cfg();
    cfg.epsilon = {0.0, 0.0, 1.0};
    SplitAgent greedy(cfg, 2, rng);
    const StatePtr s = random_state(8, rng);
    for (int i = 0; i < 50; ++i) CHECK(greedy.select_action(*s, i, rng) == greedy.greedy_action(*s));

    cfg.epsilon = {1.0, 1.0, 1.0};
    SplitAgent random(cfg, 2, rng);
    std::map<int, int> counts;
    for (int i = 0; i < 3200; ++i) ++counts[random.select_action(*s, i, rng)];
    CHECK(counts.size() == 16);
    for (const auto& [u, n] : counts) CHECK(n > 120);
}

TEST_CASE("warm-started primitive keeps the existing Q-values") {
    Rng rng(9);
    SplitAgent agent(small_cfg(), 2, rng);
    std::vector<std::vector<double>> before;
    std::vector<StatePtr> probes;
    for (int i = 0; i < 10; ++i) {
        probes.push_back(random_state(8, rng));
        before.push_back(agent.q_values(*probes.back()));
    }
    agent.add_primitive(nn::Checkpoint{agent.net(0).online, agent.net(0).adam}, rng);
    CHECK(agent.n_primitives() == 3);
    CHECK(agent.n_actions() == 24);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto q = agent.q_values(*probes[i]);
        REQUIRE(q.size() == 24);
        CHECK(std::equal(before[i].begin(), before[i].end(), q.begin()));
        CHECK(std::equal(q.begin(), q.begin() + 8, q.begin() + 16));  // copy of primitive 0
    }
    agent.add_primitive(std::nullopt, rng);
    CHECK(agent.n_actions() == 32);

    Rng other(1);
    CHECK_THROWS_AS(agent.add_primitive(nn::Checkpoint{nn::init({10, 16, 16, 1}, other), {}}, rng), CheckpointError);
    CHECK_THROWS_AS(agent.add_primitive(nn::Checkpoint{nn::init({263, 16, 16, 2}, other), {}}, rng), CheckpointError);
    CHECK_THROWS_AS(agent.add_primitive(nn::Checkpoint{nn::init({263, 8, 1}, other), {}}, rng), CheckpointError);
}

TEST_CASE("greedy direction follows a rotation of the scene") {
    // The orientation and support-distance entries are pinned so only the
    // heightmap block carries the rotation.
    Rng rng(10);
    SplitAgent agent(small_cfg(), 2, rng);
    const FeatureConfig fcfg;
    auto pinned = [&](const Scene& s) {
        State st = build_state(s, fcfg);
        for (auto& f : st.features)
            for (int j = kRegionFeatures + 2; j < kFeatureLength; ++j) f[j] = 0.5f;
        return st;
    };
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Scene s = fixtures::draw(seed);
        const auto q = agent.q_values(pinned(s));
        for (int k = 1; k < 8; ++k) {
            const auto qr = agent.q_values(pinned(rotate_about_target(s, -k * kTwoPi / 8)));
            for (int p = 0; p < 2; ++p)
                for (int i = 0; i < 8; ++i) CHECK(qr[p * 8 + i] == q[p * 8 + (i + k) % 8]);
            const int u = argmax(q), ur = argmax(qr);
            if (std::count(q.begin(), q.end(), q[u]) == 1) {
                CHECK(ur / 8 == u / 8);
                CHECK(ur % 8 == ((u % 8) - k + 8) % 8);
            }
        }
    }
}

TEST_CASE("vanilla agent shapes") {
    Rng rng(11);
    AgentConfig cfg;
    VanillaAgent agent(cfg, 2, rng);
    CHECK(agent.net().online.input_dim() == 2104);
    CHECK(agent.n_actions() == 16);
    CHECK(agent.net().online.layer_dims == std::vector<int>{2104, 140, 140, 16});

    auto& online = agent.net().online;
    make_constant(online, 0.0);
    for (int u = 0; u < 16; ++u) online.layers.back().bias(u) = 0.1 * u;
    const auto q = agent.q_values(*random_state(8, rng));
    for (int u = 0; u < 16; ++u) CHECK(q[u] == doctest::Approx(0.1 * u));
    CHECK(agent.greedy_action(*random_state(8, rng)) == 15);
}

TEST_CASE("vanilla training only fits the taken action") {
    Rng rng(12);
    AgentConfig cfg = small_cfg(4);
    VanillaAgent agent(cfg, 2, rng);
    const StatePtr s = random_state(4, rng);
    for (int i = 0; i < 20; ++i) agent.store(transition(s, 3, 5.0, s, true));
    const auto before = agent.q_values(*s);
    for (int i = 0; i < 400; ++i) agent.train_step(3, rng);
    const auto after = agent.q_values(*s);
    CHECK(std::abs(after[3] - 5.0) < 0.5);
    CHECK(std::abs(after[3] - 5.0) < std::abs(before[3] - 5.0));
}

TEST_CASE("agent directories round trip") {
    Rng rng(13);
    SplitAgent split(small_cfg(), 2, rng);
    const StatePtr s = random_state(8, rng);
    for (int i = 0; i < 20; ++i) split.store(transition(s, i % 16, -1, s, false));
    split.train_step(0, rng);
    const auto dir = scratch_dir("split");
    split.save(dir.string());
    const SplitAgent back = SplitAgent::load(dir.string());
    CHECK(back.q_values(*s) == split.q_values(*s));
    for (int p = 0; p < 2; ++p) CHECK(back.primitive_digest(p) == split.primitive_digest(p));
    CHECK_THROWS_AS(VanillaAgent::load(dir.string()), CheckpointError);

    VanillaAgent vanilla(small_cfg(), 2, rng);
    const auto vdir = scratch_dir("vanilla");
    vanilla.save(vdir.string());
    CHECK(VanillaAgent::load(vdir.string()).q_values(*s) == vanilla.q_values(*s));
    CHECK_THROWS_AS(SplitAgent::load(scratch_dir("missing").string()), CheckpointError);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(vdir);
}
