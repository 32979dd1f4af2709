#include "singulation/session.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace singulation {

namespace fs = std::filesystem;

nlohmann::json error_message(const std::string& what) { return {{"type", "Error"}, {"message", what}}; }

Session::Session(RunConfig cfg, std::uint64_t episode_seed, std::string out_dir)
    : cfg_(std::move(cfg)), seed_(episode_seed), out_dir_(std::move(out_dir)) {
    Rng rng(seed_);
    ep_ = reset(cfg_.env, rng);
}

nlohmann::json Session::state_update() const {
    const Heightmap h = rasterize_heightmap(ep_.scene, 0.0, cfg_.env.feature_cfg);
    const auto z = region_features(h, cfg_.env.feature_cfg);
    nlohmann::json cells = nlohmann::json::array();
    for (double v : z) cells.push_back(std::round(v * 100.0) / 100.0);
    const double d = min_obstacle_distance(ep_.scene);
    return {{"type", "StateUpdate"},
            {"t", ep_.t},
            {"last_reward", last_reward_ ? nlohmann::json(*last_reward_) : nlohmann::json(nullptr)},
            {"legal_actions", cfg_.env.n_actions()},
            {"w", cfg_.env.w},
            {"min_dist", std::isfinite(d) ? nlohmann::json(d) : nlohmann::json(nullptr)},
            {"scene", to_json(ep_.scene)},
            {"heightmap", {{"regions", kRegionCount}, {"z", cells}}}};
}

std::vector<std::string> Session::open() {
    nlohmann::json primitives = nlohmann::json::array();
    for (int p = 0; p < cfg_.env.n_primitives(); ++p) primitives.push_back(primitive_name(static_cast<Primitive>(p)));
    const nlohmann::json start{{"type", "SessionStart"},
                               {"config_digest", config_digest(cfg_)},
                               {"w", cfg_.env.w},
                               {"n_actions", cfg_.env.n_actions()},
                               {"primitives", primitives},
                               {"t_max", cfg_.env.t_max},
                               {"episode_seed", seed_}};
    return {start.dump(), state_update().dump()};
}

std::vector<std::string> Session::handle(const std::string& line) {
    if (finished_) return {error_message("episode finished").dump()};
    nlohmann::json msg;
    try {
        msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        return {error_message("malformed JSON").dump()};
    }
    if (!msg.is_object() || msg.value("type", "") != "ActionChoice")
        return {error_message("expected ActionChoice").dump()};
    const auto u_it = msg.find("u");
    if (u_it == msg.end() || !u_it->is_number_integer()) return {error_message("ActionChoice.u must be an integer").dump()};
    const auto u = u_it->get<long long>();
    if (u < 0 || u >= cfg_.env.n_actions())
        return {error_message("action " + std::to_string(u) + " outside [0, " + std::to_string(cfg_.env.n_actions()) + ")")
                    .dump()};

    const StepResult r = step(ep_, static_cast<int>(u), cfg_.env);
    last_reward_ = r.reward;
    total_reward_ += r.reward;
    if (!ep_.done) return {state_update().dump()};

    finished_ = true;
    record_episode(r.terminal);
    const nlohmann::json end{{"type", "EpisodeEnd"},
                             {"terminal", terminal_name(r.terminal)},
                             {"t", ep_.t},
                             {"last_reward", r.reward},
                             {"total_reward", total_reward_},
                             {"actions", ep_.t},
                             {"scene", to_json(ep_.scene)}};
    return {end.dump()};
}

void Session::disconnect() {
    // Unfinished episodes never reach the metrics.
    finished_ = true;
}

void Session::record_episode(TerminalKind terminal) {
    if (out_dir_.empty()) return;
    EpisodeRecord rec;
    rec.scene_seed = seed_;
    rec.terminal = terminal;
    rec.success = terminal == TerminalKind::Singulated;
    rec.actions = ep_.t;
    rec.total_reward = total_reward_;
    append_human_episode(out_dir_, rec);
}

void append_human_episode(const std::string& out_dir, const EpisodeRecord& rec) {
    fs::create_directories(out_dir);
    const fs::path episodes = fs::path(out_dir) / "human_episodes.csv";
    const bool fresh = !fs::exists(episodes);
    {
        std::ofstream os(episodes, std::ios::app);
        if (fresh) os << "scene_seed,success,actions,total_reward,terminal\n";
        os << rec.scene_seed << ',' << (rec.success ? 1 : 0) << ',' << rec.actions << ',' << rec.total_reward << ','
           << terminal_name(rec.terminal) << '\n';
    }

    std::vector<EpisodeRecord> all;
    {
        std::ifstream is(episodes);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            std::stringstream ss(line);
            std::string seed, success, actions, reward, terminal;
            std::getline(ss, seed, ',');
            std::getline(ss, success, ',');
            std::getline(ss, actions, ',');
            std::getline(ss, reward, ',');
            std::getline(ss, terminal, ',');
            EpisodeRecord r;
            r.scene_seed = std::stoull(seed);
            r.success = success == "1";
            r.actions = std::stoi(actions);
            r.total_reward = std::stod(reward);
            all.push_back(r);
        }
    }

    const fs::path metrics = fs::path(out_dir) / "metrics.csv";
    std::vector<std::string> kept;
    if (fs::exists(metrics)) {
        std::ifstream is(metrics);
        std::string line;
        while (std::getline(is, line))
            if (!line.starts_with("Human,") && !line.starts_with("policy,")) kept.push_back(line);
    }
    std::ofstream os(metrics, std::ios::trunc);
    write_metrics_csv(os, {});
    for (const auto& l : kept) os << l << '\n';
    write_metrics_csv(os, {{"Human", aggregate(all)}}, false);
}

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

}  // namespace

void serve_session(const RunConfig& cfg, const ServeOptions& opts) {
    asio::io_context ioc;
    tcp::acceptor acceptor(ioc, {asio::ip::make_address(opts.address), opts.port});
    if (opts.on_listening) opts.on_listening(acceptor.local_endpoint().port());
    auto log = [&](const std::string& s) {
        if (opts.log) opts.log(s);
    };

    for (int index = 0; opts.max_sessions < 0 || index < opts.max_sessions; ++index) {
        tcp::socket socket(ioc);
        acceptor.accept(socket);
        Session session(cfg, mix_seed(opts.seed, static_cast<std::uint64_t>(index)), opts.out_dir);
        try {
            websocket::stream<tcp::socket> ws(std::move(socket));
            ws.accept();
            ws.text(true);
            for (const auto& m : session.open()) ws.write(asio::buffer(m));
            while (!session.finished()) {
                beast::flat_buffer buffer;
                ws.read(buffer);
                std::stringstream lines(beast::buffers_to_string(buffer.data()));
                std::string line;
                while (std::getline(lines, line)) {
                    if (line.empty()) continue;
                    for (const auto& reply : session.handle(line)) ws.write(asio::buffer(reply));
                    if (session.finished()) break;
                }
            }
            ws.close(websocket::close_code::normal);
            log("session " + std::to_string(index) + " finished");
        } catch (const beast::system_error& e) {
            session.disconnect();
            log("session " + std::to_string(index) + " dropped: " + e.code().message());
        }
    }
}

}  // namespace singulation
