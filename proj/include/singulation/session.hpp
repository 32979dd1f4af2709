#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "singulation/config.hpp"

namespace singulation {

/// One human-policy episode driven by single-line JSON messages:
///
///   server -> client  SessionStart, StateUpdate, EpisodeEnd, Error
///   client -> server  ActionChoice {"type":"ActionChoice","u":<int>}
///
/// The session is transport independent; serve_session() carries it over
/// WebSocket text frames.
class Session {
public:
    /// `out_dir` receives human_episodes.csv and the Human row of
    /// metrics.csv when non-empty.
    Session(RunConfig cfg, std::uint64_t episode_seed, std::string out_dir = {});

    /// Opening messages: SessionStart followed by the first StateUpdate.
    std::vector<std::string> open();

    /// Replies to one inbound line.
    std::vector<std::string> handle(const std::string& line);

    /// Client went away; an unfinished episode is discarded.
    void disconnect();

    bool finished() const { return finished_; }
    const EpisodeState& episode() const { return ep_; }

private:
    nlohmann::json state_update() const;
    void record_episode(TerminalKind terminal);

    RunConfig cfg_;
    std::uint64_t seed_;
    std::string out_dir_;
    EpisodeState ep_;
    std::optional<double> last_reward_;
    double total_reward_ = 0.0;
    bool finished_ = false;
};

nlohmann::json error_message(const std::string& what);

/// Appends one Human episode and refreshes the Human row of metrics.csv.
void append_human_episode(const std::string& out_dir, const EpisodeRecord& rec);

struct ServeOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8765;
    std::uint64_t seed = 0;
    std::string out_dir;
    int max_sessions = -1;  // < 0: run forever
    std::function<void(unsigned short)> on_listening;
    std::function<void(const std::string&)> log;
};

/// WebSocket server, one session at a time; each connection plays one
/// episode with scene seed mix_seed(seed, connection index).
void serve_session(const RunConfig& cfg, const ServeOptions& opts);

}  // namespace singulation
