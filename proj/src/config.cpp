#include "singulation/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace singulation {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

Vec3 to_vec3(const std::string& key, const std::string& v) {
    const auto parts = split_list(v);
    if (parts.size() != 3) throw ConfigError("config: " + key + " expects three comma-separated numbers");
    return {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& p : split_list(v)) out.push_back(static_cast<int>(to_int(key, p)));
    if (out.empty()) throw ConfigError("config: " + key + " expects a comma-separated list");
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define NUM_FIELD(expr)                                                                               \
    Field {                                                                                           \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_double(k, v); },   \
            [](const RunConfig& c) { return num(c.expr); }                                            \
    }
#define INT_FIELD(expr, type)                                                                                    \
    Field {                                                                                                      \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = static_cast<type>(to_int(k, v)); }, \
            [](const RunConfig& c) { return std::to_string(c.expr); }                                            \
    }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table{
        {"w",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              const int w = static_cast<int>(to_int(k, v));
              c.env.w = w;
              c.env.feature_cfg.w = w;
              c.train.agent.w = w;
          },
          [](const RunConfig& c) { return std::to_string(c.env.w); }}},
        {"push_distance", NUM_FIELD(env.push_distance)},
        {"epsilon_offset", NUM_FIELD(env.epsilon_offset)},
        {"d_sing", NUM_FIELD(env.d_sing)},
        {"t_max", INT_FIELD(env.t_max, int)},
        {"alpha", NUM_FIELD(env.alpha)},
        {"extra_primitive_enabled",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.env.extra_primitive_enabled = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.env.extra_primitive_enabled ? "true" : "false"); }}},
        {"extra_penalty", NUM_FIELD(env.extra_penalty)},
        {"finger_radius", NUM_FIELD(env.finger_radius)},
        {"reset_retries", INT_FIELD(env.reset_retries, int)},
        {"grid_n", INT_FIELD(env.feature_cfg.grid_n, int)},
        {"cell_size", NUM_FIELD(env.feature_cfg.cell_size)},
        {"cells_per_region", INT_FIELD(env.feature_cfg.cells_per_region, int)},
        {"z_max", NUM_FIELD(env.feature_cfg.z_max)},
        {"b_max", NUM_FIELD(env.feature_cfg.b_max)},
        {"sd_max", NUM_FIELD(env.feature_cfg.sd_max)},
        {"n_obstacles_min", INT_FIELD(env.scene_cfg.n_obstacles_min, int)},
        {"n_obstacles_max", INT_FIELD(env.scene_cfg.n_obstacles_max, int)},
        {"box_min",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.env.scene_cfg.box_min = to_vec3(k, v); },
          [](const RunConfig& c) {
              const auto& b = c.env.scene_cfg.box_min;
              return num(b.x()) + "," + num(b.y()) + "," + num(b.z());
          }}},
        {"box_max",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.env.scene_cfg.box_max = to_vec3(k, v); },
          [](const RunConfig& c) {
              const auto& b = c.env.scene_cfg.box_max;
              return num(b.x()) + "," + num(b.y()) + "," + num(b.z());
          }}},
        {"equal_height_prob", NUM_FIELD(env.scene_cfg.equal_height_prob)},
        {"workspace_half", NUM_FIELD(env.scene_cfg.workspace_half)},
        {"target_center_spread", NUM_FIELD(env.scene_cfg.target_center_spread)},
        {"substep", NUM_FIELD(env.physics.substep)},
        {"max_resolution_iterations", INT_FIELD(env.physics.max_resolution_iterations, int)},
        {"rest_overlap_tolerance", NUM_FIELD(env.physics.rest_overlap_tolerance)},
        {"episodes", INT_FIELD(train.episodes, int)},
        {"epoch_train_episodes", INT_FIELD(train.epoch_train_episodes, int)},
        {"epoch_test_episodes", INT_FIELD(train.epoch_test_episodes, int)},
        {"preload", INT_FIELD(train.preload, int)},
        {"seed", INT_FIELD(train.seed, std::uint64_t)},
        {"batch_size", INT_FIELD(train.agent.batch_size, int)},
        {"gamma", NUM_FIELD(train.agent.gamma)},
        {"lr", NUM_FIELD(train.agent.lr)},
        {"tau", NUM_FIELD(train.agent.tau)},
        {"buffer_capacity", INT_FIELD(train.agent.buffer_capacity, std::size_t)},
        {"eps_start", NUM_FIELD(train.agent.epsilon.start)},
        {"eps_end", NUM_FIELD(train.agent.epsilon.end)},
        {"eps_horizon", NUM_FIELD(train.agent.epsilon.horizon)},
        {"split_hidden",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.agent.split_hidden = to_int_list(k, v); },
          [](const RunConfig& c) { return list(c.train.agent.split_hidden); }}},
        {"vanilla_hidden",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.agent.vanilla_hidden = to_int_list(k, v); },
          [](const RunConfig& c) { return list(c.train.agent.vanilla_hidden); }}},
    };
    return table;
}

#undef NUM_FIELD
#undef INT_FIELD

}  // namespace

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = fields();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(cfg, key, value);
}

RunConfig parse_config(std::istream& is, RunConfig base) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
        apply_config_key(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.env.validate();
    base.train.validate();
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    return parse_config(is, std::move(base));
}

std::string canonical_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + "=" + field.get(cfg) + "\n";
    return out;
}

std::string config_digest(const RunConfig& cfg) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : canonical_config(cfg)) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

RunConfig toy_config() {
    RunConfig c;
    apply_config_key(c, "w", "4");
    c.env.scene_cfg.n_obstacles_min = 3;
    c.env.scene_cfg.n_obstacles_max = 4;
    c.train.episodes = 300;
    return c;
}

RunConfig toy_complex_config() {
    RunConfig c = toy_config();
    c.env.scene_cfg.n_obstacles_max = 6;
    c.env.scene_cfg.equal_height_prob = 0.2;
    return c;
}

}  // namespace singulation
