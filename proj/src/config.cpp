#include "covi/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace covi {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': not a nonnegative integer: '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
    char buf[40];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

template <typename E>
struct EnumNames {
    std::vector<std::pair<E, std::string>> names;

    E parse(const std::string& key, const std::string& v) const {
        for (auto& [e, n] : names)
            if (n == v) return e;
        std::string allowed;
        for (auto& [e, n] : names) allowed += (allowed.empty() ? "" : "|") + n;
        throw ConfigError("config key '" + key + "': expected " + allowed + ", got '" + v + "'");
    }
    std::string name(E e) const {
        for (auto& [x, n] : names)
            if (x == e) return n;
        return "?";
    }
};

const EnumNames<UpdateMode> kUpdateModes{{{UpdateMode::kPerLoss, "per_loss"}, {UpdateMode::kSummed, "summed"}}};
const EnumNames<LamPMode> kLamPModes{{{LamPMode::kFixed, "fixed"}, {LamPMode::kAdaptive, "adaptive"}}};
const EnumNames<LrSchedule> kSchedules{{{LrSchedule::kConstant, "constant"}, {LrSchedule::kAnnealed, "annealed"}}};
const EnumNames<EmpRelaxation> kRelaxations{
    {{EmpRelaxation::kExpectedEntropy, "expected_entropy"}, {EmpRelaxation::kExpectedRatio, "expected_ratio"},
     {EmpRelaxation::kTargetMatching, "target_matching"}}};

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field size_field(T TrainConfig::*member) {
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                c.*member = static_cast<T>(parse_uint(k, v));
            },
            [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double TrainConfig::*member) {
    return {[member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
            [member](const TrainConfig& c) { return fmt_double(c.*member); }};
}

Field string_field(std::string TrainConfig::*member) {
    return {[member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; },
            [member](const TrainConfig& c) { return c.*member; }};
}

template <typename E>
Field enum_field(E TrainConfig::*member, const EnumNames<E>& names) {
    return {[member, &names](TrainConfig& c, const std::string& k, const std::string& v) {
                c.*member = names.parse(k, v);
            },
            [member, &names](const TrainConfig& c) { return names.name(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"generator", string_field(&TrainConfig::generator)},
        {"n_per_domain", size_field(&TrainConfig::n_per_domain)},
        {"rotation_deg", double_field(&TrainConfig::rotation_deg)},
        {"noise_std", double_field(&TrainConfig::noise_std)},
        {"n_classes", size_field(&TrainConfig::n_classes)},
        {"input_dim", size_field(&TrainConfig::input_dim)},
        {"shift", double_field(&TrainConfig::shift)},
        {"standardize",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { c.standardize = parse_bool(k, v); },
          [](const TrainConfig& c) { return std::string(c.standardize ? "true" : "false"); }}},
        {"hidden", size_field(&TrainConfig::hidden)},
        {"feat_dim", size_field(&TrainConfig::feat_dim)},
        {"emp_hidden", size_field(&TrainConfig::emp_hidden)},
        {"emp_layers", size_field(&TrainConfig::emp_layers)},
        {"batch_size", size_field(&TrainConfig::batch_size)},
        {"warmup_epochs", size_field(&TrainConfig::warmup_epochs)},
        {"covi_epochs", size_field(&TrainConfig::covi_epochs)},
        {"lr", double_field(&TrainConfig::lr)},
        {"lr_phi", double_field(&TrainConfig::lr_phi)},
        {"momentum", double_field(&TrainConfig::momentum)},
        {"lr_schedule", enum_field(&TrainConfig::lr_schedule, kSchedules)},
        {"update_mode", enum_field(&TrainConfig::update_mode, kUpdateModes)},
        {"emp_relaxation", enum_field(&TrainConfig::emp_relaxation, kRelaxations)},
        {"omega", double_field(&TrainConfig::omega)},
        {"alpha", double_field(&TrainConfig::alpha)},
        {"beta", double_field(&TrainConfig::beta)},
        {"lam_p", double_field(&TrainConfig::lam_p)},
        {"lam_p_mode", enum_field(&TrainConfig::lam_p_mode, kLamPModes)},
        {"space_sd", double_field(&TrainConfig::space_sd)},
        {"space_td", double_field(&TrainConfig::space_td)},
        {"w_emp", double_field(&TrainConfig::w_emp)},
        {"w_ct", double_field(&TrainConfig::w_ct)},
        {"w_cs", double_field(&TrainConfig::w_cs)},
        {"seed", size_field(&TrainConfig::seed)},
        {"out_dir", string_field(&TrainConfig::out_dir)},
        {"checkpoint_every", size_field(&TrainConfig::checkpoint_every)},
        {"resume_from", string_field(&TrainConfig::resume_from)},
        {"checkpoint", string_field(&TrainConfig::checkpoint)},
        {"checkpoint_before", string_field(&TrainConfig::checkpoint_before)},
        {"sweep_samples", size_field(&TrainConfig::sweep_samples)},
    };
    return table;
}

const Field& field(const std::string& key) {
    for (const auto& [k, f] : fields())
        if (k == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

} // namespace

const std::vector<std::string>& TrainConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [k, f] : fields()) out.push_back(k);
        return out;
    }();
    return names;
}

void TrainConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string TrainConfig::get(const std::string& key) const { return field(key).get(*this); }

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
    if (generator != "two_moons" && generator != "blobs") fail("generator must be two_moons or blobs");
    if (n_per_domain < 4) fail("n_per_domain must be at least 4");
    if (noise_std < 0.0) fail("noise_std must be nonnegative");
    if (generator == "blobs" && (n_classes < 2 || input_dim < 2)) fail("blobs need n_classes >= 2 and input_dim >= 2");
    if (hidden == 0 || feat_dim == 0 || emp_hidden == 0 || emp_layers == 0) fail("layer sizes must be positive");
    if (batch_size == 0 || batch_size > n_per_domain) fail("batch_size must be in [1, n_per_domain]");
    if (warmup_epochs == 0) fail("warmup_epochs must be at least 1");
    if (sweep_samples == 0 || sweep_samples > n_per_domain) fail("sweep_samples must be in [1, n_per_domain]");
    if (!(lr > 0.0) || !(lr_phi > 0.0)) fail("learning rates must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
    if (!(omega > 0.0 && omega < 0.5)) fail("omega must be in (0, 0.5)");
    if (!(alpha > 0.0) || !(beta > 0.0)) fail("alpha and beta must be positive");
    if (!(lam_p >= 0.0 && lam_p <= 0.5)) fail("lam_p must be in [0, 0.5]");
    if (!(space_sd >= 0.0 && space_td <= 1.0 && space_sd < space_td)) fail("need 0 <= space_sd < space_td <= 1");
    if (w_emp < 0.0 || w_ct < 0.0 || w_cs < 0.0) fail("loss weights must be nonnegative");
    if (out_dir.empty()) fail("out_dir must not be empty");
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [k, f] : fields()) os << k << " = " << f.get(*this) << '\n';
    return os.str();
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    TrainConfig cfg;
    apply_config_text(cfg, ss.str(), path.string());
    return cfg;
}

} // namespace covi
