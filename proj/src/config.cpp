#include "crowdseed/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "crowdseed/image_io.hpp"

namespace crowdseed {

void PipelineConfig::validate() const {
    adaseem.validate();
    localizer.validate();
    loss.validate();
    fit.validate();
    refine.validate();
    sim.validate();
    scene.validate();
    if (jobs < 1) throw Error(ErrorCode::ValidationError, "jobs must be >= 1");
    if (timeout_s < 1) throw Error(ErrorCode::ValidationError, "timeout_s must be >= 1");
    if (backend.empty()) throw Error(ErrorCode::ValidationError, "backend must not be empty");
    if (appearance.bins < 2 || appearance.bins > 256) {
        throw Error(ErrorCode::ValidationError, "appearance.bins must lie in [2, 256]");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
}

}  // namespace

TomlTable parse_toml(const std::string& text, const std::string& source) {
    TomlTable table;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    const auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        // strip a comment that is not inside a string
        bool in_str = false;
        std::string line;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const char c = raw[i];
            if (c == '"' && (i == 0 || raw[i - 1] != '\\')) in_str = !in_str;
            if (c == '#' && !in_str) break;
            line += c;
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!bare_key(section)) fail("invalid section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!bare_key(key)) fail("invalid key '" + key + "'");
        if (val.empty()) fail("missing value for '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.count(full)) fail("duplicate key '" + full + "'");

        TomlValue v;
        v.line = line_no;
        if (val.front() == '"') {
            if (val.size() < 2 || val.back() != '"') fail("unterminated string");
            std::string out;
            for (std::size_t i = 1; i + 1 < val.size(); ++i) {
                char c = val[i];
                if (c == '\\') {
                    if (i + 2 >= val.size()) fail("dangling escape");
                    const char e = val[++i];
                    switch (e) {
                        case 'n': c = '\n'; break;
                        case 't': c = '\t'; break;
                        case '"': c = '"'; break;
                        case '\\': c = '\\'; break;
                        default: fail(std::string("unsupported escape \\") + e);
                    }
                } else if (c == '"') {
                    fail("unexpected quote inside string");
                }
                out += c;
            }
            v.kind = TomlValue::Kind::String;
            v.text = out;
        } else if (val == "true" || val == "false") {
            v.kind = TomlValue::Kind::Bool;
            v.text = val;
        } else {
            std::string num;
            for (char c : val) {
                if (c != '_') num += c;
            }
            const bool is_float = num.find_first_of(".eE") != std::string::npos || num == "inf" ||
                                  num == "+inf" || num == "-inf" || num == "nan";
            if (is_float) {
                double d = 0.0;
                const char* b = num.data() + (num.front() == '+' ? 1 : 0);
                const auto [p, ec] = std::from_chars(b, num.data() + num.size(), d);
                if (ec != std::errc() || p != num.data() + num.size()) fail("invalid number '" + val + "'");
                v.kind = TomlValue::Kind::Float;
            } else {
                long long i = 0;
                const char* b = num.data() + (num.front() == '+' ? 1 : 0);
                const auto [p, ec] = std::from_chars(b, num.data() + num.size(), i);
                if (ec != std::errc() || p != num.data() + num.size()) {
                    unsigned long long u = 0;
                    const auto [pu, ecu] = std::from_chars(b, num.data() + num.size(), u);
                    if (ecu != std::errc() || pu != num.data() + num.size()) fail("invalid value '" + val + "'");
                }
                v.kind = TomlValue::Kind::Integer;
            }
            v.text = num.front() == '+' ? num.substr(1) : num;
        }
        table[full] = v;
    }
    return table;
}

namespace {

enum class FieldKind { Int, UInt, Float, Bool, String };

struct Field {
    std::string key;
    FieldKind kind;
    std::function<void(PipelineConfig&, const TomlValue&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

std::string fmt_double(double d) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
    std::string s(buf, p);
    if (s.find_first_of(".eni") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

template <typename T>
Field int_field(std::string key, T PipelineConfig::*sub, int T::*m) {
    return {key, FieldKind::Int,
            [sub, m](PipelineConfig& c, const TomlValue& v) { (c.*sub).*m = static_cast<int>(std::stoll(v.text)); },
            [sub, m](const PipelineConfig& c) { return std::to_string((c.*sub).*m); }};
}
template <typename T>
Field u64_field(std::string key, T PipelineConfig::*sub, std::uint64_t T::*m) {
    return {key, FieldKind::UInt, [sub, m](PipelineConfig& c, const TomlValue& v) { (c.*sub).*m = std::stoull(v.text); },
            [sub, m](const PipelineConfig& c) { return std::to_string((c.*sub).*m); }};
}
template <typename T>
Field dbl_field(std::string key, T PipelineConfig::*sub, double T::*m) {
    return {key, FieldKind::Float, [sub, m](PipelineConfig& c, const TomlValue& v) { (c.*sub).*m = std::stod(v.text); },
            [sub, m](const PipelineConfig& c) { return fmt_double((c.*sub).*m); }};
}
template <typename T>
Field bool_field(std::string key, T PipelineConfig::*sub, bool T::*m) {
    return {key, FieldKind::Bool, [sub, m](PipelineConfig& c, const TomlValue& v) { (c.*sub).*m = v.text == "true"; },
            [sub, m](const PipelineConfig& c) { return std::string((c.*sub).*m ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    using P = PipelineConfig;
    static const std::vector<Field> all = [] {
        std::vector<Field> f;
        f.push_back({"backend", FieldKind::String, [](P& c, const TomlValue& v) { c.backend = v.text; },
                     [](const P& c) { return quote(c.backend); }});
        f.push_back({"seed", FieldKind::UInt, [](P& c, const TomlValue& v) { c.seed = std::stoull(v.text); },
                     [](const P& c) { return std::to_string(c.seed); }});
        f.push_back({"jobs", FieldKind::Int, [](P& c, const TomlValue& v) { c.jobs = static_cast<int>(std::stoll(v.text)); },
                     [](const P& c) { return std::to_string(c.jobs); }});
        f.push_back({"output", FieldKind::String, [](P& c, const TomlValue& v) { c.output = v.text; },
                     [](const P& c) { return quote(c.output); }});
        f.push_back({"appearance_prior", FieldKind::Bool,
                     [](P& c, const TomlValue& v) { c.appearance_prior = v.text == "true"; },
                     [](const P& c) { return std::string(c.appearance_prior ? "true" : "false"); }});
        f.push_back({"timeout_s", FieldKind::Int,
                     [](P& c, const TomlValue& v) { c.timeout_s = static_cast<int>(std::stoll(v.text)); },
                     [](const P& c) { return std::to_string(c.timeout_s); }});

        f.push_back(dbl_field("adaseem.tau", &P::adaseem, &AdaSeemConfig::tau));
        f.push_back(int_field("adaseem.s_initial", &P::adaseem, &AdaSeemConfig::s_initial));
        f.push_back(int_field("adaseem.s_min", &P::adaseem, &AdaSeemConfig::s_min));
        f.push_back(int_field("adaseem.zoom_factor", &P::adaseem, &AdaSeemConfig::zoom_factor));
        f.push_back(dbl_field("adaseem.nms_iou", &P::adaseem, &AdaSeemConfig::nms_iou));
        f.push_back(int_field("adaseem.resegment_side", &P::adaseem, &AdaSeemConfig::resegment_side));
        f.push_back(int_field("adaseem.tile_jobs", &P::adaseem, &AdaSeemConfig::tile_jobs));

        f.push_back(int_field("localizer.k", &P::localizer, &LocalizerConfig::k));
        f.push_back(int_field("localizer.em_max_iters", &P::localizer, &LocalizerConfig::em_max_iters));
        f.push_back(dbl_field("localizer.em_tol", &P::localizer, &LocalizerConfig::em_tol));
        f.push_back(dbl_field("localizer.cov_floor", &P::localizer, &LocalizerConfig::cov_floor));

        f.push_back(dbl_field("loss.omega", &P::loss, &LossConfig::omega));
        f.push_back(dbl_field("loss.beta", &P::loss, &LossConfig::beta));
        f.push_back(dbl_field("loss.epsilon", &P::loss, &LossConfig::epsilon));
        f.push_back({"loss.kernel_mode", FieldKind::String,
                     [](P& c, const TomlValue& v) { c.loss.kernel = parse_kernel_mode(v.text); },
                     [](const P& c) { return quote(to_string(c.loss.kernel)); }});

        f.push_back(dbl_field("fit.lr", &P::fit, &FitOptions::lr));
        f.push_back(int_field("fit.steps", &P::fit, &FitOptions::steps));
        f.push_back(dbl_field("fit.init_density", &P::fit, &FitOptions::init_density));
        f.push_back(bool_field("fit.monotone", &P::fit, &FitOptions::monotone));
        f.push_back(dbl_field("fit.min_lr", &P::fit, &FitOptions::min_lr));
        f.push_back(dbl_field("fit.mass_tol", &P::fit, &FitOptions::mass_tol));

        f.push_back(int_field("refine.iterations", &P::refine, &RefineConfig::iterations));
        f.push_back(dbl_field("refine.peak_threshold", &P::refine, &RefineConfig::peak_threshold));
        f.push_back(dbl_field("refine.nms_iou", &P::refine, &RefineConfig::nms_iou));
        f.push_back(int_field("refine.max_in_flight", &P::refine, &RefineConfig::max_in_flight));

        f.push_back(int_field("appearance.bins", &P::appearance, &AppearanceConfig::bins));
        f.push_back(dbl_field("appearance.min_fill", &P::appearance, &AppearanceConfig::min_fill));
        f.push_back(dbl_field("appearance.box_fraction", &P::appearance, &AppearanceConfig::box_fraction));
        f.push_back(dbl_field("appearance.suppress_fraction", &P::appearance, &AppearanceConfig::suppress_fraction));
        f.push_back(dbl_field("appearance.spike", &P::appearance, &AppearanceConfig::spike));
        f.push_back(dbl_field("appearance.fallback_height", &P::appearance, &AppearanceConfig::fallback_height));

        f.push_back(dbl_field("sim.h50", &P::sim, &SimSegmenterConfig::h50));
        f.push_back(dbl_field("sim.slope", &P::sim, &SimSegmenterConfig::slope));
        f.push_back(dbl_field("sim.jitter", &P::sim, &SimSegmenterConfig::jitter));
        f.push_back(bool_field("sim.prompt_override", &P::sim, &SimSegmenterConfig::prompt_override));
        f.push_back(u64_field("sim.seed", &P::sim, &SimSegmenterConfig::seed));
        f.push_back(int_field("sim.clutter_cell", &P::sim, &SimSegmenterConfig::clutter_cell));
        f.push_back(int_field("sim.clutter_halo", &P::sim, &SimSegmenterConfig::clutter_halo));
        f.push_back(dbl_field("sim.visible_fraction", &P::sim, &SimSegmenterConfig::visible_fraction));

        f.push_back(int_field("scene.width", &P::scene, &SceneConfig::width));
        f.push_back(int_field("scene.height", &P::scene, &SceneConfig::height));
        f.push_back(int_field("scene.count", &P::scene, &SceneConfig::count));
        f.push_back(dbl_field("scene.h_max", &P::scene, &SceneConfig::h_max));
        f.push_back(dbl_field("scene.h_min", &P::scene, &SceneConfig::h_min));
        f.push_back(bool_field("scene.ramp", &P::scene, &SceneConfig::ramp));
        f.push_back(dbl_field("scene.size_exponent", &P::scene, &SceneConfig::size_exponent));
        f.push_back(dbl_field("scene.max_overlap", &P::scene, &SceneConfig::max_overlap));
        f.push_back(int_field("scene.max_attempts", &P::scene, &SceneConfig::max_attempts));
        f.push_back(u64_field("scene.seed", &P::scene, &SceneConfig::seed));
        return f;
    }();
    return all;
}

const char* kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::Int: return "an integer";
        case FieldKind::UInt: return "a non-negative integer";
        case FieldKind::Float: return "a number";
        case FieldKind::Bool: return "a boolean";
        case FieldKind::String: return "a string";
    }
    return "?";
}

bool accepts(FieldKind f, const TomlValue& v) {
    switch (f) {
        case FieldKind::Int: return v.kind == TomlValue::Kind::Integer;
        case FieldKind::UInt: return v.kind == TomlValue::Kind::Integer && v.text.front() != '-';
        case FieldKind::Float: return v.kind == TomlValue::Kind::Float || v.kind == TomlValue::Kind::Integer;
        case FieldKind::Bool: return v.kind == TomlValue::Kind::Bool;
        case FieldKind::String: return v.kind == TomlValue::Kind::String;
    }
    return false;
}

}  // namespace

PipelineConfig config_from_toml(const std::string& text, const std::string& source) {
    const TomlTable table = parse_toml(text, source);
    PipelineConfig cfg;
    const auto at_line = [&](int line, const std::string& msg) {
        return Error(ErrorCode::ValidationError, source + ":" + std::to_string(line) + ": " + msg);
    };
    for (const auto& [key, value] : table) {
        const auto& fs = fields();
        auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
        if (it == fs.end()) throw at_line(value.line, "unknown key '" + key + "'");
        if (!accepts(it->kind, value)) throw at_line(value.line, key + " must be " + kind_name(it->kind));
        try {
            it->set(cfg, value);
        } catch (const Error& e) {
            throw at_line(value.line, e.message());
        } catch (const std::out_of_range&) {
            throw at_line(value.line, key + " is out of range");
        }
    }
    try {
        cfg.validate();
    } catch (const Error& e) {
        const std::string msg = e.message();
        const std::string key = msg.substr(0, msg.find(' '));
        auto it = table.find(key);
        if (it != table.end()) throw at_line(it->second.line, msg);
        throw Error(ErrorCode::ValidationError, source + ": " + msg);
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    return config_from_toml(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string dump_config(const PipelineConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const auto dot = f.key.find('.');
        const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
        const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
        if (sec != section) {
            out += "\n[" + sec + "]\n";
            section = sec;
        }
        out += name + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace crowdseed
