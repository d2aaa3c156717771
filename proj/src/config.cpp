#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fde/cli.hpp"

namespace fde {

namespace {

struct Entry {
    std::string value;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

class Reader {
public:
    Reader(std::map<std::string, Entry> entries, std::string source)
        : entries_(std::move(entries)), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const auto it = entries_.find(key);
        std::string where = source_;
        if (it != entries_.end()) where += ":" + std::to_string(it->second.line);
        throw Error(ErrorKind::Config, where + ": field '" + key + "': " + msg);
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const std::string* raw(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        used_.push_back(key);
        return &it->second.value;
    }

    double number(const std::string& key, const std::string& text) const {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
            fail(key, "expected a number, got '" + text + "'");
        return v;
    }

    long integer(const std::string& key, const std::string& text) const {
        char* end = nullptr;
        errno = 0;
        const long v = std::strtol(text.c_str(), &end, 10);
        if (text.empty() || *end != '\0' || errno == ERANGE) fail(key, "expected an integer, got '" + text + "'");
        return v;
    }

    void get(const std::string& key, double& out) {
        if (const auto* s = raw(key)) out = number(key, *s);
    }
    void get(const std::string& key, int& out) {
        if (const auto* s = raw(key)) out = static_cast<int>(integer(key, *s));
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (const auto* s = raw(key)) {
            const long v = integer(key, *s);
            if (v < 0) fail(key, "must be nonnegative");
            out = static_cast<std::uint64_t>(v);
        }
    }
    void get(const std::string& key, bool& out) {
        if (const auto* s = raw(key)) {
            if (*s == "true") out = true;
            else if (*s == "false") out = false;
            else fail(key, "expected true or false, got '" + *s + "'");
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const auto* s = raw(key)) out = *s;
    }
    void get(const std::string& key, std::optional<double>& out) {
        if (const auto* s = raw(key)) out = number(key, *s);
    }
    template <typename T>
    void get_list(const std::string& key, std::optional<std::vector<T>>& out) {
        const auto* s = raw(key);
        if (!s) return;
        out.emplace();
        if (trim(*s).empty()) return;
        for (const auto& item : split(*s, ',')) {
            if constexpr (std::is_same_v<T, int>)
                out->push_back(static_cast<int>(integer(key, item)));
            else
                out->push_back(number(key, item));
        }
    }

    void check_unused() const {
        for (const auto& [key, entry] : entries_)
            if (std::find(used_.begin(), used_.end(), key) == used_.end())
                throw Error(ErrorKind::Config,
                            source_ + ":" + std::to_string(entry.line) + ": field '" + key + "': unknown key");
    }

    const std::string& source() const { return source_; }

private:
    std::map<std::string, Entry> entries_;
    std::string source_;
    std::vector<std::string> used_;
};

std::map<std::string, Entry> read_entries(std::istream& in, const std::string& source) {
    std::map<std::string, Entry> entries;
    std::string line, section;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail("empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail("missing key before '='");
        const std::string full = section.empty() ? key : section + "." + key;
        if (entries.count(full))
            fail("field '" + full + "': duplicate key (first set on line " + std::to_string(entries[full].line) + ")");
        entries[full] = {trim(line.substr(eq + 1)), lineno};
    }
    return entries;
}

} // namespace

const char* to_string(Pipeline p) {
    switch (p) {
    case Pipeline::Stationary: return "stationary";
    case Pipeline::Spectrum: return "spectrum";
    case Pipeline::LinearEvolve: return "linear-evolve";
    case Pipeline::Evolve: return "evolve";
    case Pipeline::Rates: return "rates";
    }
    return "?";
}

std::optional<Pipeline> pipeline_from_string(const std::string& s) {
    for (auto p : {Pipeline::Stationary, Pipeline::Spectrum, Pipeline::LinearEvolve, Pipeline::Evolve, Pipeline::Rates})
        if (s == to_string(p)) return p;
    return std::nullopt;
}

void resolve_exponents(ExperimentConfig& cfg) {
    auto fail = [&](const std::string& msg) { throw Error(ErrorKind::Config, cfg.source + ": " + msg); };
    if (cfg.p_in.has_value() == cfg.m_in.has_value()) fail("give exactly one of exponents.p and exponents.m");
    if (cfg.c_in.has_value() == cfg.T_in.has_value()) fail("give exactly one of exponents.c and exponents.T");
    try {
        if (cfg.p_in)
            cfg.exps = cfg.c_in ? Exponents::from_p_c(*cfg.p_in, *cfg.c_in) : Exponents::from_p_T(*cfg.p_in, *cfg.T_in);
        else
            cfg.exps = cfg.c_in ? Exponents::from_m_c(*cfg.m_in, *cfg.c_in) : Exponents::from_m_T(*cfg.m_in, *cfg.T_in);
        validate(cfg.exps, cfg.domain.geometry == Geometry::Interval ? 1 : cfg.domain.dimension);
        validate(cfg.domain);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(e.what());
    }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
    Reader r(read_entries(in, source), source);
    ExperimentConfig cfg;
    cfg.source = source;

    std::string geometry = "interval";
    r.get("domain.geometry", geometry);
    double length = 1.0, radius = 1.0;
    int dimension = 3, nodes = 256;
    r.get("domain.length", length);
    r.get("domain.radius", radius);
    r.get("domain.dimension", dimension);
    r.get("domain.nodes", nodes);
    if (geometry == "interval") {
        if (r.has("domain.radius")) r.fail("domain.radius", "not used by the interval; set domain.length");
        if (r.has("domain.dimension") && dimension != 1) r.fail("domain.dimension", "the interval has dimension 1");
        cfg.domain = DomainSpec::interval(length, nodes);
    } else if (geometry == "ball") {
        if (r.has("domain.length")) r.fail("domain.length", "not used by the ball; set domain.radius");
        cfg.domain = DomainSpec::ball(dimension, radius, nodes);
    } else {
        r.fail("domain.geometry", "expected interval or ball, got '" + geometry + "'");
    }

    r.get("exponents.p", cfg.p_in);
    r.get("exponents.m", cfg.m_in);
    r.get("exponents.c", cfg.c_in);
    r.get("exponents.T", cfg.T_in);

    r.get("stationary.tol", cfg.stationary.tol);
    r.get("stationary.max_iters", cfg.stationary.max_iters);

    r.get("spectrum.modes", cfg.modes);
    r.get("spectrum.tol", cfg.eigen.tol);
    r.get("spectrum.cluster_tol", cfg.eigen.cluster_tol);
    r.get("spectrum.max_iters", cfg.eigen.max_iters);
    r.get("spectrum.gap_tol", cfg.gap_tol);
    if (cfg.modes < 2) r.fail("spectrum.modes", "need at least 2 eigenpairs");

    r.get("time.dt", cfg.dt.dt);
    r.get("time.dt_max", cfg.dt.dt_max);
    r.get("time.dt_min", cfg.dt.dt_min);
    r.get("time.grow", cfg.dt.grow);
    r.get("time.easy_iters", cfg.dt.easy_iters);
    r.get("time.adaptive", cfg.dt.adaptive);
    r.get("time.horizon", cfg.horizon);
    r.get("time.sample_interval", cfg.sample_interval);
    if (!(cfg.dt.dt > 0)) r.fail("time.dt", "must be positive");
    if (!(cfg.dt.dt_min > 0 && cfg.dt.dt_min <= cfg.dt.dt)) r.fail("time.dt_min", "must lie in (0, time.dt]");
    if (!(cfg.dt.dt_max >= cfg.dt.dt)) r.fail("time.dt_max", "must be at least time.dt");
    if (!(cfg.horizon > 0)) r.fail("time.horizon", "must be positive");
    if (!(cfg.sample_interval > 0)) r.fail("time.sample_interval", "must be positive");

    r.get("flow.calibrate", cfg.calibrate);
    r.get("flow.converge_tol", cfg.converge_tol);

    std::string kind = "modes";
    r.get("initial.kind", kind);
    r.get("initial.factor", cfg.factor);
    std::string modes;
    const bool has_modes = r.has("initial.modes");
    r.get("initial.modes", modes);
    r.get("initial.file", cfg.initial_file);
    if (kind == "stationary") cfg.initial = InitialKind::Stationary;
    else if (kind == "scaled") cfg.initial = InitialKind::Scaled;
    else if (kind == "modes") cfg.initial = InitialKind::Modes;
    else if (kind == "file") cfg.initial = InitialKind::File;
    else r.fail("initial.kind", "expected stationary, scaled, modes or file, got '" + kind + "'");
    if (cfg.initial == InitialKind::File && cfg.initial_file.empty()) r.fail("initial.file", "required for kind = file");
    if (cfg.initial == InitialKind::Scaled && !(cfg.factor > 0)) r.fail("initial.factor", "must be positive");
    if (has_modes) {
        cfg.initial_modes.clear();
        for (const auto& item : split(modes, ',')) {
            const auto parts = split(item, ':');
            if (parts.size() != 3) r.fail("initial.modes", "expected k:j:amplitude entries, got '" + item + "'");
            ModeAmplitude ma;
            ma.k = static_cast<int>(r.integer("initial.modes", parts[0]));
            ma.j = static_cast<int>(r.integer("initial.modes", parts[1]));
            ma.amplitude = r.number("initial.modes", parts[2]);
            if (ma.k < 1 || ma.j < 1) r.fail("initial.modes", "mode indices start at 1");
            if (ma.k > cfg.modes) r.fail("initial.modes", "k = " + std::to_string(ma.k) + " exceeds spectrum.modes");
            cfg.initial_modes.push_back(ma);
        }
    }

    std::string window = "band";
    r.get("rates.window", window);
    EntropyBand band;
    ExplicitWindow ew;
    r.get("rates.band_lo", band.lo);
    r.get("rates.band_hi", band.hi);
    r.get("rates.t_lo", ew.t_lo);
    r.get("rates.t_hi", ew.t_hi);
    r.get("rates.tol", cfg.rate_tol);
    if (window == "band") {
        if (!(band.lo > 0 && band.lo < band.hi)) r.fail("rates.band_lo", "need 0 < band_lo < band_hi");
        cfg.window = band;
    } else if (window == "explicit") {
        if (!(ew.t_lo < ew.t_hi)) r.fail("rates.t_lo", "need t_lo < t_hi");
        cfg.window = ew;
    } else {
        r.fail("rates.window", "expected band or explicit, got '" + window + "'");
    }

    r.get("run.seed", cfg.seed);
    r.get("output.dir", cfg.out_dir);

    r.get_list("sweep.p", cfg.sweep_p);
    r.get_list("sweep.n", cfg.sweep_n);
    r.get_list("sweep.amplitude", cfg.sweep_amplitude);

    r.check_unused();
    resolve_exponents(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, path.string() + ": cannot open config");
    return parse_config(in, path.string());
}

} // namespace fde
