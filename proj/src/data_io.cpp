#include "geoqhd/data_io.hpp"

#include "geoqhd/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

namespace geoqhd {

using nlohmann::ordered_json;

// ---------------------------------------------------------------- panels

DatasetMode parse_dataset_mode(const std::string& name) {
    if (name == "cut") return DatasetMode::Cut;
    if (name == "uncut") return DatasetMode::Uncut;
    throw ConfigError("dataset mode '" + name + "' is not one of cut, uncut");
}

std::string to_string(DatasetMode mode) {
    return mode == DatasetMode::Cut ? "cut" : "uncut";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && s[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

}  // namespace

PricePanel parse_panel(const std::string& csv_text, DatasetMode mode) {
    std::istringstream in(csv_text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) {
        throw DataError("panel: empty file");
    }
    for (auto& h : header) h = trim(h);
    if (header.size() < 3) {
        throw DataError("panel: need a timestamp column and at least 2 assets, got " +
                        std::to_string(header.size() - 1) + " asset column(s)");
    }
    const std::size_t p = header.size() - 1;
    for (std::size_t a = 1; a <= p; ++a) {
        if (header[a].empty()) {
            throw DataError("panel: asset column " + std::to_string(a + 1) + " has an empty name");
        }
        for (std::size_t b = 1; b < a; ++b) {
            if (header[a] == header[b]) throw DataError("panel: duplicate asset column '" + header[a] + "'");
        }
    }

    std::vector<std::string> stamps;
    std::vector<std::vector<double>> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("panel: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        stamps.push_back(trim(fields[0]));
        std::vector<double> row(p, kMissing);
        for (std::size_t a = 0; a < p; ++a) {
            const std::string cell = trim(fields[a + 1]);
            if (is_missing_token(cell)) continue;
            const auto v = parse_double(cell);
            if (!v || !std::isfinite(*v)) {
                throw DataError("panel: unparseable cell '" + cell + "' at line " + std::to_string(line_no) +
                                ", column '" + header[a + 1] + "'");
            }
            row[a] = *v;
        }
        cells.push_back(std::move(row));
    }

    // timestamps compare numerically when every one is a number
    bool numeric = true;
    std::vector<double> keys;
    for (const auto& s : stamps) {
        const auto v = parse_double(s);
        if (!v) {
            numeric = false;
            break;
        }
        keys.push_back(*v);
    }
    for (std::size_t r = 1; r < stamps.size(); ++r) {
        const bool increasing = numeric ? keys[r] > keys[r - 1] : stamps[r] > stamps[r - 1];
        if (!increasing) {
            throw DataError("panel: timestamps not strictly increasing at '" + stamps[r] + "' (after '" +
                            stamps[r - 1] + "')");
        }
    }

    PricePanel out;
    out.report.mode = mode;
    out.report.rows_read = stamps.size();
    out.report.assets.resize(p);
    for (std::size_t a = 0; a < p; ++a) {
        out.report.assets[a].id = header[a + 1];
        for (const auto& row : cells) {
            if (is_missing(row[a])) ++out.report.assets[a].missing;
        }
    }

    std::vector<std::size_t> kept;
    if (mode == DatasetMode::Cut) {
        for (std::size_t r = 0; r < cells.size(); ++r) {
            if (std::none_of(cells[r].begin(), cells[r].end(), [](double v) { return is_missing(v); })) {
                kept.push_back(r);
            }
        }
    } else {
        std::vector<double> last(p, kMissing);
        for (std::size_t r = 0; r < cells.size(); ++r) {
            bool complete = true;
            std::vector<std::size_t> filled_here;
            for (std::size_t a = 0; a < p; ++a) {
                if (is_missing(cells[r][a])) {
                    if (is_missing(last[a])) {
                        complete = false;
                    } else {
                        cells[r][a] = last[a];
                        filled_here.push_back(a);
                    }
                } else {
                    last[a] = cells[r][a];
                }
            }
            if (complete) {
                kept.push_back(r);
                for (const std::size_t a : filled_here) ++out.report.assets[a].filled;
            }
        }
    }
    out.report.rows_kept = kept.size();
    out.report.rows_dropped = stamps.size() - kept.size();

    out.prices.values.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t a = 0; a < p; ++a) {
            out.prices.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = cells[kept[i]][a];
        }
        out.prices.timestamps.push_back(stamps[kept[i]]);
    }
    out.prices.variable_ids.assign(header.begin() + 1, header.end());
    return out;
}

PricePanel load_panel(const std::filesystem::path& path, DatasetMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("panel: cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_panel(ss.str(), mode);
}

// ---------------------------------------------------------------- config

namespace {

std::string scale_name(DistanceScale s) {
    return s == DistanceScale::Standardized ? "standardized" : "raw";
}

std::string mode_name(AccumulationMode m) {
    return m == AccumulationMode::PerTimestamp ? "per_timestamp" : "trailing";
}

std::string base_name(QhdBase b) {
    return b == QhdBase::GStatistic ? "G" : "J";
}

ordered_json nan_as_null(double v) {
    return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v);
}

ordered_json scenario_to_json(const ChangeScenario& s) {
    ordered_json j;
    j["p"] = s.p;
    j["n"] = s.n;
    ordered_json sigma = ordered_json::array();
    for (Eigen::Index r = 0; r < s.pre_sigma.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < s.pre_sigma.cols(); ++c) row.push_back(s.pre_sigma(r, c));
        sigma.push_back(row);
    }
    j["pre_sigma"] = sigma;
    j["block_size"] = s.block_size;
    j["block_correlation"] = s.block_correlation;
    j["rotation_period"] = s.rotation_period;
    j["hub_set"] = s.hub_set;
    j["post_correlation"] = s.post_correlation;
    j["hub_degree"] = s.hub_degree;
    j["spoke_correlation"] = nan_as_null(s.spoke_correlation);
    j["change_time"] = s.change_time;
    j["horizon"] = s.horizon;
    return j;
}

/// Typed access to a merged config document with dotted-path error messages.
class Reader {
public:
    Reader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {}

    [[nodiscard]] const ordered_json& at(const std::string& key) const { return j_.at(key); }
    [[nodiscard]] std::string where(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    [[nodiscard]] Reader child(const std::string& key) const {
        if (!at(key).is_object()) throw ConfigError(where(key) + " must be an object");
        return {at(key), where(key)};
    }

    [[nodiscard]] double number(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_number()) throw ConfigError(where(key) + "=" + v.dump() + " must be a number");
        return v.get<double>();
    }
    [[nodiscard]] double number_or_nan(const std::string& key) const {
        return at(key).is_null() ? std::numeric_limits<double>::quiet_NaN() : number(key);
    }
    [[nodiscard]] std::size_t count(const std::string& key) const {
        return checked_count(at(key), where(key));
    }
    [[nodiscard]] bool flag(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + "=" + v.dump() + " must be true or false");
        return v.get<bool>();
    }
    [[nodiscard]] std::string text(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_string()) throw ConfigError(where(key) + "=" + v.dump() + " must be a string");
        return v.get<std::string>();
    }
    [[nodiscard]] const ordered_json& array(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_array()) throw ConfigError(where(key) + " must be an array");
        return v;
    }

    static std::size_t checked_count(const ordered_json& v, const std::string& where) {
        if (v.is_number_unsigned()) return v.get<std::size_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0.0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::size_t>(d);
        }
        throw ConfigError(where + "=" + v.dump() + " must be a nonnegative integer");
    }

private:
    const ordered_json& j_;
    std::string path_;
};

/// Copies `src` into `dst`, rejecting keys that `dst` does not already have.
/// Arrays and scalars replace wholesale; objects merge recursively.
void merge_known(ordered_json& dst, const ordered_json& src, const std::string& path) {
    if (!src.is_object()) {
        throw ConfigError((path.empty() ? std::string("config") : path) + " must be an object");
    }
    for (const auto& [key, value] : src.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!dst.contains(key)) {
            throw ConfigError("unknown config key '" + where + "'");
        }
        auto& slot = dst[key];
        if (slot.is_object()) {
            merge_known(slot, value, where);
        } else {
            slot = value;
        }
    }
}

void apply_row(ordered_json& doc, const std::string& row) {
    const GridPoint g = parse_table_row(row);
    doc["j_magnitude"] = g.j_magnitude;
    doc["detector"]["A"] = g.A;
    doc["detector"]["A_v"] = g.A;
    doc["weights"]["theta1"] = g.theta;
    doc["weights"]["theta2"] = 1.0 - g.theta;
    doc["weights"]["gamma1"] = 1.0 - g.gamma;
    doc["weights"]["gamma2"] = g.gamma;
    doc["K"] = g.K;
    doc["dmd"]["phi"] = g.phi;
}

ordered_json parse_override_value(const std::string& raw) {
    try {
        return ordered_json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        return ordered_json(raw);
    }
}

void apply_override(ordered_json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must have the form key=value");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const ordered_json value = parse_override_value(trim(assignment.substr(eq + 1)));
    if (key == "row") {
        if (!value.is_string()) throw ConfigError("row override must be a string");
        apply_row(doc, value.get<std::string>());
        return;
    }
    ordered_json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) {
            throw ConfigError("unknown config key '" + key + "' in override");
        }
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) {
        merge_known(*node, value, key);
    } else {
        *node = value;
    }
}

ChangeScenario scenario_from(const Reader& r) {
    ChangeScenario s;
    s.p = r.count("p");
    s.n = static_cast<int>(r.count("n"));
    const auto& sigma = r.array("pre_sigma");
    if (!sigma.empty()) {
        s.pre_sigma.resize(static_cast<Eigen::Index>(sigma.size()), static_cast<Eigen::Index>(sigma.size()));
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            if (!sigma[i].is_array() || sigma[i].size() != sigma.size()) {
                throw ConfigError(r.where("pre_sigma") + " must be a square array of arrays");
            }
            for (std::size_t j = 0; j < sigma.size(); ++j) {
                if (!sigma[i][j].is_number()) throw ConfigError(r.where("pre_sigma") + " entries must be numbers");
                s.pre_sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma[i][j].get<double>();
            }
        }
    }
    s.block_size = r.count("block_size");
    s.block_correlation = r.number("block_correlation");
    s.rotation_period = r.count("rotation_period");
    s.hub_set.clear();
    for (const auto& h : r.array("hub_set")) s.hub_set.push_back(Reader::checked_count(h, r.where("hub_set")));
    s.post_correlation = r.number("post_correlation");
    s.hub_degree = r.count("hub_degree");
    s.spoke_correlation = r.number_or_nan("spoke_correlation");
    s.change_time = r.count("change_time");
    s.horizon = r.count("horizon");
    return s;
}

RunConfig config_from(const ordered_json& doc) {
    const Reader r(doc, "");
    RunConfig c;
    c.schema_version = static_cast<int>(r.count("schema_version"));
    if (c.schema_version != kSchemaVersion) {
        throw ConfigError("schema_version=" + std::to_string(c.schema_version) + " is not supported (expected " +
                          std::to_string(kSchemaVersion) + ")");
    }
    c.returns = parse_return_method(r.text("returns"));
    c.block_size = r.count("block_size");
    c.rolling_window = r.count("rolling_window");

    const Reader d = r.child("detector");
    c.detector.epsilon_v = d.number("epsilon_v");
    c.detector.epsilon = d.number("epsilon");
    c.detector.A_v = d.number("A_v");
    c.detector.A = d.number("A");
    c.detector.q = d.count("q");
    c.detector.window_cap = d.count("window_cap");
    c.detector.use_global = d.flag("use_global");
    c.detector.training_blocks = d.count("training_blocks");

    const Reader w = r.child("weights");
    c.weights.theta1 = w.number("theta1");
    c.weights.theta2 = w.number("theta2");
    c.weights.gamma1 = w.number("gamma1");
    c.weights.gamma2 = w.number("gamma2");

    c.K = r.count("K");

    const Reader m = r.child("dmd");
    c.dmd.phi = m.number("phi");
    c.dmd.prior = m.number("prior");
    c.dmd.lookback = m.count("lookback");
    const std::string scale = m.text("scale");
    if (scale == "standardized") {
        c.dmd.scale = DistanceScale::Standardized;
    } else if (scale == "raw") {
        c.dmd.scale = DistanceScale::Raw;
    } else {
        throw ConfigError("dmd.scale='" + scale + "' is not one of standardized, raw");
    }
    const std::string mode = m.text("mode");
    if (mode == "per_timestamp") {
        c.dmd.mode = AccumulationMode::PerTimestamp;
    } else if (mode == "trailing") {
        c.dmd.mode = AccumulationMode::Trailing;
    } else {
        throw ConfigError("dmd.mode='" + mode + "' is not one of per_timestamp, trailing");
    }
    c.dmd.decay = m.number("decay");
    c.dmd_stride = m.count("stride");

    const Reader dist = r.child("distance");
    const std::string base = dist.text("base");
    if (base == "G") {
        c.distance.base = QhdBase::GStatistic;
    } else if (base == "J") {
        c.distance.base = QhdBase::JEstimate;
    } else {
        throw ConfigError("distance.base='" + base + "' is not one of G, J");
    }
    c.distance.minmax_scale = dist.flag("minmax_scale");

    c.j_magnitude = r.number("j_magnitude");
    const auto& seed = r.at("seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
        throw ConfigError("seed=" + seed.dump() + " must be a nonnegative integer");
    }
    c.seed = seed.get<std::uint64_t>();
    c.dataset = parse_dataset_mode(r.text("dataset"));

    const Reader cl = r.child("cluster");
    c.cluster.at = cl.count("at");
    for (const auto& h : cl.array("hubs")) {
        if (!h.is_string()) throw ConfigError("cluster.hubs entries must be asset id strings");
        c.cluster.hubs.push_back(h.get<std::string>());
    }

    const Reader b = r.child("benchmark");
    c.benchmark.scenario = scenario_from(b.child("scenario"));
    c.benchmark.plant_from_j = b.flag("plant_from_j");
    c.benchmark.trials = b.count("trials");
    c.benchmark.threads = static_cast<unsigned>(b.count("threads"));
    c.benchmark.max_events = b.count("max_events");
    c.benchmark.q = b.count("q");
    for (const auto& row : b.array("grid")) {
        if (!row.is_string()) throw ConfigError("benchmark.grid entries must be row strings \"J_k A_k theta gamma K Phi\"");
        c.benchmark.grid.push_back(parse_table_row(row.get<std::string>()));
    }
    return c;
}

void check_grid_point(const GridPoint& g, const std::string& where) {
    if (!(g.j_magnitude > 0.0)) throw ConfigError(where + ": J_k=" + format_number(g.j_magnitude) + " must be > 0");
    if (!(g.A >= 0.0)) throw ConfigError(where + ": A_k=" + format_number(g.A) + " must be >= 0");
    if (!(g.theta >= 0.0 && g.theta <= 1.0)) {
        throw ConfigError(where + ": theta=" + format_number(g.theta) + " must lie in [0, 1]");
    }
    if (!(g.gamma >= 0.0 && g.gamma <= 1.0)) {
        throw ConfigError(where + ": gamma=" + format_number(g.gamma) + " must lie in [0, 1]");
    }
    if (g.K < 1) throw ConfigError(where + ": K must be >= 1");
    if (std::isnan(g.phi)) throw ConfigError(where + ": Phi must be a number");
}

}  // namespace

void RunConfig::validate() const {
    if (block_size < 5) {
        throw ConfigError("block_size=" + std::to_string(block_size) + " must be >= 5");
    }
    if (rolling_window < 3) {
        throw ConfigError("rolling_window=" + std::to_string(rolling_window) + " must be >= 3");
    }
    detector.validate();
    weights.validate();
    dmd.validate();
    if (K < 1) {
        throw ConfigError("K must be >= 1");
    }
    if (!(j_magnitude > 0.0)) {
        throw ConfigError("j_magnitude=" + format_number(j_magnitude) + " must be > 0");
    }
    benchmark.scenario.validate();
    if (benchmark.trials < 1) {
        throw ConfigError("benchmark.trials must be >= 1");
    }
    if (benchmark.threads < 1) {
        throw ConfigError("benchmark.threads must be >= 1");
    }
    for (std::size_t i = 0; i < benchmark.grid.size(); ++i) {
        check_grid_point(benchmark.grid[i], "benchmark.grid[" + std::to_string(i) + "]");
    }
}

GridPoint RunConfig::grid_point() const {
    GridPoint g;
    g.j_magnitude = j_magnitude;
    g.A = detector.A_v;
    g.theta = weights.theta1;
    g.gamma = weights.gamma2;
    g.K = K;
    g.phi = dmd.phi;
    return g;
}

std::vector<GridPoint> RunConfig::benchmark_grid() const {
    return benchmark.grid.empty() ? std::vector<GridPoint>{grid_point()} : benchmark.grid;
}

ScenarioFamily RunConfig::scenario_family() const {
    ScenarioFamily f;
    f.scenario = benchmark.scenario;
    f.plant_from_j = benchmark.plant_from_j;
    f.trial.detector = detector;
    f.trial.weights = weights;
    f.trial.K = K;
    f.trial.dmd = dmd;
    f.trial.rolling_window = rolling_window;
    f.trial.distance = distance;
    f.trial.q = benchmark.q;
    f.trial.max_events = benchmark.max_events;
    return f;
}

ordered_json config_to_json(const RunConfig& c) {
    ordered_json j;
    j["schema_version"] = c.schema_version;
    j["returns"] = to_string(c.returns);
    j["block_size"] = c.block_size;
    j["rolling_window"] = c.rolling_window;
    j["detector"] = {{"epsilon_v", c.detector.epsilon_v},   {"epsilon", c.detector.epsilon},
                     {"A_v", c.detector.A_v},               {"A", c.detector.A},
                     {"q", c.detector.q},                   {"window_cap", c.detector.window_cap},
                     {"use_global", c.detector.use_global}, {"training_blocks", c.detector.training_blocks}};
    j["weights"] = {{"theta1", c.weights.theta1},
                    {"theta2", c.weights.theta2},
                    {"gamma1", c.weights.gamma1},
                    {"gamma2", c.weights.gamma2}};
    j["K"] = c.K;
    j["dmd"] = {{"phi", c.dmd.phi},
                {"prior", c.dmd.prior},
                {"lookback", c.dmd.lookback},
                {"scale", scale_name(c.dmd.scale)},
                {"mode", mode_name(c.dmd.mode)},
                {"decay", c.dmd.decay},
                {"stride", c.dmd_stride}};
    j["distance"] = {{"base", base_name(c.distance.base)}, {"minmax_scale", c.distance.minmax_scale}};
    j["j_magnitude"] = c.j_magnitude;
    j["seed"] = c.seed;
    j["dataset"] = to_string(c.dataset);
    j["cluster"] = {{"at", c.cluster.at}, {"hubs", c.cluster.hubs}};
    ordered_json grid = ordered_json::array();
    for (const auto& g : c.benchmark.grid) grid.push_back(format_table_row(g));
    j["benchmark"] = {{"scenario", scenario_to_json(c.benchmark.scenario)},
                      {"plant_from_j", c.benchmark.plant_from_j},
                      {"trials", c.benchmark.trials},
                      {"threads", c.benchmark.threads},
                      {"max_events", c.benchmark.max_events},
                      {"q", c.benchmark.q},
                      {"grid", grid}};
    return j;
}

std::string emit_config(const RunConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

ParsedConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    ordered_json user;
    if (!trim(text).empty()) {
        try {
            user = ordered_json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    } else {
        user = ordered_json::object();
    }
    if (!user.is_object()) {
        throw ConfigError("config document must be a JSON object");
    }

    ordered_json doc = config_to_json(RunConfig{});
    if (user.contains("row")) {
        if (!user["row"].is_string()) throw ConfigError("row must be a string \"J_k A_k theta gamma K Phi\"");
        apply_row(doc, user["row"].get<std::string>());
        user.erase("row");
    }
    merge_known(doc, user, "");
    for (const auto& o : overrides) apply_override(doc, o);

    ParsedConfig out;
    try {
        out.config = config_from(doc);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    out.config.validate();
    if (auto w = out.config.weights.cross_constraint_warning()) out.warnings.push_back(*w);
    return out;
}

ParsedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

GridPoint parse_table_row(const std::string& row) {
    std::istringstream in(row);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    if (tokens.size() != 6) {
        throw ConfigError("table row '" + row + "' must have 6 fields: J_k A_k theta gamma K Phi");
    }
    std::array<double, 6> v{};
    static const char* names[] = {"J_k", "A_k", "theta", "gamma", "K", "Phi"};
    for (std::size_t i = 0; i < 6; ++i) {
        const auto d = parse_double(tokens[i]);
        if (!d) throw ConfigError("table row '" + row + "': " + names[i] + "='" + tokens[i] + "' is not a number");
        v[i] = *d;
    }
    if (!(v[4] >= 1.0) || v[4] != std::floor(v[4])) {
        throw ConfigError("table row '" + row + "': K=" + tokens[4] + " must be a positive integer");
    }
    GridPoint g{v[0], v[1], v[2], v[3], static_cast<std::size_t>(v[4]), v[5]};
    check_grid_point(g, "table row '" + row + "'");
    return g;
}

std::string format_table_row(const GridPoint& g) {
    return format_number(g.j_magnitude) + " " + format_number(g.A) + " " + format_number(g.theta) + " " +
           format_number(g.gamma) + " " + std::to_string(g.K) + " " + format_number(g.phi);
}

// ---------------------------------------------------------------- reports

std::string format_number(double value) {
    if (std::isnan(value)) return "NaN";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
        throw StateError("table " + name + ": row has " + std::to_string(row.size()) + " cells, expected " +
                         std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError("format '" + name + "' is not one of csv, json");
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string cell_text(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "";
            } else if constexpr (std::is_same_v<T, double>) {
                return format_number(v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else {
                return csv_escape(v);
            }
        },
        c);
}

ordered_json cell_json(const Cell& c) {
    return std::visit(
        [](const auto& v) -> ordered_json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, double>) {
                // JSON has no non-finite numbers; use the CSV spelling
                return std::isfinite(v) ? ordered_json(v) : ordered_json(format_number(v));
            } else {
                return v;
            }
        },
        c);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << content;
    out.flush();
    if (!out) {
        throw IoError("write to '" + path.string() + "' failed");
    }
}

}  // namespace

std::string table_to_csv(const Table& table, const Report& report) {
    std::string out;
    out += "# schema_version=" + std::to_string(kSchemaVersion) + "\n";
    out += "# verb=" + report.verb + " table=" + table.name + "\n";
    out += "# config=" + config_to_json(report.config).dump() + "\n";
    for (const auto& w : report.warnings) out += "# warning=" + w + "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(table.columns[i]);
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += cell_text(row[i]);
        }
        out += '\n';
    }
    return out;
}

std::string table_to_json(const Table& table, const Report& report) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["verb"] = report.verb;
    j["table"] = table.name;
    j["config"] = config_to_json(report.config);
    j["warnings"] = report.warnings;
    j["columns"] = table.columns;
    ordered_json rows = ordered_json::array();
    for (const auto& row : table.rows) {
        ordered_json obj = ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) obj[table.columns[i]] = cell_json(row[i]);
        rows.push_back(std::move(obj));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& out_dir,
                                               ReportFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory '" + out_dir.string() + "'" +
                      (ec ? ": " + ec.message() : std::string()));
    }
    std::vector<std::filesystem::path> written;
    const auto config_path = out_dir / "config.json";
    write_file(config_path, emit_config(report.config));
    written.push_back(config_path);
    for (const auto& table : report.tables) {
        const bool csv = format == ReportFormat::Csv;
        const auto path = out_dir / (table.name + (csv ? ".csv" : ".json"));
        write_file(path, csv ? table_to_csv(table, report) : table_to_json(table, report));
        written.push_back(path);
    }
    return written;
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    Table t{path.stem().string(), {}, {}};
    if (path.extension() == ".json") {
        ordered_json doc;
        try {
            doc = ordered_json::parse(buf.str());
            t.columns = doc.at("columns").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ": not a report table (" + e.what() + ")");
        }
        for (const auto& row : doc.at("rows")) {
            std::vector<Cell> cells;
            for (const auto& c : t.columns) {
                const auto& v = row.contains(c) ? row.at(c) : ordered_json();
                if (v.is_null()) cells.emplace_back(std::string());
                else if (v.is_string()) cells.emplace_back(v.get<std::string>());
                else if (v.is_number_integer()) cells.emplace_back(std::to_string(v.get<std::int64_t>()));
                else if (v.is_number()) cells.emplace_back(format_number(v.get<double>()));
                else cells.emplace_back(v.dump());
            }
            t.add(std::move(cells));
        }
        return t;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(buf, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (t.columns.empty()) {
            t.columns = std::move(cells);
            continue;
        }
        if (cells.size() != t.columns.size()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.columns.size()) + " cells, found " + std::to_string(cells.size()));
        }
        t.add(std::vector<Cell>(cells.begin(), cells.end()));
    }
    if (t.columns.empty()) throw DataError(path.string() + ": no header row");
    return t;
}

namespace {

Cell opt_cell(const std::optional<std::size_t>& v) {
    return v ? Cell(static_cast<std::int64_t>(*v)) : Cell();
}

Cell opt_cell(const std::optional<double>& v) {
    return v ? Cell(*v) : Cell();
}

}  // namespace

Table results_table(const std::vector<TableRow>& rows) {
    Table t{"results",
            {"Label", "J_k", "A_k", "theta", "gamma", "K", "Phi", "Mean", "Min", "Std", "Events", "Trials", "Detected",
             "MeanDelay", "FalseAlarms"},
            {}};
    for (const auto& r : rows) {
        t.add({static_cast<std::int64_t>(r.label), r.config.j_magnitude, r.config.A, r.config.theta, r.config.gamma,
               static_cast<std::int64_t>(r.config.K), r.config.phi, r.mean, r.min, r.std,
               static_cast<std::int64_t>(r.events), static_cast<std::int64_t>(r.trials),
               static_cast<std::int64_t>(r.detected), r.mean_delay, static_cast<std::int64_t>(r.false_alarms)});
    }
    return t;
}

Table verdict_table(const std::vector<OrderingVerdict>& verdicts) {
    Table t{"verdicts",
            {"grid", "higher", "lower", "mean_higher", "mean_lower", "holds", "wins", "losses", "sign_p"},
            {}};
    for (const auto& v : verdicts) {
        t.add({static_cast<std::int64_t>(v.grid_index), static_cast<std::int64_t>(v.higher),
               static_cast<std::int64_t>(v.lower), v.mean_higher, v.mean_lower,
               std::string(v.holds ? "true" : "false"), static_cast<std::int64_t>(v.wins),
               static_cast<std::int64_t>(v.losses), v.sign_p});
    }
    return t;
}

Table trial_table(const ExperimentResult& result) {
    Table t{"trials",
            {"grid", "trial", "seed", "tau_V", "tau_G", "tau_HB", "censored", "false_alarm", "delay", "top1",
             "hub_recovered", "decision_accuracy", "realized_J", "events", "mcp_1", "mcp_2", "mcp_3"},
            {}};
    for (std::size_t g = 0; g < result.trials.size(); ++g) {
        for (std::size_t i = 0; i < result.trials[g].size(); ++i) {
            const TrialRecord& r = result.trials[g][i];
            t.add({static_cast<std::int64_t>(g), static_cast<std::int64_t>(i), std::to_string(r.seed),
                   opt_cell(r.tau_V), opt_cell(r.tau_G), opt_cell(r.tau_HB),
                   std::string(r.censored ? "true" : "false"), std::string(r.false_alarm ? "true" : "false"),
                   opt_cell(r.delay), opt_cell(r.top1), std::string(r.hub_recovered ? "true" : "false"),
                   r.decision_accuracy, r.realized_j, static_cast<std::int64_t>(r.events.size()), opt_cell(r.mcp(0)),
                   opt_cell(r.mcp(1)), opt_cell(r.mcp(2))});
        }
    }
    return t;
}

Table ingestion_table(const IngestionReport& report) {
    Table t{"ingestion", {"asset", "missing", "filled", "mode", "rows_read", "rows_kept", "rows_dropped"}, {}};
    for (const auto& a : report.assets) {
        t.add({a.id, static_cast<std::int64_t>(a.missing), static_cast<std::int64_t>(a.filled),
               to_string(report.mode), static_cast<std::int64_t>(report.rows_read),
               static_cast<std::int64_t>(report.rows_kept), static_cast<std::int64_t>(report.rows_dropped)});
    }
    return t;
}

Table event_table(const std::vector<DetectorEvent>& events) {
    Table t{"events", {"time", "type", "variable", "value"}, {}};
    for (const auto& e : events) {
        t.add({static_cast<std::int64_t>(e.time), to_string(e.type), e.variable, e.value});
    }
    return t;
}

}  // namespace geoqhd
