#pragma once

#include "geoqhd/core_stats.hpp"
#include "geoqhd/dmd.hpp"
#include "geoqhd/geometric_test.hpp"
#include "geoqhd/glr_detector.hpp"
#include "geoqhd/simulation.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace geoqhd {

inline constexpr int kSchemaVersion = 1;

/// `Cut` keeps only timestamps where every asset has a price; `Uncut`
/// forward-fills gaps and drops the leading rows before every asset has
/// started.
enum class DatasetMode { Cut, Uncut };
DatasetMode parse_dataset_mode(const std::string& name);
std::string to_string(DatasetMode mode);

struct AssetIngestion {
    std::string id;
    std::size_t missing = 0;  ///< empty cells in the file
    std::size_t filled = 0;   ///< cells forward-filled (uncut)
};

/// Row accounting of one load: rows_read = rows_kept + rows_dropped.
struct IngestionReport {
    DatasetMode mode = DatasetMode::Cut;
    std::size_t rows_read = 0;
    std::size_t rows_kept = 0;
    std::size_t rows_dropped = 0;
    std::vector<AssetIngestion> assets;
};

struct PricePanel {
    DataMatrix prices;
    IngestionReport report;
};

/// Parses a price CSV: header `timestamp,<asset>,...`, one row per
/// timestamp. Empty, `NA`, `NaN` and `null` cells are missing. Timestamps
/// must be strictly increasing (numerically when all are numbers, otherwise
/// as strings).
PricePanel parse_panel(const std::string& csv_text, DatasetMode mode);
PricePanel load_panel(const std::filesystem::path& path, DatasetMode mode);

struct ClusterSettings {
    std::size_t at = 0;              ///< block index to cluster at, 0 = tau_HB
    std::vector<std::string> hubs;   ///< reference hub ids; empty = empirical hubs
};

struct BenchmarkSettings {
    ChangeScenario scenario = correlated_family_scenario();
    bool plant_from_j = false;
    std::size_t trials = 1;
    unsigned threads = 1;
    std::size_t max_events = 5;
    std::size_t q = 0;               ///< 0 = number of planted hubs
    std::vector<GridPoint> grid;     ///< empty = the single row of the top-level config
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    ReturnMethod returns = ReturnMethod::Log;
    std::size_t block_size = 10;
    std::size_t rolling_window = 50;
    DetectorConfig detector;
    MetricWeights weights;
    std::size_t K = 5;
    DmdConfig dmd;
    std::size_t dmd_stride = 0;      ///< timestamps between DMD updates, 0 = block_size
    DistanceOptions distance;
    double j_magnitude = 10.0;       ///< J_k column of the table shorthand
    std::uint64_t seed = 1;
    DatasetMode dataset = DatasetMode::Cut;
    ClusterSettings cluster;
    BenchmarkSettings benchmark;

    void validate() const;
    /// The single grid point described by the top-level fields.
    [[nodiscard]] GridPoint grid_point() const;
    [[nodiscard]] std::vector<GridPoint> benchmark_grid() const;
    [[nodiscard]] ScenarioFamily scenario_family() const;
};

struct ParsedConfig {
    RunConfig config;
    std::vector<std::string> warnings;
};

/// Parses a JSON config document. Missing keys take their defaults, unknown
/// keys are rejected. A `row` key holding the table shorthand
/// "J_k A_k theta gamma K Phi" fills those fields before the explicit keys.
/// `overrides` are `dotted.key=value` strings applied last; values are read
/// as JSON when possible and as strings otherwise.
ParsedConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ParsedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

nlohmann::ordered_json config_to_json(const RunConfig& config);
/// Pretty JSON document that parse_config reads back to an equal config.
std::string emit_config(const RunConfig& config);

/// "J_k A_k theta gamma K Phi" -> grid point; ConfigError on malformed rows.
GridPoint parse_table_row(const std::string& row);
std::string format_table_row(const GridPoint& point);

/// Shortest round-trip decimal form; "NaN", "inf", "-inf" for non-finite.
std::string format_number(double value);

using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

/// One named output table. Emitted as <name>.csv or <name>.json.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

enum class ReportFormat { Csv, Json };
ReportFormat parse_report_format(const std::string& name);

struct Report {
    std::string verb;
    RunConfig config;
    std::vector<std::string> warnings;
    std::vector<Table> tables;
};

std::string table_to_csv(const Table& table, const Report& report);
std::string table_to_json(const Table& table, const Report& report);

/// Writes config.json and every table into `out_dir` (created if needed).
/// Returns the written paths. Throws IoError when the directory or a file
/// cannot be written.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& out_dir,
                                               ReportFormat format);

/// Reads back a table written by emit_report (.csv or .json). Every cell
/// comes back as its CSV text; empty cells stay empty strings.
Table read_table(const std::filesystem::path& path);

/// Tables of a benchmark run (results, verdicts, per-trial records).
Table results_table(const std::vector<TableRow>& rows);
Table verdict_table(const std::vector<OrderingVerdict>& verdicts);
Table trial_table(const ExperimentResult& result);

Table ingestion_table(const IngestionReport& report);
Table event_table(const std::vector<DetectorEvent>& events);

}  // namespace geoqhd
