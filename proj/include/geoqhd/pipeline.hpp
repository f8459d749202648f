#pragma once

#include "geoqhd/data_io.hpp"
#include "geoqhd/geometric_test.hpp"
#include "geoqhd/glr_detector.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace geoqhd {

/// Returns split into consecutive non-overlapping n-row blocks; a trailing
/// partial block is dropped.
struct BlockStream {
    DataMatrix returns;
    std::size_t block_size = 0;

    [[nodiscard]] std::size_t blocks() const { return returns.rows() / block_size; }
    [[nodiscard]] DataMatrix block(std::size_t m) const;  ///< 1-based
    [[nodiscard]] const std::string& block_end(std::size_t m) const;
};

BlockStream make_block_stream(const DataMatrix& prices, const RunConfig& config);

struct DetectionRun {
    std::vector<std::string> ids;
    std::vector<std::string> block_ends;  ///< timestamp closing each block
    std::vector<DetectorEvent> events;
    Matrix V;                             ///< blocks x p local statistics
    Matrix G;                             ///< blocks x p GLR statistics (0 during training)
    Matrix J;                             ///< blocks x p projected MLE
    Vector global_V;
    Vector global_G;
    std::optional<std::size_t> tau_V;
    std::optional<std::size_t> tau_G;
    std::optional<std::size_t> tau_HB;
};

/// core_stats -> glr_detector over every block of the panel.
DetectionRun run_detection(const DataMatrix& prices, const RunConfig& config);

inline constexpr std::array<const char*, 3> kLabelNames = {"QHD", "QCD+QHD", "TH"};

struct LabelResult {
    DistanceMatrix distances;
    ClusterPartition partition;
    GeometricDecision decision;
    double lpm = 0.0;
    std::optional<McpSummary> mcp;
    std::optional<double> consistency;
};

struct ClusterRun {
    std::size_t at = 0;              ///< block index clustered
    bool at_tau_hb = false;
    std::vector<std::string> ids;
    std::vector<std::size_t> hubs;
    bool hubs_empirical = false;     ///< hub set taken from the top correlation at `at`
    DistanceInputs inputs;
    std::array<LabelResult, 3> labels;
    std::vector<std::size_t> event_times;  ///< alarm blocks used for MCP and the consistency ratio
    std::optional<std::size_t> tau_HB;
};

/// Distance matrices, k-medoids partitions and LPM/MCP/consistency per label,
/// at config.cluster.at or tau_HB. Throws StateError when neither exists.
ClusterRun run_cluster(const DataMatrix& prices, const RunConfig& config);

struct DmdRun {
    std::vector<std::string> ids;
    std::vector<std::string> timestamps;  ///< timestamp of each update
    std::vector<std::size_t> events;      ///< qualifying pair-of-pairs per update
    Matrix theta;                         ///< updates x p
    Matrix z;                             ///< standardized theta, empty with < 2 updates
};

/// DMD over the rolling correlations of the returns, one update every
/// config.dmd_stride rows (block_size when 0).
DmdRun run_dmd(const DataMatrix& prices, const RunConfig& config);

Report detect_report(const DetectionRun& run, const ParsedConfig& config, const IngestionReport* ingestion = nullptr);
Report cluster_report(const ClusterRun& run, const ParsedConfig& config);
Report dmd_report(const DmdRun& run, const ParsedConfig& config);
Report benchmark_report(const ExperimentResult& result, const ParsedConfig& config);

/// One line per ordering verdict, e.g. "grid 0: label 3 >= label 2 holds ...".
std::vector<std::string> verdict_lines(const ExperimentResult& result);

/// Markdown summary of a benchmark output: one results block per grid point
/// and one line per ordering verdict. Inputs are read back with read_table.
std::string benchmark_summary(const Table& results, const Table& verdicts);

}  // namespace geoqhd
