#pragma once

#include "geoqhd/core_stats.hpp"
#include "geoqhd/dmd.hpp"
#include "geoqhd/geometric_test.hpp"
#include "geoqhd/glr_detector.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace geoqhd {

/// Synthetic stream of n x p Gaussian blocks with a planted correlation change.
///
/// Blocks are numbered m = 1..horizon; blocks m > change_time are post-change.
/// After the change the hub set is mutually correlated at post_correlation and
/// each hub gains `hub_degree` spokes (hub-spoke rho, spoke-spoke
/// `spoke_correlation`, rho^2 when NaN). Planted variables decouple from the
/// rest of the pre-change structure.
struct ChangeScenario {
    std::size_t p = 20;
    int n = 10;
    /// Fixed pre-change correlation matrix; empty means identity unless
    /// block_size is set.
    Matrix pre_sigma;
    /// Block-equicorrelation pre-change: consecutive groups of block_size
    /// variables share a correlation level that oscillates with period
    /// rotation_period (blocks), each group phase-shifted. 0 disables.
    std::size_t block_size = 0;
    double block_correlation = 0.0;
    std::size_t rotation_period = 0;

    std::vector<std::size_t> hub_set{0};
    double post_correlation = 0.9;
    std::size_t hub_degree = 0;
    double spoke_correlation = std::numeric_limits<double>::quiet_NaN();
    std::size_t change_time = 50;
    std::size_t horizon = 100;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Correlation matrix driving block m (1-based). `projected` is set when the
/// planted matrix needed the eigenvalue floor.
Matrix dispersion(const ChangeScenario& scenario, std::size_t m, bool* projected = nullptr);

/// Nearest correlation-like PSD matrix: eigenvalues floored at `floor`, then
/// rescaled to unit diagonal.
Matrix project_psd(const Matrix& sigma, double floor = 1e-8);

/// Variables planted as spokes of each hub (same order as hub_set).
std::vector<std::vector<std::size_t>> spoke_sets(const ChangeScenario& scenario);

/// Block m as an n x p data window; depends only on (seed, m).
DataMatrix generate_block(const ChangeScenario& scenario, std::size_t m);

/// Planted correlation whose typical local statistic matches a J-magnitude:
/// solves (p - 1) J P_0(rho) = 1. Throws DomainError when no rho in (0, 1)
/// qualifies.
double rho_for_j_magnitude(double J, std::size_t p, int n);

struct TrialConfig {
    DetectorConfig detector;
    MetricWeights weights;
    std::size_t K = 5;
    DmdConfig dmd;
    std::size_t rolling_window = 50;  ///< rows per rolling correlation feeding the DMD
    DistanceOptions distance;
    std::size_t q = 0;                ///< top-q of the hub decision, 0 = |hub_set|
    bool evaluate_clusters = true;
    std::size_t max_events = 0;       ///< cap on evaluated events, 0 = all

    void validate() const;
};

inline constexpr std::size_t kLabelCount = 3;

/// One post-change block m >= tau_HB with both statistics above threshold.
struct TrialEvent {
    std::size_t time = 0;
    std::array<double, kLabelCount> lpm{};
    std::array<ConsistencyEvent, kLabelCount> consistency;
    std::array<bool, kLabelCount> density_fallback{};
};

struct TrialRecord {
    std::uint64_t seed = 0;
    std::optional<std::size_t> tau_V;
    std::optional<std::size_t> tau_G;
    std::optional<std::size_t> tau_HB;
    bool censored = false;     ///< tau_HB never fired
    bool false_alarm = false;  ///< tau_HB <= change_time
    std::optional<double> delay;
    std::optional<std::size_t> top1;  ///< argmax G at tau_HB
    bool hub_recovered = false;       ///< top1 is a planted hub
    double decision_accuracy = std::numeric_limits<double>::quiet_NaN();
    double realized_j = std::numeric_limits<double>::quiet_NaN();  ///< mean hub J_hat at tau_HB
    std::size_t psd_projections = 0;
    std::vector<TrialEvent> events;

    /// Mean LPM of one label (0-based) over events; nullopt without events.
    [[nodiscard]] std::optional<double> mcp(std::size_t label) const;
};

/// Streams the scenario through the detector and, at every event, clusters
/// the variables under labels 1 (QHD), 2 (QCD+QHD) and 3 (TH).
TrialRecord run_trial(const ChangeScenario& scenario, const TrialConfig& config);

/// Weights actually used by label index 0, 1, 2.
MetricWeights label_weights(const MetricWeights& weights, std::size_t label);

/// One configuration in the table shorthand J_k A_k theta gamma K Phi.
struct GridPoint {
    double j_magnitude = 10.0;
    double A = 3.0;
    double theta = 1.0;
    double gamma = 0.0;
    std::size_t K = 5;
    double phi = 2.0;
};

/// Scenario and trial settings shared by every grid point. When
/// plant_from_j is set, post_correlation comes from rho_for_j_magnitude.
struct ScenarioFamily {
    ChangeScenario scenario;
    TrialConfig trial;
    bool plant_from_j = true;
};

/// Correlated pre-change family: three groups of four variables with
/// oscillating, phase-shifted within-group correlation; three hubs (one per
/// group) become mutually correlated at 0.8 after block 30 of 50.
ChangeScenario correlated_family_scenario();
/// The family above with the trial settings used for the ordering experiment.
ScenarioFamily correlated_family();
/// Grid point of the ordering experiment: "10 15 0.5 0.5 3 -1".
GridPoint correlated_family_point();

ChangeScenario scenario_for(const ScenarioFamily& family, const GridPoint& point, std::uint64_t seed);
TrialConfig trial_config_for(const ScenarioFamily& family, const GridPoint& point);

/// Deterministic per-trial seed.
std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t grid_index, std::size_t trial_index);

struct TableRow {
    int label = 1;
    GridPoint config;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double min = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    std::size_t events = 0;
    std::size_t trials = 0;
    std::size_t detected = 0;
    double mean_delay = std::numeric_limits<double>::quiet_NaN();
    std::size_t false_alarms = 0;
};

/// Label a vs label b on one grid point.
struct OrderingVerdict {
    std::size_t grid_index = 0;
    int higher = 3;
    int lower = 2;
    double mean_higher = std::numeric_limits<double>::quiet_NaN();
    double mean_lower = std::numeric_limits<double>::quiet_NaN();
    bool holds = false;       ///< mean_higher >= mean_lower
    std::size_t wins = 0;     ///< trials where higher's MCP is strictly larger
    std::size_t losses = 0;
    double sign_p = 1.0;      ///< one-sided sign test, ties dropped
};

struct ExperimentResult {
    std::vector<GridPoint> grid;
    std::vector<TableRow> rows;
    std::vector<OrderingVerdict> verdicts;
    std::vector<std::vector<TrialRecord>> trials;  ///< per grid point
};

/// Aggregates one grid point's trials into three table rows (labels 1..3).
/// LPM values are pooled over all events; the result does not depend on
/// trial order.
std::vector<TableRow> aggregate(const GridPoint& point, const std::vector<TrialRecord>& trials);

/// Label 3 >= 2 and 2 >= 1 verdicts on per-trial MCP.
std::vector<OrderingVerdict> ordering_verdicts(std::size_t grid_index, const std::vector<TrialRecord>& trials);

/// P(Binomial(wins + losses, 1/2) >= wins); 1 when there are no untied pairs.
double sign_test_p(std::size_t wins, std::size_t losses);

ExperimentResult run_experiment(const ScenarioFamily& family, const std::vector<GridPoint>& grid, std::size_t trials,
                                std::uint64_t master_seed, unsigned threads = 1);

}  // namespace geoqhd
