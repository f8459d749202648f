#pragma once

#include "geoqhd/core_stats.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geoqhd {

/// Scale on which the closeness threshold phi is applied. `Standardized`
/// z-scores the TE distances of all pair-of-pairs at a timestamp first, which
/// makes phi independent of the lookback length.
enum class DistanceScale { Standardized, Raw };

/// `PerTimestamp` recounts the network at every update; `Trailing` keeps the
/// counts, multiplied by `decay` before each update.
enum class AccumulationMode { PerTimestamp, Trailing };

struct DmdConfig {
    double phi = 2.0;
    double prior = 1.0;         ///< symmetric Dirichlet mass per asset
    std::size_t lookback = 50;  ///< TE window: timestamps k - lookback .. k
    DistanceScale scale = DistanceScale::Standardized;
    AccumulationMode mode = AccumulationMode::PerTimestamp;
    double decay = 1.0;

    void validate() const;
};

/// Euclidean distance between two rolling-correlation series over the
/// timestamps [k - lookback, k]. Points missing in either series are skipped
/// and the sum is rescaled by (lookback + 1) / valid. nullopt when fewer than
/// two common points are valid.
std::optional<double> te_distance(std::span<const double> rc_i, std::span<const double> rc_j, std::size_t k,
                                  std::size_t lookback);

struct PairDistance {
    std::size_t a = 0;  ///< pair index (first rolling correlation)
    std::size_t b = 0;  ///< pair index, a < b
    double distance = 0.0;
};

/// Defined TE distances of all pair-of-pairs (a < b) at panel timestamp k,
/// on the requested scale.
std::vector<PairDistance> pair_distances(const RollingCorrelationPanel& panel, std::size_t k, std::size_t lookback,
                                         DistanceScale scale);

/// Diversification measure distribution: counts how often each asset appears
/// in pairs of rolling correlations whose TE distance is within phi, and turns
/// the counts into Dirichlet posterior-mean masses.
class DmdModel {
public:
    DmdModel(std::vector<std::string> asset_ids, DmdConfig config);

    /// Adds the phi-close pair-of-pairs of timestamp k and records theta.
    void update(const RollingCorrelationPanel& panel, std::size_t k);

    /// theta_a = (asset_counts_a + prior) / sum_b (asset_counts_b + prior).
    [[nodiscard]] Vector theta() const;

    [[nodiscard]] const DmdConfig& config() const noexcept { return config_; }
    [[nodiscard]] const std::vector<std::string>& asset_ids() const noexcept { return ids_; }
    [[nodiscard]] std::size_t asset_index(const std::string& id) const;
    [[nodiscard]] const Vector& rc_counts() const noexcept { return rc_counts_; }
    [[nodiscard]] const Vector& asset_counts() const noexcept { return asset_counts_; }
    /// Qualifying pair-of-pairs counted by the last update.
    [[nodiscard]] std::size_t last_events() const noexcept { return last_events_; }

    /// theta after each update, and the panel timestamp of that update.
    [[nodiscard]] const std::vector<Vector>& history() const noexcept { return history_; }
    [[nodiscard]] const std::vector<std::size_t>& history_times() const noexcept { return times_; }

private:
    std::vector<std::string> ids_;
    DmdConfig config_;
    Vector rc_counts_;
    Vector asset_counts_;
    std::size_t last_events_ = 0;
    std::vector<Vector> history_;
    std::vector<std::size_t> times_;
};

/// theta computed from raw counts; exposed for callers that replay events.
Vector dmd_probability(const Vector& asset_counts, double prior);
inline Vector dmd_probability(const DmdModel& model) { return model.theta(); }

/// Per-asset z-score of a theta history (rows = timestamps). Uses the
/// population standard deviation; zero-variance assets map to 0.
Matrix standardize_dmd(std::span<const Vector> history);

/// DD_ij(m) = z_i(m) - z_j(m) on a standardized panel. Antisymmetric.
double dd_distance(const Matrix& standardized, std::size_t i, std::size_t j, std::size_t m);
/// DD_ij = theta_i - theta_j on the raw probability scale.
double dd_distance_raw(const Vector& theta, std::size_t i, std::size_t j);

}  // namespace geoqhd
