#include "geoqhd/dmd.hpp"

#include "geoqhd/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geoqhd {

void DmdConfig::validate() const {
    if (std::isnan(phi)) {
        throw ConfigError("dmd.phi must be a number");
    }
    if (!(prior > 0.0) || !std::isfinite(prior)) {
        throw ConfigError("dmd.prior=" + std::to_string(prior) + " must be positive");
    }
    if (lookback < 1) {
        throw ConfigError("dmd.lookback must be >= 1");
    }
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw ConfigError("dmd.decay=" + std::to_string(decay) + " must lie in (0, 1]");
    }
}

std::optional<double> te_distance(std::span<const double> rc_i, std::span<const double> rc_j, std::size_t k,
                                  std::size_t lookback) {
    if (k >= rc_i.size() || k >= rc_j.size()) {
        throw DomainError("te_distance: timestamp " + std::to_string(k) + " beyond the series");
    }
    if (k < lookback) {
        throw DomainError("te_distance: lookback " + std::to_string(lookback) + " reaches before the series start");
    }
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t t = k - lookback; t <= k; ++t) {
        if (is_missing(rc_i[t]) || is_missing(rc_j[t])) continue;
        const double d = rc_i[t] - rc_j[t];
        sum += d * d;
        ++valid;
    }
    if (valid < 2) {
        return std::nullopt;
    }
    const auto total = static_cast<double>(lookback + 1);
    return std::sqrt(sum * total / static_cast<double>(valid));
}

std::vector<PairDistance> pair_distances(const RollingCorrelationPanel& panel, std::size_t k, std::size_t lookback,
                                         DistanceScale scale) {
    const std::size_t n_pairs = panel.n_pairs();
    const auto len = static_cast<std::size_t>(panel.series.rows());
    auto column = [&](std::size_t pair) {
        return std::span<const double>(panel.series.col(static_cast<Eigen::Index>(pair)).data(), len);
    };

    std::vector<PairDistance> out;
    out.reserve(n_pairs * (n_pairs - 1) / 2);
    for (std::size_t a = 0; a < n_pairs; ++a) {
        for (std::size_t b = a + 1; b < n_pairs; ++b) {
            if (const auto d = te_distance(column(a), column(b), k, lookback)) {
                out.push_back({a, b, *d});
            }
        }
    }
    if (scale == DistanceScale::Standardized && !out.empty()) {
        double mean = 0.0;
        for (const auto& pd : out) mean += pd.distance;
        mean /= static_cast<double>(out.size());
        double var = 0.0;
        for (const auto& pd : out) var += (pd.distance - mean) * (pd.distance - mean);
        const double sd = std::sqrt(var / static_cast<double>(out.size()));
        for (auto& pd : out) {
            pd.distance = sd > 0.0 ? (pd.distance - mean) / sd : 0.0;
        }
    }
    return out;
}

DmdModel::DmdModel(std::vector<std::string> asset_ids, DmdConfig config)
    : ids_(std::move(asset_ids)), config_(config) {
    config_.validate();
    if (ids_.size() < 2) {
        throw ConfigError("dmd: need at least 2 assets");
    }
    const auto n = static_cast<Eigen::Index>(ids_.size());
    rc_counts_ = Vector::Zero(n * (n - 1) / 2);
    asset_counts_ = Vector::Zero(n);
}

std::size_t DmdModel::asset_index(const std::string& id) const {
    const auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) {
        throw DomainError("dmd: unknown asset id '" + id + "'");
    }
    return static_cast<std::size_t>(it - ids_.begin());
}

void DmdModel::update(const RollingCorrelationPanel& panel, std::size_t k) {
    if (panel.n_variables != ids_.size()) {
        throw StateError("dmd: panel has " + std::to_string(panel.n_variables) + " variables, model has " +
                         std::to_string(ids_.size()));
    }
    if (panel.n_pairs() < 2) {
        throw DataError("dmd: need at least 2 rolling-correlation pairs");
    }
    if (config_.mode == AccumulationMode::PerTimestamp) {
        rc_counts_.setZero();
        asset_counts_.setZero();
    } else {
        rc_counts_ *= config_.decay;
        asset_counts_ *= config_.decay;
    }

    last_events_ = 0;
    for (const auto& pd : pair_distances(panel, k, config_.lookback, config_.scale)) {
        if (!(pd.distance <= config_.phi)) continue;
        ++last_events_;
        rc_counts_(static_cast<Eigen::Index>(pd.a)) += 1.0;
        rc_counts_(static_cast<Eigen::Index>(pd.b)) += 1.0;
        const auto [a1, a2] = panel.pair_ids[pd.a];
        const auto [b1, b2] = panel.pair_ids[pd.b];
        for (const std::size_t asset : {a1, a2, b1, b2}) {
            asset_counts_(static_cast<Eigen::Index>(asset)) += 1.0;
        }
    }
    history_.push_back(theta());
    times_.push_back(k);
}

Vector DmdModel::theta() const {
    return dmd_probability(asset_counts_, config_.prior);
}

Vector dmd_probability(const Vector& asset_counts, double prior) {
    const Vector mass = asset_counts.array() + prior;
    return mass / mass.sum();
}

Matrix standardize_dmd(std::span<const Vector> history) {
    if (history.size() < 2) {
        throw DataError("standardize_dmd: need at least 2 timestamps");
    }
    const auto T = static_cast<Eigen::Index>(history.size());
    const Eigen::Index N = history.front().size();
    Matrix panel(T, N);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (history[static_cast<std::size_t>(t)].size() != N) {
            throw DataError("standardize_dmd: ragged history");
        }
        panel.row(t) = history[static_cast<std::size_t>(t)].transpose();
    }
    for (Eigen::Index a = 0; a < N; ++a) {
        const double mean = panel.col(a).mean();
        const double sd = std::sqrt((panel.col(a).array() - mean).square().mean());
        if (sd > 0.0) {
            panel.col(a) = (panel.col(a).array() - mean) / sd;
        } else {
            panel.col(a).setZero();
        }
    }
    return panel;
}

double dd_distance(const Matrix& standardized, std::size_t i, std::size_t j, std::size_t m) {
    const auto N = static_cast<std::size_t>(standardized.cols());
    if (i >= N || j >= N) {
        throw DomainError("dd_distance: unknown asset index");
    }
    if (m >= static_cast<std::size_t>(standardized.rows())) {
        throw DomainError("dd_distance: timestamp " + std::to_string(m) + " outside the panel");
    }
    const auto row = static_cast<Eigen::Index>(m);
    return standardized(row, static_cast<Eigen::Index>(i)) - standardized(row, static_cast<Eigen::Index>(j));
}

double dd_distance_raw(const Vector& theta, std::size_t i, std::size_t j) {
    const auto N = static_cast<std::size_t>(theta.size());
    if (i >= N || j >= N) {
        throw DomainError("dd_distance: unknown asset index");
    }
    return theta(static_cast<Eigen::Index>(i)) - theta(static_cast<Eigen::Index>(j));
}

}  // namespace geoqhd
