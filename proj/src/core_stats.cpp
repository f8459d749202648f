#include "geoqhd/core_stats.hpp"

#include "geoqhd/error.hpp"

#include <algorithm>
#include <functional>
#include <string>

namespace geoqhd {

namespace {

std::string cell_name(const DataMatrix& d, Eigen::Index row, Eigen::Index col) {
    std::string out = "row " + std::to_string(row) + ", column " + std::to_string(col);
    const auto r = static_cast<std::size_t>(row);
    const auto c = static_cast<std::size_t>(col);
    if (c < d.variable_ids.size()) out += " (asset " + d.variable_ids[c];
    if (r < d.timestamps.size()) out += ", timestamp " + d.timestamps[r];
    if (c < d.variable_ids.size()) out += ")";
    return out;
}

bool column_is_constant(const Matrix& X, Eigen::Index col, Eigen::Index first, Eigen::Index count) {
    const double ref = X(first, col);
    for (Eigen::Index r = first + 1; r < first + count; ++r) {
        if (X(r, col) != ref) {
            return false;
        }
    }
    return true;
}

}  // namespace

DataMatrix DataMatrix::slice_rows(std::size_t first, std::size_t count) const {
    if (first + count > rows()) {
        throw DomainError("slice_rows: rows [" + std::to_string(first) + ", " +
                          std::to_string(first + count) + ") exceed " + std::to_string(rows()));
    }
    DataMatrix out;
    out.values = values.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    out.variable_ids = variable_ids;
    if (timestamps.size() == rows()) {
        out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(first),
                              timestamps.begin() + static_cast<std::ptrdiff_t>(first + count));
    }
    return out;
}

ReturnMethod parse_return_method(const std::string& name) {
    if (name == "log") return ReturnMethod::Log;
    if (name == "simple") return ReturnMethod::Simple;
    if (name == "levels") return ReturnMethod::Levels;
    throw ConfigError("returns: unknown method '" + name + "' (expected log, simple or levels)");
}

std::string to_string(ReturnMethod method) {
    switch (method) {
        case ReturnMethod::Log: return "log";
        case ReturnMethod::Simple: return "simple";
        case ReturnMethod::Levels: return "levels";
    }
    return "log";
}

DataMatrix compute_returns(const DataMatrix& prices, ReturnMethod method) {
    const Matrix& P = prices.values;
    if (method == ReturnMethod::Levels) {
        return prices;
    }
    if (P.rows() < 2) {
        throw DataError("compute_returns: need at least 2 price rows, got " + std::to_string(P.rows()));
    }
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        for (Eigen::Index c = 0; c < P.cols(); ++c) {
            if (!(P(r, c) > 0.0) || !std::isfinite(P(r, c))) {
                throw DataError("compute_returns: non-positive or non-finite price at " + cell_name(prices, r, c));
            }
        }
    }

    DataMatrix out;
    out.values.resize(P.rows() - 1, P.cols());
    for (Eigen::Index r = 1; r < P.rows(); ++r) {
        for (Eigen::Index c = 0; c < P.cols(); ++c) {
            const double ratio = P(r, c) / P(r - 1, c);
            out.values(r - 1, c) = method == ReturnMethod::Log ? std::log(ratio) : ratio - 1.0;
        }
    }
    out.variable_ids = prices.variable_ids;
    if (prices.timestamps.size() == prices.rows()) {
        out.timestamps.assign(prices.timestamps.begin() + 1, prices.timestamps.end());
    }
    return out;
}

Matrix sample_covariance(const Matrix& X) {
    if (X.rows() < 2) {
        throw DataError("sample_covariance: insufficient data, need n >= 2 rows, got " +
                        std::to_string(X.rows()));
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Matrix centered = X.rowwise() - mean;
    Matrix S = (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);
    // exact symmetry for downstream equality checks
    return (S + S.transpose()) * 0.5;
}

CorrelationSnapshot sample_correlation(const Matrix& S, std::size_t n_samples, std::size_t at) {
    if (S.rows() != S.cols()) {
        throw DomainError("sample_correlation: covariance must be square");
    }
    const Eigen::Index p = S.rows();
    Vector inv_sd(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        if (!(S(i, i) > 0.0) || !std::isfinite(S(i, i))) {
            throw DegenerateVariableError(static_cast<std::size_t>(i),
                                          "sample_correlation: zero-variance variable at column " +
                                              std::to_string(i));
        }
        inv_sd(i) = 1.0 / std::sqrt(S(i, i));
    }

    CorrelationSnapshot snap;
    snap.n_samples = n_samples;
    snap.at = at;
    snap.R.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        snap.R(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double r = std::clamp(0.5 * (S(i, j) + S(j, i)) * inv_sd(i) * inv_sd(j), -1.0, 1.0);
            snap.R(i, j) = r;
            snap.R(j, i) = r;
        }
    }
    return snap;
}

CorrelationSnapshot correlation_of(const Matrix& X, std::size_t at) {
    if (X.rows() < 2) {
        throw DataError("correlation_of: insufficient data, need n >= 2 rows");
    }
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (column_is_constant(X, c, 0, X.rows())) {
            throw DegenerateVariableError(static_cast<std::size_t>(c),
                                          "correlation_of: column " + std::to_string(c) + " is constant");
        }
    }
    return sample_correlation(sample_covariance(X), static_cast<std::size_t>(X.rows()), at);
}

double knn_correlation_distance(const Matrix& R, std::size_t i, std::size_t k) {
    const auto p = static_cast<std::size_t>(R.rows());
    if (i >= p) {
        throw DomainError("knn_correlation_distance: variable index " + std::to_string(i) + " out of range");
    }
    if (k < 1 || k + 1 > p) {
        throw DomainError("knn_correlation_distance: rank k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(p - 1) + "]");
    }
    std::vector<double> mags;
    mags.reserve(p - 1);
    for (std::size_t j = 0; j < p; ++j) {
        if (j != i) {
            mags.push_back(std::abs(R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
    }
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end(),
                     std::greater<>());
    return mags[k - 1];
}

Vector local_statistics(const Matrix& R) {
    const Eigen::Index p = R.rows();
    if (p < 2) {
        throw DomainError("local_statistics: need p >= 2");
    }
    Vector V = Vector::Zero(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        double best = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            if (i != k) {
                best = std::max(best, std::abs(R(k, i)));
            }
        }
        V(k) = best;
    }
    return V;
}

double global_statistic(const Matrix& R) {
    return local_statistics(R).maxCoeff();
}

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t p) {
    if (i == j || i >= p || j >= p) {
        throw DomainError("pair_index: invalid pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    if (i > j) std::swap(i, j);
    // pairs with first index < i, then offset within row i
    return i * (2 * p - i - 1) / 2 + (j - i - 1);
}

std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(std::size_t p) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(p * (p - 1) / 2);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i + 1; j < p; ++j) {
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

RollingCorrelationPanel rolling_correlations(const Matrix& X, std::size_t window) {
    const auto n = static_cast<std::size_t>(X.rows());
    const auto p = static_cast<std::size_t>(X.cols());
    if (window < 3) {
        throw ConfigError("rolling_correlations: window must be >= 3, got " + std::to_string(window));
    }
    if (n < window) {
        throw DataError("rolling_correlations: " + std::to_string(n) + " rows is shorter than window " +
                        std::to_string(window));
    }
    if (p < 2) {
        throw DataError("rolling_correlations: need at least 2 variables");
    }

    RollingCorrelationPanel panel;
    panel.window = window;
    panel.n_variables = p;
    panel.pair_ids = enumerate_pairs(p);
    const std::size_t length = n - window + 1;
    panel.series.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(panel.pair_ids.size()));
    panel.end_rows.resize(length);

    const auto w = static_cast<Eigen::Index>(window);
    std::vector<bool> flat(p);
    for (std::size_t t = 0; t < length; ++t) {
        const auto first = static_cast<Eigen::Index>(t);
        panel.end_rows[t] = t + window - 1;
        for (std::size_t c = 0; c < p; ++c) {
            flat[c] = column_is_constant(X, static_cast<Eigen::Index>(c), first, w);
        }
        const auto block = X.middleRows(first, w);
        const Eigen::RowVectorXd mean = block.colwise().mean();
        const Matrix centered = block.rowwise() - mean;
        const Matrix cross = centered.transpose() * centered;
        for (std::size_t k = 0; k < panel.pair_ids.size(); ++k) {
            const auto [i, j] = panel.pair_ids[k];
            double value = kMissing;
            if (!flat[i] && !flat[j]) {
                const auto ii = static_cast<Eigen::Index>(i);
                const auto jj = static_cast<Eigen::Index>(j);
                value = std::clamp(cross(ii, jj) / std::sqrt(cross(ii, ii) * cross(jj, jj)), -1.0, 1.0);
            }
            panel.series(first, static_cast<Eigen::Index>(k)) = value;
        }
    }
    return panel;
}

RollingCorrelationPanel rolling_correlations(const DataMatrix& X, std::size_t window) {
    return rolling_correlations(X.values, window);
}

}  // namespace geoqhd
