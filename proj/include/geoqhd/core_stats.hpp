#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace geoqhd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n x p observation window: rows are timestamps, columns are variables.
struct DataMatrix {
    Matrix values;
    std::vector<std::string> variable_ids;
    std::vector<std::string> timestamps;

    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    [[nodiscard]] std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

    /// Rows [first, first + count) as a new window with the same labels.
    [[nodiscard]] DataMatrix slice_rows(std::size_t first, std::size_t count) const;
};

/// Sample correlation matrix together with where it came from.
struct CorrelationSnapshot {
    Matrix R;
    std::size_t n_samples = 0;
    std::size_t at = 0;

    [[nodiscard]] std::size_t dimension() const { return static_cast<std::size_t>(R.rows()); }
};

enum class ReturnMethod { Log, Simple, Levels };

ReturnMethod parse_return_method(const std::string& name);
std::string to_string(ReturnMethod method);

/// Prices (n x p, all > 0) to an (n-1) x p returns window. `Levels` passes
/// the prices through unchanged (n rows).
DataMatrix compute_returns(const DataMatrix& prices, ReturnMethod method = ReturnMethod::Log);

/// Unbiased (n-1) sample covariance of the columns.
Matrix sample_covariance(const Matrix& X);
inline Matrix sample_covariance(const DataMatrix& X) { return sample_covariance(X.values); }

/// R = D^{-1/2} S D^{-1/2}. Throws DegenerateVariableError on a non-positive
/// diagonal entry. The result is exactly symmetric with unit diagonal and
/// entries clamped to [-1, 1].
CorrelationSnapshot sample_correlation(const Matrix& S, std::size_t n_samples = 0, std::size_t at = 0);

/// Covariance then correlation of a window; columns that are exactly constant
/// are reported as degenerate before any arithmetic.
CorrelationSnapshot correlation_of(const Matrix& X, std::size_t at = 0);

/// k-th largest of {|R_ij| : j != i}, k in [1, p-1].
double knn_correlation_distance(const Matrix& R, std::size_t i, std::size_t k);

/// V = max_{i != j} |R_ij|.
double global_statistic(const Matrix& R);

/// V_k = max_{i != k} |R_ki| for every k.
Vector local_statistics(const Matrix& R);

/// Missing rolling-correlation values (zero-variance sub-window).
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Pearson correlations of every variable pair over a trailing window.
struct RollingCorrelationPanel {
    /// Unordered pairs (i < j) in lexicographic order.
    std::vector<std::pair<std::size_t, std::size_t>> pair_ids;
    /// series(t, pair): rows are panel timestamps, missing entries are NaN.
    Matrix series;
    /// Row of the source window that ends each panel timestamp.
    std::vector<std::size_t> end_rows;
    std::size_t window = 0;
    std::size_t n_variables = 0;

    [[nodiscard]] std::size_t length() const { return static_cast<std::size_t>(series.rows()); }
    [[nodiscard]] std::size_t n_pairs() const { return pair_ids.size(); }
};

/// Index of pair (i, j), i != j, in the lexicographic pair enumeration.
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t p);
std::vector<std::pair<std::size_t, std::size_t>> enumerate_pairs(std::size_t p);

RollingCorrelationPanel rolling_correlations(const DataMatrix& X, std::size_t window);
RollingCorrelationPanel rolling_correlations(const Matrix& X, std::size_t window);

}  // namespace geoqhd
