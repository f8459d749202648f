#pragma once

#include "geoqhd/core_stats.hpp"
#include "geoqhd/rmt_density.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geoqhd {

struct DetectorConfig {
    double epsilon_v = 0.1;  ///< local test: |J_k - 1| >= epsilon_v
    double epsilon = 0.1;    ///< global test: |J - 1| >= epsilon
    double A_v = 3.0;        ///< local threshold
    double A = 3.0;          ///< global threshold
    std::size_t q = 1;       ///< top-q hub count
    std::size_t window_cap = 0;       ///< max lookback of the l-scan, 0 = unlimited
    bool use_global = true;           ///< tau_HB = max(tau_V, tau_G); false gives tau_HB = tau_V
    std::size_t training_blocks = 0;  ///< calibration prefix used to estimate the baseline J_0

    void validate() const;
};

/// Projected maximum-likelihood J for one window of P_0 values.
///
/// The window log-likelihood ratio against the baseline J0 is
///   count * log(J / J0) - rate * (J - J0) * sum_p0,
/// maximised at count / (rate * sum_p0). The result is projected onto
/// {J : |J / J0 - 1| >= epsilon}; inside the excluded band the better of the
/// two band edges wins (lower edge on a tie). sum_p0 == 0 gives +inf.
double mle_J(double sum_p0, std::size_t count, double rate, double epsilon, double baseline = 1.0);

/// Window log-likelihood ratio at J (see mle_J).
double window_llr(double J, double sum_p0, std::size_t count, double rate, double baseline = 1.0);

struct GlrValue {
    double value = 0.0;            ///< G >= 0, +inf when a window has sum P_0 == 0
    double j_hat = 1.0;            ///< projected MLE of the maximising window
    std::size_t window_start = 0;  ///< 0-based index of l in the history
};

/// G(m) = max_l sup_{|J/J0-1| >= eps} sum_{i=l}^m log f(V(i); J) / f(V(i); J0),
/// clamped below at 0, over a history of P_0(V(i)) values. `window_cap` of 0
/// scans every l.
GlrValue glr_statistic(std::span<const double> p0_history, double rate, double epsilon,
                       std::size_t window_cap = 0, double baseline = 1.0);

enum class EventType { TauVk, TauV, TauG, TauHB };
std::string to_string(EventType type);

struct DetectorEvent {
    std::size_t time = 0;  ///< 1-based block index m
    EventType type = EventType::TauV;
    std::string variable;  ///< variable id, empty for global events
    double value = 0.0;
};

/// Sequential GLR detector over a stream of correlation snapshots. One
/// instance per stream; step() must be called serially.
class GlrDetector {
public:
    GlrDetector(std::size_t p, int n, DetectorConfig config, std::vector<std::string> variable_ids = {});

    /// Feeds snapshot m = steps() + 1 and returns the stopping-time events it
    /// triggered.
    std::vector<DetectorEvent> step(const CorrelationSnapshot& snapshot);

    [[nodiscard]] std::size_t p() const noexcept { return p_; }
    [[nodiscard]] int n() const noexcept { return n_; }
    [[nodiscard]] const DetectorConfig& config() const noexcept { return config_; }
    [[nodiscard]] const std::vector<std::string>& variable_ids() const noexcept { return ids_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] bool in_training() const noexcept { return steps_ < config_.training_blocks; }
    /// Number of post-training observations that feed the GLR.
    [[nodiscard]] std::size_t history_length() const noexcept { return global_.v.size(); }

    [[nodiscard]] const Vector& G() const noexcept { return g_; }
    [[nodiscard]] const Vector& j_hat() const noexcept { return j_hat_; }
    [[nodiscard]] double global_G() const noexcept { return global_g_; }
    [[nodiscard]] double global_j_hat() const noexcept { return global_j_hat_; }
    [[nodiscard]] const Vector& baseline() const noexcept { return baseline_; }
    [[nodiscard]] double global_baseline() const noexcept { return global_baseline_; }

    /// Post-training V_k(i) history of variable k.
    [[nodiscard]] const std::vector<double>& local_history(std::size_t k) const;
    [[nodiscard]] const std::vector<double>& global_history() const noexcept { return global_.v; }

    [[nodiscard]] std::optional<std::size_t> tau_V(std::size_t k) const;
    [[nodiscard]] std::optional<std::size_t> tau_V() const noexcept { return tau_v_; }
    [[nodiscard]] std::optional<std::size_t> tau_G() const noexcept { return tau_g_; }
    [[nodiscard]] std::optional<std::size_t> tau_HB() const noexcept { return tau_hb_; }

    /// True when the local statistic (and the global one, if used) is above
    /// threshold at the current step.
    [[nodiscard]] bool alarm_active() const noexcept;

    /// log max_{i <= m} f_V(V_k(i); J_hat_k), -inf before any history.
    [[nodiscard]] double peak_log_local_density(std::size_t k) const;
    /// log max_{i <= m} g(V(i); J_hat) of the global statistic.
    [[nodiscard]] double peak_log_global_density() const;

    /// J_hat used when evaluating densities: +inf estimates are capped.
    static constexpr double kDensityJCap = 1e6;

private:
    struct Track {
        std::vector<double> v;
        std::vector<double> p0;

        void push(double value, double p0_value);
    };

    void finish_training();
    [[nodiscard]] double peak_log_density(const Track& track, double j_hat, StatisticScope scope) const;

    std::size_t p_;
    int n_;
    DetectorConfig config_;
    std::vector<std::string> ids_;
    NullExceedance null_;
    double local_rate_;
    double global_rate_;

    std::size_t steps_ = 0;
    std::vector<Track> local_;
    Track global_;
    // calibration sums over the training prefix
    Vector train_sum_;
    double train_global_sum_ = 0.0;

    Vector baseline_;
    double global_baseline_ = 1.0;
    Vector g_;
    Vector j_hat_;
    double global_g_ = 0.0;
    double global_j_hat_ = 1.0;

    std::vector<std::optional<std::size_t>> tau_vk_;
    std::optional<std::size_t> tau_v_;
    std::optional<std::size_t> tau_g_;
    std::optional<std::size_t> tau_hb_;
};

/// tau_HB = max(tau_V, tau_G); throws StateError until both have fired.
std::size_t hub_time(const GlrDetector& detector);

/// D_k = 1 iff G_k ranks in the top q (ties to the lower index). Exactly q ones.
std::vector<int> top_q_decision(std::span<const double> G, std::size_t q);
std::vector<int> top_q_decision(const Vector& G, std::size_t q);

/// Indices of G sorted by decreasing value, ties by lower index.
std::vector<std::size_t> rank_by_statistic(std::span<const double> G);

}  // namespace geoqhd
