#include "geoqhd/glr_detector.hpp"

#include "geoqhd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace geoqhd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void DetectorConfig::validate() const {
    if (!(epsilon_v > 0.0 && epsilon_v < 1.0)) {
        throw ConfigError("detector.epsilon_v=" + std::to_string(epsilon_v) + " must lie in (0, 1)");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ConfigError("detector.epsilon=" + std::to_string(epsilon) + " must lie in (0, 1)");
    }
    if (!(A_v >= 0.0)) {
        throw ConfigError("detector.A_v=" + std::to_string(A_v) + " must be >= 0");
    }
    if (!(A >= 0.0)) {
        throw ConfigError("detector.A=" + std::to_string(A) + " must be >= 0");
    }
    if (q < 1) {
        throw ConfigError("detector.q must be >= 1");
    }
}

double window_llr(double J, double sum_p0, std::size_t count, double rate, double baseline) {
    return static_cast<double>(count) * std::log(J / baseline) - rate * (J - baseline) * sum_p0;
}

double mle_J(double sum_p0, std::size_t count, double rate, double epsilon, double baseline) {
    if (count < 1) {
        throw DomainError("mle_J: window must hold at least one observation");
    }
    if (!(sum_p0 >= 0.0)) {
        throw DomainError("mle_J: sum of P0 values must be >= 0");
    }
    if (sum_p0 == 0.0) {
        return kInf;
    }
    const double unconstrained = static_cast<double>(count) / (rate * sum_p0);
    const double lower = baseline * (1.0 - epsilon);
    const double upper = baseline * (1.0 + epsilon);
    if (unconstrained <= lower || unconstrained >= upper) {
        return unconstrained;
    }
    const double at_lower = window_llr(lower, sum_p0, count, rate, baseline);
    const double at_upper = window_llr(upper, sum_p0, count, rate, baseline);
    return at_upper > at_lower ? upper : lower;
}

GlrValue glr_statistic(std::span<const double> p0_history, double rate, double epsilon, std::size_t window_cap,
                       double baseline) {
    if (p0_history.empty()) {
        throw StateError("glr_statistic: empty history");
    }
    const std::size_t m = p0_history.size();
    const std::size_t first = (window_cap == 0 || window_cap >= m) ? 0 : m - window_cap;

    GlrValue best{-kInf, 1.0, m - 1};
    double sum = 0.0;
    // scan l from m down so the running sum is the window sum
    for (std::size_t l = m; l-- > first;) {
        sum += p0_history[l];
        const std::size_t count = m - l;
        const double J = mle_J(sum, count, rate, epsilon, baseline);
        const double llr = std::isinf(J) ? kInf : window_llr(J, sum, count, rate, baseline);
        if (llr > best.value) {
            best = {llr, J, l};
        }
    }
    best.value = std::max(best.value, 0.0);
    return best;
}

std::string to_string(EventType type) {
    switch (type) {
        case EventType::TauVk: return "tauV_k";
        case EventType::TauV: return "tauV";
        case EventType::TauG: return "tauG";
        case EventType::TauHB: return "tauHB";
    }
    return "unknown";
}

void GlrDetector::Track::push(double value, double p0_value) {
    v.push_back(value);
    p0.push_back(p0_value);
}

GlrDetector::GlrDetector(std::size_t p, int n, DetectorConfig config, std::vector<std::string> variable_ids)
    : p_(p),
      n_(n),
      config_(config),
      ids_(std::move(variable_ids)),
      null_(n),
      local_rate_(poisson_rate(static_cast<int>(p), StatisticScope::Local)),
      global_rate_(poisson_rate(static_cast<int>(p), StatisticScope::Global)),
      local_(p),
      train_sum_(Vector::Zero(static_cast<Eigen::Index>(p))),
      baseline_(Vector::Ones(static_cast<Eigen::Index>(p))),
      g_(Vector::Zero(static_cast<Eigen::Index>(p))),
      j_hat_(Vector::Ones(static_cast<Eigen::Index>(p))),
      tau_vk_(p) {
    if (p < 2) {
        throw ConfigError("detector: need p >= 2 variables");
    }
    config_.validate();
    if (ids_.empty()) {
        for (std::size_t k = 0; k < p; ++k) ids_.push_back(std::to_string(k));
    }
    if (ids_.size() != p) {
        throw ConfigError("detector: " + std::to_string(ids_.size()) + " variable ids for p=" + std::to_string(p));
    }
}

const std::vector<double>& GlrDetector::local_history(std::size_t k) const {
    if (k >= p_) {
        throw DomainError("detector: variable index " + std::to_string(k) + " out of range");
    }
    return local_[k].v;
}

std::optional<std::size_t> GlrDetector::tau_V(std::size_t k) const {
    if (k >= p_) {
        throw DomainError("detector: variable index " + std::to_string(k) + " out of range");
    }
    return tau_vk_[k];
}

bool GlrDetector::alarm_active() const noexcept {
    if (history_length() == 0) return false;
    const bool local = g_.maxCoeff() > config_.A_v;
    return config_.use_global ? local && global_g_ > config_.A : local;
}

void GlrDetector::finish_training() {
    const double count = static_cast<double>(config_.training_blocks);
    for (std::size_t k = 0; k < p_; ++k) {
        const double s = train_sum_(static_cast<Eigen::Index>(k));
        baseline_(static_cast<Eigen::Index>(k)) = s > 0.0 ? std::min(count / (local_rate_ * s), kDensityJCap)
                                                          : kDensityJCap;
    }
    global_baseline_ = train_global_sum_ > 0.0
                           ? std::min(count / (global_rate_ * train_global_sum_), kDensityJCap)
                           : kDensityJCap;
    j_hat_ = baseline_;
    global_j_hat_ = global_baseline_;
}

std::vector<DetectorEvent> GlrDetector::step(const CorrelationSnapshot& snapshot) {
    if (snapshot.dimension() != p_) {
        throw StateError("detector: snapshot has dimension " + std::to_string(snapshot.dimension()) +
                         ", detector expects " + std::to_string(p_));
    }
    const Vector V = local_statistics(snapshot.R);
    const double global_v = V.maxCoeff();
    ++steps_;

    std::vector<DetectorEvent> events;
    if (steps_ <= config_.training_blocks) {
        for (std::size_t k = 0; k < p_; ++k) {
            train_sum_(static_cast<Eigen::Index>(k)) += null_(V(static_cast<Eigen::Index>(k)));
        }
        train_global_sum_ += null_(global_v);
        if (steps_ == config_.training_blocks) {
            finish_training();
        }
        return events;
    }

    const std::size_t m = steps_;
    for (std::size_t k = 0; k < p_; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        local_[k].push(V(kk), null_(V(kk)));
        const GlrValue res =
            glr_statistic(local_[k].p0, local_rate_, config_.epsilon_v, config_.window_cap, baseline_(kk));
        g_(kk) = res.value;
        j_hat_(kk) = res.j_hat;
    }
    global_.push(global_v, null_(global_v));
    const GlrValue gres =
        glr_statistic(global_.p0, global_rate_, config_.epsilon, config_.window_cap, global_baseline_);
    global_g_ = gres.value;
    global_j_hat_ = gres.j_hat;

    for (std::size_t k = 0; k < p_; ++k) {
        const double gk = g_(static_cast<Eigen::Index>(k));
        if (!tau_vk_[k] && gk > config_.A_v) {
            tau_vk_[k] = m;
            events.push_back({m, EventType::TauVk, ids_[k], gk});
        }
    }
    if (!tau_v_ && g_.maxCoeff() > config_.A_v) {
        tau_v_ = m;
        Eigen::Index top = 0;
        g_.maxCoeff(&top);
        events.push_back({m, EventType::TauV, ids_[static_cast<std::size_t>(top)], g_(top)});
    }
    if (!tau_g_ && global_g_ > config_.A) {
        tau_g_ = m;
        events.push_back({m, EventType::TauG, "", global_g_});
    }
    if (!tau_hb_) {
        if (config_.use_global && tau_v_ && tau_g_) {
            tau_hb_ = std::max(*tau_v_, *tau_g_);
        } else if (!config_.use_global && tau_v_) {
            tau_hb_ = *tau_v_;
        }
        if (tau_hb_) {
            events.push_back({*tau_hb_, EventType::TauHB, "", g_.maxCoeff()});
        }
    }
    return events;
}

double GlrDetector::peak_log_density(const Track& track, double j_hat, StatisticScope scope) const {
    if (track.v.empty()) {
        return -kInf;
    }
    DensityParams params{n_, static_cast<int>(p_), std::min(j_hat, kDensityJCap)};
    const double rate = poisson_rate(params.p, scope);
    const double log_j = std::log(params.J);
    double best = -kInf;
    for (std::size_t i = 0; i < track.v.size(); ++i) {
        const double k = null_.kernel(track.v[i]);
        if (k <= 0.0) continue;
        best = std::max(best, std::log(rate) + log_j + std::log(k) - rate * params.J * track.p0[i]);
    }
    return best;
}

double GlrDetector::peak_log_local_density(std::size_t k) const {
    if (k >= p_) {
        throw DomainError("detector: variable index " + std::to_string(k) + " out of range");
    }
    return peak_log_density(local_[k], j_hat_(static_cast<Eigen::Index>(k)), StatisticScope::Local);
}

double GlrDetector::peak_log_global_density() const {
    return peak_log_density(global_, global_j_hat_, StatisticScope::Global);
}

std::size_t hub_time(const GlrDetector& detector) {
    const auto tau = detector.tau_HB();
    if (!tau) {
        throw StateError("hub_time: not ready, tau_V and tau_G have not both fired");
    }
    return *tau;
}

std::vector<std::size_t> rank_by_statistic(std::span<const double> G) {
    std::vector<std::size_t> order(G.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return G[a] > G[b]; });
    return order;
}

std::vector<int> top_q_decision(std::span<const double> G, std::size_t q) {
    if (q > G.size()) {
        throw ConfigError("top_q_decision: q=" + std::to_string(q) + " exceeds p=" + std::to_string(G.size()));
    }
    std::vector<int> decision(G.size(), 0);
    const auto order = rank_by_statistic(G);
    for (std::size_t r = 0; r < q; ++r) {
        decision[order[r]] = 1;
    }
    return decision;
}

std::vector<int> top_q_decision(const Vector& G, std::size_t q) {
    return top_q_decision(std::span<const double>(G.data(), static_cast<std::size_t>(G.size())), q);
}

}  // namespace geoqhd
