#include "geoqhd/simulation.hpp"

#include "geoqhd/error.hpp"
#include "geoqhd/rmt_density.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <thread>

namespace geoqhd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

bool is_hub(const ChangeScenario& s, std::size_t k) {
    return std::find(s.hub_set.begin(), s.hub_set.end(), k) != s.hub_set.end();
}

}  // namespace

void ChangeScenario::validate() const {
    if (p < 2) {
        throw ConfigError("scenario.p=" + std::to_string(p) + " must be >= 2");
    }
    if (n < 5) {
        throw ConfigError("scenario.n=" + std::to_string(n) + " must be >= 5");
    }
    if (pre_sigma.size() != 0) {
        if (pre_sigma.rows() != static_cast<Eigen::Index>(p) || pre_sigma.cols() != static_cast<Eigen::Index>(p)) {
            throw ConfigError("scenario.pre_sigma must be p x p");
        }
        if (!pre_sigma.isApprox(pre_sigma.transpose(), 1e-12)) {
            throw ConfigError("scenario.pre_sigma must be symmetric");
        }
        Eigen::LLT<Matrix> llt(pre_sigma);
        if (llt.info() != Eigen::Success) {
            throw ConfigError("scenario.pre_sigma must be positive definite");
        }
    }
    if (block_size > 0) {
        if (pre_sigma.size() != 0) {
            throw ConfigError("scenario: pre_sigma and block_size are mutually exclusive");
        }
        if (!(block_correlation >= 0.0 && block_correlation < 1.0)) {
            throw ConfigError("scenario.block_correlation=" + std::to_string(block_correlation) +
                              " must lie in [0, 1)");
        }
    }
    if (hub_set.empty()) {
        throw ConfigError("scenario.hub_set must not be empty");
    }
    for (std::size_t i = 0; i < hub_set.size(); ++i) {
        if (hub_set[i] >= p) {
            throw ConfigError("scenario.hub_set entry " + std::to_string(hub_set[i]) + " is not a variable");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (hub_set[i] == hub_set[j]) {
                throw ConfigError("scenario.hub_set has duplicate " + std::to_string(hub_set[i]));
            }
        }
    }
    if (!(post_correlation > 0.0 && post_correlation < 1.0)) {
        throw ConfigError("scenario.post_correlation=" + std::to_string(post_correlation) + " must lie in (0, 1)");
    }
    if (hub_set.size() * (hub_degree + 1) > p) {
        throw ConfigError("scenario: " + std::to_string(hub_set.size()) + " hubs with hub_degree=" +
                          std::to_string(hub_degree) + " need more than p=" + std::to_string(p) + " variables");
    }
    if (!std::isnan(spoke_correlation) && !(spoke_correlation >= 0.0 && spoke_correlation < 1.0)) {
        throw ConfigError("scenario.spoke_correlation must lie in [0, 1)");
    }
    if (horizon < 1 || change_time >= horizon) {
        throw ConfigError("scenario: change_time=" + std::to_string(change_time) + " must be < horizon=" +
                          std::to_string(horizon));
    }
}

std::vector<std::vector<std::size_t>> spoke_sets(const ChangeScenario& s) {
    std::vector<bool> taken(s.p, false);
    for (const std::size_t h : s.hub_set) taken[h] = true;
    std::vector<std::vector<std::size_t>> out;
    for (const std::size_t h : s.hub_set) {
        std::vector<std::size_t> spokes;
        for (std::size_t step = 1; step < s.p && spokes.size() < s.hub_degree; ++step) {
            const std::size_t k = (h + step) % s.p;
            if (!taken[k]) {
                taken[k] = true;
                spokes.push_back(k);
            }
        }
        out.push_back(std::move(spokes));
    }
    return out;
}

Matrix project_psd(const Matrix& sigma, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    const Vector lambda = eig.eigenvalues().cwiseMax(floor);
    Matrix out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    const Vector d = out.diagonal().cwiseSqrt().cwiseInverse();
    out = d.asDiagonal() * out * d.asDiagonal();
    out.diagonal().setOnes();
    return 0.5 * (out + out.transpose());
}

Matrix dispersion(const ChangeScenario& s, std::size_t m, bool* projected) {
    const auto p = static_cast<Eigen::Index>(s.p);
    Matrix sigma = Matrix::Identity(p, p);
    if (s.pre_sigma.size() != 0) {
        sigma = s.pre_sigma;
    } else if (s.block_size > 0) {
        const std::size_t groups = (s.p + s.block_size - 1) / s.block_size;
        for (std::size_t g = 0; g < groups; ++g) {
            double level = s.block_correlation;
            if (s.rotation_period > 0) {
                const double phase = 2.0 * std::numbers::pi *
                                     (static_cast<double>(m) / static_cast<double>(s.rotation_period) +
                                      static_cast<double>(g) / static_cast<double>(groups));
                level *= 0.5 * (1.0 + std::cos(phase));
            }
            const std::size_t lo = g * s.block_size;
            const std::size_t hi = std::min(s.p, lo + s.block_size);
            for (std::size_t i = lo; i < hi; ++i) {
                for (std::size_t j = lo; j < hi; ++j) {
                    if (i != j) sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = level;
                }
            }
        }
    }
    if (m <= s.change_time) {
        return sigma;
    }

    const double rho = s.post_correlation;
    const double spoke_rho = std::isnan(s.spoke_correlation) ? rho * rho : s.spoke_correlation;
    const auto spokes = spoke_sets(s);
    // owner[k]: hub position that variable k belongs to, as hub (role 0) or spoke (role 1)
    std::vector<int> owner(s.p, -1);
    std::vector<int> role(s.p, 0);
    for (std::size_t h = 0; h < s.hub_set.size(); ++h) {
        owner[s.hub_set[h]] = static_cast<int>(h);
        for (const std::size_t k : spokes[h]) {
            owner[k] = static_cast<int>(h);
            role[k] = 1;
        }
    }
    for (std::size_t i = 0; i < s.p; ++i) {
        for (std::size_t j = 0; j < s.p; ++j) {
            if (i == j || (owner[i] < 0 && owner[j] < 0)) continue;
            double value = 0.0;
            if (owner[i] >= 0 && owner[j] >= 0) {
                if (owner[i] == owner[j]) {
                    value = (role[i] + role[j] == 1) ? rho : spoke_rho;
                } else {
                    // hubs are mutually rho; a spoke reaches another hub through its own hub
                    value = rho;
                    if (role[i] == 1) value *= rho;
                    if (role[j] == 1) value *= rho;
                }
            }
            sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        if (projected) *projected = true;
        return project_psd(sigma);
    }
    return sigma;
}

DataMatrix generate_block(const ChangeScenario& s, std::size_t m) {
    const Matrix sigma = dispersion(s, m);
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw StateError("generate_block: dispersion of block " + std::to_string(m) + " is not positive definite");
    }
    const Matrix L = llt.matrixL();

    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto rows = static_cast<Eigen::Index>(s.n);
    const auto p = static_cast<Eigen::Index>(s.p);
    Matrix Z(rows, p);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < p; ++c) {
            Z(r, c) = normal(rng);
        }
    }
    DataMatrix out;
    out.values = Z * L.transpose();
    out.variable_ids.reserve(s.p);
    for (std::size_t k = 0; k < s.p; ++k) out.variable_ids.push_back("X" + std::to_string(k));
    for (Eigen::Index r = 0; r < rows; ++r) {
        out.timestamps.push_back(std::to_string((m - 1) * s.n + static_cast<std::size_t>(r)));
    }
    return out;
}

double rho_for_j_magnitude(double J, std::size_t p, int n) {
    if (!(J > 0.0) || p < 2) {
        throw DomainError("rho_for_j_magnitude: need J > 0 and p >= 2");
    }
    const double target = 1.0 / (static_cast<double>(p - 1) * J);
    if (!(target < 1.0)) {
        throw DomainError("rho_for_j_magnitude: J=" + std::to_string(J) + " too small for p=" + std::to_string(p));
    }
    const NullExceedance null(n);
    auto f = [&](double rho) { return null(rho) - target; };
    std::uintmax_t iterations = 200;
    const auto [lo, hi] =
        boost::math::tools::toms748_solve(f, 0.0, 1.0, boost::math::tools::eps_tolerance<double>(50), iterations);
    return 0.5 * (lo + hi);
}

void TrialConfig::validate() const {
    detector.validate();
    weights.validate();
    dmd.validate();
    if (K < 1) {
        throw ConfigError("K must be >= 1");
    }
    if (rolling_window < 3) {
        throw ConfigError("rolling_window=" + std::to_string(rolling_window) + " must be >= 3");
    }
}

MetricWeights label_weights(const MetricWeights& w, std::size_t label) {
    switch (label) {
        case 0: return {1.0, 0.0, 1.0, 0.0};
        case 1: return {w.theta1, w.theta2, 1.0, 0.0};
        case 2: return w;
        default: throw DomainError("label index " + std::to_string(label) + " out of range");
    }
}

std::optional<double> TrialRecord::mcp(std::size_t label) const {
    if (events.empty()) return std::nullopt;
    std::vector<double> v;
    v.reserve(events.size());
    for (const auto& e : events) v.push_back(e.lpm.at(label));
    return geoqhd::mcp(v)->mean;
}

TrialRecord run_trial(const ChangeScenario& scenario, const TrialConfig& config) {
    scenario.validate();
    config.validate();
    if (config.evaluate_clusters && config.K > scenario.p) {
        throw ConfigError("K=" + std::to_string(config.K) + " exceeds p=" + std::to_string(scenario.p));
    }
    const std::size_t q = config.q == 0 ? scenario.hub_set.size() : config.q;
    if (q > scenario.p) {
        throw ConfigError("q=" + std::to_string(q) + " exceeds p=" + std::to_string(scenario.p));
    }

    TrialRecord rec;
    rec.seed = scenario.seed;

    std::vector<DataMatrix> blocks;
    blocks.reserve(scenario.horizon);
    for (std::size_t m = 1; m <= scenario.horizon; ++m) {
        bool projected = false;
        dispersion(scenario, m, &projected);
        if (projected) ++rec.psd_projections;
        blocks.push_back(generate_block(scenario, m));
    }

    // DMD runs on the concatenated stream, one update per block end
    const bool use_dmd = config.evaluate_clusters && config.weights.gamma2 != 0.0;
    std::optional<RollingCorrelationPanel> panel;
    std::optional<DmdModel> dmd;
    if (use_dmd) {
        const auto n = static_cast<Eigen::Index>(scenario.n);
        Matrix stream(n * static_cast<Eigen::Index>(scenario.horizon), static_cast<Eigen::Index>(scenario.p));
        for (std::size_t m = 0; m < blocks.size(); ++m) {
            stream.middleRows(static_cast<Eigen::Index>(m) * n, n) = blocks[m].values;
        }
        if (stream.rows() >= static_cast<Eigen::Index>(config.rolling_window)) {
            panel = rolling_correlations(stream, config.rolling_window);
        }
        dmd.emplace(blocks.front().variable_ids, config.dmd);
    }

    GlrDetector detector(scenario.p, scenario.n, config.detector, blocks.front().variable_ids);
    for (std::size_t m = 1; m <= scenario.horizon; ++m) {
        detector.step(correlation_of(blocks[m - 1].values, m));

        Vector dmd_z;
        if (panel) {
            const std::size_t last_row = m * static_cast<std::size_t>(scenario.n) - 1;
            if (last_row + 1 >= config.rolling_window) {
                const std::size_t k = last_row + 1 - config.rolling_window;
                if (k >= config.dmd.lookback) {
                    dmd->update(*panel, k);
                }
            }
            if (dmd->history().size() >= 2) {
                const Matrix z = standardize_dmd(dmd->history());
                dmd_z = z.row(z.rows() - 1).transpose();
            } else {
                dmd_z = Vector::Zero(static_cast<Eigen::Index>(scenario.p));
            }
        }

        if (detector.tau_HB() && *detector.tau_HB() == m) {
            rec.tau_V = detector.tau_V();
            rec.tau_G = detector.tau_G();
            rec.tau_HB = m;
            rec.false_alarm = m <= scenario.change_time;
            if (!rec.false_alarm) rec.delay = static_cast<double>(m - scenario.change_time);
            const auto ranked = rank_by_statistic(as_span(detector.G()));
            rec.top1 = ranked.front();
            rec.hub_recovered = is_hub(scenario, ranked.front());
            const auto decision = top_q_decision(detector.G(), q);
            std::size_t agree = 0;
            double jsum = 0.0;
            for (std::size_t k = 0; k < scenario.p; ++k) {
                if ((decision[k] == 1) == is_hub(scenario, k)) ++agree;
            }
            for (const std::size_t h : scenario.hub_set) {
                jsum += std::min(detector.j_hat()(static_cast<Eigen::Index>(h)), GlrDetector::kDensityJCap);
            }
            rec.decision_accuracy = static_cast<double>(agree) / static_cast<double>(scenario.p);
            rec.realized_j = jsum / static_cast<double>(scenario.hub_set.size());
        }

        const bool event = config.evaluate_clusters && rec.tau_HB && m > scenario.change_time &&
                           detector.alarm_active() &&
                           (config.max_events == 0 || rec.events.size() < config.max_events);
        if (!event) continue;

        DistanceInputs in = DistanceInputs::from_detector(detector);
        in.dmd_z = dmd_z;
        const auto G = as_span(detector.G());
        TrialEvent ev;
        ev.time = m;
        const std::uint64_t cluster_seed = splitmix64(scenario.seed ^ (m << 8));
        for (std::size_t label = 0; label < kLabelCount; ++label) {
            const auto metric = static_cast<MetricLabel>(label + 1);
            const DistanceMatrix D = distance_matrix(in, metric, label_weights(config.weights, label), config.distance);
            const ClusterPartition part = kmedoids(D.D, config.K, cluster_seed);
            ev.lpm[label] = lpm(part, scenario.hub_set, G);
            ev.density_fallback[label] = D.density_fallback;
            const GeometricDecision gd = geometric_decision(part, G, q);
            ConsistencyEvent ce;
            ce.decision = gd.fallback ? std::vector<int>(scenario.p, 0) : gd.decision;
            ce.membership.assign(scenario.p, 0);
            for (const std::size_t k : part.members(gd.cluster)) ce.membership[k] = 1;
            ev.consistency[label] = std::move(ce);
        }
        rec.events.push_back(std::move(ev));
    }
    rec.censored = !rec.tau_HB.has_value();
    return rec;
}

ChangeScenario correlated_family_scenario() {
    ChangeScenario s;
    s.p = 12;
    s.n = 10;
    s.block_size = 4;
    s.block_correlation = 0.4;
    s.rotation_period = 20;
    s.hub_set = {1, 5, 9};
    s.post_correlation = 0.8;
    s.change_time = 30;
    s.horizon = 50;
    return s;
}

ScenarioFamily correlated_family() {
    ScenarioFamily f;
    f.scenario = correlated_family_scenario();
    f.plant_from_j = false;
    f.trial.rolling_window = 20;
    f.trial.dmd.lookback = 20;
    f.trial.distance.minmax_scale = true;
    f.trial.max_events = 5;
    return f;
}

GridPoint correlated_family_point() {
    return {10.0, 15.0, 0.5, 0.5, 3, -1.0};
}

ChangeScenario scenario_for(const ScenarioFamily& family, const GridPoint& point, std::uint64_t seed) {
    ChangeScenario s = family.scenario;
    if (family.plant_from_j) {
        s.post_correlation = rho_for_j_magnitude(point.j_magnitude, s.p, s.n);
    }
    s.seed = seed;
    return s;
}

TrialConfig trial_config_for(const ScenarioFamily& family, const GridPoint& point) {
    TrialConfig c = family.trial;
    c.detector.A_v = point.A;
    c.detector.A = point.A;
    c.weights.theta1 = point.theta;
    c.weights.theta2 = 1.0 - point.theta;
    c.weights.gamma1 = 1.0 - point.gamma;
    c.weights.gamma2 = point.gamma;
    c.K = point.K;
    c.dmd.phi = point.phi;
    return c;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t grid_index, std::size_t trial_index) {
    return splitmix64(splitmix64(splitmix64(master_seed) ^ grid_index) ^ trial_index);
}

namespace {

/// Mean of values after sorting, so the result is independent of input order.
double ordered_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<TableRow> aggregate(const GridPoint& point, const std::vector<TrialRecord>& trials) {
    std::size_t detected = 0;
    std::size_t false_alarms = 0;
    std::vector<double> delays;
    for (const auto& t : trials) {
        if (t.false_alarm) ++false_alarms;
        if (t.delay) {
            ++detected;
            delays.push_back(*t.delay);
        }
    }
    std::vector<TableRow> rows;
    for (std::size_t label = 0; label < kLabelCount; ++label) {
        TableRow row;
        row.label = static_cast<int>(label + 1);
        row.config = point;
        row.trials = trials.size();
        row.detected = detected;
        row.false_alarms = false_alarms;
        if (!delays.empty()) row.mean_delay = ordered_mean(delays);
        std::vector<double> pooled;
        for (const auto& t : trials) {
            for (const auto& e : t.events) pooled.push_back(e.lpm[label]);
        }
        std::sort(pooled.begin(), pooled.end());
        if (const auto s = mcp(pooled)) {
            row.mean = s->mean;
            row.min = s->min;
            row.std = s->std;
            row.events = s->events;
        }
        rows.push_back(row);
    }
    return rows;
}

double sign_test_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0 || wins == 0) return 1.0;
    const boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
    return boost::math::cdf(boost::math::complement(dist, static_cast<double>(wins - 1)));
}

std::vector<OrderingVerdict> ordering_verdicts(std::size_t grid_index, const std::vector<TrialRecord>& trials) {
    std::vector<OrderingVerdict> out;
    for (const auto& [hi, lo] : {std::pair{3, 2}, std::pair{2, 1}}) {
        OrderingVerdict v;
        v.grid_index = grid_index;
        v.higher = hi;
        v.lower = lo;
        std::vector<double> a;
        std::vector<double> b;
        for (const auto& t : trials) {
            const auto mh = t.mcp(static_cast<std::size_t>(hi - 1));
            const auto ml = t.mcp(static_cast<std::size_t>(lo - 1));
            if (!mh || !ml) continue;
            a.push_back(*mh);
            b.push_back(*ml);
            if (*mh > *ml) ++v.wins;
            if (*mh < *ml) ++v.losses;
        }
        if (!a.empty()) {
            v.mean_higher = ordered_mean(a);
            v.mean_lower = ordered_mean(b);
            v.holds = v.mean_higher >= v.mean_lower;
        }
        v.sign_p = sign_test_p(v.wins, v.losses);
        out.push_back(v);
    }
    return out;
}

ExperimentResult run_experiment(const ScenarioFamily& family, const std::vector<GridPoint>& grid, std::size_t trials,
                                std::uint64_t master_seed, unsigned threads) {
    if (trials < 1) {
        throw ConfigError("trials must be >= 1");
    }
    ExperimentResult result;
    result.grid = grid;
    result.trials.resize(grid.size());
    for (auto& t : result.trials) t.resize(trials);

    // validate every configuration up front so worker threads never throw on bad input
    std::vector<TrialConfig> configs;
    for (const auto& point : grid) {
        configs.push_back(trial_config_for(family, point));
        configs.back().validate();
        scenario_for(family, point, 0).validate();
    }

    const std::size_t total = grid.size() * trials;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t job = next++; job < total && !failed; job = next++) {
            const std::size_t g = job / trials;
            const std::size_t t = job % trials;
            try {
                const ChangeScenario s = scenario_for(family, grid[g], trial_seed(master_seed, g, t));
                result.trials[g][t] = run_trial(s, configs[g]);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(total)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (auto& row : aggregate(grid[g], result.trials[g])) result.rows.push_back(row);
        for (auto& v : ordering_verdicts(g, result.trials[g])) result.verdicts.push_back(v);
    }
    return result;
}

}  // namespace geoqhd
