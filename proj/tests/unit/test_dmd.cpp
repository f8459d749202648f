#include "geoqhd/dmd.hpp"
#include "geoqhd/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace geoqhd;
using geoqhd::testing::gaussian;

namespace {

// hand-built panel over 3 assets {a,b,c}; pairs ab, ac, bc
RollingCorrelationPanel three_asset_panel() {
    RollingCorrelationPanel panel;
    panel.n_variables = 3;
    panel.pair_ids = enumerate_pairs(3);
    panel.window = 3;
    panel.series.resize(4, 3);
    panel.series.col(0) << 0.5, 0.5, 0.5, 0.5;
    panel.series.col(1) << 0.45, 0.5, 0.55, 0.5;
    panel.series.col(2) << -0.9, 0.8, -0.7, 0.9;
    panel.end_rows = {2, 3, 4, 5};
    return panel;
}

struct Replay {
    Vector rc;
    Vector assets;
    std::size_t events = 0;
};

// scalar loop over all pair-of-pairs at timestamp k
Replay brute_force(const RollingCorrelationPanel& panel, std::size_t k, std::size_t lookback, double phi, bool standardized) {
    const std::size_t P = panel.n_pairs();
    std::vector<std::tuple<std::size_t, std::size_t, double>> d;
    for (std::size_t a = 0; a < P; ++a) {
        for (std::size_t b = a + 1; b < P; ++b) {
            double s = 0;
            std::size_t valid = 0;
            for (std::size_t t = k - lookback; t <= k; ++t) {
                const double x = panel.series(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(a));
                const double y = panel.series(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b));
                if (std::isnan(x) || std::isnan(y)) continue;
                s += (x - y) * (x - y);
                ++valid;
            }
            if (valid < 2) continue;
            d.emplace_back(a, b, std::sqrt(s * static_cast<double>(lookback + 1) / static_cast<double>(valid)));
        }
    }
    if (standardized && !d.empty()) {
        double mean = 0;
        for (auto& e : d) mean += std::get<2>(e);
        mean /= static_cast<double>(d.size());
        double var = 0;
        for (auto& e : d) var += (std::get<2>(e) - mean) * (std::get<2>(e) - mean);
        const double sd = std::sqrt(var / static_cast<double>(d.size()));
        for (auto& e : d) std::get<2>(e) = sd > 0 ? (std::get<2>(e) - mean) / sd : 0.0;
    }
    Replay r{Vector::Zero(static_cast<Eigen::Index>(P)), Vector::Zero(static_cast<Eigen::Index>(panel.n_variables)), 0};
    for (const auto& [a, b, dist] : d) {
        if (dist > phi) continue;
        ++r.events;
        r.rc(static_cast<Eigen::Index>(a)) += 1;
        r.rc(static_cast<Eigen::Index>(b)) += 1;
        for (std::size_t x : {panel.pair_ids[a].first, panel.pair_ids[a].second, panel.pair_ids[b].first, panel.pair_ids[b].second})
            r.assets(static_cast<Eigen::Index>(x)) += 1;
    }
    return r;
}

DmdConfig raw(double phi, std::size_t lookback) {
    DmdConfig c;
    c.phi = phi;
    c.lookback = lookback;
    c.scale = DistanceScale::Raw;
    return c;
}

}  // namespace

TEST(TeDistance, Examples) {
    const std::vector<double> a{0.5, 0.5, 0.5, 0.5};
    const std::vector<double> b{0.3, 0.3, 0.3, 0.3};
    EXPECT_EQ(*te_distance(a, a, 3, 3), 0.0);
    EXPECT_NEAR(*te_distance(a, b, 3, 3), 0.4, 1e-15);
    EXPECT_EQ(*te_distance(a, b, 3, 3), *te_distance(b, a, 3, 3));
}

TEST(TeDistance, ScalarLoopOracleAndMissing) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(60), y(60);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    double s = 0;
    for (int t = 10; t <= 50; ++t) s += (x[t] - y[t]) * (x[t] - y[t]);
    EXPECT_NEAR(*te_distance(x, y, 50, 40), std::sqrt(s), 1e-12);

    std::vector<double> z(y);
    z[20] = kMissing;
    double s2 = 0;
    for (int t = 10; t <= 50; ++t)
        if (t != 20) s2 += (x[t] - z[t]) * (x[t] - z[t]);
    EXPECT_NEAR(*te_distance(x, z, 50, 40), std::sqrt(s2 * 41.0 / 40.0), 1e-12);

    std::vector<double> holes(60, kMissing);
    holes[50] = 0.1;
    EXPECT_FALSE(te_distance(x, holes, 50, 40).has_value());
    EXPECT_THROW(te_distance(x, y, 5, 10), DomainError);
}

TEST(DmdUpdate, PhiBelowMinimumGivesPrior) {
    const auto panel = three_asset_panel();
    DmdModel m({"a", "b", "c"}, raw(-1.0, 3));
    m.update(panel, 3);
    EXPECT_EQ(m.last_events(), 0u);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(m.theta()(i), 1.0 / 3.0);
}

TEST(DmdUpdate, ThreeAssetExample) {
    const auto panel = three_asset_panel();
    // d(ab, ac) = sqrt(0.005); the bc series is far from both
    DmdModel m({"a", "b", "c"}, raw(0.1, 3));
    m.update(panel, 3);
    EXPECT_EQ(m.last_events(), 1u);
    EXPECT_EQ(m.rc_counts(), (Vector(3) << 1, 1, 0).finished());
    EXPECT_EQ(m.asset_counts(), (Vector(3) << 2, 1, 1).finished());
    const Vector theta = m.theta();
    EXPECT_NEAR(theta(0), 3.0 / 7.0, 1e-15);
    EXPECT_NEAR(theta(1), 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(theta(2), 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(dd_distance_raw(theta, 0, 1), 1.0 / 7.0, 1e-15);
}

TEST(DmdUpdate, InfinitePhiCountsCompletePairGraph) {
    const Matrix X = gaussian(40, 5, 2);
    const auto panel = rolling_correlations(X, 8);
    DmdModel m({"a", "b", "c", "d", "e"}, raw(std::numeric_limits<double>::infinity(), 10));
    m.update(panel, 20);
    const std::size_t P = 10;
    EXPECT_EQ(m.last_events(), P * (P - 1) / 2);
    for (Eigen::Index k = 0; k < 10; ++k) EXPECT_EQ(m.rc_counts()(k), static_cast<double>(P - 1));
    // each asset sits in 4 pairs; each pair pairs with 9 others
    for (Eigen::Index a = 0; a < 5; ++a) EXPECT_EQ(m.asset_counts()(a), 4.0 * 9.0);
}

TEST(DmdProbability, UniformPriorAndScaleInvariance) {
    const Vector zero = Vector::Zero(4);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(dmd_probability(zero, 1.0)(i), 0.25);
    const Vector c = (Vector(3) << 2, 1, 1).finished();
    EXPECT_LE((dmd_probability(c, 1.0) - dmd_probability(2 * c, 2.0)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(dmd_probability(c, 0.7).sum(), 1.0, 1e-15);
}

TEST(StandardizeDmd, Examples) {
    std::vector<Vector> constant(5, (Vector(2) << 0.3, 0.7).finished());
    EXPECT_EQ(standardize_dmd(constant).cwiseAbs().maxCoeff(), 0.0);
    std::vector<Vector> two{(Vector(1) << 0.2).finished(), (Vector(1) << 0.4).finished()};
    const Matrix z = standardize_dmd(two);
    EXPECT_NEAR(z(0, 0), -1.0, 1e-12);
    EXPECT_NEAR(z(1, 0), 1.0, 1e-12);
    EXPECT_THROW(standardize_dmd(std::vector<Vector>{two[0]}), DataError);
}

TEST(StandardizeDmd, TwoPassOracle) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Vector> h(9, Vector(4));
    for (auto& v : h)
        for (Eigen::Index i = 0; i < 4; ++i) v(i) = u(rng);
    const Matrix z = standardize_dmd(h);
    for (Eigen::Index a = 0; a < 4; ++a) {
        double mean = 0;
        for (const auto& v : h) mean += v(a) / 9.0;
        double var = 0;
        for (const auto& v : h) var += (v(a) - mean) * (v(a) - mean) / 9.0;
        for (std::size_t t = 0; t < 9; ++t)
            EXPECT_NEAR(z(static_cast<Eigen::Index>(t), a), (h[t](a) - mean) / std::sqrt(var), 1e-12);
    }
}

TEST(DdDistance, AntisymmetricZeroDiagonal) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Vector> h(5, Vector(3));
    for (auto& v : h)
        for (Eigen::Index i = 0; i < 3; ++i) v(i) = u(rng);
    const Matrix z = standardize_dmd(h);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(dd_distance(z, i, i, 2), 0.0);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(dd_distance(z, i, j, 4), -dd_distance(z, j, i, 4));
    }
    EXPECT_THROW(dd_distance(z, 0, 3, 0), DomainError);
    EXPECT_THROW(dd_distance(z, 0, 1, 5), DomainError);
}

TEST(DmdProperties, BruteForceEquivalenceAndConservation) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> phis(-1.5, 1.5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t p = 3 + trial % 4;
        const auto panel = rolling_correlations(gaussian(60, p, 100 + static_cast<std::uint64_t>(trial)), 10);
        const bool standardized = trial % 2 == 0;
        DmdConfig cfg = raw(standardized ? phis(rng) : 2.0 + phis(rng), 12);
        if (standardized) cfg.scale = DistanceScale::Standardized;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < p; ++i) ids.push_back("x" + std::to_string(i));
        DmdModel m(ids, cfg);
        const std::size_t k = 20 + trial % 25;
        m.update(panel, k);
        const Replay want = brute_force(panel, k, 12, cfg.phi, standardized);
        EXPECT_EQ(m.rc_counts(), want.rc);
        EXPECT_EQ(m.asset_counts(), want.assets);
        EXPECT_EQ(m.last_events(), want.events);
        EXPECT_EQ(m.rc_counts().sum(), 2.0 * static_cast<double>(m.last_events()));
        EXPECT_EQ(m.asset_counts().sum(), 4.0 * static_cast<double>(m.last_events()));
        EXPECT_NEAR(m.theta().sum(), 1.0, 1e-14);
    }
}

TEST(DmdProperties, MonotoneInPhi) {
    const auto panel = rolling_correlations(gaussian(50, 5, 4), 10);
    std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    Vector prev = Vector::Zero(5);
    for (double phi : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0}) {
        DmdConfig cfg;
        cfg.phi = phi;
        cfg.lookback = 15;
        DmdModel m(ids, cfg);
        m.update(panel, 30);
        EXPECT_TRUE((m.asset_counts().array() >= prev.array()).all());
        prev = m.asset_counts();
    }
}

TEST(DmdProperties, RelabelingPermutesTheta) {
    const Matrix X = gaussian(50, 4, 10);
    const std::vector<Eigen::Index> perm{2, 0, 3, 1};
    Matrix Y(50, 4);
    for (Eigen::Index j = 0; j < 4; ++j) Y.col(j) = X.col(perm[static_cast<std::size_t>(j)]);
    DmdConfig cfg;
    cfg.lookback = 10;
    cfg.phi = 0.0;
    DmdModel a({"a", "b", "c", "d"}, cfg), b({"c", "a", "d", "b"}, cfg);
    a.update(rolling_correlations(X, 8), 25);
    b.update(rolling_correlations(Y, 8), 25);
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(b.theta()(j), a.theta()(perm[static_cast<std::size_t>(j)]), 1e-15);
}

TEST(DmdModel, TrailingModeDecays) {
    const auto panel = three_asset_panel();
    DmdConfig cfg = raw(0.1, 3);
    cfg.mode = AccumulationMode::Trailing;
    cfg.decay = 0.5;
    DmdModel m({"a", "b", "c"}, cfg);
    m.update(panel, 3);
    m.update(panel, 3);
    EXPECT_EQ(m.asset_counts(), (Vector(3) << 3, 1.5, 1.5).finished());
    EXPECT_EQ(m.history().size(), 2u);
    EXPECT_EQ(m.asset_index("c"), 2u);
    EXPECT_THROW((void)m.asset_index("z"), DomainError);
}

TEST(DmdConfig, Validation) {
    DmdConfig c;
    c.prior = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = DmdConfig{};
    c.decay = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = DmdConfig{};
    c.lookback = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}
