#include "geoqhd/data_io.hpp"
#include "geoqhd/error.hpp"
#include "geoqhd/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace geoqhd;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures{GEOQHD_FIXTURES};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const PricePanel& planted() {
    static const PricePanel panel = load_panel(kFixtures / "planted_panel.csv", DatasetMode::Cut);
    return panel;
}

ParsedConfig planted_config(std::vector<std::string> overrides = {}) {
    return load_config(kFixtures / "planted_config.json", overrides);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("geoqhd_pipeline_" + name);
    fs::remove_all(dir);
    return dir;
}

void expect_matches_golden(const std::vector<fs::path>& written, const fs::path& golden) {
    std::size_t golden_files = 0;
    for (const auto& entry : fs::directory_iterator(golden)) {
        (void)entry;
        ++golden_files;
    }
    EXPECT_EQ(written.size(), golden_files);
    for (const auto& path : written) {
        const fs::path expected = golden / path.filename();
        ASSERT_TRUE(fs::exists(expected)) << expected;
        EXPECT_EQ(slurp(path), slurp(expected)) << path.filename();
    }
}

}  // namespace

TEST(BlockStream, SplitsIntoFullBlocks) {
    const auto parsed = planted_config();
    const auto stream = make_block_stream(planted().prices, parsed.config);
    // 401 prices -> 400 returns -> 40 blocks of 10
    EXPECT_EQ(stream.blocks(), 40u);
    EXPECT_EQ(stream.block(1).rows(), 10u);
    EXPECT_EQ(stream.block(1).timestamps.front(), stream.returns.timestamps.front());
    EXPECT_EQ(stream.block_end(40), stream.returns.timestamps.back());
    EXPECT_THROW((void)stream.block(0), DomainError);
    EXPECT_THROW((void)stream.block(41), DomainError);

    auto big = parsed.config;
    big.block_size = 500;
    EXPECT_THROW(make_block_stream(planted().prices, big), DataError);
}

TEST(Detection, FindsThePlantedChange) {
    const auto run = run_detection(planted().prices, planted_config().config);
    ASSERT_TRUE(run.tau_HB.has_value());
    // the correlation change starts at return row 250 (block 26)
    EXPECT_GE(*run.tau_HB, 26u);
    EXPECT_LE(*run.tau_HB, 32u);
    EXPECT_EQ(run.V.rows(), 40);
    EXPECT_EQ(run.G.cols(), 8);
    Eigen::Index top = 0;
    run.G.row(static_cast<Eigen::Index>(*run.tau_HB - 1)).maxCoeff(&top);
    EXPECT_LT(top, 3);
    EXPECT_FALSE(run.events.empty());
}

TEST(Detection, HugeThresholdGivesHeaderOnlyEvents) {
    const auto parsed = planted_config({"detector.A_v=1e9", "detector.A=1e9"});
    const auto run = run_detection(planted().prices, parsed.config);
    EXPECT_TRUE(run.events.empty());
    EXPECT_FALSE(run.tau_HB.has_value());
    const auto report = detect_report(run, parsed);
    const auto it = std::find_if(report.tables.begin(), report.tables.end(), [](const Table& t) { return t.name == "events"; });
    ASSERT_NE(it, report.tables.end());
    EXPECT_TRUE(it->rows.empty());
    EXPECT_THROW(run_cluster(planted().prices, parsed.config), StateError);
}

TEST(Detection, ConstantAssetIsADataError) {
    std::string csv = "timestamp,A,B,C\n";
    for (int r = 0; r < 31; ++r) {
        csv += std::to_string(r) + "," + std::to_string(100 + (r * 7) % 5) + ",50," + std::to_string(10 + (r * 3) % 4) + "\n";
    }
    try {
        run_detection(parse_panel(csv, DatasetMode::Cut).prices, RunConfig{});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos);
    }
}

TEST(Detection, GoldenOutput) {
    const auto parsed = planted_config();
    const auto run = run_detection(planted().prices, parsed.config);
    const auto dir = scratch_dir("detect");
    const auto written = emit_report(detect_report(run, parsed, &planted().report), dir, ReportFormat::Csv);
    expect_matches_golden(written, kFixtures / "golden" / "detect");
    fs::remove_all(dir);
}

TEST(Cluster, GoldenOutput) {
    const auto parsed = planted_config();
    const auto run = run_cluster(planted().prices, parsed.config);
    const auto dir = scratch_dir("cluster");
    const auto written = emit_report(cluster_report(run, parsed), dir, ReportFormat::Csv);
    expect_matches_golden(written, kFixtures / "golden" / "cluster");
    fs::remove_all(dir);
}

TEST(Cluster, KEqualsPGivesSingletons) {
    const auto parsed = planted_config({"K=8"});
    const auto run = run_cluster(planted().prices, parsed.config);
    for (const auto& label : run.labels) {
        EXPECT_EQ(label.partition.cost, 0.0);
        for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(label.partition.medoids[label.partition.assignments[k]], k);
    }
}

TEST(Cluster, PureQhdWeightsMakeLabelsIdentical) {
    const auto parsed = planted_config({"weights.theta1=1", "weights.theta2=0", "weights.gamma1=1", "weights.gamma2=0"});
    const auto run = run_cluster(planted().prices, parsed.config);
    for (std::size_t l = 1; l < 3; ++l) {
        EXPECT_EQ(run.labels[l].distances.D, run.labels[0].distances.D);
        EXPECT_EQ(run.labels[l].partition.assignments, run.labels[0].partition.assignments);
        EXPECT_EQ(run.labels[l].lpm, run.labels[0].lpm);
        EXPECT_EQ(run.labels[l].consistency, run.labels[0].consistency);
    }
}

TEST(Cluster, ExplicitBlockAndValidation) {
    const auto run = run_cluster(planted().prices, planted_config({"cluster.at=35"}).config);
    EXPECT_EQ(run.at, 35u);
    EXPECT_FALSE(run.at_tau_hb);
    EXPECT_EQ(run.hubs, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_THROW(run_cluster(planted().prices, planted_config({"cluster.at=41"}).config), ConfigError);
    EXPECT_THROW(run_cluster(planted().prices, planted_config({"K=9"}).config), ConfigError);
    EXPECT_THROW(run_cluster(planted().prices, planted_config({"cluster.hubs=[\"Z\"]"}).config), ConfigError);
}

TEST(Cluster, EmpiricalHubsWhenNoneGiven) {
    const auto run = run_cluster(planted().prices, planted_config({"cluster.hubs=[]"}).config);
    EXPECT_TRUE(run.hubs_empirical);
    ASSERT_FALSE(run.hubs.empty());
    for (double v : run.labels[0].decision.decision) {
        EXPECT_TRUE(v == 0 || v == 1);
    }
}

TEST(Dmd, ThetaRowsAreDistributions) {
    const auto parsed = planted_config();
    const auto run = run_dmd(planted().prices, parsed.config);
    ASSERT_GT(run.theta.rows(), 1);
    EXPECT_EQ(run.theta.rows(), static_cast<Eigen::Index>(run.timestamps.size()));
    for (Eigen::Index r = 0; r < run.theta.rows(); ++r) {
        EXPECT_NEAR(run.theta.row(r).sum(), 1.0, 1e-12);
        EXPECT_GT(run.theta.row(r).minCoeff(), 0.0);
    }
    EXPECT_EQ(run.z.rows(), run.theta.rows());
    const auto short_panel = parse_panel("timestamp,A,B\n1,1,2\n2,2,1\n3,1,3\n", DatasetMode::Cut);
    EXPECT_THROW(run_dmd(short_panel.prices, parsed.config), DataError);
}

TEST(Report, BenchmarkSummaryFromTables) {
    Table results = results_table({TableRow{1, GridPoint{}, 0.5, 0.25, 0.1, 4, 2, 2, 3.0, 0},
                                   TableRow{2, GridPoint{}, 0.75, 0.5, 0.1, 4, 2, 2, 3.0, 0},
                                   TableRow{3, GridPoint{}, 1.0, 1.0, 0.0, 4, 2, 2, 3.0, 0}});
    Table verdicts = verdict_table({OrderingVerdict{0, 3, 2, 1.0, 0.75, true, 2, 0, 0.25}});
    // round-trip through the reader so every cell is text, as on disk
    const auto dir = scratch_dir("summary");
    const Report report{"benchmark", RunConfig{}, {}, {results, verdicts}};
    emit_report(report, dir, ReportFormat::Csv);
    const auto text = benchmark_summary(read_table(dir / "results.csv"), read_table(dir / "verdicts.csv"));
    EXPECT_NE(text.find("# Benchmark summary"), std::string::npos);
    EXPECT_NE(text.find("QCD+QHD"), std::string::npos);
    EXPECT_NE(text.find("holds"), std::string::npos);
    fs::remove_all(dir);
}
