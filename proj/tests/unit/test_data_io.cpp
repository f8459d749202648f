#include "geoqhd/data_io.hpp"
#include "geoqhd/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace geoqhd;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures{GEOQHD_FIXTURES};

std::string complete_csv() {
    return "timestamp,A,B,C\n"
           "1,10,20,30\n"
           "2,11,21,31\n"
           "3,12,22,32\n"
           "4,13,23,33\n";
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("geoqhd_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Table sample_table() {
    Table t{"sample", {"name", "count", "value", "empty"}, {}};
    t.add({std::string("a,b"), std::int64_t{3}, 0.1, std::monostate{}});
    t.add({std::string("plain"), std::int64_t{-7}, std::numeric_limits<double>::infinity(), 2.5});
    t.add({std::string("nan"), std::int64_t{0}, std::numeric_limits<double>::quiet_NaN(), 1e-300});
    return t;
}

}  // namespace

TEST(Panel, CompleteFileIsIdenticalUnderBothModes) {
    const auto cut = parse_panel(complete_csv(), DatasetMode::Cut);
    const auto uncut = parse_panel(complete_csv(), DatasetMode::Uncut);
    EXPECT_EQ(cut.prices.values, uncut.prices.values);
    EXPECT_EQ(cut.prices.timestamps, uncut.prices.timestamps);
    EXPECT_EQ(cut.prices.variable_ids, (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(cut.report.rows_kept, 4u);
    EXPECT_EQ(cut.report.rows_dropped, 0u);
}

TEST(Panel, OneMissingCell) {
    const std::string csv = "timestamp,A,B\n1,10,20\n2,11,\n3,12,22\n";
    const auto cut = parse_panel(csv, DatasetMode::Cut);
    EXPECT_EQ(cut.prices.timestamps, (std::vector<std::string>{"1", "3"}));
    const auto uncut = parse_panel(csv, DatasetMode::Uncut);
    ASSERT_EQ(uncut.prices.rows(), 3u);
    EXPECT_EQ(uncut.prices.values(1, 1), 20.0);
    EXPECT_EQ(uncut.report.assets[1].filled, 1u);
    EXPECT_EQ(uncut.report.assets[1].missing, 1u);
    for (const char* token : {"NA", "NaN", "null"}) {
        std::string alt = csv;
        alt.replace(alt.find("11,") + 3, 0, token);
        EXPECT_EQ(parse_panel(alt, DatasetMode::Cut).prices.rows(), 2u) << token;
    }
}

TEST(Panel, MixedSessionFixtureAudit) {
    // S3 starts at row 4; S5 is absent at rows 17, 18 and 30 (41 rows)
    const auto cut = load_panel(kFixtures / "mixed_sessions.csv", DatasetMode::Cut);
    EXPECT_EQ(cut.report.rows_read, 41u);
    EXPECT_EQ(cut.report.rows_kept, 34u);
    EXPECT_EQ(cut.report.rows_dropped, 7u);
    EXPECT_EQ(cut.prices.timestamps.front(), "4");
    EXPECT_EQ(std::count(cut.prices.timestamps.begin(), cut.prices.timestamps.end(), "17"), 0);
    EXPECT_EQ(cut.report.assets[3].missing, 4u);
    EXPECT_EQ(cut.report.assets[5].missing, 3u);

    const auto uncut = load_panel(kFixtures / "mixed_sessions.csv", DatasetMode::Uncut);
    EXPECT_EQ(uncut.report.rows_kept, 37u);
    EXPECT_EQ(uncut.report.rows_dropped, 4u);
    EXPECT_EQ(uncut.report.assets[5].filled, 3u);
    EXPECT_EQ(uncut.report.assets[3].filled, 0u);
    const auto row16 = std::find(uncut.prices.timestamps.begin(), uncut.prices.timestamps.end(), "16") -
                       uncut.prices.timestamps.begin();
    EXPECT_EQ(uncut.prices.values(row16 + 1, 5), uncut.prices.values(row16, 5));
    EXPECT_EQ(uncut.prices.values(row16 + 2, 5), uncut.prices.values(row16, 5));
    for (const auto& r : {cut.report, uncut.report}) EXPECT_EQ(r.rows_read, r.rows_kept + r.rows_dropped);
}

TEST(Panel, MalformedInputsNameTheProblem) {
    auto message = [](const std::string& csv) {
        try {
            (void)parse_panel(csv, DatasetMode::Cut);
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("").find("empty"), std::string::npos);
    EXPECT_NE(message("timestamp,A\n1,2\n").find("at least 2 assets"), std::string::npos);
    EXPECT_NE(message("timestamp,A,A\n1,2,3\n").find("duplicate"), std::string::npos);
    EXPECT_NE(message("timestamp,A,B\n1,2\n").find("line 2"), std::string::npos);
    EXPECT_NE(message("timestamp,A,B\n1,2,x\n").find("'x'"), std::string::npos);
    EXPECT_NE(message("timestamp,A,B\n2,1,1\n1,1,1\n").find("strictly increasing"), std::string::npos);
    // numeric timestamps compare as numbers, not strings
    EXPECT_EQ(message("timestamp,A,B\n9,1,1\n10,1,1\n"), "");
    EXPECT_THROW(load_panel(kFixtures / "missing.csv", DatasetMode::Cut), DataError);
}

TEST(Config, DefaultsAreFullyEchoed) {
    const auto parsed = parse_config("{}");
    const auto j = config_to_json(parsed.config);
    for (const char* key : {"schema_version", "returns", "block_size", "rolling_window", "detector", "weights", "K",
                            "dmd", "distance", "j_magnitude", "seed", "dataset", "cluster", "benchmark"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(parsed.config.block_size, 10u);
    EXPECT_EQ(parsed.config.K, 5u);
    EXPECT_TRUE(parsed.warnings.empty());
}

TEST(Config, RoundTripThroughEmit) {
    auto parsed = parse_config(R"({"K": 3, "seed": 99, "weights": {"theta1": 0.25, "theta2": 0.75},
                                    "dmd": {"phi": -1.5, "mode": "trailing"}, "dataset": "uncut",
                                    "benchmark": {"grid": ["10 3 1 0 5 2", "2 0 0.98 0.05 5 2"]}})");
    const std::string once = emit_config(parsed.config);
    const std::string twice = emit_config(parse_config(once).config);
    EXPECT_EQ(once, twice);
    EXPECT_EQ(parse_config(once).config.benchmark.grid.size(), 2u);
}

TEST(Config, TableRowShorthand) {
    const auto parsed = parse_config(R"({"row": "2 0 0.98 0.05 5 2"})");
    const auto& c = parsed.config;
    EXPECT_EQ(c.weights.theta1, 0.98);
    EXPECT_NEAR(c.weights.theta2, 0.02, 1e-15);
    EXPECT_EQ(c.weights.gamma2, 0.05);
    EXPECT_EQ(c.weights.gamma1, 0.95);
    EXPECT_EQ(c.K, 5u);
    EXPECT_EQ(c.dmd.phi, 2.0);
    EXPECT_EQ(c.detector.A, 0.0);
    EXPECT_EQ(c.j_magnitude, 2.0);
    // explicit keys win over the row
    EXPECT_EQ(parse_config(R"({"row": "2 0 0.98 0.05 5 2", "K": 4})").config.K, 4u);
    const auto g = parse_table_row("2 0 0.98 0.05 5 2");
    EXPECT_EQ(parse_table_row(format_table_row(g)).theta, 0.98);
    EXPECT_THROW(parse_table_row("2 0 0.98 0.05 5"), ConfigError);
    EXPECT_THROW(parse_table_row("2 0 1.5 0.05 5 2"), ConfigError);
    EXPECT_THROW(parse_table_row("2 0 x 0.05 5 2"), ConfigError);
}

TEST(Config, RejectionsNameKeyAndValue) {
    auto message = [](const std::string& text, std::vector<std::string> overrides = {}) {
        try {
            (void)parse_config(text, overrides);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message(R"({"weights": {"theta1": 0.7, "theta2": 0.2}})").find("theta1 + theta2"), std::string::npos);
    EXPECT_NE(message(R"({"bogus": 1})").find("bogus"), std::string::npos);
    EXPECT_NE(message(R"({"detector": {"nope": 1}})").find("detector.nope"), std::string::npos);
    EXPECT_NE(message(R"({"block_size": 2})").find("block_size=2"), std::string::npos);
    EXPECT_NE(message(R"({"K": -1})").find("K"), std::string::npos);
    EXPECT_NE(message(R"({"schema_version": 7})").find("schema_version=7"), std::string::npos);
    EXPECT_NE(message(R"({"dataset": "partial"})").find("partial"), std::string::npos);
    EXPECT_NE(message("{", {}).size(), 0u);
    EXPECT_NE(message("{}", {"nokey"}).find("key=value"), std::string::npos);
    EXPECT_NE(message("{}", {"detector.zzz=1"}).find("zzz"), std::string::npos);
}

TEST(Config, OverridesApplyLast) {
    const auto parsed = parse_config(R"({"K": 3})", {"K=4", "detector.A=7.5", "dataset=uncut", "cluster.hubs=[\"A\"]"});
    EXPECT_EQ(parsed.config.K, 4u);
    EXPECT_EQ(parsed.config.detector.A, 7.5);
    EXPECT_EQ(parsed.config.dataset, DatasetMode::Uncut);
    EXPECT_EQ(parsed.config.cluster.hubs, (std::vector<std::string>{"A"}));
}

TEST(Config, CrossConstraintIsWarned) {
    const auto parsed = parse_config(R"({"row": "10 3 0.98 0.05 5 2"})");
    ASSERT_EQ(parsed.warnings.size(), 1u);
    EXPECT_NE(parsed.warnings[0].find("gamma1"), std::string::npos);
}

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(2.0), "2");
    EXPECT_EQ(format_number(std::nan("")), "NaN");
    EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, i % 40 - 20);
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
}

TEST(Tables, HeaderOnlyWhenEmpty) {
    Report report{"detect", RunConfig{}, {"w1"}, {}};
    const auto csv = table_to_csv(event_table({}), report);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "# schema_version=1");
    EXPECT_EQ(lines[1], "# verb=detect table=events");
    EXPECT_EQ(lines[2].rfind("# config={", 0), 0u);
    EXPECT_EQ(lines[3], "# warning=w1");
    EXPECT_EQ(lines[4], "time,type,variable,value");
    const auto j = nlohmann::json::parse(table_to_json(event_table({}), report));
    EXPECT_TRUE(j["rows"].empty());
    EXPECT_EQ(j["columns"].size(), 4u);
}

TEST(Tables, CsvAndJsonEncodeIdenticalValues) {
    const Report report{"benchmark", RunConfig{}, {}, {sample_table()}};
    const auto dir = scratch_dir("formats");
    emit_report(report, dir / "csv", ReportFormat::Csv);
    emit_report(report, dir / "json", ReportFormat::Json);
    const auto a = read_table(dir / "csv" / "sample.csv");
    const auto b = read_table(dir / "json" / "sample.json");
    EXPECT_EQ(a.columns, b.columns);
    EXPECT_EQ(a.rows, b.rows);
    ASSERT_EQ(a.rows.size(), 3u);
    EXPECT_EQ(std::get<std::string>(a.rows[0][0]), "a,b");
    EXPECT_EQ(std::get<std::string>(a.rows[1][2]), "inf");
    EXPECT_EQ(std::get<std::string>(a.rows[2][3]), "1e-300");
    EXPECT_EQ(std::get<std::string>(a.rows[0][3]), "");
    // the echoed config parses back to the run's config
    const auto doc = nlohmann::json::parse(slurp(dir / "json" / "config.json"));
    EXPECT_EQ(emit_config(parse_config(doc.dump()).config), emit_config(RunConfig{}));
    fs::remove_all(dir);
}

TEST(Tables, EmitIsByteStable) {
    const Report report{"benchmark", RunConfig{}, {}, {sample_table()}};
    const auto dir = scratch_dir("stable");
    emit_report(report, dir / "a", ReportFormat::Csv);
    emit_report(report, dir / "b", ReportFormat::Csv);
    EXPECT_EQ(slurp(dir / "a" / "sample.csv"), slurp(dir / "b" / "sample.csv"));
    EXPECT_EQ(slurp(dir / "a" / "config.json"), slurp(dir / "b" / "config.json"));
    fs::remove_all(dir);
}

TEST(Tables, WriteFailuresAreIoErrors) {
    const auto dir = scratch_dir("blocked");
    fs::create_directories(dir.parent_path());
    std::ofstream(dir) << "file in the way";
    const Report report{"detect", RunConfig{}, {}, {sample_table()}};
    EXPECT_THROW(emit_report(report, dir, ReportFormat::Csv), IoError);
    EXPECT_THROW(read_table(dir / "nothing.csv"), IoError);
    fs::remove(dir);
}

TEST(Tables, RowWidthIsChecked) {
    Table t{"t", {"a", "b"}, {}};
    EXPECT_THROW(t.add({1.0}), StateError);
}
