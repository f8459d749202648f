#include "geoqhd/data_io.hpp"
#include "geoqhd/error.hpp"
#include "geoqhd/pipeline.hpp"
#include "geoqhd/simulation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace geoqhd;

namespace {

// exit codes
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kConfig = 2;
constexpr int kData = 3;
constexpr int kRuntime = 4;

struct Options {
    std::string config;
    std::string input;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::string format = "csv";
};

ParsedConfig load(const Options& o) {
    std::vector<std::string> overrides = o.overrides;
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    ParsedConfig parsed = o.config.empty() ? parse_config("{}", overrides) : load_config(o.config, overrides);
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
    return parsed;
}

fs::path out_dir(const Options& o, const std::string& verb) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("GEOQHD_OUT"); env && *env) return fs::path(env) / verb;
    return fs::path("geoqhd_out") / verb;
}

PricePanel load_input(const Options& o, const RunConfig& config) {
    if (o.input.empty()) throw ConfigError("--input <prices.csv> is required");
    return load_panel(o.input, config.dataset);
}

void announce(const std::vector<fs::path>& written) {
    for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
}

std::string opt_text(const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : "none";
}

int run_detect(const Options& o) {
    const ParsedConfig parsed = load(o);
    const PricePanel panel = load_input(o, parsed.config);
    const DetectionRun run = run_detection(panel.prices, parsed.config);
    std::cout << "tau_V=" << opt_text(run.tau_V) << " tau_G=" << opt_text(run.tau_G)
              << " tau_HB=" << opt_text(run.tau_HB) << " events=" << run.events.size() << "\n";
    announce(emit_report(detect_report(run, parsed, &panel.report), out_dir(o, "detect"),
                         parse_report_format(o.format)));
    return kOk;
}

int run_cluster_verb(const Options& o) {
    const ParsedConfig parsed = load(o);
    const PricePanel panel = load_input(o, parsed.config);
    const ClusterRun run = run_cluster(panel.prices, parsed.config);
    std::cout << "clustered at block " << run.at << (run.at_tau_hb ? " (tau_HB)" : "") << ", "
              << run.event_times.size() << " alarm events\n";
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& r = run.labels[l];
        std::cout << "label " << l + 1 << " (" << kLabelNames[l] << "): LPM=" << format_number(r.lpm);
        if (r.mcp) std::cout << " MCP=" << format_number(r.mcp->mean);
        if (r.consistency) std::cout << " A=" << format_number(*r.consistency);
        std::cout << "\n";
    }
    announce(emit_report(cluster_report(run, parsed), out_dir(o, "cluster"), parse_report_format(o.format)));
    return kOk;
}

int run_dmd_verb(const Options& o) {
    const ParsedConfig parsed = load(o);
    const PricePanel panel = load_input(o, parsed.config);
    const DmdRun run = run_dmd(panel.prices, parsed.config);
    std::cout << run.timestamps.size() << " DMD updates over " << run.ids.size() << " assets\n";
    announce(emit_report(dmd_report(run, parsed), out_dir(o, "dmd"), parse_report_format(o.format)));
    return kOk;
}

int run_benchmark(const Options& o) {
    const ParsedConfig parsed = load(o);
    const RunConfig& c = parsed.config;
    const ExperimentResult result =
        run_experiment(c.scenario_family(), c.benchmark_grid(), c.benchmark.trials, c.seed, c.benchmark.threads);
    for (const auto& line : verdict_lines(result)) std::cout << line << "\n";
    announce(emit_report(benchmark_report(result, parsed), out_dir(o, "benchmark"), parse_report_format(o.format)));
    return kOk;
}

fs::path find_table(const fs::path& dir, const std::string& name) {
    for (const char* ext : {".csv", ".json"}) {
        const fs::path p = dir / (name + ext);
        if (fs::exists(p)) return p;
    }
    throw DataError("no " + name + ".csv or " + name + ".json in '" + dir.string() + "'");
}

int run_report(const Options& o) {
    if (o.input.empty()) throw ConfigError("--input <benchmark output dir> is required");
    const fs::path in = o.input;
    const std::string summary =
        benchmark_summary(read_table(find_table(in, "results")), read_table(find_table(in, "verdicts")));
    std::cout << summary;
    const fs::path dir = o.out.empty() ? in : fs::path(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path path = dir / "summary.md";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!(f << summary)) throw IoError("cannot write '" + path.string() + "'");
    std::cout << "wrote " << path.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential hub discovery in correlation streams"};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 ok, 1 usage, 2 invalid config, 3 invalid data, 4 runtime or I/O failure.\n"
        "GEOQHD_OUT sets the default output root (<root>/<verb>).");

    Options o;
    auto add_common = [&](CLI::App* sub, bool input) {
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        if (input) sub->add_option("--input", o.input, "price CSV (timestamp,<asset>,...)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "master seed (overrides config seed)");
        sub->add_option("--set", o.overrides, "dotted.key=value override, repeatable")->allow_extra_args(false);
        sub->add_option("--format", o.format, "output table format")->check(CLI::IsMember({"csv", "json"}));
    };

    auto* detect = app.add_subcommand("detect", "GLR detection over n-row blocks");
    add_common(detect, true);
    auto* cluster = app.add_subcommand("cluster", "distance matrices and k-medoids partitions per label");
    add_common(cluster, true);
    auto* dmd = app.add_subcommand("dmd", "diversification measure distribution");
    add_common(dmd, true);
    auto* bench = app.add_subcommand("benchmark", "Monte Carlo scenario grid");
    add_common(bench, false);
    auto* report = app.add_subcommand("report", "summarize a benchmark output directory");
    report->add_option("--input", o.input, "benchmark output directory")->check(CLI::ExistingDirectory);
    report->add_option("--out", o.out, "directory for summary.md (default: the input directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*detect) return run_detect(o);
        if (*cluster) return run_cluster_verb(o);
        if (*dmd) return run_dmd_verb(o);
        if (*bench) return run_benchmark(o);
        if (*report) return run_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
