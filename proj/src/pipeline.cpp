#include "geoqhd/pipeline.hpp"

#include "geoqhd/dmd.hpp"
#include "geoqhd/error.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <span>

namespace geoqhd {

namespace {

std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

// one k-medoids seed per block, shared by the labels
std::uint64_t mix_seed(std::uint64_t seed, std::size_t m) {
    std::uint64_t x = seed ^ (static_cast<std::uint64_t>(m) << 8);
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// DMD fed at block ends, kept in step with the detector.
class BlockDmd {
public:
    BlockDmd(const BlockStream& stream, const RunConfig& config) : config_(config) {
        if (stream.returns.rows() >= config.rolling_window) {
            panel_ = rolling_correlations(stream.returns, config.rolling_window);
        }
        model_.emplace(stream.returns.variable_ids, config.dmd);
        p_ = stream.returns.cols();
    }

    void advance(std::size_t m) {
        if (!panel_) return;
        const std::size_t last_row = m * config_.block_size - 1;
        if (last_row + 1 < config_.rolling_window) return;
        const std::size_t k = last_row + 1 - config_.rolling_window;
        if (k >= config_.dmd.lookback && k < panel_->length()) model_->update(*panel_, k);
    }

    [[nodiscard]] Vector current_z() const {
        if (model_->history().size() < 2) return Vector::Zero(static_cast<Eigen::Index>(p_));
        const Matrix z = standardize_dmd(model_->history());
        return z.row(z.rows() - 1).transpose();
    }

private:
    const RunConfig& config_;
    std::optional<RollingCorrelationPanel> panel_;
    std::optional<DmdModel> model_;
    std::size_t p_ = 0;
};

struct LabelState {
    ClusterPartition partition;
    DistanceMatrix distances;
};

std::array<LabelState, 3> cluster_labels(const DistanceInputs& in, const RunConfig& config, std::size_t m) {
    std::array<LabelState, 3> out;
    for (std::size_t label = 0; label < 3; ++label) {
        const auto metric = static_cast<MetricLabel>(label + 1);
        out[label].distances = distance_matrix(in, metric, label_weights(config.weights, label), config.distance);
        out[label].partition = kmedoids(out[label].distances.D, config.K, mix_seed(config.seed, m));
    }
    return out;
}

ConsistencyEvent consistency_event(const ClusterPartition& part, std::span<const double> G, std::size_t q) {
    const GeometricDecision gd = geometric_decision(part, G, q);
    ConsistencyEvent ce;
    ce.decision = gd.fallback ? std::vector<int>(G.size(), 0) : gd.decision;
    ce.membership.assign(G.size(), 0);
    for (const std::size_t k : part.members(gd.cluster)) ce.membership[k] = 1;
    return ce;
}

}  // namespace

DataMatrix BlockStream::block(std::size_t m) const {
    if (m < 1 || m > blocks()) {
        throw DomainError("block " + std::to_string(m) + " outside 1.." + std::to_string(blocks()));
    }
    return returns.slice_rows((m - 1) * block_size, block_size);
}

const std::string& BlockStream::block_end(std::size_t m) const {
    return returns.timestamps.at(m * block_size - 1);
}

BlockStream make_block_stream(const DataMatrix& prices, const RunConfig& config) {
    BlockStream s;
    s.returns = compute_returns(prices, config.returns);
    s.block_size = config.block_size;
    if (s.blocks() < 1) {
        throw DataError("panel has " + std::to_string(s.returns.rows()) + " return rows, fewer than one block of " +
                        std::to_string(config.block_size));
    }
    return s;
}

namespace {

CorrelationSnapshot block_snapshot(const BlockStream& stream, std::size_t m) {
    try {
        return correlation_of(stream.block(m).values, m);
    } catch (const DegenerateVariableError& e) {
        throw DataError("block " + std::to_string(m) + " (ending " + stream.block_end(m) + "): asset '" +
                        stream.returns.variable_ids.at(e.column()) + "' has constant returns");
    }
}

}  // namespace

DetectionRun run_detection(const DataMatrix& prices, const RunConfig& config) {
    config.validate();
    const BlockStream stream = make_block_stream(prices, config);
    const std::size_t p = stream.returns.cols();
    const std::size_t T = stream.blocks();

    DetectionRun run;
    run.ids = stream.returns.variable_ids;
    run.V = Matrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(p));
    run.G = run.V;
    run.J = Matrix::Ones(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(p));
    run.global_V = Vector::Zero(static_cast<Eigen::Index>(T));
    run.global_G = run.global_V;

    GlrDetector detector(p, static_cast<int>(config.block_size), config.detector, run.ids);
    for (std::size_t m = 1; m <= T; ++m) {
        const CorrelationSnapshot snap = block_snapshot(stream, m);
        for (auto& e : detector.step(snap)) run.events.push_back(std::move(e));
        const auto row = static_cast<Eigen::Index>(m - 1);
        const Vector V = local_statistics(snap.R);
        run.V.row(row) = V.transpose();
        run.global_V(row) = V.maxCoeff();
        run.G.row(row) = detector.G().transpose();
        run.J.row(row) = detector.j_hat().transpose();
        run.global_G(row) = detector.global_G();
        run.block_ends.push_back(stream.block_end(m));
    }
    run.tau_V = detector.tau_V();
    run.tau_G = detector.tau_G();
    run.tau_HB = detector.tau_HB();
    return run;
}

ClusterRun run_cluster(const DataMatrix& prices, const RunConfig& config) {
    config.validate();
    const BlockStream stream = make_block_stream(prices, config);
    const std::size_t p = stream.returns.cols();
    const std::size_t T = stream.blocks();
    if (config.K > p) {
        throw ConfigError("K=" + std::to_string(config.K) + " exceeds the " + std::to_string(p) + " assets");
    }
    if (config.detector.q > p) {
        throw ConfigError("detector.q=" + std::to_string(config.detector.q) + " exceeds the " + std::to_string(p) +
                          " assets");
    }
    if (config.cluster.at > T) {
        throw ConfigError("cluster.at=" + std::to_string(config.cluster.at) + " beyond the " + std::to_string(T) +
                          " blocks of the panel");
    }

    ClusterRun run;
    run.ids = stream.returns.variable_ids;
    GlrDetector detector(p, static_cast<int>(config.block_size), config.detector, run.ids);
    const bool use_dmd = config.weights.gamma2 != 0.0;
    std::optional<BlockDmd> dmd;
    if (use_dmd) dmd.emplace(stream, config);

    struct EventState {
        std::size_t m;
        Vector G;
        std::array<ClusterPartition, 3> partitions;
    };
    std::vector<EventState> events;
    std::optional<Vector> V_at;

    for (std::size_t m = 1; m <= T; ++m) {
        const CorrelationSnapshot snap = block_snapshot(stream, m);
        detector.step(snap);
        if (dmd) dmd->advance(m);

        const bool target = config.cluster.at != 0 ? m == config.cluster.at
                                                   : (detector.tau_HB() && *detector.tau_HB() == m);
        const bool event = detector.tau_HB() && m >= *detector.tau_HB() && detector.alarm_active();
        if (!target && !event) continue;

        DistanceInputs in = DistanceInputs::from_detector(detector);
        if (dmd) in.dmd_z = dmd->current_z();
        const auto states = cluster_labels(in, config, m);
        if (target) {
            run.at = m;
            run.at_tau_hb = detector.tau_HB() && *detector.tau_HB() == m;
            run.inputs = in;
            V_at = local_statistics(snap.R);
            for (std::size_t l = 0; l < 3; ++l) {
                run.labels[l].distances = states[l].distances;
                run.labels[l].partition = states[l].partition;
                run.labels[l].decision = geometric_decision(states[l].partition, as_span(detector.G()),
                                                            config.detector.q);
            }
        }
        if (event) {
            events.push_back({m, detector.G(), {states[0].partition, states[1].partition, states[2].partition}});
        }
    }
    run.tau_HB = detector.tau_HB();
    if (run.at == 0) {
        throw StateError("cluster: tau_HB never fired on this panel and no block was given; set cluster.at "
                         "(e.g. --set cluster.at=" + std::to_string(T) + ") or lower the thresholds");
    }

    if (!config.cluster.hubs.empty()) {
        for (const auto& id : config.cluster.hubs) {
            const auto it = std::find(run.ids.begin(), run.ids.end(), id);
            if (it == run.ids.end()) throw ConfigError("cluster.hubs: unknown asset id '" + id + "'");
            run.hubs.push_back(static_cast<std::size_t>(it - run.ids.begin()));
        }
    } else {
        run.hubs_empirical = true;
        const double top = V_at->maxCoeff();
        for (std::size_t k = 0; k < p; ++k) {
            if ((*V_at)(static_cast<Eigen::Index>(k)) == top) run.hubs.push_back(k);
        }
    }

    for (std::size_t l = 0; l < 3; ++l) {
        auto& res = run.labels[l];
        res.lpm = lpm(res.partition, run.hubs, as_span(run.inputs.G));
        std::vector<double> lpms;
        std::vector<ConsistencyEvent> ces;
        for (const auto& e : events) {
            lpms.push_back(lpm(e.partitions[l], run.hubs, as_span(e.G)));
            ces.push_back(consistency_event(e.partitions[l], as_span(e.G), config.detector.q));
        }
        res.mcp = mcp(lpms);
        res.consistency = consistency_ratio(ces);
    }
    for (const auto& e : events) run.event_times.push_back(e.m);
    return run;
}

DmdRun run_dmd(const DataMatrix& prices, const RunConfig& config) {
    config.validate();
    const DataMatrix returns = compute_returns(prices, config.returns);
    if (returns.rows() < config.rolling_window) {
        throw DataError("dmd: " + std::to_string(returns.rows()) + " return rows, fewer than the rolling window " +
                        std::to_string(config.rolling_window));
    }
    const RollingCorrelationPanel panel = rolling_correlations(returns, config.rolling_window);
    const std::size_t stride = config.dmd_stride == 0 ? config.block_size : config.dmd_stride;

    DmdRun run;
    run.ids = returns.variable_ids;
    DmdModel model(run.ids, config.dmd);
    for (std::size_t k = config.dmd.lookback; k < panel.length(); k += stride) {
        model.update(panel, k);
        run.timestamps.push_back(returns.timestamps.at(panel.end_rows.at(k)));
        run.events.push_back(model.last_events());
    }
    const auto T = static_cast<Eigen::Index>(model.history().size());
    run.theta.resize(T, static_cast<Eigen::Index>(run.ids.size()));
    for (Eigen::Index t = 0; t < T; ++t) run.theta.row(t) = model.history()[static_cast<std::size_t>(t)].transpose();
    if (T >= 2) run.z = standardize_dmd(model.history());
    return run;
}

Report detect_report(const DetectionRun& run, const ParsedConfig& config, const IngestionReport* ingestion) {
    Report r{"detect", config.config, config.warnings, {}};
    r.tables.push_back(event_table(run.events));

    Table summary{"summary", {"blocks", "tau_V", "tau_G", "tau_HB", "top1", "top1_G"}, {}};
    Cell top1;
    Cell top1_g;
    if (run.tau_HB) {
        const auto row = static_cast<Eigen::Index>(*run.tau_HB - 1);
        Eigen::Index best = 0;
        run.G.row(row).maxCoeff(&best);
        top1 = run.ids[static_cast<std::size_t>(best)];
        top1_g = run.G(row, best);
    }
    auto opt = [](const std::optional<std::size_t>& v) { return v ? Cell(static_cast<std::int64_t>(*v)) : Cell(); };
    summary.add({static_cast<std::int64_t>(run.block_ends.size()), opt(run.tau_V), opt(run.tau_G), opt(run.tau_HB),
                 top1, top1_g});
    r.tables.push_back(summary);

    Table traj{"trajectories", {"block", "timestamp", "variable", "V", "G", "J_hat"}, {}};
    for (std::size_t m = 0; m < run.block_ends.size(); ++m) {
        const auto row = static_cast<Eigen::Index>(m);
        for (std::size_t k = 0; k < run.ids.size(); ++k) {
            const auto col = static_cast<Eigen::Index>(k);
            traj.add({static_cast<std::int64_t>(m + 1), run.block_ends[m], run.ids[k], run.V(row, col),
                      run.G(row, col), run.J(row, col)});
        }
    }
    r.tables.push_back(traj);

    Table global{"global_trajectory", {"block", "timestamp", "V", "G"}, {}};
    for (std::size_t m = 0; m < run.block_ends.size(); ++m) {
        const auto row = static_cast<Eigen::Index>(m);
        global.add({static_cast<std::int64_t>(m + 1), run.block_ends[m], run.global_V(row), run.global_G(row)});
    }
    r.tables.push_back(global);
    if (ingestion) r.tables.push_back(ingestion_table(*ingestion));
    return r;
}

Report cluster_report(const ClusterRun& run, const ParsedConfig& config) {
    Report r{"cluster", config.config, config.warnings, {}};
    const std::size_t p = run.ids.size();

    Table bars{"g_bars", {"variable", "rank", "G", "J_hat", "dmd_z", "hub"}, {}};
    const auto order = rank_by_statistic(as_span(run.inputs.G));
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const std::size_t k = order[rank];
        const auto kk = static_cast<Eigen::Index>(k);
        const bool hub = std::find(run.hubs.begin(), run.hubs.end(), k) != run.hubs.end();
        bars.add({run.ids[k], static_cast<std::int64_t>(rank + 1), run.inputs.G(kk), run.inputs.j_hat(kk),
                  run.inputs.dmd_z.size() ? Cell(run.inputs.dmd_z(kk)) : Cell(), std::string(hub ? "true" : "false")});
    }
    r.tables.push_back(bars);

    Table parts{"partitions", {"label", "metric", "variable", "cluster", "medoid", "decision"}, {}};
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& res = run.labels[l];
        for (std::size_t k = 0; k < p; ++k) {
            const std::size_t c = res.partition.assignments[k];
            parts.add({static_cast<std::int64_t>(l + 1), std::string(kLabelNames[l]), run.ids[k],
                       static_cast<std::int64_t>(c), run.ids[res.partition.medoids[c]],
                       static_cast<std::int64_t>(res.decision.decision[k])});
        }
    }
    r.tables.push_back(parts);

    Table metrics{"metrics",
                  {"label", "metric", "at", "at_tau_HB", "hubs", "hubs_empirical", "LPM", "cost", "decision_fallback",
                   "density_fallback", "events", "MCP_mean", "MCP_min", "MCP_std", "consistency_A"},
                  {}};
    std::string hub_list;
    for (const std::size_t h : run.hubs) hub_list += (hub_list.empty() ? "" : ";") + run.ids[h];
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& res = run.labels[l];
        metrics.add({static_cast<std::int64_t>(l + 1), std::string(kLabelNames[l]), static_cast<std::int64_t>(run.at),
                     std::string(run.at_tau_hb ? "true" : "false"), hub_list,
                     std::string(run.hubs_empirical ? "true" : "false"), res.lpm, res.partition.cost,
                     std::string(res.decision.fallback ? "true" : "false"),
                     std::string(res.distances.density_fallback ? "true" : "false"),
                     static_cast<std::int64_t>(run.event_times.size()), res.mcp ? Cell(res.mcp->mean) : Cell(),
                     res.mcp ? Cell(res.mcp->min) : Cell(), res.mcp ? Cell(res.mcp->std) : Cell(),
                     res.consistency ? Cell(*res.consistency) : Cell()});
    }
    r.tables.push_back(metrics);

    Table dist{"distances", {"label", "variable_i", "variable_j", "distance"}, {}};
    for (std::size_t l = 0; l < 3; ++l) {
        const Matrix& D = run.labels[l].distances.D;
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                dist.add({static_cast<std::int64_t>(l + 1), run.ids[i], run.ids[j],
                          D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
            }
        }
    }
    r.tables.push_back(dist);
    return r;
}

Report dmd_report(const DmdRun& run, const ParsedConfig& config) {
    Report r{"dmd", config.config, config.warnings, {}};
    Table panel{"dmd_panel", {"timestamp", "asset_id", "theta", "theta_standardized"}, {}};
    for (std::size_t t = 0; t < run.timestamps.size(); ++t) {
        for (std::size_t a = 0; a < run.ids.size(); ++a) {
            const auto tt = static_cast<Eigen::Index>(t);
            const auto aa = static_cast<Eigen::Index>(a);
            panel.add({run.timestamps[t], run.ids[a], run.theta(tt, aa), run.z.size() ? Cell(run.z(tt, aa)) : Cell()});
        }
    }
    r.tables.push_back(panel);
    Table counts{"dmd_events", {"timestamp", "events"}, {}};
    for (std::size_t t = 0; t < run.timestamps.size(); ++t) {
        counts.add({run.timestamps[t], static_cast<std::int64_t>(run.events[t])});
    }
    r.tables.push_back(counts);
    return r;
}

Report benchmark_report(const ExperimentResult& result, const ParsedConfig& config) {
    Report r{"benchmark", config.config, config.warnings, {}};
    r.tables.push_back(results_table(result.rows));
    r.tables.push_back(verdict_table(result.verdicts));
    r.tables.push_back(trial_table(result));
    return r;
}

std::vector<std::string> verdict_lines(const ExperimentResult& result) {
    std::vector<std::string> out;
    for (const auto& v : result.verdicts) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "grid %zu [%s]: label %d >= label %d %s (mean %.4f vs %.4f; wins %zu, losses %zu, sign p=%.3g)",
                      v.grid_index, format_table_row(result.grid.at(v.grid_index)).c_str(), v.higher, v.lower,
                      v.holds ? "holds" : "fails", v.mean_higher, v.mean_lower, v.wins, v.losses, v.sign_p);
        out.emplace_back(buf);
    }
    return out;
}

namespace {

std::string cell_string(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return "";
}

std::size_t column_of(const Table& t, const std::string& name) {
    const auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) throw DataError("table " + t.name + " has no column '" + name + "'");
    return static_cast<std::size_t>(it - t.columns.begin());
}

std::string fixed(const std::string& text, int digits) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) return text.empty() ? "-" : text;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string benchmark_summary(const Table& results, const Table& verdicts) {
    static const std::array<const char*, 6> keys = {"J_k", "A_k", "theta", "gamma", "K", "Phi"};
    std::array<std::size_t, 6> key_cols{};
    for (std::size_t i = 0; i < keys.size(); ++i) key_cols[i] = column_of(results, keys[i]);
    const std::size_t label = column_of(results, "Label");
    const std::size_t mean = column_of(results, "Mean");
    const std::size_t min = column_of(results, "Min");
    const std::size_t sd = column_of(results, "Std");
    const std::size_t events = column_of(results, "Events");
    const std::size_t detected = column_of(results, "Detected");
    const std::size_t trials = column_of(results, "Trials");
    const std::size_t delay = column_of(results, "MeanDelay");

    std::string out = "# Benchmark summary\n\n";
    out += "| Label | J_k | A_k | theta | gamma | K | Phi | Mean | Min | Std | Events | Detected | MeanDelay |\n";
    out += "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& row : results.rows) {
        const std::string name = cell_string(row[label]);
        const int l = std::atoi(name.c_str());
        out += "| " + name + (l >= 1 && l <= 3 ? std::string(" (") + kLabelNames[l - 1] + ")" : "") + " |";
        for (const std::size_t c : key_cols) out += " " + cell_string(row[c]) + " |";
        out += " " + fixed(cell_string(row[mean]), 4) + " | " + fixed(cell_string(row[min]), 4) + " | " +
               fixed(cell_string(row[sd]), 4) + " | " + cell_string(row[events]) + " | " +
               cell_string(row[detected]) + "/" + cell_string(row[trials]) + " | " +
               fixed(cell_string(row[delay]), 2) + " |\n";
    }

    out += "\n## Ordering verdicts\n\n";
    const std::size_t grid = column_of(verdicts, "grid");
    const std::size_t hi = column_of(verdicts, "higher");
    const std::size_t lo = column_of(verdicts, "lower");
    const std::size_t mh = column_of(verdicts, "mean_higher");
    const std::size_t ml = column_of(verdicts, "mean_lower");
    const std::size_t holds = column_of(verdicts, "holds");
    const std::size_t wins = column_of(verdicts, "wins");
    const std::size_t losses = column_of(verdicts, "losses");
    const std::size_t sign_p = column_of(verdicts, "sign_p");
    for (const auto& row : verdicts.rows) {
        out += "- grid " + cell_string(row[grid]) + ": label " + cell_string(row[hi]) + " >= label " +
               cell_string(row[lo]) + " " + (cell_string(row[holds]) == "true" ? "holds" : "fails") + " (mean " +
               fixed(cell_string(row[mh]), 4) + " vs " + fixed(cell_string(row[ml]), 4) + "; wins " +
               cell_string(row[wins]) + ", losses " + cell_string(row[losses]) + ", sign p=" +
               cell_string(row[sign_p]) + ")\n";
    }
    return out;
}

}  // namespace geoqhd
