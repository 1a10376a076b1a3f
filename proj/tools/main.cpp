// Command-line front end: wires the library modules into reproducible
// workflows. Every run writes its artifacts plus a manifest.json that
// captures the resolved parameters; --from-manifest replays a manifest,
// reproducing simulation outputs bitwise.

#include <CLI11.hpp>
#include <json.hpp>

#include <fluidfcfs/errors.hpp>
#include <fluidfcfs/fluid.hpp>
#include <fluidfcfs/lp.hpp>
#include <fluidfcfs/pooling.hpp>
#include <fluidfcfs/sim.hpp>
#include <fluidfcfs/stats.hpp>
#include <fluidfcfs/system.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fluidfcfs;

namespace {

#ifndef FLUIDFCFS_VERSION
#define FLUIDFCFS_VERSION "0.0.0"
#endif

constexpr const char* kVersion = FLUIDFCFS_VERSION;

constexpr int kExitComplete = 0;
constexpr int kExitWeak = 10;
constexpr int kExitViolated = 11;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

SystemSpec load_spec(const std::string& path) {
    return SystemSpec::from_json_text(read_file(path));
}

// Fixture lookup order: the path as given, then under FLUID_FCFS_FIXTURES,
// then under the installed share directory next to the executable, then
// the source-tree fixtures this binary was built with.
fs::path resolve_fixture(const std::string& name) {
    std::vector<fs::path> tried;
    auto candidate = [&](fs::path p) -> std::optional<fs::path> {
        if (!p.empty()) {
            if (fs::exists(p)) return p;
            tried.push_back(p);
        }
        return std::nullopt;
    };
    if (auto p = candidate(name)) return *p;
    if (const char* env = std::getenv("FLUID_FCFS_FIXTURES"))
        if (auto p = candidate(fs::path(env) / name)) return *p;
    std::error_code ec;
    fs::path exe = fs::read_symlink("/proc/self/exe", ec);
    if (!ec)
        if (auto p = candidate(exe.parent_path().parent_path() / "share" / "fluidfcfs" /
                               "fixtures" / name))
            return *p;
#ifdef FLUIDFCFS_SOURCE_FIXTURES
    if (auto p = candidate(fs::path(FLUIDFCFS_SOURCE_FIXTURES) / name)) return *p;
#endif
    std::string msg = "fixture \"" + name + "\" not found; tried:";
    for (const fs::path& p : tried) msg += "\n  " + p.string();
    throw ValidationError(msg);
}

// Collects parameters and written files for the manifest.
struct RunContext {
    std::string command;
    fs::path out_dir;
    std::string format = "json";
    json parameters;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    fs::path write(const std::string& name, const std::string& content) {
        fs::create_directories(out_dir);
        fs::path path = out_dir / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InternalError("cannot write " + path.string());
        out << content;
        outputs.push_back(name);
        return path;
    }

    void finish() {
        double seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        json manifest;
        manifest["tool"] = "fluidfcfs";
        manifest["version"] = kVersion;
        manifest["command"] = command;
        manifest["format"] = format;
        manifest["out_dir"] = out_dir.string();
        manifest["parameters"] = parameters;
        manifest["outputs"] = outputs;
        manifest["wall_clock_seconds"] = seconds;
        fs::create_directories(out_dir);
        std::ofstream out(out_dir / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << "\n";
    }
};

void echo(const RunContext& ctx, const std::string& as_json, const std::string& as_csv) {
    if (ctx.format == "csv" && !as_csv.empty())
        std::cout << as_csv;
    else
        std::cout << as_json;
}

// ---------------------------------------------------------------- analyze

int run_analyze(RunContext& ctx) {
    SystemSpec spec = load_spec(ctx.parameters.at("spec").get<std::string>());

    pooling::PoolingVerdict verdict;
    switch (spec.mode()) {
        case RateMode::SD: verdict = pooling::check_crp_sd(spec); break;
        case RateMode::CD: verdict = pooling::check_crp_cd(spec); break;
        case RateMode::GENERAL: verdict = pooling::check_crp_tree(spec).verdict; break;
    }

    json report;
    report["pooling"] = json::parse(verdict.to_json_text());

    if (spec.mode() == RateMode::SD) {
        try {
            pooling::Decomposition decomposition = pooling::decompose_sd(spec);
            json d = json::parse(decomposition.to_json_text(spec));
            report["decomposition"] = d;
            ctx.write("decomposition.json", d.dump(2) + "\n");
        } catch (const ValidationError& err) {
            report["decomposition_error"] = err.what();
        }
    }

    if (spec.has_lambda()) {
        std::vector<double> origin(static_cast<std::size_t>(spec.server_count()), 0.0);
        fluid::StabilityVerdict st = fluid::stability(spec, origin);
        report["stability"] = json::parse(st.to_json_text());
    } else {
        report["stability"] = nullptr;
    }

    ctx.write("analysis.json", report.dump(2) + "\n");
    std::cout << "pooling: " << pooling::to_string(verdict.kind) << "\n";

    switch (verdict.kind) {
        case pooling::PoolingKind::COMPLETE: return kExitComplete;
        case pooling::PoolingKind::WEAK: return kExitWeak;
        case pooling::PoolingKind::VIOLATED: return kExitViolated;
    }
    return kExitInternal;
}

// ------------------------------------------------------------------ trace

int run_trace(RunContext& ctx) {
    SystemSpec spec = load_spec(ctx.parameters.at("spec").get<std::string>());
    std::vector<double> positions =
        ctx.parameters.at("positions").get<std::vector<double>>();
    if (positions.empty())
        positions.assign(static_cast<std::size_t>(spec.server_count()), 0.0);
    double horizon = ctx.parameters.at("horizon").get<double>();
    double resolution = ctx.parameters.at("resolution").get<double>();
    if (resolution <= 0.0) resolution = horizon / 100.0;

    fluid::FluidTrajectory trajectory = fluid::trace(spec, positions, horizon);
    std::string doc = trajectory.to_json_text();
    ctx.write("trajectory.json", doc);
    ctx.write("trajectory.csv", trajectory.to_csv(resolution));

    std::ostringstream summary;
    summary << "breakpoints: " << trajectory.breakpoints.size()
            << ", events: " << trajectory.events.size()
            << ", steady: " << (trajectory.steady ? "yes" : "no") << "\n";
    echo(ctx, doc, summary.str());
    return kExitComplete;
}

// --------------------------------------------------------------------- lp

int run_lp(RunContext& ctx) {
    SystemSpec spec = load_spec(ctx.parameters.at("spec").get<std::string>());
    lp::LpSolution sol = lp::solve_static_plan(spec);
    lp::OptimalDesign design = lp::extract_design(spec, sol);

    ctx.write("solution.json", sol.to_json_text(spec));
    ctx.write("design.json", design.to_json_text(spec));
    ctx.write("design_spec.json", design.design_spec_json(spec));

    char line[64];
    std::snprintf(line, sizeof line, "mu_star: %.12g\n", sol.mu_star);
    echo(ctx, sol.to_json_text(spec), line);
    return kExitComplete;
}

// --------------------------------------------------------------- simulate

int run_simulate(RunContext& ctx) {
    const json& p = ctx.parameters;
    SystemSpec spec = load_spec(p.at("spec").get<std::string>());
    sim::LawFamily law = sim::parse_law(p.at("law").get<std::string>());
    sim::Protocol protocol{p.at("warmup").get<std::uint64_t>(),
                           p.at("services").get<std::uint64_t>()};
    sim::RunOptions options;
    options.infinite_supply = p.at("infinite_supply").get<bool>();
    options.allow_any_regime = p.at("allow_any_regime").get<bool>();

    sim::SimEstimate estimate = sim::run_study(
        spec, law, protocol, p.at("reps").get<std::size_t>(),
        p.at("seed").get<std::uint64_t>(), options, p.at("jobs").get<int>());

    ctx.write("study.json", estimate.to_json_text());
    ctx.write("r_hat.csv", estimate.r_hat_to_csv());
    ctx.write("span.csv", estimate.span_to_csv());
    ctx.write("orderings.csv", estimate.permutations_to_csv());

    echo(ctx, estimate.to_json_text(), estimate.r_hat_to_csv());
    return kExitComplete;
}

// ------------------------------------------------------------------ ttest

std::vector<double> mean_from_rate_csv(const fs::path& path, const SystemSpec& spec) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto split = [](const std::string& s) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(s);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        return fields;
    };

    std::vector<std::string> header = split(line);
    if (header.size() != static_cast<std::size_t>(spec.server_count()) + 1)
        throw ValidationError(path.string() + ": expected header \"type\" plus " +
                              std::to_string(spec.server_count()) + " server columns");
    for (int j = 0; j < spec.server_count(); ++j)
        if (header[static_cast<std::size_t>(j) + 1] != spec.server_name(j))
            throw ValidationError(path.string() + ": column " + std::to_string(j + 2) +
                                  " is \"" + header[static_cast<std::size_t>(j) + 1] +
                                  "\" but the spec's server " + std::to_string(j + 1) +
                                  " is \"" + spec.server_name(j) + "\"");

    std::vector<std::vector<double>> matrix(
        static_cast<std::size_t>(spec.customer_count()),
        std::vector<double>(static_cast<std::size_t>(spec.server_count()), 0.0));
    std::vector<char> seen(static_cast<std::size_t>(spec.customer_count()), 0);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split(line);
        if (fields.size() != header.size())
            throw ValidationError(path.string() + ": row \"" + line +
                                  "\" has the wrong number of fields");
        int i = spec.customer_index(fields[0]);
        if (i < 0)
            throw ValidationError(path.string() + ": unknown customer type \"" +
                                  fields[0] + "\"");
        seen[static_cast<std::size_t>(i)] = 1;
        for (int j = 0; j < spec.server_count(); ++j) {
            double value = std::stod(fields[static_cast<std::size_t>(j) + 1]);
            if (value != 0.0 && !spec.compatible(j, i))
                throw ValidationError(path.string() + ": nonzero rate for (" +
                                      spec.server_name(j) + ", " + fields[0] +
                                      ") which is not a compatibility edge");
            matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = value;
        }
    }
    for (int i = 0; i < spec.customer_count(); ++i)
        if (!seen[static_cast<std::size_t>(i)])
            throw ValidationError(path.string() + ": no row for customer type " +
                                  spec.customer_name(i));

    std::vector<double> mean;
    mean.reserve(spec.edges().size());
    for (const Edge& e : spec.edges())
        mean.push_back(matrix[static_cast<std::size_t>(e.customer)]
                             [static_cast<std::size_t>(e.server)]);
    return mean;
}

std::vector<double> mean_from_ordering_csv(const fs::path& path,
                                           const SystemSpec& spec) {
    auto table = sim::permutation_distribution_theoretical(spec);
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");

    std::vector<double> mean(table.size(), -1.0);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(path.string() + ": row \"" + line + "\" has no value");
        std::string label = line.substr(0, comma);
        std::string rest = line.substr(comma + 1);
        std::size_t next = rest.find(',');
        double value = std::stod(next == std::string::npos ? rest : rest.substr(0, next));
        for (std::size_t k = 0; k < table.size(); ++k)
            if (table[k].first == label) {
                mean[k] = value;
                break;
            }
    }
    for (std::size_t k = 0; k < table.size(); ++k)
        if (mean[k] < 0.0)
            throw ValidationError(path.string() + ": no row for ordering " +
                                  table[k].first);
    return mean;
}

int run_ttest(RunContext& ctx) {
    const json& p = ctx.parameters;
    SystemSpec spec = load_spec(p.at("spec").get<std::string>());
    std::string which = p.at("which").get<std::string>();
    if (which != "rates" && which != "orderings")
        throw ValidationError("--which must be rates or orderings");

    std::string mean_fixture = p.at("mean_fixture").get<std::string>();
    bool from_lp = p.at("from_lp").get<bool>();
    bool from_tree = p.at("from_tree").get<bool>();
    bool from_complete = p.at("from_complete").get<bool>();
    bool from_orderings = p.at("from_orderings").get<bool>();
    int sources = (mean_fixture.empty() ? 0 : 1) + from_lp + from_tree +
                  from_complete + from_orderings;
    if (sources != 1)
        throw ValidationError("pick exactly one theoretical mean: --mean-fixture, "
                              "--from-lp, --from-tree, --from-complete, or "
                              "--from-orderings");

    std::vector<stats::LawStudy> studies;
    for (const auto& entry : p.at("vectors")) {
        std::string path = entry.get<std::string>();
        json doc = json::parse(read_file(path));
        const char* key =
            which == "rates" ? "replication_vectors" : "ordering_replication_vectors";
        if (!doc.contains(key) || doc.at(key).empty())
            throw ValidationError(path + " carries no " + key);
        if (which == "rates") {
            json order = doc.at("edge_order");
            if (order.size() != spec.edges().size())
                throw ValidationError(path + ": edge order does not match the spec");
            for (std::size_t e = 0; e < spec.edges().size(); ++e) {
                const Edge& edge = spec.edge(static_cast<int>(e));
                if (order[e][0].get<std::string>() != spec.server_name(edge.server) ||
                    order[e][1].get<std::string>() != spec.customer_name(edge.customer))
                    throw ValidationError(path + ": edge order does not match the spec");
            }
        }
        studies.push_back({doc.at("law").get<std::string>(),
                           doc.at(key).get<std::vector<std::vector<double>>>()});
    }

    std::vector<double> mean;
    if (which == "orderings") {
        if (from_orderings)
            for (const auto& [label, prob] : sim::permutation_distribution_theoretical(spec))
                mean.push_back(prob);
        else if (!mean_fixture.empty())
            mean = mean_from_ordering_csv(resolve_fixture(mean_fixture), spec);
        else
            throw ValidationError("ordering tests take --from-orderings or "
                                  "--mean-fixture");
    } else if (!mean_fixture.empty()) {
        mean = mean_from_rate_csv(resolve_fixture(mean_fixture), spec);
    } else if (from_tree) {
        pooling::TreeSolution tree = pooling::check_crp_tree(spec);
        if (tree.verdict.kind != pooling::PoolingKind::COMPLETE)
            throw ValidationError("the tree closed form needs complete pooling; "
                                  "verdict was " + pooling::to_string(tree.verdict.kind));
        mean = lp::matching_rates_tree(spec, tree.eta, tree.mu);
    } else if (from_complete) {
        lp::CompleteRates complete = lp::matching_rates_complete(spec);
        for (const Edge& e : spec.edges())
            mean.push_back(complete.r[static_cast<std::size_t>(e.server) *
                                          static_cast<std::size_t>(spec.customer_count()) +
                                      static_cast<std::size_t>(e.customer)]);
    } else { // from_lp
        lp::LpSolution sol = lp::solve_static_plan(spec);
        lp::OptimalDesign design = lp::extract_design(spec, sol);
        if (design.blocks.size() != 1)
            throw ValidationError("--from-lp needs a single-block design (complete "
                                  "pooling); the design has " +
                                  std::to_string(design.blocks.size()) + " blocks");
        mean.assign(spec.edges().size(), 0.0);
        const lp::DesignBlock& block = design.blocks.front();
        for (std::size_t k = 0; k < block.tree_edges.size(); ++k)
            mean[static_cast<std::size_t>(block.tree_edges[k])] = block.r[k];
    }

    std::string label = p.at("label").get<std::string>();
    if (label.empty())
        label = fs::path(p.at("spec").get<std::string>()).stem().string();

    std::vector<stats::TestReport> reports = stats::compare_laws(label, mean, studies);
    std::string as_csv = stats::reports_to_csv(reports);
    std::string as_json = stats::reports_to_json_text(reports);
    ctx.write("report.csv", as_csv);
    ctx.write("report.json", as_json);
    echo(ctx, as_json, as_csv);
    return kExitComplete;
}

// ----------------------------------------------------------- permutations

int run_permutations(RunContext& ctx) {
    SystemSpec spec = load_spec(ctx.parameters.at("spec").get<std::string>());
    auto table = sim::permutation_distribution_theoretical(spec);

    std::string csv = "ordering,probability\n";
    json rows = json::array();
    for (const auto& [label, prob] : table) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.12g", prob);
        csv += label + "," + buf + "\n";
        rows.push_back({label, prob});
    }
    json doc;
    doc["orderings"] = rows;
    std::string doc_text = doc.dump(2) + "\n";

    ctx.write("orderings_theoretical.csv", csv);
    ctx.write("orderings_theoretical.json", doc_text);
    echo(ctx, doc_text, csv);
    return kExitComplete;
}

int dispatch(RunContext& ctx) {
    int code;
    if (ctx.command == "analyze")
        code = run_analyze(ctx);
    else if (ctx.command == "trace")
        code = run_trace(ctx);
    else if (ctx.command == "lp")
        code = run_lp(ctx);
    else if (ctx.command == "simulate")
        code = run_simulate(ctx);
    else if (ctx.command == "ttest")
        code = run_ttest(ctx);
    else if (ctx.command == "permutations")
        code = run_permutations(ctx);
    else
        throw ValidationError("unknown command \"" + ctx.command + "\"");
    ctx.finish();
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fluid-model analysis, throughput planning, and simulation of "
                 "FCFS-ALIS parallel service systems"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(0, 1);

    std::string spec_path;
    std::string out_dir = ".";
    std::string format = "json";
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string from_manifest;
    app.add_option("--spec", spec_path, "system document (JSON)");
    app.add_option("--out-dir", out_dir, "directory for output artifacts")
        ->capture_default_str();
    app.add_option("--format", format, "stdout rendering")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "base seed for simulation streams")
        ->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads for replications")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--from-manifest", from_manifest,
                   "replay a recorded run; other flags except --out-dir are ignored");

    CLI::App* analyze = app.add_subcommand(
        "analyze", "pooling verdict, decomposition, and stability report");
    CLI::App* trace = app.add_subcommand(
        "trace", "exact piecewise-linear fluid trajectory");
    std::vector<double> positions;
    double horizon = 10.0;
    double resolution = 0.0;
    trace->add_option("--positions", positions,
                      "initial server positions, all <= 0 (default: all 0)")
        ->delimiter(',');
    trace->add_option("--horizon", horizon, "trace end time")->capture_default_str();
    trace->add_option("--resolution", resolution,
                      "CSV sampling step (default horizon/100)");

    CLI::App* lp_cmd = app.add_subcommand(
        "lp", "maximal throughput, optimal design, and pruned graph");

    CLI::App* simulate = app.add_subcommand(
        "simulate", "replicated study of matching rates, span, and orderings");
    std::uint64_t warmup = 100000;
    std::uint64_t services = 1000000;
    std::size_t reps = 100;
    std::string law = "exponential";
    bool infinite_supply = true;
    bool allow_any_regime = false;
    simulate->add_option("--warmup", warmup, "service completions before measuring")
        ->capture_default_str();
    simulate->add_option("--services", services, "measured service completions")
        ->capture_default_str();
    simulate->add_option("--reps", reps, "independent replications (>= 2)")
        ->capture_default_str();
    simulate->add_option("--law", law, "service time distribution")
        ->check(CLI::IsMember({"exponential", "pareto", "uniform-wide", "uniform-narrow"}))
        ->capture_default_str();
    simulate->add_flag("--infinite-supply,!--finite-arrivals", infinite_supply,
                       "draw customers on demand (default) or use the spec's lambda");
    simulate->add_flag("--allow-any-regime", allow_any_regime,
                       "run finite arrivals even at or below the throughput bound");

    CLI::App* ttest = app.add_subcommand(
        "ttest", "Hotelling test of simulated studies against a theoretical mean");
    std::vector<std::string> vectors;
    std::string mean_fixture;
    std::string which = "rates";
    std::string label;
    bool from_lp = false, from_tree = false, from_complete = false,
         from_orderings = false;
    ttest->add_option("--vectors", vectors,
                      "study JSON from simulate; repeat for several laws")
        ->required();
    ttest->add_option("--mean-fixture", mean_fixture,
                      "rate matrix CSV (or ordering CSV with --which orderings)");
    ttest->add_flag("--from-lp", from_lp, "mean from the planning design's rates");
    ttest->add_flag("--from-tree", from_tree, "mean from the tree closed form");
    ttest->add_flag("--from-complete", from_complete,
                    "mean from the complete-graph closed form");
    ttest->add_flag("--from-orderings", from_orderings,
                    "mean from the exact ordering distribution");
    ttest->add_option("--which", which, "test matching rates or ordering frequencies")
        ->check(CLI::IsMember({"rates", "orderings"}))
        ->capture_default_str();
    ttest->add_option("--label", label, "system label in the report");

    CLI::App* permutations = app.add_subcommand(
        "permutations", "exact steady-state server-ordering distribution");

    for (CLI::App* sub : {analyze, trace, lp_cmd, simulate, ttest, permutations})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        RunContext ctx;
        if (!from_manifest.empty()) {
            json doc = json::parse(read_file(from_manifest));
            ctx.command = doc.at("command").get<std::string>();
            ctx.parameters = doc.at("parameters");
            ctx.format = doc.value("format", "json");
            ctx.out_dir = doc.value("out_dir", std::string("."));
            // An explicit --out-dir redirects the replay.
            if (app.count("--out-dir") > 0) ctx.out_dir = out_dir;
            return dispatch(ctx);
        }

        if (app.get_subcommands().empty())
            throw ValidationError("pick a subcommand (or --from-manifest); see --help");
        CLI::App* sub = app.get_subcommands().front();
        if (spec_path.empty()) throw ValidationError("--spec is required");

        ctx.command = sub->get_name();
        ctx.out_dir = out_dir;
        ctx.format = format;
        ctx.parameters["spec"] = spec_path;
        if (sub == trace) {
            ctx.parameters["positions"] = positions;
            ctx.parameters["horizon"] = horizon;
            ctx.parameters["resolution"] = resolution;
        } else if (sub == simulate) {
            ctx.parameters["law"] = law;
            ctx.parameters["warmup"] = warmup;
            ctx.parameters["services"] = services;
            ctx.parameters["reps"] = reps;
            ctx.parameters["seed"] = seed;
            ctx.parameters["jobs"] = jobs;
            ctx.parameters["infinite_supply"] = infinite_supply;
            ctx.parameters["allow_any_regime"] = allow_any_regime;
        } else if (sub == ttest) {
            ctx.parameters["vectors"] = vectors;
            ctx.parameters["mean_fixture"] = mean_fixture;
            ctx.parameters["from_lp"] = from_lp;
            ctx.parameters["from_tree"] = from_tree;
            ctx.parameters["from_complete"] = from_complete;
            ctx.parameters["from_orderings"] = from_orderings;
            ctx.parameters["which"] = which;
            ctx.parameters["label"] = label;
        }
        return dispatch(ctx);
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const ModeError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << "\n";
        return kExitInternal;
    }
}
