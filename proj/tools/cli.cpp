#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dgcl/error.hpp"
#include "dgcl/featurebank.hpp"
#include "dgcl/metrics.hpp"
#include "dgcl/pipeline.hpp"
#include "dgcl/synthgen.hpp"

namespace dgcl::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class FlagType { count, real, text, boolean };

struct FlagSpec {
    const char* flag;
    const char* key;
    FlagType type;
    const char* help;
};

constexpr FlagSpec kEpisodeFlags[] = {
    {"--e-dot", "e_dot", FlagType::count, "DoT training epochs (E_DoT)"},
    {"--e-oa", "e_oa", FlagType::count, "output alignment epochs (E_OA)"},
    {"--k-prototypes", "k_prototypes", FlagType::count, "prototypes kept per domain (K)"},
    {"--lambda", "lambda", FlagType::real, "domain loss weight"},
    {"--tau", "tau", FlagType::real, "contrastive temperature"},
    {"--heads", "heads", FlagType::count, "attention heads"},
    {"--m-proj", "m_proj", FlagType::count, "projection head width (0 = m)"},
    {"--covariance", "covariance", FlagType::text, "diagonal | full"},
    {"--prototype-selection", "prototype_selection", FlagType::text, "random | knn"},
    {"--align-schedule", "align_schedule", FlagType::text, "per_task | final_only"},
    {"--scale", "scale", FlagType::text, "attention scale: per_head | full_width"},
    {"--normalize-projections", "normalize_projections", FlagType::boolean, "true | false"},
    {"--positive-reduction", "positive_reduction", FlagType::text, "sum | mean over positives"},
    {"--activation", "activation", FlagType::text, "relu | gelu | identity"},
    {"--readout-init", "readout_init", FlagType::text, "zero | gaussian"},
    {"--phase1-epochs", "phase1_epochs", FlagType::count, "head training epochs per task"},
    {"--samples-per-pair", "samples_per_pair", FlagType::count, "alignment draws per (domain, class) pair"},
    {"--pool-per-class", "pool_per_class", FlagType::count, "contrastive pool draws per class"},
    {"--learning-rate", "learning_rate", FlagType::real, "Adam base learning rate"},
};

struct EpisodeFlags {
    std::string config_path;
    bool no_dot = false;
    std::vector<std::string> values = std::vector<std::string>(std::size(kEpisodeFlags));
    std::vector<CLI::Option*> options;
};

void add_episode_flags(CLI::App* app, EpisodeFlags& f) {
    app->add_option("--config", f.config_path, "episode config JSON; flags override it");
    app->add_flag("--no-dot,--no_dot", f.no_dot, "class-only alignment baseline");
    for (std::size_t i = 0; i < std::size(kEpisodeFlags); ++i)
        f.options.push_back(app->add_option(kEpisodeFlags[i].flag, f.values[i], kEpisodeFlags[i].help));
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, "invalid JSON in " + path + ": " + e.what(), {path});
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

EpisodeConfig resolve_episode(const EpisodeFlags& f) {
    json j = f.config_path.empty() ? json::object() : read_json_file(f.config_path);
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < std::size(kEpisodeFlags); ++i) {
        if (f.options[i]->count() == 0) continue;
        const auto& spec = kEpisodeFlags[i];
        const std::string& v = f.values[i];
        try {
            std::size_t used = 0;
            switch (spec.type) {
                case FlagType::count: {
                    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
                    j[spec.key] = std::stoull(v, &used);
                    break;
                }
                case FlagType::real: j[spec.key] = std::stod(v, &used); break;
                case FlagType::text: j[spec.key] = v; used = v.size(); break;
                case FlagType::boolean:
                    if (v == "true" || v == "1" || v == "on") j[spec.key] = true;
                    else if (v == "false" || v == "0" || v == "off") j[spec.key] = false;
                    else throw std::invalid_argument(v);
                    used = v.size();
                    break;
            }
            if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::logic_error&) {
            bad.push_back(std::string(spec.key) + ": cannot parse '" + v + "'");
        }
    }
    if (f.no_dot) j["no_dot"] = true;
    try {
        auto cfg = EpisodeConfig::from_json(j);
        if (!bad.empty()) throw Error(ErrorKind::config, "invalid episode config", bad);
        return cfg;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::config) throw;
        for (const auto& x : e.fields()) bad.push_back(x);
        throw Error(ErrorKind::config, "invalid episode config", bad);
    }
}

struct LoadedBank {
    FeatureBank bank;
    json provenance;
};

LoadedBank load_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open bank " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::uint64_t h = 1469598103934665603ULL;
    for (std::uint8_t b : bytes) h = (h ^ b) * 1099511628211ULL;
    LoadedBank out{decode_bank(bytes), json::object()};
    out.provenance = {{"path", path}, {"bytes", bytes.size()}, {"fnv1a64", fmt::format("{:016x}", h)}};
    return out;
}

// Runs fn(i) for i in [0, n) on up to thread_cap() workers.
template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(thread_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

json metrics_json(const MetricValues& v) {
    json m = json::object();
    for (const char* name : kMetricNames) {
        auto x = metric_by_name(v, name);
        m[name] = x ? json(*x) : json(nullptr);
    }
    return m;
}

json resolved_config(const EpisodeConfig& cfg) {
    json j = cfg.to_json();
    j.erase("seed");
    return j;
}

int cmd_gen_synth(const std::string& config_path, const std::optional<std::uint64_t>& seed, bool unseen,
                  const std::string& out_path, std::ostream& out) {
    json j = config_path.empty() ? json::object() : read_json_file(config_path);
    if (seed) j["seed"] = *seed;
    if (unseen) j["unseen_domain"] = true;
    FeatureBank bank = generate(SynthConfig::from_json(j));
    write_bank(bank, out_path);
    out << describe(bank).to_text();
    return 0;
}

struct SeedRun {
    std::uint64_t seed = 0;
    EpisodeResult result;
};

std::vector<SeedRun> run_seeds(const FeatureBank& bank, const EpisodeConfig& base, const std::vector<std::uint64_t>& seeds) {
    std::vector<SeedRun> runs(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        EpisodeConfig cfg = base;
        cfg.seed = seeds[i];
        runs[i] = SeedRun{seeds[i], run_episode(bank, cfg)};
    });
    return runs;
}

int cmd_run(const std::string& bank_path, const std::vector<std::uint64_t>& seeds, const EpisodeConfig& cfg,
            const std::string& out_dir, std::ostream& out) {
    if (seeds.empty()) throw Error(ErrorKind::config, "at least one seed is required", {"seeds"});
    LoadedBank lb = load_bank(bank_path);
    auto runs = run_seeds(lb.bank, cfg, seeds);
    fs::create_directories(out_dir);
    MetricsReport report;
    report.config = {{"episode", resolved_config(cfg)}, {"seeds", seeds}, {"bank", lb.provenance}};
    for (const auto& r : runs) {
        EpisodeConfig seeded = cfg;
        seeded.seed = r.seed;
        MetricValues v = compute_metrics(r.result.accuracy);
        report.runs.push_back({r.seed, v});
        json artifact = {{"kind", "accuracy_tensor"},
                         {"seed", r.seed},
                         {"config", seeded.to_json()},
                         {"bank", lb.provenance},
                         {"tensor", r.result.accuracy.to_json()},
                         {"metrics", metrics_json(v)},
                         {"dot_loss_traces", r.result.dot_traces},
                         {"retained_floats", r.result.state.retained_floats()}};
        write_json(fs::path(out_dir) / fmt::format("tensor_seed{}.json", r.seed), artifact);
    }
    json rj = report.to_json();
    rj["kind"] = "metrics_report";
    write_json(fs::path(out_dir) / "report.json", rj);
    write_text(fs::path(out_dir) / "report.txt", report.to_table());
    out << report.to_table();
    return 0;
}

int cmd_eval(const std::vector<std::string>& files, const std::string& out_dir, std::ostream& out) {
    if (files.empty()) throw Error(ErrorKind::config, "no tensor files given", {"tensors"});
    MetricsReport report;
    json sources = json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
        json j = read_json_file(files[i]);
        const json& tj = j.contains("tensor") ? j.at("tensor") : j;
        std::uint64_t seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : i;
        report.runs.push_back({seed, compute_metrics(AccuracyTensor::from_json(tj))});
        json src = {{"path", files[i]}, {"seed", seed}};
        if (j.contains("config")) src["config"] = j.at("config");
        sources.push_back(src);
    }
    report.config = {{"sources", sources}};
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        json rj = report.to_json();
        rj["kind"] = "metrics_report";
        write_json(fs::path(out_dir) / "report.json", rj);
        write_text(fs::path(out_dir) / "report.txt", report.to_table());
    }
    out << report.to_table();
    return 0;
}

int cmd_sweep(const std::string& bank_path, std::string param, const std::vector<std::string>& values,
              const std::vector<std::uint64_t>& seeds, const EpisodeConfig& base, bool baseline,
              const std::string& out_dir, std::ostream& out) {
    std::replace(param.begin(), param.end(), '-', '_');
    if (param == "e_dot" || param == "k_prototypes" || param == "lambda") {
    } else {
        throw Error(ErrorKind::config, "sweep parameter must be e_dot, k_prototypes or lambda", {"param"});
    }
    if (values.empty()) throw Error(ErrorKind::config, "sweep needs at least one value", {"values"});
    if (seeds.empty()) throw Error(ErrorKind::config, "at least one seed is required", {"seeds"});

    std::vector<EpisodeConfig> points;
    std::vector<json> point_values;
    std::vector<std::string> bad;
    for (const auto& v : values) {
        json j = base.to_json();
        try {
            std::size_t used = 0;
            if (param == "lambda") j[param] = std::stod(v, &used);
            else {
                if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
                j[param] = std::stoull(v, &used);
            }
            if (used != v.size()) throw std::invalid_argument(v);
            points.push_back(EpisodeConfig::from_json(j));
            point_values.push_back(j[param]);
        } catch (const std::logic_error&) {
            bad.push_back("values: cannot parse '" + v + "'");
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::config) throw;
            for (const auto& f : e.fields()) bad.push_back("values[" + v + "] " + f);
        }
    }
    if (!bad.empty()) throw Error(ErrorKind::config, "invalid sweep", bad);
    if (baseline) {
        EpisodeConfig b = base;
        b.no_dot = true;
        points.push_back(b);
    }

    LoadedBank lb = load_bank(bank_path);
    std::vector<MetricValues> results(points.size() * seeds.size());
    parallel_for(results.size(), [&](std::size_t i) {
        EpisodeConfig cfg = points[i / seeds.size()];
        cfg.seed = seeds[i % seeds.size()];
        results[i] = compute_metrics(run_episode(lb.bank, cfg).accuracy);
    });

    auto summarize = [&](std::size_t p) {
        MetricsReport r;
        for (std::size_t s = 0; s < seeds.size(); ++s) r.runs.push_back({seeds[s], results[p * seeds.size() + s]});
        return r;
    };
    json pts = json::array();
    std::string table = fmt::format("{:<12} {:>18}\n", param, "A_all");
    for (std::size_t p = 0; p < point_values.size(); ++p) {
        MetricsReport r = summarize(p);
        auto agg = *r.aggregate("A_all");
        std::vector<double> per_seed;
        for (const auto& run : r.runs) per_seed.push_back(*run.values.a_all);
        pts.push_back({{"value", point_values[p]},
                       {"a_all", {{"mean", agg.first}, {"std", agg.second}, {"per_seed", per_seed}}},
                       {"aggregate", r.to_json().at("aggregate")}});
        table += fmt::format("{:<12} {:>18}\n", point_values[p].dump(),
                             fmt::format("{:.2f} ± {:.2f}", 100 * agg.first, 100 * agg.second));
    }
    json sweep = {{"kind", "sweep"},
                  {"param", param},
                  {"values", point_values},
                  {"seeds", seeds},
                  {"config", resolved_config(base)},
                  {"bank", lb.provenance},
                  {"points", pts}};
    if (baseline) {
        MetricsReport r = summarize(point_values.size());
        auto agg = *r.aggregate("A_all");
        sweep["baseline"] = {{"no_dot", true}, {"a_all", {{"mean", agg.first}, {"std", agg.second}}},
                             {"aggregate", r.to_json().at("aggregate")}};
        table += fmt::format("{:<12} {:>18}\n", "no_dot", fmt::format("{:.2f} ± {:.2f}", 100 * agg.first, 100 * agg.second));
    }
    fs::create_directories(out_dir);
    write_json(fs::path(out_dir) / "sweep.json", sweep);
    write_text(fs::path(out_dir) / "sweep.txt", table);
    out << table;
    return 0;
}

int cmd_inspect(const std::string& bank_path, bool as_json, std::ostream& out) {
    BankSummary s = describe(read_bank(bank_path));
    if (as_json) out << s.to_json().dump(2) << "\n";
    else out << s.to_text();
    return 0;
}

void emit_error(std::ostream& err, std::string_view kind, const std::string& message,
                const std::vector<std::string>& fields = {}) {
    err << json{{"error", {{"kind", kind}, {"message", message}, {"fields", fields}}}}.dump() << "\n";
}

}  // namespace

unsigned thread_cap() {
    if (const char* env = std::getenv("DOT_ENGINE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Domain-generalizable continual learning engine", "dgcl"};
    app.require_subcommand(1);

    std::string synth_config, synth_out;
    std::optional<std::uint64_t> synth_seed;
    bool synth_unseen = false;
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic feature bank");
    gen->add_option("--config", synth_config, "generator config JSON");
    gen->add_option("--seed", synth_seed, "generator seed (overrides the config)");
    gen->add_flag("--unseen-domain", synth_unseen, "add a held-out unseen domain");
    gen->add_option("--out", synth_out, "output bank path")->required();

    std::string run_bank, run_out;
    std::vector<std::uint64_t> run_seeds_v{0, 1, 2};
    EpisodeFlags run_flags;
    auto* runc = app.add_subcommand("run", "train and evaluate episodes, one per seed");
    runc->add_option("--bank", run_bank, "feature bank")->required();
    runc->add_option("--seeds", run_seeds_v, "comma-separated seeds")->delimiter(',');
    runc->add_option("--out-dir", run_out, "output directory")->required();
    add_episode_flags(runc, run_flags);

    std::vector<std::string> eval_files;
    std::string eval_out;
    auto* evalc = app.add_subcommand("eval", "compute metrics from accuracy tensor files");
    evalc->add_option("tensors", eval_files, "tensor JSON files")->required();
    evalc->add_option("--out-dir", eval_out, "write report.json and report.txt here");

    std::string sweep_bank, sweep_out, sweep_param;
    std::vector<std::string> sweep_values;
    std::vector<std::uint64_t> sweep_seeds{0, 1, 2};
    bool sweep_baseline = false;
    EpisodeFlags sweep_flags;
    auto* sweepc = app.add_subcommand("sweep", "A_all over a grid of one hyperparameter");
    sweepc->add_option("--bank", sweep_bank, "feature bank")->required();
    sweepc->add_option("--param", sweep_param, "e-dot | k-prototypes | lambda")->required();
    sweepc->add_option("--values", sweep_values, "comma-separated values")->delimiter(',')->required();
    sweepc->add_option("--seeds", sweep_seeds, "comma-separated seeds")->delimiter(',');
    sweepc->add_flag("--baseline", sweep_baseline, "also run the no_dot baseline");
    sweepc->add_option("--out-dir", sweep_out, "output directory")->required();
    add_episode_flags(sweepc, sweep_flags);

    std::string inspect_bank;
    bool inspect_json = false;
    auto* inspectc = app.add_subcommand("inspect", "summarize a feature bank");
    inspectc->add_option("bank", inspect_bank, "feature bank")->required();
    inspectc->add_flag("--json", inspect_json, "emit JSON");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        emit_error(err, "usage", e.what());
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_synth(synth_config, synth_seed, synth_unseen, synth_out, out);
        if (runc->parsed()) return cmd_run(run_bank, run_seeds_v, resolve_episode(run_flags), run_out, out);
        if (evalc->parsed()) return cmd_eval(eval_files, eval_out, out);
        if (sweepc->parsed())
            return cmd_sweep(sweep_bank, sweep_param, sweep_values, sweep_seeds, resolve_episode(sweep_flags),
                             sweep_baseline, sweep_out, out);
        if (inspectc->parsed()) return cmd_inspect(inspect_bank, inspect_json, out);
    } catch (const Error& e) {
        emit_error(err, to_string(e.kind()), e.what(), e.fields());
        return 1;
    } catch (const std::exception& e) {
        emit_error(err, "internal", e.what());
        return 1;
    }
    return 1;
}

}  // namespace dgcl::cli
