// influence-lab: config-driven experiment driver.
//
// Subcommands: train, influence, stability, expected, poison.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
// Progress goes to stderr; machine-readable output to stdout and files.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <ilab/ilab.hpp>

namespace {

using namespace ilab;

struct Ctx {
    ExperimentConfig cfg;
    ExperimentData data;
    TrainConfig tc;
    fs::path out;
    fs::path cache;
    int jobs = 1;
    MethodParams mp;
    uint64_t cfg_hash = 0;  // hash of the raw config file text
    uint64_t data_hash = 0; // train and test snapshot hashes combined
};

Ctx make_ctx(const std::string& config_path, int jobs, const std::string& out_override) {
    Ctx ctx;
    const auto raw = detail::read_file_bytes(config_path);
    ctx.cfg_hash = fnv1a(raw.data(), raw.size());
    try {
        ctx.cfg = parse_experiment_config(std::string(raw.begin(), raw.end()));
    } catch (const ConfigError& e) {
        throw ConfigError(config_path + ": " + e.what());
    }
    if (!out_override.empty()) ctx.cfg.output_dir = out_override;

    ctx.data = load_experiment_data(ctx.cfg);
    ctx.tc = ctx.cfg.train_config(static_cast<int>(ctx.data.train.pixel_count()),
                                  static_cast<int>(ctx.cfg.classes.size()));
    ctx.out = ctx.cfg.output_dir;
    fs::create_directories(ctx.out);
    if (const char* env = std::getenv("INFLUENCE_LAB_CACHE"))
        ctx.cache = env;
    else
        ctx.cache = ctx.out / "cache";
    ctx.jobs = resolve_jobs(jobs);
    ctx.mp = ctx.cfg.method_params(ctx.jobs);
    ctx.data_hash = mix_u64(dataset_hash(ctx.data.train), dataset_hash(ctx.data.test));
    return ctx;
}

/// Caching trainer/influence wrappers bound to one (train, test) pair.
TrainerFn make_trainer(const Ctx& ctx, const Dataset& train_set, const Dataset& test_set) {
    return [&ctx, &train_set, &test_set](const TrainConfig& c) {
        const bool cached =
            RunPaths{ctx.cache / "runs" / run_key(c, dataset_hash(train_set))}.complete();
        TrainedModel model = train_cached(ctx.cache, c, train_set, test_set);
        std::fprintf(stderr, "%s model seeds (%llu, %llu) accuracy %.3f\n",
                     cached ? "cached" : "trained",
                     static_cast<unsigned long long>(c.init_seed),
                     static_cast<unsigned long long>(c.order_seed), model.test_accuracy);
        return model;
    };
}

InfluenceFn make_influence(const Ctx& ctx, const Dataset&, const Dataset&) {
    return [&ctx](Method m, const TrainedModel& model, const Dataset& tr, const Dataset& te,
                  const MethodParams& p) {
        return cached_model_influence(ctx.cache, m, model, tr, te, p);
    };
}

void write_json(const fs::path& path, const json& j) {
    detail::write_file_text(path, j.dump(2) + "\n");
}

int cmd_train(Ctx& ctx) {
    const RunPaths paths{ctx.cache / "runs" / run_key(ctx.tc, dataset_hash(ctx.data.train))};
    std::fprintf(stderr, "training %s (%zu train / %zu test examples)\n",
                 ctx.tc.arch.describe().c_str(), ctx.data.train.size(), ctx.data.test.size());
    TrainedModel model = train_cached(ctx.cache, ctx.tc, ctx.data.train, ctx.data.test);
    std::printf("run_dir %s\n", paths.dir.string().c_str());
    std::printf("fingerprint %s\n", hex_u64(model.fingerprint).c_str());
    std::printf("train_accuracy %.4f\n", model.train_accuracy);
    std::printf("test_accuracy %.4f\n", model.test_accuracy);
    return 0;
}

int cmd_influence(Ctx& ctx, const std::string& run_dir, const std::string& method_name) {
    const Method method = method_from_string(method_name);
    TrainedModel model;
    if (!run_dir.empty()) {
        model = load_run(RunPaths{run_dir});
        if (model.dataset_hash != dataset_hash(ctx.data.train))
            throw DataError("run " + run_dir + " was trained on different data "
                            "(dataset hash mismatch)");
    } else {
        model = train_cached(ctx.cache, ctx.tc, ctx.data.train, ctx.data.test);
    }
    if (method == Method::tracein_ideal && !model.step_trace)
        throw ConfigError("tracein_ideal needs a step trace; retrain with batch_size=1 and "
                          "record_step_trace=true");

    InfluenceMatrix m;
    if (method == Method::loo) {
        const fs::path cached = matrix_cache_path(ctx.cache, model, method, ctx.mp);
        if (fs::exists(cached)) {
            m = read_matrix_file(cached);
        } else {
            const size_t n = ctx.data.train.size();
            std::fprintf(stderr, "loo: budget %zu trainings (1 full + %zu retrains)\n", n + 1, n);
            m = loo(model.config, ctx.data.train, ctx.data.test, ctx.jobs,
                    [](size_t done, size_t total) {
                        std::fprintf(stderr, "loo retrain %zu/%zu\n", done, total);
                    });
            fs::create_directories(cached.parent_path());
            write_matrix_file(cached, m);
        }
    } else {
        m = cached_model_influence(ctx.cache, method, model, ctx.data.train, ctx.data.test,
                                   ctx.mp);
    }

    const fs::path base =
        ctx.out / (std::string(to_string(method)) + "_" + hex_u64(model.fingerprint));
    write_matrix_file(fs::path(base.string() + ".im"), m);
    write_matrix_csv(fs::path(base.string() + ".csv"), m);

    double lo = m.scores.empty() ? 0.0 : m.scores.front(), hi = lo, sum = 0.0;
    for (double v : m.scores) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    std::printf("matrix %s\n", (base.string() + ".im").c_str());
    std::printf("csv %s\n", (base.string() + ".csv").c_str());
    std::printf("rows %zu cols %zu\n", m.n_test, m.n_train);
    std::printf("score_min %.17g\nscore_max %.17g\nscore_mean %.17g\n", lo, hi,
                sum / static_cast<double>(m.scores.empty() ? 1 : m.scores.size()));
    return 0;
}

int cmd_stability(Ctx& ctx) {
    const std::vector<uint64_t>& variations = ctx.cfg.axis == StabilityAxis::batch_size
                                                  ? ctx.cfg.axis_batch_sizes
                                                  : ctx.cfg.axis_seeds;
    TrainerFn trainer = make_trainer(ctx, ctx.data.train, ctx.data.test);
    InfluenceFn influence = make_influence(ctx, ctx.data.train, ctx.data.test);

    std::vector<StabilityReport> reports;
    for (Method method : ctx.cfg.methods) {
        if (method == Method::loo)
            std::fprintf(stderr, "loo: budget %zu trainings per variation\n",
                         ctx.data.train.size() + 1);
        std::fprintf(stderr, "stability: method %s over %zu variations\n", to_string(method),
                     variations.size());
        reports.push_back(stability_report(method, ctx.cfg.axis, variations, ctx.tc,
                                           ctx.data.train, ctx.data.test, ctx.mp, false,
                                           trainer, influence));
    }

    write_json(ctx.out / "stability.json",
               stability_to_json(reports, report_header(ctx.cfg_hash, ctx.data_hash)));
    const std::string table = stability_table(reports);
    detail::write_file_text(ctx.out / "stability.txt", table);
    std::fputs(table.c_str(), stdout);
    return 0;
}

json ensemble_manifest(const EnsembleSpec& spec, const std::vector<TrainedModel>& models) {
    json j;
    j["model_count"] = spec.model_count;
    j["models"] = json::array();
    for (size_t i = 0; i < models.size(); ++i)
        j["models"].push_back({{"init_seed", spec.seed_pairs[i].first},
                               {"order_seed", spec.seed_pairs[i].second},
                               {"fingerprint", hex_u64(models[i].fingerprint)}});
    return j;
}

int cmd_expected(Ctx& ctx) {
    EnsembleSpec spec_a =
        make_ensemble_spec(ctx.tc, ctx.cfg.ensemble_count, ctx.cfg.ensemble_seed_a);
    EnsembleSpec spec_b =
        make_ensemble_spec(ctx.tc, ctx.cfg.ensemble_count, ctx.cfg.ensemble_seed_b);
    check_disjoint(spec_a, spec_b);

    TrainerFn trainer = make_trainer(ctx, ctx.data.train, ctx.data.test);
    InfluenceFn influence = make_influence(ctx, ctx.data.train, ctx.data.test);
    std::fprintf(stderr, "expected: building 2 ensembles of %zu models\n",
                 ctx.cfg.ensemble_count);
    auto ens_a = build_ensemble(spec_a, ctx.data.train, ctx.data.test, ctx.jobs, trainer);
    auto ens_b = build_ensemble(spec_b, ctx.data.train, ctx.data.test, ctx.jobs, trainer);

    std::vector<ExpectedStability> rows;
    for (Method method : ctx.cfg.methods) {
        if (method == Method::loo)
            std::fprintf(stderr, "loo: budget %zu trainings per model\n",
                         ctx.data.train.size() + 1);
        std::fprintf(stderr, "expected: method %s\n", to_string(method));
        rows.push_back(expected_stability(method, ens_a, ens_b, ctx.data.train, ctx.data.test,
                                          ctx.mp, influence));
    }

    json manifest;
    manifest["a"] = ensemble_manifest(spec_a, ens_a);
    manifest["b"] = ensemble_manifest(spec_b, ens_b);
    write_json(ctx.out / "expected.json",
               expected_to_json(rows, report_header(ctx.cfg_hash, ctx.data_hash), manifest));
    const std::string table = expected_table(rows);
    detail::write_file_text(ctx.out / "expected.txt", table);
    std::fputs(table.c_str(), stdout);
    return 0;
}

int cmd_poison(Ctx& ctx) {
    const PoisonSpec spec = ctx.cfg.poison_spec();
    Dataset ptrain = inject_poison(ctx.data.train, spec);
    Dataset ptest = poison_test_set(ctx.data.test, spec);
    std::fprintf(stderr, "poison: %zu of class %d relabeled to %d; %zu poisoned test examples\n",
                 spec.count, spec.source_class, spec.target_class, ptest.size());

    EnsembleSpec espec =
        make_ensemble_spec(ctx.tc, ctx.cfg.ensemble_count, ctx.cfg.ensemble_seed_a);
    TrainerFn trainer = make_trainer(ctx, ptrain, ptest);
    InfluenceFn influence = make_influence(ctx, ptrain, ptest);
    auto ens = build_ensemble(espec, ptrain, ptest, ctx.jobs, trainer);

    std::vector<ExpectedInfluence> expected;
    for (Method method : ctx.cfg.methods) {
        std::fprintf(stderr, "poison: method %s\n", to_string(method));
        expected.push_back(expected_influence(method, ens, ptrain, ptest, ctx.mp, true,
                                              influence));
    }

    PoisonReport report = poison_report(expected, ptrain, ptest);
    const uint64_t phash = mix_u64(dataset_hash(ptrain), dataset_hash(ptest));
    write_json(ctx.out / "poison.json", poison_to_json(report, report_header(ctx.cfg_hash, phash)));
    detail::write_file_text(ctx.out / "poison.csv", poison_to_csv(report));
    const std::string table = poison_table(report);
    detail::write_file_text(ctx.out / "poison.txt", table);
    std::fputs(table.c_str(), stdout);
    for (const PoisonMethodRow& row : report.rows) {
        const double sum = row.groups[0].mean_share + row.groups[1].mean_share +
                           row.groups[2].mean_share;
        std::printf("%s share_sum %.3f\n", to_string(row.method), sum);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-data attribution experiments over a deterministic MLP trainer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ILAB_VERSION);

    std::string config_path;
    std::string out_override;
    std::string run_dir;
    std::string method_name;
    int jobs = 0; // 0 = all hardware threads

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--jobs", jobs, "worker threads (0 = hardware)");
        sub->add_option("--out", out_override, "output directory (overrides config)");
    };
    CLI::App* sub_train = app.add_subcommand("train", "train one model and store its run");
    add_common(sub_train);
    CLI::App* sub_influence =
        app.add_subcommand("influence", "compute one influence matrix for a run");
    add_common(sub_influence);
    sub_influence->add_option("--run", run_dir, "run directory (defaults to the cached run)");
    sub_influence->add_option("--method", method_name, "influence method")->required();
    CLI::App* sub_stability =
        app.add_subcommand("stability", "correlate a method across models on one axis");
    add_common(sub_stability);
    CLI::App* sub_expected =
        app.add_subcommand("expected", "ensemble-averaged influence across disjoint seed sets");
    add_common(sub_expected);
    CLI::App* sub_poison =
        app.add_subcommand("poison", "backdoor poison detection with expected influence");
    add_common(sub_poison);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // command line problems are config errors
    }

    try {
        Ctx ctx = make_ctx(config_path, jobs, out_override);
        if (sub_train->parsed()) return cmd_train(ctx);
        if (sub_influence->parsed()) return cmd_influence(ctx, run_dir, method_name);
        if (sub_stability->parsed()) return cmd_stability(ctx);
        if (sub_expected->parsed()) return cmd_expected(ctx);
        return cmd_poison(ctx);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
