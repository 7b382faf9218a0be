// gplab command line: dataset generation, training runs, the numerical
// verification suite and run comparison reports.
//
// exit codes: 0 success, 2 usage/config error, 3 numeric abort,
//             4 verification-suite failure

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "gplab/analysis.hpp"
#include "gplab/config.hpp"
#include "gplab/core_math.hpp"
#include "gplab/dataset.hpp"
#include "gplab/errors.hpp"
#include "gplab/format.hpp"
#include "gplab/trainer.hpp"
#include "gplab/version.hpp"

namespace fs = std::filesystem;
using namespace gplab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheckFailed = 4;

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string scenario = "balanced";
    std::size_t classes = 10;
    std::size_t dim = 8;
    std::size_t n_per_class = 400;
    double separation = 3.0;
    double ratio = 100.0;
    double rate = 0.4;
    std::string noisy_classes;  // comma list; empty = all classes
    std::uint64_t seed = 1;
    std::string out = "dataset.csv";
};

std::vector<int> parse_class_list(const std::string& text) {
    std::vector<int> classes;
    if (text.empty()) return classes;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        classes.push_back(static_cast<int>(parse_int(part)));
    }
    return classes;
}

std::string join_counts(const std::vector<std::size_t>& counts) {
    std::string out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(counts[i]);
    }
    return out;
}

GenDataArgs gen_args_from_config(const std::map<std::string, std::string>& config) {
    const KeyValues kv = KeyValues::from_map(config);
    GenDataArgs args;
    args.scenario = kv.get_str("scenario", args.scenario);
    args.classes = static_cast<std::size_t>(kv.get_int("classes", static_cast<long long>(args.classes)));
    args.dim = static_cast<std::size_t>(kv.get_int("dim", static_cast<long long>(args.dim)));
    args.n_per_class =
        static_cast<std::size_t>(kv.get_int("n_per_class", static_cast<long long>(args.n_per_class)));
    args.separation = kv.get_double("separation", args.separation);
    args.ratio = kv.get_double("ratio", args.ratio);
    args.rate = kv.get_double("rate", args.rate);
    args.noisy_classes = kv.get_str("noisy_classes", args.noisy_classes);
    args.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(args.seed)));
    args.out = kv.get_str("out", args.out);
    kv.require_all_consumed();
    return args;
}

int run_gen_data(const GenDataArgs& args) {
    Rng root(args.seed);
    Rng data_rng = root.substream("data");

    Dataset ds = gen_gaussian_mixture(args.classes, args.dim, args.n_per_class, args.separation,
                                      data_rng);
    if (args.scenario == "longtail") {
        ds = gen_longtail(ds, args.ratio, data_rng);
    } else if (args.scenario == "noisy") {
        ds = inject_symmetric_noise(ds, args.rate, data_rng, parse_class_list(args.noisy_classes));
    } else if (args.scenario != "balanced") {
        throw ConfigError("gen-data: unknown scenario '" + args.scenario + "'");
    }

    const fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_dataset(ds, out_path);

    RunManifest manifest;
    manifest.tool_version = kToolVersion;
    manifest.command = "gen-data";
    manifest.seed = args.seed;
    manifest.config = {{"scenario", args.scenario},
                       {"classes", std::to_string(args.classes)},
                       {"dim", std::to_string(args.dim)},
                       {"n_per_class", std::to_string(args.n_per_class)},
                       {"separation", fmt_double(args.separation)},
                       {"ratio", fmt_double(args.ratio)},
                       {"rate", fmt_double(args.rate)},
                       {"noisy_classes", args.noisy_classes},
                       {"seed", std::to_string(args.seed)},
                       {"out", args.out}};
    manifest.artifacts = {{"dataset", args.out}};
    manifest.extra["class_counts"] = join_counts(ds.class_counts());
    manifest.extra["N"] = std::to_string(ds.size());
    if (ds.clean_labels) {
        std::size_t flipped = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] != (*ds.clean_labels)[i]) ++flipped;
        }
        manifest.extra["realized_noise_rate"] =
            fmt_double(static_cast<double>(flipped) / static_cast<double>(ds.size()));
    }
    save_manifest(manifest, out_path.string() + ".manifest.json");

    std::cout << "wrote " << args.out << " (" << ds.size() << " samples, " << args.classes
              << " classes)\n";
    return kExitOk;
}

// ------------------------------------------------------------------- train

std::string derive_noisy_classes(const Dataset& ds) {
    if (!ds.clean_labels) return "";
    std::vector<bool> noisy(ds.num_classes, false);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] != (*ds.clean_labels)[i]) {
            noisy[static_cast<std::size_t>((*ds.clean_labels)[i])] = true;
        }
    }
    std::string out;
    for (std::size_t c = 0; c < noisy.size(); ++c) {
        if (!noisy[c]) continue;
        if (!out.empty()) out += ',';
        out += std::to_string(c);
    }
    return out;
}

int run_train(const TrainSpec& spec) {
    const Dataset train_ds = load_dataset(spec.data_path);
    const Dataset test_ds = load_dataset(spec.test_path);

    const TrainResult result = train(spec.train, train_ds, test_ds);

    const fs::path out_dir(spec.out_dir);
    fs::create_directories(out_dir);
    const fs::path metrics_path = out_dir / "metrics.csv";
    const fs::path plan_path = out_dir / "plan.jsonl";
    const fs::path checkpoint_path = out_dir / "checkpoint.bin";
    write_metrics_csv(result.metrics, train_ds.num_classes, metrics_path);
    write_plan_jsonl(result.plans, plan_path);
    save_checkpoint(result.net, checkpoint_path);

    RunManifest manifest;
    manifest.tool_version = kToolVersion;
    manifest.command = "train";
    manifest.seed = spec.train.seed;
    manifest.config = resolved_config(spec);
    manifest.artifacts = {{"dataset", spec.data_path},
                          {"test_dataset", spec.test_path},
                          {"metrics", metrics_path.string()},
                          {"plan", plan_path.string()},
                          {"checkpoint", checkpoint_path.string()}};
    manifest.extra["classes"] = std::to_string(train_ds.num_classes);
    manifest.extra["dim"] = std::to_string(train_ds.dim());
    manifest.extra["train_size"] = std::to_string(train_ds.size());
    manifest.extra["class_counts"] = join_counts(train_ds.class_counts());
    manifest.extra["noisy_classes"] = derive_noisy_classes(train_ds);
    save_manifest(manifest, out_dir / "manifest.json");

    const MetricsRecord& last = result.metrics.back();
    std::cout << "run complete: method=" << method_name(spec.train.method)
              << " final_epoch=" << last.epoch << " train_loss=" << fmt_double(last.train_loss)
              << " test_acc=" << fmt_double(last.acc_overall) << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------- check

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct NetInstance {
    Mlp net;
    Vec x;
    int label = 0;
};

std::vector<bool> relu_pattern(const Mlp& net, const Vec& x) {
    const auto [u, cache] = forward(net, x);
    std::vector<bool> pattern;
    for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
        for (const double z : cache.pre[l]) pattern.push_back(z > 0.0);
    }
    return pattern;
}

// Hidden pre-activations at least `margin` away from the ReLU kink, so
// finite differences and small parameter displacements stay on one linear
// piece. Inputs are redrawn until the margin holds.
NetInstance random_instance(Rng& rng, const std::vector<std::size_t>& dims, double margin) {
    NetInstance inst;
    Rng init = rng.substream("net-" + std::to_string(rng.next_u64()));
    inst.net = init_mlp(dims, init);
    for (int attempt = 0; attempt < 200; ++attempt) {
        Vec x(dims.front());
        for (double& v : x) v = rng.normal();
        const auto [u, cache] = forward(inst.net, x);
        bool ok = true;
        for (std::size_t l = 0; ok && l + 1 < inst.net.num_layers(); ++l) {
            for (const double z : cache.pre[l]) {
                if (std::fabs(z) < margin) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) {
            inst.x = x;
            inst.label = static_cast<int>(rng.uniform_int(dims.back()));
            return inst;
        }
    }
    throw NumericError("random_instance: could not find a kink-free sample");
}

std::vector<CheckResult> check_grads(std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<std::vector<std::size_t>> shapes = {
            {3, 6, 4}, {5, 8, 6, 4}, {4, 7, 3}, {2, 5, 5, 2}, {6, 9, 5}};
        const auto& dims = shapes[static_cast<std::size_t>(trial) % shapes.size()];
        NetInstance inst = random_instance(rng, dims, 1e-3);
        const auto [u, cache] = forward(inst.net, inst.x);
        const ParamGrad analytic =
            backward_from_logit_grad(inst.net, cache, ce_logit_grad(u, inst.label));
        const ParamGrad fd = finite_diff_param_grad(inst.net, inst.x, inst.label, 1e-5);
        for (std::size_t k = 0; k < analytic.size(); ++k) {
            const double scale = std::max({std::fabs(analytic[k]), std::fabs(fd[k]), 1e-8});
            worst = std::max(worst, std::fabs(analytic[k] - fd[k]) / scale);
        }
    }
    CheckResult r;
    r.name = "backward vs central finite differences (20 nets)";
    r.measured = worst;
    r.threshold = 1e-6;
    r.pass = worst <= r.threshold;
    r.detail = "max per-parameter rel err";
    return {r};
}

std::vector<CheckResult> check_duality(std::uint64_t seed) {
    Rng rng(seed);
    double worst_rel = 0.0;
    int good_ratio = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        NetInstance inst = random_instance(rng, {4, 6, 3}, 1e-3);
        Vec delta(3);
        for (double& v : delta) v = rng.normal();
        delta = scaled(delta, 1e-3 / norm(delta));
        const DualityReport report = duality_check(inst.net, inst.x, inst.label, delta);
        worst_rel = std::max(worst_rel, report.rel_error);
        if (report.error_ratio <= 0.75) ++good_ratio;
    }
    CheckResult rel;
    rel.name = "first-order gradient-change approximation at |delta| = 1e-3";
    rel.measured = worst_rel;
    rel.threshold = 0.1;
    rel.pass = worst_rel <= rel.threshold;
    rel.detail = "max rel error over 20 trials";
    CheckResult ratio;
    ratio.name = "error contraction under delta halving";
    ratio.measured = static_cast<double>(good_ratio);
    ratio.threshold = 18.0;
    ratio.pass = good_ratio >= 18;
    ratio.detail = "trials (of 20) with ratio <= 0.75";
    return {rel, ratio};
}

std::vector<CheckResult> check_pgd(std::uint64_t seed) {
    Rng rng(seed);
    double worst_gap = 0.0;
    bool inside = true;
    for (int trial = 0; trial < 20; ++trial) {
        NetInstance inst = random_instance(rng, {3, 5, 2}, 1e-3);
        const auto [u, cache] = forward(inst.net, inst.x);
        const Vec h = ce_logit_grad(u, inst.label);
        const Matrix jac = assemble_jacobian(inst.net, cache);
        const double eps = rng.uniform(0.1, 1.0);

        std::vector<Vec> trace;
        const Vec delta = lpg_pgd(inst.net, {&cache}, {h}, eps, 0.0, 3, Direction::positive,
                                  &trace);
        for (const Vec& d : trace) {
            if (norm(d) > eps + 1e-12) inside = false;
        }
        const double pgd_obj = perturbed_objective({jac}, {h}, delta);
        const GridOracleResult grid = pgd_grid_oracle(jac, h, eps, 201, Direction::positive);
        worst_gap = std::max(worst_gap, (grid.best_objective - pgd_obj) / grid.best_objective);
    }
    CheckResult feas;
    feas.name = "PGD iterates stay inside the eps ball";
    feas.measured = inside ? 1.0 : 0.0;
    feas.threshold = 1.0;
    feas.pass = inside;
    feas.detail = "all iterates of all trials";
    CheckResult gap;
    gap.name = "PGD (T=3) objective vs 201x201 grid optimum";
    gap.measured = worst_gap;
    gap.threshold = 0.05;
    gap.pass = worst_gap <= gap.threshold;
    gap.detail = "max relative shortfall over 20 C=2 instances";
    return {feas, gap};
}

std::vector<CheckResult> check_sam(std::uint64_t seed) {
    Rng rng(seed);
    double lo = 1e9, hi = 0.0;
    bool restored = true;
    int done = 0;
    while (done < 10) {
        // small batch, all samples kink-free at every evaluation point
        NetInstance inst = random_instance(rng, {3, 6, 3}, 0.25);
        Matrix features(4, 3);
        std::vector<int> labels(4);
        std::vector<std::size_t> batch{0, 1, 2, 3};
        bool ok = true;
        for (std::size_t i = 0; i < 4; ++i) {
            NetInstance s = random_instance(rng, {3, 6, 3}, 0.25);
            for (std::size_t k = 0; k < 3; ++k) features(i, k) = s.x[k];
            labels[i] = s.label;
        }
        // verify the ReLU pattern is unchanged at the displaced points
        const Vec saved = inst.net.flat_params();
        const Vec g0 = [&] {
            Vec g(inst.net.param_count(), 0.0);
            for (std::size_t i = 0; i < 4; ++i) {
                Vec x{features(i, 0), features(i, 1), features(i, 2)};
                auto [u, cache] = forward(inst.net, x);
                axpy(1.0, backward_from_logit_grad(inst.net, cache, ce_logit_grad(u, labels[i])), g);
            }
            for (double& v : g) v /= 4.0;
            return g;
        }();
        if (norm(g0) == 0.0) continue;
        const Vec g_hat = scaled(g0, 1.0 / norm(g0));
        for (const double t : {1e-2, -1e-2, 5e-3, 1e-5, -1e-5}) {
            Vec moved = saved;
            axpy(t, g_hat, moved);
            inst.net.set_flat_params(moved);
            for (std::size_t i = 0; i < 4 && ok; ++i) {
                Vec x{features(i, 0), features(i, 1), features(i, 2)};
                inst.net.set_flat_params(saved);
                const auto base_pattern = relu_pattern(inst.net, x);
                inst.net.set_flat_params(moved);
                if (relu_pattern(inst.net, x) != base_pattern) ok = false;
            }
            inst.net.set_flat_params(saved);
            if (!ok) break;
        }
        if (!ok) continue;

        const auto rows = sam_taylor_check(inst.net, features, labels, batch, {1e-2, 5e-3});
        if (inst.net.flat_params() != saved) restored = false;
        for (const auto& row : rows) {
            lo = std::min(lo, row.ratio);
            hi = std::max(hi, row.ratio);
        }
        ++done;
    }
    CheckResult band;
    band.name = "SAM Taylor remainder ratio error(rho)/error(rho/2)";
    band.measured = lo;
    band.threshold = 2.5;
    band.pass = lo >= 2.5 && hi <= 6.0;
    band.detail = "range [" + fmt_double(lo) + ", " + fmt_double(hi) + "], required [2.5, 6]";
    CheckResult restore;
    restore.name = "SAM restores parameters bit-exactly";
    restore.measured = restored ? 1.0 : 0.0;
    restore.threshold = 1.0;
    restore.pass = restored;
    restore.detail = "flat parameter vectors compared";
    return {band, restore};
}

int run_check(const std::string& suite, const std::string& out_dir, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::vector<CheckResult>>> all;
    if (suite == "all" || suite == "grads") all.emplace_back("grads", check_grads(seed));
    if (suite == "all" || suite == "duality") all.emplace_back("duality", check_duality(seed));
    if (suite == "all" || suite == "pgd") all.emplace_back("pgd", check_pgd(seed));
    if (suite == "all" || suite == "sam") all.emplace_back("sam", check_sam(seed));
    if (all.empty()) throw ConfigError("check: unknown suite '" + suite + "'");

    fs::create_directories(out_dir);
    bool all_pass = true;
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& [name, results] : all) {
        nlohmann::json suite_json;
        suite_json["suite"] = name;
        suite_json["checks"] = nlohmann::json::array();
        bool suite_pass = true;
        for (const CheckResult& r : results) {
            std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << name << ": " << r.name
                      << " (measured " << fmt_double(r.measured) << ", threshold "
                      << fmt_double(r.threshold) << "; " << r.detail << ")\n";
            suite_pass = suite_pass && r.pass;
            suite_json["checks"].push_back({{"name", r.name},
                                            {"pass", r.pass},
                                            {"measured", r.measured},
                                            {"threshold", r.threshold},
                                            {"detail", r.detail}});
        }
        suite_json["pass"] = suite_pass;
        all_pass = all_pass && suite_pass;
        summary.push_back(suite_json);
        std::ofstream out(fs::path(out_dir) / ("check_" + name + ".json"));
        out << suite_json.dump(2) << '\n';
    }
    std::ofstream out(fs::path(out_dir) / "check_summary.json");
    out << summary.dump(2) << '\n';
    std::cout << (all_pass ? "all checks passed\n" : "CHECK FAILURES\n");
    return all_pass ? kExitOk : kExitCheckFailed;
}

// ------------------------------------------------------------------ report

struct RunRow {
    std::string method = "?";
    std::string dataset = "?";
    std::size_t n = 0;
    std::size_t classes = 0;
    double acc_overall = 0.0;
    double acc_balanced = 0.0;
    std::optional<double> acc_head;
    std::optional<double> acc_tail;
    std::optional<double> acc_noisy;
    double eps_bar = 0.0;
};

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 0) return 0.0;
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<double> median_opt(const std::vector<std::optional<double>>& values) {
    std::vector<double> present;
    for (const auto& v : values) {
        if (v) present.push_back(*v);
    }
    if (present.empty()) return std::nullopt;
    return median_of(std::move(present));
}

RunRow summarize_run(const fs::path& metrics_path) {
    RunRow row;
    std::size_t num_classes = 0;
    const auto metrics = load_metrics_csv(metrics_path, num_classes);
    if (metrics.empty()) throw ParseError("report: no rows in " + metrics_path.string());
    const MetricsRecord& last = metrics.back();
    row.classes = num_classes;
    row.acc_overall = last.acc_overall;
    row.eps_bar = last.eps_bar;

    std::vector<double> present;
    for (const auto& v : last.acc_class) {
        if (v) present.push_back(*v);
    }
    row.acc_balanced = present.empty()
                           ? last.acc_overall
                           : std::accumulate(present.begin(), present.end(), 0.0) /
                                 static_cast<double>(present.size());

    const fs::path manifest_path = metrics_path.parent_path() / "manifest.json";
    if (fs::exists(manifest_path)) {
        const RunManifest manifest = load_manifest(manifest_path);
        const auto method_it = manifest.config.find("train.method");
        if (method_it != manifest.config.end()) row.method = method_it->second;
        const auto data_it = manifest.config.find("data.path");
        if (data_it != manifest.config.end()) row.dataset = data_it->second;
        const auto n_it = manifest.extra.find("train_size");
        if (n_it != manifest.extra.end()) row.n = static_cast<std::size_t>(parse_int(n_it->second));

        const auto counts_it = manifest.extra.find("class_counts");
        if (counts_it != manifest.extra.end() && !counts_it->second.empty()) {
            std::vector<std::size_t> counts;
            std::stringstream ss(counts_it->second);
            std::string part;
            while (std::getline(ss, part, ',')) {
                counts.push_back(static_cast<std::size_t>(parse_int(part)));
            }
            if (counts.size() == num_classes) {
                // head/tail by the frequency split at the median class count
                const double tau = median_count(counts);
                std::vector<double> head, tail;
                for (std::size_t c = 0; c < num_classes; ++c) {
                    if (!last.acc_class[c]) continue;
                    if (static_cast<double>(counts[c]) < tau) {
                        tail.push_back(*last.acc_class[c]);
                    } else {
                        head.push_back(*last.acc_class[c]);
                    }
                }
                if (!head.empty()) {
                    row.acc_head = std::accumulate(head.begin(), head.end(), 0.0) /
                                   static_cast<double>(head.size());
                }
                if (!tail.empty()) {
                    row.acc_tail = std::accumulate(tail.begin(), tail.end(), 0.0) /
                                   static_cast<double>(tail.size());
                }
            }
        }
        const auto noisy_it = manifest.extra.find("noisy_classes");
        if (noisy_it != manifest.extra.end() && !noisy_it->second.empty()) {
            std::vector<double> noisy;
            for (const int c : parse_class_list(noisy_it->second)) {
                if (static_cast<std::size_t>(c) < num_classes && last.acc_class[c]) {
                    noisy.push_back(*last.acc_class[c]);
                }
            }
            if (!noisy.empty()) {
                row.acc_noisy = std::accumulate(noisy.begin(), noisy.end(), 0.0) /
                                static_cast<double>(noisy.size());
            }
        }
    }
    return row;
}

std::string opt_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : "-"; }

// compact numbers for the text table; the CSV keeps exact values
std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string opt_fmt4(const std::optional<double>& v) { return v ? fmt4(*v) : "-"; }

int run_report(const std::vector<std::string>& metrics_files, const std::string& out_prefix) {
    if (metrics_files.empty()) throw ConfigError("report: need at least one metrics file");
    std::vector<RunRow> rows;
    for (const std::string& file : metrics_files) rows.push_back(summarize_run(file));

    // group rows by method, preserving first-seen order
    std::vector<std::string> methods;
    for (const RunRow& row : rows) {
        if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
            methods.push_back(row.method);
        }
    }

    struct GroupRow {
        std::string method;
        std::size_t runs = 0;
        std::string dataset;
        std::size_t n = 0;
        std::size_t classes = 0;
        double acc_overall = 0.0;
        double acc_balanced = 0.0;
        std::optional<double> acc_head, acc_tail, acc_noisy;
        double eps_bar = 0.0;
        std::optional<double> delta_overall, delta_balanced;
    };
    std::vector<GroupRow> groups;
    for (const std::string& method : methods) {
        GroupRow g;
        g.method = method;
        std::vector<double> overall, balanced, eps;
        std::vector<std::optional<double>> head, tail, noisy;
        for (const RunRow& row : rows) {
            if (row.method != method) continue;
            ++g.runs;
            g.dataset = row.dataset;
            g.n = row.n;
            g.classes = row.classes;
            overall.push_back(row.acc_overall);
            balanced.push_back(row.acc_balanced);
            eps.push_back(row.eps_bar);
            head.push_back(row.acc_head);
            tail.push_back(row.acc_tail);
            noisy.push_back(row.acc_noisy);
        }
        g.acc_overall = median_of(overall);
        g.acc_balanced = median_of(balanced);
        g.eps_bar = median_of(eps);
        g.acc_head = median_opt(head);
        g.acc_tail = median_opt(tail);
        g.acc_noisy = median_opt(noisy);
        groups.push_back(g);
    }
    const auto baseline = std::find_if(groups.begin(), groups.end(),
                                       [](const GroupRow& g) { return g.method == "none"; });
    if (baseline != groups.end()) {
        for (GroupRow& g : groups) {
            g.delta_overall = g.acc_overall - baseline->acc_overall;
            g.delta_balanced = g.acc_balanced - baseline->acc_balanced;
        }
    }

    const std::vector<std::string> header = {"method",   "runs",     "dataset",   "N",
                                             "C",        "acc",      "acc_bal",   "acc_head",
                                             "acc_tail", "acc_noisy", "eps_bar",  "d_acc",
                                             "d_acc_bal"};
    std::vector<std::vector<std::string>> cells;       // exact, for the CSV
    std::vector<std::vector<std::string>> text_cells;  // compact, for the table
    for (const GroupRow& g : groups) {
        cells.push_back({g.method, std::to_string(g.runs), g.dataset, std::to_string(g.n),
                         std::to_string(g.classes), fmt_double(g.acc_overall),
                         fmt_double(g.acc_balanced), opt_cell(g.acc_head), opt_cell(g.acc_tail),
                         opt_cell(g.acc_noisy), fmt_double(g.eps_bar), opt_cell(g.delta_overall),
                         opt_cell(g.delta_balanced)});
        text_cells.push_back({g.method, std::to_string(g.runs), g.dataset, std::to_string(g.n),
                              std::to_string(g.classes), fmt4(g.acc_overall),
                              fmt4(g.acc_balanced), opt_fmt4(g.acc_head), opt_fmt4(g.acc_tail),
                              opt_fmt4(g.acc_noisy), fmt4(g.eps_bar), opt_fmt4(g.delta_overall),
                              opt_fmt4(g.delta_balanced)});
    }

    std::vector<std::size_t> widths(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) widths[i] = header[i].size();
    for (const auto& row : text_cells) {
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    std::ostringstream table;
    auto emit_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            table << row[i] << std::string(widths[i] - row[i].size() + 2, ' ');
        }
        table << '\n';
    };
    emit_row(header);
    for (const auto& row : text_cells) emit_row(row);
    std::cout << table.str();

    if (!out_prefix.empty()) {
        std::ofstream txt(out_prefix + ".txt", std::ios::binary);
        txt << table.str();
        std::ofstream csv(out_prefix + ".csv", std::ios::binary);
        for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
        csv << '\n';
        for (const auto& row : cells) {
            for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
            csv << '\n';
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient perturbation lab"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    std::string gen_from_manifest;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--scenario", gen_args.scenario, "balanced | longtail | noisy");
    gen->add_option("--classes", gen_args.classes, "number of classes");
    gen->add_option("--dim", gen_args.dim, "feature dimension");
    gen->add_option("--n-per-class", gen_args.n_per_class, "samples per class before shaping");
    gen->add_option("--separation", gen_args.separation, "distance between closest class means");
    gen->add_option("--ratio", gen_args.ratio, "imbalance ratio for longtail");
    gen->add_option("--rate", gen_args.rate, "label noise rate for noisy");
    gen->add_option("--noisy-classes", gen_args.noisy_classes,
                    "comma list of classes to inject noise into (default all)");
    gen->add_option("--seed", gen_args.seed, "seed");
    gen->add_option("--out", gen_args.out, "output dataset path");
    gen->add_option("--from-manifest", gen_from_manifest, "re-run from a gen-data manifest");

    std::string train_config_path;
    std::string train_from_manifest;
    auto* train_cmd = app.add_subcommand("train", "run a training experiment");
    train_cmd->add_option("--config", train_config_path, "key = value config file");
    train_cmd->add_option("--from-manifest", train_from_manifest, "re-run from a train manifest");

    std::string check_suite = "all";
    std::string check_out = ".";
    std::uint64_t check_seed = 7777;
    auto* check_cmd = app.add_subcommand("check", "run the numerical verification suite");
    check_cmd->add_option("suite", check_suite, "all | grads | duality | pgd | sam");
    check_cmd->add_option("--out-dir", check_out, "directory for JSON reports");
    check_cmd->add_option("--seed", check_seed, "seed for the random instances");

    std::vector<std::string> report_files;
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "compare finished runs");
    report_cmd->add_option("metrics", report_files, "metrics.csv files")->required();
    report_cmd->add_option("--out", report_out, "output prefix for .txt/.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) {
            if (!gen_from_manifest.empty()) {
                const RunManifest manifest = load_manifest(gen_from_manifest);
                if (manifest.command != "gen-data") {
                    throw ConfigError("gen-data: manifest is for command " + manifest.command);
                }
                return run_gen_data(gen_args_from_config(manifest.config));
            }
            return run_gen_data(gen_args);
        }
        if (train_cmd->parsed()) {
            if (!train_from_manifest.empty()) {
                const RunManifest manifest = load_manifest(train_from_manifest);
                if (manifest.command != "train") {
                    throw ConfigError("train: manifest is for command " + manifest.command);
                }
                return run_train(parse_train_spec(KeyValues::from_map(manifest.config)));
            }
            if (train_config_path.empty()) {
                throw ConfigError("train: --config or --from-manifest is required");
            }
            return run_train(parse_train_spec(KeyValues::parse_file(train_config_path)));
        }
        if (check_cmd->parsed()) return run_check(check_suite, check_out, check_seed);
        if (report_cmd->parsed()) return run_report(report_files, report_out);
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
