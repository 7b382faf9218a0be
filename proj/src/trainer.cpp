#include "gplab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "gplab/core_math.hpp"
#include "gplab/errors.hpp"
#include "gplab/format.hpp"

namespace gplab {

namespace {
constexpr double kNormFloor = 1e-12;

struct MethodValidator {
    void operator()(const NoPerturb&) const {}
    void operator()(const Clip& m) const {
        if (m.tau <= 0.0) throw ConfigError("clip: tau must be positive");
    }
    void operator()(const Noise& m) const {
        if (m.sigma < 0.0) throw ConfigError("noise: sigma must be nonnegative");
    }
    void operator()(const Sam& m) const {
        if (m.rho <= 0.0) throw ConfigError("sam: rho must be positive");
    }
    void operator()(const LpgClosedForm&) const {}
    void operator()(const LpgPgd& m) const {
        if (m.steps < 1) throw ConfigError("lpg_pgd: steps must be >= 1");
    }
};
}  // namespace

void validate_config(const TrainConfig& config) {
    if (config.lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (config.momentum < 0.0 || config.momentum >= 1.0) {
        throw ConfigError("train: momentum must be in [0, 1)");
    }
    if (config.weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
    if (config.epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (config.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (config.eval_every == 0) throw ConfigError("train: eval_every must be >= 1");
    for (std::size_t i = 0; i < config.lr_schedule.size(); ++i) {
        if (config.lr_schedule[i].multiplier <= 0.0) {
            throw ConfigError("train: lr multiplier must be positive");
        }
        if (i > 0 && config.lr_schedule[i].epoch <= config.lr_schedule[i - 1].epoch) {
            throw ConfigError("train: lr schedule epochs must be strictly increasing");
        }
    }
    if (config.plan.eps < 0.0 || config.plan.delta_eps < 0.0) {
        throw ConfigError("plan: eps and delta_eps must be nonnegative");
    }
    if (config.plan.tau >= 0.0 && config.plan.tau > 1.0) {
        throw ConfigError("plan: tau must be in [0, 1] (or auto)");
    }
    if (config.plan.ema_beta < 0.0 || config.plan.ema_beta >= 1.0) {
        throw ConfigError("plan: ema_beta must be in [0, 1)");
    }
    std::visit(MethodValidator{}, config.method);
}

int predict(const Vec& logits) {
    int best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j) {
        if (logits[j] > logits[best]) best = static_cast<int>(j);
    }
    return best;
}

EvalResult evaluate(const Mlp& net, const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    EvalResult res;
    const std::vector<std::size_t> counts = ds.class_counts();
    std::vector<std::size_t> correct(ds.num_classes, 0);
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vec u = forward_logits(net, ds.sample(i));
        if (predict(u) == ds.labels[i]) {
            ++correct[static_cast<std::size_t>(ds.labels[i])];
            ++total_correct;
        }
    }
    res.overall = static_cast<double>(total_correct) / static_cast<double>(ds.size());
    res.per_class.resize(ds.num_classes);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        if (counts[c] == 0) continue;
        res.per_class[c] = static_cast<double>(correct[c]) / static_cast<double>(counts[c]);
    }
    return res;
}

std::vector<std::optional<double>> relative_grad_variation(Mlp& net, const Dataset& ds,
                                                           const PerturbationPlan& plan,
                                                           const PerturbMethod& method,
                                                           Rng& diag_rng) {
    const std::size_t num_classes = ds.num_classes;
    const std::vector<std::size_t> counts = ds.class_counts();
    std::vector<std::optional<double>> rgv(num_classes);

    if (std::holds_alternative<NoPerturb>(method)) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (counts[c] > 0) rgv[c] = 0.0;
        }
        return rgv;
    }

    const std::size_t n_params = net.param_count();
    std::vector<Vec> unpert_sum(num_classes, Vec(n_params, 0.0));
    std::vector<ForwardCache> caches(ds.size());
    std::vector<Vec> logit_grads(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto [u, cache] = forward(net, ds.sample(i));
        caches[i] = std::move(cache);
        logit_grads[i] = ce_logit_grad(u, ds.labels[i]);
        axpy(1.0, backward_from_logit_grad(net, caches[i], logit_grads[i]),
             unpert_sum[static_cast<std::size_t>(ds.labels[i])]);
    }

    std::vector<Vec> pert_mean(num_classes);
    auto class_unpert_mean = [&](std::size_t c) {
        return scaled(unpert_sum[c], 1.0 / static_cast<double>(counts[c]));
    };

    if (std::holds_alternative<LpgClosedForm>(method) || std::holds_alternative<LpgPgd>(method)) {
        if (plan.num_classes() != num_classes) {
            throw ConfigError("relative_grad_variation: plan does not cover the class universe");
        }
        std::vector<Vec> pert_sum(num_classes, Vec(n_params, 0.0));
        if (std::holds_alternative<LpgClosedForm>(method)) {
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const auto c = static_cast<std::size_t>(ds.labels[i]);
                const Direction dir = plan.positive[c] ? Direction::positive : Direction::negative;
                const Vec seed = lpg_closed_form(logit_grads[i], plan.eps_c[c], dir);
                axpy(1.0, backward_from_logit_grad(net, caches[i], seed), pert_sum[c]);
            }
        } else {
            const auto& pgd = std::get<LpgPgd>(method);
            for (std::size_t c = 0; c < num_classes; ++c) {
                if (counts[c] == 0) continue;
                std::vector<const ForwardCache*> class_caches;
                std::vector<Vec> class_grads;
                std::vector<std::size_t> rows;
                for (std::size_t i = 0; i < ds.size(); ++i) {
                    if (static_cast<std::size_t>(ds.labels[i]) != c) continue;
                    class_caches.push_back(&caches[i]);
                    class_grads.push_back(logit_grads[i]);
                    rows.push_back(i);
                }
                Vec delta(net.output_dim(), 0.0);
                if (plan.eps_c[c] > 0.0) {
                    const Direction dir =
                        plan.positive[c] ? Direction::positive : Direction::negative;
                    delta = lpg_pgd(net, class_caches, class_grads, plan.eps_c[c], pgd.kappa,
                                    pgd.steps, dir);
                }
                for (const std::size_t i : rows) {
                    axpy(1.0, backward_from_logit_grad(net, caches[i], add(logit_grads[i], delta)),
                         pert_sum[c]);
                }
            }
        }
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (counts[c] > 0) {
                pert_mean[c] = scaled(pert_sum[c], 1.0 / static_cast<double>(counts[c]));
            }
        }
    } else if (const auto* clip = std::get_if<Clip>(&method)) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (counts[c] > 0) pert_mean[c] = clip_grad(class_unpert_mean(c), clip->tau);
        }
    } else if (const auto* noise = std::get_if<Noise>(&method)) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (counts[c] > 0) pert_mean[c] = noise_grad(class_unpert_mean(c), noise->sigma, diag_rng);
        }
    } else if (const auto* sam = std::get_if<Sam>(&method)) {
        Vec g_full(n_params, 0.0);
        for (std::size_t c = 0; c < num_classes; ++c) axpy(1.0, unpert_sum[c], g_full);
        for (double& x : g_full) x /= static_cast<double>(ds.size());
        const double gn = norm(g_full);
        if (gn > 0.0) {
            const Vec saved = net.flat_params();
            Vec moved = saved;
            axpy(sam->rho / gn, g_full, moved);
            net.set_flat_params(moved);
            std::vector<Vec> pert_sum(num_classes, Vec(n_params, 0.0));
            for (std::size_t i = 0; i < ds.size(); ++i) {
                auto [u, cache] = forward(net, ds.sample(i));
                const Vec h = ce_logit_grad(u, ds.labels[i]);
                axpy(1.0, backward_from_logit_grad(net, cache, h),
                     pert_sum[static_cast<std::size_t>(ds.labels[i])]);
            }
            net.set_flat_params(saved);
            for (std::size_t c = 0; c < num_classes; ++c) {
                if (counts[c] > 0) {
                    pert_mean[c] = scaled(pert_sum[c], 1.0 / static_cast<double>(counts[c]));
                }
            }
        } else {
            for (std::size_t c = 0; c < num_classes; ++c) {
                if (counts[c] > 0) pert_mean[c] = class_unpert_mean(c);
            }
        }
    }

    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) continue;
        const Vec base = class_unpert_mean(c);
        const double base_norm = norm(base);
        if (base_norm <= kNormFloor) continue;
        rgv[c] = norm(sub(pert_mean[c], base)) / base_norm;
    }
    return rgv;
}

TrainResult train(const TrainConfig& config, const Dataset& train_ds, const Dataset& test_ds,
                  const BatchObserver& observer) {
    validate_config(config);
    if (train_ds.size() == 0) throw ConfigError("train: empty training dataset");
    if (test_ds.size() == 0) throw ConfigError("train: empty test dataset");
    if (train_ds.num_classes != test_ds.num_classes) {
        throw ConfigError("train: train/test class count mismatch");
    }
    if (train_ds.dim() != test_ds.dim()) throw ConfigError("train: train/test dim mismatch");

    const std::size_t num_classes = train_ds.num_classes;
    std::vector<std::size_t> dims;
    dims.push_back(train_ds.dim());
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(num_classes);

    Rng root(config.seed);
    Rng init_rng = root.substream("init");
    Rng shuffle_rng = root.substream("shuffle");
    Rng noise_rng = root.substream("noise");
    Rng diag_rng = root.substream("diag");

    TrainResult result;
    result.net = init_mlp(dims, init_rng);
    result.stats = make_class_stats(train_ds.class_counts());
    Momentum momentum_state(result.net.param_count());

    const bool logit_space = std::holds_alternative<NoPerturb>(config.method) ||
                             std::holds_alternative<LpgClosedForm>(config.method) ||
                             std::holds_alternative<LpgPgd>(config.method);

    double lr = config.lr;
    std::vector<std::size_t> order(train_ds.size());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const LrStep& step : config.lr_schedule) {
            if (step.epoch == epoch) lr *= step.multiplier;
        }

        PlanSnapshot snapshot;
        snapshot.epoch = epoch;
        snapshot.plan = build_plan(result.stats, config.plan);
        snapshot.counts = result.stats.counts;
        snapshot.eps_bar = mean_epsilon(snapshot.plan.eps_c, snapshot.counts);

        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        for (std::size_t start = 0, batch_no = 0; start < order.size();
             start += config.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);

            std::vector<ForwardCache> caches(batch.size());
            std::vector<Vec> logit_grads(batch.size());
            std::vector<int> batch_labels(batch.size());
            std::vector<int> batch_preds(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                auto [u, cache] = forward(result.net, train_ds.sample(batch[i]));
                const int y = train_ds.labels[batch[i]];
                if (!all_finite(u)) {
                    throw NumericError("train: non-finite logits at epoch " +
                                       std::to_string(epoch) + " batch " +
                                       std::to_string(batch_no));
                }
                const double loss = cross_entropy_loss(u, y);
                if (!std::isfinite(loss)) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                       " batch " + std::to_string(batch_no));
                }
                loss_sum += loss;
                caches[i] = std::move(cache);
                logit_grads[i] = ce_logit_grad(u, y);
                batch_labels[i] = y;
                batch_preds[i] = predict(u);
            }

            const BatchContext ctx{result.net, train_ds.features, train_ds.labels, batch,
                                   caches,     logit_grads,       &snapshot.plan, &noise_rng};
            const PerturbOutcome outcome = apply_method(config.method, ctx);
            const Vec grad = outcome.param_space
                                 ? outcome.batch_grad
                                 : batch_mean_grad(result.net, caches, outcome.seeds);

            if (observer && logit_space) {
                BatchDiag diag;
                diag.epoch = epoch;
                diag.batch = batch_no;
                for (std::size_t c = 0; c < num_classes; ++c) {
                    Vec base(result.net.param_count(), 0.0);
                    Vec pert(result.net.param_count(), 0.0);
                    std::size_t n_c = 0;
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        if (static_cast<std::size_t>(batch_labels[i]) != c) continue;
                        axpy(1.0, backward_from_logit_grad(result.net, caches[i], logit_grads[i]),
                             base);
                        axpy(1.0, backward_from_logit_grad(result.net, caches[i], outcome.seeds[i]),
                             pert);
                        ++n_c;
                    }
                    if (n_c == 0) continue;
                    diag.classes.push_back(static_cast<int>(c));
                    diag.unperturbed_norm.push_back(norm(base) / static_cast<double>(n_c));
                    diag.perturbed_norm.push_back(norm(pert) / static_cast<double>(n_c));
                    diag.positive.push_back(snapshot.plan.positive[c]);
                }
                observer(diag);
            }

            sgd_step(result.net, grad, momentum_state, lr, config.momentum, config.weight_decay);
            update_class_stats(result.stats, batch_preds, batch_labels, logit_grads,
                               config.plan.ema_beta);
        }
        const auto t1 = std::chrono::steady_clock::now();

        const bool eval_point =
            ((epoch + 1) % config.eval_every == 0) || (epoch + 1 == config.epochs);
        if (eval_point) {
            MetricsRecord rec;
            rec.epoch = epoch;
            rec.train_loss = loss_sum / static_cast<double>(train_ds.size());
            const EvalResult ev = evaluate(result.net, test_ds);
            rec.acc_overall = ev.overall;
            rec.acc_class = ev.per_class;
            if (config.record_rgv) {
                rec.rgv_class = relative_grad_variation(result.net, train_ds, snapshot.plan,
                                                        config.method, diag_rng);
            } else {
                rec.rgv_class.assign(num_classes, std::nullopt);
            }
            rec.eps_bar = snapshot.eps_bar;
            rec.wall_ms =
                config.wall_clock
                    ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                    : 0.0;
            result.metrics.push_back(std::move(rec));
        }
        result.plans.push_back(std::move(snapshot));
    }
    return result;
}

namespace {
std::string opt_to_field(const std::optional<double>& v) {
    return v ? fmt_double(*v) : "nan";
}
}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& metrics, std::size_t num_classes,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("metrics: cannot open " + path.string() + " for writing");
    out << "epoch,train_loss,acc_overall";
    for (std::size_t c = 0; c < num_classes; ++c) out << ",acc_class_" << c;
    for (std::size_t c = 0; c < num_classes; ++c) out << ",rgv_class_" << c;
    out << ",eps_bar,wall_ms\n";
    for (const MetricsRecord& rec : metrics) {
        out << rec.epoch << ',' << fmt_double(rec.train_loss) << ',' << fmt_double(rec.acc_overall);
        for (std::size_t c = 0; c < num_classes; ++c) {
            out << ',' << (c < rec.acc_class.size() ? opt_to_field(rec.acc_class[c]) : "nan");
        }
        for (std::size_t c = 0; c < num_classes; ++c) {
            out << ',' << (c < rec.rgv_class.size() ? opt_to_field(rec.rgv_class[c]) : "nan");
        }
        out << ',' << fmt_double(rec.eps_bar) << ',' << fmt_double(rec.wall_ms) << '\n';
    }
    if (!out) throw ParseError("metrics: write failed for " + path.string());
}

std::vector<MetricsRecord> load_metrics_csv(const std::filesystem::path& path,
                                            std::size_t& num_classes_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("metrics: cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw ParseError("metrics " + path.string() + ": empty file");
    std::stringstream hs(header);
    std::vector<std::string> cols;
    for (std::string col; std::getline(hs, col, ',');) cols.push_back(col);
    std::size_t num_classes = 0;
    for (const std::string& col : cols) {
        if (col.rfind("acc_class_", 0) == 0) ++num_classes;
    }
    const std::size_t expected = 3 + 2 * num_classes + 2;
    if (cols.size() != expected || cols.front() != "epoch") {
        throw ParseError("metrics " + path.string() + ": unexpected header layout");
    }
    num_classes_out = num_classes;

    std::vector<MetricsRecord> out;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<std::string> fields;
        for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
        if (fields.size() != expected) {
            throw ParseError("metrics " + path.string() + ": line " + std::to_string(line_no) +
                             ": expected " + std::to_string(expected) + " fields");
        }
        try {
            MetricsRecord rec;
            rec.epoch = static_cast<std::size_t>(parse_int(fields[0]));
            rec.train_loss = parse_double(fields[1]);
            rec.acc_overall = parse_double(fields[2]);
            auto opt_field = [](const std::string& s) -> std::optional<double> {
                if (s == "nan") return std::nullopt;
                return parse_double(s);
            };
            for (std::size_t c = 0; c < num_classes; ++c) {
                rec.acc_class.push_back(opt_field(fields[3 + c]));
            }
            for (std::size_t c = 0; c < num_classes; ++c) {
                rec.rgv_class.push_back(opt_field(fields[3 + num_classes + c]));
            }
            rec.eps_bar = parse_double(fields[3 + 2 * num_classes]);
            rec.wall_ms = parse_double(fields[4 + 2 * num_classes]);
            out.push_back(std::move(rec));
        } catch (const std::invalid_argument& e) {
            throw ParseError("metrics " + path.string() + ": line " + std::to_string(line_no) +
                             ": " + e.what());
        }
    }
    return out;
}

void write_plan_jsonl(const std::vector<PlanSnapshot>& plans, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("plan: cannot open " + path.string() + " for writing");
    for (const PlanSnapshot& snap : plans) {
        nlohmann::json j;
        j["epoch"] = snap.epoch;
        j["mode"] = to_string(snap.plan.mode);
        j["tau"] = snap.plan.tau;
        j["eps"] = snap.plan.eps;
        j["delta_eps"] = snap.plan.delta_eps;
        std::vector<int> pos;
        for (std::size_t c = 0; c < snap.plan.positive.size(); ++c) {
            if (snap.plan.positive[c]) pos.push_back(static_cast<int>(c));
        }
        j["positive_classes"] = pos;
        j["eps_c"] = snap.plan.eps_c;
        j["sbar"] = snap.plan.sbar;
        j["counts"] = snap.counts;
        j["eps_bar"] = snap.eps_bar;
        out << j.dump() << '\n';
    }
    if (!out) throw ParseError("plan: write failed for " + path.string());
}

std::vector<PlanSnapshot> load_plan_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("plan: cannot open " + path.string());
    std::vector<PlanSnapshot> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            PlanSnapshot snap;
            snap.epoch = j.at("epoch").get<std::size_t>();
            snap.plan.mode = split_mode_from_string(j.at("mode").get<std::string>());
            snap.plan.tau = j.at("tau").get<double>();
            snap.plan.eps = j.at("eps").get<double>();
            snap.plan.delta_eps = j.at("delta_eps").get<double>();
            snap.plan.eps_c = j.at("eps_c").get<Vec>();
            snap.plan.sbar = j.at("sbar").get<Vec>();
            snap.counts = j.at("counts").get<std::vector<std::size_t>>();
            snap.eps_bar = j.at("eps_bar").get<double>();
            snap.plan.positive.assign(snap.plan.eps_c.size(), false);
            for (const auto& c : j.at("positive_classes")) {
                snap.plan.positive.at(c.get<std::size_t>()) = true;
            }
            out.push_back(std::move(snap));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("plan " + path.string() + ": line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return out;
}

}  // namespace gplab
