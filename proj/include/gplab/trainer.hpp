#pragma once

#include <functional>
#include <optional>

#include "gplab/dataset.hpp"
#include "gplab/mlp.hpp"
#include "gplab/perturb.hpp"
#include "gplab/schedule.hpp"

namespace gplab {

struct LrStep {
    std::size_t epoch;  // multiplier applied when entering this epoch
    double multiplier;
};

struct TrainConfig {
    std::vector<std::size_t> hidden = {64, 32};
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::vector<LrStep> lr_schedule = {{30, 0.1}, {45, 0.1}};
    std::uint64_t seed = 1;
    PerturbMethod method = NoPerturb{};
    PlanConfig plan;
    // Metrics are recorded after epochs where (epoch+1) % eval_every == 0,
    // and always after the final epoch.
    std::size_t eval_every = 1;
    // Wall time per epoch is written as 0 unless enabled: the metrics file
    // is byte-reproducible by default and real timing is opt-in.
    bool wall_clock = false;
    bool record_rgv = true;
};

struct MetricsRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double acc_overall = 0.0;
    std::vector<std::optional<double>> acc_class;  // absent when the class has no samples
    std::vector<std::optional<double>> rgv_class;  // absent when ||g_c|| <= 1e-12
    double eps_bar = 0.0;
    double wall_ms = 0.0;
};

struct PlanSnapshot {
    std::size_t epoch = 0;
    PerturbationPlan plan;
    std::vector<std::size_t> counts;  // training class counts, so eps_bar can
                                      // be recomputed from the snapshot alone
    double eps_bar = 0.0;
};

struct TrainResult {
    Mlp net;
    std::vector<MetricsRecord> metrics;
    std::vector<PlanSnapshot> plans;  // one per epoch
    ClassStats stats;                 // running stats at end of training
};

// Per-batch diagnostic handed to an optional observer (logit-space methods
// only): class-mean unperturbed and perturbed parameter-gradient norms for
// every class present in the batch.
struct BatchDiag {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    std::vector<int> classes;
    Vec unperturbed_norm;
    Vec perturbed_norm;
    std::vector<bool> positive;  // plan membership of each listed class
};

using BatchObserver = std::function<void(const BatchDiag&)>;

void validate_config(const TrainConfig& config);

// One full training run: per epoch, rebuild the perturbation plan from the
// running stats, then for each shuffled batch intercept the per-sample logit
// gradients, apply the configured perturbation and take one SGD step.
// Deterministic per seed. Throws NumericError if the loss becomes
// non-finite, ConfigError on inconsistent configuration.
TrainResult train(const TrainConfig& config, const Dataset& train_ds, const Dataset& test_ds,
                  const BatchObserver& observer = {});

struct EvalResult {
    double overall = 0.0;
    std::vector<std::optional<double>> per_class;
};

// Argmax-logit predictions; ties break toward the lowest class index.
EvalResult evaluate(const Mlp& net, const Dataset& ds);
int predict(const Vec& logits);

// Per-class relative gradient variation ||g~_c - g_c|| / ||g_c|| over a full
// pass of ds with frozen parameters. g_c is the class-mean unperturbed
// parameter gradient. g~_c is the class mean under the configured rule,
// applied at its natural granularity: per-sample seeds for the LPG rules,
// clip(g_c) per class for Clip, g_c plus a fresh draw for Noise, and for SAM
// the class mean recomputed at the ascent point of the full-pass gradient.
// NoPerturb returns exact zeros without a pass. Classes with
// ||g_c|| <= 1e-12 are reported absent.
std::vector<std::optional<double>> relative_grad_variation(Mlp& net, const Dataset& ds,
                                                           const PerturbationPlan& plan,
                                                           const PerturbMethod& method,
                                                           Rng& diag_rng);

// columns: epoch,train_loss,acc_overall,acc_class_0..C-1,rgv_class_0..C-1,eps_bar,wall_ms
void write_metrics_csv(const std::vector<MetricsRecord>& metrics, std::size_t num_classes,
                       const std::filesystem::path& path);
std::vector<MetricsRecord> load_metrics_csv(const std::filesystem::path& path,
                                            std::size_t& num_classes_out);

// One JSON object per epoch with the full plan snapshot.
void write_plan_jsonl(const std::vector<PlanSnapshot>& plans, const std::filesystem::path& path);
std::vector<PlanSnapshot> load_plan_jsonl(const std::filesystem::path& path);

}  // namespace gplab
