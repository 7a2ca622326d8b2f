#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpo/core_model.hpp"
#include "tpo/policy.hpp"

namespace tpo {

enum class Optimizer { PlainSGD, AdamLike };
enum class LrSchedule { Constant, CosineWarmup };

struct TrainConfig {
    double beta = 0.3;          // KL-divergence weight
    double alpha = 0.5;         // SFT anchor weight
    double learning_rate = 1.0;
    std::uint32_t batch_size = 64;
    std::uint32_t epochs = 1;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::PlainSGD;
    LrSchedule schedule = LrSchedule::Constant;
    double warmup_ratio = 0.1;  // used by CosineWarmup
    std::uint32_t num_buckets = kDefaultBuckets;

    void validate() const;
};

struct BatchMetrics {
    double mean_loss = 0.0;
    double mean_dpo_loss = 0.0;
    double mean_sft_loss = 0.0;
    double preference_accuracy = 0.0;  // ties count 0.5
    double mean_margin = 0.0;          // mean of beta * z
    double mean_abs_logratio_to_ref = 0.0;
    std::uint64_t count = 0;
};

// One tokenized preference pair. Both responses share the conditioning
// context built from (video_id, anchor indices, query tokens).
struct TrainExample {
    ConditioningContext ctx;
    std::vector<std::uint32_t> preferred;
    std::vector<std::uint32_t> dispreferred;
};

ConditioningContext context_for(const PreferenceRecord& record, const Vocabulary& vocab);
TrainExample tokenize_example(const PreferenceRecord& record, const Vocabulary& vocab);

// -ln sigma(beta * z), z = [logpi(r+) - logref(r+)] - [logpi(r-) - logref(r-)].
double dpo_loss(const PolicyParameters& policy, const ReferenceParameters& reference,
                ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                std::span<const std::uint32_t> r_minus, double beta);

// -logpi(r+ | ctx)
double sft_loss(const PolicyParameters& policy, ConditioningContext ctx,
                std::span<const std::uint32_t> r_plus);

// dpo + alpha * sft; alpha = 0 reduces exactly to dpo_loss.
double combined_loss(const PolicyParameters& policy, const ReferenceParameters& reference,
                     ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                     std::span<const std::uint32_t> r_minus, double beta, double alpha);

// -beta * sigma(-beta z) * [grad logpi(r+) - grad logpi(r-)] - alpha * grad logpi(r+).
// The reference enters only through the scalar sigma(-beta z).
SparseGrad grad_combined(const PolicyParameters& policy, const ReferenceParameters& reference,
                         ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                         std::span<const std::uint32_t> r_minus, double beta, double alpha);

struct BatchLogEntry {
    std::uint32_t epoch = 0;
    std::uint64_t step = 0;  // global batch index
    double learning_rate = 0.0;
    BatchMetrics metrics;
};

struct TrainResult {
    PolicyParameters params;
    ReferenceParameters reference;
    std::vector<BatchLogEntry> batch_log;
    std::vector<BatchMetrics> epoch_metrics;
    BatchMetrics final_eval;  // evaluation over the full dataset, post-training
};

// Reference snapshot taken once before step 0; minibatches follow a
// seed-determined shuffle per epoch (stream "shuffle/<epoch>"); losses and
// gradients accumulate in record order; updates apply in ascending feature
// order. Fully deterministic given the seed. Throws NumericError (with the
// batch id) on a non-finite loss.
TrainResult train(const std::vector<PreferenceRecord>& dataset, const TrainConfig& cfg);
TrainResult train_examples(const std::vector<TrainExample>& examples, Vocabulary vocab,
                           const TrainConfig& cfg);

// No updates; preference_accuracy is the fraction of examples with
// logpi(r+) > logpi(r-), ties credited 0.5.
BatchMetrics evaluate_preference(const PolicyParameters& policy,
                                 const ReferenceParameters& reference,
                                 std::span<const TrainExample> examples, double beta,
                                 double alpha);

void write_metrics_jsonl(const std::string& path, const TrainResult& result);
std::string summary_json(const TrainResult& result);

}  // namespace tpo
