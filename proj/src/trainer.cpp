#include "tpo/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/prng.hpp"

namespace tpo {

namespace {

// numerically stable softplus: -ln sigma(x) = softplus(-x)
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double margin_z(const PolicyParameters& policy, const ReferenceParameters& reference,
                ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                std::span<const std::uint32_t> r_minus) {
    const double lp_plus = logprob_sequence(policy, ctx, r_plus);
    const double lp_minus = logprob_sequence(policy, ctx, r_minus);
    const double ref_plus = logprob_sequence(reference.get(), ctx, r_plus);
    const double ref_minus = logprob_sequence(reference.get(), ctx, r_minus);
    return (lp_plus - ref_plus) - (lp_minus - ref_minus);
}

}  // namespace

void TrainConfig::validate() const {
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
        throw ConfigError("warmup_ratio must be in [0, 1)");
    }
    if (num_buckets == 0) throw ConfigError("num_buckets must be positive");
}

ConditioningContext context_for(const PreferenceRecord& record, const Vocabulary& vocab) {
    const auto query_tokens = vocab.encode(record.query.text);
    return make_context(record.query.video_id, record.query.anchor.indices, query_tokens);
}

TrainExample tokenize_example(const PreferenceRecord& record, const Vocabulary& vocab) {
    TrainExample ex;
    ex.ctx = context_for(record, vocab);
    ex.preferred = vocab.encode(record.preferred);
    ex.dispreferred = vocab.encode(record.dispreferred);
    if (ex.preferred.empty() || ex.dispreferred.empty()) {
        throw VocabError("record " + record.record_id + " has an untokenizable response");
    }
    return ex;
}

double dpo_loss(const PolicyParameters& policy, const ReferenceParameters& reference,
                ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                std::span<const std::uint32_t> r_minus, double beta) {
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    return softplus(-beta * margin_z(policy, reference, ctx, r_plus, r_minus));
}

double sft_loss(const PolicyParameters& policy, ConditioningContext ctx,
                std::span<const std::uint32_t> r_plus) {
    return -logprob_sequence(policy, ctx, r_plus);
}

double combined_loss(const PolicyParameters& policy, const ReferenceParameters& reference,
                     ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                     std::span<const std::uint32_t> r_minus, double beta, double alpha) {
    const double dpo = dpo_loss(policy, reference, ctx, r_plus, r_minus, beta);
    if (alpha == 0.0) return dpo;
    return dpo + alpha * sft_loss(policy, ctx, r_plus);
}

SparseGrad grad_combined(const PolicyParameters& policy, const ReferenceParameters& reference,
                         ConditioningContext ctx, std::span<const std::uint32_t> r_plus,
                         std::span<const std::uint32_t> r_minus, double beta, double alpha) {
    const double z = margin_z(policy, reference, ctx, r_plus, r_minus);
    const double scale = -beta * sigmoid(-beta * z);

    const SparseGrad g_plus = grad_logprob(policy, ctx, r_plus);
    const SparseGrad g_minus = grad_logprob(policy, ctx, r_minus);

    SparseGrad out;
    out.vocab_size = policy.vocab_size();
    out.accumulate(scale, g_plus);
    out.accumulate(-scale, g_minus);
    if (alpha != 0.0) out.accumulate(-alpha, g_plus);
    return out;
}

BatchMetrics evaluate_preference(const PolicyParameters& policy,
                                 const ReferenceParameters& reference,
                                 std::span<const TrainExample> examples, double beta,
                                 double alpha) {
    BatchMetrics m;
    m.count = examples.size();
    if (examples.empty()) return m;
    for (const auto& ex : examples) {
        const double lp_plus = logprob_sequence(policy, ex.ctx, ex.preferred);
        const double lp_minus = logprob_sequence(policy, ex.ctx, ex.dispreferred);
        const double ref_plus = logprob_sequence(reference.get(), ex.ctx, ex.preferred);
        const double ref_minus = logprob_sequence(reference.get(), ex.ctx, ex.dispreferred);
        const double z = (lp_plus - ref_plus) - (lp_minus - ref_minus);
        const double dpo = softplus(-beta * z);
        const double sft = -lp_plus;
        m.mean_dpo_loss += dpo;
        m.mean_sft_loss += sft;
        m.mean_loss += dpo + alpha * sft;
        m.mean_margin += beta * z;
        m.mean_abs_logratio_to_ref += 0.5 * (std::abs(lp_plus - ref_plus) +
                                             std::abs(lp_minus - ref_minus));
        if (lp_plus > lp_minus) {
            m.preference_accuracy += 1.0;
        } else if (lp_plus == lp_minus) {
            m.preference_accuracy += 0.5;
        }
    }
    const double n = static_cast<double>(m.count);
    m.mean_loss /= n;
    m.mean_dpo_loss /= n;
    m.mean_sft_loss /= n;
    m.mean_margin /= n;
    m.mean_abs_logratio_to_ref /= n;
    m.preference_accuracy /= n;
    return m;
}

namespace {

double schedule_lr(const TrainConfig& cfg, std::uint64_t step, std::uint64_t total_steps) {
    if (cfg.schedule == LrSchedule::Constant) return cfg.learning_rate;
    const auto warmup = static_cast<std::uint64_t>(cfg.warmup_ratio *
                                                   static_cast<double>(total_steps));
    if (warmup > 0 && step < warmup) {
        return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const double span = static_cast<double>(std::max<std::uint64_t>(1, total_steps - warmup));
    const double progress = static_cast<double>(step - warmup) / span;
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

// Adam-style moments tracked lazily, only on columns a batch touched.
struct AdamState {
    std::map<std::uint64_t, std::vector<double>> m;
    std::map<std::uint64_t, std::vector<double>> v;
    std::uint64_t t = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;
};

void apply_update(PolicyParameters& params, const SparseGrad& grad, double lr,
                  Optimizer optimizer, AdamState& adam) {
    const std::uint32_t vsize = params.vocab_size();
    if (optimizer == Optimizer::PlainSGD) {
        // descent on the loss: grad here is d(loss)/dW
        for (const auto& [f, row] : grad.cols) {
            auto col = params.column(f);
            for (std::uint32_t v = 0; v < vsize; ++v) col[v] -= lr * row[v];
        }
        return;
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(adam.t));
    for (const auto& [f, row] : grad.cols) {
        auto& m = adam.m[f];
        auto& v = adam.v[f];
        if (m.empty()) m.assign(vsize, 0.0);
        if (v.empty()) v.assign(vsize, 0.0);
        auto col = params.column(f);
        for (std::uint32_t i = 0; i < vsize; ++i) {
            m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * row[i];
            v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * row[i] * row[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            col[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::eps);
        }
    }
}

}  // namespace

TrainResult train_examples(const std::vector<TrainExample>& examples, Vocabulary vocab,
                           const TrainConfig& cfg) {
    cfg.validate();
    if (examples.empty()) throw ConfigError("training dataset is empty");

    PolicyParameters params(std::move(vocab), cfg.num_buckets);
    ReferenceParameters reference{params};  // snapshot before step 0

    const std::uint64_t n = examples.size();
    const std::uint64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = batches_per_epoch * cfg.epochs;

    TrainResult result{std::move(params), std::move(reference), {}, {}, {}};
    AdamState adam;
    std::uint64_t step = 0;

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::uint64_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        SplitMix64 rng(cfg.seed, "shuffle/" + std::to_string(epoch));
        shuffle(order, rng);

        BatchMetrics epoch_acc;
        for (std::uint64_t b = 0; b < batches_per_epoch; ++b, ++step) {
            const std::uint64_t begin = b * cfg.batch_size;
            const std::uint64_t end = std::min(n, begin + cfg.batch_size);
            const double count = static_cast<double>(end - begin);

            SparseGrad batch_grad;
            batch_grad.vocab_size = result.params.vocab_size();
            BatchMetrics m;
            m.count = end - begin;
            for (std::uint64_t i = begin; i < end; ++i) {
                const auto& ex = examples[order[i]];
                const double lp_plus = logprob_sequence(result.params, ex.ctx, ex.preferred);
                const double lp_minus = logprob_sequence(result.params, ex.ctx, ex.dispreferred);
                const double ref_plus =
                    logprob_sequence(result.reference.get(), ex.ctx, ex.preferred);
                const double ref_minus =
                    logprob_sequence(result.reference.get(), ex.ctx, ex.dispreferred);
                const double z = (lp_plus - ref_plus) - (lp_minus - ref_minus);
                const double dpo = softplus(-cfg.beta * z);
                const double sft = -lp_plus;
                const double loss = dpo + cfg.alpha * sft;
                if (!std::isfinite(loss)) {
                    throw NumericError("non-finite loss in batch " + std::to_string(step));
                }
                m.mean_dpo_loss += dpo;
                m.mean_sft_loss += sft;
                m.mean_loss += loss;
                m.mean_margin += cfg.beta * z;
                m.mean_abs_logratio_to_ref += 0.5 * (std::abs(lp_plus - ref_plus) +
                                                     std::abs(lp_minus - ref_minus));
                if (lp_plus > lp_minus) {
                    m.preference_accuracy += 1.0;
                } else if (lp_plus == lp_minus) {
                    m.preference_accuracy += 0.5;
                }

                const double scale = -cfg.beta * sigmoid(-cfg.beta * z);
                const SparseGrad g_plus = grad_logprob(result.params, ex.ctx, ex.preferred);
                const SparseGrad g_minus = grad_logprob(result.params, ex.ctx, ex.dispreferred);
                batch_grad.accumulate(scale / count, g_plus);
                batch_grad.accumulate(-scale / count, g_minus);
                if (cfg.alpha != 0.0) batch_grad.accumulate(-cfg.alpha / count, g_plus);
            }
            m.mean_loss /= count;
            m.mean_dpo_loss /= count;
            m.mean_sft_loss /= count;
            m.mean_margin /= count;
            m.mean_abs_logratio_to_ref /= count;
            m.preference_accuracy /= count;

            const double lr = schedule_lr(cfg, step, total_steps);
            apply_update(result.params, batch_grad, lr, cfg.optimizer, adam);

            result.batch_log.push_back({epoch, step, lr, m});
            epoch_acc.mean_loss += m.mean_loss * count;
            epoch_acc.mean_dpo_loss += m.mean_dpo_loss * count;
            epoch_acc.mean_sft_loss += m.mean_sft_loss * count;
            epoch_acc.mean_margin += m.mean_margin * count;
            epoch_acc.mean_abs_logratio_to_ref += m.mean_abs_logratio_to_ref * count;
            epoch_acc.preference_accuracy += m.preference_accuracy * count;
            epoch_acc.count += m.count;
        }
        const double en = static_cast<double>(epoch_acc.count);
        epoch_acc.mean_loss /= en;
        epoch_acc.mean_dpo_loss /= en;
        epoch_acc.mean_sft_loss /= en;
        epoch_acc.mean_margin /= en;
        epoch_acc.mean_abs_logratio_to_ref /= en;
        epoch_acc.preference_accuracy /= en;
        result.epoch_metrics.push_back(epoch_acc);
    }

    if (!result.params.all_finite()) throw NumericError("non-finite parameters after training");
    result.final_eval =
        evaluate_preference(result.params, result.reference, examples, cfg.beta, cfg.alpha);
    return result;
}

TrainResult train(const std::vector<PreferenceRecord>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw ConfigError("training dataset is empty");
    Vocabulary vocab = Vocabulary::from_dataset(dataset);
    std::vector<TrainExample> examples;
    examples.reserve(dataset.size());
    for (const auto& r : dataset) examples.push_back(tokenize_example(r, vocab));
    return train_examples(examples, std::move(vocab), cfg);
}

namespace {

nlohmann::ordered_json metrics_json(const BatchMetrics& m) {
    return nlohmann::ordered_json{{"mean_loss", m.mean_loss},
                                  {"mean_dpo_loss", m.mean_dpo_loss},
                                  {"mean_sft_loss", m.mean_sft_loss},
                                  {"preference_accuracy", m.preference_accuracy},
                                  {"mean_margin", m.mean_margin},
                                  {"mean_abs_logratio_to_ref", m.mean_abs_logratio_to_ref},
                                  {"count", m.count}};
}

}  // namespace

void write_metrics_jsonl(const std::string& path, const TrainResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics log: " + path);
    for (const auto& e : result.batch_log) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["step"] = e.step;
        j["learning_rate"] = e.learning_rate;
        j["metrics"] = metrics_json(e.metrics);
        out << j.dump() << '\n';
    }
}

std::string summary_json(const TrainResult& result) {
    nlohmann::ordered_json j;
    j["epochs"] = result.epoch_metrics.size();
    j["steps"] = result.batch_log.size();
    nlohmann::ordered_json per_epoch = nlohmann::ordered_json::array();
    for (const auto& m : result.epoch_metrics) per_epoch.push_back(metrics_json(m));
    j["epoch_metrics"] = per_epoch;
    j["final_eval"] = metrics_json(result.final_eval);
    return j.dump(2) + "\n";
}

}  // namespace tpo
