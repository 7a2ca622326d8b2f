#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tpo/core_model.hpp"

namespace tpo {

constexpr std::uint32_t kBosId = 0;
constexpr std::uint32_t kUnkId = 1;
constexpr std::uint32_t kDefaultBuckets = 4096;

// Token <-> id bijection. Id 0 is <bos>, id 1 is <unk>; word ids start at 2
// and follow sorted-unique order so a rebuilt vocabulary is identical.
class Vocabulary {
public:
    Vocabulary();
    static Vocabulary from_words(std::vector<std::string> words);
    static Vocabulary from_dataset(const std::vector<PreferenceRecord>& records);

    std::uint32_t size() const { return static_cast<std::uint32_t>(words_.size()); }
    std::uint32_t id_of(std::string_view word) const;  // kUnkId when absent
    const std::string& word_of(std::uint32_t id) const;

    // Whitespace-split tokenizer; unknown words map to <unk>.
    std::vector<std::uint32_t> encode(std::string_view text) const;

    const std::vector<std::string>& words() const { return words_; }

    bool operator==(const Vocabulary&) const;

private:
    std::vector<std::string> words_;
    std::map<std::string, std::uint32_t, std::less<>> index_;
};

// Conditioning digest for (V, q). A pure function of the serialized frame
// identity and the query token ids:
//   fnv1a64("<video_id>|i1,i2,...|t1,t2,...")
struct ConditioningContext {
    std::uint64_t digest = 0;

    bool operator==(const ConditioningContext&) const = default;
};

ConditioningContext make_context(std::string_view video_id,
                                 std::span<const std::uint32_t> frame_indices,
                                 std::span<const std::uint32_t> query_token_ids);

// Linear-softmax policy over sparse indicator features of
// (context digest bucket, previous token):
//   feature(ctx, prev) = (digest mod num_buckets) * V + prev
//   p(t | ctx, prev)   = softmax_v(W[v, feature])[t]
// W has logical shape V x F with F = num_buckets * V; storage is
// feature-major so one step reads a contiguous V-sized column.
class PolicyParameters {
public:
    PolicyParameters(Vocabulary vocab, std::uint32_t num_buckets = kDefaultBuckets);

    const Vocabulary& vocab() const { return vocab_; }
    std::uint32_t vocab_size() const { return vocab_.size(); }
    std::uint32_t num_buckets() const { return num_buckets_; }
    std::uint64_t feature_count() const {
        return static_cast<std::uint64_t>(num_buckets_) * vocab_.size();
    }

    std::uint64_t feature_index(ConditioningContext ctx, std::uint32_t prev_token) const {
        return (ctx.digest % num_buckets_) * vocab_.size() + prev_token;
    }

    std::span<const double> column(std::uint64_t feature) const {
        return {weights_.data() + feature * vocab_.size(), vocab_.size()};
    }
    std::span<double> column(std::uint64_t feature) {
        return {weights_.data() + feature * vocab_.size(), vocab_.size()};
    }

    double get(std::uint32_t token, std::uint64_t feature) const {
        return weights_[feature * vocab_.size() + token];
    }
    void set(std::uint32_t token, std::uint64_t feature, double value) {
        weights_[feature * vocab_.size() + token] = value;
    }

    const std::vector<double>& raw() const { return weights_; }
    std::vector<double>& raw() { return weights_; }

    bool all_finite() const;

    // Flat binary snapshot (magic, V, F, num_buckets, feature-major doubles)
    // plus a JSON sidecar <path>.json with the vocab and feature spec.
    void save(const std::string& path) const;
    static PolicyParameters load(const std::string& path);

    bool operator==(const PolicyParameters& o) const;

private:
    Vocabulary vocab_;
    std::uint32_t num_buckets_;
    std::vector<double> weights_;
};

// Frozen snapshot serving as the DPO reference.
class ReferenceParameters {
public:
    explicit ReferenceParameters(PolicyParameters snapshot) : params_(std::move(snapshot)) {}

    const PolicyParameters& get() const { return params_; }

private:
    PolicyParameters params_;
};

// Gradient of a sequence log-probability: nonzero only on the columns the
// sequence touched. Keys are feature indices; values are V-sized rows.
struct SparseGrad {
    std::uint32_t vocab_size = 0;
    std::map<std::uint64_t, std::vector<double>> cols;

    void accumulate(double scale, const SparseGrad& other);
    double max_abs() const;
};

// Sum over steps of log softmax(W[:, feature(ctx, prev)])[token]. Finite,
// <= 0. Throws VocabError for out-of-range ids or an empty sequence.
double logprob_sequence(const PolicyParameters& params, ConditioningContext ctx,
                        std::span<const std::uint32_t> response);

// Per step (one_hot(token) - softmax) on the active column, summed.
SparseGrad grad_logprob(const PolicyParameters& params, ConditioningContext ctx,
                        std::span<const std::uint32_t> response);

}  // namespace tpo
