#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpo/core_model.hpp"
#include "tpo/frame_sampling.hpp"
#include "tpo/gateway.hpp"

namespace tpo {

// Appendix-style question type mix, normalized to sum to 1. Indexed by
// QuestionType enum value.
std::vector<double> default_type_weights();

struct PipelineConfig {
    std::string manifest_path;
    SamplerConfig sampler;
    GatewayConfig gateway;
    std::uint64_t target_pairs = 10;
    std::uint64_t ratio_incomplete = 5;
    std::uint64_t ratio_irrelevant = 5;
    std::vector<double> type_weights = default_type_weights();
    std::string output_path = "dataset.jsonl";
    std::string checkpoint_path = "checkpoint.jsonl";
    std::uint32_t workers = 1;
    double oversample_factor = 1.3;  // extra generation to cover filter drops
    std::uint32_t pairs_per_video = 2;
    std::uint64_t seed = 0;

    // Test hook, not part of the config file schema: simulate a crash after
    // this many newly journaled slots (0 = disabled).
    std::uint64_t abort_after_slots = 0;

    void validate() const;
};

// Video manifest: one JSON object per line with video_id, frame_count,
// keyword and optional frame_refs / duration_s. Missing frame_refs are
// synthesized as "<video_id>/f_<index>". Duplicate ids are refused.
std::vector<VideoRecord> ingest_manifest(const std::string& path);

struct CurationResult {
    DatasetManifest manifest;
    std::uint64_t kept = 0;      // selected into the dataset
    std::uint64_t rejected = 0;  // judged and dropped
    std::uint64_t failed = 0;    // per-record failures (logged, skipped)
    std::uint64_t surplus = 0;   // kept beyond quota, not selected
    bool partial = false;        // target unreachable from this manifest
    std::string dataset_path;
    std::string manifest_path;
    std::string reject_log_path;
};

// Signals the abort_after_slots test hook; the journal is already flushed.
class PipelineInterrupted : public Error {
public:
    explicit PipelineInterrupted(const std::string& m) : Error("interrupted", m) {}
};

// End-to-end curation: anchor sampling -> captioning -> question generation
// -> response generation -> judging -> canonical dataset. Slots are planned
// up front (strategy per slot follows plan_mix, videos round-robin by
// keyword) and processed in waves of `workers`; outcomes append to the
// checkpoint journal in slot order, so a killed run resumes byte-identically.
// Resume refuses a checkpoint whose config hash differs.
CurationResult run_curation(const PipelineConfig& cfg, bool resume = false);

struct DatasetStats {
    std::uint64_t total_lines = 0;
    std::uint64_t parsed = 0;
    std::uint64_t corrupt = 0;
    std::vector<std::uint64_t> corrupt_line_numbers;
    std::map<std::string, std::uint64_t> by_strategy;
    std::map<std::string, std::uint64_t> by_type;
    std::map<std::string, double> type_fraction_pct;  // rounded to 0.1%
    std::uint64_t kept_true = 0;
    std::uint64_t kept_false = 0;
    std::uint64_t kept_unset = 0;
    std::map<std::uint64_t, std::uint64_t> caption_chars_hist;  // bucketed by 16 chars
    std::map<std::uint64_t, std::uint64_t> preferred_token_hist;
    std::map<std::uint64_t, std::uint64_t> dispreferred_token_hist;
};

DatasetStats dataset_stats(const std::string& dataset_path);
std::string stats_to_json(const DatasetStats& stats);
std::string stats_to_text(const DatasetStats& stats);

}  // namespace tpo
