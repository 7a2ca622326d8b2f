#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpo/core_model.hpp"
#include "tpo/policy.hpp"
#include "tpo/trainer.hpp"

namespace tpo {

// Separable synthetic corpus: every preferred response starts with a
// needle answer token derived from (video_id, needle_token) and the
// dis-preferred response starts with another video's answer, so a lookup
// classifier is exact while an untrained policy ties at 0.5.
struct SyntheticSpec {
    std::uint32_t num_videos = 100;
    std::uint32_t frames_per_video = 64;
    std::uint32_t vocab_size = 32;   // ids 0/1 reserved for <bos>/<unk>
    std::uint32_t needle_token = 7;  // seeds the per-video answer derivation
    std::uint32_t pairs_per_video = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<VideoRecord> videos;
    std::vector<PreferenceRecord> records;
};

// Content-token index (2..vocab_size-1) of the answer planted for a video.
std::uint32_t needle_answer_id(const SyntheticSpec& spec, const std::string& video_id);
std::string synthetic_word(std::uint32_t id);

SyntheticDataset synthesize_dataset(const SyntheticSpec& spec);

// Exact lookup classifier ("the response containing the video's needle
// answer is preferred"); 1.0 on any output of synthesize_dataset.
double bayes_oracle_accuracy(const SyntheticSpec& spec, const SyntheticDataset& dataset);

struct NeedleGrid {
    std::vector<std::uint32_t> context_lengths;
    std::vector<double> depths;
    std::vector<std::vector<double>> accuracy;  // accuracy[length][depth]
    double mean = 0.0;
};

// Grid corpus: one cell per (context length, relative depth); each cell
// holds videos of that length whose needle segment starts at
// floor(depth * (length - segment)). Train on this corpus, then probe.
SyntheticDataset synthesize_needle_corpus(const SyntheticSpec& spec,
                                          const std::vector<std::uint32_t>& context_lengths,
                                          const std::vector<double>& depths,
                                          std::uint32_t videos_per_cell);

// Rebuilds the grid corpus and, per cell, checks whether the policy assigns
// a higher log-probability to the cell's needle answer than to a distractor
// drawn from another video's answer (ties score 0.5).
NeedleGrid needle_probe(const PolicyParameters& policy, const SyntheticSpec& spec,
                        const std::vector<std::uint32_t>& context_lengths,
                        const std::vector<double>& depths, std::uint32_t videos_per_cell);

struct NeedleReport {
    NeedleGrid untrained;
    NeedleGrid trained;
    double delta = 0.0;  // trained.mean - untrained.mean
};

NeedleReport run_needle_eval(const SyntheticSpec& spec,
                             const std::vector<std::uint32_t>& context_lengths,
                             const std::vector<double>& depths, std::uint32_t videos_per_cell,
                             const TrainConfig& train_cfg);

std::string needle_grid_csv(const NeedleGrid& grid);
std::string needle_report_json(const NeedleReport& report);

enum class SweepAxis { DataScale, MixRatio };

struct SweepPointResult {
    std::string label;
    double preference_accuracy = 0.0;
    double mean_margin = 0.0;
    double initial_dpo_loss = 0.0;  // first-batch mean, before any update
    double seconds = 0.0;
    bool failed = false;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepPointResult> points;
};

// One policy per point, identical seeds otherwise, each from a fresh
// reference snapshot. DataScale points are dataset sizes trained as nested
// prefixes of one master corpus; MixRatio points are "incomplete:irrelevant"
// ratios drawn from the master corpus per plan_mix. Accuracy is always
// measured on the full master corpus. A point that fails numerically is
// marked failed and the sweep continues.
SweepResult run_sweep(SweepAxis axis, const std::vector<std::string>& points,
                      const SyntheticSpec& spec, const TrainConfig& base);

std::string sweep_to_text(const SweepResult& result);
std::string sweep_to_json(const SweepResult& result);

}  // namespace tpo
