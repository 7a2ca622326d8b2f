#include "tpo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/post_filter.hpp"
#include "tpo/prng.hpp"

namespace tpo {

namespace fs = std::filesystem;

std::vector<double> default_type_weights() {
    // question-type percentages; normalized because they carry rounding error
    static const double pct[kNumQuestionTypes] = {8.7, 12.4, 11.1, 18.0, 12.8, 7.5, 14.9, 13.5};
    double sum = 0.0;
    for (double p : pct) sum += p;
    std::vector<double> w(kNumQuestionTypes);
    for (int i = 0; i < kNumQuestionTypes; ++i) w[static_cast<std::size_t>(i)] = pct[i] / sum;
    return w;
}

void PipelineConfig::validate() const {
    if (target_pairs == 0) throw ConfigError("target_pairs must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (oversample_factor < 1.0) throw ConfigError("oversample_factor must be >= 1");
    if (pairs_per_video == 0) throw ConfigError("pairs_per_video must be >= 1");
    if (ratio_incomplete + ratio_irrelevant == 0) {
        throw ConfigError("mix ratios must not both be zero");
    }
    if (sampler.anchor_len == 0 || sampler.irrelevant_len == 0) {
        throw ConfigError("sampler lengths must be >= 1");
    }
    if (sampler.incomplete_fraction <= 0.0 || sampler.incomplete_fraction >= 1.0) {
        throw ConfigError("incomplete_fraction must be strictly between 0 and 1");
    }
    if (type_weights.size() != kNumQuestionTypes) {
        throw ConfigError("type_weights must cover all question types");
    }
    double sum = 0.0;
    for (double w : type_weights) {
        if (w < 0.0) throw ConfigError("type_weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("type_weights must sum to 1");
    gateway.validate();
}

std::vector<VideoRecord> ingest_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open manifest: " + path);
    std::vector<VideoRecord> videos;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IngestError("line " + std::to_string(lineno) + ": " + e.what());
        }
        VideoRecord v;
        try {
            v.video_id = j.at("video_id").get<std::string>();
            v.frame_count = j.at("frame_count").get<std::uint32_t>();
            if (j.contains("frame_refs")) {
                v.frame_refs = j.at("frame_refs").get<std::vector<std::string>>();
            } else {
                v.frame_refs.reserve(v.frame_count);
                for (std::uint32_t i = 0; i < v.frame_count; ++i) {
                    v.frame_refs.push_back(v.video_id + "/f_" + std::to_string(i));
                }
            }
            v.keyword = j.value("keyword", std::string{});
            if (j.contains("duration_s")) v.duration_s = j.at("duration_s").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw IngestError("line " + std::to_string(lineno) + ": " + e.what());
        }
        const auto violations = validate_video(v);
        if (!violations.empty()) {
            throw IngestError("line " + std::to_string(lineno) + ": " + violations.front().message);
        }
        if (seen.count(v.video_id)) {
            throw DuplicateId("video_id " + v.video_id + " duplicated at line " +
                              std::to_string(lineno));
        }
        seen.emplace(v.video_id, lineno);
        videos.push_back(std::move(v));
    }
    return videos;
}

namespace {

struct SlotPlan {
    std::uint64_t slot = 0;
    std::size_t video = 0;  // index into the ingested manifest
    Strategy strategy = Strategy::Incomplete;
};

// Round-robin over sorted keywords, cycling videos within each keyword,
// each video used at most pairs_per_video times.
std::vector<SlotPlan> plan_slots(const std::vector<VideoRecord>& videos,
                                 const PipelineConfig& cfg) {
    const auto total =
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(cfg.target_pairs) *
                                             cfg.oversample_factor));
    const MixPlan mix = plan_mix(total, cfg.ratio_incomplete, cfg.ratio_irrelevant);

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < videos.size(); ++i) groups[videos[i].keyword].push_back(i);
    std::vector<std::string> keywords;
    for (const auto& [k, _] : groups) keywords.push_back(k);

    std::vector<std::uint32_t> uses(videos.size(), 0);
    std::map<std::string, std::size_t> cursor;  // per-keyword rotation
    std::size_t kw_cursor = 0;

    std::vector<SlotPlan> plans;
    plans.reserve(total);
    for (std::uint64_t s = 0; s < total; ++s) {
        bool assigned = false;
        for (std::size_t tries = 0; tries < keywords.size() && !assigned; ++tries) {
            const std::string& kw = keywords[(kw_cursor + tries) % keywords.size()];
            auto& vids = groups[kw];
            auto& cur = cursor[kw];
            for (std::size_t v = 0; v < vids.size(); ++v) {
                const std::size_t idx = vids[(cur + v) % vids.size()];
                if (uses[idx] < cfg.pairs_per_video) {
                    ++uses[idx];
                    cur = (cur + v + 1) % vids.size();
                    kw_cursor = (kw_cursor + tries + 1) % keywords.size();
                    // Bresenham interleave of the two strategies across slots
                    const bool incomplete =
                        (s + 1) * mix.incomplete_count / total > s * mix.incomplete_count / total;
                    plans.push_back(
                        {s, idx, incomplete ? Strategy::Incomplete : Strategy::Irrelevant});
                    assigned = true;
                    break;
                }
            }
        }
        if (!assigned) break;  // manifest capacity exhausted
    }
    return plans;
}

QuestionType sample_type(const std::vector<double>& weights, SplitMix64& rng) {
    const double r = rng.next_double();
    double acc = 0.0;
    for (int i = 0; i < kNumQuestionTypes; ++i) {
        acc += weights[static_cast<std::size_t>(i)];
        if (r < acc) return static_cast<QuestionType>(i);
    }
    return static_cast<QuestionType>(kNumQuestionTypes - 1);
}

struct SlotOutcome {
    std::uint64_t slot = 0;
    std::string status;  // kept | rejected | failed
    Strategy strategy = Strategy::Incomplete;
    std::optional<PreferenceRecord> record;  // present when status == kept
    std::optional<RejectEntry> reject;       // present when status == rejected
    std::string error;                       // present when status == failed
};

nlohmann::ordered_json outcome_to_json(const SlotOutcome& o) {
    nlohmann::ordered_json j;
    j["slot"] = o.slot;
    j["status"] = o.status;
    j["strategy"] = to_string(o.strategy);
    if (o.record) j["record"] = nlohmann::ordered_json::parse(serialize_record(*o.record));
    if (o.reject) {
        j["reject"] = nlohmann::ordered_json{{"record_id", o.reject->record_id},
                                             {"reason", o.reject->reason},
                                             {"raw_text", o.reject->raw_text}};
    }
    if (!o.error.empty()) j["error"] = o.error;
    return j;
}

SlotOutcome outcome_from_json(const nlohmann::json& j) {
    SlotOutcome o;
    o.slot = j.at("slot").get<std::uint64_t>();
    o.status = j.at("status").get<std::string>();
    o.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("record")) o.record = parse_record(j.at("record").dump());
    if (j.contains("reject")) {
        const auto& r = j.at("reject");
        o.reject = RejectEntry{r.at("record_id").get<std::string>(),
                               r.at("reason").get<std::string>(),
                               r.at("raw_text").get<std::string>()};
    }
    if (j.contains("error")) o.error = j.at("error").get<std::string>();
    return o;
}

std::string config_hash(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["manifest_path"] = cfg.manifest_path;
    j["anchor_len"] = cfg.sampler.anchor_len;
    j["anchor_mode"] = cfg.sampler.anchor_mode == AnchorMode::FullVideo ? "full" : "contiguous";
    j["irrelevant_len"] = cfg.sampler.irrelevant_len;
    j["incomplete_fraction"] = cfg.sampler.incomplete_fraction;
    j["target_pairs"] = cfg.target_pairs;
    j["ratio_incomplete"] = cfg.ratio_incomplete;
    j["ratio_irrelevant"] = cfg.ratio_irrelevant;
    j["type_weights"] = cfg.type_weights;
    j["oversample_factor"] = cfg.oversample_factor;
    j["pairs_per_video"] = cfg.pairs_per_video;
    j["seed"] = cfg.seed;
    j["stub_mode"] = cfg.gateway.stub_mode;
    nlohmann::ordered_json eps = nlohmann::ordered_json::object();
    for (const auto& [role, ep] : cfg.gateway.endpoints) eps[to_string(role)] = ep.url;
    j["endpoints"] = eps;
    return hex64(fnv1a64(j.dump()));
}

SlotOutcome process_slot(const SlotPlan& plan, const VideoRecord& video,
                         const PipelineConfig& cfg, Gateway& gateway) {
    SlotOutcome out;
    out.slot = plan.slot;
    out.strategy = plan.strategy;
    const std::string slot_str = std::to_string(plan.slot);
    try {
        SamplerConfig sampler = cfg.sampler;
        sampler.seed = cfg.seed;

        const AnchorSegment anchor = sample_anchor(video, sampler, "anchor/" + slot_str);
        SplitMix64 type_rng(cfg.seed, "type/" + slot_str);
        const QuestionType qtype = sample_type(cfg.type_weights, type_rng);

        std::vector<std::string> anchor_locators;
        anchor_locators.reserve(anchor.indices.size());
        for (auto idx : anchor.indices) anchor_locators.push_back(video.frame_refs[idx]);

        const auto captions = gateway.caption_frames(anchor_locators);
        const auto drafts = gateway.generate_questions(captions, qtype);
        if (drafts.empty()) {
            out.status = "failed";
            out.error = "question generator returned None";
            return out;
        }

        QueryItem query;
        query.video_id = video.video_id;
        query.question_type = qtype;
        query.text = drafts.front().question;
        query.anchor = anchor;
        query.query_id = make_query_id(video.video_id, anchor.indices, query.text);

        const ManipulatedFrameSet manipulated =
            plan.strategy == Strategy::Incomplete
                ? sample_incomplete(anchor, sampler, "manip/" + slot_str)
                : sample_irrelevant(video, anchor, sampler, "manip/" + slot_str);
        std::vector<std::string> manip_locators;
        manip_locators.reserve(manipulated.indices.size());
        for (auto idx : manipulated.indices) manip_locators.push_back(video.frame_refs[idx]);

        PreferenceRecord record;
        record.query = query;
        record.preferred = gateway.generate_response(query, anchor_locators);
        record.dispreferred = gateway.generate_response(query, manip_locators);
        record.dispreferred_source = manipulated;
        record.captions = captions;
        record.record_id = make_record_id(query, manipulated);

        const auto violations = validate_record(record, video);
        if (!violations.empty()) {
            out.status = "failed";
            out.error = "validation: " + violations.front().message;
            return out;
        }

        FilterResult filtered = filter_pairs({record}, gateway);
        const PreferenceRecord& judged = filtered.records.front();
        if (judged.kept == true) {
            out.status = "kept";
            out.record = judged;
        } else {
            out.status = "rejected";
            out.reject = filtered.rejects.front();
        }
        return out;
    } catch (const Error& e) {
        out.status = "failed";
        out.error = std::string(e.category()) + ": " + e.what();
        return out;
    }
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
    }
    fs::rename(tmp, path);
}

}  // namespace

CurationResult run_curation(const PipelineConfig& cfg, bool resume) {
    cfg.validate();

    const std::vector<VideoRecord> videos = ingest_manifest(cfg.manifest_path);
    if (videos.empty()) throw IngestError("manifest is empty: " + cfg.manifest_path);

    const std::string state_path = cfg.checkpoint_path + ".state.json";
    const std::string hash = config_hash(cfg);

    std::map<std::uint64_t, SlotOutcome> journal;
    if (resume && fs::exists(cfg.checkpoint_path) && fs::exists(state_path)) {
        std::ifstream state_in(state_path);
        nlohmann::json state;
        try {
            state_in >> state;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("unreadable checkpoint state: ") + e.what());
        }
        if (state.value("config_hash", std::string{}) != hash) {
            throw ConfigError("checkpoint was created with a different config; refusing to resume");
        }
        std::ifstream in(cfg.checkpoint_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                SlotOutcome o = outcome_from_json(nlohmann::json::parse(line));
                journal.emplace(o.slot, std::move(o));
            } catch (const std::exception&) {
                break;  // torn tail from a crash; everything after is reprocessed
            }
        }
    } else {
        fs::remove(cfg.checkpoint_path);
        fs::remove(state_path);
        nlohmann::ordered_json state;
        state["schema_version"] = kSchemaVersion;
        state["config_hash"] = hash;
        atomic_write(state_path, state.dump() + "\n");
    }

    Gateway gateway(cfg.gateway);
    const std::vector<SlotPlan> plans = plan_slots(videos, cfg);
    const MixPlan quota = plan_mix(cfg.target_pairs, cfg.ratio_incomplete, cfg.ratio_irrelevant);

    std::ofstream journal_out(cfg.checkpoint_path, std::ios::app);
    if (!journal_out) throw IoError("cannot append checkpoint: " + cfg.checkpoint_path);

    std::map<Strategy, std::uint64_t> selected_counts{{Strategy::Incomplete, 0},
                                                      {Strategy::Irrelevant, 0}};
    auto quota_for = [&quota](Strategy s) {
        return s == Strategy::Incomplete ? quota.incomplete_count : quota.irrelevant_count;
    };
    std::vector<PreferenceRecord> selected;
    std::vector<std::string> selected_ids;
    std::vector<RejectEntry> rejects;
    std::uint64_t rejected = 0, failed = 0, surplus = 0, newly_processed = 0;

    auto apply_outcome = [&](const SlotOutcome& o) {
        if (o.status == "kept") {
            const bool room = selected_counts[o.strategy] < quota_for(o.strategy);
            const bool fresh =
                std::find(selected_ids.begin(), selected_ids.end(), o.record->record_id) ==
                selected_ids.end();
            if (room && fresh) {
                selected_counts[o.strategy] += 1;
                selected.push_back(*o.record);
                selected_ids.push_back(o.record->record_id);
            } else {
                ++surplus;
            }
        } else if (o.status == "rejected") {
            ++rejected;
            rejects.push_back(*o.reject);
        } else {
            ++failed;
        }
    };

    std::size_t i = 0;
    while (i < plans.size()) {
        if (selected_counts[Strategy::Incomplete] >= quota.incomplete_count &&
            selected_counts[Strategy::Irrelevant] >= quota.irrelevant_count) {
            break;
        }
        // wave membership is decided against the quota state frozen here
        std::vector<const SlotPlan*> wave;
        while (i < plans.size() && wave.size() < cfg.workers) {
            const SlotPlan& plan = plans[i];
            ++i;
            if (selected_counts[plan.strategy] >= quota_for(plan.strategy)) continue;
            wave.push_back(&plan);
        }
        if (wave.empty()) continue;

        std::vector<SlotOutcome> outcomes(wave.size());
        std::vector<std::size_t> to_run;
        for (std::size_t w = 0; w < wave.size(); ++w) {
            const auto it = journal.find(wave[w]->slot);
            if (it != journal.end()) {
                outcomes[w] = it->second;
            } else {
                to_run.push_back(w);
            }
        }
        if (!to_run.empty()) {
            std::vector<std::thread> threads;
            threads.reserve(to_run.size());
            for (std::size_t w : to_run) {
                threads.emplace_back([&, w] {
                    outcomes[w] = process_slot(*wave[w], videos[wave[w]->video], cfg, gateway);
                });
            }
            for (auto& t : threads) t.join();
            for (std::size_t w : to_run) {
                journal_out << outcome_to_json(outcomes[w]).dump() << '\n';
            }
            journal_out.flush();
            newly_processed += to_run.size();
        }
        for (const auto& o : outcomes) apply_outcome(o);

        if (cfg.abort_after_slots > 0 && newly_processed >= cfg.abort_after_slots) {
            throw PipelineInterrupted("aborted after " + std::to_string(newly_processed) +
                                      " slots (test hook)");
        }
    }

    // dataset file ordering is fixed by record_id
    std::vector<std::size_t> order(selected.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return selected[a].record_id < selected[b].record_id;
    });

    std::string dataset_text;
    DatasetManifest manifest;
    manifest.seed = cfg.seed;
    for (std::size_t idx : order) {
        dataset_text += serialize_record(selected[idx]);
        dataset_text += '\n';
        manifest.records.push_back(selected[idx].record_id);
    }
    manifest.mix_counts[to_string(Strategy::Incomplete)] = selected_counts[Strategy::Incomplete];
    manifest.mix_counts[to_string(Strategy::Irrelevant)] = selected_counts[Strategy::Irrelevant];

    CurationResult result;
    result.manifest = manifest;
    result.kept = selected.size();
    result.rejected = rejected;
    result.failed = failed;
    result.surplus = surplus;
    result.partial = selected_counts[Strategy::Incomplete] < quota.incomplete_count ||
                     selected_counts[Strategy::Irrelevant] < quota.irrelevant_count;
    result.dataset_path = cfg.output_path;
    result.manifest_path = cfg.output_path + ".manifest.json";
    result.reject_log_path = cfg.output_path + ".rejects.jsonl";

    atomic_write(result.dataset_path, dataset_text);
    atomic_write(result.manifest_path, serialize_manifest(manifest));
    std::string reject_text;
    for (const auto& r : rejects) {
        nlohmann::ordered_json j;
        j["record_id"] = r.record_id;
        j["reason"] = r.reason;
        j["raw_text"] = r.raw_text;
        reject_text += j.dump();
        reject_text += '\n';
    }
    atomic_write(result.reject_log_path, reject_text);
    return result;
}

DatasetStats dataset_stats(const std::string& dataset_path) {
    std::ifstream in(dataset_path);
    if (!in) throw IoError("cannot open dataset: " + dataset_path);
    DatasetStats stats;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ++stats.total_lines;
        PreferenceRecord r;
        try {
            r = parse_record(line);
        } catch (const ParseError&) {
            ++stats.corrupt;
            stats.corrupt_line_numbers.push_back(lineno);
            continue;
        }
        ++stats.parsed;
        stats.by_strategy[to_string(r.dispreferred_source.strategy)] += 1;
        stats.by_type[to_string(r.query.question_type)] += 1;
        if (!r.kept) {
            ++stats.kept_unset;
        } else if (*r.kept) {
            ++stats.kept_true;
        } else {
            ++stats.kept_false;
        }
        for (const auto& c : r.captions) stats.caption_chars_hist[c.size() / 16 * 16] += 1;
        const auto count_tokens = [](const std::string& text) {
            std::istringstream is(text);
            std::string w;
            std::uint64_t n = 0;
            while (is >> w) ++n;
            return n;
        };
        stats.preferred_token_hist[count_tokens(r.preferred)] += 1;
        stats.dispreferred_token_hist[count_tokens(r.dispreferred)] += 1;
    }
    for (const auto& [type, count] : stats.by_type) {
        const double pct =
            std::round(static_cast<double>(count) / static_cast<double>(stats.parsed) * 1000.0) /
            10.0;
        stats.type_fraction_pct[type] = pct;
    }
    return stats;
}

std::string stats_to_json(const DatasetStats& stats) {
    nlohmann::ordered_json j;
    j["total_lines"] = stats.total_lines;
    j["parsed"] = stats.parsed;
    j["corrupt"] = stats.corrupt;
    j["corrupt_line_numbers"] = stats.corrupt_line_numbers;
    j["by_strategy"] = stats.by_strategy;
    j["by_type"] = stats.by_type;
    j["type_fraction_pct"] = stats.type_fraction_pct;
    j["kept"] = {{"true", stats.kept_true}, {"false", stats.kept_false},
                 {"unset", stats.kept_unset}};
    const auto hist = [](const std::map<std::uint64_t, std::uint64_t>& h) {
        nlohmann::ordered_json out = nlohmann::ordered_json::object();
        for (const auto& [k, v] : h) out[std::to_string(k)] = v;
        return out;
    };
    j["caption_chars_hist"] = hist(stats.caption_chars_hist);
    j["preferred_token_hist"] = hist(stats.preferred_token_hist);
    j["dispreferred_token_hist"] = hist(stats.dispreferred_token_hist);
    return j.dump(2) + "\n";
}

std::string stats_to_text(const DatasetStats& stats) {
    std::ostringstream os;
    os << "dataset summary\n";
    os << "  lines parsed   " << stats.parsed << " / " << stats.total_lines << "  (corrupt "
       << stats.corrupt << ")\n";
    os << "  kept           true=" << stats.kept_true << " false=" << stats.kept_false
       << " unset=" << stats.kept_unset << "\n";
    os << "strategy counts\n";
    for (const auto& [k, v] : stats.by_strategy) {
        os << "  " << k << std::string(k.size() < 24 ? 24 - k.size() : 1, ' ') << v << "\n";
    }
    os << "question types\n";
    for (const auto& [k, v] : stats.by_type) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%6.1f%%", stats.type_fraction_pct.at(k));
        os << "  " << k << std::string(k.size() < 24 ? 24 - k.size() : 1, ' ') << v << "  " << buf
           << "\n";
    }
    return os.str();
}

}  // namespace tpo
