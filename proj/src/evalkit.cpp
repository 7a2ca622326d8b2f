#include "tpo/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/frame_sampling.hpp"
#include "tpo/prng.hpp"

namespace tpo {

void SyntheticSpec::validate() const {
    if (num_videos == 0) throw ConfigError("num_videos must be >= 1");
    if (frames_per_video < 8) throw ConfigError("frames_per_video must be >= 8");
    if (vocab_size < 8 || vocab_size > 1000) throw ConfigError("vocab_size must be in [8, 1000]");
    if (needle_token >= vocab_size) throw ConfigError("needle_token must be < vocab_size");
    if (pairs_per_video == 0) throw ConfigError("pairs_per_video must be >= 1");
}

std::string synthetic_word(std::uint32_t id) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "w%03u", id);
    return buf;
}

std::uint32_t needle_answer_id(const SyntheticSpec& spec, const std::string& video_id) {
    const std::uint64_t h = fnv1a64(video_id + "|" + std::to_string(spec.needle_token));
    return 2 + static_cast<std::uint32_t>(h % (spec.vocab_size - 2));
}

namespace {

// content token != the excluded answer
std::uint32_t draw_filler(const SyntheticSpec& spec, SplitMix64& rng, std::uint32_t exclude) {
    for (;;) {
        const auto id = 2 + static_cast<std::uint32_t>(rng.next_below(spec.vocab_size - 2));
        if (id != exclude) return id;
    }
}

std::string make_response(const SyntheticSpec& spec, std::uint32_t first_token,
                          std::uint32_t exclude, SplitMix64& rng) {
    std::string out = synthetic_word(first_token);
    for (int i = 0; i < 2; ++i) out += " " + synthetic_word(draw_filler(spec, rng, exclude));
    return out;
}

// One record grounded in `anchor` of `video`; the dis-preferred response
// leads with `distractor_answer`.
PreferenceRecord make_synthetic_record(const SyntheticSpec& spec, const VideoRecord& video,
                                       const AnchorSegment& anchor, std::uint32_t pair_index,
                                       std::uint32_t global_index,
                                       std::uint32_t distractor_answer) {
    const std::uint32_t answer = needle_answer_id(spec, video.video_id);
    const std::string pair_tag = video.video_id + "/" + std::to_string(pair_index);

    PreferenceRecord r;
    r.query.video_id = video.video_id;
    r.query.question_type = static_cast<QuestionType>(global_index % kNumQuestionTypes);
    r.query.text = "which planted marker appears in segment " + pair_tag + " ?";
    r.query.anchor = anchor;
    r.query.query_id = make_query_id(video.video_id, anchor.indices, r.query.text);

    SplitMix64 fill_rng(spec.seed, "syn/fill/" + pair_tag);
    r.preferred = make_response(spec, answer, answer, fill_rng);
    r.dispreferred = make_response(spec, distractor_answer, answer, fill_rng);

    SamplerConfig sampler;
    sampler.seed = spec.seed;
    sampler.anchor_len = static_cast<std::uint32_t>(anchor.indices.size());
    sampler.irrelevant_len =
        std::min<std::uint32_t>(sampler.anchor_len,
                                video.frame_count - sampler.anchor_len);
    sampler.incomplete_fraction = 0.5;
    if (pair_index % 2 == 0) {
        r.dispreferred_source = sample_incomplete(anchor, sampler, "syn/manip/" + pair_tag);
    } else {
        r.dispreferred_source = sample_irrelevant(video, anchor, sampler, "syn/manip/" + pair_tag);
    }

    r.captions.reserve(anchor.indices.size());
    for (auto idx : anchor.indices) {
        r.captions.push_back("synthetic caption " + video.video_id + " frame " +
                             std::to_string(idx));
    }
    r.verdict = JudgeVerdict{JudgeAnswer::Yes, JudgeAnswer::No, JudgeAnswer::Yes,
                             "Task1: Yes\nTask2: No\nTask3: Yes"};
    r.kept = true;
    r.record_id = make_record_id(r.query, r.dispreferred_source);
    return r;
}

std::uint32_t distractor_for(const SyntheticSpec& spec, const std::vector<VideoRecord>& videos,
                             std::size_t video_index) {
    const std::uint32_t own = needle_answer_id(spec, videos[video_index].video_id);
    for (std::size_t step = 1; step <= videos.size(); ++step) {
        const auto& other = videos[(video_index + step) % videos.size()];
        const std::uint32_t candidate = needle_answer_id(spec, other.video_id);
        if (candidate != own) return candidate;
    }
    // all videos hash to one answer; fall back to any other content token
    return own == 2 ? 3 : 2;
}

}  // namespace

SyntheticDataset synthesize_dataset(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticDataset out;
    out.videos.reserve(spec.num_videos);
    for (std::uint32_t v = 0; v < spec.num_videos; ++v) {
        VideoRecord video;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "sv%04u", v);
        video.video_id = buf;
        video.frame_count = spec.frames_per_video;
        video.frame_refs.reserve(video.frame_count);
        for (std::uint32_t i = 0; i < video.frame_count; ++i) {
            video.frame_refs.push_back(video.video_id + "/f_" + std::to_string(i));
        }
        video.keyword = "synthetic";
        out.videos.push_back(std::move(video));
    }

    const std::uint32_t anchor_len = std::max<std::uint32_t>(2, spec.frames_per_video / 4);
    std::uint32_t global_index = 0;
    for (std::size_t v = 0; v < out.videos.size(); ++v) {
        const VideoRecord& video = out.videos[v];
        const std::uint32_t distractor = distractor_for(spec, out.videos, v);
        for (std::uint32_t p = 0; p < spec.pairs_per_video; ++p, ++global_index) {
            SamplerConfig sampler;
            sampler.seed = spec.seed;
            sampler.anchor_len = anchor_len;
            const AnchorSegment anchor = sample_anchor(
                video, sampler, "syn/anchor/" + video.video_id + "/" + std::to_string(p));
            out.records.push_back(
                make_synthetic_record(spec, video, anchor, p, global_index, distractor));
        }
    }
    return out;
}

double bayes_oracle_accuracy(const SyntheticSpec& spec, const SyntheticDataset& dataset) {
    if (dataset.records.empty()) return 0.0;
    double correct = 0.0;
    for (const auto& r : dataset.records) {
        // the classifier knows only the planting rule: the response carrying
        // the video's derived answer word is the preferred one
        const std::string answer = synthetic_word(needle_answer_id(spec, r.query.video_id));
        const auto contains = [&answer](const std::string& text) {
            std::istringstream ts(text);
            std::string w;
            while (ts >> w) {
                if (w == answer) return true;
            }
            return false;
        };
        if (contains(r.preferred) && !contains(r.dispreferred)) correct += 1.0;
    }
    return correct / static_cast<double>(dataset.records.size());
}

SyntheticDataset synthesize_needle_corpus(const SyntheticSpec& spec,
                                          const std::vector<std::uint32_t>& context_lengths,
                                          const std::vector<double>& depths,
                                          std::uint32_t videos_per_cell) {
    spec.validate();
    if (context_lengths.empty() || depths.empty()) {
        throw ConfigError("needle grid needs at least one length and one depth");
    }
    if (videos_per_cell == 0) throw ConfigError("videos_per_cell must be >= 1");
    for (double d : depths) {
        if (d < 0.0 || d > 1.0) throw ConfigError("depth must be in [0, 1]");
    }
    for (auto len : context_lengths) {
        if (len < 8) throw ConfigError("context length must be >= 8 frames");
    }

    SyntheticDataset out;
    for (std::size_t li = 0; li < context_lengths.size(); ++li) {
        const std::uint32_t length = context_lengths[li];
        const std::uint32_t segment = std::clamp<std::uint32_t>(length / 8, 2, 8);
        for (std::size_t di = 0; di < depths.size(); ++di) {
            const auto start = static_cast<std::uint32_t>(
                depths[di] * static_cast<double>(length - segment));
            for (std::uint32_t c = 0; c < videos_per_cell; ++c) {
                VideoRecord video;
                video.video_id = "nv" + std::to_string(length) + "d" + std::to_string(di) + "x" +
                                 std::to_string(c);
                video.frame_count = length;
                video.frame_refs.reserve(length);
                for (std::uint32_t i = 0; i < length; ++i) {
                    video.frame_refs.push_back(video.video_id + "/f_" + std::to_string(i));
                }
                video.keyword = "needle";
                out.videos.push_back(std::move(video));

                AnchorSegment anchor;
                anchor.video_id = out.videos.back().video_id;
                anchor.indices.resize(segment);
                std::iota(anchor.indices.begin(), anchor.indices.end(), start);

                const std::uint32_t global =
                    static_cast<std::uint32_t>(out.records.size());
                out.records.push_back(make_synthetic_record(
                    spec, out.videos.back(), anchor, c, global,
                    /*distractor placeholder, fixed below*/ 2));
            }
        }
    }
    // distractors come from other videos' answers, assigned after all
    // videos exist so the choice is stable
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        auto& r = out.records[i];
        const std::uint32_t own = needle_answer_id(spec, r.query.video_id);
        const std::uint32_t distractor = distractor_for(spec, out.videos, i);
        SplitMix64 fill_rng(spec.seed,
                            "needle/fill/" + r.query.video_id);
        r.dispreferred = make_response(spec, distractor, own, fill_rng);
        r.record_id = make_record_id(r.query, r.dispreferred_source);
    }
    return out;
}

NeedleGrid needle_probe(const PolicyParameters& policy, const SyntheticSpec& spec,
                        const std::vector<std::uint32_t>& context_lengths,
                        const std::vector<double>& depths, std::uint32_t videos_per_cell) {
    const SyntheticDataset corpus =
        synthesize_needle_corpus(spec, context_lengths, depths, videos_per_cell);
    NeedleGrid grid;
    grid.context_lengths = context_lengths;
    grid.depths = depths;
    grid.accuracy.assign(context_lengths.size(),
                         std::vector<double>(depths.size(), 0.0));

    const Vocabulary& vocab = policy.vocab();
    std::size_t rec = 0;
    double total = 0.0;
    for (std::size_t li = 0; li < context_lengths.size(); ++li) {
        for (std::size_t di = 0; di < depths.size(); ++di) {
            double cell = 0.0;
            for (std::uint32_t c = 0; c < videos_per_cell; ++c, ++rec) {
                const PreferenceRecord& r = corpus.records[rec];
                const ConditioningContext ctx = context_for(r, vocab);
                std::istringstream plus(r.preferred), minus(r.dispreferred);
                std::string answer_word, distractor_word;
                plus >> answer_word;
                minus >> distractor_word;
                const std::vector<std::uint32_t> answer{vocab.id_of(answer_word)};
                const std::vector<std::uint32_t> distractor{vocab.id_of(distractor_word)};
                const double lp_answer = logprob_sequence(policy, ctx, answer);
                const double lp_distractor = logprob_sequence(policy, ctx, distractor);
                if (lp_answer > lp_distractor) {
                    cell += 1.0;
                } else if (lp_answer == lp_distractor) {
                    cell += 0.5;
                }
            }
            cell /= static_cast<double>(videos_per_cell);
            grid.accuracy[li][di] = cell;
            total += cell;
        }
    }
    grid.mean = total / static_cast<double>(context_lengths.size() * depths.size());
    return grid;
}

NeedleReport run_needle_eval(const SyntheticSpec& spec,
                             const std::vector<std::uint32_t>& context_lengths,
                             const std::vector<double>& depths, std::uint32_t videos_per_cell,
                             const TrainConfig& train_cfg) {
    const SyntheticDataset corpus =
        synthesize_needle_corpus(spec, context_lengths, depths, videos_per_cell);

    NeedleReport report;
    const Vocabulary vocab = Vocabulary::from_dataset(corpus.records);
    const PolicyParameters untrained(vocab, train_cfg.num_buckets);
    report.untrained = needle_probe(untrained, spec, context_lengths, depths, videos_per_cell);

    const TrainResult trained = train(corpus.records, train_cfg);
    report.trained =
        needle_probe(trained.params, spec, context_lengths, depths, videos_per_cell);
    report.delta = report.trained.mean - report.untrained.mean;
    return report;
}

std::string needle_grid_csv(const NeedleGrid& grid) {
    std::ostringstream os;
    os << "length\\depth";
    for (double d : grid.depths) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.2f", d);
        os << ',' << buf;
    }
    os << '\n';
    for (std::size_t li = 0; li < grid.context_lengths.size(); ++li) {
        os << grid.context_lengths[li];
        for (std::size_t di = 0; di < grid.depths.size(); ++di) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.4f", grid.accuracy[li][di]);
            os << ',' << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::string needle_report_json(const NeedleReport& report) {
    const auto grid_json = [](const NeedleGrid& g) {
        nlohmann::ordered_json j;
        j["context_lengths"] = g.context_lengths;
        j["depths"] = g.depths;
        j["accuracy"] = g.accuracy;
        j["mean"] = g.mean;
        return j;
    };
    nlohmann::ordered_json j;
    j["untrained"] = grid_json(report.untrained);
    j["trained"] = grid_json(report.trained);
    j["delta"] = report.delta;
    return j.dump(2) + "\n";
}

namespace {

std::vector<TrainExample> tokenize_with(const std::vector<PreferenceRecord>& records,
                                        const Vocabulary& vocab) {
    std::vector<TrainExample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(tokenize_example(r, vocab));
    return out;
}

SweepPointResult run_point(const std::string& label,
                           const std::vector<PreferenceRecord>& train_records,
                           const std::vector<PreferenceRecord>& eval_records,
                           const TrainConfig& cfg) {
    SweepPointResult point;
    point.label = label;
    const auto start = std::chrono::steady_clock::now();
    try {
        const TrainResult result = train(train_records, cfg);
        point.initial_dpo_loss = result.batch_log.front().metrics.mean_dpo_loss;
        const auto eval_examples = tokenize_with(eval_records, result.params.vocab());
        const BatchMetrics m = evaluate_preference(result.params, result.reference, eval_examples,
                                                   cfg.beta, cfg.alpha);
        point.preference_accuracy = m.preference_accuracy;
        point.mean_margin = m.mean_margin;
    } catch (const NumericError&) {
        point.failed = true;
    }
    point.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return point;
}

}  // namespace

SweepResult run_sweep(SweepAxis axis, const std::vector<std::string>& points,
                      const SyntheticSpec& spec, const TrainConfig& base) {
    if (points.empty()) throw ConfigError("sweep needs at least one point");
    SweepResult result;
    result.axis = axis == SweepAxis::DataScale ? "data-scale" : "mix-ratio";

    if (axis == SweepAxis::DataScale) {
        std::vector<std::uint64_t> sizes;
        for (const auto& p : points) {
            try {
                sizes.push_back(std::stoull(p));
            } catch (const std::exception&) {
                throw ConfigError("bad data-scale point: " + p);
            }
            if (sizes.back() == 0) throw ConfigError("data-scale point must be >= 1");
        }
        const std::uint64_t max_size = *std::max_element(sizes.begin(), sizes.end());
        SyntheticSpec master_spec = spec;
        master_spec.num_videos = static_cast<std::uint32_t>(
            (max_size + spec.pairs_per_video - 1) / spec.pairs_per_video);
        const SyntheticDataset master = synthesize_dataset(master_spec);
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            const std::uint64_t n = std::min<std::uint64_t>(sizes[i], master.records.size());
            const std::vector<PreferenceRecord> subset(master.records.begin(),
                                                       master.records.begin() +
                                                           static_cast<std::ptrdiff_t>(n));
            result.points.push_back(run_point(points[i], subset, master.records, base));
        }
        return result;
    }

    // mix-ratio axis: "incomplete:irrelevant" labels in table order
    const SyntheticDataset master = synthesize_dataset(spec);
    std::vector<PreferenceRecord> incomplete_pool, irrelevant_pool;
    for (const auto& r : master.records) {
        (r.dispreferred_source.strategy == Strategy::Incomplete ? incomplete_pool
                                                                : irrelevant_pool)
            .push_back(r);
    }
    const std::uint64_t total =
        std::min(incomplete_pool.size(), irrelevant_pool.size());
    if (total == 0) throw ConfigError("master corpus lacks one of the strategies");
    for (const auto& label : points) {
        const auto colon = label.find(':');
        if (colon == std::string::npos) throw ConfigError("bad mix-ratio point: " + label);
        std::uint64_t ri = 0, rr = 0;
        try {
            ri = std::stoull(label.substr(0, colon));
            rr = std::stoull(label.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad mix-ratio point: " + label);
        }
        const MixPlan plan = plan_mix(total, ri, rr);
        std::vector<PreferenceRecord> subset;
        subset.insert(subset.end(), incomplete_pool.begin(),
                      incomplete_pool.begin() + static_cast<std::ptrdiff_t>(plan.incomplete_count));
        subset.insert(subset.end(), irrelevant_pool.begin(),
                      irrelevant_pool.begin() + static_cast<std::ptrdiff_t>(plan.irrelevant_count));
        result.points.push_back(run_point(label, subset, master.records, base));
    }
    return result;
}

std::string sweep_to_text(const SweepResult& result) {
    std::ostringstream os;
    os << "sweep axis: " << result.axis << "\n";
    os << "point        accuracy   mean_margin   initial_dpo   status\n";
    for (const auto& p : result.points) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-12s %8.4f   %11.4f   %11.6f   %s\n", p.label.c_str(),
                      p.preference_accuracy, p.mean_margin, p.initial_dpo_loss,
                      p.failed ? "failed" : "ok");
        os << buf;
    }
    return os.str();
}

std::string sweep_to_json(const SweepResult& result) {
    nlohmann::ordered_json j;
    j["axis"] = result.axis;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& p : result.points) {
        rows.push_back(nlohmann::ordered_json{{"label", p.label},
                                              {"preference_accuracy", p.preference_accuracy},
                                              {"mean_margin", p.mean_margin},
                                              {"initial_dpo_loss", p.initial_dpo_loss},
                                              {"seconds", p.seconds},
                                              {"failed", p.failed}});
    }
    j["points"] = rows;
    return j.dump(2) + "\n";
}

}  // namespace tpo
