#include "tpo/core_model.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/prng.hpp"

namespace tpo {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::Irrelevant: return "Irrelevant";
        case Strategy::Incomplete: return "Incomplete";
    }
    return "?";
}

const char* to_string(QuestionType t) {
    switch (t) {
        case QuestionType::TemporalReasoning: return "TemporalReasoning";
        case QuestionType::ActionReasoning: return "ActionReasoning";
        case QuestionType::CausalReasoning: return "CausalReasoning";
        case QuestionType::InformationExtraction: return "InformationExtraction";
        case QuestionType::Descriptive: return "Descriptive";
        case QuestionType::Summarization: return "Summarization";
        case QuestionType::ObjectReasoning: return "ObjectReasoning";
        case QuestionType::SpatialReasoning: return "SpatialReasoning";
    }
    return "?";
}

const char* to_string(JudgeAnswer a) {
    switch (a) {
        case JudgeAnswer::Yes: return "Yes";
        case JudgeAnswer::No: return "No";
        case JudgeAnswer::Equally: return "Equally";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "Irrelevant") return Strategy::Irrelevant;
    if (s == "Incomplete") return Strategy::Incomplete;
    throw ParseError("unknown strategy: " + s);
}

QuestionType question_type_from_string(const std::string& s) {
    for (int i = 0; i < kNumQuestionTypes; ++i) {
        const auto t = static_cast<QuestionType>(i);
        if (s == to_string(t)) return t;
    }
    throw ParseError("unknown question type: " + s);
}

JudgeAnswer judge_answer_from_string(const std::string& s) {
    if (s == "Yes") return JudgeAnswer::Yes;
    if (s == "No") return JudgeAnswer::No;
    if (s == "Equally") return JudgeAnswer::Equally;
    throw ParseError("unknown judge answer: " + s);
}

namespace {

std::string join_indices(const std::vector<std::uint32_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
    return os.str();
}

bool strictly_increasing(const std::vector<std::uint32_t>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] <= v[i - 1]) return false;
    }
    return true;
}

void require_no_newline(const std::string& id, const char* what) {
    if (id.find('\n') != std::string::npos) {
        throw SerializationError(std::string(what) + " contains an embedded newline");
    }
}

}  // namespace

std::string make_query_id(const std::string& video_id,
                          const std::vector<std::uint32_t>& anchor_indices,
                          const std::string& question_text) {
    const std::string material = video_id + "|" + join_indices(anchor_indices) + "|" + question_text;
    return "q-" + hex64(fnv1a64(material));
}

std::string make_record_id(const QueryItem& query, const ManipulatedFrameSet& source) {
    const std::string material = query.video_id + "|" + join_indices(query.anchor.indices) + "|" +
                                 query.text + "|" + to_string(source.strategy) + "|" +
                                 join_indices(source.indices);
    return "r-" + hex64(fnv1a64(material));
}

std::vector<Violation> validate_video(const VideoRecord& video) {
    std::vector<Violation> out;
    if (video.video_id.empty()) out.push_back({"EmptyId", "video_id is empty"});
    if (video.frame_count == 0) out.push_back({"EmptyVideo", "frame_count must be positive"});
    if (video.frame_count != video.frame_refs.size()) {
        out.push_back({"FrameRefMismatch", "frame_count != number of frame_refs"});
    }
    if (video.duration_s && *video.duration_s < 0.0) {
        out.push_back({"NegativeDuration", "duration_s is negative"});
    }
    return out;
}

std::vector<Violation> validate_record(const PreferenceRecord& record, const VideoRecord& video) {
    std::vector<Violation> out;

    if (record.query.video_id != video.video_id) {
        out.push_back({"IdMismatch", "record video_id does not match the provided video"});
    }
    if (record.query.anchor.video_id != record.query.video_id) {
        out.push_back({"IdMismatch", "anchor video_id does not match query video_id"});
    }
    if (record.dispreferred_source.video_id != record.query.video_id) {
        out.push_back({"IdMismatch", "dispreferred_source video_id does not match query video_id"});
    }

    if (record.query.text.empty()) out.push_back({"EmptyQuery", "query text is empty"});

    const auto& anchor = record.query.anchor.indices;
    if (anchor.empty()) out.push_back({"EmptyAnchor", "anchor has no frames"});
    if (!strictly_increasing(anchor)) {
        out.push_back({"AnchorOrder", "anchor indices must be strictly increasing"});
    }
    for (auto idx : anchor) {
        if (idx >= video.frame_count) {
            out.push_back({"AnchorRange", "anchor index out of range"});
            break;
        }
    }

    const auto& manip = record.dispreferred_source.indices;
    if (manip.empty()) out.push_back({"EmptyFrameSet", "dispreferred frame set has no frames"});
    if (!strictly_increasing(manip)) {
        out.push_back({"FrameSetOrder", "dispreferred indices must be strictly increasing"});
    }
    for (auto idx : manip) {
        if (idx >= video.frame_count) {
            out.push_back({"FrameSetRange", "dispreferred index out of range"});
            break;
        }
    }

    const std::unordered_set<std::uint32_t> anchor_set(anchor.begin(), anchor.end());
    if (record.dispreferred_source.strategy == Strategy::Irrelevant) {
        for (auto idx : manip) {
            if (anchor_set.count(idx)) {
                out.push_back({"Overlap", "Irrelevant must be disjoint from the anchor"});
                break;
            }
        }
    } else {
        bool subset = true;
        for (auto idx : manip) {
            if (!anchor_set.count(idx)) {
                subset = false;
                break;
            }
        }
        if (!subset || manip.size() >= anchor.size()) {
            out.push_back({"NotProperSubset", "Incomplete must be a proper subset"});
        }
    }

    if (record.preferred == record.dispreferred) {
        out.push_back({"IdenticalResponses", "responses identical"});
    }
    if (record.kept.has_value() != record.verdict.has_value()) {
        out.push_back({"KeptWithoutVerdict", "kept is set iff verdict is set"});
    }
    return out;
}

namespace {

ordered_json anchor_to_json(const AnchorSegment& a) {
    return ordered_json{{"video_id", a.video_id}, {"indices", a.indices}};
}

ordered_json source_to_json(const ManipulatedFrameSet& m) {
    return ordered_json{
        {"video_id", m.video_id}, {"indices", m.indices}, {"strategy", to_string(m.strategy)}};
}

std::vector<std::uint32_t> indices_from_json(const nlohmann::json& j) {
    return j.get<std::vector<std::uint32_t>>();
}

}  // namespace

std::string serialize_record(const PreferenceRecord& record) {
    require_no_newline(record.record_id, "record_id");
    require_no_newline(record.query.query_id, "query_id");
    require_no_newline(record.query.video_id, "video_id");

    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["record_id"] = record.record_id;
    j["query"] = ordered_json{{"query_id", record.query.query_id},
                              {"video_id", record.query.video_id},
                              {"question_type", to_string(record.query.question_type)},
                              {"text", record.query.text},
                              {"anchor", anchor_to_json(record.query.anchor)}};
    j["preferred"] = record.preferred;
    j["dispreferred"] = record.dispreferred;
    j["dispreferred_source"] = source_to_json(record.dispreferred_source);
    j["captions"] = record.captions;
    if (record.verdict) {
        j["verdict"] = ordered_json{{"task1", to_string(record.verdict->task1)},
                                    {"task2", to_string(record.verdict->task2)},
                                    {"task3", to_string(record.verdict->task3)},
                                    {"raw_text", record.verdict->raw_text}};
    }
    if (record.kept) j["kept"] = *record.kept;
    return j.dump();
}

PreferenceRecord parse_record(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad record json: ") + e.what());
    }
    try {
        PreferenceRecord r;
        const int version = j.at("schema_version").get<int>();
        if (version != kSchemaVersion) {
            throw ParseError("unsupported schema_version " + std::to_string(version));
        }
        r.record_id = j.at("record_id").get<std::string>();
        const auto& q = j.at("query");
        r.query.query_id = q.at("query_id").get<std::string>();
        r.query.video_id = q.at("video_id").get<std::string>();
        r.query.question_type = question_type_from_string(q.at("question_type").get<std::string>());
        r.query.text = q.at("text").get<std::string>();
        r.query.anchor.video_id = q.at("anchor").at("video_id").get<std::string>();
        r.query.anchor.indices = indices_from_json(q.at("anchor").at("indices"));
        r.preferred = j.at("preferred").get<std::string>();
        r.dispreferred = j.at("dispreferred").get<std::string>();
        const auto& s = j.at("dispreferred_source");
        r.dispreferred_source.video_id = s.at("video_id").get<std::string>();
        r.dispreferred_source.indices = indices_from_json(s.at("indices"));
        r.dispreferred_source.strategy = strategy_from_string(s.at("strategy").get<std::string>());
        r.captions = j.at("captions").get<std::vector<std::string>>();
        if (j.contains("verdict")) {
            const auto& v = j.at("verdict");
            JudgeVerdict verdict;
            verdict.task1 = judge_answer_from_string(v.at("task1").get<std::string>());
            verdict.task2 = judge_answer_from_string(v.at("task2").get<std::string>());
            verdict.task3 = judge_answer_from_string(v.at("task3").get<std::string>());
            verdict.raw_text = v.at("raw_text").get<std::string>();
            r.verdict = verdict;
        }
        if (j.contains("kept")) r.kept = j.at("kept").get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad record json: ") + e.what());
    }
}

std::string serialize_manifest(const DatasetManifest& manifest) {
    ordered_json j;
    j["schema_version"] = manifest.schema_version;
    j["seed"] = manifest.seed;
    ordered_json mix = ordered_json::object();
    for (const auto& [k, v] : manifest.mix_counts) mix[k] = v;
    j["mix_counts"] = mix;
    j["records"] = manifest.records;
    return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        DatasetManifest m;
        m.schema_version = j.at("schema_version").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [k, v] : j.at("mix_counts").items()) {
            m.mix_counts[k] = v.get<std::uint64_t>();
        }
        m.records = j.at("records").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad manifest json: ") + e.what());
    }
}

std::vector<PreferenceRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::vector<PreferenceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(parse_record(line));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_dataset(const std::string& path, const std::vector<PreferenceRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write dataset: " + path);
    for (const auto& r : records) out << serialize_record(r) << '\n';
}

}  // namespace tpo
