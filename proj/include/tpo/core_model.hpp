#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tpo {

constexpr int kSchemaVersion = 1;

// How the dis-preferred frame set was produced from the anchor.
enum class Strategy { Irrelevant, Incomplete };

enum class QuestionType {
    TemporalReasoning,
    ActionReasoning,
    CausalReasoning,
    InformationExtraction,
    Descriptive,
    Summarization,
    ObjectReasoning,
    SpatialReasoning,
};

constexpr int kNumQuestionTypes = 8;

const char* to_string(Strategy s);
const char* to_string(QuestionType t);
Strategy strategy_from_string(const std::string& s);
QuestionType question_type_from_string(const std::string& s);

// One source video. Frames are identified by integer index into the decoded
// frame sequence; frame_refs[i] is the locator (file path or synthetic
// descriptor) for index i.
struct VideoRecord {
    std::string video_id;
    std::uint32_t frame_count = 0;
    std::vector<std::string> frame_refs;
    std::string keyword;
    std::optional<double> duration_s;

    bool operator==(const VideoRecord&) const = default;
};

// The grounded frame set a query is asked about.
struct AnchorSegment {
    std::string video_id;
    std::vector<std::uint32_t> indices;  // strictly increasing

    bool operator==(const AnchorSegment&) const = default;
};

// Frames fed to the model to elicit the dis-preferred response.
// Irrelevant: disjoint from the anchor. Incomplete: proper subset of it.
struct ManipulatedFrameSet {
    std::string video_id;
    std::vector<std::uint32_t> indices;  // strictly increasing
    Strategy strategy = Strategy::Irrelevant;

    bool operator==(const ManipulatedFrameSet&) const = default;
};

struct QueryItem {
    std::string query_id;
    std::string video_id;
    QuestionType question_type = QuestionType::TemporalReasoning;
    std::string text;
    AnchorSegment anchor;

    bool operator==(const QueryItem&) const = default;
};

enum class JudgeAnswer { Yes, No, Equally };

const char* to_string(JudgeAnswer a);
JudgeAnswer judge_answer_from_string(const std::string& s);

// Parsed three-task answers from the post-filter judge.
struct JudgeVerdict {
    JudgeAnswer task1 = JudgeAnswer::Equally;  // preferred better than dis-preferred?
    JudgeAnswer task2 = JudgeAnswer::Yes;      // preferred contradicts captions / ambiguous?
    JudgeAnswer task3 = JudgeAnswer::No;       // preferred correct?
    std::string raw_text;

    bool operator==(const JudgeVerdict&) const = default;
};

// One preference tuple: query, preferred/dis-preferred responses, the
// manipulation that produced the dis-preferred one, and filter state.
struct PreferenceRecord {
    std::string record_id;
    QueryItem query;
    std::string preferred;
    std::string dispreferred;
    ManipulatedFrameSet dispreferred_source;
    std::vector<std::string> captions;  // one per anchor frame
    std::optional<JudgeVerdict> verdict;
    std::optional<bool> kept;  // set iff verdict is set

    bool operator==(const PreferenceRecord&) const = default;
};

struct DatasetManifest {
    std::vector<std::string> records;  // record ids, in dataset file order
    std::map<std::string, std::uint64_t> mix_counts;
    std::uint64_t seed = 0;
    int schema_version = kSchemaVersion;

    bool operator==(const DatasetManifest&) const = default;
};

struct Violation {
    std::string code;
    std::string message;

    bool operator==(const Violation&) const = default;
};

// Content-hash ids. The record id also covers the manipulation so that two
// strategies drawn for the same query stay distinct.
std::string make_query_id(const std::string& video_id,
                          const std::vector<std::uint32_t>& anchor_indices,
                          const std::string& question_text);
std::string make_record_id(const QueryItem& query, const ManipulatedFrameSet& source);

// Empty result iff every type invariant holds and the record references
// `video`. Violations are reported, never thrown.
std::vector<Violation> validate_record(const PreferenceRecord& record, const VideoRecord& video);

std::vector<Violation> validate_video(const VideoRecord& video);

// Canonical one-line JSON. Field order is fixed:
//   schema_version, record_id, query{query_id, video_id, question_type,
//   text, anchor{video_id, indices}}, preferred, dispreferred,
//   dispreferred_source{video_id, indices, strategy}, captions,
//   verdict{task1, task2, task3, raw_text}, kept
// Unset optional fields are omitted entirely. Ids must not contain
// newlines (SerializationError otherwise). parse_record inverts it.
std::string serialize_record(const PreferenceRecord& record);
PreferenceRecord parse_record(const std::string& line);

// Manifest file: a single JSON document, keys in fixed order
// (schema_version, seed, mix_counts, records).
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);

std::vector<PreferenceRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<PreferenceRecord>& records);

}  // namespace tpo
