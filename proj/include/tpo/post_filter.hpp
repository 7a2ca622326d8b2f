#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tpo/core_model.hpp"
#include "tpo/gateway.hpp"

namespace tpo {

// Extracts the three task answers from raw judge text.
// Rules: split into lines; a line qualifies if it contains a standalone
// yes/no/equally token (case-insensitive, split on non-alphabetic chars).
// With >= 3 qualifying lines the first token of each of the first three maps
// to task1..task3; otherwise the qualifying lines' tokens are flattened in
// order and the first three are used. task2/task3 reject "Equally".
JudgeVerdict parse_verdict(const std::string& raw);

// Keep iff task1 == Yes and task2 == No and task3 == Yes: the preferred
// response is better, does not contradict the captions, and is correct.
bool decide(const JudgeVerdict& verdict);

struct RejectEntry {
    std::string record_id;
    std::string reason;
    std::string raw_text;

    bool operator==(const RejectEntry&) const = default;
};

struct FilterResult {
    // every input record, in input order, with kept set (verdict set iff
    // the judge output parsed)
    std::vector<PreferenceRecord> records;
    std::vector<RejectEntry> rejects;

    std::size_t kept_count() const;
};

// Judges each record through the gateway and applies decide(). Parse
// failures mark the record kept=false with reason "unparseable"; gateway
// failures after retries use reason "judge-unavailable". Nothing is
// silently discarded.
FilterResult filter_pairs(const std::vector<PreferenceRecord>& records, Gateway& gateway);

void write_reject_log(const std::string& path, const std::vector<RejectEntry>& rejects);

}  // namespace tpo
