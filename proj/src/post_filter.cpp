#include "tpo/post_filter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tpo/errors.hpp"

namespace tpo {

namespace {

std::vector<std::string> answer_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (word == "yes" || word == "no" || word == "equally") out.push_back(word);
        word.clear();
    };
    for (char c : line) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

JudgeAnswer to_answer(const std::string& token) {
    if (token == "yes") return JudgeAnswer::Yes;
    if (token == "no") return JudgeAnswer::No;
    return JudgeAnswer::Equally;
}

}  // namespace

JudgeVerdict parse_verdict(const std::string& raw) {
    if (raw.empty()) throw VerdictParseError("empty judge output");

    std::vector<std::vector<std::string>> qualifying;
    std::istringstream is(raw);
    std::string line;
    while (std::getline(is, line)) {
        auto tokens = answer_tokens(line);
        if (!tokens.empty()) qualifying.push_back(std::move(tokens));
    }

    std::vector<std::string> picked;
    if (qualifying.size() >= 3) {
        for (std::size_t i = 0; i < 3; ++i) picked.push_back(qualifying[i].front());
    } else {
        for (const auto& tokens : qualifying) {
            for (const auto& t : tokens) picked.push_back(t);
        }
    }
    if (picked.size() < 3) throw VerdictParseError("could not extract three answers: " + raw);
    if (picked[1] == "equally" || picked[2] == "equally") {
        throw VerdictParseError("Equally is only valid for task1: " + raw);
    }

    JudgeVerdict v;
    v.task1 = to_answer(picked[0]);
    v.task2 = to_answer(picked[1]);
    v.task3 = to_answer(picked[2]);
    v.raw_text = raw;
    return v;
}

bool decide(const JudgeVerdict& verdict) {
    return verdict.task1 == JudgeAnswer::Yes && verdict.task2 == JudgeAnswer::No &&
           verdict.task3 == JudgeAnswer::Yes;
}

std::size_t FilterResult::kept_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(),
                      [](const PreferenceRecord& r) { return r.kept == true; }));
}

FilterResult filter_pairs(const std::vector<PreferenceRecord>& records, Gateway& gateway) {
    FilterResult result;
    result.records.reserve(records.size());
    for (const auto& input : records) {
        PreferenceRecord record = input;
        try {
            const std::string raw = gateway.judge_pair(record);
            try {
                const JudgeVerdict verdict = parse_verdict(raw);
                record.verdict = verdict;
                record.kept = decide(verdict);
                if (!*record.kept) {
                    std::string reason = "judge-dropped";
                    if (verdict.task1 != JudgeAnswer::Yes) {
                        reason = "dispreferred-better-or-equal";
                    } else if (verdict.task2 != JudgeAnswer::No) {
                        reason = "preferred-contradicts-captions";
                    } else {
                        reason = "preferred-incorrect";
                    }
                    result.rejects.push_back({record.record_id, reason, raw});
                }
            } catch (const VerdictParseError&) {
                record.verdict.reset();
                record.kept = false;
                result.rejects.push_back({record.record_id, "unparseable", raw});
            }
        } catch (const Error& e) {
            // gateway failure after retries, or a record that was not judge-ready
            record.verdict.reset();
            record.kept = false;
            result.rejects.push_back({record.record_id, "judge-unavailable", e.what()});
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

void write_reject_log(const std::string& path, const std::vector<RejectEntry>& rejects) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write reject log: " + path);
    for (const auto& r : rejects) {
        nlohmann::ordered_json j;
        j["record_id"] = r.record_id;
        j["reason"] = r.reason;
        j["raw_text"] = r.raw_text;
        out << j.dump() << '\n';
    }
}

}  // namespace tpo
