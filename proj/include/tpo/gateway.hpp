#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <string>
#include <vector>

#include "tpo/core_model.hpp"

namespace tpo {

enum class Role { Captioner, QuestionGen, Responder, Judge };

const char* to_string(Role role);
Role role_from_string(const std::string& s);

// Default sampling temperatures: 0 for Judge/QuestionGen, 0.2 for Responder.
double default_temperature(Role role);

struct GenerationRequest {
    Role role = Role::Captioner;
    std::string prompt;
    std::vector<std::string> attachments;  // frame locators; empty for text-only roles
    std::uint32_t max_tokens = 256;
    double temperature = 0.0;
    std::string request_key;  // content hash; filled by make_request
};

// Validates the role/attachment invariant (Captioner/Responder carry >= 1
// attachment, QuestionGen/Judge none) and computes the cache key.
GenerationRequest make_request(Role role, std::string prompt, std::vector<std::string> attachments,
                               std::uint32_t max_tokens, double temperature);

struct GenerationResult {
    std::string text;
    std::string backend_id;
    std::uint64_t latency_ms = 0;
    bool cached = false;
};

struct EndpointConfig {
    std::string url;       // e.g. http://host:port/v1/chat/completions
    std::string auth_env;  // env var holding the bearer token (never the token itself)
    std::string model = "default";
};

struct GatewayConfig {
    std::map<Role, EndpointConfig> endpoints;
    std::uint32_t max_in_flight = 4;
    std::uint32_t retry_limit = 2;
    std::uint32_t backoff_base_ms = 100;
    std::string cache_dir;         // empty disables the on-disk cache
    bool stub_mode = true;
    std::string transcript_path;   // stub-run transcript JSONL; empty disables

    void validate() const;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerationResult complete(const GenerationRequest& request) = 0;
    virtual std::string id() const = 0;
};

// Deterministic hermetic backend: every output is a pure function of the
// request. Contracts (golden-tested):
//   Captioner   -> "stub-caption(<locator>)" for its single attachment
//   QuestionGen -> "Q: stub-question-<h> about the highlighted segment?"
//                  "\nA: stub-answer-<h>"  with h = hex64(fnv1a64(prompt))
//   Responder   -> "stub answer: <w1> <w2> <w3> <w4>", words picked from a
//                  fixed 64-word list by fnv1a64(prompt + "|" + attachments)
//   Judge       -> "Task1: Yes\nTask2: No\nTask3: Yes"
// A prompt may carry a role-scoped override marker "[[stub:<role>:<payload>]]"
// (role in captioner|questiongen|responder|judge, "\n" escapes expanded);
// the matching role echoes the payload verbatim.
class StubBackend : public Backend {
public:
    GenerationResult complete(const GenerationRequest& request) override;
    std::string id() const override { return "stub"; }

    static const std::vector<std::string>& word_list();
};

// Chat-completions HTTP JSON backend. POSTs {model, messages, max_tokens,
// temperature}; attachments become image_url parts (base64 data URL when the
// locator is a readable file, the locator string otherwise). Bearer token is
// read from the endpoint's auth_env. Transport failures throw TransportError
// (retried by the gateway).
class HttpBackend : public Backend {
public:
    explicit HttpBackend(std::map<Role, EndpointConfig> endpoints);
    GenerationResult complete(const GenerationRequest& request) override;
    std::string id() const override { return "http"; }

private:
    std::map<Role, EndpointConfig> endpoints_;
};

struct QuestionDraft {
    std::string question;
    std::string answer;

    bool operator==(const QuestionDraft&) const = default;
};

// Verbatim prompt templates. Placeholders are substituted literally.
extern const char* kQueryGenTemplate;   // <Video Caption>, <Task Prompt>
extern const char* kPostFilterTemplate; // <Video Caption>, <Query>,
                                        // <Preferred Answer>, <Dis-Preferred Answer>

const char* task_prompt(QuestionType type);

std::string build_query_gen_prompt(const std::vector<std::string>& captions, QuestionType type);
std::string build_post_filter_prompt(const PreferenceRecord& record);

// Uniform client for the four generation roles. Enforces max_in_flight,
// retries transport failures with exponential backoff (k-th retry waits
// backoff_base_ms * 2^(k-1)), and caches results by request_key.
class Gateway {
public:
    explicit Gateway(GatewayConfig cfg);
    Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend);

    GenerationResult complete(const GenerationRequest& request);

    // One caption per frame, in frame order.
    std::vector<std::string> caption_frames(const std::vector<std::string>& frames);

    // Parses "Q: ... A: ..." pairs; a bare "None" yields an empty list.
    std::vector<QuestionDraft> generate_questions(const std::vector<std::string>& captions,
                                                  QuestionType type);

    // Answer text for the query conditioned on exactly the given frames.
    std::string generate_response(const QueryItem& query,
                                  const std::vector<std::string>& frame_locators);

    // Raw judge text for post_filter::parse_verdict.
    std::string judge_pair(const PreferenceRecord& record);

    const GatewayConfig& config() const { return cfg_; }

private:
    GenerationResult attempt_with_retries(const GenerationRequest& request);

    GatewayConfig cfg_;
    std::shared_ptr<Backend> backend_;
    std::mutex slots_mutex_;
    std::condition_variable slots_cv_;
    std::uint32_t in_flight_ = 0;
    std::mutex transcript_mutex_;
};

// Parses the question generator's output format. Throws ParseError when the
// text is neither "None" nor contains a "Q:" line.
std::vector<QuestionDraft> parse_question_output(const std::string& text);

}  // namespace tpo
