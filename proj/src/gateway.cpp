#include "tpo/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/prng.hpp"

namespace tpo {

namespace fs = std::filesystem;

const char* to_string(Role role) {
    switch (role) {
        case Role::Captioner: return "captioner";
        case Role::QuestionGen: return "questiongen";
        case Role::Responder: return "responder";
        case Role::Judge: return "judge";
    }
    return "?";
}

Role role_from_string(const std::string& s) {
    if (s == "captioner") return Role::Captioner;
    if (s == "questiongen") return Role::QuestionGen;
    if (s == "responder") return Role::Responder;
    if (s == "judge") return Role::Judge;
    throw ConfigError("unknown gateway role: " + s);
}

double default_temperature(Role role) {
    return role == Role::Responder ? 0.2 : 0.0;
}

void GatewayConfig::validate() const {
    if (max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
    if (backoff_base_ms == 0) throw ConfigError("backoff_base_ms must be positive");
    if (!stub_mode) {
        for (const auto role : {Role::Captioner, Role::QuestionGen, Role::Responder, Role::Judge}) {
            if (!endpoints.count(role) || endpoints.at(role).url.empty()) {
                throw ConfigError(std::string("missing endpoint url for role ") + to_string(role));
            }
        }
    }
}

GenerationRequest make_request(Role role, std::string prompt, std::vector<std::string> attachments,
                               std::uint32_t max_tokens, double temperature) {
    const bool needs_frames = role == Role::Captioner || role == Role::Responder;
    if (needs_frames && attachments.empty()) {
        throw ConfigError(std::string(to_string(role)) + " requests require >= 1 attachment");
    }
    if (!needs_frames && !attachments.empty()) {
        throw ConfigError(std::string(to_string(role)) + " requests are text-only");
    }
    GenerationRequest r;
    r.role = role;
    r.prompt = std::move(prompt);
    r.attachments = std::move(attachments);
    r.max_tokens = max_tokens;
    r.temperature = temperature;

    std::ostringstream key;
    key << to_string(role) << '\x1f' << r.prompt << '\x1f';
    for (const auto& a : r.attachments) key << a << '\x1e';
    key << '\x1f' << max_tokens << '\x1f';
    char temp_buf[32];
    std::snprintf(temp_buf, sizeof(temp_buf), "%.6f", temperature);
    key << temp_buf;
    r.request_key = hex64(fnv1a64(key.str()));
    return r;
}

// ---------------------------------------------------------------------------
// prompt templates

const char* kQueryGenTemplate =
    "<Video Caption>\n"
    "\n"
    "Using the caption of a video, create a question-answer pair that focuses on <Task Prompt>.\n"
    "\n"
    "Please generate a question tailored to the given caption. If it's inappropriate to generate "
    "such question, please output None.\n"
    "Output format:\n"
    "Q: <question>\n"
    "A: <answer>\n";

const char* kPostFilterTemplate =
    "<Video Caption>\n"
    "\n"
    "Question: <Query>\n"
    "Answer1: <Preferred Answer>\n"
    "Answer2: <Dis-Preferred Answer>\n"
    "\n"
    "Task1: You are given a question, the golden answer and related captions. Is answer1 better "
    "than answer2?  Please answer with Yes or No or Equally.\n"
    "\n"
    "Task2: Please check if this question and Answer1 contradicts to any part of the golden "
    "caption or this question might have another answer different from the given answer. Please "
    "respond with Yes or No.\n"
    "\n"
    "Task3: Is the Answer1 is correct given the question and golden caption? Please respond with "
    "Yes or No.\n";

const char* task_prompt(QuestionType type) {
    switch (type) {
        case QuestionType::TemporalReasoning:
            return "temporal reasoning about when events happen and in what order";
        case QuestionType::ActionReasoning:
            return "reasoning about the actions being performed";
        case QuestionType::CausalReasoning:
            return "causal reasoning about why events happen";
        case QuestionType::InformationExtraction:
            return "extracting specific information shown in the video";
        case QuestionType::Descriptive:
            return "describing what is visible in the video";
        case QuestionType::Summarization:
            return "summarizing the overall content of the video";
        case QuestionType::ObjectReasoning:
            return "reasoning about the objects that appear";
        case QuestionType::SpatialReasoning:
            return "spatial reasoning about where things are located";
    }
    return "general video understanding";
}

namespace {

std::string replace_all(std::string text, std::string_view needle, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        out += lines[i];
    }
    return out;
}

}  // namespace

std::string build_query_gen_prompt(const std::vector<std::string>& captions, QuestionType type) {
    std::string prompt = replace_all(kQueryGenTemplate, "<Video Caption>", join_lines(captions));
    return replace_all(std::move(prompt), "<Task Prompt>", task_prompt(type));
}

std::string build_post_filter_prompt(const PreferenceRecord& record) {
    std::string prompt =
        replace_all(kPostFilterTemplate, "<Video Caption>", join_lines(record.captions));
    prompt = replace_all(std::move(prompt), "<Query>", record.query.text);
    prompt = replace_all(std::move(prompt), "<Preferred Answer>", record.preferred);
    return replace_all(std::move(prompt), "<Dis-Preferred Answer>", record.dispreferred);
}

// ---------------------------------------------------------------------------
// stub backend

const std::vector<std::string>& StubBackend::word_list() {
    static const std::vector<std::string> words = {
        "amber",   "anchor",  "basket",  "bridge",  "candle",  "canyon",  "carpet",  "cellar",
        "circle",  "copper",  "corner",  "crystal", "curtain", "desert",  "drawer",  "engine",
        "fabric",  "falcon",  "garden",  "glacier", "hammer",  "harbor",  "hollow",  "island",
        "jacket",  "kettle",  "ladder",  "lantern", "magnet",  "marble",  "meadow",  "mirror",
        "needle",  "orchard", "pebble",  "pillar",  "planet",  "pocket",  "prairie", "puzzle",
        "ribbon",  "river",   "rocket",  "saddle",  "shadow",  "shelter", "signal",  "silver",
        "spiral",  "statue",  "summit",  "sunset",  "thunder", "timber",  "tunnel",  "valley",
        "velvet",  "vessel",  "violet",  "walnut",  "whistle", "willow",  "window",  "zephyr"};
    return words;
}

namespace {

// "[[stub:<role>:<payload>]]" scoped to the requesting role; "\n" unescaped.
std::optional<std::string> stub_override(const GenerationRequest& request) {
    const std::string marker = std::string("[[stub:") + to_string(request.role) + ":";
    const auto begin = request.prompt.find(marker);
    if (begin == std::string::npos) return std::nullopt;
    const auto end = request.prompt.find("]]", begin);
    if (end == std::string::npos) return std::nullopt;
    std::string payload = request.prompt.substr(begin + marker.size(), end - begin - marker.size());
    return replace_all(std::move(payload), "\\n", "\n");
}

}  // namespace

GenerationResult StubBackend::complete(const GenerationRequest& request) {
    GenerationResult result;
    result.backend_id = id();
    if (auto forced = stub_override(request)) {
        result.text = *forced;
        return result;
    }
    switch (request.role) {
        case Role::Captioner: {
            result.text = "stub-caption(" + request.attachments.front() + ")";
            break;
        }
        case Role::QuestionGen: {
            const std::string h = hex64(fnv1a64(request.prompt));
            result.text = "Q: stub-question-" + h + " about the highlighted segment?\n" +
                          "A: stub-answer-" + h;
            break;
        }
        case Role::Responder: {
            std::string material = request.prompt + "|";
            for (const auto& a : request.attachments) material += a + ";";
            const std::uint64_t h = fnv1a64(material);
            const auto& words = word_list();
            result.text = "stub answer: " + words[(h >> 0) & 63] + " " + words[(h >> 6) & 63] +
                          " " + words[(h >> 12) & 63] + " " + words[(h >> 18) & 63];
            break;
        }
        case Role::Judge: {
            result.text = "Task1: Yes\nTask2: No\nTask3: Yes";
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// http backend

namespace {

std::string base64_encode(const std::string& bytes) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += tbl[(n >> 6) & 63];
        out += tbl[n & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += tbl[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

// scheme://host[:port] and path split for httplib
struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint url missing scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json attachment_part(const std::string& locator) {
    std::string url = locator;
    std::ifstream file(locator, std::ios::binary);
    if (file) {
        std::ostringstream bytes;
        bytes << file.rdbuf();
        url = "data:image/jpeg;base64," + base64_encode(bytes.str());
    }
    return nlohmann::json{{"type", "image_url"}, {"image_url", {{"url", url}}}};
}

}  // namespace

HttpBackend::HttpBackend(std::map<Role, EndpointConfig> endpoints)
    : endpoints_(std::move(endpoints)) {}

GenerationResult HttpBackend::complete(const GenerationRequest& request) {
    const auto it = endpoints_.find(request.role);
    if (it == endpoints_.end()) {
        throw ConfigError(std::string("no endpoint configured for role ") +
                          to_string(request.role));
    }
    const EndpointConfig& ep = it->second;

    nlohmann::json content;
    if (request.attachments.empty()) {
        content = request.prompt;
    } else {
        content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", request.prompt}});
        for (const auto& a : request.attachments) content.push_back(attachment_part(a));
    }
    const nlohmann::json body = {{"model", ep.model},
                                 {"messages", {{{"role", "user"}, {"content", content}}}},
                                 {"max_tokens", request.max_tokens},
                                 {"temperature", request.temperature}};

    const SplitUrl url = split_url(ep.url);
    httplib::Client client(url.origin);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!ep.auth_env.empty()) {
        if (const char* token = std::getenv(ep.auth_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }
    const auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("no response from " + ep.url);
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("http " + std::to_string(res->status) + " from " + ep.url);
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        GenerationResult out;
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        out.backend_id = id();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed chat response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// gateway

Gateway::Gateway(GatewayConfig cfg)
    : Gateway(cfg, cfg.stub_mode
                       ? std::shared_ptr<Backend>(std::make_shared<StubBackend>())
                       : std::shared_ptr<Backend>(std::make_shared<HttpBackend>(cfg.endpoints))) {}

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
    cfg_.validate();
    if (!cfg_.cache_dir.empty()) fs::create_directories(cfg_.cache_dir);
}

namespace {

struct SlotGuard {
    std::mutex& mutex;
    std::condition_variable& cv;
    std::uint32_t& in_flight;

    ~SlotGuard() {
        {
            std::lock_guard lock(mutex);
            --in_flight;
        }
        cv.notify_one();
    }
};

}  // namespace

GenerationResult Gateway::complete(const GenerationRequest& request) {
    const fs::path cache_file =
        cfg_.cache_dir.empty() ? fs::path{} : fs::path(cfg_.cache_dir) / (request.request_key + ".json");

    if (!cfg_.cache_dir.empty() && fs::exists(cache_file)) {
        std::ifstream in(cache_file);
        nlohmann::json j;
        try {
            in >> j;
            GenerationResult out;
            out.text = j.at("text").get<std::string>();
            out.backend_id = j.at("backend_id").get<std::string>();
            out.cached = true;
            return out;
        } catch (const nlohmann::json::exception&) {
            // unreadable entry: fall through and regenerate
        }
    }

    {
        std::unique_lock lock(slots_mutex_);
        slots_cv_.wait(lock, [this] { return in_flight_ < cfg_.max_in_flight; });
        ++in_flight_;
    }
    SlotGuard guard{slots_mutex_, slots_cv_, in_flight_};

    const auto start = std::chrono::steady_clock::now();
    GenerationResult result = attempt_with_retries(request);
    result.latency_ms = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                              start)
            .count());
    if (result.text.empty()) {
        throw EmptyGeneration(std::string("empty output for role ") + to_string(request.role));
    }

    if (!cfg_.cache_dir.empty()) {
        nlohmann::ordered_json j;
        j["request_key"] = request.request_key;
        j["role"] = to_string(request.role);
        j["text"] = result.text;
        j["backend_id"] = result.backend_id;
        const fs::path tmp = cache_file.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << j.dump() << '\n';
        }
        fs::rename(tmp, cache_file);
    }
    if (!cfg_.transcript_path.empty()) {
        std::lock_guard lock(transcript_mutex_);
        std::ofstream out(cfg_.transcript_path, std::ios::app);
        nlohmann::ordered_json j;
        j["request_key"] = request.request_key;
        j["role"] = to_string(request.role);
        j["prompt"] = request.prompt;
        j["attachments"] = request.attachments;
        j["text"] = result.text;
        out << j.dump() << '\n';
    }
    return result;
}

GenerationResult Gateway::attempt_with_retries(const GenerationRequest& request) {
    for (std::uint32_t attempt = 0;; ++attempt) {
        try {
            return backend_->complete(request);
        } catch (const TransportError& e) {
            if (attempt >= cfg_.retry_limit) {
                throw GatewayError(to_string(request.role),
                                   std::string("retries exhausted: ") + e.what());
            }
            const std::uint64_t delay =
                static_cast<std::uint64_t>(cfg_.backoff_base_ms) << attempt;
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
}

std::vector<std::string> Gateway::caption_frames(const std::vector<std::string>& frames) {
    if (frames.empty()) throw ConfigError("caption_frames requires a non-empty frame list");
    std::vector<std::string> captions;
    captions.reserve(frames.size());
    for (const auto& frame : frames) {
        const auto request = make_request(
            Role::Captioner, "Describe this video frame in one sentence.", {frame}, 128,
            default_temperature(Role::Captioner));
        captions.push_back(complete(request).text);
    }
    return captions;
}

std::vector<QuestionDraft> parse_question_output(const std::string& text) {
    std::string trimmed = text;
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    trimmed.erase(trimmed.begin(), std::find_if(trimmed.begin(), trimmed.end(), not_space));
    trimmed.erase(std::find_if(trimmed.rbegin(), trimmed.rend(), not_space).base(),
                  trimmed.end());
    if (trimmed == "None") return {};

    std::vector<QuestionDraft> out;
    std::istringstream is(trimmed);
    std::string line;
    QuestionDraft current;
    bool have_question = false;
    auto flush = [&] {
        if (have_question && !current.question.empty()) out.push_back(current);
        current = {};
        have_question = false;
    };
    while (std::getline(is, line)) {
        if (line.rfind("Q:", 0) == 0) {
            flush();
            current.question = line.substr(2);
            have_question = true;
        } else if (line.rfind("A:", 0) == 0 && have_question) {
            current.answer = line.substr(2);
        }
    }
    flush();
    if (out.empty()) throw ParseError("question generator output has no Q: line: " + text);
    for (auto& draft : out) {
        const auto strip = [](std::string& s) {
            const auto b = s.find_first_not_of(' ');
            const auto e = s.find_last_not_of(' ');
            s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        strip(draft.question);
        strip(draft.answer);
    }
    return out;
}

std::vector<QuestionDraft> Gateway::generate_questions(const std::vector<std::string>& captions,
                                                       QuestionType type) {
    if (captions.empty()) throw ConfigError("generate_questions requires captions");
    const auto request = make_request(Role::QuestionGen, build_query_gen_prompt(captions, type),
                                      {}, 256, default_temperature(Role::QuestionGen));
    return parse_question_output(complete(request).text);
}

std::string Gateway::generate_response(const QueryItem& query,
                                       const std::vector<std::string>& frame_locators) {
    if (frame_locators.empty()) throw ConfigError("generate_response requires frames");
    const auto request =
        make_request(Role::Responder, "Answer the question about this video.\nQuestion: " +
                                          query.text,
                     frame_locators, 256, default_temperature(Role::Responder));
    std::string text = complete(request).text;
    const auto b = text.find_first_not_of(" \t\r\n");
    const auto e = text.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string{} : text.substr(b, e - b + 1);
}

std::string Gateway::judge_pair(const PreferenceRecord& record) {
    if (record.captions.empty()) throw ConfigError("judge_pair requires captions");
    if (record.preferred.empty() || record.dispreferred.empty()) {
        throw ConfigError("judge_pair requires both responses");
    }
    const auto request = make_request(Role::Judge, build_post_filter_prompt(record), {}, 64,
                                      default_temperature(Role::Judge));
    return complete(request).text;
}

}  // namespace tpo
