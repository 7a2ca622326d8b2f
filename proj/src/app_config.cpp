#include "tpo/app_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tpo/errors.hpp"

namespace tpo {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key " + path + "." + key);
    }
}

void parse_sampler(const json& j, SamplerConfig& cfg) {
    check_keys(j, {"anchor_len", "anchor_mode", "irrelevant_len", "incomplete_fraction"},
               "pipeline.sampler");
    cfg.anchor_len = j.value("anchor_len", cfg.anchor_len);
    if (j.contains("anchor_mode")) {
        const auto mode = j.at("anchor_mode").get<std::string>();
        if (mode == "contiguous") {
            cfg.anchor_mode = AnchorMode::ContiguousSegment;
        } else if (mode == "full") {
            cfg.anchor_mode = AnchorMode::FullVideo;
        } else {
            throw ConfigError("pipeline.sampler.anchor_mode must be contiguous or full");
        }
    }
    if (j.contains("irrelevant_len")) {
        cfg.irrelevant_len = j.at("irrelevant_len").get<std::uint32_t>();
    } else {
        cfg.irrelevant_len = cfg.anchor_len;
    }
    cfg.incomplete_fraction = j.value("incomplete_fraction", cfg.incomplete_fraction);
}

void parse_gateway(const json& j, GatewayConfig& cfg) {
    check_keys(j,
               {"stub_mode", "max_in_flight", "retry_limit", "backoff_base_ms", "cache_dir",
                "transcript", "endpoints"},
               "gateway");
    cfg.stub_mode = j.value("stub_mode", cfg.stub_mode);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.retry_limit = j.value("retry_limit", cfg.retry_limit);
    cfg.backoff_base_ms = j.value("backoff_base_ms", cfg.backoff_base_ms);
    cfg.cache_dir = j.value("cache_dir", cfg.cache_dir);
    cfg.transcript_path = j.value("transcript", cfg.transcript_path);
    if (j.contains("endpoints")) {
        for (const auto& [name, ep] : j.at("endpoints").items()) {
            const Role role = role_from_string(name);
            check_keys(ep, {"url", "auth_env", "model"}, "gateway.endpoints." + name);
            EndpointConfig e;
            e.url = ep.value("url", std::string{});
            e.auth_env = ep.value("auth_env", std::string{});
            e.model = ep.value("model", std::string{"default"});
            cfg.endpoints[role] = e;
        }
    }
}

void parse_pipeline(const json& j, PipelineConfig& cfg) {
    check_keys(j,
               {"manifest", "target_pairs", "mix", "type_weights", "output", "checkpoint",
                "workers", "oversample_factor", "pairs_per_video", "seed", "sampler"},
               "pipeline");
    cfg.manifest_path = j.value("manifest", cfg.manifest_path);
    cfg.target_pairs = j.value("target_pairs", cfg.target_pairs);
    if (j.contains("mix")) {
        check_keys(j.at("mix"), {"incomplete", "irrelevant"}, "pipeline.mix");
        cfg.ratio_incomplete = j.at("mix").value("incomplete", cfg.ratio_incomplete);
        cfg.ratio_irrelevant = j.at("mix").value("irrelevant", cfg.ratio_irrelevant);
    }
    if (j.contains("type_weights")) {
        std::vector<double> weights(kNumQuestionTypes, 0.0);
        for (const auto& [name, w] : j.at("type_weights").items()) {
            const QuestionType t = question_type_from_string(name);
            weights[static_cast<std::size_t>(t)] = w.get<double>();
        }
        cfg.type_weights = weights;
    }
    cfg.output_path = j.value("output", cfg.output_path);
    cfg.checkpoint_path = j.value("checkpoint", cfg.checkpoint_path);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.oversample_factor = j.value("oversample_factor", cfg.oversample_factor);
    cfg.pairs_per_video = j.value("pairs_per_video", cfg.pairs_per_video);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("sampler")) parse_sampler(j.at("sampler"), cfg.sampler);
}

void parse_train(const json& j, TrainConfig& cfg) {
    check_keys(j,
               {"beta", "alpha", "learning_rate", "batch_size", "epochs", "seed", "optimizer",
                "schedule", "warmup_ratio", "num_buckets"},
               "train");
    cfg.beta = j.value("beta", cfg.beta);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("optimizer")) {
        const auto name = j.at("optimizer").get<std::string>();
        if (name == "sgd") {
            cfg.optimizer = Optimizer::PlainSGD;
        } else if (name == "adam") {
            cfg.optimizer = Optimizer::AdamLike;
        } else {
            throw ConfigError("train.optimizer must be sgd or adam");
        }
    }
    if (j.contains("schedule")) {
        const auto name = j.at("schedule").get<std::string>();
        if (name == "constant") {
            cfg.schedule = LrSchedule::Constant;
        } else if (name == "cosine") {
            cfg.schedule = LrSchedule::CosineWarmup;
        } else {
            throw ConfigError("train.schedule must be constant or cosine");
        }
    }
    cfg.warmup_ratio = j.value("warmup_ratio", cfg.warmup_ratio);
    cfg.num_buckets = j.value("num_buckets", cfg.num_buckets);
}

void parse_synthetic(const json& j, SyntheticSpec& cfg) {
    check_keys(j,
               {"num_videos", "frames_per_video", "vocab_size", "needle_token", "pairs_per_video",
                "seed"},
               "synthetic");
    cfg.num_videos = j.value("num_videos", cfg.num_videos);
    cfg.frames_per_video = j.value("frames_per_video", cfg.frames_per_video);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.needle_token = j.value("needle_token", cfg.needle_token);
    cfg.pairs_per_video = j.value("pairs_per_video", cfg.pairs_per_video);
    cfg.seed = j.value("seed", cfg.seed);
}

}  // namespace

AppConfig parse_app_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"log_level", "output_dir", "pipeline", "gateway", "train", "synthetic"},
               "config");
    AppConfig cfg;
    cfg.log_level = j.value("log_level", cfg.log_level);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    try {
        if (j.contains("pipeline")) parse_pipeline(j.at("pipeline"), cfg.pipeline);
        if (j.contains("gateway")) parse_gateway(j.at("gateway"), cfg.pipeline.gateway);
        if (j.contains("train")) parse_train(j.at("train"), cfg.train);
        if (j.contains("synthetic")) parse_synthetic(j.at("synthetic"), cfg.synthetic);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return cfg;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_app_config(text.str());
}

}  // namespace tpo
