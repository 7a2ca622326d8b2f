#pragma once

#include <string>

#include "tpo/evalkit.hpp"
#include "tpo/pipeline.hpp"
#include "tpo/trainer.hpp"

namespace tpo {

// One JSON config file for the whole CLI. Parsing is strict: any unknown
// key anywhere fails with a ConfigError naming the offending path.
struct AppConfig {
    std::string log_level = "info";
    std::string output_dir = ".";
    PipelineConfig pipeline;
    TrainConfig train;
    SyntheticSpec synthetic;
};

AppConfig parse_app_config(const std::string& json_text);
AppConfig load_app_config(const std::string& path);

}  // namespace tpo
