#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tpo/app_config.hpp"
#include "tpo/errors.hpp"
#include "tpo/evalkit.hpp"
#include "tpo/pipeline.hpp"
#include "tpo/post_filter.hpp"
#include "tpo/trainer.hpp"
#include "tpo/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

int exit_code_for(const tpo::Error& e) {
    const std::string& cat = e.category();
    if (cat == "config" || cat == "ingest" || cat == "duplicate-id" || cat == "io") {
        return kExitConfig;
    }
    return kExitRuntime;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw tpo::IoError("cannot write " + path);
    out << content;
}

std::vector<std::uint32_t> parse_u32_list(const std::string& csv) {
    std::vector<std::uint32_t> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct CommonFlags {
    std::string config_path;
    std::string out;
    bool stub = false;
    bool has_seed = false;
    std::uint64_t seed = 0;
};

tpo::AppConfig load_config(const CommonFlags& flags) {
    tpo::AppConfig cfg =
        flags.config_path.empty() ? tpo::AppConfig{} : tpo::load_app_config(flags.config_path);
    if (flags.stub) cfg.pipeline.gateway.stub_mode = true;
    if (flags.has_seed) {
        // one top-level seed fans out to every stage
        cfg.pipeline.seed = flags.seed;
        cfg.train.seed = flags.seed;
        cfg.synthetic.seed = flags.seed;
    }
    return cfg;
}

int cmd_curate(const CommonFlags& flags, bool resume) {
    tpo::AppConfig app = load_config(flags);
    if (!flags.out.empty()) app.pipeline.output_path = flags.out;
    const tpo::CurationResult result = tpo::run_curation(app.pipeline, resume);
    std::cout << "curate: kept=" << result.kept << " rejected=" << result.rejected
              << " failed=" << result.failed << " surplus=" << result.surplus << "\n";
    std::cout << "dataset:    " << result.dataset_path << "\n";
    std::cout << "manifest:   " << result.manifest_path << "\n";
    std::cout << "reject log: " << result.reject_log_path << "\n";
    if (result.partial) {
        std::cout << "warning: PartialDataset — target unreachable from this manifest, achieved "
                  << result.kept << "\n";
    }
    return kExitOk;
}

int cmd_filter(const CommonFlags& flags, const std::string& input_path) {
    tpo::AppConfig app = load_config(flags);
    if (!fs::exists(input_path)) throw tpo::ConfigError("input not found: " + input_path);
    const auto records = tpo::load_dataset(input_path);
    tpo::Gateway gateway(app.pipeline.gateway);
    const tpo::FilterResult result = tpo::filter_pairs(records, gateway);

    const std::string out_path = flags.out.empty() ? input_path + ".filtered.jsonl" : flags.out;
    std::string kept_text;
    for (const auto& r : result.records) {
        if (r.kept == true) {
            kept_text += tpo::serialize_record(r);
            kept_text += '\n';
        }
    }
    write_file(out_path, kept_text);
    tpo::write_reject_log(out_path + ".rejects.jsonl", result.rejects);
    std::cout << "filter: kept=" << result.kept_count() << " dropped="
              << (result.records.size() - result.kept_count()) << " of " << result.records.size()
              << "\n";
    std::cout << "kept:       " << out_path << "\n";
    std::cout << "reject log: " << out_path << ".rejects.jsonl\n";
    return kExitOk;
}

int cmd_stats(const std::string& dataset_path, const std::string& json_out) {
    if (!fs::exists(dataset_path)) throw tpo::ConfigError("dataset not found: " + dataset_path);
    const tpo::DatasetStats stats = tpo::dataset_stats(dataset_path);
    std::cout << tpo::stats_to_text(stats);
    if (!json_out.empty()) write_file(json_out, tpo::stats_to_json(stats));
    return kExitOk;
}

int cmd_eval_needle(const CommonFlags& flags, const std::string& lengths_csv,
                    const std::string& depths_csv, std::uint32_t videos_per_cell) {
    tpo::AppConfig app = load_config(flags);
    const auto lengths = parse_u32_list(lengths_csv);
    const auto depths = parse_double_list(depths_csv);
    const tpo::NeedleReport report =
        tpo::run_needle_eval(app.synthetic, lengths, depths, videos_per_cell, app.train);
    std::printf("needle: untrained=%.4f trained=%.4f delta=%.4f\n", report.untrained.mean,
                report.trained.mean, report.delta);
    std::cout << tpo::needle_grid_csv(report.trained);
    const std::string out_dir = flags.out.empty() ? app.output_dir : flags.out;
    fs::create_directories(out_dir);
    write_file(out_dir + "/needle_trained.csv", tpo::needle_grid_csv(report.trained));
    write_file(out_dir + "/needle_untrained.csv", tpo::needle_grid_csv(report.untrained));
    write_file(out_dir + "/needle_report.json", tpo::needle_report_json(report));
    return kExitOk;
}

int cmd_eval_sweep(const CommonFlags& flags, const std::string& axis,
                   const std::string& points_csv) {
    tpo::AppConfig app = load_config(flags);
    tpo::SweepAxis sweep_axis;
    std::vector<std::string> points = parse_string_list(points_csv);
    if (axis == "data-scale") {
        sweep_axis = tpo::SweepAxis::DataScale;
        if (points.empty()) points = {"200", "500", "1000"};
    } else if (axis == "mix-ratio") {
        sweep_axis = tpo::SweepAxis::MixRatio;
        if (points.empty()) points = {"10:0", "8:2", "5:5", "2:8", "0:10"};
    } else {
        throw tpo::ConfigError("axis must be data-scale or mix-ratio");
    }
    const tpo::SweepResult result = tpo::run_sweep(sweep_axis, points, app.synthetic, app.train);
    std::cout << tpo::sweep_to_text(result);
    const std::string out_dir = flags.out.empty() ? app.output_dir : flags.out;
    fs::create_directories(out_dir);
    write_file(out_dir + "/sweep_" + result.axis + ".json", tpo::sweep_to_json(result));
    write_file(out_dir + "/sweep_" + result.axis + ".txt", tpo::sweep_to_text(result));
    return kExitOk;
}

int cmd_verify(bool gradients, bool loss_oracles, bool normalization, bool sampling, bool all) {
    std::vector<tpo::CheckResult> checks;
    const bool none = !gradients && !loss_oracles && !normalization && !sampling;
    if (all || none) {
        checks = tpo::verify_all();
    } else {
        if (loss_oracles) {
            for (auto&& c : tpo::verify_loss_oracles()) checks.push_back(c);
        }
        if (gradients) {
            for (auto&& c : tpo::verify_gradients()) checks.push_back(c);
        }
        if (normalization) {
            for (auto&& c : tpo::verify_normalization()) checks.push_back(c);
        }
        if (sampling) {
            for (auto&& c : tpo::verify_sampling()) checks.push_back(c);
        }
    }
    bool ok = true;
    for (const auto& c : checks) {
        std::cout << tpo::format_check_line(c) << "\n";
        ok = ok && c.passed;
    }
    std::cout << (ok ? "verify: all checks passed" : "verify: FAILURES present") << "\n";
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal preference optimization toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    app.add_option("--config", flags.config_path, "JSON config file")->capture_default_str();
    app.add_option("--out", flags.out, "output path or directory");
    app.add_flag("--stub", flags.stub, "force the deterministic stub gateway");
    auto* seed_opt = app.add_option("--seed", flags.seed, "override every stage seed");

    auto* curate = app.add_subcommand("curate", "run the preference-data curation pipeline");
    bool resume = false;
    curate->add_flag("--resume", resume, "resume from the checkpoint journal");

    auto* filter = app.add_subcommand("filter", "judge and filter an existing record file");
    std::string filter_in;
    filter->add_option("--in", filter_in, "records JSONL to filter")->required();

    auto* train_cmd = app.add_subcommand("train", "optimize the policy on a preference dataset");
    std::string dataset_path;
    train_cmd->add_option("--dataset", dataset_path, "preference dataset JSONL")->required();
    double beta = -1.0, alpha = -1.0, lr = -1.0;
    std::int64_t epochs = -1, batch = -1, buckets = -1;
    std::string optimizer, schedule;
    train_cmd->add_option("--beta", beta, "KL-divergence weight");
    train_cmd->add_option("--alpha", alpha, "SFT anchor weight");
    train_cmd->add_option("--lr", lr, "learning rate");
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--batch", batch, "batch size");
    train_cmd->add_option("--buckets", buckets, "feature hash buckets");
    train_cmd->add_option("--optimizer", optimizer, "sgd | adam");
    train_cmd->add_option("--schedule", schedule, "constant | cosine");

    auto* stats = app.add_subcommand("stats", "report dataset statistics");
    std::string stats_dataset, stats_json;
    stats->add_option("--dataset", stats_dataset, "dataset JSONL")->required();
    stats->add_option("--json", stats_json, "also write a JSON report here");

    auto* eval = app.add_subcommand("eval", "synthetic evaluation harnesses");
    eval->require_subcommand(1);
    auto* needle = eval->add_subcommand("needle", "needle-in-a-haystack grounding probe");
    std::string lengths_csv = "32,64", depths_csv = "0.0,0.25,0.5,0.75,1.0";
    std::uint32_t videos_per_cell = 8;
    needle->add_option("--lengths", lengths_csv, "context lengths, comma separated");
    needle->add_option("--depths", depths_csv, "relative depths in [0,1], comma separated");
    needle->add_option("--videos-per-cell", videos_per_cell, "videos per grid cell");
    auto* sweep = eval->add_subcommand("sweep", "data-scale or mix-ratio sweep");
    std::string axis, points_csv;
    sweep->add_option("--axis", axis, "data-scale | mix-ratio")->required();
    sweep->add_option("--points", points_csv, "sweep points, comma separated");

    auto* verify = app.add_subcommand("verify", "run the oracle and invariant suites");
    bool v_grad = false, v_loss = false, v_norm = false, v_sampling = false, v_all = false;
    verify->add_flag("--gradients", v_grad, "finite-difference gradient suite");
    verify->add_flag("--loss-oracles", v_loss, "loss fixture suite");
    verify->add_flag("--normalization", v_norm, "brute-force normalization suite");
    verify->add_flag("--sampling", v_sampling, "sampling invariant suite");
    verify->add_flag("--all", v_all, "every suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }
    flags.has_seed = seed_opt->count() > 0;

    try {
        if (curate->parsed()) return cmd_curate(flags, resume);
        if (filter->parsed()) return cmd_filter(flags, filter_in);
        if (train_cmd->parsed()) {
            tpo::AppConfig app_cfg = load_config(flags);
            if (beta > 0) app_cfg.train.beta = beta;
            if (alpha >= 0) app_cfg.train.alpha = alpha;
            if (lr > 0) app_cfg.train.learning_rate = lr;
            if (epochs > 0) app_cfg.train.epochs = static_cast<std::uint32_t>(epochs);
            if (batch > 0) app_cfg.train.batch_size = static_cast<std::uint32_t>(batch);
            if (buckets > 0) app_cfg.train.num_buckets = static_cast<std::uint32_t>(buckets);
            if (optimizer == "sgd") app_cfg.train.optimizer = tpo::Optimizer::PlainSGD;
            if (optimizer == "adam") app_cfg.train.optimizer = tpo::Optimizer::AdamLike;
            if (schedule == "constant") app_cfg.train.schedule = tpo::LrSchedule::Constant;
            if (schedule == "cosine") app_cfg.train.schedule = tpo::LrSchedule::CosineWarmup;

            if (!fs::exists(dataset_path)) {
                throw tpo::ConfigError("dataset not found: " + dataset_path);
            }
            const auto all_records = tpo::load_dataset(dataset_path);
            std::vector<tpo::PreferenceRecord> records;
            for (const auto& r : all_records) {
                if (r.kept != false) records.push_back(r);
            }
            if (records.empty()) {
                throw tpo::ConfigError("dataset has no kept records: " + dataset_path);
            }
            const tpo::TrainResult result = tpo::train(records, app_cfg.train);
            const std::string out_dir = flags.out.empty() ? app_cfg.output_dir : flags.out;
            fs::create_directories(out_dir);
            tpo::write_metrics_jsonl(out_dir + "/metrics.jsonl", result);
            write_file(out_dir + "/summary.json", tpo::summary_json(result));
            result.params.save(out_dir + "/params.bin");
            const tpo::BatchMetrics& fin = result.final_eval;
            std::printf("train: records=%zu accuracy=%.4f mean_margin=%.4f mean_loss=%.6f\n",
                        records.size(), fin.preference_accuracy, fin.mean_margin, fin.mean_loss);
            std::cout << "outputs under " << out_dir
                      << "/ (metrics.jsonl, summary.json, params.bin)\n";
            return kExitOk;
        }
        if (stats->parsed()) return cmd_stats(stats_dataset, stats_json);
        if (eval->parsed()) {
            if (needle->parsed()) {
                return cmd_eval_needle(flags, lengths_csv, depths_csv, videos_per_cell);
            }
            return cmd_eval_sweep(flags, axis, points_csv);
        }
        if (verify->parsed()) return cmd_verify(v_grad, v_loss, v_norm, v_sampling, v_all);
    } catch (const tpo::Error& e) {
        std::cerr << "error[" << e.category() << "]: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error[runtime]: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
