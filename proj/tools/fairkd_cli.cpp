#include "fairkd/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"fairkd: fairness-aware distillation from two group-specialized teachers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory (overrides config output_dir)");
    app.add_option("--seed", seed, "Root seed (overrides config seed)");

    auto* gen = app.add_subcommand("gen-data", "Generate or ingest data and write train/test splits");

    auto* train = app.add_subcommand("train", "Run one training phase");
    std::string phase;
    train->add_option("--phase", phase, "base, teacher0, teacher1 or student")
        ->required()
        ->check(CLI::IsMember({"base", "teacher0", "teacher1", "student"}));

    auto* eval = app.add_subcommand("eval", "Write fairness report, predictions and features");
    std::string checkpoint;
    std::string dataset;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (default <out>/student.ckpt)");
    eval->add_option("--dataset", dataset, "Dataset to evaluate on (default <out>/test.csv)");

    auto* ablate = app.add_subcommand("ablate", "Single-term ablation table");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = fairkd::load_experiment_config(config_path);
        if (seed) {
            cfg.seed = *seed;
        }
        const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : std::filesystem::path(out_dir);

        if (gen->parsed()) {
            fairkd::cmd_gen_data(cfg, out);
        } else if (train->parsed()) {
            fairkd::cmd_train(cfg, out, fairkd::parse_phase(phase));
        } else if (eval->parsed()) {
            fairkd::cmd_eval(cfg, out, checkpoint.empty() ? out / "student.ckpt" : std::filesystem::path(checkpoint),
                             dataset.empty() ? out / "test.csv" : std::filesystem::path(dataset));
        } else if (ablate->parsed()) {
            fairkd::cmd_ablate(cfg, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
