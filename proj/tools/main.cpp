#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "evpinn/commands.hpp"

namespace {

evpinn::RunConfig load_config(const std::string& config_path, const std::string& out_override) {
    evpinn::RunConfig cfg = evpinn::load_run_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EV battery power and energy modeling toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string models_dir;
    std::string log_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config output_dir)");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic drive log");
    add_common(synth);

    CLI::App* train = app.add_subcommand("train", "train the power and energy models");
    add_common(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate trained models against a log");
    add_common(eval);
    eval->add_option("--models", models_dir, "directory holding trained models")->required();
    eval->add_option("--log", log_path, "drive log CSV (defaults to the configured data)");

    CLI::App* predict = app.add_subcommand("predict", "predict power and energy for a log");
    add_common(predict);
    predict->add_option("--models", models_dir, "directory holding trained models")->required();
    predict->add_option("--log", log_path, "drive log CSV (defaults to the configured data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const evpinn::RunConfig cfg = load_config(config_path, out_dir);
        if (synth->parsed()) {
            evpinn::cmd_synth(cfg);
        } else if (train->parsed()) {
            evpinn::cmd_train(cfg);
        } else if (eval->parsed()) {
            evpinn::cmd_eval(cfg, models_dir, log_path);
        } else if (predict->parsed()) {
            evpinn::cmd_predict(cfg, models_dir, log_path);
        }
    } catch (const evpinn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
