#include "flowfilt/acceptance.hpp"
#include "flowfilt/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

namespace {

int run_command(const std::string& config_path, const flowfilt::ConfigOverrides& overrides) {
    const auto start = std::chrono::steady_clock::now();
    auto config = flowfilt::load_config(config_path);
    flowfilt::apply_overrides(config, overrides);
    const auto artifacts = flowfilt::execute(config);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto manifest = flowfilt::write_run(config, artifacts, wall);
    std::cout << config.output_dir.string() << "\n";
    for (const auto& name : manifest.at("outputs")) std::cout << "  " << name.get<std::string>() << "\n";
    return flowfilt::exit_code::kOk;
}

int presets_command() {
    std::cout << "preset            config name   parameters\n";
    std::cout << "exact_flow        exact         -\n";
    std::cout << "fixed_q           fixed_q       -\n";
    std::cout << "constant_q        constant_q    Q0 (n x n, positive semi-definite)\n";
    std::cout << "diagnostic_noise  diagnostic    alpha > 0 (default 1)\n";
    std::cout << "approximate       -             library only: A_hat(lambda), Q(lambda)\n";
    return flowfilt::exit_code::kOk;
}

int verify_command(unsigned threads, const std::vector<int>& only) {
    flowfilt::AcceptanceOptions options;
    options.threads = threads;
    bool all = true;
    auto report = [&](const flowfilt::CriterionResult& r) {
        all = all && r.passed;
        std::cout << flowfilt::format_result(r) << std::endl;
    };
    if (only.empty()) {
        flowfilt::run_acceptance(options, report);
    } else {
        for (int id : only) report(flowfilt::run_criterion(id, options));
    }
    return all ? flowfilt::exit_code::kOk : flowfilt::exit_code::kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic particle flow filters for linear-Gaussian models"};
    app.set_version_flag("--version", flowfilt::kVersion);
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Ensemble seed override");
    run->add_option("--steps", steps, "Lambda grid steps override");
    run->add_option("--out", out_dir, "Output directory override");
    run->add_option("--threads", threads, "Worker threads (0: all cores)");

    app.add_subcommand("presets", "List the flow presets");

    auto* verify = app.add_subcommand("verify", "Run the acceptance suite and print a pass/fail table");
    unsigned verify_threads = 0;
    std::vector<int> only;
    verify->add_option("--threads", verify_threads, "Worker threads (0: all cores)");
    verify->add_option("--only", only, "Criterion ids to run")->check(CLI::Range(1, flowfilt::kCriterionCount));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : flowfilt::exit_code::kParse;
    }

    try {
        if (*run) {
            flowfilt::ConfigOverrides overrides;
            overrides.seed = seed;
            overrides.steps = steps;
            if (out_dir) overrides.output_dir = *out_dir;
            overrides.threads = threads;
            return run_command(config_path, overrides);
        }
        if (app.got_subcommand("presets")) return presets_command();
        return verify_command(verify_threads, only);
    } catch (...) {
        nlohmann::json record;
        const int code = flowfilt::classify_exception(std::current_exception(), record);
        std::cerr << record.dump() << std::endl;
        return code;
    }
}
