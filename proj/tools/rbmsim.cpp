#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rbm/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"relativistic Bohmian mode-sum simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    rbm::RunOptions options;
    unsigned workers = 0;
    std::uint64_t seed = 0;

    CLI::App* run = app.add_subcommand("run", "execute a scenario file");
    run->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", options.out_dir, "output directory (overrides the scenario)");
    CLI::Option* wopt = run->add_option("--workers", workers, "worker thread count");
    CLI::Option* sopt = run->add_option("--seed-override", seed, "replace the scenario seed");

    CLI::App* validate = app.add_subcommand("validate", "parse and validate a scenario file");
    validate->add_option("scenario", scenario_path, "scenario JSON file")->required();

    CLI::App* schema = app.add_subcommand("schema", "print the scenario file schema");

    CLI11_PARSE(app, argc, argv);

    if (schema->parsed()) {
        std::cout << rbm::scenario_schema_text();
        return 0;
    }
    if (validate->parsed()) return rbm::validate_scenario_file(scenario_path, std::cout);

    if (*wopt) options.workers = workers;
    if (*sopt) options.seed = seed;
    return rbm::run_scenario_file(scenario_path, options, std::cout);
}
