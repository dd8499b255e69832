#include <iostream>

#include <CLI11.hpp>

#include "mpsens/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"measure-theoretic sensitivity and maximal pattern entropy"};
    app.require_subcommand(1, 1);
    mpsens::cli::options opts;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::uint64_t budget = 0;
    for (const char* name : {"entropy", "pattern", "hstar", "sensitivity", "pairs", "verify"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opts.config_path, "YAML experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--log2", opts.log2, "report entropies in bits");
        sub->add_option("--budget", budget, "node budget for pattern searches");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mpsens::cli::exit_validation;
    }
    auto* sub = app.get_subcommands().front();
    opts.command = sub->get_name();
    opts.out_dir = out;
    if (sub->count("--seed") > 0) {
        opts.seed = seed;
    }
    if (sub->count("--budget") > 0) {
        opts.budget = budget;
    }
    return mpsens::cli::run(opts, std::cerr);
}
