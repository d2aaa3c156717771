// fdelab: command-line driver for the experiment pipelines.
#include <CLI11.hpp>

#include <iostream>

#include "fde/cli.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerdict = 4;

int exit_code_for(const fde::Error& e) { return e.kind() == fde::ErrorKind::Config ? kExitConfig : kExitNumerical; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fdelab: numerical lab for the fast diffusion entropy method"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    int jobs = 1;

    const std::vector<std::string> pipelines = {"stationary", "spectrum", "linear-evolve", "evolve", "rates"};
    for (const auto& name : pipelines) {
        auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    }
    auto* sw = app.add_subcommand("sweep", "run the rates pipeline over the sweep grid");
    sw->add_option("--config", config_path, "experiment config file")->required();
    sw->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sw->add_option("--jobs", jobs, "concurrent cells")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        const fde::ExperimentConfig cfg = fde::load_config(config_path);
        const std::filesystem::path out = std::filesystem::path(out_dir.empty() ? cfg.out_dir : out_dir);
        if (name == "sweep") {
            const auto rows = fde::sweep(cfg, jobs, out);
            int failed = 0;
            for (const auto& r : rows) {
                std::cout << "p=" << r.p << " n=" << r.n << " amplitude=" << r.amplitude << " " << r.status;
                if (!r.error.empty()) std::cout << " (" << r.error << ")";
                std::cout << "\n";
                if (r.status != "PASS") ++failed;
            }
            std::cout << rows.size() << " cells, " << failed << " not passing; wrote " << (out / "sweep.csv").string()
                      << "\n";
            return failed > 0 ? kExitVerdict : 0;
        }
        const auto pipeline = *fde::pipeline_from_string(name);
        const fde::RunResult res = fde::run_experiment(cfg, pipeline, out);
        for (const auto& f : res.files) std::cout << "wrote " << (res.dir / f).string() << "\n";
        if (res.rate)
            std::cout << "lambda_fit = " << res.rate->lambda_fit << ", 2 lambda_p / p = " << res.rate->predicted
                      << ", relative error = " << res.rate->rel_error << "\n";
        std::cout << "status: " << res.status << "\n";
        return res.status == "FAIL" ? kExitVerdict : 0;
    } catch (const fde::Error& e) {
        std::cerr << "fdelab " << name << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "fdelab " << name << ": " << e.what() << "\n";
        return kExitNumerical;
    }
}
