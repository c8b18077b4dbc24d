#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tclt/experiment.hpp"

namespace
{

enum exit_code : int { ok = 0, config_failure = 1, runtime_failure = 2, selftest_failure = 3 };

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string &path, const std::string &text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    out << text;
}

void print_selftest(const std::vector<tclt::SelftestLine> &lines)
{
    std::printf("%-70s %14s %14s %14s  %s\n", "check", "residual", "stderr", "threshold", "result");
    for (const auto &l : lines) {
        std::printf("%-70s %14.6e %14.6e %14.6e  %s\n", l.name.c_str(), l.residual, l.std_error, l.threshold,
                    l.pass ? "PASS" : "FAIL");
    }
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Wishart tensor CLT laboratory: sweeps, Stein kernel self tests, bounds and reports"};
    app.require_subcommand(1);

    // sweep
    auto *sweep = app.add_subcommand("sweep", "Run a grid of experiment cells and write one record per cell and estimator");
    std::string config_path;
    std::string out_path;
    int workers = 0;
    long long seed_override = -1;
    std::string format = "csv";
    bool timing = false;
    sweep->add_option("--config", config_path, "INI experiment config")->required();
    sweep->add_option("--out", out_path, "result file (default: stdout)");
    sweep->add_option("--workers", workers, "worker threads (overrides config)")->check(CLI::PositiveNumber);
    sweep->add_option("--seed", seed_override, "master seed (overrides config)")->check(CLI::NonNegativeNumber);
    sweep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sweep->add_flag("--timing", timing, "fill the seconds column with wall time (output is then not reproducible)");

    // selftest
    auto *selftest = app.add_subcommand("selftest", "Stein identity, kernel moment and contraction checks");
    std::string st_config;
    std::size_t st_mc = 20000;
    long long st_seed = 0;
    int st_workers = 1;
    double fault = 0.0;
    selftest->add_option("--config", st_config, "experiment config whose measure and grid define the suite");
    selftest->add_option("--mc", st_mc, "outer Monte Carlo points per check")->check(CLI::Range(100, 100000000));
    selftest->add_option("--seed", st_seed, "seed")->check(CLI::NonNegativeNumber);
    selftest->add_option("--workers", st_workers, "worker threads")->check(CLI::PositiveNumber);
    selftest->add_option("--inject-fault", fault)->group("");

    // bound
    auto *bound = app.add_subcommand("bound", "Evaluate the Stein-discrepancy bound for a whitened Wishart tensor");
    tclt::BoundInputs in;
    std::string weights_text;
    bound->add_option("--n", in.n, "ambient dimension")->required()->check(CLI::PositiveNumber);
    bound->add_option("--d", in.d, "number of summands")->required()->check(CLI::PositiveNumber);
    bound->add_option("--p", in.p, "tensor order")->required()->check(CLI::PositiveNumber);
    bound->add_option("--opnorm", in.opnorm_a, "operator norm of the whitening matrix")->check(CLI::NonNegativeNumber);
    bound->add_option("--m8", in.m8p, "E|X|^{8(p-1)}")->required()->check(CLI::NonNegativeNumber);
    bound->add_option("--d8", in.d8, "E|Dphi(G)|_op^8")->required()->check(CLI::NonNegativeNumber);
    bound->add_option("--weights", weights_text, "comma-separated positive weights (default: homogeneous)");

    // report
    auto *report = app.add_subcommand("report", "Re-emit a result file as csv or json, or fit log-log slopes");
    std::string report_path;
    std::string mode = "csv";
    report->add_option("file", report_path, "result file (csv or json)")->required();
    report->add_option("--mode", mode, "csv, json or slopes")->check(CLI::IsMember({"csv", "json", "slopes"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_failure;
    }

    try {
        if (*sweep) {
            auto cfg = tclt::load_experiment(config_path);
            if (seed_override >= 0) {
                cfg.seed = static_cast<std::uint64_t>(seed_override);
            }
            const int w = workers > 0 ? workers : cfg.workers;
            const auto res = tclt::run_sweep(cfg, w, timing);
            for (const auto &note : res.notes) {
                std::fprintf(stderr, "skipped %s\n", note.c_str());
            }
            write_output(out_path, format == "json" ? tclt::to_json_text(res.records) : tclt::to_csv(res.records));
            return ok;
        }
        if (*selftest) {
            tclt::SelftestOptions opt;
            opt.mc_n = st_mc;
            opt.seed = static_cast<std::uint64_t>(st_seed);
            opt.fault = fault;
            opt.workers = st_workers;
            std::vector<tclt::SelftestLine> lines;
            if (!st_config.empty()) {
                const auto cfg = tclt::load_experiment(st_config);
                for (int n : cfg.ns) {
                    const auto spec = cfg.measure_for(n);
                    auto part = tclt::selftest_measure(spec, cfg.ps, cfg.kind, opt);
                    lines.insert(lines.end(), part.begin(), part.end());
                }
            } else {
                for (const auto &spec : {tclt::MeasureSpec::gaussian(3), tclt::MeasureSpec::uniform_box(3)}) {
                    auto part = tclt::selftest_measure(spec, {1, 2}, tclt::IndexKind::principal, opt);
                    lines.insert(lines.end(), part.begin(), part.end());
                }
            }
            auto con = tclt::selftest_contraction(opt);
            lines.insert(lines.end(), con.begin(), con.end());
            print_selftest(lines);
            std::size_t failed = 0;
            for (const auto &l : lines) {
                if (!l.pass) {
                    ++failed;
                    std::fprintf(stderr, "FAILED: %s\n", l.name.c_str());
                }
            }
            return failed == 0 ? ok : selftest_failure;
        }
        if (*bound) {
            if (!weights_text.empty()) {
                std::vector<double> w;
                for (const auto &item : tclt::detail::split(weights_text, ',')) {
                    w.push_back(std::stod(item));
                    if (!(w.back() > 0)) {
                        throw tclt::config_error("weights must be positive");
                    }
                }
                in.weights = w;
            }
            std::printf("%.17g\n", tclt::theorem_bound(in));
            return ok;
        }
        if (*report) {
            const auto records = tclt::parse_records(read_file(report_path));
            if (mode == "csv") {
                std::cout << tclt::to_csv(records);
            } else if (mode == "json") {
                std::cout << tclt::to_json_text(records);
            } else {
                std::cout << tclt::slopes_report(records);
            }
            return ok;
        }
    } catch (const tclt::config_error &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_failure;
    } catch (const std::invalid_argument &e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return config_failure;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return runtime_failure;
    }
    return ok;
}
