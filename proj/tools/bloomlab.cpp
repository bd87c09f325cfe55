#include <CLI11.hpp>
#include <cstdio>
#include <thread>

#include "bloom/bloom.hpp"

namespace {

struct Common {
    std::string config;
    std::string out = "out";
    long seed = -1;
    unsigned threads = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "flat key=value configuration file");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--seed", c.seed, "random seed, overrides the config");
    app->add_option("--threads", c.threads, "worker threads (0 = hardware)");
}

int run(const std::string& verb, const Common& c) {
    bloom::set_threads(c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency()));
    bloom::Config cfg = bloom::make_config(verb);
    if (!c.config.empty()) cfg.merge_file(c.config);
    if (c.seed >= 0) cfg.set("seed", std::to_string(c.seed));
    const bloom::RunResult r = bloom::run_experiment(cfg, c.out);
    for (const auto& o : r.outputs) std::printf("wrote %s\n", o.c_str());
    for (const auto& f : r.failures) std::printf("FAIL %s\n", f.c_str());
    std::printf("%s %s (config %s)\n", verb.c_str(), r.ok ? "PASS" : "FAIL", cfg.hash().c_str());
    return r.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical experiments on Bloom-type bounds for iterated commutators"};
    app.require_subcommand(1);
    const std::vector<std::pair<std::string, std::string>> verbs{
        {"bloom-upper", "implied constants of the weighted upper bound"},
        {"bloom-failure", "BMO ratios showing the one-weight condition fails"},
        {"embedding", "interpolation embedding of weighted BMO spaces"},
        {"necessity", "lower bound certificates and the oscillation chain"},
        {"decompose", "sparse oscillation decompositions of random functions"},
        {"diagnose-weight", "A_p, reverse Jensen, doubling and density of a weight"}};
    std::vector<Common> opts(verbs.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < verbs.size(); ++i) {
        subs.push_back(app.add_subcommand(verbs[i].first, verbs[i].second));
        add_common(subs.back(), opts[i]);
    }
    CLI11_PARSE(app, argc, argv);
    try {
        for (std::size_t i = 0; i < verbs.size(); ++i)
            if (subs[i]->parsed()) return run(verbs[i].first, opts[i]);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
