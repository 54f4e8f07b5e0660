// supermask: train scored subnetworks and analyse their masks.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 numeric failure.

#include "supermask/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

using namespace supermask;

int cmd_train(const std::string& config_path, const std::string& out_dir, bool quiet) {
    const RunConfig cfg = load_config(config_path);
    const std::filesystem::path out = out_dir.empty() ? std::filesystem::path("runs") /
                                                             std::filesystem::path(config_path).stem()
                                                       : std::filesystem::path(out_dir);
    EpochCallback progress;
    if (!quiet) {
        progress = [](const EpochRecord& r) {
            std::fprintf(stderr, "epoch %d loss %.4f train_acc %.4f test_acc %.4f lr %.5f recycled %zu\n", r.epoch,
                         r.loss, r.train_acc, r.test_acc, r.lr, r.recycle_events);
        };
    }
    const TrainArtifacts a = run_train(cfg, out, progress);
    std::cout << "checkpoint " << a.checkpoint.string() << "\n"
              << "history " << a.history.string() << "\n"
              << "sha256 " << a.checkpoint_sha256 << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& metric, const std::string& out_dir) {
    std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
    const SimilarityReport report = compare_checkpoints(ps, parse_metric(metric));
    const CompareArtifacts a = write_compare_report(report, out_dir);
    std::cout << "rows " << a.rows.string() << "\nmatrix " << a.matrix.string() << "\nlayers " << a.layers.string()
              << "\n";
    return 0;
}

int cmd_norms(const std::string& path, const std::string& out) {
    const NormReport report = norm_report(load_checkpoint(path));
    if (out.empty() || out == "-") {
        write_norm_rows(std::cout, report.layer_names, report.rows);
    } else {
        write_norm_report(report, out);
        std::cout << "norms " << out << "\n";
    }
    return 0;
}

int cmd_synth(std::size_t n, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed,
              const std::string& out) {
    write_sblb(out, synth_blobs(n, classes, dim, spread, seed));
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& vary, const std::string& out_dir) {
    const RunConfig base = load_config(config_path);
    std::vector<SweepAxis> axes;
    for (const auto& kv : vary) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--vary expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        auto it = std::find_if(axes.begin(), axes.end(), [&](const SweepAxis& a) { return a.key == key; });
        if (it == axes.end()) {
            axes.push_back({key, {}});
            it = axes.end() - 1;
        }
        it->values.push_back(kv.substr(eq + 1));
    }
    std::cout << "summary " << run_sweep(base, axes, out_dir).string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Find sparse subnetworks inside frozen random networks"};
    app.require_subcommand(1);

    std::string config, out_dir;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "Train scores for one config; writes model.snfg and history.csv");
    train->add_option("config", config, "Run config (key = value per line)")->required();
    train->add_option("-o,--out", out_dir, "Output directory (default runs/<config stem>)");
    train->add_flag("-q,--quiet", quiet, "No per-epoch progress on stderr");

    std::vector<std::string> ckpts;
    std::string metric = "jaccard", cmp_out = ".";
    auto* compare = app.add_subcommand("compare-masks", "Pairwise mask similarity of checkpoints");
    compare->add_option("checkpoints", ckpts, "Checkpoint files")->required()->expected(1, -1);
    compare->add_option("-m,--metric", metric, "smc or jaccard")->check(CLI::IsMember({"smc", "jaccard"}));
    compare->add_option("-o,--out", cmp_out, "Output directory");

    std::string norm_ckpt, norm_out;
    auto* norms = app.add_subcommand("norm-report", "Kept/pruned weight norms per layer");
    norms->add_option("checkpoint", norm_ckpt, "Checkpoint file")->required();
    norms->add_option("-o,--out", norm_out, "CSV path (default stdout)");

    std::size_t n = 4000, classes = 4, dim = 16;
    double spread = 1.0;
    std::uint64_t seed = 0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth-data", "Write a Gaussian-blob dataset in SBLB format");
    synth->add_option("-n,--samples", n, "Sample count (multiple of classes)");
    synth->add_option("-k,--classes", classes, "Class count");
    synth->add_option("-d,--dim", dim, "Feature dimension (>= classes)");
    synth->add_option("-s,--spread", spread, "Per-axis standard deviation");
    synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("-o,--out", synth_out, "Output file")->required();

    std::string sweep_config, sweep_out = "sweep";
    std::vector<std::string> vary;
    auto* sweep = app.add_subcommand("sweep", "Train the product of config overrides");
    sweep->add_option("config", sweep_config, "Base run config")->required();
    sweep->add_option("--vary", vary, "key=value; repeat a key to add values to its axis");
    sweep->add_option("-o,--out", sweep_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*train) return cmd_train(config, out_dir, quiet);
        if (*compare) return cmd_compare(ckpts, metric, cmp_out);
        if (*norms) return cmd_norms(norm_ckpt, norm_out);
        if (*synth) return cmd_synth(n, classes, dim, spread, seed, synth_out);
        if (*sweep) return cmd_sweep(sweep_config, vary, sweep_out);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
