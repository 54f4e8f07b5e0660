#include "supermask/experiment.hpp"

#include "supermask/error.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace supermask {

RunData load_run_data(const RunConfig& cfg) {
    RunData d;
    switch (cfg.dataset) {
    case DatasetKind::cifar10: {
        auto splits = load_cifar10(cfg.cifar_dir, cfg.subset ? std::optional(cfg.subset) : std::nullopt,
                                   cfg.test_subset ? std::optional(cfg.test_subset) : std::nullopt);
        d.train = std::move(splits.train);
        d.test = std::move(splits.test);
        break;
    }
    case DatasetKind::synth:
        d.train = synth_blobs(cfg.synth_n, cfg.synth_classes, cfg.synth_dim, cfg.synth_spread, cfg.synth_seed);
        if (cfg.synth_test_n > 0) {
            d.test = synth_blobs(cfg.synth_test_n, cfg.synth_classes, cfg.synth_dim, cfg.synth_spread,
                                 cfg.synth_seed + 1);
        }
        break;
    case DatasetKind::sblb:
        d.train = read_sblb(cfg.sblb_train);
        if (!cfg.sblb_test.empty()) d.test = read_sblb(cfg.sblb_test);
        break;
    }
    if (cfg.subset && cfg.dataset != DatasetKind::cifar10 && cfg.subset < d.train.size()) {
        std::vector<std::uint32_t> idx(cfg.subset);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
        auto [x, y] = gather(d.train, idx);
        d.train.inputs = std::move(x);
        d.train.labels = std::move(y);
    }
    return d;
}

Model build_model(const RunConfig& cfg, const Dataset& train) {
    const ArchSpec arch = arch_spec(cfg, train.sample_shape(), train.num_classes);
    return build_model(arch, cfg.algorithm, cfg.prune_rate, cfg.weight_scheme(),
                       ModelSeeds{cfg.weight_seed, cfg.score_seed});
}

RunResult run_config(const RunConfig& cfg, const RunData& data, const EpochCallback& on_epoch) {
    validate(cfg);
    RunResult r{build_model(cfg, data.train), {}, {}};
    r.history = train(r.model, cfg.train_options(), data.train, data.test ? &*data.test : nullptr, on_epoch);
    r.checkpoint = Checkpoint::from_model(r.model, to_text(cfg));
    return r;
}

TrainArtifacts run_train(const RunConfig& cfg, const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
    const RunData data = load_run_data(cfg);
    RunResult r = run_config(cfg, data, on_epoch);
    std::filesystem::create_directories(out_dir);
    TrainArtifacts a;
    a.checkpoint = out_dir / "model.snfg";
    a.history = out_dir / "history.csv";
    const auto bytes = serialize(r.checkpoint);
    {
        std::ofstream out(a.checkpoint, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("write failed for " + a.checkpoint.string());
    }
    {
        std::ofstream out(a.history, std::ios::trunc);
        write_history_csv(out, r.history);
        if (!out) throw FormatError("write failed for " + a.history.string());
    }
    a.checkpoint_sha256 = to_hex(sha256(bytes));
    a.history_rows = std::move(r.history);
    return a;
}

SimilarityReport compare_checkpoints(const std::vector<std::filesystem::path>& paths, Metric metric) {
    if (paths.empty()) throw InvalidArgument("compare needs at least one checkpoint");
    std::vector<std::string> ids;
    std::vector<std::vector<Mask>> masks;
    ArchSpec arch;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        Checkpoint c = load_checkpoint(paths[i]);
        if (i == 0) {
            arch = c.arch;
        } else if (!(c.arch == arch)) {
            throw InvalidArgument("architecture mismatch: " + paths[i].string() + " (" + describe(c.arch) +
                                  ") vs " + paths[0].string() + " (" + describe(arch) + ")");
        }
        std::vector<Mask> m;
        for (auto& rec : c.layers) m.push_back(std::move(rec.mask));
        masks.push_back(std::move(m));
        ids.push_back(paths[i].parent_path().filename().string() + "/" + paths[i].filename().string());
    }
    std::vector<std::string> names;
    for (const auto& l : layer_layout(arch)) names.push_back(l.name);
    return similarity_report(std::move(ids), std::move(names), masks, metric);
}

namespace {

template <typename Fn>
void write_text(const std::filesystem::path& path, Fn fn) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    fn(out);
    if (!out) throw FormatError("write failed for " + path.string());
}

} // namespace

CompareArtifacts write_compare_report(const SimilarityReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string m(to_string(report.metric));
    CompareArtifacts a{out_dir / ("similarity_" + m + ".csv"), out_dir / ("matrix_" + m + ".csv"),
                       out_dir / ("layers_" + m + ".csv")};
    write_text(a.rows, [&](std::ostream& o) { write_similarity_rows(o, report); });
    write_text(a.matrix, [&](std::ostream& o) { write_similarity_matrix(o, report); });
    write_text(a.layers, [&](std::ostream& o) { write_layer_summary(o, report); });
    return a;
}

NormReport norm_report(const Checkpoint& ckpt) {
    const Subnetwork sub = ckpt.reconstruct();
    NormReport r;
    for (const auto& l : layer_layout(ckpt.arch)) r.layer_names.push_back(l.name);
    for (std::size_t l = 0; l < sub.weights.size(); ++l) r.rows.push_back(frobenius_split(sub.weights[l], sub.masks[l]));
    return r;
}

void write_norm_report(const NormReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_text(path, [&](std::ostream& o) { write_norm_rows(o, report.layer_names, report.rows); });
}

RunConfig with_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::string text = to_text(base);
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        const std::string key = line.substr(0, line.find(" ="));
        bool replaced = false;
        for (const auto& [k, v] : overrides) replaced = replaced || k == key;
        if (!replaced) lines.push_back(line);
    }
    std::vector<std::pair<std::string, std::string>> last;
    for (const auto& kv : overrides) {
        std::erase_if(last, [&](const auto& e) { return e.first == kv.first; });
        last.push_back(kv);
    }
    std::string out;
    for (const auto& l : lines) out += l + '\n';
    for (const auto& [k, v] : last) out += k + " = " + v + '\n';
    return parse_config(out);
}

std::filesystem::path run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes,
                                const std::filesystem::path& out_dir) {
    std::size_t total = 1;
    for (const auto& a : axes) {
        if (a.values.empty()) throw ConfigError("sweep axis '" + a.key + "' has no values");
        total *= a.values.size();
    }
    std::filesystem::create_directories(out_dir);
    const auto summary_path = out_dir / "sweep.csv";
    std::ofstream summary(summary_path, std::ios::trunc);
    if (!summary) throw FormatError("cannot write " + summary_path.string());
    summary.precision(std::numeric_limits<double>::max_digits10);
    summary << "run";
    for (const auto& a : axes) summary << ',' << a.key;
    summary << ",final_loss,final_train_acc,final_test_acc,checkpoint_sha256\n";

    // Validate every combination before spending time on training.
    std::vector<RunConfig> configs;
    std::vector<std::vector<std::string>> picks;
    for (std::size_t run = 0; run < total; ++run) {
        std::vector<std::pair<std::string, std::string>> ov;
        std::vector<std::string> chosen;
        std::size_t rem = run;
        for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
            chosen.insert(chosen.begin(), it->values[rem % it->values.size()]);
            rem /= it->values.size();
        }
        for (std::size_t i = 0; i < axes.size(); ++i) ov.emplace_back(axes[i].key, chosen[i]);
        configs.push_back(with_overrides(base, ov));
        picks.push_back(std::move(chosen));
    }
    for (std::size_t run = 0; run < total; ++run) {
        const std::string name = "run" + std::to_string(run);
        const auto a = run_train(configs[run], out_dir / name);
        summary << name;
        for (const auto& v : picks[run]) summary << ',' << v;
        const auto& h = a.history_rows.epochs;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        summary << ',' << (h.empty() ? nan : h.back().loss) << ',' << (h.empty() ? nan : h.back().train_acc) << ','
                << (h.empty() ? nan : h.back().test_acc) << ',' << a.checkpoint_sha256 << '\n';
        summary.flush();
    }
    return summary_path;
}

} // namespace supermask
