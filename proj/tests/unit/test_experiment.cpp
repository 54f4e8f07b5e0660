#include "supermask/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace supermask;
namespace fs = std::filesystem;

namespace {

RunConfig desk(int epochs = 3) {
    RunConfig c;
    c.arch = "mlp";
    c.dataset = DatasetKind::synth;
    c.hidden = {16, 16};
    c.synth_n = 200;
    c.synth_test_n = 40;
    c.synth_dim = 8;
    c.epochs = epochs;
    c.batch_size = 32;
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("experiment") {

TEST_CASE("run_train writes a checkpoint and history, reproducibly") {
    TempDir dir("supermask_exp_train");
    const auto a = run_train(desk(), dir.path / "a");
    const auto b = run_train(desk(), dir.path / "b");
    CHECK(fs::exists(a.checkpoint));
    CHECK(a.checkpoint.filename() == "model.snfg");
    CHECK(a.history.filename() == "history.csv");
    CHECK(a.checkpoint_sha256 == b.checkpoint_sha256);
    CHECK(a.checkpoint_sha256 == to_hex(sha256(read_file(a.checkpoint))));
    CHECK(slurp(a.history) == slurp(b.history));
    CHECK(a.history_rows.epochs.size() == 3);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    CHECK(parse_config(ck.config_text) == desk());

    RunConfig other = desk();
    other.score_seed = 1;
    CHECK(run_train(other, dir.path / "c").checkpoint_sha256 != a.checkpoint_sha256);
}

TEST_CASE("compare checkpoints") {
    TempDir dir("supermask_exp_compare");
    const auto a = run_train(desk(), dir.path / "a");
    RunConfig s1 = desk();
    s1.score_seed = 1;
    const auto b = run_train(s1, dir.path / "b");

    const auto same = compare_checkpoints({a.checkpoint, a.checkpoint}, Metric::jaccard);
    CHECK(same.matrix == std::vector<std::vector<double>>{{1, 1}, {1, 1}});

    const auto diff = compare_checkpoints({a.checkpoint, b.checkpoint}, Metric::jaccard);
    CHECK(diff.matrix[0][1] < 1.0);
    CHECK(diff.matrix[0][1] == diff.matrix[1][0]);
    CHECK(diff.model_ids.size() == 2);
    CHECK(diff.layer_names == std::vector<std::string>{"fc1", "fc2", "fc3"});

    const auto files = write_compare_report(diff, dir.path / "report");
    CHECK(files.rows.filename() == "similarity_jaccard.csv");
    CHECK(files.matrix.filename() == "matrix_jaccard.csv");
    CHECK(files.layers.filename() == "layers_jaccard.csv");
    CHECK(slurp(files.rows).rfind("model_a,model_b,layer,metric,value\n", 0) == 0);

    RunConfig wide = desk();
    wide.hidden = {32, 16};
    const auto c = run_train(wide, dir.path / "c");
    CHECK_THROWS_AS(compare_checkpoints({a.checkpoint, c.checkpoint}, Metric::smc), InvalidArgument);
    CHECK_THROWS_AS(compare_checkpoints({}, Metric::smc), InvalidArgument);
}

TEST_CASE("norm report matches the reconstructed weights") {
    TempDir dir("supermask_exp_norm");
    RunConfig c = desk();
    c.variant = ReweightVariant::iwr;
    c.period = 1;
    const auto a = run_train(c, dir.path / "a");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const NormReport r = norm_report(ck);
    const Subnetwork sub = ck.reconstruct();
    REQUIRE(r.rows.size() == sub.weights.size());
    for (std::size_t l = 0; l < r.rows.size(); ++l) {
        long double kept = 0, pruned = 0;
        for (std::size_t i = 0; i < sub.weights[l].size(); ++i) {
            const long double v = sub.weights[l][i];
            (sub.masks[l].test(i) ? kept : pruned) += v * v;
        }
        CHECK(r.rows[l].norm_kept == doctest::Approx(std::sqrt(static_cast<double>(kept))).epsilon(1e-12));
        CHECK(r.rows[l].norm_pruned == doctest::Approx(std::sqrt(static_cast<double>(pruned))).epsilon(1e-12));
    }
    write_norm_report(r, dir.path / "out" / "norms.csv");
    CHECK(slurp(dir.path / "out" / "norms.csv").rfind("layer,norm_kept,norm_pruned,rms_kept,rms_pruned\nfc1,", 0) == 0);
}

TEST_CASE("overrides replace keys and the last one wins") {
    const RunConfig c = with_overrides(desk(), {{"epochs", "7"}, {"lr", "0.5"}, {"epochs", "9"}});
    CHECK(c.epochs == 9);
    CHECK(c.lr == 0.5);
    CHECK(c.hidden == desk().hidden);
    CHECK(with_overrides(desk(), {{"period", "4"}}).period == 4);
    CHECK_THROWS_AS(with_overrides(desk(), {{"nope", "1"}}), ConfigError);
    CHECK_THROWS_AS(with_overrides(desk(), {{"epochs", "x"}}), ConfigError);
}

TEST_CASE("sweep runs the cartesian product") {
    TempDir dir("supermask_exp_sweep");
    const auto path = run_sweep(desk(2), {{"score_seed", {"0", "1"}}, {"prune_rate", {"0.3", "0.5", "0.7"}}},
                                dir.path);
    std::istringstream in(slurp(path));
    std::string line;
    std::getline(in, line);
    CHECK(line == "run,score_seed,prune_rate,final_loss,final_train_acc,final_test_acc,checkpoint_sha256");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].rfind("run0,0,0.3,", 0) == 0);
    CHECK(rows[1].rfind("run1,0,0.5,", 0) == 0);
    CHECK(rows[5].rfind("run5,1,0.7,", 0) == 0);
    for (int r = 0; r < 6; ++r) CHECK(fs::exists(dir.path / ("run" + std::to_string(r)) / "model.snfg"));
    // run0 equals a direct train with the same overrides
    const auto direct = run_train(with_overrides(desk(2), {{"score_seed", "0"}, {"prune_rate", "0.3"}}),
                                  dir.path / "direct");
    CHECK(rows[0].substr(rows[0].size() - 64) == direct.checkpoint_sha256);

    CHECK_THROWS_AS(run_sweep(desk(2), {{"epochs", {}}}, dir.path / "empty"), ConfigError);
    CHECK_THROWS_AS(run_sweep(desk(2), {{"epochs", {"1", "bad"}}}, dir.path / "bad"), ConfigError);
    CHECK_FALSE(fs::exists(dir.path / "bad" / "run0"));
}

TEST_CASE("dataset loading honours subsets") {
    RunConfig c = desk();
    c.subset = 50;
    const RunData d = load_run_data(c);
    CHECK(d.train.size() == 50);
    REQUIRE(d.test.has_value());
    CHECK(d.test->size() == 40);
    c.synth_test_n = 0;
    CHECK_FALSE(load_run_data(c).test.has_value());
}

} // TEST_SUITE
