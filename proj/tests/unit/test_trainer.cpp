#include "supermask/checkpoint.hpp"
#include "supermask/data.hpp"
#include "supermask/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace supermask;

namespace {

ArchSpec tiny_mlp(std::size_t dim, std::size_t classes, std::vector<std::size_t> hidden = {32, 32}) {
    ArchSpec a;
    a.kind = ArchKind::mlp;
    a.input_shape = {dim};
    a.num_classes = classes;
    a.hidden = std::move(hidden);
    return a;
}

Model tiny_model(Algorithm alg = Algorithm::edge_popup, std::uint64_t score_seed = 0) {
    const InitScheme scheme{alg == Algorithm::biprop ? InitKind::kaiming_normal : InitKind::signed_constant, false,
                            0.5};
    return build_model(tiny_mlp(8, 4), alg, 0.5, scheme, ModelSeeds{0, score_seed});
}

TrainOptions quick(int epochs, RecycleSpec reweight = {}) {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = 32;
    o.lr = 0.1;
    o.reweight = reweight;
    return o;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("cosine schedule") {
    CHECK(cosine_lr(0, 250, 0.1) == 0.1);
    CHECK(cosine_lr(250, 250, 0.1) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_lr(125, 250, 0.1) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.1), InvalidArgument);
    CHECK_THROWS_AS(cosine_lr(11, 10, 0.1), InvalidArgument);
    CHECK_THROWS_AS(cosine_lr(-1, 10, 0.1), InvalidArgument);
}

TEST_CASE("sgd step examples") {
    Tensor s({1}, 1.0f), b({1}, 0.0f);
    sgd_step(s, Tensor({1}, 2.0f), b, SgdParams{0.0, 0.0}, 0.1);
    CHECK(s[0] == 0.8f);

    Tensor z({3}, {1, -2, 3}), zb({3});
    sgd_step(z, Tensor({3}), zb, SgdParams{0.9, 0.0}, 0.1);
    CHECK(z.values() == std::vector<float>{1, -2, 3});

    // two momentum steps against the scalar recurrence, in float
    const float mu = 0.9f, wd = 1e-4f, lr = 0.1f;
    float hs = 0.5f, hb = 0.0f;
    Tensor ms({1}, 0.5f), mb({1});
    for (float g : {0.3f, -0.7f}) {
        const float gi = g + wd * hs;
        hb = mu * hb + gi;
        hs = hs - lr * hb;
        sgd_step(ms, Tensor({1}, g), mb, SgdParams{0.9, 1e-4}, 0.1);
        CHECK(ms[0] == hs);
        CHECK(mb[0] == hb);
    }

    Tensor nan_grad({1}, std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS_AS(sgd_step(s, nan_grad, b, SgdParams{}, 0.1), NumericError);
    CHECK_THROWS_AS(sgd_step(s, Tensor({2}), b, SgdParams{}, 0.1), ShapeError);
}

TEST_CASE("optimizer state holds only score buffers") {
    const Model m = tiny_model();
    const OptimState st = OptimState::for_model(m, SgdParams{});
    REQUIRE(st.buffers.size() == m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) CHECK(st.buffers[l].shape() == m.layers[l].scores.shape());
}

TEST_CASE("zero epochs leave the model untouched") {
    Model m = tiny_model();
    const auto before = weights_digest(m);
    const auto scores = m.layers[0].scores;
    const Dataset data = synth_blobs(64, 4, 8, 1.0, 1);
    const TrainHistory h = train(m, quick(0), data);
    CHECK(h.epochs.empty());
    CHECK(weights_digest(m) == before);
    CHECK(m.layers[0].scores == scores);
}

TEST_CASE("history records the cosine schedule and the run is bit-reproducible") {
    const Dataset data = synth_blobs(256, 4, 8, 1.0, 2);
    const Dataset test = synth_blobs(64, 4, 8, 1.0, 3);
    auto run = [&] {
        Model m = tiny_model(Algorithm::biprop);
        TrainHistory h = train(m, quick(6), data, &test);
        return std::make_pair(std::move(m), std::move(h));
    };
    const auto [m1, h1] = run();
    const auto [m2, h2] = run();
    REQUIRE(h1.epochs.size() == 6);
    for (std::size_t e = 0; e < 6; ++e) {
        CHECK(h1.epochs[e].epoch == static_cast<int>(e + 1));
        CHECK(h1.epochs[e].lr == cosine_lr(static_cast<int>(e), 6, 0.1));
        CHECK(h1.epochs[e].loss == h2.epochs[e].loss);
        CHECK(h1.epochs[e].test_acc == h2.epochs[e].test_acc);
    }
    const auto s1 = select_layers(m1);
    const auto s2 = select_layers(m2);
    for (std::size_t l = 0; l < s1.size(); ++l) {
        CHECK(s1[l].mask == s2[l].mask);
        CHECK(s1[l].alpha->value == s2[l].alpha->value);
    }
    std::ostringstream a, b;
    write_history_csv(a, h1);
    write_history_csv(b, h2);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("epoch,loss,train_acc,test_acc,lr,recycle_events\n", 0) == 0);
}

TEST_CASE("weights stay frozen without a reweight variant") {
    Model m = tiny_model();
    const auto before = weights_digest(m);
    const Dataset data = synth_blobs(128, 4, 8, 1.0, 4);
    train(m, quick(5), data, nullptr, [&](const EpochRecord&) { CHECK(weights_digest(m) == before); });
    CHECK(m.edit_log.empty());
}

TEST_CASE("recycling fires exactly at epochs 10 and 20 of 25") {
    Model m = tiny_model();
    const Dataset data = synth_blobs(128, 4, 8, 1.0, 5);
    Digest last = weights_digest(m);
    std::vector<int> changed;
    const auto h = train(m, quick(25, RecycleSpec{0.2, 10, ReweightVariant::iwr}), data, nullptr,
                         [&](const EpochRecord& r) {
                             const Digest now = weights_digest(m);
                             if (now != last) changed.push_back(r.epoch);
                             last = now;
                         });
    std::vector<int> events;
    for (const auto& r : h.epochs) {
        if (r.recycle_events != 0) events.push_back(r.epoch);
    }
    CHECK(events == std::vector<int>{10, 20});
    CHECK(changed == std::vector<int>{10, 20});
    CHECK(h.epochs[9].recycle_events == m.layers.size());
    CHECK(m.edit_log.size() == 2 * m.layers.size());
}

TEST_CASE("iterand changes weights once per epoch and logs replayable edits") {
    Model m = tiny_model();
    const Model pristine = m;
    const Dataset data = synth_blobs(128, 4, 8, 1.0, 6);
    const auto h = train(m, quick(3, RecycleSpec{0.1, 1, ReweightVariant::iterand}), data);
    for (const auto& r : h.epochs) CHECK(r.recycle_events == m.layers.size());
    std::vector<Tensor> replay;
    for (const auto& l : pristine.layers) replay.push_back(l.weights);
    for (const auto& e : m.edit_log) apply_edit(e, replay[edit_layer(e)]);
    for (std::size_t l = 0; l < replay.size(); ++l) CHECK(replay[l] == m.layers[l].weights);
}

TEST_CASE("training diverges loudly on overflowing scores") {
    Model m = tiny_model();
    const Dataset data = synth_blobs(64, 4, 8, 1.0, 7);
    TrainOptions o = quick(3);
    o.lr = 1e38;
    try {
        train(m, o, data);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch >= 1);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("evaluate with oracle logits, constant logits and batch sizes") {
    // A single linear layer whose rows are the blob centers scores each
    // noise-free sample highest on its own class.
    const Dataset clean = synth_blobs(40, 4, 6, 0.0, 8);
    const ArchSpec arch = tiny_mlp(6, 4, {});
    Subnetwork net;
    net.arch = arch;
    net.algorithm = Algorithm::edge_popup;
    net.prune_rate = 0.0;
    Tensor w({4, 6});
    const auto centers = blob_centers(4, 6);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t d = 0; d < 6; ++d) w[c * 6 + d] = static_cast<float>(centers[c][d]);
    net.weights = {w};
    net.masks = {Mask::from_bits(std::vector<std::uint8_t>(24, 1))};
    net.alphas = {std::nullopt};
    CHECK(evaluate(net, clean) == 1.0);

    // all-zero weights: every logit ties, class 0 wins, accuracy 1/10
    const Dataset ten = synth_blobs(100, 10, 10, 1.0, 9);
    Subnetwork flat = net;
    flat.arch = tiny_mlp(10, 10, {});
    flat.weights = {Tensor({10, 10})};
    flat.masks = {Mask::from_bits(std::vector<std::uint8_t>(100, 1))};
    CHECK(evaluate(flat, ten) == doctest::Approx(0.1));

    Model m = tiny_model();
    const Dataset data = synth_blobs(200, 4, 8, 1.0, 10);
    train(m, quick(2), data);
    CHECK(evaluate(m, data, 1) == evaluate(m, data, 128));

    Dataset empty = data;
    empty.labels.clear();
    empty.inputs = Tensor({0, 8});
    CHECK_THROWS_AS(evaluate(m, empty), InvalidArgument);
}

TEST_CASE("argmax breaks ties toward the lower class") {
    const Tensor logits({3, 3}, {1, 1, 0, 0, 2, 2, 5, 1, 5});
    CHECK(argmax_rows(logits) == std::vector<std::int32_t>{0, 1, 0});
}

TEST_CASE("eval_every skips intermediate test evaluations") {
    Model m = tiny_model();
    const Dataset data = synth_blobs(64, 4, 8, 1.0, 11);
    TrainOptions o = quick(5);
    o.eval_every = 2;
    const auto h = train(m, o, data, &data);
    CHECK(std::isnan(h.epochs[0].test_acc));
    CHECK_FALSE(std::isnan(h.epochs[1].test_acc));
    CHECK(std::isnan(h.epochs[2].test_acc));
    CHECK_FALSE(std::isnan(h.epochs[4].test_acc)); // last epoch always
}

} // TEST_SUITE
