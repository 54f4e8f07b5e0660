#include "oracles.hpp"

#include "supermask/data.hpp"
#include "supermask/init.hpp"
#include "supermask/ops.hpp"
#include "supermask/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace supermask;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> fake_records(std::size_t n, std::uint64_t seed, std::uint8_t max_label = 9) {
    RngStream rng(seed);
    std::vector<std::uint8_t> bytes(n * cifar::kRecordBytes);
    for (std::size_t i = 0; i < n; ++i) {
        bytes[i * cifar::kRecordBytes] = static_cast<std::uint8_t>(rng.below(max_label + 1u));
        for (std::size_t p = 1; p < cifar::kRecordBytes; ++p) {
            bytes[i * cifar::kRecordBytes + p] = static_cast<std::uint8_t>(rng.below(256));
        }
    }
    return bytes;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_SUITE("data") {

TEST_CASE("CIFAR records decode with per-channel standardization") {
    const auto bytes = fake_records(3, 1);
    const Dataset ds = decode_cifar_records(bytes, std::nullopt, "train");
    REQUIRE(ds.size() == 3);
    CHECK(ds.inputs.shape() == Shape{3, 3, 32, 32});
    CHECK(ds.num_classes == 10);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(ds.labels[i] == bytes[i * cifar::kRecordBytes]);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t px : {0u, 517u, 1023u}) {
                const double raw = bytes[i * cifar::kRecordBytes + 1 + c * 1024 + px];
                const double want = (raw / 255.0 - cifar::kMean[c]) / cifar::kStd[c];
                CHECK(ds.inputs[(i * 3 + c) * 1024 + px] == doctest::Approx(want).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("CIFAR decode errors") {
    auto bytes = fake_records(2, 2);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_cifar_records(bytes, std::nullopt, "train"), FormatError);
    auto bad = fake_records(2, 3);
    bad[cifar::kRecordBytes] = 10;
    CHECK_THROWS_AS(decode_cifar_records(bad, std::nullopt, "train"), FormatError);
}

TEST_CASE("CIFAR subset takes the first records and round-trips to bytes") {
    const auto bytes = fake_records(50, 4);
    const Dataset full = decode_cifar_records(bytes, std::nullopt, "test");
    const Dataset sub = decode_cifar_records(bytes, 20, "test");
    REQUIRE(sub.size() == 20);
    for (std::size_t i = 0; i < 20 * 3072; ++i) CHECK(sub.inputs[i] == full.inputs[i]);

    const auto pixels = denormalize_cifar(full);
    REQUIRE(pixels.size() == 50 * 3072);
    bool exact = true;
    for (std::size_t i = 0; i < 50; ++i) {
        exact = exact && std::memcmp(&pixels[i * 3072], &bytes[i * cifar::kRecordBytes + 1], 3072) == 0;
    }
    CHECK(exact);
}

TEST_CASE("load_cifar10 reads five train batches and the test batch") {
    TempDir dir("supermask_cifar_unit");
    std::vector<std::uint8_t> all_train;
    for (int b = 1; b <= 5; ++b) {
        const auto part = fake_records(12, 10 + b);
        all_train.insert(all_train.end(), part.begin(), part.end());
        write_bytes(dir.path / ("data_batch_" + std::to_string(b) + ".bin"), part);
    }
    write_bytes(dir.path / "test_batch.bin", fake_records(7, 20));
    const auto splits = load_cifar10(dir.path);
    CHECK(splits.train.size() == 60);
    CHECK(splits.test.size() == 7);
    // batch order is preserved: record 12 is the first of data_batch_2
    CHECK(splits.train.labels[12] == all_train[12 * cifar::kRecordBytes]);

    const auto sub = load_cifar10(dir.path, 30, 5);
    CHECK(sub.train.size() == 30);
    CHECK(sub.test.size() == 5);
    const auto again = load_cifar10(dir.path, 30, 5);
    CHECK(again.train.inputs == sub.train.inputs);

    fs::remove(dir.path / "test_batch.bin");
    CHECK_THROWS_AS(load_cifar10(dir.path), FormatError);
}

TEST_CASE("synthetic blobs are seeded and well formed") {
    const Dataset a = synth_blobs(400, 4, 16, 1.0, 5);
    const Dataset b = synth_blobs(400, 4, 16, 1.0, 5);
    const Dataset c = synth_blobs(400, 4, 16, 1.0, 6);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.inputs == c.inputs);
    CHECK(a.inputs.shape() == Shape{400, 16});
    for (std::size_t i = 0; i < 400; ++i) CHECK(a.labels[i] == static_cast<std::int32_t>(i % 4));

    CHECK_THROWS_AS(synth_blobs(10, 1, 4, 1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(synth_blobs(10, 4, 4, 1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(synth_blobs(8, 4, 3, 1.0, 0), InvalidArgument);
}

TEST_CASE("zero spread blobs are classified perfectly by the nearest center") {
    const Dataset ds = synth_blobs(200, 5, 8, 0.0, 7);
    const auto centers = blob_centers(5, 8);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 5; ++c) {
            double d = 0;
            for (std::size_t k = 0; k < 8; ++k) d += std::pow(ds.inputs[i * 8 + k] - centers[c][k], 2);
            if (d < best_d) best_d = d, best = c;
        }
        correct += static_cast<std::int32_t>(best) == ds.labels[i];
    }
    CHECK(correct == ds.size());
}

TEST_CASE("blob task calibration: a dense MLP reaches 0.9 test accuracy in 100 epochs") {
    // Dense 16-64-4 network trained directly on weights through the tape.
    // Guards the difficulty of the synthetic task the desk runs rely on.
    const Dataset train_set = synth_blobs(4000, 4, 16, 1.0, 0);
    const Dataset test_set = synth_blobs(1000, 4, 16, 1.0, 1);
    RngStream rng(0);
    std::vector<Tensor> w{kaiming_normal({64, 16}, 16, InitScheme{}, rng),
                          kaiming_normal({4, 64}, 64, InitScheme{}, rng)};
    std::vector<Tensor> buf{Tensor({64, 16}), Tensor({4, 64})};
    const int epochs = 100;
    for (int e = 0; e < epochs; ++e) {
        const double lr = cosine_lr(e, epochs, 0.05);
        for (const auto& batch : minibatches(train_set.size(), 128, 0, static_cast<std::uint64_t>(e))) {
            auto [x, y] = gather(train_set, batch);
            Tape<float> tape;
            const Var w0 = tape.leaf(w[0], true), w1 = tape.leaf(w[1], true);
            const Var h = ops::relu(tape, ops::linear(tape, tape.leaf(x), w0));
            const Var loss = ops::cross_entropy(tape, ops::linear(tape, h, w1), std::span<const std::int32_t>(y));
            tape.backward(loss);
            sgd_step(w[0], tape.grad(w0), buf[0], SgdParams{0.9, 0.0}, lr);
            sgd_step(w[1], tape.grad(w1), buf[1], SgdParams{0.9, 0.0}, lr);
        }
    }
    Tape<float> tape;
    const Var h = ops::relu(tape, ops::linear(tape, tape.leaf(test_set.inputs), tape.leaf(w[0])));
    const auto pred = argmax_rows(tape.value(ops::linear(tape, h, tape.leaf(w[1]))));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_set.labels[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
    MESSAGE("dense MLP blob test accuracy " << acc);
    CHECK(acc >= 0.9);
}

TEST_CASE("SBLB round-trip and rejection") {
    TempDir dir("supermask_sblb_unit");
    const Dataset ds = synth_blobs(60, 3, 5, 0.7, 3);
    write_sblb(dir.path / "a.sblb", ds);
    const Dataset back = read_sblb(dir.path / "a.sblb");
    CHECK(back.inputs == ds.inputs);
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == 3);
    CHECK(fs::file_size(dir.path / "a.sblb") == 16 + 60 * 5 * 4 + 60);

    auto bytes = read_file(dir.path / "a.sblb");
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SBLB");
    CHECK(bytes[4] == 60);  // n, little-endian
    CHECK(bytes[8] == 3);   // classes
    CHECK(bytes[12] == 5);  // dim
    bytes.pop_back();
    write_bytes(dir.path / "short.sblb", bytes);
    CHECK_THROWS_AS(read_sblb(dir.path / "short.sblb"), FormatError);
    bytes[0] = 'X';
    write_bytes(dir.path / "magic.sblb", bytes);
    CHECK_THROWS_AS(read_sblb(dir.path / "magic.sblb"), FormatError);
    CHECK_THROWS_AS(read_sblb(dir.path / "missing.sblb"), FormatError);
}

TEST_CASE("minibatches form a seeded bijection per epoch") {
    const auto e0 = minibatches(1000, 128, 3, 0);
    const auto e0_again = minibatches(1000, 128, 3, 0);
    const auto e1 = minibatches(1000, 128, 3, 1);
    CHECK(e0 == e0_again);
    CHECK(e0 != e1);
    CHECK(e0 != minibatches(1000, 128, 4, 0));
    REQUIRE(e0.size() == 8);
    CHECK(e0.back().size() == 1000 - 7 * 128);
    for (const auto& epoch : {e0, e1}) {
        std::vector<std::uint32_t> all;
        for (const auto& b : epoch) all.insert(all.end(), b.begin(), b.end());
        std::sort(all.begin(), all.end());
        REQUIRE(all.size() == 1000);
        for (std::uint32_t i = 0; i < 1000; ++i) CHECK(all[i] == i);
    }
    CHECK(minibatches(5, 1, 0, 0).size() == 5);
    CHECK_THROWS_AS(minibatches(5, 0, 0, 0), InvalidArgument);
}

TEST_CASE("gather copies samples in order") {
    const Dataset ds = synth_blobs(12, 3, 4, 1.0, 1);
    const std::vector<std::uint32_t> idx{5, 0, 11};
    auto [x, y] = gather(ds, idx);
    CHECK(x.shape() == Shape{3, 4});
    CHECK(y == std::vector<std::int32_t>{2, 0, 2});
    for (std::size_t k = 0; k < 4; ++k) CHECK(x[4 + k] == ds.inputs[k]);
    const std::vector<std::uint32_t> bad{12};
    CHECK_THROWS_AS(gather(ds, bad), InvalidArgument);
}

} // TEST_SUITE
