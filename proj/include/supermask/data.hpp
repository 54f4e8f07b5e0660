#pragma once

#include "supermask/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace supermask {

/// Immutable labelled split. `inputs` is [N, C, H, W] for images or [N, D]
/// for feature vectors.
struct Dataset {
    Tensor inputs;
    std::vector<std::int32_t> labels;
    std::size_t num_classes = 0;
    std::string split;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
};

namespace cifar {
inline constexpr std::size_t kRecordBytes = 3073;
inline constexpr std::size_t kPixels = 3072;
inline constexpr std::size_t kClasses = 10;
inline constexpr std::array<double, 3> kMean{0.4914, 0.4822, 0.4465};
inline constexpr std::array<double, 3> kStd{0.2470, 0.2435, 0.2616};
} // namespace cifar

/// Decodes raw CIFAR records (label byte + R, G, B planes). At most `limit`
/// records are taken from the front. Throws FormatError on a partial record
/// or a label above 9.
Dataset decode_cifar_records(std::span<const std::uint8_t> bytes, std::optional<std::size_t> limit,
                             std::string split);

/// Reads and decodes one batch file.
Dataset load_cifar_file(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);

struct CifarSplits {
    Dataset train;
    Dataset test;
};

/// data_batch_1..5.bin and test_batch.bin from `dir`. `train_subset` and
/// `test_subset` keep prefixes of each split.
CifarSplits load_cifar10(const std::filesystem::path& dir, std::optional<std::size_t> train_subset = std::nullopt,
                         std::optional<std::size_t> test_subset = std::nullopt);

/// Inverse of the normalization: one byte per pixel in record plane order.
std::vector<std::uint8_t> denormalize_cifar(const Dataset& ds);

/// Class centers 4 * (e_c - mean_k e_k) in `dim` dimensions.
std::vector<std::vector<double>> blob_centers(std::size_t classes, std::size_t dim);

/// Isotropic Gaussian blobs; sample i has label i % classes. Requires
/// classes >= 2, dim >= classes and n divisible by classes.
Dataset synth_blobs(std::size_t n, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed);

/// SBLB file: "SBLB", u32 n, u32 classes, u32 dim, f32 features, u8 labels.
void write_sblb(const std::filesystem::path& path, const Dataset& ds);
Dataset read_sblb(const std::filesystem::path& path);

/// Batches of a seeded shuffle of [0, n); the permutation depends only on
/// (seed, epoch). The last batch may be short.
std::vector<std::vector<std::uint32_t>> minibatches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                    std::uint64_t epoch);

/// Copies the selected samples into a batch tensor and label list.
std::pair<Tensor, std::vector<std::int32_t>> gather(const Dataset& ds, std::span<const std::uint32_t> indices);

/// Whole file as bytes; FormatError when unreadable.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

} // namespace supermask
