#pragma once

#include "supermask/subnet.hpp"
#include "supermask/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace supermask {

/// Joint counts of two equal-length masks: m10 = on in a only, m01 = on in b only.
struct ConfusionCounts {
    std::uint64_t m11 = 0;
    std::uint64_t m10 = 0;
    std::uint64_t m01 = 0;
    std::uint64_t m00 = 0;

    std::uint64_t total() const noexcept { return m11 + m10 + m01 + m00; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept;
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

enum class Metric : std::uint8_t { smc = 0, jaccard = 1 };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

ConfusionCounts confusion(const Mask& a, const Mask& b);

/// smc = (m11 + m00) / j; jaccard = m11 / (m11 + m10 + m01). Jaccard of two
/// empty masks is undefined and throws InvalidArgument.
double similarity_from_counts(const ConfusionCounts& c, Metric metric);
double mask_similarity(const Mask& a, const Mask& b, Metric metric);

struct LayerwiseSimilarity {
    std::vector<double> per_layer;
    double global = 0.0; ///< from counts pooled over all layers
};

LayerwiseSimilarity layerwise_similarity(std::span<const Mask> a, std::span<const Mask> b, Metric metric);

struct NormSplit {
    double norm_kept = 0.0;
    double norm_pruned = 0.0;
    double rms_kept = 0.0;   ///< norm_kept / sqrt(#kept), 0 when nothing kept
    double rms_pruned = 0.0; ///< norm_pruned / sqrt(#pruned), 0 when nothing pruned
    std::size_t kept = 0;
    std::size_t pruned = 0;
};

/// Frobenius norms of theta over kept and pruned positions.
NormSplit frobenius_split(const Tensor& weights, const Mask& mask);

/// Expected JI of two independent uniform k-subsets of j positions,
/// approximating the overlap by its mean k^2 / j.
double random_mask_ji_baseline(std::size_t j, std::size_t k);

/// Exact E[JI] for the same setting: the overlap is hypergeometric. The
/// approximation above drifts from it for small j (j=4, k=1: 1/7 vs 1/4).
double random_mask_ji_exact(std::size_t j, std::size_t k);

/// Pairwise similarity of m models sharing one architecture.
struct SimilarityReport {
    struct LayerStats {
        double mean = 0.0;
        double min = 0.0;
        double max = 0.0;
    };

    std::vector<std::string> model_ids;
    std::vector<std::string> layer_names;
    Metric metric = Metric::jaccard;
    std::vector<std::vector<double>> matrix; ///< global value per model pair
    /// per_pair[a][b] for a < b; empty otherwise.
    std::vector<std::vector<LayerwiseSimilarity>> per_pair;
    /// Over unordered pairs a < b; empty with fewer than two models.
    std::vector<LayerStats> layer_stats;
};

SimilarityReport similarity_report(std::vector<std::string> model_ids, std::vector<std::string> layer_names,
                                   const std::vector<std::vector<Mask>>& masks, Metric metric);

/// Rows (model_a, model_b, layer, metric, value) for every unordered pair;
/// layer "global" carries the pooled value.
void write_similarity_rows(std::ostream& out, const SimilarityReport& report);
/// Square matrix with a header row of model ids.
void write_similarity_matrix(std::ostream& out, const SimilarityReport& report);
/// Rows (layer, metric, mean, min, max) over model pairs.
void write_layer_summary(std::ostream& out, const SimilarityReport& report);

/// Rows (layer, norm_kept, norm_pruned, rms_kept, rms_pruned).
void write_norm_rows(std::ostream& out, std::span<const std::string> layer_names, std::span<const NormSplit> rows);

} // namespace supermask
