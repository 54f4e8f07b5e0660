#include "supermask/analysis.hpp"

#include "supermask/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <ostream>

namespace supermask {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) noexcept {
    m11 += o.m11;
    m10 += o.m10;
    m01 += o.m01;
    m00 += o.m00;
    return *this;
}

std::string_view to_string(Metric m) { return m == Metric::smc ? "smc" : "jaccard"; }

Metric parse_metric(std::string_view name) {
    if (name == "smc") return Metric::smc;
    if (name == "jaccard" || name == "ji") return Metric::jaccard;
    throw InvalidArgument("unknown metric '" + std::string(name) + "' (expected smc or jaccard)");
}

ConfusionCounts confusion(const Mask& a, const Mask& b) {
    if (a.size() != b.size()) {
        throw ShapeError("mask lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    ConfusionCounts c;
    const auto wa = a.words();
    const auto wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i) {
        c.m11 += static_cast<std::uint64_t>(std::popcount(wa[i] & wb[i]));
        c.m10 += static_cast<std::uint64_t>(std::popcount(wa[i] & ~wb[i]));
        c.m01 += static_cast<std::uint64_t>(std::popcount(~wa[i] & wb[i]));
    }
    c.m00 = a.size() - c.m11 - c.m10 - c.m01;
    return c;
}

double similarity_from_counts(const ConfusionCounts& c, Metric metric) {
    if (metric == Metric::smc) {
        if (c.total() == 0) throw InvalidArgument("smc of empty masks is undefined");
        return static_cast<double>(c.m11 + c.m00) / static_cast<double>(c.total());
    }
    const std::uint64_t u = c.m11 + c.m10 + c.m01;
    if (u == 0) throw InvalidArgument("jaccard index undefined: both masks are empty");
    return static_cast<double>(c.m11) / static_cast<double>(u);
}

double mask_similarity(const Mask& a, const Mask& b, Metric metric) {
    return similarity_from_counts(confusion(a, b), metric);
}

LayerwiseSimilarity layerwise_similarity(std::span<const Mask> a, std::span<const Mask> b, Metric metric) {
    if (a.size() != b.size()) {
        throw ShapeError("layer counts differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    LayerwiseSimilarity out;
    ConfusionCounts pooled;
    for (std::size_t l = 0; l < a.size(); ++l) {
        const ConfusionCounts c = confusion(a[l], b[l]);
        out.per_layer.push_back(similarity_from_counts(c, metric));
        pooled += c;
    }
    out.global = similarity_from_counts(pooled, metric);
    return out;
}

NormSplit frobenius_split(const Tensor& weights, const Mask& mask) {
    if (weights.size() != mask.size()) throw ShapeError("frobenius_split: mask does not match weights");
    double kept = 0.0, pruned = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double w = weights[i];
        (mask.test(i) ? kept : pruned) += w * w;
    }
    NormSplit s;
    s.kept = mask.kept();
    s.pruned = mask.size() - mask.kept();
    s.norm_kept = std::sqrt(kept);
    s.norm_pruned = std::sqrt(pruned);
    s.rms_kept = s.kept ? std::sqrt(kept / static_cast<double>(s.kept)) : 0.0;
    s.rms_pruned = s.pruned ? std::sqrt(pruned / static_cast<double>(s.pruned)) : 0.0;
    return s;
}

double random_mask_ji_baseline(std::size_t j, std::size_t k) {
    if (k == 0 || k > j) throw InvalidArgument("random_mask_ji_baseline requires 1 <= k <= j");
    const double overlap = static_cast<double>(k) * static_cast<double>(k) / static_cast<double>(j);
    return overlap / (2.0 * static_cast<double>(k) - overlap);
}

double random_mask_ji_exact(std::size_t j, std::size_t k) {
    if (k == 0 || k > j) throw InvalidArgument("random_mask_ji_exact requires 1 <= k <= j");
    auto log_choose = [](double n, double r) { return std::lgamma(n + 1) - std::lgamma(r + 1) - std::lgamma(n - r + 1); };
    const double jd = static_cast<double>(j), kd = static_cast<double>(k);
    const double log_total = log_choose(jd, kd);
    double expected = 0.0;
    for (std::size_t m = 2 * k > j ? 2 * k - j : 0; m <= k; ++m) {
        const double md = static_cast<double>(m);
        const double p = std::exp(log_choose(kd, md) + log_choose(jd - kd, kd - md) - log_total);
        expected += p * md / (2.0 * kd - md);
    }
    return expected;
}

SimilarityReport similarity_report(std::vector<std::string> model_ids, std::vector<std::string> layer_names,
                                   const std::vector<std::vector<Mask>>& masks, Metric metric) {
    const std::size_t m = masks.size();
    if (model_ids.size() != m) throw InvalidArgument("one id per model required");
    for (const auto& net : masks) {
        if (net.size() != layer_names.size()) throw ShapeError("model layer count does not match layer names");
    }
    SimilarityReport r;
    r.model_ids = std::move(model_ids);
    r.layer_names = std::move(layer_names);
    r.metric = metric;
    r.matrix.assign(m, std::vector<double>(m, 1.0));
    r.per_pair.assign(m, std::vector<LayerwiseSimilarity>(m));
    const std::size_t layers = r.layer_names.size();
    std::vector<SimilarityReport::LayerStats> stats(
        layers, {0.0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            LayerwiseSimilarity s = layerwise_similarity(masks[a], masks[b], metric);
            r.matrix[a][b] = r.matrix[b][a] = s.global;
            for (std::size_t l = 0; l < layers; ++l) {
                stats[l].mean += s.per_layer[l];
                stats[l].min = std::min(stats[l].min, s.per_layer[l]);
                stats[l].max = std::max(stats[l].max, s.per_layer[l]);
            }
            r.per_pair[a][b] = std::move(s);
            ++pairs;
        }
    }
    if (pairs > 0) {
        for (auto& s : stats) s.mean /= static_cast<double>(pairs);
        r.layer_stats = std::move(stats);
    }
    return r;
}

namespace {

struct PrecisionGuard {
    explicit PrecisionGuard(std::ostream& o) : out(o), old(o.precision(std::numeric_limits<double>::max_digits10)) {}
    ~PrecisionGuard() { out.precision(old); }
    std::ostream& out;
    std::streamsize old;
};

} // namespace

void write_similarity_rows(std::ostream& out, const SimilarityReport& report) {
    PrecisionGuard guard(out);
    out << "model_a,model_b,layer,metric,value\n";
    const std::size_t m = report.model_ids.size();
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            const auto& s = report.per_pair[a][b];
            for (std::size_t l = 0; l < report.layer_names.size(); ++l) {
                out << report.model_ids[a] << ',' << report.model_ids[b] << ',' << report.layer_names[l] << ','
                    << to_string(report.metric) << ',' << s.per_layer[l] << '\n';
            }
            out << report.model_ids[a] << ',' << report.model_ids[b] << ",global," << to_string(report.metric)
                << ',' << s.global << '\n';
        }
    }
}

void write_similarity_matrix(std::ostream& out, const SimilarityReport& report) {
    PrecisionGuard guard(out);
    out << "model";
    for (const auto& id : report.model_ids) out << ',' << id;
    out << '\n';
    for (std::size_t a = 0; a < report.model_ids.size(); ++a) {
        out << report.model_ids[a];
        for (double v : report.matrix[a]) out << ',' << v;
        out << '\n';
    }
}

void write_layer_summary(std::ostream& out, const SimilarityReport& report) {
    PrecisionGuard guard(out);
    out << "layer,metric,mean,min,max\n";
    for (std::size_t l = 0; l < report.layer_stats.size(); ++l) {
        const auto& s = report.layer_stats[l];
        out << report.layer_names[l] << ',' << to_string(report.metric) << ',' << s.mean << ',' << s.min << ','
            << s.max << '\n';
    }
}

void write_norm_rows(std::ostream& out, std::span<const std::string> layer_names, std::span<const NormSplit> rows) {
    if (layer_names.size() != rows.size()) throw ShapeError("one layer name per norm row required");
    PrecisionGuard guard(out);
    out << "layer,norm_kept,norm_pruned,rms_kept,rms_pruned\n";
    for (std::size_t l = 0; l < rows.size(); ++l) {
        out << layer_names[l] << ',' << rows[l].norm_kept << ',' << rows[l].norm_pruned << ',' << rows[l].rms_kept
            << ',' << rows[l].rms_pruned << '\n';
    }
}

} // namespace supermask
