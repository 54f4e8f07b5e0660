#include "supermask/analysis.hpp"
#include "supermask/experiment.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace supermask;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Shape shape_of(const py::buffer_info& info) {
    Shape s;
    for (auto d : info.shape) s.push_back(static_cast<std::size_t>(d));
    return s;
}

Tensor to_tensor(const FloatArray& a) {
    const auto info = a.request();
    const auto* p = static_cast<const float*>(info.ptr);
    return Tensor(shape_of(info), std::vector<float>(p, p + info.size));
}

py::array_t<float> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t> mask_to_numpy(const Mask& m) {
    const auto bits = m.to_bits();
    py::array_t<std::uint8_t> out(static_cast<py::ssize_t>(bits.size()));
    std::copy(bits.begin(), bits.end(), out.mutable_data());
    return out;
}

Mask to_mask(const ByteArray& a) {
    const auto info = a.request();
    const auto* p = static_cast<const std::uint8_t*>(info.ptr);
    std::vector<std::uint8_t> bits(p, p + info.size);
    for (auto& b : bits) b = b != 0;
    return Mask::from_bits(bits);
}

py::dict history_dict(const TrainHistory& h) {
    py::list epoch, loss, train_acc, test_acc, lr, events;
    for (const auto& r : h.epochs) {
        epoch.append(r.epoch);
        loss.append(r.loss);
        train_acc.append(r.train_acc);
        test_acc.append(r.test_acc);
        lr.append(r.lr);
        events.append(r.recycle_events);
    }
    py::dict d;
    d["epoch"] = epoch;
    d["loss"] = loss;
    d["train_acc"] = train_acc;
    d["test_acc"] = test_acc;
    d["lr"] = lr;
    d["recycle_events"] = events;
    return d;
}

py::dict checkpoint_dict(const Checkpoint& ck) {
    const Subnetwork sub = ck.reconstruct();
    py::list names, weights, masks, alphas;
    for (const auto& l : layer_layout(ck.arch)) names.append(l.name);
    for (std::size_t l = 0; l < sub.weights.size(); ++l) {
        weights.append(to_numpy(sub.weights[l]));
        masks.append(mask_to_numpy(sub.masks[l]));
        alphas.append(sub.alphas[l] ? py::cast(sub.alphas[l]->value) : py::none());
    }
    py::dict d;
    d["config"] = ck.config_text;
    d["algorithm"] = std::string(to_string(ck.algorithm));
    d["prune_rate"] = ck.prune_rate;
    d["layers"] = names;
    d["weights"] = weights;
    d["masks"] = masks;
    d["alphas"] = alphas;
    return d;
}

Metric metric_of(const std::string& name) { return parse_metric(name); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Supermask training: score-based subnetworks of frozen random networks";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def("kept_count", &kept_count, py::arg("j"), py::arg("prune_rate"));
    m.def(
        "compute_mask",
        [](const FloatArray& scores, double p) {
            const auto info = scores.request();
            const auto* ptr = static_cast<const float*>(info.ptr);
            return mask_to_numpy(compute_mask(std::span<const float>(ptr, info.size), p));
        },
        py::arg("scores"), py::arg("prune_rate"), "0/1 mask keeping the top round((1-p)j) entries by |score|.");
    m.def(
        "mask_similarity",
        [](const ByteArray& a, const ByteArray& b, const std::string& metric) {
            return mask_similarity(to_mask(a), to_mask(b), metric_of(metric));
        },
        py::arg("a"), py::arg("b"), py::arg("metric") = "jaccard");
    m.def("random_mask_ji_baseline", &random_mask_ji_baseline, py::arg("j"), py::arg("k"));
    m.def("random_mask_ji_exact", &random_mask_ji_exact, py::arg("j"), py::arg("k"));
    m.def(
        "frobenius_split",
        [](const FloatArray& w, const ByteArray& mask) {
            const NormSplit s = frobenius_split(to_tensor(w).reshaped({static_cast<std::size_t>(w.size())}),
                                                to_mask(mask));
            py::dict d;
            d["norm_kept"] = s.norm_kept;
            d["norm_pruned"] = s.norm_pruned;
            d["rms_kept"] = s.rms_kept;
            d["rms_pruned"] = s.rms_pruned;
            return d;
        },
        py::arg("weights"), py::arg("mask"));
    m.def(
        "recycle_weights",
        [](const FloatArray& weights, const FloatArray& scores, double rate, bool second_tier) {
            const Tensor w = to_tensor(weights);
            ScoredTensor layer(w, to_tensor(scores), static_cast<std::int64_t>(w.size()), 0);
            const RecycleSpec spec{rate, 1, second_tier ? ReweightVariant::iwr_second_tier : ReweightVariant::iwr};
            if (second_tier) {
                recycle_second_tier(layer, spec);
            } else {
                recycle_weights(layer, spec);
            }
            return to_numpy(layer.weights);
        },
        py::arg("weights"), py::arg("scores"), py::arg("rate"), py::arg("second_tier") = false,
        "Returns recycled weights; the inputs are not modified.");

    m.def(
        "parameter_count",
        [](int depth, double width) {
            ArchSpec a;
            a.depth = depth;
            a.width = width;
            return parameter_count(a);
        },
        py::arg("depth"), py::arg("width") = 1.0, "Scored weights of Conv-depth on 3x32x32 CIFAR inputs.");
    m.def(
        "kept_params",
        [](int depth, double width, double p) {
            ArchSpec a;
            a.depth = depth;
            a.width = width;
            return kept_params(a, p);
        },
        py::arg("depth"), py::arg("width"), py::arg("prune_rate"));

    m.def(
        "synth_blobs",
        [](std::size_t n, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed) {
            const Dataset d = synth_blobs(n, classes, dim, spread, seed);
            return py::make_tuple(to_numpy(d.inputs), py::array_t<std::int32_t>(
                                                          static_cast<py::ssize_t>(d.labels.size()), d.labels.data()));
        },
        py::arg("n"), py::arg("classes"), py::arg("dim"), py::arg("spread") = 1.0, py::arg("seed") = 0);

    m.def("normalize_config", [](const std::string& text) { return to_text(parse_config(text)); },
          py::arg("text"), "Parses a config and returns its canonical text.");
    m.def(
        "train",
        [](const std::string& config_text, const std::filesystem::path& out_dir) {
            const RunConfig cfg = parse_config(config_text);
            TrainArtifacts a;
            {
                py::gil_scoped_release release;
                a = run_train(cfg, out_dir);
            }
            py::dict d;
            d["checkpoint"] = a.checkpoint;
            d["history"] = a.history;
            d["sha256"] = a.checkpoint_sha256;
            d["metrics"] = history_dict(a.history_rows);
            return d;
        },
        py::arg("config"), py::arg("out_dir"), "Trains one run; writes model.snfg and history.csv.");
    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) { return checkpoint_dict(load_checkpoint(path)); },
        py::arg("path"), "Reconstructed weights, masks and alphas of a checkpoint.");
    m.def(
        "compare_checkpoints",
        [](const std::vector<std::filesystem::path>& paths, const std::string& metric) {
            const SimilarityReport r = compare_checkpoints(paths, metric_of(metric));
            py::dict d;
            d["models"] = r.model_ids;
            d["layers"] = r.layer_names;
            d["matrix"] = r.matrix;
            return d;
        },
        py::arg("paths"), py::arg("metric") = "jaccard");
    m.def(
        "norm_report",
        [](const std::filesystem::path& path) {
            const NormReport r = norm_report(load_checkpoint(path));
            py::list rows;
            for (std::size_t l = 0; l < r.rows.size(); ++l) {
                rows.append(py::make_tuple(r.layer_names[l], r.rows[l].norm_kept, r.rows[l].norm_pruned,
                                           r.rows[l].rms_kept, r.rows[l].rms_pruned));
            }
            return rows;
        },
        py::arg("path"), "(layer, norm_kept, norm_pruned, rms_kept, rms_pruned) per layer.");
    m.def(
        "sha256_hex",
        [](const py::bytes& b) {
            const std::string s = b;
            return to_hex(sha256(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
        },
        py::arg("data"));
}
