#include "supermask/data.hpp"

#include "supermask/error.hpp"
#include "supermask/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace supermask {

Shape Dataset::sample_shape() const {
    const Shape& s = inputs.shape();
    return Shape(s.begin() + 1, s.end());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw FormatError("short read on " + path.string());
    }
    return bytes;
}

Dataset decode_cifar_records(std::span<const std::uint8_t> bytes, std::optional<std::size_t> limit,
                             std::string split) {
    if (bytes.size() % cifar::kRecordBytes != 0) {
        throw FormatError("CIFAR data size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
    }
    std::size_t n = bytes.size() / cifar::kRecordBytes;
    if (limit) n = std::min(n, *limit);

    std::array<float, 256 * 3> lut{};
    for (std::size_t c = 0; c < 3; ++c) {
        for (int b = 0; b < 256; ++b) {
            lut[c * 256 + b] = static_cast<float>((b / 255.0 - cifar::kMean[c]) / cifar::kStd[c]);
        }
    }

    Dataset ds;
    ds.num_classes = cifar::kClasses;
    ds.split = std::move(split);
    ds.inputs = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    float* out = ds.inputs.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * cifar::kRecordBytes;
        if (rec[0] > 9) {
            throw FormatError("record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
        }
        ds.labels[i] = rec[0];
        for (std::size_t p = 0; p < cifar::kPixels; ++p) {
            out[i * cifar::kPixels + p] = lut[(p / 1024) * 256 + rec[1 + p]];
        }
    }
    return ds;
}

Dataset load_cifar_file(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    const auto bytes = read_file(path);
    try {
        return decode_cifar_records(bytes, limit, path.filename().string());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

namespace {

Dataset concat(std::vector<Dataset> parts, std::string split) {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    Dataset ds;
    ds.num_classes = cifar::kClasses;
    ds.split = std::move(split);
    ds.inputs = Tensor({n, 3, 32, 32});
    ds.labels.reserve(n);
    float* out = ds.inputs.ptr();
    for (const auto& p : parts) {
        std::memcpy(out, p.inputs.ptr(), p.inputs.size() * sizeof(float));
        out += p.inputs.size();
        ds.labels.insert(ds.labels.end(), p.labels.begin(), p.labels.end());
    }
    return ds;
}

} // namespace

CifarSplits load_cifar10(const std::filesystem::path& dir, std::optional<std::size_t> train_subset,
                         std::optional<std::size_t> test_subset) {
    std::vector<Dataset> parts;
    std::size_t remaining = train_subset.value_or(std::numeric_limits<std::size_t>::max());
    for (int b = 1; b <= 5 && remaining > 0; ++b) {
        parts.push_back(load_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), remaining));
        remaining -= parts.back().size();
    }
    CifarSplits out;
    out.train = concat(std::move(parts), "train");
    out.test = load_cifar_file(dir / "test_batch.bin", test_subset);
    out.test.split = "test";
    return out;
}

std::vector<std::uint8_t> denormalize_cifar(const Dataset& ds) {
    std::vector<std::uint8_t> out(ds.inputs.size());
    const float* in = ds.inputs.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t c = (i % cifar::kPixels) / 1024;
        const double v = (static_cast<double>(in[i]) * cifar::kStd[c] + cifar::kMean[c]) * 255.0;
        out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return out;
}

std::vector<std::vector<double>> blob_centers(std::size_t classes, std::size_t dim) {
    if (classes < 2) throw InvalidArgument("synthetic blobs need at least two classes");
    if (dim < classes) throw InvalidArgument("synthetic blobs need dim >= classes");
    const double k = static_cast<double>(classes);
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t d = 0; d < classes; ++d) centers[c][d] = 4.0 * ((c == d ? 1.0 : 0.0) - 1.0 / k);
    }
    return centers;
}

Dataset synth_blobs(std::size_t n, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed) {
    const auto centers = blob_centers(classes, dim);
    if (n % classes != 0) throw InvalidArgument("sample count must be divisible by the class count");
    if (!(spread >= 0.0) || !std::isfinite(spread)) throw InvalidArgument("spread must be finite and >= 0");
    RngStream rng = RngStream::derive(seed, StreamTag::synthetic);
    Dataset ds;
    ds.num_classes = classes;
    ds.split = "synthetic";
    ds.inputs = Tensor({n, dim});
    ds.labels.resize(n);
    float* out = ds.inputs.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        ds.labels[i] = static_cast<std::int32_t>(c);
        for (std::size_t d = 0; d < dim; ++d) {
            out[i * dim + d] = static_cast<float>(centers[c][d] + spread * rng.normal());
        }
    }
    return ds;
}

namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

} // namespace

void write_sblb(const std::filesystem::path& path, const Dataset& ds) {
    if (ds.inputs.rank() != 2) throw ShapeError("SBLB stores [N, D] feature datasets only");
    const std::size_t n = ds.size(), dim = ds.inputs.dim(1);
    std::vector<std::uint8_t> buf{'S', 'B', 'L', 'B'};
    put_u32(buf, static_cast<std::uint32_t>(n));
    put_u32(buf, static_cast<std::uint32_t>(ds.num_classes));
    put_u32(buf, static_cast<std::uint32_t>(dim));
    for (float v : ds.inputs.values()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(buf, bits);
    }
    for (std::int32_t l : ds.labels) buf.push_back(static_cast<std::uint8_t>(l));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

Dataset read_sblb(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "SBLB", 4) != 0) {
        throw FormatError(path.string() + ": not an SBLB file");
    }
    const std::size_t n = get_u32(&bytes[4]), classes = get_u32(&bytes[8]), dim = get_u32(&bytes[12]);
    if (bytes.size() != 16 + n * dim * 4 + n) throw FormatError(path.string() + ": size does not match header");
    if (classes < 2 || classes > 256) throw FormatError(path.string() + ": bad class count");
    Dataset ds;
    ds.num_classes = classes;
    ds.split = path.filename().string();
    ds.inputs = Tensor({n, dim});
    float* out = ds.inputs.ptr();
    for (std::size_t i = 0; i < n * dim; ++i) {
        const std::uint32_t bits = get_u32(&bytes[16 + 4 * i]);
        std::memcpy(out + i, &bits, 4);
    }
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t l = bytes[16 + n * dim * 4 + i];
        if (l >= classes) throw FormatError(path.string() + ": label out of range");
        ds.labels[i] = l;
    }
    return ds;
}

std::vector<std::vector<std::uint32_t>> minibatches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                    std::uint64_t epoch) {
    if (batch == 0) throw InvalidArgument("batch size must be at least 1");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    RngStream rng = RngStream::derive(seed, StreamTag::data_order, {epoch});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve((n + batch - 1) / batch);
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(n, start + batch);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::pair<Tensor, std::vector<std::int32_t>> gather(const Dataset& ds, std::span<const std::uint32_t> indices) {
    Shape shape = ds.inputs.shape();
    const std::size_t stride = shape_size(ds.sample_shape());
    shape[0] = indices.size();
    Tensor x(shape);
    std::vector<std::int32_t> y(indices.size());
    const float* src = ds.inputs.ptr();
    float* dst = x.ptr();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= ds.size()) throw InvalidArgument("sample index out of range");
        std::memcpy(dst + i * stride, src + indices[i] * stride, stride * sizeof(float));
        y[i] = ds.labels[indices[i]];
    }
    return {std::move(x), std::move(y)};
}

} // namespace supermask
