#include "supermask/checkpoint.hpp"

#include "supermask/data.hpp"
#include "supermask/error.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <memory>

namespace supermask {

Digest sha256(std::span<const std::uint8_t> bytes) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw Error("SHA-256 computation failed");
    }
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(kDigits[b >> 4]);
        s.push_back(kDigits[b & 15]);
    }
    return s;
}

Digest weights_digest(const Model& model) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
    for (const auto& layer : model.layers) {
        static_assert(std::endian::native == std::endian::little, "weights are hashed as little-endian floats");
        if (EVP_DigestUpdate(ctx.get(), layer.weights.ptr(), layer.weights.size() * sizeof(float)) != 1) {
            throw Error("SHA-256 update failed");
        }
    }
    Digest out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) throw Error("SHA-256 final failed");
    return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'N', 'F', 'G'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw FormatError("checkpoint truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

void write_shape(Writer& w, const Shape& s) {
    w.u8(static_cast<std::uint8_t>(s.size()));
    for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
}

Shape read_shape(Reader& r) {
    Shape s(r.u8());
    for (auto& d : s) d = r.u32();
    return s;
}

template <typename E>
E checked_enum(std::uint8_t v, std::uint8_t max, const char* what) {
    if (v > max) throw FormatError(std::string("checkpoint has unknown ") + what + " " + std::to_string(v));
    return static_cast<E>(v);
}

} // namespace

Checkpoint Checkpoint::from_model(const Model& model, std::string config_text) {
    Checkpoint c;
    c.config_text = std::move(config_text);
    c.arch = model.arch;
    c.algorithm = model.algorithm;
    c.prune_rate = model.prune_rate;
    auto selections = select_layers(model);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const ScoredTensor& layer = model.layers[l];
        LayerRecord rec;
        rec.layer_index = static_cast<std::uint32_t>(l);
        rec.shape = layer.weights.shape();
        rec.scheme = layer.scheme;
        rec.fan_in = layer.fan_in;
        rec.weight_seed = model.seeds.weight_seed;
        rec.mask = std::move(selections[l].mask);
        rec.alpha = selections[l].alpha;
        for (const auto& e : model.edit_log) {
            if (edit_layer(e) == l) rec.edits.push_back(e);
        }
        c.layers.push_back(std::move(rec));
    }
    c.batch_norms = model.batch_norms;
    return c;
}

Subnetwork Checkpoint::reconstruct() const {
    const auto layout = layer_layout(arch);
    if (layout.size() != layers.size()) throw FormatError("checkpoint layer count does not match architecture");
    const Topology topo = make_topology(arch);
    if (topo.batch_norm_channels.size() != batch_norms.size()) {
        throw FormatError("checkpoint batch-norm count does not match architecture");
    }
    Subnetwork sub;
    sub.arch = arch;
    sub.algorithm = algorithm;
    sub.prune_rate = prune_rate;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerRecord& rec = layers[l];
        if (rec.layer_index != l || rec.shape != layout[l].weight_shape || rec.fan_in != layout[l].fan_in) {
            throw FormatError("checkpoint layer " + std::to_string(l) + " does not match architecture");
        }
        if (rec.mask.size() != shape_size(rec.shape)) throw FormatError("mask length does not match layer");
        if ((algorithm == Algorithm::biprop) != rec.alpha.has_value()) {
            throw FormatError("alpha presence does not match algorithm");
        }
        Tensor w = initial_weights(layout[l], l, rec.scheme, rec.weight_seed);
        for (const auto& e : rec.edits) {
            if (edit_layer(e) != l) throw FormatError("edit filed under the wrong layer");
            apply_edit(e, w);
        }
        sub.weights.push_back(std::move(w));
        sub.masks.push_back(rec.mask);
        sub.alphas.push_back(rec.alpha);
    }
    for (std::size_t i = 0; i < batch_norms.size(); ++i) {
        if (batch_norms[i].channels() != topo.batch_norm_channels[i]) {
            throw FormatError("batch-norm channel count does not match architecture");
        }
    }
    sub.batch_norms = batch_norms;
    return sub;
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
    Writer w;
    for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.config_text.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(c.config_text.data()), c.config_text.size()});

    w.u8(static_cast<std::uint8_t>(c.arch.kind));
    w.u32(static_cast<std::uint32_t>(c.arch.depth));
    w.f64(c.arch.width);
    w.u32(static_cast<std::uint32_t>(c.arch.num_classes));
    write_shape(w, c.arch.input_shape);
    w.u32(static_cast<std::uint32_t>(c.arch.hidden.size()));
    for (auto h : c.arch.hidden) w.u32(static_cast<std::uint32_t>(h));
    w.u8(static_cast<std::uint8_t>(c.algorithm));
    w.f64(c.prune_rate);

    w.u32(static_cast<std::uint32_t>(c.layers.size()));
    for (const auto& rec : c.layers) {
        w.u32(rec.layer_index);
        write_shape(w, rec.shape);
        w.u8(static_cast<std::uint8_t>(rec.scheme.kind));
        w.u8(rec.scheme.scale_fan ? 1 : 0);
        w.f64(rec.scheme.prune_rate);
        w.u32(static_cast<std::uint32_t>(rec.fan_in));
        w.u64(rec.weight_seed);
        w.u64(rec.mask.kept());
        w.u8(rec.alpha ? 1 : 0);
        w.f32(rec.alpha ? rec.alpha->value : 0.0f);
        const auto packed = rec.mask.packed_bytes();
        w.u64(packed.size());
        w.bytes(packed);
        w.u32(static_cast<std::uint32_t>(rec.edits.size()));
        for (const auto& e : rec.edits) {
            if (const auto* p = std::get_if<RecyclePatch>(&e)) {
                w.u8(1);
                w.u32(static_cast<std::uint32_t>(p->pairs.size()));
                for (const auto& pr : p->pairs) {
                    w.u32(pr.dest);
                    w.u32(pr.source);
                }
            } else {
                const auto& s = std::get<ResamplePatch>(e);
                w.u8(2);
                w.u32(static_cast<std::uint32_t>(s.indices.size()));
                for (std::size_t i = 0; i < s.indices.size(); ++i) {
                    w.u32(s.indices[i]);
                    w.f32(s.values[i]);
                }
            }
        }
    }

    w.u32(static_cast<std::uint32_t>(c.batch_norms.size()));
    for (const auto& bn : c.batch_norms) {
        w.u32(static_cast<std::uint32_t>(bn.channels()));
        for (float v : bn.running_mean) w.f32(v);
        for (float v : bn.running_var) w.f32(v);
    }
    const Digest d = sha256(w.buffer());
    w.bytes(d);
    return std::move(w.buffer());
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
    if (bytes.size() < 4 + 2 + 32) throw FormatError("checkpoint hash mismatch (file truncated)");
    const auto body = bytes.first(bytes.size() - 32);
    const Digest expected = sha256(body);
    if (std::memcmp(expected.data(), bytes.data() + body.size(), 32) != 0) {
        throw FormatError("checkpoint hash mismatch");
    }
    Reader r(body);
    r.bytes(4);
    if (const auto v = r.u16(); v != kCheckpointVersion) {
        throw FormatError("unknown checkpoint version " + std::to_string(v));
    }
    Checkpoint c;
    const auto cfg = r.bytes(r.u32());
    c.config_text.assign(reinterpret_cast<const char*>(cfg.data()), cfg.size());

    c.arch.kind = checked_enum<ArchKind>(r.u8(), 1, "arch kind");
    c.arch.depth = static_cast<int>(r.u32());
    c.arch.width = r.f64();
    c.arch.num_classes = r.u32();
    c.arch.input_shape = read_shape(r);
    c.arch.hidden.resize(r.u32());
    for (auto& h : c.arch.hidden) h = r.u32();
    c.algorithm = checked_enum<Algorithm>(r.u8(), 1, "algorithm");
    c.prune_rate = r.f64();

    const std::uint32_t layer_count = r.u32();
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        LayerRecord rec;
        rec.layer_index = r.u32();
        rec.shape = read_shape(r);
        rec.scheme.kind = checked_enum<InitKind>(r.u8(), 2, "init kind");
        rec.scheme.scale_fan = r.u8() != 0;
        rec.scheme.prune_rate = r.f64();
        rec.fan_in = r.u32();
        rec.weight_seed = r.u64();
        const std::uint64_t kept = r.u64();
        const bool has_alpha = r.u8() != 0;
        const float alpha = r.f32();
        if (has_alpha) rec.alpha = LayerAlpha{alpha};
        const auto packed = r.bytes(r.u64());
        rec.mask = Mask::from_packed(shape_size(rec.shape), packed, c.prune_rate);
        if (rec.mask.kept() != kept) throw FormatError("mask popcount does not match stored kept count");
        const std::uint32_t edits = r.u32();
        for (std::uint32_t e = 0; e < edits; ++e) {
            const std::uint8_t kind = r.u8();
            const std::uint32_t n = r.u32();
            if (kind == 1) {
                RecyclePatch p{l, {}};
                p.pairs.resize(n);
                for (auto& pr : p.pairs) {
                    pr.dest = r.u32();
                    pr.source = r.u32();
                }
                rec.edits.emplace_back(std::move(p));
            } else if (kind == 2) {
                ResamplePatch p{l, {}, {}};
                p.indices.resize(n);
                p.values.resize(n);
                for (std::uint32_t i = 0; i < n; ++i) {
                    p.indices[i] = r.u32();
                    p.values[i] = r.f32();
                }
                rec.edits.emplace_back(std::move(p));
            } else {
                throw FormatError("unknown edit kind " + std::to_string(kind));
            }
        }
        c.layers.push_back(std::move(rec));
    }
    const std::uint32_t bn_count = r.u32();
    for (std::uint32_t i = 0; i < bn_count; ++i) {
        BatchNormState<float> bn(r.u32());
        for (auto& v : bn.running_mean) v = r.f32();
        for (auto& v : bn.running_var) v = r.f32();
        c.batch_norms.push_back(std::move(bn));
    }
    if (!r.done()) throw FormatError("trailing bytes in checkpoint");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return deserialize(bytes);
    } catch (const Error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace supermask
