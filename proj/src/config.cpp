#include "supermask/config.hpp"

#include "supermask/data.hpp"
#include "supermask/error.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace supermask {

std::string_view to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::synth: return "synth";
    case DatasetKind::sblb: return "sblb";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
    if (name == "cifar10") return DatasetKind::cifar10;
    if (name == "synth") return DatasetKind::synth;
    if (name == "sblb") return DatasetKind::sblb;
    throw InvalidArgument("unknown dataset '" + std::string(name) + "' (expected cifar10, synth or sblb)");
}

RecycleSpec RunConfig::recycle_spec() const {
    RecycleSpec spec;
    spec.variant = variant;
    const bool iterand = variant == ReweightVariant::iterand;
    spec.rate = recycle_rate.value_or(iterand ? 0.1 : 0.2);
    spec.period = period.value_or(iterand ? 1 : 10);
    return spec;
}

InitScheme RunConfig::weight_scheme() const {
    InitScheme s;
    s.kind = weight_init.value_or(algorithm == Algorithm::biprop ? InitKind::kaiming_normal
                                                                 : InitKind::signed_constant);
    const bool recycling = variant == ReweightVariant::iwr || variant == ReweightVariant::iwr_second_tier;
    s.scale_fan = scale_fan.value_or(algorithm == Algorithm::biprop && !recycling);
    s.prune_rate = prune_rate;
    return s;
}

TrainOptions RunConfig::train_options() const {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.eval_every = eval_every;
    o.lr = lr;
    o.sgd.momentum = momentum;
    o.sgd.weight_decay = weight_decay;
    o.data_seed = data_seed;
    o.reweight = recycle_spec();
    return o;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("invalid number '" + std::string(v) + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out)) throw ConfigError("non-finite number '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_list(std::string_view v) {
    std::vector<std::size_t> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        out.push_back(parse_number<std::size_t>(trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

template <typename E, typename Fn>
Setter enum_setter(E RunConfig::*field, Fn parse) {
    return [field, parse](RunConfig& c, std::string_view v) {
        try {
            c.*field = parse(v);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    };
}

template <typename T>
Setter number_setter(T RunConfig::*field) {
    return [field](RunConfig& c, std::string_view v) { c.*field = parse_number<T>(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"algorithm", enum_setter(&RunConfig::algorithm, parse_algorithm)},
        {"variant", enum_setter(&RunConfig::variant, parse_variant)},
        {"arch", [](RunConfig& c, std::string_view v) { c.arch = std::string(v); }},
        {"width", number_setter(&RunConfig::width)},
        {"mlp_hidden", [](RunConfig& c, std::string_view v) { c.hidden = parse_list(v); }},
        {"prune_rate", number_setter(&RunConfig::prune_rate)},
        {"recycle_rate", [](RunConfig& c, std::string_view v) { c.recycle_rate = parse_number<double>(v); }},
        {"period", [](RunConfig& c, std::string_view v) { c.period = parse_number<int>(v); }},
        {"epochs", number_setter(&RunConfig::epochs)},
        {"batch_size", number_setter(&RunConfig::batch_size)},
        {"eval_every", number_setter(&RunConfig::eval_every)},
        {"lr", number_setter(&RunConfig::lr)},
        {"weight_decay", number_setter(&RunConfig::weight_decay)},
        {"momentum", number_setter(&RunConfig::momentum)},
        {"weight_seed", number_setter(&RunConfig::weight_seed)},
        {"score_seed", number_setter(&RunConfig::score_seed)},
        {"data_seed", number_setter(&RunConfig::data_seed)},
        {"dataset", enum_setter(&RunConfig::dataset, parse_dataset_kind)},
        {"cifar_dir", [](RunConfig& c, std::string_view v) { c.cifar_dir = std::string(v); }},
        {"subset", number_setter(&RunConfig::subset)},
        {"test_subset", number_setter(&RunConfig::test_subset)},
        {"synth_n", number_setter(&RunConfig::synth_n)},
        {"synth_test_n", number_setter(&RunConfig::synth_test_n)},
        {"synth_classes", number_setter(&RunConfig::synth_classes)},
        {"synth_dim", number_setter(&RunConfig::synth_dim)},
        {"synth_spread", number_setter(&RunConfig::synth_spread)},
        {"synth_seed", number_setter(&RunConfig::synth_seed)},
        {"sblb_train", [](RunConfig& c, std::string_view v) { c.sblb_train = std::string(v); }},
        {"sblb_test", [](RunConfig& c, std::string_view v) { c.sblb_test = std::string(v); }},
        {"weight_init",
         [](RunConfig& c, std::string_view v) {
             try {
                 c.weight_init = parse_init_kind(v);
             } catch (const InvalidArgument& e) {
                 throw ConfigError(e.what());
             }
         }},
        {"scale_fan", [](RunConfig& c, std::string_view v) { c.scale_fan = parse_bool(v); }},
    };
    return table;
}

} // namespace

void validate(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (c.arch != "conv2" && c.arch != "conv4" && c.arch != "conv6" && c.arch != "conv8" && c.arch != "mlp") {
        fail("arch must be conv2, conv4, conv6, conv8 or mlp, got '" + c.arch + "'");
    }
    if (!(c.width > 0.0 && c.width <= 1.0)) fail("width must lie in (0, 1]");
    if (!(c.prune_rate >= 0.0 && c.prune_rate < 1.0)) fail("prune_rate must lie in [0, 1)");
    if (c.recycle_rate && !(*c.recycle_rate >= 0.0 && *c.recycle_rate <= 1.0)) fail("recycle_rate must lie in [0, 1]");
    if (c.variant == ReweightVariant::iwr || c.variant == ReweightVariant::iwr_second_tier) {
        if (c.recycle_spec().rate > 0.5) fail("recycle_rate above 0.5 leaves too few weights to recycle");
    }
    if (c.period && *c.period <= 0) fail("period must be positive");
    if (c.epochs < 0) fail("epochs must be non-negative");
    if (c.batch_size == 0) fail("batch_size must be positive");
    if (c.eval_every < 1) fail("eval_every must be at least 1");
    if (!(c.lr >= 0.0)) fail("lr must be non-negative");
    if (!(c.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (c.hidden.empty()) fail("mlp_hidden needs at least one layer");
    for (auto h : c.hidden) {
        if (h == 0) fail("mlp_hidden widths must be positive");
    }
    if (c.dataset == DatasetKind::synth) {
        if (c.synth_classes < 2) fail("synth_classes must be at least 2");
        if (c.synth_dim < c.synth_classes) fail("synth_dim must be at least synth_classes");
        if (c.synth_n == 0 || c.synth_n % c.synth_classes || c.synth_test_n % c.synth_classes) {
            fail("synth_n and synth_test_n must be positive multiples of synth_classes");
        }
        if (!(c.synth_spread >= 0.0)) fail("synth_spread must be non-negative");
    }
    if (c.dataset == DatasetKind::sblb && c.sblb_train.empty()) fail("dataset sblb needs sblb_train");
    if (c.dataset != DatasetKind::cifar10 && c.arch != "mlp") fail("feature datasets need arch=mlp");
    if (c.dataset == DatasetKind::cifar10 && c.arch == "mlp") fail("cifar10 needs a conv arch");
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::map<std::string, std::size_t, std::less<>> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
        if (auto [pos, fresh] = seen.emplace(std::string(key), line_no); !fresh) {
            throw ConfigError(where + "duplicate key '" + std::string(key) + "' (first on line " +
                              std::to_string(pos->second) + ")");
        }
        try {
            it->second(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    try {
        return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_text(const RunConfig& c) {
    std::ostringstream os;
    auto kv = [&os](std::string_view k, const auto& v) { os << k << " = " << v << '\n'; };
    kv("algorithm", to_string(c.algorithm));
    kv("variant", to_string(c.variant));
    kv("arch", c.arch);
    kv("width", format_double(c.width));
    std::string hidden;
    for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
    kv("mlp_hidden", hidden);
    kv("prune_rate", format_double(c.prune_rate));
    if (c.recycle_rate) kv("recycle_rate", format_double(*c.recycle_rate));
    if (c.period) kv("period", *c.period);
    kv("epochs", c.epochs);
    kv("batch_size", c.batch_size);
    kv("eval_every", c.eval_every);
    kv("lr", format_double(c.lr));
    kv("weight_decay", format_double(c.weight_decay));
    kv("momentum", format_double(c.momentum));
    kv("weight_seed", c.weight_seed);
    kv("score_seed", c.score_seed);
    kv("data_seed", c.data_seed);
    kv("dataset", to_string(c.dataset));
    kv("cifar_dir", c.cifar_dir);
    kv("subset", c.subset);
    kv("test_subset", c.test_subset);
    kv("synth_n", c.synth_n);
    kv("synth_test_n", c.synth_test_n);
    kv("synth_classes", c.synth_classes);
    kv("synth_dim", c.synth_dim);
    kv("synth_spread", format_double(c.synth_spread));
    kv("synth_seed", c.synth_seed);
    if (!c.sblb_train.empty()) kv("sblb_train", c.sblb_train);
    if (!c.sblb_test.empty()) kv("sblb_test", c.sblb_test);
    if (c.weight_init) kv("weight_init", to_string(*c.weight_init));
    if (c.scale_fan) kv("scale_fan", *c.scale_fan ? "true" : "false");
    return os.str();
}

ArchSpec arch_spec(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes) {
    ArchSpec spec;
    spec.width = cfg.width;
    spec.num_classes = num_classes;
    spec.input_shape = sample_shape;
    if (cfg.arch == "mlp") {
        spec.kind = ArchKind::mlp;
        spec.hidden = cfg.hidden;
    } else {
        spec.kind = ArchKind::conv;
        spec.depth = cfg.arch.back() - '0';
    }
    return spec;
}

} // namespace supermask
