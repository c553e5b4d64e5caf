#include "mrfault/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "mrfault/error.hpp"

namespace mrfault::io {

using nlohmann::json;
using nn::Tensor;

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void le(T v) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (n > b_.size() - pos_) {
            throw FormatError(FormatErrc::truncated, std::string(what) + " at offset " + std::to_string(pos_) +
                                                         " needs " + std::to_string(n) + " bytes, " +
                                                         std::to_string(b_.size() - pos_) + " left");
        }
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T>
    T le(const char* what) {
        auto s = take(sizeof(T), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(s[i]) << (8 * i);
        return static_cast<T>(u);
    }
    template <typename T>
    T be(const char* what) {
        auto s = take(sizeof(T), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<std::make_unsigned_t<T>>((u << 8) | s[i]);
        return static_cast<T>(u);
    }
    std::size_t remaining() const { return b_.size() - pos_; }
    std::size_t offset() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'S', 'L', 'W', 'A'};

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t.tensor;
    }
    return nullptr;
}

std::vector<std::uint8_t> write_archive(const Archive& archive) {
    std::unordered_set<std::string> seen;
    for (const auto& t : archive.tensors) {
        if (!seen.insert(t.name).second) throw FormatError(FormatErrc::duplicate_name, "tensor '" + t.name + "'");
        if (t.name.size() > 0xFFFF) throw FormatError(FormatErrc::bad_manifest, "tensor name too long");
        if (t.tensor.rank() > 0xFF) throw FormatError(FormatErrc::bad_manifest, "tensor rank too large");
        if (nn::element_count(t.tensor.shape()) != t.tensor.size()) {
            throw ContractError("tensor '" + t.name + "' data does not match its shape");
        }
    }
    if (archive.manifest.size() > 0xFFFFFFFFu) throw FormatError(FormatErrc::bad_manifest, "manifest too long");

    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint16_t>(kArchiveVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(archive.manifest.size()));
    w.bytes(archive.manifest.data(), archive.manifest.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& t : archive.tensors) {
        w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.le<std::uint8_t>(static_cast<std::uint8_t>(t.tensor.rank()));
        for (auto d : t.tensor.shape()) {
            if (d > 0xFFFFFFFFu) throw FormatError(FormatErrc::bad_manifest, "dimension too large");
            w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
        }
        for (float v : t.tensor.data()) w.f32(v);
    }
    return w.take();
}

Archive read_archive(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(FormatErrc::bad_magic, "not an SLWA archive");
    }
    r.take(4, "magic");
    const auto version = r.le<std::uint16_t>("version");
    if (version != kArchiveVersion) {
        throw FormatError(FormatErrc::version_mismatch,
                          "archive version " + std::to_string(version) + ", expected " + std::to_string(kArchiveVersion));
    }
    Archive a;
    const auto mlen = r.le<std::uint32_t>("manifest length");
    auto m = r.take(mlen, "manifest");
    a.manifest.assign(reinterpret_cast<const char*>(m.data()), m.size());

    const auto count = r.le<std::uint32_t>("tensor count");
    std::unordered_set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor nt;
        const auto nlen = r.le<std::uint16_t>("name length");
        auto n = r.take(nlen, "tensor name");
        nt.name.assign(reinterpret_cast<const char*>(n.data()), n.size());
        if (!seen.insert(nt.name).second) throw FormatError(FormatErrc::duplicate_name, "tensor '" + nt.name + "'");
        const auto rank = r.le<std::uint8_t>("rank");
        nn::Shape shape(rank);
        std::uint64_t elems = 1;
        for (auto& d : shape) {
            d = r.le<std::uint32_t>("dimension");
            elems *= d;
            if (elems * 4 > r.remaining()) {
                throw FormatError(FormatErrc::truncated, "tensor '" + nt.name + "' data exceeds the archive");
            }
        }
        auto raw = r.take(static_cast<std::size_t>(elems) * 4, "tensor data");
        std::vector<float> data(static_cast<std::size_t>(elems));
        for (std::size_t k = 0; k < data.size(); ++k) {
            const std::uint32_t u = static_cast<std::uint32_t>(raw[4 * k]) | static_cast<std::uint32_t>(raw[4 * k + 1]) << 8 |
                                    static_cast<std::uint32_t>(raw[4 * k + 2]) << 16 |
                                    static_cast<std::uint32_t>(raw[4 * k + 3]) << 24;
            data[k] = std::bit_cast<float>(u);
        }
        nt.tensor = Tensor(std::move(shape), std::move(data));
        a.tensors.push_back(std::move(nt));
    }
    if (r.remaining() != 0) {
        throw FormatError(FormatErrc::trailing_data,
                          std::to_string(r.remaining()) + " unexpected bytes after the last tensor");
    }
    return a;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FormatError(FormatErrc::io, "no such file: " + path.string());
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw FormatError(FormatErrc::io, "cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    int err = Z_OK;
    const char* msg = gzerror(f, &err);
    const std::string detail = msg ? msg : "read error";
    gzclose(f);
    if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) {
        // A gzip stream cut short surfaces here.
        throw FormatError(FormatErrc::truncated, path.string() + ": " + detail);
    }
    return out;
}

Archive read_archive_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return read_archive(bytes);
}

void write_archive_file(const std::filesystem::path& path, const Archive& archive) {
    const auto bytes = write_archive(archive);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::io, "short write to " + path.string());
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw FormatError(FormatErrc::bad_manifest, what); }

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) bad(std::string("missing field '") + key + "' in " + j.dump());
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        bad(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? field<T>(j, key) : fallback;
}

const Tensor& tensor(const Archive& a, const std::string& name, const nn::Shape& shape) {
    const Tensor* t = a.find(name);
    if (!t) bad("missing tensor '" + name + "'");
    if (t->shape() != shape) bad("tensor '" + name + "' has shape " + nn::to_string(t->shape()) + ", expected " + nn::to_string(shape));
    return *t;
}

std::pair<std::size_t, std::size_t> kernel_dims(const json& l) {
    if (!l.contains("kernel")) bad("conv2d without kernel");
    const auto& k = l["kernel"];
    if (k.is_number_unsigned()) return {k.get<std::size_t>(), k.get<std::size_t>()};
    if (k.is_array() && k.size() == 2) return {k[0].get<std::size_t>(), k[1].get<std::size_t>()};
    bad("kernel must be an integer or [h, w]");
}

nn::BatchNorm batchnorm_from(const Archive& a, const json& l, std::size_t channels) {
    nn::BatchNorm bn;
    bn.name = field<std::string>(l, "name");
    const nn::Shape s{channels};
    if (a.find(bn.name + ".scale")) {
        const auto& sc = tensor(a, bn.name + ".scale", s);
        const auto& sh = tensor(a, bn.name + ".shift", s);
        bn.scale.assign(sc.data().begin(), sc.data().end());
        bn.shift.assign(sh.data().begin(), sh.data().end());
        return bn;
    }
    const double eps = field_or<double>(l, "eps", 1e-5);
    const auto& g = tensor(a, bn.name + ".weight", s);
    const auto& b = tensor(a, bn.name + ".bias", s);
    const auto& mean = tensor(a, bn.name + ".running_mean", s);
    const auto& var = tensor(a, bn.name + ".running_var", s);
    bn.scale.resize(channels);
    bn.shift.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const double sc = g[c] / std::sqrt(static_cast<double>(var[c]) + eps);
        bn.scale[c] = static_cast<float>(sc);
        bn.shift[c] = static_cast<float>(b[c] - mean[c] * sc);
    }
    return bn;
}

}  // namespace

nn::Model model_from_archive(const Archive& archive) {
    json m;
    try {
        m = json::parse(archive.manifest);
    } catch (const json::exception& e) {
        bad(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!m.is_object()) bad("manifest must be a JSON object");

    nn::ModelInfo info;
    info.name = field_or<std::string>(m, "name", "model");
    info.dataset = field_or<std::string>(m, "dataset", "");
    info.variant = field_or<std::string>(m, "variant", "original");
    info.input_shape = field<nn::Shape>(m, "input_shape");
    info.num_classes = field<std::size_t>(m, "num_classes");
    if (m.contains("test_accuracy") && m["test_accuracy"].is_number()) {
        info.recorded_test_accuracy = m["test_accuracy"].get<double>();
    }
    if (info.input_shape.size() != 3) bad("input_shape must be [C, H, W]");
    if (!m.contains("layers") || !m["layers"].is_array() || m["layers"].empty()) bad("manifest has no layers");

    std::vector<nn::Layer> layers;
    // Channel count of the running activation, for batchnorm tensor shapes.
    std::size_t channels = info.input_shape[0];
    std::set<std::string> names;
    for (const auto& l : m["layers"]) {
        const auto type = field<std::string>(l, "type");
        if (l.contains("name") && !names.insert(l["name"].get<std::string>()).second) {
            bad("duplicate layer name '" + l["name"].get<std::string>() + "'");
        }
        if (type == "conv2d") {
            nn::Conv2d c;
            c.name = field<std::string>(l, "name");
            c.in_channels = field<std::size_t>(l, "in_channels");
            c.out_channels = field<std::size_t>(l, "out_channels");
            std::tie(c.kernel_h, c.kernel_w) = kernel_dims(l);
            c.stride = field_or<std::size_t>(l, "stride", 1);
            c.padding = field_or<std::size_t>(l, "padding", 0);
            c.weight = tensor(archive, c.name + ".weight", {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
            if (field_or<bool>(l, "bias", false)) c.bias = tensor(archive, c.name + ".bias", {c.out_channels});
            channels = c.out_channels;
            layers.emplace_back(std::move(c));
        } else if (type == "fc") {
            nn::Linear f;
            f.name = field<std::string>(l, "name");
            f.in_features = field<std::size_t>(l, "in");
            f.out_features = field<std::size_t>(l, "out");
            f.weight = tensor(archive, f.name + ".weight", {f.out_features, f.in_features});
            if (field_or<bool>(l, "bias", false)) f.bias = tensor(archive, f.name + ".bias", {f.out_features});
            channels = f.out_features;
            layers.emplace_back(std::move(f));
        } else if (type == "relu") {
            layers.emplace_back(nn::ReLU{});
        } else if (type == "flatten") {
            layers.emplace_back(nn::Flatten{});
        } else if (type == "maxpool2d" || type == "avgpool2d") {
            const auto k = field_or<std::size_t>(l, "kernel", 2);
            const auto s = field_or<std::size_t>(l, "stride", k);
            if (type == "maxpool2d") {
                layers.emplace_back(nn::MaxPool2d{k, s});
            } else {
                layers.emplace_back(nn::AvgPool2d{k, s});
            }
        } else if (type == "add") {
            nn::ResidualAdd r;
            if (!l.contains("from")) bad("add without 'from'");
            if (l["from"].is_string() && l["from"].get<std::string>() == "input") {
                r.from = nn::ResidualAdd::kModelInput;
            } else {
                r.from = field<std::size_t>(l, "from");
            }
            layers.emplace_back(r);
        } else if (type == "batchnorm") {
            layers.emplace_back(batchnorm_from(archive, l, channels));
        } else {
            bad("unknown layer type '" + type + "'");
        }
    }

    nn::Model model(std::move(info), std::move(layers));
    try {
        model.layer_output_shapes();
    } catch (const ContractError& e) {
        bad(std::string("layer shapes do not chain: ") + e.what());
    }
    return model.with_batchnorm_folded();
}

Archive archive_from_model(const nn::Model& model, const std::string& extra_json) {
    json m;
    try {
        m = json::parse(extra_json);
    } catch (const json::exception& e) {
        throw ContractError(std::string("extra manifest fields are not valid JSON: ") + e.what());
    }
    if (!m.is_object()) throw ContractError("extra manifest fields must be a JSON object");

    const auto& info = model.info();
    m["name"] = info.name;
    m["dataset"] = info.dataset;
    m["variant"] = info.variant;
    m["input_shape"] = info.input_shape;
    m["num_classes"] = info.num_classes;
    if (info.recorded_test_accuracy && !m.contains("test_accuracy")) m["test_accuracy"] = *info.recorded_test_accuracy;

    Archive a;
    json layers = json::array();
    for (const auto& layer : model.layers()) {
        json l;
        if (const auto* c = std::get_if<nn::Conv2d>(&layer)) {
            l = {{"type", "conv2d"},        {"name", c->name},     {"in_channels", c->in_channels},
                 {"out_channels", c->out_channels}, {"kernel", {c->kernel_h, c->kernel_w}},
                 {"stride", c->stride},     {"padding", c->padding}, {"bias", c->bias.has_value()}};
            a.tensors.push_back({c->name + ".weight", c->weight});
            if (c->bias) a.tensors.push_back({c->name + ".bias", *c->bias});
        } else if (const auto* f = std::get_if<nn::Linear>(&layer)) {
            l = {{"type", "fc"}, {"name", f->name}, {"in", f->in_features}, {"out", f->out_features},
                 {"bias", f->bias.has_value()}};
            a.tensors.push_back({f->name + ".weight", f->weight});
            if (f->bias) a.tensors.push_back({f->name + ".bias", *f->bias});
        } else if (std::holds_alternative<nn::ReLU>(layer)) {
            l = {{"type", "relu"}};
        } else if (std::holds_alternative<nn::Flatten>(layer)) {
            l = {{"type", "flatten"}};
        } else if (const auto* p = std::get_if<nn::MaxPool2d>(&layer)) {
            l = {{"type", "maxpool2d"}, {"kernel", p->kernel}, {"stride", p->stride}};
        } else if (const auto* q = std::get_if<nn::AvgPool2d>(&layer)) {
            l = {{"type", "avgpool2d"}, {"kernel", q->kernel}, {"stride", q->stride}};
        } else if (const auto* r = std::get_if<nn::ResidualAdd>(&layer)) {
            l = {{"type", "add"}};
            if (r->from == nn::ResidualAdd::kModelInput) {
                l["from"] = "input";
            } else {
                l["from"] = r->from;
            }
        } else if (const auto* b = std::get_if<nn::BatchNorm>(&layer)) {
            l = {{"type", "batchnorm"}, {"name", b->name}};
            a.tensors.push_back({b->name + ".scale", Tensor({b->scale.size()}, b->scale)});
            a.tensors.push_back({b->name + ".shift", Tensor({b->shift.size()}, b->shift)});
        }
        layers.push_back(std::move(l));
    }
    m["layers"] = std::move(layers);
    a.manifest = m.dump(2);
    return a;
}

nn::Model load_model(const std::filesystem::path& path) { return model_from_archive(read_archive_file(path)); }

nn::Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                     std::size_t num_classes) {
    const auto ib = read_file_bytes(images);
    const auto lb = read_file_bytes(labels);

    Reader ir(ib);
    if (ib.size() < 4) throw FormatError(FormatErrc::truncated, images.string() + ": header cut short");
    const auto imagic = ir.be<std::uint32_t>("images magic");
    if (imagic != 0x00000803u) throw FormatError(FormatErrc::bad_magic, images.string() + ": not an IDX3 ubyte file");
    const auto n = ir.be<std::uint32_t>("image count");
    const auto rows = ir.be<std::uint32_t>("rows");
    const auto cols = ir.be<std::uint32_t>("cols");

    Reader lr(lb);
    if (lb.size() < 4) throw FormatError(FormatErrc::truncated, labels.string() + ": header cut short");
    const auto lmagic = lr.be<std::uint32_t>("labels magic");
    if (lmagic != 0x00000801u) throw FormatError(FormatErrc::bad_magic, labels.string() + ": not an IDX1 ubyte file");
    const auto nl = lr.be<std::uint32_t>("label count");
    if (n != nl) {
        throw FormatError(FormatErrc::count_mismatch,
                          std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    }

    nn::Dataset d;
    d.count = n;
    d.channels = 1;
    d.rows = rows;
    d.cols = cols;
    d.num_classes = num_classes;
    const std::size_t px = static_cast<std::size_t>(n) * rows * cols;
    if (ir.remaining() < px) throw FormatError(FormatErrc::truncated, images.string() + ": pixel data cut short");
    if (lr.remaining() < n) throw FormatError(FormatErrc::truncated, labels.string() + ": label data cut short");
    if (ir.remaining() > px) throw FormatError(FormatErrc::trailing_data, images.string());
    if (lr.remaining() > n) throw FormatError(FormatErrc::trailing_data, labels.string());

    auto p = ir.take(px, "pixels");
    d.pixels.resize(px);
    for (std::size_t i = 0; i < px; ++i) d.pixels[i] = static_cast<float>(p[i]) / 255.0f;
    auto l = lr.take(n, "labels");
    d.labels.assign(l.begin(), l.end());
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        if (d.labels[i] >= num_classes) {
            throw FormatError(FormatErrc::bad_label,
                              "label " + std::to_string(d.labels[i]) + " at index " + std::to_string(i) +
                                  " exceeds class count " + std::to_string(num_classes));
        }
    }
    return d;
}

}  // namespace mrfault::io
