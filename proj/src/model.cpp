#include "covi/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "covi/domains.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"
#include "covi/rng.hpp"

namespace covi {
namespace {

constexpr char kMagic[8] = {'C', 'O', 'V', 'I', 'C', 'K', 'P', 'T'};

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = u(rng);
    return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor affine(const Linear& l, const Tensor& x) { return add_bias(matmul(x, l.weight), l.bias); }

Linear map_linear(const Linear& l, Tensor (Tensor::*fn)() const) {
    return {(l.weight.*fn)(), (l.bias.*fn)()};
}

void require_width(const Tensor& x, std::size_t width, const char* what) {
    if (x.rank() != 2 || x.cols() != width) {
        throw ShapeError(std::string(what) + ": expected [m x " + std::to_string(width) + "], got " +
                         shape_str(x.shape()));
    }
}

void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

} // namespace

std::array<double, RatioGrid::kSize> RatioGrid::values() {
    std::array<double, kSize> out{};
    for (std::size_t k = 0; k < kSize; ++k) out[k] = value(k);
    return out;
}

Tensor RatioGrid::column() {
    const auto v = values();
    return Tensor::from({kSize, 1}, std::vector<double>(v.begin(), v.end()));
}

std::vector<Tensor> ModelParams::theta() const {
    return {enc1.weight, enc1.bias, enc2.weight, enc2.bias, cls.weight, cls.bias};
}

std::vector<Tensor> ModelParams::phi() const {
    std::vector<Tensor> out;
    for (const auto& l : emp) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"encoder.0.weight", enc1.weight}, {"encoder.0.bias", enc1.bias},
        {"encoder.1.weight", enc2.weight}, {"encoder.1.bias", enc2.bias},
        {"classifier.weight", cls.weight}, {"classifier.bias", cls.bias}};
    for (std::size_t i = 0; i < emp.size(); ++i) {
        out.emplace_back("emp." + std::to_string(i) + ".weight", emp[i].weight);
        out.emplace_back("emp." + std::to_string(i) + ".bias", emp[i].bias);
    }
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams out = *this;
    for (Linear* l : {&out.enc1, &out.enc2, &out.cls}) *l = map_linear(*l, &Tensor::clone);
    for (auto& l : out.emp) l = map_linear(l, &Tensor::clone);
    return out;
}

ModelParams ModelParams::frozen() const {
    ModelParams out = *this;
    for (Linear* l : {&out.enc1, &out.enc2, &out.cls}) *l = map_linear(*l, &Tensor::detach);
    for (auto& l : out.emp) l = map_linear(l, &Tensor::detach);
    return out;
}

ModelParams init_model(std::size_t d, std::size_t n_classes, std::size_t feat_dim, std::uint64_t seed) {
    ModelDims dims;
    dims.input_dim = d;
    dims.n_classes = n_classes;
    dims.feat_dim = feat_dim;
    return init_model(dims, seed);
}

ModelParams init_model(const ModelDims& dims, std::uint64_t seed) {
    if (dims.input_dim == 0 || dims.n_classes == 0 || dims.feat_dim == 0 || dims.hidden == 0 ||
        dims.emp_hidden == 0 || dims.emp_layers == 0) {
        throw ContractError("init_model: all dimensions must be at least 1");
    }
    Rng rng(derive_seed(seed, streams::kModel));
    ModelParams p;
    p.dims = dims;
    p.seed = seed;
    p.enc1 = make_linear(dims.input_dim, dims.hidden, rng);
    p.enc2 = make_linear(dims.hidden, dims.feat_dim, rng);
    p.cls = make_linear(dims.feat_dim, dims.n_classes, rng);
    std::size_t in = 2 * dims.feat_dim;
    for (std::size_t i = 0; i < dims.emp_layers; ++i, in = dims.emp_hidden)
        p.emp.push_back(make_linear(in, dims.emp_hidden, rng));
    p.emp.push_back(make_linear(in, RatioGrid::kSize, rng));
    return p;
}

Tensor encode(const ModelParams& p, const Tensor& x) {
    require_width(x, p.dims.input_dim, "encode");
    return affine(p.enc2, relu(affine(p.enc1, x)));
}

Tensor classify(const ModelParams& p, const Tensor& z) {
    require_width(z, p.dims.feat_dim, "classify");
    return affine(p.cls, z);
}

Tensor predict_logits(const ModelParams& p, const Tensor& x) { return classify(p, encode(p, x)); }

Tensor emp_forward(const ModelParams& p, const Tensor& zs, const Tensor& zt) {
    if (zs.shape() != zt.shape()) {
        throw ShapeError("emp_forward: pair features differ in shape " + shape_str(zs.shape()) + " vs " +
                         shape_str(zt.shape()));
    }
    require_width(zs, p.dims.feat_dim, "emp_forward");
    Tensor h = concat_cols(zs, zt);
    for (std::size_t i = 0; i + 1 < p.emp.size(); ++i) h = relu(affine(p.emp[i], h));
    return affine(p.emp.back(), h);
}

Tensor pseudo_labels(const ModelParams& p, const Tensor& xt) {
    const auto logits = predict_logits(p.frozen(), xt);
    return one_hot(argmax_rows(logits), p.dims.n_classes);
}

std::uint64_t checksum(const std::vector<Tensor>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : params)
        for (double v : t.data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 1099511628211ULL;
            }
        }
    return h;
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

Checkpoint make_checkpoint(const ModelParams& p) {
    Checkpoint c;
    c.dims = p.dims;
    c.seed = p.seed;
    for (auto& [name, t] : p.named()) c.entries.emplace_back(name, t.detach());
    return c;
}

ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
    ModelParams p = init_model(ckpt.dims, ckpt.seed);
    for (auto& [name, t] : p.named()) {
        const Tensor* src = ckpt.find(name);
        if (!src) throw IoError("checkpoint: missing parameter '" + name + "'");
        if (src->shape() != t.shape()) {
            throw IoError("checkpoint: parameter '" + name + "' has shape " + shape_str(src->shape()) +
                          ", model expects " + shape_str(t.shape()));
        }
        auto dst = t.mutable_data();
        std::copy(src->data().begin(), src->data().end(), dst.begin());
    }
    return p;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, Checkpoint::kVersion);
    for (auto d : {ckpt.dims.input_dim, ckpt.dims.n_classes, ckpt.dims.hidden, ckpt.dims.feat_dim,
                   ckpt.dims.emp_hidden, ckpt.dims.emp_layers})
        put_u64(os, d);
    put_u64(os, ckpt.seed);
    put_u64(os, ckpt.entries.size());
    for (const auto& [name, t] : ckpt.entries) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_u64(os, d);
        for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw IoError("failed while writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic)) {
        throw IoError(path.string() + " is not a checkpoint");
    }
    const auto version = get_u32(is);
    if (version != Checkpoint::kVersion) {
        throw IoError("checkpoint version " + std::to_string(version) + " is not supported");
    }
    Checkpoint c;
    c.dims.input_dim = get_u64(is);
    c.dims.n_classes = get_u64(is);
    c.dims.hidden = get_u64(is);
    c.dims.feat_dim = get_u64(is);
    c.dims.emp_hidden = get_u64(is);
    c.dims.emp_layers = get_u64(is);
    c.seed = get_u64(is);
    const auto count = get_u64(is);
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto len = get_u32(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw IoError("checkpoint: truncated entry name");
        const auto rank = get_u32(is);
        Shape shape(rank);
        for (auto& d : shape) d = get_u64(is);
        std::vector<double> values(numel(shape));
        for (auto& v : values) v = std::bit_cast<double>(get_u64(is));
        c.entries.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes");
    return c;
}

} // namespace covi
