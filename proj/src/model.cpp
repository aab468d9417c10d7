#include "vadkit/model.hpp"

#include <cstring>
#include <fstream>

namespace vadkit::model {

DerivedShapes derive_shapes(const ModelConfig& c) {
    if (c.conv1_width < 1 || c.conv2_width < 1 || c.dense_width < 1 || c.lstm_width < 1)
        throw ConfigError("model config: widths must be >= 1");
    if (c.conv1_kh < 1 || c.conv1_kw < 1 || c.conv2_kh < 1 || c.conv2_kw < 1)
        throw ConfigError("model config: kernel sizes must be >= 1");
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
        throw ConfigError("model config: dropout rate must be in [0,1)");

    DerivedShapes s{};
    const int h1 = ModelConfig::input_height - c.conv1_kh + 1;
    const int w1 = ModelConfig::input_width - c.conv1_kw + 1;
    if (h1 < 2 || w1 < 2) throw ConfigError("model config: conv1 kernel leaves no feature map");
    s.h1 = h1;
    s.w1 = w1;
    s.h1p = s.h1 / 2;
    s.w1p = s.w1 / 2;
    const int h2 = static_cast<int>(s.h1p) - c.conv2_kh + 1;
    const int w2 = static_cast<int>(s.w1p) - c.conv2_kw + 1;
    if (h2 < 2 || w2 < 2) throw ConfigError("model config: conv2 kernel leaves no feature map");
    s.h2 = h2;
    s.w2 = w2;
    s.h2p = s.h2 / 2;
    s.w2p = s.w2 / 2;
    if (s.h2p < 1 || s.w2p < 1) throw ConfigError("model config: feature map vanishes");
    s.flat = s.h2p * s.w2p * static_cast<std::size_t>(c.conv2_width);
    return s;
}

LayerCounts count_params_breakdown(const ModelConfig& c) {
    const auto s = derive_shapes(c);
    const auto C1 = static_cast<std::size_t>(c.conv1_width);
    const auto C2 = static_cast<std::size_t>(c.conv2_width);
    const auto D = static_cast<std::size_t>(c.dense_width);
    const auto L = static_cast<std::size_t>(c.lstm_width);
    const std::size_t dirs = c.bidirectional ? 2 : 1;

    LayerCounts lc{};
    lc.conv1 = static_cast<std::size_t>(c.conv1_kh) * c.conv1_kw * 1 * C1 + C1;
    lc.conv2 = static_cast<std::size_t>(c.conv2_kh) * c.conv2_kw * C1 * C2 + C2;
    lc.dense = s.flat * D + D;
    lc.lstm = dirs * 4 * (D * L + L * L + L);
    lc.output = dirs * L * 2 + 2;
    lc.total = lc.conv1 + lc.conv2 + lc.dense + lc.lstm + lc.output;
    return lc;
}

std::size_t count_params(const ModelConfig& config) {
    return count_params_breakdown(config).total;
}

ModelParams build_model(const ModelConfig& config, std::uint64_t seed) {
    return build_model_t<float>(config, seed);
}

std::vector<Posterior> forward(const ModelParams& params, const features::ImageSequence& seq,
                               bool training, std::mt19937& rng) {
    auto cache = forward_cached(params, seq, training, rng);
    std::vector<Posterior> out;
    out.reserve(cache.posteriors.size());
    for (std::size_t t = 0; t < cache.posteriors.size(); ++t)
        out.push_back({static_cast<double>(cache.posteriors[t][1]), t});
    return out;
}

std::vector<Posterior> forward(const ModelParams& params, const features::ImageSequence& seq) {
    std::mt19937 rng(0);
    return forward(params, seq, false, rng);
}

namespace {

constexpr char kMagic[4] = {'C', 'B', 'L', 'V'};
constexpr std::uint32_t kVersion = 1;

void wr_u32(std::ofstream& f, std::uint32_t x) {
    unsigned char b[4] = {(unsigned char)(x), (unsigned char)(x >> 8), (unsigned char)(x >> 16),
                          (unsigned char)(x >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
std::uint32_t rd_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw CorruptionError("truncated model file: " + path);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void wr_tensor(std::ofstream& f, const Tensor<float>& t) {
    wr_u32(f, static_cast<std::uint32_t>(t.dims.size()));
    for (std::size_t d : t.dims) wr_u32(f, static_cast<std::uint32_t>(d));
    for (float x : t.v) {
        std::uint32_t u;
        std::memcpy(&u, &x, 4);
        wr_u32(f, u);
    }
}

Tensor<float> rd_tensor(std::ifstream& f, const std::string& path,
                        const std::vector<std::size_t>& expect_dims) {
    const std::uint32_t nd = rd_u32(f, path);
    std::vector<std::size_t> dims(nd);
    for (auto& d : dims) d = rd_u32(f, path);
    if (dims != expect_dims) throw CorruptionError("tensor shape mismatch in model file: " + path);
    Tensor<float> t(dims);
    for (auto& x : t.v) {
        std::uint32_t u = rd_u32(f, path);
        std::memcpy(&x, &u, 4);
    }
    return t;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    const auto& c = params.config;
    f.write(kMagic, 4);
    wr_u32(f, kVersion);
    for (int field : {c.conv1_kh, c.conv1_kw, c.conv1_width, c.conv2_kh, c.conv2_kw,
                      c.conv2_width, c.dense_width, c.lstm_width})
        wr_u32(f, static_cast<std::uint32_t>(field));
    const auto drop = static_cast<float>(c.dropout_rate);
    std::uint32_t u;
    std::memcpy(&u, &drop, 4);
    wr_u32(f, u);
    const unsigned char bi = c.bidirectional ? 1 : 0;
    f.write(reinterpret_cast<const char*>(&bi), 1);
    for (const auto* t : params.tensors()) wr_tensor(f, *t);
}

ModelParams load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open model file: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a CBLV model file: " + path);
    const std::uint32_t version = rd_u32(f, path);
    if (version != kVersion)
        throw FormatError("unsupported model file version " + std::to_string(version) +
                          " (supported: 1): " + path);
    ModelConfig c;
    c.conv1_kh = static_cast<int>(rd_u32(f, path));
    c.conv1_kw = static_cast<int>(rd_u32(f, path));
    c.conv1_width = static_cast<int>(rd_u32(f, path));
    c.conv2_kh = static_cast<int>(rd_u32(f, path));
    c.conv2_kw = static_cast<int>(rd_u32(f, path));
    c.conv2_width = static_cast<int>(rd_u32(f, path));
    c.dense_width = static_cast<int>(rd_u32(f, path));
    c.lstm_width = static_cast<int>(rd_u32(f, path));
    float drop;
    std::uint32_t u = rd_u32(f, path);
    std::memcpy(&drop, &u, 4);
    c.dropout_rate = drop;
    unsigned char bi;
    if (!f.read(reinterpret_cast<char*>(&bi), 1))
        throw CorruptionError("truncated model file: " + path);
    c.bidirectional = bi != 0;

    // Allocate an empty parameter set with the right shapes, then fill it.
    ModelParams p = build_model(c, 0);
    for (auto* t : p.tensors()) *t = rd_tensor(f, path, t->dims);
    return p;
}

}  // namespace vadkit::model
