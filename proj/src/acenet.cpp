// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#include "pcce/acenet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "pcce/ops.hpp"

static_assert(std::endian::native == std::endian::little, "weights container assumes a little-endian host");

namespace pcce::ace {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'E', 'W'};
constexpr uint32_t kVersion = 1;

struct LayerShape {
    std::string name;
    int64_t out_ch, in_ch, kernel, dilation;
};

// Channel bookkeeping for every conv in forward order.
std::vector<LayerShape> layer_shapes(const AceConfig& c) {
    std::vector<LayerShape> ls;
    const int n = c.intermediate_layers();
    ls.push_back({"head", c.channels, 1 + (c.injects(0) ? 1 : 0), c.kernel, 1});
    for (int i = 0; i < n; ++i)
        ls.push_back({"dil" + std::to_string(i + 1), c.channels, c.channels + (c.injects(1 + i) ? 1 : 0), c.kernel,
                      c.dilations[i]});
    ls.push_back({"subpix", 4 * c.channels, c.channels + (c.injects(n + 1) ? 1 : 0), c.kernel, 1});
    ls.push_back({"pen", c.channels, c.channels + (c.injects(n + 2) ? 1 : 0), c.kernel, 1});
    ls.push_back({"out", 1, c.channels + (c.injects(n + 3) ? 1 : 0), 1, 1});
    return ls;
}

// Box-Muller from explicitly converted uniforms; avoids the
// implementation-defined std::normal_distribution so builds reproduce
// parameters bit-for-bit from the seed.
class NormalSource {
public:
    explicit NormalSource(uint64_t seed) : engine_(seed) {}

    double next() {
        double u1 = canonical();
        while (u1 <= 0.0) u1 = canonical();
        const double u2 = canonical();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    double canonical() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::mt19937_64 engine_;
};

void write_u32(std::ofstream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_f32(std::ofstream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::ifstream& is, const char* what) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw WeightsError(WeightsError::Kind::Truncated, std::string("weights file truncated reading ") + what);
    return v;
}

float read_f32(std::ifstream& is, const char* what) {
    float v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw WeightsError(WeightsError::Kind::Truncated, std::string("weights file truncated reading ") + what);
    return v;
}

}  // namespace

bool AceConfig::injects(int layer_input) const {
    return std::find(injection.begin(), injection.end(), layer_input) != injection.end();
}

void AceConfig::validate() const {
    if (depth < 5) throw std::invalid_argument("ace config: depth must be at least 5");
    if (channels < 1) throw std::invalid_argument("ace config: channels must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("ace config: kernel must be odd");
    if (!(lrelu_slope > 0.0f && lrelu_slope < 1.0f))
        throw std::invalid_argument("ace config: lrelu slope must lie in (0, 1)");
    if (static_cast<int>(dilations.size()) != intermediate_layers())
        throw std::invalid_argument("ace config: need exactly " + std::to_string(intermediate_layers()) +
                                    " dilations for depth " + std::to_string(depth));
    for (int d : dilations)
        if (d < 1) throw std::invalid_argument("ace config: dilations must be positive");
    for (int i : injection)
        if (i < 0 || i > intermediate_layers() + 3)
            throw std::invalid_argument("ace config: injection index " + std::to_string(i) + " out of range");
}

std::vector<std::string> layer_names(const AceConfig& config) {
    std::vector<std::string> names;
    for (const auto& ls : layer_shapes(config)) names.push_back(ls.name);
    return names;
}

int64_t parameter_count(const AceConfig& config) {
    config.validate();
    int64_t total = 0;
    for (const auto& ls : layer_shapes(config)) total += ls.out_ch * ls.in_ch * ls.kernel * ls.kernel + ls.out_ch;
    return total;
}

int64_t receptive_field_radius(const AceConfig& config) {
    const int64_t rk = (config.kernel - 1) / 2;
    int64_t dil_sum = 0;
    for (int d : config.dilations) dil_sum += d;
    // head conv, pool alignment, dilated + subpix stack at half resolution,
    // shuffle alignment, penultimate conv
    return 2 * rk * (dil_sum + 1) + 2 * rk + 1;
}

int64_t min_padded_extent(const AceConfig& config) {
    int64_t max_dil = 1;
    for (int d : config.dilations) max_dil = std::max<int64_t>(max_dil, d);
    const int64_t pooled_pad = max_dil * (config.kernel - 1) / 2;
    return 2 * (pooled_pad + 1);  // pooled extent must exceed the largest pad
}

std::vector<nd::Tensor<float>> AceParams::all() const {
    std::vector<nd::Tensor<float>> out;
    for (size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    return out;
}

void AceParams::zero_grad() {
    for (auto& t : weights) t.zero_grad();
    for (auto& t : biases) t.zero_grad();
}

AceParams build(const AceConfig& config, uint64_t seed) {
    config.validate();
    AceParams p;
    p.config = config;
    NormalSource rng(seed);
    const double lrelu_gain = std::sqrt(2.0 / (1.0 + static_cast<double>(config.lrelu_slope) *
                                                         static_cast<double>(config.lrelu_slope)));
    const auto shapes = layer_shapes(config);
    for (size_t li = 0; li < shapes.size(); ++li) {
        const auto& ls = shapes[li];
        const bool linear_out = (li + 1 == shapes.size());
        const double fan_in = static_cast<double>(ls.in_ch * ls.kernel * ls.kernel);
        const double stddev = (linear_out ? 1.0 : lrelu_gain) / std::sqrt(fan_in);
        std::vector<float> w(static_cast<size_t>(ls.out_ch * ls.in_ch * ls.kernel * ls.kernel));
        for (float& v : w) v = static_cast<float>(rng.next() * stddev);
        p.weights.push_back(
            nd::Tensor<float>::param({ls.out_ch, ls.in_ch, ls.kernel, ls.kernel}, std::move(w)));
        p.biases.push_back(nd::Tensor<float>::param({ls.out_ch}, std::vector<float>(ls.out_ch, 0.0f)));
    }
    return p;
}

nd::Tensor<float> forward(const AceParams& params, const nd::Tensor<float>& dimmed, double rate) {
    const AceConfig& c = params.config;
    c.validate();
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("ace forward: rate must lie in [0, 1), got " + std::to_string(rate));
    if (dimmed.shape().size() != 4 || dimmed.shape()[1] != 1)
        throw std::invalid_argument("ace forward: expected Nx1xHxW input, got " + nd::shape_str(dimmed.shape()));

    const int64_t N = dimmed.shape()[0], H = dimmed.shape()[2], W = dimmed.shape()[3];
    const int64_t min_ext = min_padded_extent(c);
    const int64_t th = std::max(H + (H % 2), min_ext), tw = std::max(W + (W % 2), min_ext);
    const int64_t pt = (th - H) / 2, pl = (tw - W) / 2;

    nd::Tensor<float> x = dimmed;
    if (th != H || tw != W) x = nd::reflect_pad2d(x, pt, th - H - pt, pl, tw - W - pl);

    const float slope = c.lrelu_slope;
    const float rv = static_cast<float>(rate);
    nd::Tensor<float> r_full = nd::Tensor<float>::full({N, 1, th, tw}, rv);
    nd::Tensor<float> r_half = nd::Tensor<float>::full({N, 1, th / 2, tw / 2}, rv);
    const int n = c.intermediate_layers();

    auto inject = [&](const nd::Tensor<float>& t, int layer_input, const nd::Tensor<float>& plane) {
        return c.injects(layer_input) ? nd::concat_channels(t, plane) : t;
    };

    nd::Tensor<float> h = inject(x, 0, r_full);
    h = nd::avg_pool2(nd::lrelu(conv2d(h, params.weights[0], params.biases[0], 1, nd::Padding::ReflectSame), slope));
    for (int i = 0; i < n; ++i) {
        h = inject(h, 1 + i, r_half);
        h = nd::lrelu(conv2d(h, params.weights[1 + i], params.biases[1 + i], c.dilations[i], nd::Padding::ReflectSame),
                      slope);
    }
    h = inject(h, n + 1, r_half);
    h = nd::pixel_shuffle(
        nd::lrelu(conv2d(h, params.weights[n + 1], params.biases[n + 1], 1, nd::Padding::ReflectSame), slope), 2);
    h = inject(h, n + 2, r_full);
    h = nd::lrelu(conv2d(h, params.weights[n + 2], params.biases[n + 2], 1, nd::Padding::ReflectSame), slope);
    h = inject(h, n + 3, r_full);
    h = conv2d(h, params.weights[n + 3], params.biases[n + 3], 1, nd::Padding::None);
    h = nd::clamp(h, 0.0f, 1.0f);

    if (th != H || tw != W) h = nd::crop2d(h, pt, pl, H, W);
    return h;
}

void save_params(const AceParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw WeightsError(WeightsError::Kind::Io, "cannot open " + path + " for writing");
    const AceConfig& c = params.config;
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(c.depth));
    write_u32(os, static_cast<uint32_t>(c.channels));
    write_u32(os, static_cast<uint32_t>(c.kernel));
    write_f32(os, c.lrelu_slope);
    write_u32(os, static_cast<uint32_t>(c.dilations.size()));
    for (int d : c.dilations) write_u32(os, static_cast<uint32_t>(d));
    write_u32(os, static_cast<uint32_t>(c.injection.size()));
    for (int i : c.injection) write_u32(os, static_cast<uint32_t>(i));

    const auto names = layer_names(c);
    write_u32(os, static_cast<uint32_t>(2 * names.size()));
    for (size_t li = 0; li < names.size(); ++li) {
        for (int part = 0; part < 2; ++part) {
            const nd::Tensor<float>& t = part == 0 ? params.weights[li] : params.biases[li];
            const std::string name = names[li] + (part == 0 ? ".w" : ".b");
            write_u32(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(os, static_cast<uint32_t>(t.shape().size()));
            for (int64_t d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
            os.write(reinterpret_cast<const char*>(t.data().data()),
                     static_cast<std::streamsize>(sizeof(float) * t.numel()));
        }
    }
    if (!os) throw WeightsError(WeightsError::Kind::Io, "write failed for " + path);
}

AceParams load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightsError(WeightsError::Kind::Io, "cannot open " + path);

    char magic[4] = {};
    if (!is.read(magic, 4))
        throw WeightsError(WeightsError::Kind::Truncated, "weights file truncated reading magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw WeightsError(WeightsError::Kind::BadMagic, "not an ACEW weights file: " + path);
    const uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw WeightsError(WeightsError::Kind::BadVersion,
                           "unsupported weights format version " + std::to_string(version));

    AceConfig c;
    c.depth = static_cast<int>(read_u32(is, "depth"));
    c.channels = static_cast<int>(read_u32(is, "channels"));
    c.kernel = static_cast<int>(read_u32(is, "kernel"));
    c.lrelu_slope = read_f32(is, "lrelu slope");
    c.dilations.assign(read_u32(is, "dilation count"), 0);
    for (auto& d : c.dilations) d = static_cast<int>(read_u32(is, "dilations"));
    c.injection.assign(read_u32(is, "injection count"), 0);
    for (auto& i : c.injection) i = static_cast<int>(read_u32(is, "injection set"));
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw WeightsError(WeightsError::Kind::ShapeMismatch, std::string("embedded config invalid: ") + e.what());
    }

    const auto shapes = layer_shapes(c);
    const uint32_t count = read_u32(is, "tensor count");
    if (count != 2 * shapes.size())
        throw WeightsError(WeightsError::Kind::ShapeMismatch,
                           "weights file holds " + std::to_string(count) + " tensors, config implies " +
                               std::to_string(2 * shapes.size()));

    AceParams p;
    p.config = c;
    for (const auto& ls : shapes) {
        for (int part = 0; part < 2; ++part) {
            const std::string want = ls.name + (part == 0 ? ".w" : ".b");
            const uint32_t name_len = read_u32(is, "tensor name length");
            std::string name(name_len, '\0');
            if (!is.read(name.data(), name_len))
                throw WeightsError(WeightsError::Kind::Truncated, "weights file truncated reading tensor name");
            if (name != want)
                throw WeightsError(WeightsError::Kind::ShapeMismatch,
                                   "expected tensor " + want + ", found " + name);
            const uint32_t rank = read_u32(is, name.c_str());
            nd::Shape shape(rank);
            for (auto& d : shape) d = static_cast<int64_t>(read_u32(is, name.c_str()));
            const nd::Shape expect = part == 0 ? nd::Shape{ls.out_ch, ls.in_ch, ls.kernel, ls.kernel}
                                               : nd::Shape{ls.out_ch};
            if (shape != expect)
                throw WeightsError(WeightsError::Kind::ShapeMismatch,
                                   "tensor " + name + " has shape " + nd::shape_str(shape) +
                                       ", config implies " + nd::shape_str(expect));
            std::vector<float> data(nd::shape_numel(shape));
            if (!is.read(reinterpret_cast<char*>(data.data()),
                         static_cast<std::streamsize>(sizeof(float) * data.size())))
                throw WeightsError(WeightsError::Kind::Truncated, "weights file truncated inside tensor " + name);
            auto t = nd::Tensor<float>::param(shape, std::move(data));
            (part == 0 ? p.weights : p.biases).push_back(t);
        }
    }
    return p;
}

}  // namespace pcce::ace
