#include "casc/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "casc/grid_ops.hpp"
#include "casc/io_util.hpp"
#include "casc/rng.hpp"

namespace casc {

namespace {

Param make_conv(const std::string& name, Index out, Index in, Index k) {
    Param p;
    p.name = name;
    p.shape = {out, in, k, k};
    const auto n = static_cast<std::size_t>(p.count());
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.momentum.assign(n, 0.0);
    return p;
}

Param make_bias(const std::string& name, Index out) {
    Param p;
    p.name = name;
    p.shape = {out};
    const auto n = static_cast<std::size_t>(out);
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.momentum.assign(n, 0.0);
    return p;
}

// y[o](ox,oy) = b[o] + sum_{ci,ky,kx} w[o][ci][ky][kx] * x[ci](ox*s+kx-pad, oy*s+ky-pad)
void conv2d(const FeatureMap& x, const Param& w, const Param& b, Index stride, Index pad,
            FeatureMap& y) {
    const Index out_ch = w.shape[0], in_ch = w.shape[1], k = w.shape[2];
    const Index ow = y.width(), oh = y.height();
    const Index iw = x.width(), ih = x.height();
    for (Index o = 0; o < out_ch; ++o) {
        const double bias = b.value[static_cast<std::size_t>(o)];
        for (Index oy = 0; oy < oh; ++oy) {
            for (Index ox = 0; ox < ow; ++ox) {
                double acc = bias;
                for (Index ci = 0; ci < in_ch; ++ci) {
                    const double* wrow =
                        &w.value[static_cast<std::size_t>(((o * in_ch + ci) * k) * k)];
                    for (Index ky = 0; ky < k; ++ky) {
                        const Index yy = oy * stride + ky - pad;
                        if (yy < 0 || yy >= ih) continue;
                        const double* xrow = &x.values()[static_cast<std::size_t>(
                            ci * iw * ih + yy * iw)];
                        const double* wk = wrow + ky * k;
                        for (Index kx = 0; kx < k; ++kx) {
                            const Index xx = ox * stride + kx - pad;
                            if (xx < 0 || xx >= iw) continue;
                            acc += wk[kx] * xrow[xx];
                        }
                    }
                }
                y.at(o, ox, oy) = acc;
            }
        }
    }
}

// Accumulate gw, gb and (optionally) gx for the conv above.
void conv2d_backward(const FeatureMap& x, const Param& w, Index stride, Index pad,
                     const FeatureMap& gy, FeatureMap* gx, Param& w_out, Param& b_out) {
    const Index out_ch = w.shape[0], in_ch = w.shape[1], k = w.shape[2];
    const Index ow = gy.width(), oh = gy.height();
    const Index iw = x.width(), ih = x.height();
    for (Index o = 0; o < out_ch; ++o) {
        double gb = 0;
        for (Index oy = 0; oy < oh; ++oy) {
            for (Index ox = 0; ox < ow; ++ox) {
                const double g = gy.at(o, ox, oy);
                if (g == 0.0) continue;
                gb += g;
                for (Index ci = 0; ci < in_ch; ++ci) {
                    double* gwrow =
                        &w_out.grad[static_cast<std::size_t>(((o * in_ch + ci) * k) * k)];
                    const double* wrow =
                        &w.value[static_cast<std::size_t>(((o * in_ch + ci) * k) * k)];
                    for (Index ky = 0; ky < k; ++ky) {
                        const Index yy = oy * stride + ky - pad;
                        if (yy < 0 || yy >= ih) continue;
                        const std::size_t xoff =
                            static_cast<std::size_t>(ci * iw * ih + yy * iw);
                        const double* xrow = &x.values()[xoff];
                        double* gxrow = gx ? &gx->values()[xoff] : nullptr;
                        for (Index kx = 0; kx < k; ++kx) {
                            const Index xx = ox * stride + kx - pad;
                            if (xx < 0 || xx >= iw) continue;
                            gwrow[ky * k + kx] += g * xrow[xx];
                            if (gxrow) gxrow[xx] += g * wrow[ky * k + kx];
                        }
                    }
                }
            }
        }
        b_out.grad[static_cast<std::size_t>(o)] += gb;
    }
}

void relu(const FeatureMap& z, FeatureMap& a) {
    const auto& zv = z.values();
    auto& av = a.values();
    for (std::size_t i = 0; i < zv.size(); ++i) av[i] = zv[i] > 0.0 ? zv[i] : 0.0;
}

// gz = ga where z > 0.
void relu_backward(const FeatureMap& z, FeatureMap& g) {
    const auto& zv = z.values();
    auto& gv = g.values();
    for (std::size_t i = 0; i < zv.size(); ++i)
        if (zv[i] <= 0.0) gv[i] = 0.0;
}

void upsample2(const FeatureMap& x, FeatureMap& y) {
    const Index ch = x.channels(), iw = x.width(), ih = x.height();
    for (Index c = 0; c < ch; ++c)
        for (Index oy = 0; oy < ih * 2; ++oy)
            for (Index ox = 0; ox < iw * 2; ++ox)
                y.at(c, ox, oy) = x.at(c, ox / 2, oy / 2);
}

void upsample2_backward(const FeatureMap& gy, FeatureMap& gx) {
    const Index ch = gx.channels(), iw = gx.width(), ih = gx.height();
    for (Index c = 0; c < ch; ++c)
        for (Index oy = 0; oy < ih * 2; ++oy)
            for (Index ox = 0; ox < iw * 2; ++ox)
                gx.at(c, ox / 2, oy / 2) += gy.at(c, ox, oy);
}

void add_inplace(FeatureMap& dst, const FeatureMap& src) {
    auto& d = dst.values();
    const auto& s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

} // namespace

Param& ModelState::param(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p;
    throw std::invalid_argument("unknown parameter: " + name);
}

const Param& ModelState::param(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return p;
    throw std::invalid_argument("unknown parameter: " + name);
}

Index ModelState::parameter_count() const {
    Index n = 0;
    for (const auto& p : params) n += p.count();
    return n;
}

void ModelState::clear_grads() {
    for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::uint64_t ModelState::checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& p : params) {
        for (double v : p.value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 0x100000001B3ULL;
            }
        }
    }
    return h;
}

ModelState init_model(std::uint64_t seed, Index ch, Index class_count) {
    require(ch >= 2, "init_model: Ch must be >= 2");
    ModelState st;
    st.arch.ch = ch;
    st.arch.class_count = class_count;
    const Index in = st.arch.in_channels();

    st.params.push_back(make_conv("enc1.w", ch, in, 3));
    st.params.push_back(make_bias("enc1.b", ch));
    st.params.push_back(make_conv("enc2.w", 2 * ch, ch, 3));
    st.params.push_back(make_bias("enc2.b", 2 * ch));
    st.params.push_back(make_conv("bott.w", 2 * ch, 2 * ch, 3));
    st.params.push_back(make_bias("bott.b", 2 * ch));
    st.params.push_back(make_conv("dec1.w", ch, 2 * ch, 3));
    st.params.push_back(make_bias("dec1.b", ch));
    st.params.push_back(make_conv("dec2.w", ch, ch, 3));
    st.params.push_back(make_bias("dec2.b", ch));
    st.params.push_back(make_conv("feat.w", ch, ch, 3));
    st.params.push_back(make_bias("feat.b", ch));
    st.params.push_back(make_conv("head.w", 2, ch, 1));
    st.params.push_back(make_bias("head.b", 2));

    std::uint64_t tensor_index = 0;
    for (auto& p : st.params) {
        rng::Xoshiro256StarStar gen(rng::derive_seed(seed, "init", tensor_index++));
        if (p.shape.size() == 4) {
            const double fan_in = static_cast<double>(p.shape[1] * p.shape[2] * p.shape[3]);
            const double bound = 1.0 / std::sqrt(fan_in);
            for (auto& v : p.value) v = gen.uniform(-bound, bound);
        }
        // biases stay zero
    }
    return st;
}

ForwardOutputs forward(const ModelState& state, const FeatureMap& input, ForwardCache& cache) {
    const Index in = state.arch.in_channels(), ch = state.arch.ch;
    require(input.channels() == in, "forward: input channel count mismatch");
    const Index w = input.width(), h = input.height();
    if (w % 4 != 0 || h % 4 != 0)
        throw std::invalid_argument("forward: spatial size must be divisible by 4");

    cache.input = input;
    cache.e1z = FeatureMap(ch, w / 2, h / 2);
    conv2d(input, state.param("enc1.w"), state.param("enc1.b"), 2, 1, cache.e1z);
    cache.e1 = FeatureMap(ch, w / 2, h / 2);
    relu(cache.e1z, cache.e1);

    cache.e2z = FeatureMap(2 * ch, w / 4, h / 4);
    conv2d(cache.e1, state.param("enc2.w"), state.param("enc2.b"), 2, 1, cache.e2z);
    cache.e2 = FeatureMap(2 * ch, w / 4, h / 4);
    relu(cache.e2z, cache.e2);

    cache.bz = FeatureMap(2 * ch, w / 4, h / 4);
    conv2d(cache.e2, state.param("bott.w"), state.param("bott.b"), 1, 1, cache.bz);
    add_inplace(cache.bz, cache.e2); // residual skip
    cache.b = FeatureMap(2 * ch, w / 4, h / 4);
    relu(cache.bz, cache.b);

    cache.u1 = FeatureMap(2 * ch, w / 2, h / 2);
    upsample2(cache.b, cache.u1);
    cache.d1z = FeatureMap(ch, w / 2, h / 2);
    conv2d(cache.u1, state.param("dec1.w"), state.param("dec1.b"), 1, 1, cache.d1z);
    add_inplace(cache.d1z, cache.e1); // encoder skip
    cache.d1 = FeatureMap(ch, w / 2, h / 2);
    relu(cache.d1z, cache.d1);

    cache.u2 = FeatureMap(ch, w, h);
    upsample2(cache.d1, cache.u2);
    cache.d2z = FeatureMap(ch, w, h);
    conv2d(cache.u2, state.param("dec2.w"), state.param("dec2.b"), 1, 1, cache.d2z);
    cache.d2 = FeatureMap(ch, w, h);
    relu(cache.d2z, cache.d2);

    cache.f_d = FeatureMap(ch, w, h);
    conv2d(cache.d2, state.param("feat.w"), state.param("feat.b"), 1, 1, cache.f_d);

    ForwardOutputs out;
    out.p = Logits(w, h);
    conv2d(cache.f_d, state.param("head.w"), state.param("head.b"), 1, 0, out.p.map());
    out.f_d = cache.f_d;
    out.c = softmax_foreground(out.p);
    cache.valid = true;
    return out;
}

ForwardOutputs forward(const ModelState& state, const FeatureMap& input) {
    ForwardCache cache;
    return forward(state, input, cache);
}

void backward(ModelState& state, const ForwardCache& cache, const Logits& grad_p,
              const FeatureMap& grad_f_d) {
    if (!cache.valid) throw std::logic_error("backward without forward");
    const Index ch = state.arch.ch;
    const Index w = cache.input.width(), h = cache.input.height();

    // head: p = conv1x1(f_D)
    FeatureMap g_fd = grad_f_d;
    conv2d_backward(cache.f_d, state.param("head.w"), 1, 0, grad_p.map(), &g_fd,
                    state.param("head.w"), state.param("head.b"));

    // feat: f_D = conv(d2)
    FeatureMap g_d2(ch, w, h);
    conv2d_backward(cache.d2, state.param("feat.w"), 1, 1, g_fd, &g_d2, state.param("feat.w"),
                    state.param("feat.b"));

    // dec2
    relu_backward(cache.d2z, g_d2);
    FeatureMap g_u2(ch, w, h);
    conv2d_backward(cache.u2, state.param("dec2.w"), 1, 1, g_d2, &g_u2, state.param("dec2.w"),
                    state.param("dec2.b"));
    FeatureMap g_d1(ch, w / 2, h / 2);
    upsample2_backward(g_u2, g_d1);

    // dec1 (+ encoder skip)
    relu_backward(cache.d1z, g_d1);
    FeatureMap g_e1 = g_d1; // skip branch
    FeatureMap g_u1(2 * ch, w / 2, h / 2);
    conv2d_backward(cache.u1, state.param("dec1.w"), 1, 1, g_d1, &g_u1, state.param("dec1.w"),
                    state.param("dec1.b"));
    FeatureMap g_b(2 * ch, w / 4, h / 4);
    upsample2_backward(g_u1, g_b);

    // bottleneck (+ residual skip)
    relu_backward(cache.bz, g_b);
    FeatureMap g_e2 = g_b; // residual branch
    conv2d_backward(cache.e2, state.param("bott.w"), 1, 1, g_b, &g_e2, state.param("bott.w"),
                    state.param("bott.b"));

    // enc2
    relu_backward(cache.e2z, g_e2);
    conv2d_backward(cache.e1, state.param("enc2.w"), 2, 1, g_e2, &g_e1, state.param("enc2.w"),
                    state.param("enc2.b"));

    // enc1
    relu_backward(cache.e1z, g_e1);
    conv2d_backward(cache.input, state.param("enc1.w"), 2, 1, g_e1, nullptr,
                    state.param("enc1.w"), state.param("enc1.b"));
}

void sgd_step(ModelState& state, double lr, double momentum) {
    for (auto& p : state.params)
        for (double g : p.grad)
            if (!std::isfinite(g)) throw std::runtime_error("diverged");
    for (auto& p : state.params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            p.momentum[i] = momentum * p.momentum[i] + p.grad[i];
            p.value[i] -= lr * p.momentum[i];
            p.grad[i] = 0.0;
        }
    }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& off) {
    if (off + 4 > in.size()) throw std::runtime_error("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    off += 4;
    return v;
}

} // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::string buf;
    buf.append("CASC", 4);
    put_u32(buf, 1); // format version
    put_u32(buf, static_cast<std::uint32_t>(state.arch.ch));
    put_u32(buf, static_cast<std::uint32_t>(state.arch.class_count));
    put_u32(buf, static_cast<std::uint32_t>(state.params.size()));
    for (const auto& p : state.params) {
        put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
        buf.append(p.name);
        put_u32(buf, static_cast<std::uint32_t>(p.shape.size()));
        for (Index d : p.shape) put_u32(buf, static_cast<std::uint32_t>(d));
        put_u32(buf, static_cast<std::uint32_t>(p.value.size()));
        for (double v : p.value) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(buf, bits);
        }
    }
    atomic_write_file(path, buf);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t off = 0;
    if (buf.size() < 4 || buf.compare(0, 4, "CASC") != 0)
        throw std::runtime_error("bad checkpoint magic");
    off = 4;
    const std::uint32_t version = get_u32(buf, off);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    const Index ch = get_u32(buf, off);
    const Index class_count = get_u32(buf, off);
    const std::uint32_t n_params = get_u32(buf, off);

    ModelState st = init_model(0, ch, class_count);
    if (st.params.size() != n_params) throw std::runtime_error("checkpoint parameter mismatch");
    for (auto& p : st.params) {
        const std::uint32_t name_len = get_u32(buf, off);
        if (off + name_len > buf.size()) throw std::runtime_error("checkpoint truncated");
        const std::string name = buf.substr(off, name_len);
        off += name_len;
        if (name != p.name) throw std::runtime_error("checkpoint parameter order mismatch");
        const std::uint32_t ndim = get_u32(buf, off);
        std::vector<Index> shape(ndim);
        for (auto& d : shape) d = get_u32(buf, off);
        if (shape != p.shape) throw std::runtime_error("checkpoint shape mismatch: " + name);
        const std::uint32_t count = get_u32(buf, off);
        if (count != p.value.size()) throw std::runtime_error("checkpoint size mismatch: " + name);
        for (auto& v : p.value) {
            const std::uint32_t bits = get_u32(buf, off);
            float f;
            std::memcpy(&f, &bits, sizeof f);
            v = static_cast<double>(f);
        }
        std::fill(p.grad.begin(), p.grad.end(), 0.0);
        std::fill(p.momentum.begin(), p.momentum.end(), 0.0);
    }
    return st;
}

} // namespace casc
