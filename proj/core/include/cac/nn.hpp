// Compact convolutional classifier with from-scratch backpropagation.
// Templated on the scalar type: float for production training, double for
// finite-difference gradient verification.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cac/checkpoint.hpp"
#include "cac/rng.hpp"

namespace cac::nn {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::pair<double, double> softmax2(double z0, double z1) {
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m);
    const double e1 = std::exp(z1 - m);
    const double s = e0 + e1;
    return {e0 / s, e1 / s};
}

// Label-smoothed cross-entropy on a 2-way probability pair. The target is
// (1-eps)*onehot + eps/2; the gradient with respect to the logits is the
// softmax-CE identity prob - target.
inline double smoothed_ce(std::pair<double, double> probs, int label, double eps,
                          std::array<double, 2>* dlogits = nullptr) {
    if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("eps outside [0,1)");
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
    const double t1 = label == 1 ? 1.0 - eps + eps / 2.0 : eps / 2.0;
    const double t0 = 1.0 - t1;
    const double loss = -(t0 * std::log(probs.first) + t1 * std::log(probs.second));
    if (dlogits) (*dlogits) = {probs.first - t0, probs.second - t1};
    return loss;
}

enum class LayerKind { kConv, kPool, kGap, kDense, kDropout };

struct LayerDef {
    LayerKind kind;
    int units = 0;      // conv: output channels; dense: width
    int stride = 1;     // conv only
    double rate = 0.0;  // dropout only
};

// Parses strings like "conv16-pool-conv32-pool-conv64-gap-dense64-dropout0.5-dense2".
// Tokens: convN[sS], pool, gap, denseN, dropoutR. Case-insensitive.
inline std::vector<LayerDef> parse_arch(const std::string& arch) {
    std::vector<LayerDef> defs;
    std::string lower(arch);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::size_t pos = 0;
    while (pos <= lower.size()) {
        const auto dash = std::min(lower.find('-', pos), lower.size());
        const std::string tok = lower.substr(pos, dash - pos);
        pos = dash + 1;
        if (tok.empty()) throw std::invalid_argument("empty layer token in '" + arch + "'");
        try {
            if (tok == "pool") {
                defs.push_back({LayerKind::kPool});
            } else if (tok == "gap") {
                defs.push_back({LayerKind::kGap});
            } else if (tok.starts_with("conv")) {
                LayerDef d{LayerKind::kConv};
                const auto s_pos = tok.find('s', 4);
                d.units = std::stoi(tok.substr(4, s_pos - 4));
                if (s_pos != std::string::npos) d.stride = std::stoi(tok.substr(s_pos + 1));
                if (d.units <= 0 || d.stride < 1 || d.stride > 4) {
                    throw std::invalid_argument("bad conv token");
                }
                defs.push_back(d);
            } else if (tok.starts_with("dense")) {
                LayerDef d{LayerKind::kDense};
                d.units = std::stoi(tok.substr(5));
                if (d.units <= 0) throw std::invalid_argument("bad dense width");
                defs.push_back(d);
            } else if (tok.starts_with("dropout")) {
                LayerDef d{LayerKind::kDropout};
                d.rate = std::stod(tok.substr(7));
                if (!(d.rate >= 0.0 && d.rate < 1.0)) {
                    throw std::invalid_argument("dropout rate outside [0,1)");
                }
                defs.push_back(d);
            } else {
                throw std::invalid_argument("unknown token");
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse layer token '" + tok + "' in '" + arch +
                                        "'");
        }
        if (dash == lower.size()) break;
    }
    if (defs.empty() || defs.back().kind != LayerKind::kDense || defs.back().units != 2) {
        throw std::invalid_argument("architecture must end with dense2");
    }
    return defs;
}

template <typename T>
class ConvNet {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapMat = Eigen::Map<Mat>;
    using MapConst = Eigen::Map<const Mat>;

    ConvNet(const std::string& arch, int in_h, int in_w, std::uint64_t seed)
        : arch_(arch), in_h_(in_h), in_w_(in_w) {
        if (in_h <= 0 || in_w <= 0) throw std::invalid_argument("input dims must be positive");
        build(parse_arch(arch));
        init_params(seed);
    }

    const std::string& arch() const { return arch_; }
    int in_h() const { return in_h_; }
    int in_w() const { return in_w_; }
    std::size_t n_params() const { return params_.size(); }
    std::vector<T>& params() { return params_; }
    const std::vector<T>& params() const { return params_; }
    const std::vector<T>& grads() const { return grads_; }

    // Zeroes the parameters of the final dense layer (symmetric logits).
    void zero_output_layer() {
        const auto& st = stages_.back();
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(st.w_off), st.w_len, T(0));
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(st.b_off), st.b_len, T(0));
    }

    // Eval-mode forward for one sample; returns (p_neg, p_pos).
    std::pair<double, double> predict(std::span<const T> input) const {
        if (input.size() != static_cast<std::size_t>(in_h_) * in_w_) {
            throw ShapeMismatch("expected " + std::to_string(in_h_) + "x" +
                                std::to_string(in_w_) + " input");
        }
        Workspace ws;
        forward(input.data(), 1, false, {}, ws);
        const auto& logits = ws.act.back();
        return softmax2(logits[0], logits[1]);
    }

    // Eval-mode forward over n stacked inputs; returns p_pos per sample.
    std::vector<double> predict_batch(std::span<const T> batch, int n) const {
        if (n <= 0 || batch.size() != static_cast<std::size_t>(n) * in_h_ * in_w_) {
            throw ShapeMismatch("batch buffer does not match sample count");
        }
        Workspace ws;
        forward(batch.data(), n, false, {}, ws);
        const auto& logits = ws.act.back();
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int b = 0; b < n; ++b) {
            out[b] = softmax2(logits[static_cast<std::size_t>(0) * n + b],
                              logits[static_cast<std::size_t>(1) * n + b])
                         .second;
        }
        return out;
    }

    // Mean label-smoothed CE over the batch; fills grads() with the mean
    // parameter gradient. Dropout is active iff dropout_seeds is non-empty
    // (one stream seed per sample, so results do not depend on scheduling).
    double loss_and_grad(std::span<const T> batch, std::span<const int> labels, double eps,
                         std::span<const std::uint64_t> dropout_seeds = {}) {
        const int n = static_cast<int>(labels.size());
        if (n == 0) throw std::invalid_argument("empty batch");
        if (batch.size() != static_cast<std::size_t>(n) * in_h_ * in_w_) {
            throw ShapeMismatch("batch buffer does not match label count");
        }
        if (!dropout_seeds.empty() && dropout_seeds.size() != static_cast<std::size_t>(n)) {
            throw std::invalid_argument("need one dropout seed per sample");
        }
        forward(batch.data(), n, !dropout_seeds.empty(), dropout_seeds, ws_);
        std::fill(grads_.begin(), grads_.end(), T(0));

        auto& dlogits = ws_.dact.back();
        dlogits.assign(ws_.act.back().size(), T(0));
        double loss = 0.0;
        for (int b = 0; b < n; ++b) {
            const auto& logits = ws_.act.back();
            const auto probs = softmax2(logits[static_cast<std::size_t>(0) * n + b],
                                        logits[static_cast<std::size_t>(1) * n + b]);
            std::array<double, 2> dz;
            loss += smoothed_ce(probs, labels[b], eps, &dz);
            dlogits[static_cast<std::size_t>(0) * n + b] = static_cast<T>(dz[0] / n);
            dlogits[static_cast<std::size_t>(1) * n + b] = static_cast<T>(dz[1] / n);
        }
        loss /= n;
        if (!std::isfinite(loss)) {
            throw NonFiniteLoss("batch loss is not finite (diverged training run?)");
        }
        backward(n);
        return loss;
    }

    void sgd_step(double lr) {
        if (lr == 0.0) return;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            params_[i] -= static_cast<T>(lr) * grads_[i];
        }
    }

    static double lr_at(double lr0, double decay, int decay_every, int epoch) {
        return lr0 * std::pow(decay, epoch / decay_every);
    }

    Checkpoint to_checkpoint(double rescale) const {
        Checkpoint cp;
        cp.arch = arch_;
        cp.in_h = in_h_;
        cp.in_w = in_w_;
        cp.rescale = rescale;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const auto& st = stages_[i];
            if (st.w_len == 0) continue;
            io::MatF32 w;
            w.rows = static_cast<std::uint16_t>(st.rows);
            w.cols = static_cast<std::uint32_t>(st.cols);
            w.values.resize(st.w_len);
            for (std::size_t j = 0; j < st.w_len; ++j) {
                w.values[j] = static_cast<float>(params_[st.w_off + j]);
            }
            io::MatF32 b;
            b.rows = 1;
            b.cols = static_cast<std::uint32_t>(st.b_len);
            b.values.resize(st.b_len);
            for (std::size_t j = 0; j < st.b_len; ++j) {
                b.values[j] = static_cast<float>(params_[st.b_off + j]);
            }
            const std::string base = "layer" + std::to_string(i);
            cp.tensors.emplace_back(base + ".weight", std::move(w));
            cp.tensors.emplace_back(base + ".bias", std::move(b));
        }
        return cp;
    }

    static ConvNet from_checkpoint(const Checkpoint& cp) {
        ConvNet net(cp.arch, cp.in_h, cp.in_w, 0);
        std::size_t used = 0;
        for (std::size_t i = 0; i < net.stages_.size(); ++i) {
            auto& st = net.stages_[i];
            if (st.w_len == 0) continue;
            const std::string base = "layer" + std::to_string(i);
            const io::MatF32* w = nullptr;
            const io::MatF32* b = nullptr;
            for (const auto& [name, mat] : cp.tensors) {
                if (name == base + ".weight") w = &mat;
                if (name == base + ".bias") b = &mat;
            }
            if (!w || !b || w->values.size() != st.w_len || b->values.size() != st.b_len) {
                throw BadCheckpoint("checkpoint tensors do not match architecture at " + base);
            }
            for (std::size_t j = 0; j < st.w_len; ++j) {
                net.params_[st.w_off + j] = static_cast<T>(w->values[j]);
            }
            for (std::size_t j = 0; j < st.b_len; ++j) {
                net.params_[st.b_off + j] = static_cast<T>(b->values[j]);
            }
            used += 2;
        }
        if (used != cp.tensors.size()) {
            throw BadCheckpoint("checkpoint carries unexpected extra tensors");
        }
        return net;
    }

private:
    struct Stage {
        LayerDef def;
        bool spatial_in = true;   // layout of the input activation
        bool spatial_out = true;
        bool relu = false;        // fused ReLU on the output
        int c_in = 0, h_in = 0, w_in = 0;
        int c_out = 0, h_out = 0, w_out = 0;
        std::size_t rows = 0, cols = 0;  // weight matrix shape
        std::size_t w_off = 0, w_len = 0, b_off = 0, b_len = 0;
    };

    struct Workspace {
        int batch = 0;
        std::vector<T> input;                       // stage-0 input activation
        std::vector<std::vector<T>> act;            // per-stage outputs
        std::vector<std::vector<T>> dact;           // per-stage output grads
        std::vector<std::vector<T>> col;            // conv im2col buffers
        std::vector<std::vector<std::int32_t>> argmax;  // pool winners
        std::vector<std::vector<T>> mask;           // dropout masks
    };

    void build(std::vector<LayerDef> defs) {
        bool spatial = true;
        bool saw_spatial_op = false;
        int c = 1, h = in_h_, w = in_w_;
        int vec_dim = 0;
        std::size_t off = 0;
        for (std::size_t i = 0; i < defs.size(); ++i) {
            Stage st;
            st.def = defs[i];
            st.spatial_in = spatial;
            st.c_in = c;
            st.h_in = h;
            st.w_in = w;
            switch (st.def.kind) {
                case LayerKind::kConv: {
                    if (!spatial) throw std::invalid_argument("conv after gap/dense");
                    saw_spatial_op = true;
                    st.relu = true;
                    c = st.def.units;
                    h = (h - 1) / st.def.stride + 1;
                    w = (w - 1) / st.def.stride + 1;
                    st.rows = static_cast<std::size_t>(c);
                    st.cols = static_cast<std::size_t>(st.c_in) * 9;
                    break;
                }
                case LayerKind::kPool: {
                    if (!spatial) throw std::invalid_argument("pool after gap/dense");
                    if (h < 2 || w < 2) throw std::invalid_argument("feature map too small to pool");
                    saw_spatial_op = true;
                    h /= 2;
                    w /= 2;
                    break;
                }
                case LayerKind::kGap: {
                    if (!spatial) throw std::invalid_argument("gap after gap/dense");
                    spatial = false;
                    vec_dim = c;
                    break;
                }
                case LayerKind::kDense: {
                    if (spatial) {
                        if (saw_spatial_op) {
                            throw std::invalid_argument("dense on spatial input; insert gap");
                        }
                        spatial = false;  // flatten the raw input
                        vec_dim = c * h * w;
                    }
                    st.spatial_in = false;
                    st.rows = static_cast<std::size_t>(st.def.units);
                    st.cols = static_cast<std::size_t>(vec_dim);
                    st.relu = i + 1 < defs.size();  // logits stay linear
                    vec_dim = st.def.units;
                    break;
                }
                case LayerKind::kDropout: {
                    if (spatial) {
                        if (saw_spatial_op) {
                            throw std::invalid_argument("dropout on spatial input; insert gap");
                        }
                        spatial = false;
                        vec_dim = c * h * w;
                    }
                    st.spatial_in = false;
                    break;
                }
            }
            st.spatial_out = spatial;
            st.c_out = spatial ? c : vec_dim;
            st.h_out = spatial ? h : 1;
            st.w_out = spatial ? w : 1;
            if (st.rows > 0) {
                st.w_off = off;
                st.w_len = st.rows * st.cols;
                off += st.w_len;
                st.b_off = off;
                st.b_len = st.rows;
                off += st.b_len;
            }
            stages_.push_back(st);
        }
        params_.assign(off, T(0));
        grads_.assign(off, T(0));
    }

    void init_params(std::uint64_t seed) {
        Rng rng(derive_seed(seed, 0x1217));
        for (const auto& st : stages_) {
            if (st.w_len == 0) continue;
            const double sd = std::sqrt(2.0 / static_cast<double>(st.cols));
            for (std::size_t j = 0; j < st.w_len; ++j) {
                params_[st.w_off + j] = static_cast<T>(sd * rng.normal());
            }
            // biases stay zero
        }
    }

    static std::size_t plane(const Stage& st, bool out) {
        return out ? static_cast<std::size_t>(st.h_out) * st.w_out
                   : static_cast<std::size_t>(st.h_in) * st.w_in;
    }

    void im2col(const Stage& st, const T* src, int n, std::vector<T>& col) const {
        const std::size_t hw_in = plane(st, false);
        const std::size_t hw_out = plane(st, true);
        const std::size_t ncols = hw_out * static_cast<std::size_t>(n);
        col.assign(st.cols * ncols, T(0));
        const int s = st.def.stride;
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < st.c_in; ++c) {
                const T* in_plane = src + (static_cast<std::size_t>(c) * n + b) * hw_in;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::size_t row = (static_cast<std::size_t>(c) * 9) + ky * 3 + kx;
                        T* dst_base = col.data() + row * ncols +
                                      static_cast<std::size_t>(b) * hw_out;
                        for (int yo = 0; yo < st.h_out; ++yo) {
                            const int y = yo * s + ky - 1;
                            if (y < 0 || y >= st.h_in) continue;
                            T* dst = dst_base + static_cast<std::size_t>(yo) * st.w_out;
                            const T* src_row = in_plane + static_cast<std::size_t>(y) * st.w_in;
                            if (s == 1) {
                                const int x0 = std::max(0, 1 - kx);
                                const int x1 = std::min(st.w_out, st.w_in + 1 - kx);
                                if (x1 > x0) {
                                    std::memcpy(dst + x0, src_row + x0 + kx - 1,
                                                static_cast<std::size_t>(x1 - x0) * sizeof(T));
                                }
                            } else {
                                for (int xo = 0; xo < st.w_out; ++xo) {
                                    const int x = xo * s + kx - 1;
                                    if (x >= 0 && x < st.w_in) dst[xo] = src_row[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    void col2im_add(const Stage& st, const std::vector<T>& col, int n, T* dst) const {
        const std::size_t hw_in = plane(st, false);
        const std::size_t hw_out = plane(st, true);
        const std::size_t ncols = hw_out * static_cast<std::size_t>(n);
        const int s = st.def.stride;
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < st.c_in; ++c) {
                T* out_plane = dst + (static_cast<std::size_t>(c) * n + b) * hw_in;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::size_t row = (static_cast<std::size_t>(c) * 9) + ky * 3 + kx;
                        const T* src_base = col.data() + row * ncols +
                                            static_cast<std::size_t>(b) * hw_out;
                        for (int yo = 0; yo < st.h_out; ++yo) {
                            const int y = yo * s + ky - 1;
                            if (y < 0 || y >= st.h_in) continue;
                            const T* src_row = src_base + static_cast<std::size_t>(yo) * st.w_out;
                            T* dst_row = out_plane + static_cast<std::size_t>(y) * st.w_in;
                            for (int xo = 0; xo < st.w_out; ++xo) {
                                const int x = xo * s + kx - 1;
                                if (x >= 0 && x < st.w_in) dst_row[x] += src_row[xo];
                            }
                        }
                    }
                }
            }
        }
    }

    void forward(const T* batch, int n, bool train, std::span<const std::uint64_t> seeds,
                 Workspace& ws) const {
        ws.batch = n;
        ws.act.resize(stages_.size());
        ws.dact.resize(stages_.size());
        ws.col.resize(stages_.size());
        ws.argmax.resize(stages_.size());
        ws.mask.resize(stages_.size());

        // Stage-0 input: spatial nets keep sample-major [1, n*HW] layout;
        // vector-start nets transpose to one column per sample.
        const std::size_t in_hw = static_cast<std::size_t>(in_h_) * in_w_;
        if (stages_.front().spatial_in) {
            ws.input.assign(batch, batch + in_hw * static_cast<std::size_t>(n));
        } else {
            ws.input.resize(in_hw * static_cast<std::size_t>(n));
            for (int b = 0; b < n; ++b) {
                for (std::size_t d = 0; d < in_hw; ++d) {
                    ws.input[d * static_cast<std::size_t>(n) + b] = batch[b * in_hw + d];
                }
            }
        }

        std::vector<Rng> sample_rngs;
        if (train) {
            sample_rngs.reserve(seeds.size());
            for (auto s : seeds) sample_rngs.emplace_back(s);
        }

        const T* prev = ws.input.data();
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const auto& st = stages_[i];
            auto& out = ws.act[i];
            const std::size_t hw_out = plane(st, true);
            switch (st.def.kind) {
                case LayerKind::kConv: {
                    const std::size_t ncols = hw_out * static_cast<std::size_t>(n);
                    im2col(st, prev, n, ws.col[i]);
                    out.resize(st.rows * ncols);
                    MapConst wmat(params_.data() + st.w_off, static_cast<Eigen::Index>(st.rows),
                                  static_cast<Eigen::Index>(st.cols));
                    MapConst cmat(ws.col[i].data(), static_cast<Eigen::Index>(st.cols),
                                  static_cast<Eigen::Index>(ncols));
                    MapMat omat(out.data(), static_cast<Eigen::Index>(st.rows),
                                static_cast<Eigen::Index>(ncols));
                    omat.noalias() = wmat * cmat;
                    for (std::size_t r = 0; r < st.rows; ++r) {
                        const T bias = params_[st.b_off + r];
                        T* row = out.data() + r * ncols;
                        for (std::size_t j = 0; j < ncols; ++j) {
                            row[j] = std::max(T(0), row[j] + bias);
                        }
                    }
                    break;
                }
                case LayerKind::kPool: {
                    const std::size_t hw_in = plane(st, false);
                    const std::size_t ncols = hw_out * static_cast<std::size_t>(n);
                    out.resize(static_cast<std::size_t>(st.c_out) * ncols);
                    ws.argmax[i].resize(out.size());
                    for (int c = 0; c < st.c_out; ++c) {
                        for (int b = 0; b < n; ++b) {
                            const T* ip = prev + (static_cast<std::size_t>(c) * n + b) * hw_in;
                            T* op = out.data() + (static_cast<std::size_t>(c) * n + b) * hw_out;
                            std::int32_t* am = ws.argmax[i].data() +
                                               (static_cast<std::size_t>(c) * n + b) * hw_out;
                            for (int y = 0; y < st.h_out; ++y) {
                                for (int x = 0; x < st.w_out; ++x) {
                                    T best = ip[(2 * y) * st.w_in + 2 * x];
                                    std::int32_t bi = (2 * y) * st.w_in + 2 * x;
                                    for (int dy = 0; dy < 2; ++dy) {
                                        for (int dx = 0; dx < 2; ++dx) {
                                            const std::int32_t idx =
                                                (2 * y + dy) * st.w_in + 2 * x + dx;
                                            if (ip[idx] > best) {
                                                best = ip[idx];
                                                bi = idx;
                                            }
                                        }
                                    }
                                    op[y * st.w_out + x] = best;
                                    am[y * st.w_out + x] = bi;
                                }
                            }
                        }
                    }
                    break;
                }
                case LayerKind::kGap: {
                    const std::size_t hw_in = plane(st, false);
                    out.resize(static_cast<std::size_t>(st.c_out) * n);
                    for (int c = 0; c < st.c_out; ++c) {
                        for (int b = 0; b < n; ++b) {
                            const T* ip = prev + (static_cast<std::size_t>(c) * n + b) * hw_in;
                            T acc = T(0);
                            for (std::size_t j = 0; j < hw_in; ++j) acc += ip[j];
                            out[static_cast<std::size_t>(c) * n + b] =
                                acc / static_cast<T>(hw_in);
                        }
                    }
                    break;
                }
                case LayerKind::kDense: {
                    out.resize(st.rows * static_cast<std::size_t>(n));
                    MapConst wmat(params_.data() + st.w_off, static_cast<Eigen::Index>(st.rows),
                                  static_cast<Eigen::Index>(st.cols));
                    MapConst imat(prev, static_cast<Eigen::Index>(st.cols), n);
                    MapMat omat(out.data(), static_cast<Eigen::Index>(st.rows), n);
                    omat.noalias() = wmat * imat;
                    for (std::size_t r = 0; r < st.rows; ++r) {
                        const T bias = params_[st.b_off + r];
                        T* row = out.data() + r * static_cast<std::size_t>(n);
                        for (int b = 0; b < n; ++b) {
                            row[b] = st.relu ? std::max(T(0), row[b] + bias) : row[b] + bias;
                        }
                    }
                    break;
                }
                case LayerKind::kDropout: {
                    const std::size_t dim = static_cast<std::size_t>(st.c_out);
                    out.assign(prev, prev + dim * static_cast<std::size_t>(n));
                    if (train && st.def.rate > 0.0) {
                        auto& mask = ws.mask[i];
                        mask.assign(out.size(), T(1));
                        const T scale = static_cast<T>(1.0 / (1.0 - st.def.rate));
                        for (int b = 0; b < n; ++b) {
                            for (std::size_t d = 0; d < dim; ++d) {
                                const bool keep = sample_rngs[static_cast<std::size_t>(b)]
                                                      .uniform() >= st.def.rate;
                                mask[d * static_cast<std::size_t>(n) + b] =
                                    keep ? scale : T(0);
                            }
                        }
                        for (std::size_t j = 0; j < out.size(); ++j) out[j] *= mask[j];
                    } else {
                        ws.mask[i].clear();
                    }
                    break;
                }
            }
            prev = out.data();
        }
    }

    void backward(int n) {
        // dact.back() holds dLoss/dlogits already.
        for (std::size_t i = stages_.size(); i-- > 0;) {
            const auto& st = stages_[i];
            auto& dout = ws_.dact[i];
            const T* act = ws_.act[i].data();
            const std::size_t out_sz = ws_.act[i].size();
            if (dout.size() != out_sz) dout.resize(out_sz);

            // ReLU was fused into this stage's output.
            if (st.relu) {
                for (std::size_t j = 0; j < out_sz; ++j) {
                    if (act[j] <= T(0)) dout[j] = T(0);
                }
            }

            const bool need_dinput = i > 0;
            std::vector<T>* dinput = nullptr;
            if (need_dinput) {
                dinput = &ws_.dact[i - 1];
                dinput->assign(ws_.act[i - 1].size(), T(0));
            }

            switch (st.def.kind) {
                case LayerKind::kConv: {
                    const std::size_t ncols = plane(st, true) * static_cast<std::size_t>(n);
                    MapConst dmat(dout.data(), static_cast<Eigen::Index>(st.rows),
                                  static_cast<Eigen::Index>(ncols));
                    for (std::size_t r = 0; r < st.rows; ++r) {
                        grads_[st.b_off + r] += dmat.row(static_cast<Eigen::Index>(r)).sum();
                    }
                    {
                        MapConst cmat(ws_.col[i].data(), static_cast<Eigen::Index>(st.cols),
                                      static_cast<Eigen::Index>(ncols));
                        MapMat gw(grads_.data() + st.w_off, static_cast<Eigen::Index>(st.rows),
                                  static_cast<Eigen::Index>(st.cols));
                        gw.noalias() += dmat * cmat.transpose();
                    }
                    if (need_dinput) {
                        // dcol can overwrite the cached col buffer (same shape).
                        MapConst wmat(params_.data() + st.w_off,
                                      static_cast<Eigen::Index>(st.rows),
                                      static_cast<Eigen::Index>(st.cols));
                        MapMat dcol(ws_.col[i].data(), static_cast<Eigen::Index>(st.cols),
                                    static_cast<Eigen::Index>(ncols));
                        dcol.noalias() = wmat.transpose() * dmat;
                        col2im_add(st, ws_.col[i], n, dinput->data());
                    }
                    break;
                }
                case LayerKind::kPool: {
                    if (!need_dinput) break;
                    const std::size_t hw_in = plane(st, false);
                    const std::size_t hw_out = plane(st, true);
                    for (int c = 0; c < st.c_out; ++c) {
                        for (int b = 0; b < n; ++b) {
                            const std::size_t base = (static_cast<std::size_t>(c) * n + b);
                            const T* dp = dout.data() + base * hw_out;
                            T* di = dinput->data() + base * hw_in;
                            const std::int32_t* am = ws_.argmax[i].data() + base * hw_out;
                            for (std::size_t j = 0; j < hw_out; ++j) {
                                di[static_cast<std::size_t>(am[j])] += dp[j];
                            }
                        }
                    }
                    break;
                }
                case LayerKind::kGap: {
                    if (!need_dinput) break;
                    const std::size_t hw_in = plane(st, false);
                    const T inv = T(1) / static_cast<T>(hw_in);
                    for (int c = 0; c < st.c_out; ++c) {
                        for (int b = 0; b < n; ++b) {
                            const T g = dout[static_cast<std::size_t>(c) * n + b] * inv;
                            T* di = dinput->data() +
                                    (static_cast<std::size_t>(c) * n + b) * hw_in;
                            for (std::size_t j = 0; j < hw_in; ++j) di[j] += g;
                        }
                    }
                    break;
                }
                case LayerKind::kDense: {
                    MapConst dmat(dout.data(), static_cast<Eigen::Index>(st.rows), n);
                    const T* in_act = i > 0 ? ws_.act[i - 1].data() : ws_.input.data();
                    MapConst imat(in_act, static_cast<Eigen::Index>(st.cols), n);
                    for (std::size_t r = 0; r < st.rows; ++r) {
                        grads_[st.b_off + r] += dmat.row(static_cast<Eigen::Index>(r)).sum();
                    }
                    MapMat gw(grads_.data() + st.w_off, static_cast<Eigen::Index>(st.rows),
                              static_cast<Eigen::Index>(st.cols));
                    gw.noalias() += dmat * imat.transpose();
                    if (need_dinput) {
                        MapConst wmat(params_.data() + st.w_off,
                                      static_cast<Eigen::Index>(st.rows),
                                      static_cast<Eigen::Index>(st.cols));
                        MapMat di(dinput->data(), static_cast<Eigen::Index>(st.cols), n);
                        di.noalias() = wmat.transpose() * dmat;
                    }
                    break;
                }
                case LayerKind::kDropout: {
                    if (!need_dinput) break;
                    if (!ws_.mask[i].empty()) {
                        for (std::size_t j = 0; j < out_sz; ++j) {
                            (*dinput)[j] = dout[j] * ws_.mask[i][j];
                        }
                    } else {
                        *dinput = dout;
                    }
                    break;
                }
            }
        }
    }

    std::string arch_;
    int in_h_ = 0;
    int in_w_ = 0;
    std::vector<Stage> stages_;
    std::vector<T> params_;
    std::vector<T> grads_;
    Workspace ws_;
};

using ConvNetF = ConvNet<float>;
using ConvNetD = ConvNet<double>;

}  // namespace cac::nn
