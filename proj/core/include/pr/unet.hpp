#pragma once

#include <cstdint>
#include <vector>

#include "pr/nn.hpp"

namespace pr::net {

struct UNetConfig {
    int base_channels = 32;
    std::vector<int> channel_multipliers = {1, 2, 2};
    int n_res_blocks_per_stage = 1;
    int in_channels = 3;
    int resolution = 24;
    std::uint64_t seed = 0;
};

void validate(const UNetConfig& cfg);

/// Decoder feature maps, deepest stage first; levels[l] has shape
/// (B, C_l, H_l, W_l) with spatial size non-decreasing in l.
template <typename T>
struct FeatureMaps {
    std::vector<Tensor<T>> levels;
};

template <typename T>
class UNet {
public:
    using Tape = nn::Tape<T>;

    explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
        validate(cfg_);
        emb_dim_ = cfg_.base_channels + (cfg_.base_channels % 2);
        build();
    }

    const UNetConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return ps_; }
    const nn::ParamStore<T>& params() const { return ps_; }
    std::size_t param_count() const { return ps_.total_size(); }
    int emb_dim() const { return emb_dim_; }

    /// Deterministic He initialization keyed by cfg.seed; the second conv of
    /// every residual block and the output head start at zero.
    void init_params() {
        rng::Key base = rng::with_role(rng::key(cfg_.seed), rng::Role::param_init);
        for (std::size_t i = 0; i < ps_.values.size(); ++i) {
            Tensor<T>& v = ps_.values[i];
            const std::string& name = ps_.names[i];
            if (name.ends_with(".bias") || name.ends_with(".beta")) {
                std::fill(v.begin(), v.end(), T{0});
            } else if (name.ends_with(".gamma")) {
                std::fill(v.begin(), v.end(), T{1});
            } else if (zero_init_.at(i)) {
                std::fill(v.begin(), v.end(), T{0});
            } else {
                std::size_t fan_in = v.size() / v.dim(0);
                double std = std::sqrt(2.0 / static_cast<double>(fan_in));
                rng::Stream s(base.with(i));
                s.fill_gaussian(v, std);
            }
        }
    }

    Tensor<T> forward(const Tensor<T>& x, const std::vector<T>& cnoise,
                      FeatureMaps<T>* taps = nullptr) const {
        return run(x, cnoise, nullptr, taps);
    }

    Tensor<T> forward_train(const Tensor<T>& x, const std::vector<T>& cnoise,
                            Tape& tape) const {
        return run(x, cnoise, &tape, nullptr);
    }

    /// Backpropagates dL/dout through the tape left by forward_train;
    /// accumulates parameter gradients and returns dL/dx.
    Tensor<T> backward(const Tensor<T>& dout, Tape& tape, nn::Grads<T>& grads) const {
        const std::size_t S = stage_widths_.size();
        const std::size_t B = dout.dim(0);
        Tensor<T> d = nn::conv2d_bwd(ps_, head_conv_, dout, tape, grads);
        d = nn::silu_bwd(d, tape);
        d = nn::groupnorm_bwd(ps_, head_gn_, d, tape, grads);

        Tensor<T> d_es({B, static_cast<std::size_t>(emb_dim_)});
        std::vector<Tensor<T>> d_skips(S);

        // decoder ran s = S-1 .. 0, so unwind s = 0 .. S-1
        for (std::size_t s = 0; s < S; ++s) {
            for (int b = cfg_.n_res_blocks_per_stage - 1; b >= 0; --b) {
                block_bwd(dec_blocks_[s][static_cast<std::size_t>(b)], d, d_es, tape, grads);
            }
            const std::size_t w_in = (s + 1 < S) ? stage_widths_[s + 1] : stage_widths_[S - 1];
            Tensor<T> da, db;
            nn::split_channels(d, w_in, da, db);
            d = std::move(da);
            d_skips[s] = std::move(db);
            if (s + 1 < S) d = nn::upsample2_bwd(d);
        }

        block_bwd(mid_block_, d, d_es, tape, grads);

        // encoder ran s = 0 .. S-1, so unwind s = S-1 .. 0
        for (std::size_t s = S; s-- > 0;) {
            if (s + 1 < S) d = nn::avgpool2_bwd(d);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += d_skips[s][i];
            for (int b = cfg_.n_res_blocks_per_stage - 1; b >= 0; --b) {
                block_bwd(enc_blocks_[s][static_cast<std::size_t>(b)], d, d_es, tape, grads);
            }
        }
        Tensor<T> dx = nn::conv2d_bwd(ps_, stem_, d, tape, grads);

        Tensor<T> d_emb = nn::silu_bwd(d_es, tape);
        Tensor<T> d_e1s = nn::linear_bwd(ps_, mlp2_, d_emb, tape, grads);
        Tensor<T> d_e1 = nn::silu_bwd(d_e1s, tape);
        nn::linear_bwd(ps_, mlp1_, d_e1, tape, grads);
        return dx;
    }

    template <typename U>
    UNet<U> cast() const {
        UNetConfig cfg = cfg_;
        UNet<U> out(cfg);
        out.params() = ps_.template cast<U>();
        return out;
    }

private:
    struct Block {
        std::size_t c_in = 0, c_out = 0;
        nn::GroupNormRef gn1, gn2;
        nn::ConvRef conv1, conv2;
        nn::LinearRef emb_proj;
        nn::ConvRef skip;  // 1x1, used iff c_in != c_out
    };

    int add_param(const std::string& name, std::vector<std::size_t> shape, bool zero) {
        int id = ps_.add(name, std::move(shape));
        zero_init_.push_back(zero);
        return id;
    }

    nn::ConvRef add_conv(const std::string& name, std::size_t cin, std::size_t cout,
                         int k, bool zero = false) {
        nn::ConvRef c;
        c.k = k;
        c.w = add_param(name + ".weight",
                        {cout, cin, static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                        zero);
        c.b = add_param(name + ".bias", {cout}, zero);
        return c;
    }

    nn::GroupNormRef add_gn(const std::string& name, std::size_t c) {
        nn::GroupNormRef g;
        g.groups = nn::pick_groups(static_cast<int>(c));
        g.gamma = add_param(name + ".gamma", {c}, false);
        g.beta = add_param(name + ".beta", {c}, false);
        return g;
    }

    nn::LinearRef add_linear(const std::string& name, std::size_t in, std::size_t out) {
        nn::LinearRef l;
        l.w = add_param(name + ".weight", {out, in}, false);
        l.b = add_param(name + ".bias", {out}, false);
        return l;
    }

    Block add_block(const std::string& name, std::size_t cin, std::size_t cout) {
        Block b;
        b.c_in = cin;
        b.c_out = cout;
        b.gn1 = add_gn(name + ".norm1", cin);
        b.conv1 = add_conv(name + ".conv1", cin, cout, 3);
        b.emb_proj = add_linear(name + ".emb_proj", static_cast<std::size_t>(emb_dim_), cout);
        b.gn2 = add_gn(name + ".norm2", cout);
        b.conv2 = add_conv(name + ".conv2", cout, cout, 3, /*zero=*/true);
        if (cin != cout) b.skip = add_conv(name + ".skip", cin, cout, 1);
        return b;
    }

    void build() {
        const std::size_t E = static_cast<std::size_t>(emb_dim_);
        mlp1_ = add_linear("time_mlp.fc1", E, E);
        mlp2_ = add_linear("time_mlp.fc2", E, E);

        const std::size_t S = cfg_.channel_multipliers.size();
        stage_widths_.resize(S);
        for (std::size_t s = 0; s < S; ++s) {
            stage_widths_[s] = static_cast<std::size_t>(cfg_.base_channels) *
                               cfg_.channel_multipliers[s];
        }
        const std::size_t base = static_cast<std::size_t>(cfg_.base_channels);
        stem_ = add_conv("stem", static_cast<std::size_t>(cfg_.in_channels), base, 3);

        enc_blocks_.resize(S);
        std::size_t w_prev = base;
        for (std::size_t s = 0; s < S; ++s) {
            for (int b = 0; b < cfg_.n_res_blocks_per_stage; ++b) {
                std::size_t cin = (b == 0) ? w_prev : stage_widths_[s];
                enc_blocks_[s].push_back(add_block(
                    "enc" + std::to_string(s) + ".block" + std::to_string(b), cin,
                    stage_widths_[s]));
            }
            w_prev = stage_widths_[s];
        }

        mid_block_ = add_block("mid.block0", stage_widths_[S - 1], stage_widths_[S - 1]);

        dec_blocks_.resize(S);
        for (std::size_t s = S; s-- > 0;) {
            std::size_t w_in = (s + 1 < S) ? stage_widths_[s + 1] : stage_widths_[S - 1];
            for (int b = 0; b < cfg_.n_res_blocks_per_stage; ++b) {
                std::size_t cin = (b == 0) ? w_in + stage_widths_[s] : stage_widths_[s];
                dec_blocks_[s].push_back(add_block(
                    "dec" + std::to_string(s) + ".block" + std::to_string(b), cin,
                    stage_widths_[s]));
            }
        }

        head_gn_ = add_gn("head.norm", stage_widths_[0]);
        head_conv_ = add_conv("head.conv", stage_widths_[0],
                              static_cast<std::size_t>(cfg_.in_channels), 3, /*zero=*/true);
    }

    Tensor<T> block_fwd(const Block& blk, const Tensor<T>& x, const Tensor<T>& es,
                        Tape* tape) const {
        Tensor<T> h = nn::groupnorm_fwd(ps_, blk.gn1, x, tape);
        h = nn::silu_fwd(h, tape);
        h = nn::conv2d_fwd(ps_, blk.conv1, h, tape);
        Tensor<T> eb = nn::linear_fwd(ps_, blk.emb_proj, es, tape);
        h = nn::add_channel_bias(h, eb);
        h = nn::groupnorm_fwd(ps_, blk.gn2, h, tape);
        h = nn::silu_fwd(h, tape);
        h = nn::conv2d_fwd(ps_, blk.conv2, h, tape);
        Tensor<T> skip = (blk.c_in == blk.c_out)
                             ? x
                             : nn::conv2d_fwd(ps_, blk.skip, x, tape);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += skip[i];
        return h;
    }

    void block_bwd(const Block& blk, Tensor<T>& d, Tensor<T>& d_es, Tape& tape,
                   nn::Grads<T>& grads) const {
        Tensor<T> dx_skip;
        if (blk.c_in != blk.c_out) {
            dx_skip = nn::conv2d_bwd(ps_, blk.skip, d, tape, grads);
        }
        Tensor<T> dh = nn::conv2d_bwd(ps_, blk.conv2, d, tape, grads);
        dh = nn::silu_bwd(dh, tape);
        dh = nn::groupnorm_bwd(ps_, blk.gn2, dh, tape, grads);
        Tensor<T> de = nn::reduce_channel_bias(dh);
        Tensor<T> des = nn::linear_bwd(ps_, blk.emb_proj, de, tape, grads);
        for (std::size_t i = 0; i < d_es.size(); ++i) d_es[i] += des[i];
        dh = nn::conv2d_bwd(ps_, blk.conv1, dh, tape, grads);
        dh = nn::silu_bwd(dh, tape);
        dh = nn::groupnorm_bwd(ps_, blk.gn1, dh, tape, grads);
        if (blk.c_in == blk.c_out) {
            for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += d[i];
        } else {
            for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dx_skip[i];
        }
        d = std::move(dh);
    }

    Tensor<T> run(const Tensor<T>& x, const std::vector<T>& cnoise, Tape* tape,
                  FeatureMaps<T>* taps) const {
        if (x.ndim() != 4 || static_cast<int>(x.dim(1)) != cfg_.in_channels ||
            static_cast<int>(x.dim(2)) != cfg_.resolution ||
            static_cast<int>(x.dim(3)) != cfg_.resolution) {
            throw std::invalid_argument("UNet: input shape mismatch, got " +
                                        shape_string(x));
        }
        if (cnoise.size() != x.dim(0)) {
            throw std::invalid_argument("UNet: conditioning length mismatch");
        }

        Tensor<T> emb0 = nn::sinusoidal_embedding(cnoise, emb_dim_);
        Tensor<T> e1 = nn::linear_fwd(ps_, mlp1_, emb0, tape);
        Tensor<T> e1s = nn::silu_fwd(e1, tape);
        Tensor<T> emb = nn::linear_fwd(ps_, mlp2_, e1s, tape);
        Tensor<T> es = nn::silu_fwd(emb, tape);

        const std::size_t S = stage_widths_.size();
        Tensor<T> h = nn::conv2d_fwd(ps_, stem_, x, tape);
        std::vector<Tensor<T>> skips(S);
        for (std::size_t s = 0; s < S; ++s) {
            for (const Block& b : enc_blocks_[s]) h = block_fwd(b, h, es, tape);
            skips[s] = h;
            if (s + 1 < S) h = nn::avgpool2_fwd(h);
        }
        h = block_fwd(mid_block_, h, es, tape);
        for (std::size_t s = S; s-- > 0;) {
            if (s + 1 < S) h = nn::upsample2_fwd(h);
            h = nn::concat_channels(h, skips[s]);
            for (const Block& b : dec_blocks_[s]) h = block_fwd(b, h, es, tape);
            if (taps) taps->levels.push_back(h);
        }
        h = nn::groupnorm_fwd(ps_, head_gn_, h, tape);
        h = nn::silu_fwd(h, tape);
        return nn::conv2d_fwd(ps_, head_conv_, h, tape);
    }

    UNetConfig cfg_;
    int emb_dim_ = 0;
    nn::ParamStore<T> ps_;
    std::vector<bool> zero_init_;
    std::vector<std::size_t> stage_widths_;
    nn::LinearRef mlp1_, mlp2_;
    nn::ConvRef stem_;
    std::vector<std::vector<Block>> enc_blocks_;
    Block mid_block_;
    std::vector<std::vector<Block>> dec_blocks_;
    nn::GroupNormRef head_gn_;
    nn::ConvRef head_conv_;
};

inline void validate(const UNetConfig& cfg) {
    if (cfg.base_channels < 8) {
        throw std::invalid_argument("UNetConfig: base_channels must be >= 8");
    }
    if (cfg.channel_multipliers.empty()) {
        throw std::invalid_argument("UNetConfig: channel_multipliers must be non-empty");
    }
    for (int m : cfg.channel_multipliers) {
        if (m < 1) throw std::invalid_argument("UNetConfig: multipliers must be >= 1");
    }
    if (cfg.in_channels != 1 && cfg.in_channels != 3) {
        throw std::invalid_argument("UNetConfig: in_channels must be 1 or 3");
    }
    const int down = static_cast<int>(cfg.channel_multipliers.size()) - 1;
    const int denom = 1 << down;
    if (cfg.resolution < 8 || cfg.resolution % denom != 0) {
        throw std::invalid_argument(
            "UNetConfig: resolution " + std::to_string(cfg.resolution) +
            " not divisible by 2^" + std::to_string(down));
    }
}

/// target' = mu * target + (1 - mu) * online, elementwise.
template <typename T>
void ema_update(nn::ParamStore<T>& target, const nn::ParamStore<T>& online, double mu) {
    if (mu < 0.0 || mu > 1.0) throw std::invalid_argument("ema_update: mu must be in [0,1]");
    if (target.values.size() != online.values.size()) {
        throw std::invalid_argument("ema_update: parameter count mismatch");
    }
    for (std::size_t i = 0; i < target.values.size(); ++i) {
        auto& t = target.values[i];
        const auto& o = online.values[i];
        check_same_shape(t, o, "ema_update");
        const T m = static_cast<T>(mu);
        for (std::size_t j = 0; j < t.size(); ++j) {
            t[j] = m * t[j] + (T{1} - m) * o[j];
        }
    }
}

}  // namespace pr::net
