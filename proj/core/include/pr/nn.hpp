#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pr/rng.hpp"
#include "pr/tensor.hpp"

// Minimal NCHW layer zoo with explicit backward passes. Forward passes push
// whatever the matching backward needs onto a tape; backward pops in exact
// reverse order. The finite-difference tests in tests/ keep the two sides
// honest.
namespace pr::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

template <typename T>
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor<T>> values;

    int add(std::string name, std::vector<std::size_t> shape) {
        names.push_back(std::move(name));
        values.emplace_back(std::move(shape));
        return static_cast<int>(values.size()) - 1;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& v : values) n += v.size();
        return n;
    }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return static_cast<int>(i);
        }
        throw std::out_of_range("ParamStore: no parameter named " + name);
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        out.names = names;
        for (const auto& v : values) out.values.push_back(v.template cast<U>());
        return out;
    }
};

template <typename T>
struct Grads {
    std::vector<Tensor<T>> values;

    explicit Grads(const ParamStore<T>& ps) {
        values.reserve(ps.values.size());
        for (const auto& v : ps.values) values.emplace_back(v.shape());
    }

    void zero() {
        for (auto& g : values) std::fill(g.begin(), g.end(), T{0});
    }
};

template <typename T>
struct Tape {
    std::vector<Tensor<T>> items;

    void push(Tensor<T> t) { items.push_back(std::move(t)); }

    Tensor<T> pop() {
        if (items.empty()) throw std::logic_error("Tape: pop on empty tape");
        Tensor<T> t = std::move(items.back());
        items.pop_back();
        return t;
    }
};

// ---------------------------------------------------------------------------
// conv2d, kernel 3x3 pad 1 or 1x1
// ---------------------------------------------------------------------------

struct ConvRef {
    int w = -1, b = -1;
    int k = 3;
};

// cols: (Cin*K*K) x (H*W), row-major
template <typename T>
void im2col_3x3(const T* x, int C, int H, int W, T* cols) {
    const int HW = H * W;
    for (int c = 0; c < C; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * HW;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * HW;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    T* dst = row + static_cast<std::size_t>(y) * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst, dst + W, T{0});
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(sy) * W;
                    const int dxk = kx - 1;
                    int x0 = std::max(0, -dxk);
                    int x1 = std::min(W, W - dxk);
                    if (x0 > 0) std::fill(dst, dst + x0, T{0});
                    if (x1 > x0) std::copy(src + x0 + dxk, src + x1 + dxk, dst + x0);
                    if (x1 < W) std::fill(dst + x1, dst + W, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im_3x3(const T* cols, int C, int H, int W, T* x) {
    const int HW = H * W;
    for (int c = 0; c < C; ++c) {
        T* xc = x + static_cast<std::size_t>(c) * HW;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * HW;
                const int dxk = kx - 1;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    const T* src = row + static_cast<std::size_t>(y) * W;
                    T* dst = xc + static_cast<std::size_t>(sy) * W;
                    int x0 = std::max(0, -dxk);
                    int x1 = std::min(W, W - dxk);
                    for (int xx = x0; xx < x1; ++xx) dst[xx + dxk] += src[xx];
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv2d_fwd(const ParamStore<T>& ps, const ConvRef& cv, const Tensor<T>& x,
                     Tape<T>* tape) {
    const auto& w = ps.values[cv.w];
    const auto& b = ps.values[cv.b];
    const int B = static_cast<int>(x.dim(0)), Cin = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int Cout = static_cast<int>(w.dim(0));
    if (static_cast<int>(w.dim(1)) != Cin) {
        throw std::invalid_argument("conv2d: channel mismatch");
    }
    const int K = cv.k;
    const int HW = H * W;
    Tensor<T> y({static_cast<std::size_t>(B), static_cast<std::size_t>(Cout),
                 static_cast<std::size_t>(H), static_cast<std::size_t>(W)});

    CMapRM<T> wm(w.data(), Cout, Cin * K * K);
    std::vector<T> cols;
    if (K == 3) cols.resize(static_cast<std::size_t>(Cin) * 9 * HW);

    for (int n = 0; n < B; ++n) {
        const T* xb = x.data() + static_cast<std::size_t>(n) * Cin * HW;
        T* yb = y.data() + static_cast<std::size_t>(n) * Cout * HW;
        MapRM<T> ym(yb, Cout, HW);
        if (K == 3) {
            im2col_3x3(xb, Cin, H, W, cols.data());
            CMapRM<T> cm(cols.data(), Cin * 9, HW);
            ym.noalias() = wm * cm;
        } else {
            CMapRM<T> cm(xb, Cin, HW);
            ym.noalias() = wm * cm;
        }
        for (int co = 0; co < Cout; ++co) {
            ym.row(co).array() += b[static_cast<std::size_t>(co)];
        }
    }
    if (tape) tape->push(x);
    return y;
}

template <typename T>
Tensor<T> conv2d_bwd(const ParamStore<T>& ps, const ConvRef& cv, const Tensor<T>& dy,
                     Tape<T>& tape, Grads<T>& g) {
    Tensor<T> x = tape.pop();
    const auto& w = ps.values[cv.w];
    const int B = static_cast<int>(x.dim(0)), Cin = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int Cout = static_cast<int>(w.dim(0));
    const int K = cv.k;
    const int HW = H * W;

    Tensor<T>& dw = g.values[cv.w];
    Tensor<T>& db = g.values[cv.b];
    Tensor<T> dx(x.shape());

    CMapRM<T> wm(w.data(), Cout, Cin * K * K);
    MapRM<T> dwm(dw.data(), Cout, Cin * K * K);
    std::vector<T> cols, dcols;
    if (K == 3) {
        cols.resize(static_cast<std::size_t>(Cin) * 9 * HW);
        dcols.resize(cols.size());
    }

    for (int n = 0; n < B; ++n) {
        const T* xb = x.data() + static_cast<std::size_t>(n) * Cin * HW;
        const T* dyb = dy.data() + static_cast<std::size_t>(n) * Cout * HW;
        T* dxb = dx.data() + static_cast<std::size_t>(n) * Cin * HW;
        CMapRM<T> dym(dyb, Cout, HW);
        for (int co = 0; co < Cout; ++co) {
            db[static_cast<std::size_t>(co)] += dym.row(co).sum();
        }
        if (K == 3) {
            im2col_3x3(xb, Cin, H, W, cols.data());
            CMapRM<T> cm(cols.data(), Cin * 9, HW);
            dwm.noalias() += dym * cm.transpose();
            MapRM<T> dcm(dcols.data(), Cin * 9, HW);
            dcm.noalias() = wm.transpose() * dym;
            std::fill(dxb, dxb + static_cast<std::size_t>(Cin) * HW, T{0});
            col2im_3x3(dcols.data(), Cin, H, W, dxb);
        } else {
            CMapRM<T> cm(xb, Cin, HW);
            dwm.noalias() += dym * cm.transpose();
            MapRM<T> dxm(dxb, Cin, HW);
            dxm.noalias() = wm.transpose() * dym;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// group norm
// ---------------------------------------------------------------------------

struct GroupNormRef {
    int gamma = -1, beta = -1;
    int groups = 1;
};

// At least two channels per group, so per-channel conditioning shifts
// survive the normalization.
inline int pick_groups(int channels) {
    for (int g : {8, 4, 2}) {
        if (channels % g == 0 && channels / g >= 2) return g;
    }
    return 1;
}

template <typename T>
Tensor<T> groupnorm_fwd(const ParamStore<T>& ps, const GroupNormRef& gn,
                        const Tensor<T>& x, Tape<T>* tape) {
    const auto& gamma = ps.values[gn.gamma];
    const auto& beta = ps.values[gn.beta];
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t G = static_cast<std::size_t>(gn.groups);
    const std::size_t cg = C / G, m = cg * H * W;
    const T eps = static_cast<T>(1e-5);

    Tensor<T> xhat(x.shape());
    Tensor<T> invstd({B, G});
    Tensor<T> y(x.shape());

    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t gidx = 0; gidx < G; ++gidx) {
            const T* xp = x.data() + (n * C + gidx * cg) * H * W;
            T mean = 0, var = 0;
            for (std::size_t i = 0; i < m; ++i) mean += xp[i];
            mean /= static_cast<T>(m);
            for (std::size_t i = 0; i < m; ++i) {
                T d = xp[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(m);
            T is = T{1} / std::sqrt(var + eps);
            invstd[n * G + gidx] = is;
            T* xh = xhat.data() + (n * C + gidx * cg) * H * W;
            for (std::size_t i = 0; i < m; ++i) xh[i] = (xp[i] - mean) * is;
        }
        for (std::size_t c = 0; c < C; ++c) {
            const T* xh = xhat.data() + (n * C + c) * H * W;
            T* yp = y.data() + (n * C + c) * H * W;
            const T gmm = gamma[c], bt = beta[c];
            for (std::size_t i = 0; i < H * W; ++i) yp[i] = gmm * xh[i] + bt;
        }
    }
    if (tape) {
        tape->push(std::move(xhat));
        tape->push(std::move(invstd));
    }
    return y;
}

template <typename T>
Tensor<T> groupnorm_bwd(const ParamStore<T>& ps, const GroupNormRef& gn,
                        const Tensor<T>& dy, Tape<T>& tape, Grads<T>& g) {
    Tensor<T> invstd = tape.pop();
    Tensor<T> xhat = tape.pop();
    const auto& gamma = ps.values[gn.gamma];
    const std::size_t B = dy.dim(0), C = dy.dim(1), H = dy.dim(2), W = dy.dim(3);
    const std::size_t G = static_cast<std::size_t>(gn.groups);
    const std::size_t cg = C / G, m = cg * H * W;

    Tensor<T>& dgamma = g.values[gn.gamma];
    Tensor<T>& dbeta = g.values[gn.beta];
    Tensor<T> dx(dy.shape());

    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* dyp = dy.data() + (n * C + c) * H * W;
            const T* xh = xhat.data() + (n * C + c) * H * W;
            T sg = 0, sb = 0;
            for (std::size_t i = 0; i < H * W; ++i) {
                sg += dyp[i] * xh[i];
                sb += dyp[i];
            }
            dgamma[c] += sg;
            dbeta[c] += sb;
        }
        for (std::size_t gidx = 0; gidx < G; ++gidx) {
            // dxhat = dy * gamma; dx = invstd/m * (m*dxhat - sum(dxhat)
            //                                      - xhat * sum(dxhat*xhat))
            const T is = invstd[n * G + gidx];
            T sum_dxh = 0, sum_dxh_xh = 0;
            for (std::size_t cc = 0; cc < cg; ++cc) {
                const std::size_t c = gidx * cg + cc;
                const T* dyp = dy.data() + (n * C + c) * H * W;
                const T* xh = xhat.data() + (n * C + c) * H * W;
                const T gmm = gamma[c];
                for (std::size_t i = 0; i < H * W; ++i) {
                    T dxh = dyp[i] * gmm;
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[i];
                }
            }
            const T inv_m = T{1} / static_cast<T>(m);
            for (std::size_t cc = 0; cc < cg; ++cc) {
                const std::size_t c = gidx * cg + cc;
                const T* dyp = dy.data() + (n * C + c) * H * W;
                const T* xh = xhat.data() + (n * C + c) * H * W;
                T* dxp = dx.data() + (n * C + c) * H * W;
                const T gmm = gamma[c];
                for (std::size_t i = 0; i < H * W; ++i) {
                    T dxh = dyp[i] * gmm;
                    dxp[i] = is * (dxh - inv_m * sum_dxh - inv_m * xh[i] * sum_dxh_xh);
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// silu
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> silu_fwd(const Tensor<T>& x, Tape<T>* tape) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        T s = T{1} / (T{1} + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    if (tape) tape->push(x);
    return y;
}

template <typename T>
Tensor<T> silu_bwd(const Tensor<T>& dy, Tape<T>& tape) {
    Tensor<T> x = tape.pop();
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        T s = T{1} / (T{1} + std::exp(-x[i]));
        dx[i] = dy[i] * s * (T{1} + x[i] * (T{1} - s));
    }
    return dx;
}

// ---------------------------------------------------------------------------
// 2x2 average pool / nearest-neighbour upsample
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avgpool2_fwd(const Tensor<T>& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, C, H / 2, W / 2});
    for (std::size_t n = 0; n < B * C; ++n) {
        const T* xp = x.data() + n * H * W;
        T* yp = y.data() + n * (H / 2) * (W / 2);
        for (std::size_t i = 0; i < H / 2; ++i) {
            for (std::size_t j = 0; j < W / 2; ++j) {
                yp[i * (W / 2) + j] =
                    (xp[2 * i * W + 2 * j] + xp[2 * i * W + 2 * j + 1] +
                     xp[(2 * i + 1) * W + 2 * j] + xp[(2 * i + 1) * W + 2 * j + 1]) /
                    T{4};
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> avgpool2_bwd(const Tensor<T>& dy) {
    const std::size_t B = dy.dim(0), C = dy.dim(1), H = dy.dim(2) * 2, W = dy.dim(3) * 2;
    Tensor<T> dx({B, C, H, W});
    for (std::size_t n = 0; n < B * C; ++n) {
        const T* dyp = dy.data() + n * (H / 2) * (W / 2);
        T* dxp = dx.data() + n * H * W;
        for (std::size_t i = 0; i < H / 2; ++i) {
            for (std::size_t j = 0; j < W / 2; ++j) {
                T v = dyp[i * (W / 2) + j] / T{4};
                dxp[2 * i * W + 2 * j] = v;
                dxp[2 * i * W + 2 * j + 1] = v;
                dxp[(2 * i + 1) * W + 2 * j] = v;
                dxp[(2 * i + 1) * W + 2 * j + 1] = v;
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> upsample2_fwd(const Tensor<T>& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, C, H * 2, W * 2});
    for (std::size_t n = 0; n < B * C; ++n) {
        const T* xp = x.data() + n * H * W;
        T* yp = y.data() + n * 4 * H * W;
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                T v = xp[i * W + j];
                yp[2 * i * 2 * W + 2 * j] = v;
                yp[2 * i * 2 * W + 2 * j + 1] = v;
                yp[(2 * i + 1) * 2 * W + 2 * j] = v;
                yp[(2 * i + 1) * 2 * W + 2 * j + 1] = v;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> upsample2_bwd(const Tensor<T>& dy) {
    const std::size_t B = dy.dim(0), C = dy.dim(1), H = dy.dim(2) / 2, W = dy.dim(3) / 2;
    Tensor<T> dx({B, C, H, W});
    for (std::size_t n = 0; n < B * C; ++n) {
        const T* dyp = dy.data() + n * 4 * H * W;
        T* dxp = dx.data() + n * H * W;
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                dxp[i * W + j] = dyp[2 * i * 2 * W + 2 * j] + dyp[2 * i * 2 * W + 2 * j + 1] +
                                 dyp[(2 * i + 1) * 2 * W + 2 * j] +
                                 dyp[(2 * i + 1) * 2 * W + 2 * j + 1];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// linear (x: B x In, w: Out x In, b: Out)
// ---------------------------------------------------------------------------

struct LinearRef {
    int w = -1, b = -1;
};

template <typename T>
Tensor<T> linear_fwd(const ParamStore<T>& ps, const LinearRef& ln, const Tensor<T>& x,
                     Tape<T>* tape) {
    const auto& w = ps.values[ln.w];
    const auto& b = ps.values[ln.b];
    const std::size_t B = x.dim(0), In = x.dim(1), Out = w.dim(0);
    if (w.dim(1) != In) throw std::invalid_argument("linear: shape mismatch");
    Tensor<T> y({B, Out});
    CMapRM<T> xm(x.data(), B, In);
    CMapRM<T> wm(w.data(), Out, In);
    MapRM<T> ym(y.data(), B, Out);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t o = 0; o < Out; ++o) y[n * Out + o] += b[o];
    }
    if (tape) tape->push(x);
    return y;
}

template <typename T>
Tensor<T> linear_bwd(const ParamStore<T>& ps, const LinearRef& ln, const Tensor<T>& dy,
                     Tape<T>& tape, Grads<T>& g) {
    Tensor<T> x = tape.pop();
    const auto& w = ps.values[ln.w];
    const std::size_t B = x.dim(0), In = x.dim(1), Out = w.dim(0);
    Tensor<T> dx({B, In});
    CMapRM<T> xm(x.data(), B, In);
    CMapRM<T> wm(w.data(), Out, In);
    CMapRM<T> dym(dy.data(), B, Out);
    MapRM<T> dxm(dx.data(), B, In);
    MapRM<T> dwm(g.values[ln.w].data(), Out, In);
    dwm.noalias() += dym.transpose() * xm;
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t o = 0; o < Out; ++o) g.values[ln.b][o] += dy[n * Out + o];
    }
    dxm.noalias() = dym * wm;
    return dx;
}

// ---------------------------------------------------------------------------
// channel concat / per-channel bias broadcast
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::size_t H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != B || b.dim(2) != H || b.dim(3) != W) {
        throw std::invalid_argument("concat_channels: shape mismatch");
    }
    Tensor<T> y({B, Ca + Cb, H, W});
    const std::size_t hw = H * W;
    for (std::size_t n = 0; n < B; ++n) {
        std::copy(a.data() + n * Ca * hw, a.data() + (n + 1) * Ca * hw,
                  y.data() + n * (Ca + Cb) * hw);
        std::copy(b.data() + n * Cb * hw, b.data() + (n + 1) * Cb * hw,
                  y.data() + (n * (Ca + Cb) + Ca) * hw);
    }
    return y;
}

template <typename T>
void split_channels(const Tensor<T>& dy, std::size_t Ca, Tensor<T>& da, Tensor<T>& db) {
    const std::size_t B = dy.dim(0), C = dy.dim(1), H = dy.dim(2), W = dy.dim(3);
    const std::size_t Cb = C - Ca, hw = H * W;
    da = Tensor<T>({B, Ca, H, W});
    db = Tensor<T>({B, Cb, H, W});
    for (std::size_t n = 0; n < B; ++n) {
        std::copy(dy.data() + n * C * hw, dy.data() + (n * C + Ca) * hw,
                  da.data() + n * Ca * hw);
        std::copy(dy.data() + (n * C + Ca) * hw, dy.data() + (n + 1) * C * hw,
                  db.data() + n * Cb * hw);
    }
}

// y = x + e[:, :, None, None] with e: (B, C)
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& e) {
    const std::size_t B = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (e.dim(0) != B || e.dim(1) != C) {
        throw std::invalid_argument("add_channel_bias: shape mismatch");
    }
    Tensor<T> y = x;
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            T v = e[n * C + c];
            T* yp = y.data() + (n * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) yp[i] += v;
        }
    }
    return y;
}

template <typename T>
Tensor<T> reduce_channel_bias(const Tensor<T>& dy) {
    const std::size_t B = dy.dim(0), C = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
    Tensor<T> de({B, C});
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* p = dy.data() + (n * C + c) * hw;
            T s = 0;
            for (std::size_t i = 0; i < hw; ++i) s += p[i];
            de[n * C + c] = s;
        }
    }
    return de;
}

// ---------------------------------------------------------------------------
// sinusoidal embedding of the conditioning scalar (no parameters)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sinusoidal_embedding(const std::vector<T>& c, int dim) {
    if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_embedding: dim must be even");
    const std::size_t B = c.size();
    const int half = dim / 2;
    Tensor<T> e({B, static_cast<std::size_t>(dim)});
    for (std::size_t n = 0; n < B; ++n) {
        for (int j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(10000.0) * j / std::max(1, half - 1));
            double a = static_cast<double>(c[n]) * freq;
            e[n * dim + j] = static_cast<T>(std::sin(a));
            e[n * dim + half + j] = static_cast<T>(std::cos(a));
        }
    }
    return e;
}

}  // namespace pr::nn
