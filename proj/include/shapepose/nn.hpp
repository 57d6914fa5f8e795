#ifndef SHAPEPOSE_NN_HPP
#define SHAPEPOSE_NN_HPP

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "shapepose/common.hpp"

// Minimal neural-network kernel set with hand-written backward passes.
// Layers are stateless apart from parameter indices; every application gets
// its own cache so one set of weights can be applied to many inputs.
// Templated on the scalar so training runs in float while gradient checks
// run at 64-bit precision.

namespace shapepose::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
};

template <class S>
class ParamStore {
public:
    int add(const std::string& name, int rows, int cols) {
        params_.push_back({name, Mat<S>::Zero(rows, cols), Mat<S>::Zero(rows, cols)});
        return static_cast<int>(params_.size()) - 1;
    }
    Param<S>& operator[](int i) { return params_[i]; }
    const Param<S>& operator[](int i) const { return params_[i]; }
    int size() const { return static_cast<int>(params_.size()); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
        return n;
    }
    void zero_grad() {
        for (auto& p : params_) p.grad.setZero();
    }
    /// Fan-in scaled uniform init; fan-in is the column count.
    void init(Rng& rng) {
        for (auto& p : params_) {
            if (p.value.cols() == 1) {  // biases
                p.value.setZero();
                continue;
            }
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
            std::uniform_real_distribution<double> uni(-bound, bound);
            for (int i = 0; i < p.value.size(); ++i)
                p.value.data()[i] = static_cast<S>(uni(rng));
        }
    }

private:
    std::vector<Param<S>> params_;
};

// ---------------------------------------------------------------------------
// Linear

template <class S>
struct LinearCache {
    Vec<S> input;
};

template <class S>
class Linear {
public:
    Linear() = default;
    Linear(ParamStore<S>& store, const std::string& name, int in, int out)
        : w_(store.add(name + ".weight", out, in)), b_(store.add(name + ".bias", out, 1)) {}

    Vec<S> forward(const ParamStore<S>& ps, const Vec<S>& x, LinearCache<S>& cache) const {
        cache.input = x;
        return ps[w_].value * x + ps[b_].value.col(0);
    }
    Vec<S> backward(ParamStore<S>& ps, const LinearCache<S>& cache, const Vec<S>& gout) const {
        ps[w_].grad.noalias() += gout * cache.input.transpose();
        ps[b_].grad.col(0) += gout;
        return ps[w_].value.transpose() * gout;
    }

private:
    int w_ = -1, b_ = -1;
};

// ---------------------------------------------------------------------------
// 3x3 convolution, padding 1, arbitrary stride, via im2col.
// Feature maps are stored as (channels, H*W) matrices, spatial index y*W + x.

template <class S>
struct ConvCache {
    Mat<S> col;  // (Cin*9, Ho*Wo)
};

template <class S>
class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(ParamStore<S>& store, const std::string& name, int cin, int cout, int h, int w, int stride)
        : cin_(cin), cout_(cout), h_(h), w_(w), stride_(stride),
          ho_((h - 1) / stride + 1), wo_((w - 1) / stride + 1),
          wp_(store.add(name + ".weight", cout, cin * 9)),
          bp_(store.add(name + ".bias", cout, 1)) {}

    int out_h() const { return ho_; }
    int out_w() const { return wo_; }

    Mat<S> forward(const ParamStore<S>& ps, const Mat<S>& x, ConvCache<S>& cache) const {
        cache.col.resize(cin_ * 9, ho_ * wo_);
        im2col(x, cache.col);
        Mat<S> out = ps[wp_].value * cache.col;
        out.colwise() += ps[bp_].value.col(0);
        return out;
    }
    Mat<S> backward(ParamStore<S>& ps, const ConvCache<S>& cache, const Mat<S>& gout) const {
        ps[wp_].grad.noalias() += gout * cache.col.transpose();
        ps[bp_].grad.col(0) += gout.rowwise().sum();
        const Mat<S> gcol = ps[wp_].value.transpose() * gout;
        Mat<S> gin = Mat<S>::Zero(cin_, h_ * w_);
        col2im(gcol, gin);
        return gin;
    }

private:
    void im2col(const Mat<S>& x, Mat<S>& col) const {
        col.setZero();
        for (int oy = 0; oy < ho_; ++oy) {
            for (int ox = 0; ox < wo_; ++ox) {
                const int o = oy * wo_ + ox;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy * stride_ - 1 + ky;
                    if (iy < 0 || iy >= h_) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ox * stride_ - 1 + kx;
                        if (ix < 0 || ix >= w_) continue;
                        const int i = iy * w_ + ix;
                        const int kr = ky * 3 + kx;
                        for (int c = 0; c < cin_; ++c) col(c * 9 + kr, o) = x(c, i);
                    }
                }
            }
        }
    }
    void col2im(const Mat<S>& gcol, Mat<S>& gin) const {
        for (int oy = 0; oy < ho_; ++oy) {
            for (int ox = 0; ox < wo_; ++ox) {
                const int o = oy * wo_ + ox;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy * stride_ - 1 + ky;
                    if (iy < 0 || iy >= h_) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ox * stride_ - 1 + kx;
                        if (ix < 0 || ix >= w_) continue;
                        const int i = iy * w_ + ix;
                        const int kr = ky * 3 + kx;
                        for (int c = 0; c < cin_; ++c) gin(c, i) += gcol(c * 9 + kr, o);
                    }
                }
            }
        }
    }

    int cin_ = 0, cout_ = 0, h_ = 0, w_ = 0, stride_ = 1, ho_ = 0, wo_ = 0;
    int wp_ = -1, bp_ = -1;
};

// ---------------------------------------------------------------------------
// Bilinear resize to an explicit target size (half-pixel-center convention).

template <class S>
class BilinearUpsample {
public:
    BilinearUpsample() = default;
    BilinearUpsample(int hi, int wi, int ho, int wo) : hi_(hi), wi_(wi), ho_(ho), wo_(wo) {
        build_axis(hi, ho, y_idx_, y_w_);
        build_axis(wi, wo, x_idx_, x_w_);
    }

    Mat<S> forward(const Mat<S>& x) const {
        const int C = static_cast<int>(x.rows());
        Mat<S> out(C, ho_ * wo_);
        for (int oy = 0; oy < ho_; ++oy) {
            const int y0 = y_idx_[oy][0], y1 = y_idx_[oy][1];
            const S wy = static_cast<S>(y_w_[oy]);
            for (int ox = 0; ox < wo_; ++ox) {
                const int x0 = x_idx_[ox][0], x1 = x_idx_[ox][1];
                const S wx = static_cast<S>(x_w_[ox]);
                const S w00 = (S(1) - wy) * (S(1) - wx), w01 = (S(1) - wy) * wx;
                const S w10 = wy * (S(1) - wx), w11 = wy * wx;
                out.col(oy * wo_ + ox) =
                    w00 * x.col(y0 * wi_ + x0) + w01 * x.col(y0 * wi_ + x1) +
                    w10 * x.col(y1 * wi_ + x0) + w11 * x.col(y1 * wi_ + x1);
            }
        }
        return out;
    }
    Mat<S> backward(const Mat<S>& gout) const {
        const int C = static_cast<int>(gout.rows());
        Mat<S> gin = Mat<S>::Zero(C, hi_ * wi_);
        for (int oy = 0; oy < ho_; ++oy) {
            const int y0 = y_idx_[oy][0], y1 = y_idx_[oy][1];
            const S wy = static_cast<S>(y_w_[oy]);
            for (int ox = 0; ox < wo_; ++ox) {
                const int x0 = x_idx_[ox][0], x1 = x_idx_[ox][1];
                const S wx = static_cast<S>(x_w_[ox]);
                const auto g = gout.col(oy * wo_ + ox);
                gin.col(y0 * wi_ + x0) += (S(1) - wy) * (S(1) - wx) * g;
                gin.col(y0 * wi_ + x1) += (S(1) - wy) * wx * g;
                gin.col(y1 * wi_ + x0) += wy * (S(1) - wx) * g;
                gin.col(y1 * wi_ + x1) += wy * wx * g;
            }
        }
        return gin;
    }

private:
    static void build_axis(int in, int out, std::vector<std::array<int, 2>>& idx, std::vector<double>& w) {
        idx.resize(out);
        w.resize(out);
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
            src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            idx[o] = {i0, i1};
            w[o] = src - i0;
        }
    }

    int hi_ = 0, wi_ = 0, ho_ = 0, wo_ = 0;
    std::vector<std::array<int, 2>> y_idx_, x_idx_;
    std::vector<double> y_w_, x_w_;
};

// ---------------------------------------------------------------------------
// Activations

template <class S>
struct LeakyReluCache {
    Mat<S> input;
};

template <class S>
class LeakyRelu {
public:
    explicit LeakyRelu(double slope = 0.01) : slope_(static_cast<S>(slope)) {}
    Mat<S> forward(const Mat<S>& x, LeakyReluCache<S>& cache) const {
        cache.input = x;
        return x.unaryExpr([s = slope_](S v) { return v > S(0) ? v : s * v; });
    }
    Mat<S> backward(const LeakyReluCache<S>& cache, const Mat<S>& gout) const {
        return gout.array() * cache.input.unaryExpr([s = slope_](S v) { return v > S(0) ? S(1) : s; }).array();
    }

private:
    S slope_;
};

template <class S>
struct SigmoidCache {
    Mat<S> output;
};

template <class S>
class Sigmoid {
public:
    Mat<S> forward(const Mat<S>& x, SigmoidCache<S>& cache) const {
        cache.output = x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
        return cache.output;
    }
    Mat<S> backward(const SigmoidCache<S>& cache, const Mat<S>& gout) const {
        return gout.array() * cache.output.array() * (S(1) - cache.output.array());
    }
};

// ---------------------------------------------------------------------------
// Adam

template <class S>
class Adam {
public:
    Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore<S>& ps) {
        if (m_.empty()) {
            for (int i = 0; i < ps.size(); ++i) {
                m_.push_back(Mat<S>::Zero(ps[i].value.rows(), ps[i].value.cols()));
                v_.push_back(Mat<S>::Zero(ps[i].value.rows(), ps[i].value.cols()));
            }
        }
        ++t_;
        const S c1 = static_cast<S>(1.0 - std::pow(beta1_, t_));
        const S c2 = static_cast<S>(1.0 - std::pow(beta2_, t_));
        for (int i = 0; i < ps.size(); ++i) {
            auto& p = ps[i];
            m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * p.grad;
            v_[i] = static_cast<S>(beta2_) * v_[i].array().matrix() +
                    static_cast<S>(1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
            p.value.array() -= static_cast<S>(lr_) * (m_[i].array() / c1) /
                               ((v_[i].array() / c2).sqrt() + static_cast<S>(eps_));
        }
    }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

}  // namespace shapepose::nn

#endif
