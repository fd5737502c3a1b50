#include "latentcast/nn/layers.hpp"

#include <cmath>

#include "conv_kernels.hpp"
#include "latentcast/error.hpp"

namespace latentcast::nn {

namespace {

using detail::ConstMatMap;
using detail::ConvGeometry;
using detail::MatMap;
using detail::RowMat;

template <typename T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
Parameter<T> make_param(const ParamShape& ps) {
    return Parameter<T>{ps.name, Tensor<T>(ps.shape), Tensor<T>(ps.shape), ps.fan_in};
}

template <typename T>
std::vector<Parameter<T>> make_params(const LayerSpec& spec) {
    std::vector<Parameter<T>> out;
    for (const auto& ps : param_shapes(spec)) out.push_back(make_param<T>(ps));
    return out;
}

[[noreturn]] void no_cache(const LayerSpec& spec) {
    throw Error(ErrorKind::State, describe(spec) + ": backward called without a Train-mode forward");
}

void expect_shape(const LayerSpec& spec, const Shape& got, const Shape& want) {
    if (got != want)
        throw Error(ErrorKind::Shape,
                    describe(spec) + ": gradient shape " + shape_string(got) + " != " + shape_string(want));
}

Shape per_sample(const Shape& full) { return Shape(full.begin() + 1, full.end()); }

Shape with_batch(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

/// Common plumbing for layers with parameters.
template <typename T, typename Derived>
class ParamLayer : public Layer<T> {
public:
    explicit ParamLayer(const LayerSpec& spec) : Layer<T>(spec), params_(make_params<T>(spec)) {}

    std::vector<Parameter<T>*> parameters() override {
        std::vector<Parameter<T>*> out;
        for (auto& p : params_) out.push_back(&p);
        return out;
    }
    std::unique_ptr<Layer<T>> clone() const override {
        return std::make_unique<Derived>(static_cast<const Derived&>(*this));
    }

protected:
    Parameter<T>& param(std::size_t i) { return params_[i]; }
    std::vector<Parameter<T>> params_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Conv : public ParamLayer<T, Conv<T>> {
public:
    using ParamLayer<T, Conv<T>>::ParamLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const auto& s = this->spec_;
        const Shape out_sample = output_shape(s, per_sample(x.shape()));
        auto [g, batch] = geometry(x.shape());
        Tensor<T> y(with_batch(x.dim(0), out_sample));
        detail::conv_forward(g, batch, x.data(), this->param(0).value.data(), this->param(1).value.data(), y.data());
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        auto [g, batch] = geometry(input_.shape());
        Tensor<T> gx(input_.shape());
        detail::conv_backward(g, batch, input_.data(), this->param(0).value.data(), gy.data(), gx.data(),
                              this->param(0).grad.data(), this->param(1).grad.data());
        return gx;
    }

private:
    std::pair<ConvGeometry, std::size_t> geometry(const Shape& full) const {
        const auto& s = this->spec_;
        ConvGeometry g;
        std::size_t batch = 1;
        const std::size_t r = full.size();
        if (s.kind == LayerKind::Conv3D) {
            batch = full[0];
            g.depth = full[1];
        } else {
            for (std::size_t i = 0; i + 3 < r; ++i) batch *= full[i];
        }
        g.channels = full[r - 3];
        g.height = full[r - 2];
        g.width = full[r - 1];
        g.out_channels = s.out;
        g.kd = s.kernel[0], g.kh = s.kernel[1], g.kw = s.kernel[2];
        g.sd = s.stride[0], g.sh = s.stride[1], g.sw = s.stride[2];
        g.pd = s.padding[0], g.ph = s.padding[1], g.pw = s.padding[2];
        return {g, batch};
    }

    Tensor<T> input_;
    bool cached_ = false;
};

// Weight layout (Ci, Co, k, k). Forward is the adjoint of a Conv2D mapping the
// output grid back onto the input grid.
template <typename T>
class ConvTranspose : public ParamLayer<T, ConvTranspose<T>> {
public:
    using ParamLayer<T, ConvTranspose<T>>::ParamLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const Shape out_sample = output_shape(this->spec_, per_sample(x.shape()));
        Tensor<T> y(with_batch(x.dim(0), out_sample));
        auto [g, batch] = adjoint_geometry(x.shape(), y.shape());
        const auto Ci = static_cast<Eigen::Index>(g.out_channels);
        const auto R = static_cast<Eigen::Index>(g.col_rows());
        const auto P = static_cast<Eigen::Index>(g.col_cols());
        ConstMatMap<T> wm(this->param(0).value.data(), Ci, R);
        RowMat<T> cols(R, P);
        const T* bias = this->param(1).value.data();
        const std::size_t hw = g.height * g.width;
        for (std::size_t n = 0; n < batch; ++n) {
            ConstMatMap<T> xm(x.data() + n * g.out_size(), Ci, P);
            cols.noalias() = wm.transpose() * xm;
            T* yn = y.data() + n * g.in_size();
            detail::col2im(g, cols.data(), yn);
            for (std::size_t c = 0; c < g.channels; ++c)
                for (std::size_t i = 0; i < hw; ++i) yn[c * hw + i] += bias[c];
        }
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        auto [g, batch] = adjoint_geometry(input_.shape(), gy.shape());
        const auto Ci = static_cast<Eigen::Index>(g.out_channels);
        const auto R = static_cast<Eigen::Index>(g.col_rows());
        const auto P = static_cast<Eigen::Index>(g.col_cols());
        ConstMatMap<T> wm(this->param(0).value.data(), Ci, R);
        MatMap<T> gwm(this->param(0).grad.data(), Ci, R);
        T* gb = this->param(1).grad.data();
        Tensor<T> gx(input_.shape());
        RowMat<T> gcols(R, P);
        const std::size_t hw = g.height * g.width;
        for (std::size_t n = 0; n < batch; ++n) {
            const T* gyn = gy.data() + n * g.in_size();
            for (std::size_t c = 0; c < g.channels; ++c)
                for (std::size_t i = 0; i < hw; ++i) gb[c] += gyn[c * hw + i];
            detail::im2col(g, gyn, gcols.data());
            ConstMatMap<T> xm(input_.data() + n * g.out_size(), Ci, P);
            gwm.noalias() += xm * gcols.transpose();
            MatMap<T>(gx.data() + n * g.out_size(), Ci, P).noalias() = wm * gcols;
        }
        return gx;
    }

private:
    std::pair<ConvGeometry, std::size_t> adjoint_geometry(const Shape& in_full, const Shape& out_full) const {
        const auto& s = this->spec_;
        const std::size_t r = in_full.size();
        std::size_t batch = 1;
        for (std::size_t i = 0; i + 3 < r; ++i) batch *= in_full[i];
        ConvGeometry g;
        g.channels = s.out;
        g.height = out_full[r - 2];
        g.width = out_full[r - 1];
        g.out_channels = s.in;
        g.kh = s.kernel[1], g.kw = s.kernel[2];
        g.sh = s.stride[1], g.sw = s.stride[2];
        g.ph = s.padding[1], g.pw = s.padding[2];
        return {g, batch};
    }

    Tensor<T> input_;
    bool cached_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
class Dense : public ParamLayer<T, Dense<T>> {
public:
    using ParamLayer<T, Dense<T>>::ParamLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const auto& s = this->spec_;
        const Shape out_sample = output_shape(s, per_sample(x.shape()));
        const auto M = static_cast<Eigen::Index>(x.size() / s.in);
        ConstMatMap<T> xm(x.data(), M, static_cast<Eigen::Index>(s.in));
        ConstMatMap<T> wm(this->param(0).value.data(), static_cast<Eigen::Index>(s.out),
                          static_cast<Eigen::Index>(s.in));
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(this->param(1).value.data(),
                                                                static_cast<Eigen::Index>(s.out));
        Tensor<T> y(with_batch(x.dim(0), out_sample));
        MatMap<T> ym(y.data(), M, static_cast<Eigen::Index>(s.out));
        ym.noalias() = xm * wm.transpose();
        ym.rowwise() += b;
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        const auto& s = this->spec_;
        const auto M = static_cast<Eigen::Index>(input_.size() / s.in);
        const auto F = static_cast<Eigen::Index>(s.in), O = static_cast<Eigen::Index>(s.out);
        ConstMatMap<T> xm(input_.data(), M, F);
        ConstMatMap<T> gm(gy.data(), M, O);
        ConstMatMap<T> wm(this->param(0).value.data(), O, F);
        MatMap<T>(this->param(0).grad.data(), O, F).noalias() += gm.transpose() * xm;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(this->param(1).grad.data(), O);
        gb += gm.colwise().sum();
        Tensor<T> gx(input_.shape());
        MatMap<T>(gx.data(), M, F).noalias() = gm * wm;
        return gx;
    }

private:
    Tensor<T> input_;
    bool cached_ = false;
};

// ---------------------------------------------------------------------------
// Vector recurrent cells over (N, T, F). Gate order: LSTM i, f, g, o; GRU z, r, n.

template <typename T>
class VectorRecurrent : public ParamLayer<T, VectorRecurrent<T>> {
public:
    explicit VectorRecurrent(const LayerSpec& spec) : ParamLayer<T, VectorRecurrent<T>>(spec) {
        gates_ = spec.kind == LayerKind::LSTMCell ? 4 : spec.kind == LayerKind::GRUCell ? 3 : 1;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const auto& s = this->spec_;
        const Shape out_sample = output_shape(s, per_sample(x.shape()));
        const auto N = static_cast<Eigen::Index>(x.dim(0));
        const std::size_t steps = x.dim(1);
        const auto F = static_cast<Eigen::Index>(s.in), H = static_cast<Eigen::Index>(s.out);
        const auto GH = static_cast<Eigen::Index>(gates_) * H;

        ConstMatMap<T> xm(x.data(), N * static_cast<Eigen::Index>(steps), F);
        ConstMatMap<T> wx(this->param(0).value.data(), GH, F);
        ConstMatMap<T> wh(this->param(1).value.data(), GH, H);
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(this->param(2).value.data(), GH);
        const RowMat<T> xp = xm * wx.transpose();

        steps_.assign(steps, {});
        RowMat<T> h_prev = RowMat<T>::Zero(N, H);
        RowMat<T> c_prev = RowMat<T>::Zero(N, H);
        Tensor<T> y(with_batch(x.dim(0), out_sample));
        for (std::size_t t = 0; t < steps; ++t) {
            RowMat<T> pre(N, GH);
            for (Eigen::Index n = 0; n < N; ++n) pre.row(n) = xp.row(n * static_cast<Eigen::Index>(steps) + static_cast<Eigen::Index>(t));
            pre.rowwise() += b;
            auto& st = steps_[t];
            if (s.kind == LayerKind::GRUCell) {
                pre.leftCols(2 * H).noalias() += h_prev * wh.topRows(2 * H).transpose();
                st.gates.resize(N, GH);
                st.gates.leftCols(2 * H) = pre.leftCols(2 * H).unaryExpr([](T v) { return sigmoid(v); });
                st.aux = st.gates.middleCols(H, H).cwiseProduct(h_prev);  // r * h_prev
                RowMat<T> npre = pre.rightCols(H);
                npre.noalias() += st.aux * wh.bottomRows(H).transpose();
                st.gates.rightCols(H) = npre.array().tanh().matrix();
                const auto z = st.gates.leftCols(H).array();
                st.h = ((T{1} - z) * h_prev.array() + z * st.gates.rightCols(H).array()).matrix();
            } else {
                pre.noalias() += h_prev * wh.transpose();
                if (s.kind == LayerKind::ElmanCell) {
                    st.gates = pre.array().tanh().matrix();
                    st.h = st.gates;
                } else {
                    st.gates.resize(N, GH);
                    st.gates.leftCols(2 * H) = pre.leftCols(2 * H).unaryExpr([](T v) { return sigmoid(v); });
                    st.gates.middleCols(2 * H, H) = pre.middleCols(2 * H, H).array().tanh().matrix();
                    st.gates.rightCols(H) = pre.rightCols(H).unaryExpr([](T v) { return sigmoid(v); });
                    const auto i = st.gates.leftCols(H).array();
                    const auto f = st.gates.middleCols(H, H).array();
                    const auto g = st.gates.middleCols(2 * H, H).array();
                    const auto o = st.gates.rightCols(H).array();
                    st.c = (f * c_prev.array() + i * g).matrix();
                    st.aux = st.c.array().tanh().matrix();
                    st.h = (o * st.aux.array()).matrix();
                    c_prev = st.c;
                }
            }
            h_prev = st.h;
            if (s.return_sequences) {
                for (Eigen::Index n = 0; n < N; ++n)
                    MatMap<T>(y.data() + (static_cast<std::size_t>(n) * steps + t) * static_cast<std::size_t>(H), 1, H) =
                        st.h.row(n);
            }
        }
        if (!s.return_sequences) MatMap<T>(y.data(), N, H) = h_prev;
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        } else {
            steps_.clear();
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        const auto& s = this->spec_;
        const auto N = static_cast<Eigen::Index>(input_.dim(0));
        const std::size_t steps = input_.dim(1);
        const auto TS = static_cast<Eigen::Index>(steps);
        const auto F = static_cast<Eigen::Index>(s.in), H = static_cast<Eigen::Index>(s.out);
        const auto GH = static_cast<Eigen::Index>(gates_) * H;
        expect_shape(s, gy.shape(), with_batch(input_.dim(0), output_shape(s, per_sample(input_.shape()))));

        ConstMatMap<T> wx(this->param(0).value.data(), GH, F);
        ConstMatMap<T> wh(this->param(1).value.data(), GH, H);
        MatMap<T> gwx(this->param(0).grad.data(), GH, F);
        MatMap<T> gwh(this->param(1).grad.data(), GH, H);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(this->param(2).grad.data(), GH);

        RowMat<T> dp(N * TS, GH);
        RowMat<T> dh_next = RowMat<T>::Zero(N, H);
        RowMat<T> dc_next = RowMat<T>::Zero(N, H);
        const RowMat<T> zeros = RowMat<T>::Zero(N, H);
        for (std::size_t tt = steps; tt-- > 0;) {
            const auto& st = steps_[tt];
            RowMat<T> dh = dh_next;
            if (s.return_sequences) {
                for (Eigen::Index n = 0; n < N; ++n)
                    dh.row(n) += ConstMatMap<T>(gy.data() + (static_cast<std::size_t>(n) * steps + tt) * static_cast<std::size_t>(H), 1, H);
            } else if (tt + 1 == steps) {
                dh += ConstMatMap<T>(gy.data(), N, H);
            }
            const RowMat<T>& h_prev = tt > 0 ? steps_[tt - 1].h : zeros;
            RowMat<T> dpre(N, GH);
            if (s.kind == LayerKind::ElmanCell) {
                dpre = (dh.array() * (T{1} - st.h.array().square())).matrix();
                dh_next.noalias() = dpre * wh;
            } else if (s.kind == LayerKind::LSTMCell) {
                const RowMat<T>& c_prev = tt > 0 ? steps_[tt - 1].c : zeros;
                const auto i = st.gates.leftCols(H).array();
                const auto f = st.gates.middleCols(H, H).array();
                const auto g = st.gates.middleCols(2 * H, H).array();
                const auto o = st.gates.rightCols(H).array();
                const auto tc = st.aux.array();
                const RowMat<T> dc = (dc_next.array() + dh.array() * o * (T{1} - tc.square())).matrix();
                dpre.leftCols(H) = (dc.array() * g * i * (T{1} - i)).matrix();
                dpre.middleCols(H, H) = (dc.array() * c_prev.array() * f * (T{1} - f)).matrix();
                dpre.middleCols(2 * H, H) = (dc.array() * i * (T{1} - g.square())).matrix();
                dpre.rightCols(H) = (dh.array() * tc * o * (T{1} - o)).matrix();
                dc_next = (dc.array() * f).matrix();
                dh_next.noalias() = dpre * wh;
            } else {
                const auto z = st.gates.leftCols(H).array();
                const auto r = st.gates.middleCols(H, H).array();
                const auto nn = st.gates.rightCols(H).array();
                const RowMat<T> dpre_n = (dh.array() * z * (T{1} - nn.square())).matrix();
                const RowMat<T> drh = dpre_n * wh.bottomRows(H);
                dpre.leftCols(H) = (dh.array() * (nn - h_prev.array()) * z * (T{1} - z)).matrix();
                dpre.middleCols(H, H) = (drh.array() * h_prev.array() * r * (T{1} - r)).matrix();
                dpre.rightCols(H) = dpre_n;
                dh_next = (dh.array() * (T{1} - z) + drh.array() * r).matrix();
                dh_next.noalias() += dpre.leftCols(2 * H) * wh.topRows(2 * H);
                gwh.bottomRows(H).noalias() += dpre_n.transpose() * st.aux;
            }
            if (s.kind == LayerKind::GRUCell) {
                gwh.topRows(2 * H).noalias() += dpre.leftCols(2 * H).transpose() * h_prev;
            } else {
                gwh.noalias() += dpre.transpose() * h_prev;
            }
            for (Eigen::Index n = 0; n < N; ++n) dp.row(n * TS + static_cast<Eigen::Index>(tt)) = dpre.row(n);
        }
        ConstMatMap<T> xm(input_.data(), N * TS, F);
        gwx.noalias() += dp.transpose() * xm;
        gb += dp.colwise().sum();
        Tensor<T> gx(input_.shape());
        MatMap<T>(gx.data(), N * TS, F).noalias() = dp * wx;
        steps_.clear();
        return gx;
    }

private:
    struct Step {
        RowMat<T> gates;  // post-activation gate values
        RowMat<T> h;
        RowMat<T> c;      // LSTM only
        RowMat<T> aux;    // LSTM: tanh(c); GRU: r * h_prev
    };
    std::size_t gates_ = 1;
    std::vector<Step> steps_;
    Tensor<T> input_;
    bool cached_ = false;
};

// ---------------------------------------------------------------------------
// Convolutional recurrent cells over (N, T, C, H, W): ConvLSTM (i, f, g, o) and
// the Elman-style convolutional recurrence (tanh).

template <typename T>
class ConvRecurrent : public ParamLayer<T, ConvRecurrent<T>> {
public:
    explicit ConvRecurrent(const LayerSpec& spec) : ParamLayer<T, ConvRecurrent<T>>(spec) {
        gates_ = spec.kind == LayerKind::ConvLSTMCell ? 4 : 1;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const auto& s = this->spec_;
        const Shape out_sample = output_shape(s, per_sample(x.shape()));
        const std::size_t N = x.dim(0), steps = x.dim(1);
        const std::size_t hc = s.out, hw = x.dim(3) * x.dim(4);
        const std::size_t gsize = gates_ * hc * hw;  // per-sample pre-activation size
        const std::size_t ssize = hc * hw;           // per-sample state size
        auto gx = input_geometry(x.shape());
        auto gh = state_geometry(x.shape());

        AlignedVector<T> xp(N * steps * gsize);
        detail::conv_forward(gx, N * steps, x.data(), this->param(0).value.data(), this->param(2).value.data(),
                             xp.data());

        steps_.assign(steps, {});
        AlignedVector<T> h_prev(N * ssize, T{0}), c_prev(N * ssize, T{0});
        AlignedVector<T> hp(N * gsize);
        Tensor<T> y(with_batch(N, out_sample));
        for (std::size_t t = 0; t < steps; ++t) {
            auto& st = steps_[t];
            st.gates.resize(N * gsize);
            if (t > 0) detail::conv_forward(gh, N, h_prev.data(), this->param(1).value.data(), (const T*)nullptr, hp.data());
            for (std::size_t n = 0; n < N; ++n) {
                const T* pre_x = xp.data() + (n * steps + t) * gsize;
                T* gates = st.gates.data() + n * gsize;
                for (std::size_t i = 0; i < gsize; ++i) gates[i] = pre_x[i] + (t > 0 ? hp[n * gsize + i] : T{0});
            }
            st.h.resize(N * ssize);
            if (gates_ == 1) {
                for (std::size_t i = 0; i < N * gsize; ++i) st.gates[i] = std::tanh(st.gates[i]);
                st.h = st.gates;
            } else {
                st.c.resize(N * ssize);
                st.aux.resize(N * ssize);
                for (std::size_t n = 0; n < N; ++n) {
                    T* gt = st.gates.data() + n * gsize;
                    for (std::size_t i = 0; i < ssize; ++i) {
                        const T ig = sigmoid(gt[i]);
                        const T fg = sigmoid(gt[ssize + i]);
                        const T gg = std::tanh(gt[2 * ssize + i]);
                        const T og = sigmoid(gt[3 * ssize + i]);
                        gt[i] = ig, gt[ssize + i] = fg, gt[2 * ssize + i] = gg, gt[3 * ssize + i] = og;
                        const std::size_t k = n * ssize + i;
                        st.c[k] = fg * c_prev[k] + ig * gg;
                        st.aux[k] = std::tanh(st.c[k]);
                        st.h[k] = og * st.aux[k];
                    }
                }
                c_prev = st.c;
            }
            h_prev = st.h;
            if (s.return_sequences) {
                for (std::size_t n = 0; n < N; ++n)
                    std::copy_n(st.h.data() + n * ssize, ssize, y.data() + (n * steps + t) * ssize);
            }
        }
        if (!s.return_sequences) std::copy(h_prev.begin(), h_prev.end(), y.data());
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        } else {
            steps_.clear();
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        const auto& s = this->spec_;
        expect_shape(s, gy.shape(), with_batch(input_.dim(0), output_shape(s, per_sample(input_.shape()))));
        const std::size_t N = input_.dim(0), steps = input_.dim(1);
        const std::size_t hc = s.out, hw = input_.dim(3) * input_.dim(4);
        const std::size_t gsize = gates_ * hc * hw, ssize = hc * hw;
        auto gxg = input_geometry(input_.shape());
        auto ghg = state_geometry(input_.shape());

        AlignedVector<T> dp(N * steps * gsize);
        AlignedVector<T> dh_next(N * ssize, T{0}), dc_next(N * ssize, T{0});
        AlignedVector<T> dpre(N * gsize), dh_prev(N * ssize);
        for (std::size_t tt = steps; tt-- > 0;) {
            const auto& st = steps_[tt];
            AlignedVector<T> dh = dh_next;
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = nullptr;
                if (s.return_sequences) {
                    src = gy.data() + (n * steps + tt) * ssize;
                } else if (tt + 1 == steps) {
                    src = gy.data() + n * ssize;
                }
                if (src)
                    for (std::size_t i = 0; i < ssize; ++i) dh[n * ssize + i] += src[i];
            }
            if (gates_ == 1) {
                for (std::size_t k = 0; k < N * ssize; ++k) dpre[k] = dh[k] * (T{1} - st.h[k] * st.h[k]);
            } else {
                for (std::size_t n = 0; n < N; ++n) {
                    const T* gt = st.gates.data() + n * gsize;
                    T* d = dpre.data() + n * gsize;
                    for (std::size_t i = 0; i < ssize; ++i) {
                        const std::size_t k = n * ssize + i;
                        const T ig = gt[i], fg = gt[ssize + i], gg = gt[2 * ssize + i], og = gt[3 * ssize + i];
                        const T tc = st.aux[k];
                        const T c_prev = tt > 0 ? steps_[tt - 1].c[k] : T{0};
                        const T dc = dc_next[k] + dh[k] * og * (T{1} - tc * tc);
                        d[i] = dc * gg * ig * (T{1} - ig);
                        d[ssize + i] = dc * c_prev * fg * (T{1} - fg);
                        d[2 * ssize + i] = dc * ig * (T{1} - gg * gg);
                        d[3 * ssize + i] = dh[k] * tc * og * (T{1} - og);
                        dc_next[k] = dc * fg;
                    }
                }
            }
            for (std::size_t n = 0; n < N; ++n)
                std::copy_n(dpre.data() + n * gsize, gsize, dp.data() + (n * steps + tt) * gsize);
            if (tt > 0) {
                detail::conv_backward(ghg, N, steps_[tt - 1].h.data(), this->param(1).value.data(), dpre.data(),
                                      dh_prev.data(), this->param(1).grad.data(), (T*)nullptr);
                dh_next = dh_prev;
            } else {
                std::fill(dh_next.begin(), dh_next.end(), T{0});
            }
        }
        Tensor<T> gx(input_.shape());
        detail::conv_backward(gxg, N * steps, input_.data(), this->param(0).value.data(), dp.data(), gx.data(),
                              this->param(0).grad.data(), this->param(2).grad.data());
        steps_.clear();
        return gx;
    }

private:
    ConvGeometry input_geometry(const Shape& full) const {
        const auto& s = this->spec_;
        ConvGeometry g;
        g.channels = s.in;
        g.height = full[3];
        g.width = full[4];
        g.out_channels = gates_ * s.out;
        g.kh = s.kernel[1], g.kw = s.kernel[2];
        g.ph = s.padding[1], g.pw = s.padding[2];
        return g;
    }
    ConvGeometry state_geometry(const Shape& full) const {
        auto g = input_geometry(full);
        g.channels = this->spec_.out;
        return g;
    }

    struct Step {
        AlignedVector<T> gates, h, c, aux;  // aux = tanh(c)
    };
    std::size_t gates_ = 1;
    std::vector<Step> steps_;
    Tensor<T> input_;
    bool cached_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
class Norm : public ParamLayer<T, Norm<T>> {
public:
    explicit Norm(const LayerSpec& spec)
        : ParamLayer<T, Norm<T>>(spec), running_mean_(Shape{spec.in}, T{0}), running_var_(Shape{spec.in}, T{1}) {
        this->param(0).value.fill(T{1});
    }

    std::vector<Buffer<T>> buffers() override {
        return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const auto& s = this->spec_;
        output_shape(s, per_sample(x.shape()));
        const auto [outer, inner] = layout(x.shape());
        const std::size_t C = s.in;
        const T* gamma = this->param(0).value.data();
        const T* beta = this->param(1).value.data();
        Tensor<T> y(x.shape());
        const double count = static_cast<double>(outer * inner);
        if (mode == Mode::Eval) {
            for (std::size_t c = 0; c < C; ++c) {
                const T scale = gamma[c] / std::sqrt(running_var_[c] + static_cast<T>(s.epsilon));
                const T shift = beta[c] - running_mean_[c] * scale;
                for (std::size_t o = 0; o < outer; ++o) {
                    const std::size_t base = (o * C + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) y[base + i] = x[base + i] * scale + shift;
                }
            }
            return y;
        }
        xhat_ = Tensor<T>(x.shape());
        inv_std_.assign(C, T{0});
        for (std::size_t c = 0; c < C; ++c) {
            double sum = 0.0;
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = (o * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) sum += static_cast<double>(x[base + i]);
            }
            const double mean = sum / count;
            double sq = 0.0;
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = (o * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = static_cast<double>(x[base + i]) - mean;
                    sq += d * d;
                }
            }
            const double var = sq / count;
            const T inv = static_cast<T>(1.0 / std::sqrt(var + s.epsilon));
            inv_std_[c] = inv;
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = (o * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const T xh = (x[base + i] - static_cast<T>(mean)) * inv;
                    xhat_[base + i] = xh;
                    y[base + i] = gamma[c] * xh + beta[c];
                }
            }
            const double unbiased = count > 1 ? var * count / (count - 1) : var;
            running_mean_[c] = static_cast<T>(s.momentum * running_mean_[c] + (1 - s.momentum) * mean);
            running_var_[c] = static_cast<T>(s.momentum * running_var_[c] + (1 - s.momentum) * unbiased);
        }
        cached_ = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        const std::size_t C = this->spec_.in;
        const auto [outer, inner] = layout(gy.shape());
        const T* gamma = this->param(0).value.data();
        T* ggamma = this->param(0).grad.data();
        T* gbeta = this->param(1).grad.data();
        const T count = static_cast<T>(outer * inner);
        Tensor<T> gx(gy.shape());
        for (std::size_t c = 0; c < C; ++c) {
            T sum_dy = 0, sum_dy_xh = 0;
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = (o * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    sum_dy += gy[base + i];
                    sum_dy_xh += gy[base + i] * xhat_[base + i];
                }
            }
            ggamma[c] += sum_dy_xh;
            gbeta[c] += sum_dy;
            const T k = gamma[c] * inv_std_[c] / count;
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = (o * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i)
                    gx[base + i] = k * (count * gy[base + i] - sum_dy - xhat_[base + i] * sum_dy_xh);
            }
        }
        return gx;
    }

private:
    std::pair<std::size_t, std::size_t> layout(const Shape& full) const {
        const std::size_t C = this->spec_.in;
        const std::size_t inner = full.size() == 2 ? 1 : full[full.size() - 1] * full[full.size() - 2];
        return {shape_size(full) / (C * inner), inner};
    }

    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_;
    AlignedVector<T> inv_std_;
    bool cached_ = false;
};

// ---------------------------------------------------------------------------

template <typename T, typename Derived>
class StatelessLayer : public Layer<T> {
public:
    using Layer<T>::Layer;
    std::unique_ptr<Layer<T>> clone() const override {
        return std::make_unique<Derived>(static_cast<const Derived&>(*this));
    }
};

template <typename T>
class LeakyRelu : public StatelessLayer<T, LeakyRelu<T>> {
public:
    using StatelessLayer<T, LeakyRelu<T>>::StatelessLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const T slope = static_cast<T>(this->spec_.slope);
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : slope * x[i];
        if (mode == Mode::Train) {
            input_ = x;
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        const T slope = static_cast<T>(this->spec_.slope);
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = input_[i] > T{0} ? gy[i] : slope * gy[i];
        return gx;
    }

private:
    Tensor<T> input_;
    bool cached_ = false;
};

template <typename T>
class Sigmoid : public StatelessLayer<T, Sigmoid<T>> {
public:
    using StatelessLayer<T, Sigmoid<T>>::StatelessLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
        if (mode == Mode::Train) {
            output_ = y;
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * output_[i] * (T{1} - output_[i]);
        return gx;
    }

private:
    Tensor<T> output_;
    bool cached_ = false;
};

template <typename T>
class ShapeOnly : public StatelessLayer<T, ShapeOnly<T>> {
public:
    using StatelessLayer<T, ShapeOnly<T>>::StatelessLayer;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> y = x;
        y.reshape(with_batch(x.dim(0), output_shape(this->spec_, per_sample(x.shape()))));
        if (mode == Mode::Train) {
            input_shape_ = x.shape();
            cached_ = true;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        if (!cached_) no_cache(this->spec_);
        cached_ = false;
        Tensor<T> gx = gy;
        gx.reshape(input_shape_);
        return gx;
    }

private:
    Shape input_shape_;
    bool cached_ = false;
};

} // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
    switch (spec.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv3D: return std::make_unique<Conv<T>>(spec);
    case LayerKind::ConvTranspose2D: return std::make_unique<ConvTranspose<T>>(spec);
    case LayerKind::Dense: return std::make_unique<Dense<T>>(spec);
    case LayerKind::ElmanCell:
    case LayerKind::LSTMCell:
    case LayerKind::GRUCell: return std::make_unique<VectorRecurrent<T>>(spec);
    case LayerKind::ConvLSTMCell:
    case LayerKind::ConvElmanCell: return std::make_unique<ConvRecurrent<T>>(spec);
    case LayerKind::Norm: return std::make_unique<Norm<T>>(spec);
    case LayerKind::LeakyReLU: return std::make_unique<LeakyRelu<T>>(spec);
    case LayerKind::Sigmoid: return std::make_unique<Sigmoid<T>>(spec);
    case LayerKind::Flatten:
    case LayerKind::Reshape: return std::make_unique<ShapeOnly<T>>(spec);
    }
    throw Error(ErrorKind::Config, "unhandled layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

} // namespace latentcast::nn
