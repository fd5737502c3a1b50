#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "latentcast/error.hpp"
#include "latentcast/nn/checkpoint.hpp"
#include "latentcast/nn/gradcheck.hpp"
#include "latentcast/nn/network.hpp"

using namespace latentcast;
using namespace latentcast::nn;

namespace {

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
    return t;
}

// Plain nested-loop cross-correlation, (N, C, H, W) -> (N, O, Ho, Wo).
Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                            std::size_t stride, std::size_t pad) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
    Tensor<double> y({N, O, Ho, Wo});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t a = 0; a < K; ++a)
                            for (std::size_t e = 0; e < K; ++e) {
                                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + e) - static_cast<long>(pad);
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W))
                                    continue;
                                acc += w[((o * C + c) * K + a) * K + e] *
                                       x[((n * C + c) * H + static_cast<std::size_t>(yy)) * W +
                                         static_cast<std::size_t>(xx)];
                            }
                    y[((n * O + o) * Ho + i) * Wo + j] = acc;
                }
    return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

GradCheckReport check_stack(std::vector<LayerSpec> specs, const Shape& sample, LossKind loss_kind,
                            std::uint64_t seed, std::size_t batch = 2) {
    auto net = Network<double>::build(specs, sample, seed);
    // Non-trivial biases and affine terms so their gradients are exercised.
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (auto* p : net.parameters())
        if (p->fan_in == 0)
            for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += jitter(rng);
    auto x = random_tensor(batched(batch, sample), seed + 2);
    auto target = random_tensor(batched(batch, net.output_shape()), seed + 3, 0.05, 0.95);
    return gradient_check(net, x, target, loss_kind);
}

} // namespace

TEST_CASE("shape arithmetic of the encoder and decoder building blocks") {
    auto enc = Network<float>(std::vector{LayerSpec::conv2d(1, 64, 3, 2, 1)}, Shape{1, 64, 64});
    CHECK(enc.output_shape() == Shape{64, 32, 32});
    auto dec = Network<float>(std::vector{LayerSpec::conv_transpose2d(256, 3, 3, 2, 1, 1)}, Shape{256, 8, 8});
    CHECK(dec.output_shape() == Shape{3, 16, 16});

    for (std::size_t k = 1; k <= 3; ++k) {
        std::vector<LayerSpec> specs;
        std::size_t c = 1;
        for (std::size_t i = 0; i < k; ++i, c *= 2) specs.push_back(LayerSpec::conv2d(c, c * 2, 3, 2, 1));
        for (std::size_t i = 0; i < k; ++i, c /= 2) specs.push_back(LayerSpec::conv_transpose2d(c, c / 2, 3, 2, 1, 1));
        auto net = Network<float>(specs, Shape{1, 24, 40});
        CHECK(net.shape_at(k) == Shape{std::size_t{1} << k, std::size_t{24} >> k, std::size_t{40} >> k});
        CHECK(net.output_shape() == Shape{1, 24, 40});
    }
}

TEST_CASE("shape mismatch names the offending layer") {
    try {
        Network<float>(std::vector{LayerSpec::conv2d(1, 4, 3, 2, 1), LayerSpec::dense(5, 2)}, Shape{1, 8, 8});
        FAIL("expected a shape error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Shape);
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    auto net = Network<float>(std::vector{LayerSpec::dense(3, 2)}, Shape{3});
    CHECK_THROWS_AS(net.forward(Tensor<float>({2, 4}), Mode::Eval), Error);
}

TEST_CASE("leaky rectifier values") {
    auto net = Network<double>(std::vector{LayerSpec::leaky_relu(0.2)}, Shape{2});
    auto y = net.forward(Tensor<double>({1, 2}, std::vector<double>{-1.0, 1.0}), Mode::Eval);
    CHECK(y[0] == doctest::Approx(-0.2));
    CHECK(y[1] == 1.0);
}

TEST_CASE("convolution layers agree with direct loops") {
    auto x = random_tensor({2, 3, 7, 6}, 11);
    for (std::size_t stride : {1, 2}) {
        auto net = Network<double>::build(std::vector{LayerSpec::conv2d(3, 4, 3, stride, 1)}, Shape{3, 7, 6}, 5);
        auto params = net.parameters();
        for (std::size_t i = 0; i < params[1]->value.size(); ++i) params[1]->value[i] = 0.1 * static_cast<double>(i);
        auto y = net.forward(x, Mode::Eval);
        auto ref = naive_conv2d(x, params[0]->value, params[1]->value, stride, 1);
        REQUIRE(y.shape() == ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("transpose convolution is the adjoint of the matching convolution") {
    // <convT(u), v> = <u, conv(v)> when both share weights and biases are zero.
    auto conv = Network<double>::build(std::vector{LayerSpec::conv2d(3, 5, 3, 2, 1)}, Shape{3, 8, 8}, 3);
    auto convt = Network<double>(std::vector{LayerSpec::conv_transpose2d(5, 3, 3, 2, 1, 1)}, Shape{5, 4, 4});
    auto cw = conv.parameters()[0]->value;  // (5, 3, 3, 3)
    auto& tw = convt.parameters()[0]->value;  // (5, 3, 3, 3), layout (in, out, k, k)
    tw = cw;
    auto u = random_tensor({1, 5, 4, 4}, 1);
    auto v = random_tensor({1, 3, 8, 8}, 2);
    CHECK(dot(convt.forward(u, Mode::Eval), v) == doctest::Approx(dot(u, conv.forward(v, Mode::Eval))).epsilon(1e-12));
}

TEST_CASE("three-dimensional convolution agrees with direct loops") {
    auto net = Network<double>::build(std::vector{LayerSpec::conv3d(2, 3, {2, 3, 3}, {0, 1, 1})}, Shape{4, 2, 5, 5}, 9);
    auto x = random_tensor({2, 4, 2, 5, 5}, 4);
    auto& w = net.parameters()[0]->value;
    auto y = net.forward(x, Mode::Eval);
    REQUIRE(y.shape() == Shape{2, 3, 3, 5, 5});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t o = 0; o < 3; ++o)
                for (std::size_t i = 0; i < 5; ++i)
                    for (std::size_t j = 0; j < 5; ++j) {
                        double acc = 0;
                        for (std::size_t a = 0; a < 2; ++a)
                            for (std::size_t c = 0; c < 2; ++c)
                                for (std::size_t b = 0; b < 3; ++b)
                                    for (std::size_t e = 0; e < 3; ++e) {
                                        const long yy = static_cast<long>(i + b) - 1, xx = static_cast<long>(j + e) - 1;
                                        if (yy < 0 || xx < 0 || yy >= 5 || xx >= 5) continue;
                                        acc += w[(((o * 2 + c) * 2 + a) * 3 + b) * 3 + e] *
                                               x[(((n * 4 + d + a) * 2 + c) * 5 + static_cast<std::size_t>(yy)) * 5 +
                                                 static_cast<std::size_t>(xx)];
                                    }
                        CHECK(y[(((n * 3 + d) * 3 + o) * 5 + i) * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
                    }
}

TEST_CASE("recurrent cells agree with a scalar reference recurrence") {
    const std::size_t F = 3, H = 2, T = 4;
    auto x = random_tensor({1, T, F}, 21);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (auto kind : {LayerKind::LSTMCell, LayerKind::GRUCell, LayerKind::ElmanCell}) {
        LayerSpec spec = kind == LayerKind::LSTMCell  ? LayerSpec::lstm(F, H, false)
                         : kind == LayerKind::GRUCell ? LayerSpec::gru(F, H, false)
                                                      : LayerSpec::elman(F, H, false);
        auto net = Network<double>::build(std::vector{spec}, Shape{T, F}, 13);
        auto ps = net.parameters();
        auto& b = ps[2]->value;
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.05 * static_cast<double>(i) - 0.1;
        const auto& wx = ps[0]->value;
        const auto& wh = ps[1]->value;
        auto pre = [&](std::size_t row, const std::vector<double>& xt, const std::vector<double>& h) {
            double a = b[row];
            for (std::size_t f = 0; f < F; ++f) a += wx[row * F + f] * xt[f];
            for (std::size_t k = 0; k < H; ++k) a += wh[row * H + k] * h[k];
            return a;
        };
        std::vector<double> h(H, 0.0), c(H, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> xt(x.data() + t * F, x.data() + (t + 1) * F);
            std::vector<double> nh(H);
            for (std::size_t j = 0; j < H; ++j) {
                if (kind == LayerKind::ElmanCell) {
                    nh[j] = std::tanh(pre(j, xt, h));
                } else if (kind == LayerKind::LSTMCell) {
                    const double i = sig(pre(j, xt, h)), f = sig(pre(H + j, xt, h));
                    const double g = std::tanh(pre(2 * H + j, xt, h)), o = sig(pre(3 * H + j, xt, h));
                    c[j] = f * c[j] + i * g;
                    nh[j] = o * std::tanh(c[j]);
                } else {
                    const double z = sig(pre(j, xt, h));
                    std::vector<double> rh(H);
                    for (std::size_t k = 0; k < H; ++k) rh[k] = sig(pre(H + k, xt, h)) * h[k];
                    const double n = std::tanh(pre(2 * H + j, xt, rh));
                    nh[j] = (1 - z) * h[j] + z * n;
                }
            }
            h = nh;
        }
        auto y = net.forward(x, Mode::Eval);
        for (std::size_t j = 0; j < H; ++j) CHECK(y[j] == doctest::Approx(h[j]).epsilon(1e-12));
    }
}

TEST_CASE("losses") {
    Tensor<double> p({2}, std::vector<double>{1.0, 0.0}), t({2}, std::vector<double>{0.0, 0.0});
    CHECK(loss(LossKind::L1, p, t) == doctest::Approx(0.5));
    CHECK(loss(LossKind::MSE, p, t) == doctest::Approx(0.5));
    CHECK(loss(LossKind::RMSE, p, t) == doctest::Approx(std::sqrt(0.5)));
    Tensor<double> q({1}, std::vector<double>{std::exp(1.0) - 1.0}), z({1}, std::vector<double>{0.0});
    CHECK(loss(LossKind::MSLE, q, z) == doctest::Approx(1.0));
    auto r = random_tensor({3, 4}, 5);
    for (auto k : {LossKind::L1, LossKind::MSE, LossKind::MSLE, LossKind::RMSE}) CHECK(loss(k, r, r) == 0.0);
    CHECK_THROWS_AS(loss(LossKind::MSE, r, Tensor<double>({4, 3})), Error);

    auto a = random_tensor({5}, 6), b = random_tensor({5}, 7);
    auto mse = loss_with_grad(LossKind::MSE, a, b);
    auto rmse = loss_with_grad(LossKind::RMSE, a, b);
    for (std::size_t i = 0; i < 5; ++i) CHECK(rmse.grad[i] == doctest::Approx(mse.grad[i] / (2 * rmse.value)));
}

TEST_CASE("optimizer steps") {
    Parameter<double> p{"w", Tensor<double>({1}, 0.0), Tensor<double>({1}, 1.0), 1};
    std::vector<Parameter<double>*> ps{&p};
    std::vector<OptimizerSlots<double>> slots;
    OptimizerConfig adam;
    optimizer_step<double>(adam, ps, slots, 1);
    CHECK(p.value[0] == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-12));

    OptimizerConfig rms{OptimizerKind::RMSProp, 0.01};
    p.value[0] = 0.0;
    p.grad[0] = 2.0;
    slots.clear();
    optimizer_step<double>(rms, ps, slots, 1);
    CHECK(slots[0].second[0] == doctest::Approx(0.04));
    CHECK(p.value[0] == doctest::Approx(-0.01 * 2 / (0.2 + 1e-8)));

    for (auto cfg : {adam, rms}) {
        p.value[0] = 3.0;
        p.grad[0] = 0.0;
        slots.clear();
        optimizer_step<double>(cfg, ps, slots, 1);
        CHECK(p.value[0] == 3.0);
    }
    p.grad[0] = std::nan("");
    CHECK_THROWS_AS(optimizer_step<double>(adam, ps, slots, 2), Error);
    CHECK(p.value[0] == 3.0);
}

TEST_CASE("He initialization variance") {
    const auto spec = LayerSpec::dense(1000, 1000);
    double sum = 0, sq = 0, n = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto v = he_init<double>(spec, 0.01, seed);
        for (double w : v[0].values()) sum += w, sq += w * w, n += 1;
        for (double bv : v[1].values()) CHECK(bv == 0.0);
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    CHECK(std::abs(var / (2.0 / (1.0001 * 1000)) - 1.0) < 0.05);
    auto a = he_init<float>(spec, 0.0, 3), b = he_init<float>(spec, 0.0, 3);
    CHECK(a[0] == b[0]);
}

TEST_CASE("gradient check for every layer kind") {
    struct Case {
        const char* name;
        std::vector<LayerSpec> specs;
        Shape sample;
    };
    std::vector<Case> cases{
        {"conv2d", {LayerSpec::conv2d(2, 3, 3, 2, 1)}, {2, 5, 6}},
        {"conv2d_stack", {LayerSpec::conv2d(2, 3, 3, 1, 1)}, {3, 2, 4, 4}},
        {"conv_transpose2d", {LayerSpec::conv_transpose2d(3, 2, 3, 2, 1, 1)}, {3, 3, 4}},
        {"conv3d", {LayerSpec::conv3d(2, 3, {2, 3, 3}, {0, 1, 1})}, {4, 2, 4, 4}},
        {"dense", {LayerSpec::dense(5, 4)}, {3, 5}},
        {"elman", {LayerSpec::elman(3, 4, true)}, {4, 3}},
        {"lstm", {LayerSpec::lstm(3, 4, true)}, {4, 3}},
        {"gru", {LayerSpec::gru(3, 4, true)}, {4, 3}},
        {"lstm_last", {LayerSpec::lstm(3, 4, false)}, {3, 3}},
        {"gru_last", {LayerSpec::gru(3, 4, false)}, {3, 3}},
        {"elman_last", {LayerSpec::elman(3, 4, false)}, {3, 3}},
        {"conv_lstm", {LayerSpec::conv_lstm(2, 3, 3, true)}, {3, 2, 4, 4}},
        {"conv_lstm_last", {LayerSpec::conv_lstm(2, 3, 3, false)}, {3, 2, 4, 4}},
        {"conv_elman", {LayerSpec::conv_elman(2, 3, 3, false)}, {3, 2, 4, 4}},
        {"norm_map", {LayerSpec::conv2d(2, 3, 3, 1, 1), LayerSpec::norm(3)}, {2, 4, 4}},
        {"norm_vector", {LayerSpec::dense(4, 3), LayerSpec::norm(3)}, {4}},
        {"leaky_relu", {LayerSpec::dense(4, 5), LayerSpec::leaky_relu(0.1)}, {4}},
        {"sigmoid", {LayerSpec::dense(4, 5), LayerSpec::sigmoid()}, {4}},
        {"flatten_reshape",
         {LayerSpec::flatten(1), LayerSpec::dense(12, 6), LayerSpec::reshape({2, 3})},
         {3, 4}},
    };
    for (const auto& c : cases) {
        for (auto lk : {LossKind::L1, LossKind::MSE, LossKind::MSLE, LossKind::RMSE}) {
            auto specs = c.specs;
            if (lk == LossKind::MSLE) specs.push_back(LayerSpec::sigmoid());
            auto report = check_stack(specs, c.sample, lk, 100);
            INFO(c.name, " ", loss_name(lk), " worst ", report.worst);
            CHECK(report.checked > 0);
            CHECK(report.max_relative_error < 1e-4);
        }
    }
}

TEST_CASE("linear network at a stationary point has zero gradients") {
    auto net = Network<double>::build(std::vector{LayerSpec::dense(3, 4), LayerSpec::dense(4, 2)}, Shape{3}, 1);
    Tensor<double> x({2, 3}), target({2, 2});
    auto pred = net.forward(x, Mode::Train);
    net.zero_grad();
    net.backward(loss_with_grad(LossKind::MSE, pred, target).grad);
    for (auto* p : net.parameters())
        for (double g : p->grad.values()) CHECK(g == 0.0);
}

TEST_CASE("backward without a cached forward is a state error") {
    auto net = Network<double>::build(std::vector{LayerSpec::dense(3, 2)}, Shape{3}, 1);
    CHECK_THROWS_AS(net.backward(Tensor<double>({1, 2})), Error);
    net.forward(Tensor<double>({1, 3}), Mode::Eval);
    CHECK_THROWS_AS(net.backward(Tensor<double>({1, 2})), Error);
}

TEST_CASE("normalization standardizes each channel in train mode") {
    auto net = Network<double>(std::vector{LayerSpec::norm(3)}, Shape{3, 5, 5});
    net.parameters()[0]->value.fill(1.0);
    auto x = random_tensor({4, 3, 5, 5}, 8, -3.0, 7.0);
    auto y = net.forward(x, Mode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, sq = 0, n = 0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 0; i < 25; ++i) {
                const double v = y[(b * 3 + c) * 25 + i];
                s += v, sq += v * v, n += 1;
            }
        CHECK(std::abs(s / n) < 1e-5);
        CHECK(std::abs(sq / n - (s / n) * (s / n) - 1.0) < 1e-3);
    }
}

TEST_CASE("training is bitwise deterministic and resumes from a checkpoint") {
    std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 4, 3, 2, 1), LayerSpec::norm(4), LayerSpec::leaky_relu(0.01),
                                 LayerSpec::conv_transpose2d(4, 1, 3, 2, 1, 1), LayerSpec::sigmoid()};
    auto x = random_tensor<float>({4, 1, 8, 8}, 3, 0.0, 1.0);
    auto run = [&](Network<float>& net, Optimizer<float>& opt, int steps) {
        for (int i = 0; i < steps; ++i) net.train_step(x, x, LossKind::L1, opt);
    };
    auto a = Network<float>::build(specs, {1, 8, 8}, 42);
    auto b = Network<float>::build(specs, {1, 8, 8}, 42);
    Optimizer<float> oa, ob;
    run(a, oa, 6);
    run(b, ob, 3);

    const auto dir = std::filesystem::temp_directory_path() / "latentcast_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, b, &ob, 42, {{"epoch", 3}});
    auto cp = load_checkpoint(dir);
    CHECK(cp.extra["epoch"] == 3);
    auto oc = cp.make_optimizer();
    run(cp.network, oc, 3);
    run(b, ob, 3);

    auto pa = a.parameters(), pb = b.parameters(), pc = cp.network.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) {
        CHECK(pa[k]->value == pb[k]->value);
        CHECK(pa[k]->value == pc[k]->value);
    }
    auto ba = a.buffers(), bc = cp.network.buffers();
    for (std::size_t k = 0; k < ba.size(); ++k) CHECK(*ba[k].value == *bc[k].value);
    std::filesystem::remove_all(dir);
}
