#include <doctest.h>

#include <cmath>
#include <random>

#include "latentcast/error.hpp"
#include "latentcast/nn/gradcheck.hpp"
#include "latentcast/seqmodels.hpp"

using namespace latentcast;
using namespace latentcast::seq;

namespace {

LatentSequence random_sequence(std::size_t T, MapShape s, std::uint64_t seed, const std::string& id = "s") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    LatentSequence seq{id, {}};
    for (std::size_t t = 0; t < T; ++t) {
        FeatureMap m(s.channels, s.height, s.width);
        for (auto& v : m.data) v = d(rng);
        seq.maps.push_back(std::move(m));
    }
    return seq;
}

SeqModelConfig config_for(SeqModelKind kind, std::size_t hidden, std::size_t window) {
    SeqModelConfig c;
    c.kind = kind;
    c.hidden_size = hidden;
    c.window = window;
    if (uses_hidden_layers(kind))
        c.hidden_layers = 1;
    else
        c.hidden_layers.reset();
    return c;
}

template <typename T>
nn::Tensor<double> to_double(const nn::Tensor<T>& t) {
    return t.template cast<double>();
}

} // namespace

TEST_CASE("window counts") {
    const MapShape s{1, 2, 2};
    CHECK(make_windows(random_sequence(20, s, 1), 5).size() == 15);
    CHECK(make_windows(random_sequence(20, s, 1), 3).size() == 17);
    auto seq = random_sequence(4, s, 1);
    auto w = make_windows(seq, 3);
    REQUIRE(w.size() == 1);
    CHECK(w[0].start == 0);
    CHECK(119 * window_count(20, 5) == 1785);
    CHECK(119 * window_count(20, 3) == 2023);
    CHECK_THROWS_AS(make_windows(random_sequence(3, s, 1), 3), Error);

    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 1 + rng() % 12;
        const std::size_t T = k + 1 + rng() % 20;
        CHECK(make_windows(random_sequence(T, s, i), k).size() == T - k);
    }
}

TEST_CASE("config validation") {
    auto c = config_for(SeqModelKind::CNN3D, 8, 5);
    c.hidden_layers = 2;
    CHECK_THROWS_AS(c.validate(), Error);
    auto l = config_for(SeqModelKind::LSTM, 8, 5);
    l.hidden_layers.reset();
    CHECK_THROWS_AS(l.validate(), Error);
    l.hidden_layers = 4;
    CHECK_THROWS_AS(l.validate(), Error);
    auto w = config_for(SeqModelKind::GRU, 8, 20);
    try {
        w.validate(20);
        FAIL("expected a window error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Window);
    }
    CHECK_THROWS_AS(config_for(SeqModelKind::CNN3D, 8, 2).validate(), Error);
    CHECK(kind_from_name("convlstm") == SeqModelKind::ConvLSTM);
    CHECK(kind_from_name("3D-CNN") == SeqModelKind::CNN3D);
    CHECK_THROWS_AS(kind_from_name("transformer"), Error);

    auto j = nlohmann::json(config_for(SeqModelKind::CRNN, 16, 3));
    CHECK(j["hidden_layers"].is_null());
    auto back = j.get<SeqModelConfig>();
    CHECK(back.kind == SeqModelKind::CRNN);
    CHECK(!back.hidden_layers);
}

TEST_CASE("every kind preserves the map shape") {
    for (auto kind : all_kinds)
        for (std::size_t window : {3, 5}) {
            const MapShape s{3, 4, 5};
            auto model = SeqModel::build(config_for(kind, 6, window), s, 2);
            auto seq = random_sequence(window + 1, s, 3);
            auto out = model.predict_next(std::span<const FeatureMap>(seq.maps.data(), window));
            CHECK(shape_of(out) == s);
            for (float v : out.data) CHECK(std::isfinite(v));
            auto again = model.predict_next(std::span<const FeatureMap>(seq.maps.data(), window));
            CHECK(out.data == again.data);
            CHECK_THROWS_AS(model.predict_next(std::span<const FeatureMap>(seq.maps.data(), window - 1)), Error);
        }
}

TEST_CASE("published-scale shapes") {
    auto c = config_for(SeqModelKind::ConvLSTM, 256, 3);
    c.hidden_layers = 2;
    auto specs = seq_specs(c, {128, 8, 8});
    nn::Network<float> net(specs, {3, 128, 8, 8});
    CHECK(net.output_shape() == nn::Shape{128, 8, 8});

    auto specs3d = seq_specs(config_for(SeqModelKind::CNN3D, 256, 5), {256, 8, 8});
    nn::Network<float> net3d(specs3d, {5, 256, 8, 8});
    CHECK(net3d.output_shape() == nn::Shape{256, 8, 8});
}

TEST_CASE("GRU parameter count") {
    const MapShape s{128, 8, 8};
    const std::size_t m = 128, n = 128, d = s.size();
    auto model = SeqModel::build(config_for(SeqModelKind::GRU, n, 5), s, 1);
    std::size_t enumerated = 0, gru = 0;
    for (auto* p : model.network().parameters()) enumerated += p->value.size();
    for (const auto& spec : model.network().specs()) {
        if (spec.kind == nn::LayerKind::GRUCell)
            for (const auto& ps : nn::param_shapes(spec)) gru += nn::shape_size(ps.shape);
    }
    CHECK(gru == 3 * (n * m + n * n + n));
    CHECK(enumerated == 3 * (n * m + n * n + n) + (d * n + n) + (n * d + d));
    CHECK(model.network().parameter_count() == enumerated);
}

TEST_CASE("all kinds pass an end-to-end gradient check") {
    const MapShape s{2, 4, 4};
    for (auto kind : all_kinds) {
        auto model = SeqModel::build(config_for(kind, 3, 3), s, 17);
        auto seq = random_sequence(6, s, 4);
        auto windows = make_windows(seq, 3);
        auto [x, y] = model.batch(std::span<const WindowSample>(windows.data(), 2));
        auto net = model.network().cast<double>();
        for (auto loss : {nn::LossKind::MSE, nn::LossKind::L1}) {
            nn::GradCheckOptions o;
            auto report = nn::gradient_check(net, to_double(x), to_double(y), loss, o);
            INFO(kind_name(kind), " ", nn::loss_name(loss), " worst ", report.worst);
            CHECK(report.max_relative_error < 1e-4);
            CHECK(report.checked > 0);
        }
    }
}

TEST_CASE("predictions do not depend on previously processed windows") {
    const MapShape s{2, 4, 4};
    auto seq = random_sequence(12, s, 9);
    auto windows = make_windows(seq, 3);
    for (auto kind : all_kinds) {
        auto model = SeqModel::build(config_for(kind, 4, 3), s, 5);
        auto forward = model.predict(windows, 4);
        std::vector<WindowSample> reversed(windows.rbegin(), windows.rend());
        auto backward = model.predict(reversed, 3);
        // Batch grouping changes summation order, so equality is up to rounding.
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& b = backward[windows.size() - 1 - i];
            for (std::size_t j = 0; j < b.size(); ++j)
                CHECK(b.data[j] == doctest::Approx(forward[i].data[j]).epsilon(1e-5));
        }
        CHECK(model.predict(windows, 4)[5].data == forward[5].data);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            auto single = model.predict_next(std::span<const FeatureMap>(seq.maps.data() + i, 3));
            for (std::size_t j = 0; j < single.size(); ++j)
                CHECK(single.data[j] == doctest::Approx(forward[i].data[j]).epsilon(1e-5));
        }
    }
}

TEST_CASE("a single repeated sample is memorized within 500 steps") {
    const MapShape s{2, 4, 4};
    auto seq = random_sequence(4, s, 12);
    std::vector<WindowSample> train(4, WindowSample{&seq, 0});
    for (auto kind : all_kinds) {
        auto cfg = config_for(kind, 16, 3);
        auto model = SeqModel::build(cfg, s, 6);
        TrainSchedule sch;
        sch.batch_size = 4;
        sch.max_epochs = 500;
        sch.patience = 0;
        auto run = train_seq_model(model, train, {}, sch);
        INFO(kind_name(kind));
        CHECK(run.history.back().train_loss < 1e-3);
    }
}

TEST_CASE("a constant latent sequence is predicted within 0.05") {
    const MapShape s{2, 4, 4};
    LatentSequence seq{"c", {}};
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    FeatureMap M(2, 4, 4);
    for (auto& v : M.data) v = d(rng);
    for (int t = 0; t < 10; ++t) seq.maps.push_back(M);
    auto windows = make_windows(seq, 3);
    for (auto kind : all_kinds) {
        auto model = SeqModel::build(config_for(kind, 16, 3), s, 2);
        TrainSchedule sch;
        sch.batch_size = 7;
        sch.max_epochs = 400;
        sch.patience = 0;
        train_seq_model(model, windows, {}, sch);
        auto p = model.predict_next(std::span<const FeatureMap>(seq.maps.data(), 3));
        float worst = 0;
        for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p.data[i] - M.data[i]));
        INFO(kind_name(kind));
        CHECK(worst < 0.05f);
    }
}

TEST_CASE("identical seeds give identical loss curves") {
    const MapShape s{2, 4, 4};
    LatentDataset data;
    for (int i = 0; i < 4; ++i) data.push_back(random_sequence(8, s, 40 + i));
    auto windows = make_windows(data, 3);
    std::vector<WindowSample> train(windows.begin(), windows.begin() + 15), val(windows.begin() + 15, windows.end());
    for (auto kind : all_kinds) {
        TrainSchedule sch;
        sch.batch_size = 4;
        sch.max_epochs = 3;
        sch.seed = 77;
        auto once = [&] {
            auto model = SeqModel::build(config_for(kind, 5, 3), s, 8);
            return train_seq_model(model, train, val, sch);
        };
        auto a = once(), b = once();
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].train_loss == b.history[i].train_loss);
            CHECK(a.history[i].val_loss == b.history[i].val_loss);
        }
    }
}

TEST_CASE("checkpoint round trip") {
    const MapShape s{2, 4, 4};
    auto seq = random_sequence(6, s, 3);
    auto cfg = config_for(SeqModelKind::ConvLSTM, 4, 3);
    cfg.hidden_layers = 2;
    auto model = SeqModel::build(cfg, s, 3);
    const auto dir = std::filesystem::temp_directory_path() / "latentcast_test_seq_ckpt";
    std::filesystem::remove_all(dir);
    model.save(dir, nullptr, 3);
    auto loaded = SeqModel::load(dir);
    CHECK(loaded.config().hidden_layers == std::optional<std::size_t>(2));
    CHECK(loaded.shape() == s);
    auto in = std::span<const FeatureMap>(seq.maps.data(), 3);
    CHECK(model.predict_next(in).data == loaded.predict_next(in).data);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sigmoid head bounds baseline outputs") {
    dataio::Dataset ds(1);
    ds[0].id = "x";
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (int t = 0; t < 5; ++t) {
        dataio::Frame f(6, 6, 3);
        for (auto& v : f.data) v = d(rng);
        ds[0].frames.push_back(f);
    }
    auto maps = frames_as_maps(ds);
    CHECK(maps[0].maps[2].data[1 * 36 + 7] == ds[0].frames[2].data[7 * 3 + 1]);
    auto cfg = config_for(SeqModelKind::ConvLSTM, 4, 3);
    cfg.sigmoid_head = true;
    auto model = SeqModel::build(cfg, shape_of(maps[0].maps[0]), 1);
    auto p = model.predict_next(std::span<const FeatureMap>(maps[0].maps.data(), 3));
    for (float v : p.data) CHECK((v > 0.0f && v < 1.0f));
}
