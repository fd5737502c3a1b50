#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "latentcast/error.hpp"
#include "latentcast/experiment.hpp"
#include "latentcast/preprocess.hpp"
#include "latentcast/synth.hpp"

using namespace latentcast;
using namespace latentcast::experiment;

namespace {

dataio::Dataset tiny_digits(std::size_t n, std::size_t length, std::uint64_t seed) {
    synth::SynthOptions o;
    o.sequences = n;
    o.length = length;
    o.height = o.width = 32;
    o.seed = seed;
    auto ds = synth::moving_digits(o, 1);
    for (auto& s : ds) s = preprocess::preprocess_sequence(s, [] {
        preprocess::PreprocessSpec p;
        p.target_length = 8;
        p.target_height = p.target_width = 32;
        p.binarize = true;
        return p;
    }());
    return ds;
}

PipelineConfig tiny_config() {
    PipelineConfig c;
    c.ae.dims = {4, 8};
    c.ae.input_size = 32;
    c.ae.loss = nn::LossKind::MSE;
    c.seq.kind = seq::SeqModelKind::ConvLSTM;
    c.seq.hidden_layers = 1;
    c.seq.hidden_size = 4;
    c.seq.window = 3;
    c.ae_schedule.batch_size = 16;
    c.ae_schedule.max_epochs = 2;
    c.seq_schedule.batch_size = 8;
    c.seq_schedule.max_epochs = 2;
    c.seed = 5;
    return c;
}

} // namespace

TEST_CASE("grid sizes") {
    CHECK(grid_enumerate(autoencoder_grid()).size() == 32);
    CHECK(grid_enumerate(predictor_grid(), seq::SeqModelKind::LSTM).size() == 432);
    CHECK(grid_enumerate(predictor_grid(), seq::SeqModelKind::CNN3D).size() == 144);
    CHECK(grid_enumerate(predictor_grid(), seq::SeqModelKind::CRNN).size() == 144);
    for (const auto& p : grid_enumerate(predictor_grid(), seq::SeqModelKind::CNN3D)) CHECK(!p.contains("hidden_layers"));
}

TEST_CASE("grid order is lexicographic with the last axis fastest") {
    auto g = HyperGrid::parse(ojson::parse(R"({"b": [1, 2], "a": ["x", "y", "z"]})"));
    auto pts = grid_enumerate(g);
    REQUIRE(pts.size() == 6);
    CHECK(pts[0].dump() == R"({"b":1,"a":"x"})");
    CHECK(pts[1].dump() == R"({"b":1,"a":"y"})");
    CHECK(pts[3].dump() == R"({"b":2,"a":"x"})");
    CHECK(grid_enumerate(g) == pts);
}

TEST_CASE("grid errors") {
    try {
        HyperGrid::parse(ojson::parse(R"({"loss": []})"));
        FAIL("expected a grid error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Grid);
    }
    HyperGrid g;
    g.axes["window"] = ojson::array();
    CHECK_THROWS_AS(grid_enumerate(g), Error);
    CHECK_THROWS_AS(seq_config_from(ojson{{"dropout", 0.5}}, {}), Error);
}

TEST_CASE("grid points map onto configurations") {
    auto pts = grid_enumerate(autoencoder_grid());
    auto c = ae_config_from(pts.back(), {});
    CHECK(c.dims == std::vector<std::size_t>{64, 128, 256});
    CHECK(c.loss == nn::LossKind::RMSE);
    CHECK(c.optimizer.kind == nn::OptimizerKind::RMSProp);
    CHECK(c.optimizer.learning_rate == 0.0005);

    auto s = seq_config_from(grid_enumerate(predictor_grid(), seq::SeqModelKind::CRNN).front(), {});
    CHECK(s.kind == seq::SeqModelKind::CRNN);
    CHECK(!s.hidden_layers);
    CHECK(s.window == 3);
}

TEST_CASE("fold statistics") {
    const double five[] = {1, 2, 3, 4, 5};
    auto f = fold_statistics(five);
    CHECK(f.mean == doctest::Approx(3.0));
    CHECK(f.stddev == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    const double same[] = {0.7, 0.7, 0.7};
    CHECK(fold_statistics(same).stddev == 0.0);
}

TEST_CASE("fold partition covers every sequence once") {
    auto folds = kfold_partition(10, 5, 3);
    REQUIRE(folds.size() == 5);
    std::vector<int> seen(10, 0);
    for (const auto& f : folds) {
        CHECK(f.size() == 2);
        for (auto i : f) seen[i]++;
    }
    for (int s : seen) CHECK(s == 1);
    try {
        kfold_partition(4, 5, 0);
        FAIL("expected a fold error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Fold);
    }
}

TEST_CASE("k-fold validation over latent sequences") {
    autoencoder::LatentDataset lat;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> d(0, 1);
    for (int s = 0; s < 5; ++s) {
        autoencoder::LatentSequence ls{"s" + std::to_string(s), {}};
        for (int t = 0; t < 6; ++t) {
            autoencoder::FeatureMap m(2, 3, 3);
            for (auto& v : m.data) v = d(rng);
            ls.maps.push_back(m);
        }
        lat.push_back(ls);
    }
    seq::SeqModelConfig c;
    c.kind = seq::SeqModelKind::GRU;
    c.hidden_size = 4;
    c.window = 3;
    TrainSchedule s;
    s.max_epochs = 2;
    s.batch_size = 4;
    auto f = kfold_validate(c, lat, 5, 1, s);
    CHECK(f.losses.size() == 5);
    for (double l : f.losses) CHECK(std::isfinite(l));
    auto again = kfold_validate(c, lat, 5, 1, s);
    CHECK(f.losses == again.losses);
}

TEST_CASE("hygiene log catches a leaked test id") {
    HygieneLog log;
    const std::string test[] = {"seq000003"};
    const std::string train[] = {"seq000001", "seq000003"};
    log.record_test(test);
    log.record("train", train);
    try {
        log.assert_clean();
        FAIL("expected a state error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::State);
        CHECK(std::string(e.what()).find("seq000003") != std::string::npos);
    }
}

TEST_CASE("pipeline run is clean, bounded and reproducible") {
    const auto ds = tiny_digits(10, 8, 1);
    const auto cfg = tiny_config();
    HygieneLog log;
    auto a = run_pipeline(ds, cfg, &log);
    log.assert_clean();
    CHECK(!log.test_ids().empty());
    CHECK(log.stages().count("predictor.train") == 1);
    CHECK(a.split.test_ids.size() == 2);
    CHECK(a.prediction.count == a.split.test_ids.size() * (8 - 3));
    CHECK(a.ssim_scores.size() == a.prediction.count);
    CHECK(a.reconstruction.has_value());
    CHECK(std::isfinite(a.test_loss));
    CHECK(a.times.stage1 > 0);
    CHECK(a.times.stage2 > 0);

    auto b = run_pipeline(ds, cfg);
    CHECK(a.test_loss == b.test_loss);
    CHECK(a.ssim_scores == b.ssim_scores);
    CHECK(a.prediction.mse == b.prediction.mse);
}

TEST_CASE("baseline predicts frames in [0,1]") {
    const auto ds = tiny_digits(10, 8, 2);
    HygieneLog log;
    auto r = run_baseline(ds, tiny_config(), &log);
    log.assert_clean();
    CHECK(r.approach == "baseline");
    CHECK(r.prediction.count == 2 * 5);
    CHECK(r.prediction.mse >= 0.0);
    CHECK(r.prediction.mse <= 1.0);
    CHECK(r.config["predictor"]["sigmoid_head"] == true);
}

TEST_CASE("stage failures carry the stage name") {
    auto ds = tiny_digits(10, 8, 3);
    auto cfg = tiny_config();
    cfg.ae.input_size = 64;  // frames are 32x32
    try {
        run_pipeline(ds, cfg);
        FAIL("expected a failure");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("stage 1") != std::string::npos);
    }
}

TEST_CASE("benchmark runner") {
    CHECK_THROWS_AS(benchmark([] {}, 4, 30), Error);
    CHECK_THROWS_AS(benchmark([] {}, 5, 29), Error);
    auto noop = benchmark([] {}, 5, 30, "noop");
    CHECK(noop.iterations == 30);
    CHECK(noop.min_s <= noop.median_s);
    CHECK(noop.median_s <= noop.max_s);
    CHECK(!noop.hardware.empty());

    seq::SeqModelConfig c;
    c.kind = seq::SeqModelKind::ConvLSTM;
    c.hidden_size = 16;
    c.window = 3;
    auto model = seq::SeqModel::build(c, {8, 8, 8}, 1);
    std::vector<autoencoder::FeatureMap> in(3, autoencoder::FeatureMap(8, 8, 8, 0.5f));
    auto real = benchmark_inference(model, in, 5, 40);
    CHECK(noop.median_s < real.median_s);
    auto again = benchmark_inference(model, in, 5, 40);
    CHECK(std::abs(again.median_s - real.median_s) <= 0.25 * real.median_s);

    StageTimes t{3.0, 2.0};
    attach_stage_times(real, t);
    CHECK(*real.total_s == doctest::Approx(*real.stage2_s + *real.stage13_s));
}

TEST_CASE("report round trip, ordering and optional sections") {
    RunReport a, b;
    a.name = "A";
    a.approach = "latent";
    a.prediction = {0.1, 0.02, 0.61, 3};
    a.ssim_scores = {0.5, 0.6, 0.73};
    a.test_loss = 0.125;
    a.folds = FoldStats{{1, 2, 3}, 2, 1};
    a.kl_per_unit = 0.25;
    a.times = {1.5, 2.5};
    b.name = "B";
    b.approach = "baseline";
    b.prediction = {0.05, 0.01, 0.8, 3};
    b.ssim_scores = {0.7, 0.8, 0.9};
    b.test_loss = 0.0625;

    Report rep;
    rep.runs = {a, b};
    const auto dir = std::filesystem::temp_directory_path() / "latentcast_test_report";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir / "report.json", dir / "hist.svg");
    auto j = nlohmann::json::parse(std::ifstream(dir / "report.json"));
    CHECK(!j.contains("benchmarks"));
    REQUIRE(j["comparison"].size() == 2);
    CHECK(j["comparison"][0]["name"] == "B");
    CHECK(j["comparison"][1]["name"] == "A");
    CHECK(std::filesystem::file_size(dir / "hist.svg") > 100);

    auto back = load_report(dir / "report.json");
    REQUIRE(back.runs.size() == 2);
    CHECK(back.runs[0].prediction.ssim == a.prediction.ssim);
    CHECK(back.runs[0].prediction.mse == a.prediction.mse);
    CHECK(back.runs[0].test_loss == a.test_loss);
    CHECK(back.runs[0].folds->stddev == 1.0);
    CHECK(back.runs[0].kl_per_unit == 0.25);
    CHECK(back.runs[0].times.stage2 == 2.5);
    CHECK(back.runs[1].ssim_scores == b.ssim_scores);

    BenchReport bench;
    bench.name = "A";
    bench.warmup = 10;
    bench.iterations = 100;
    bench.median_s = 0.03;
    rep.benches = {bench};
    emit_report(rep, dir / "with_bench.json");
    auto j2 = nlohmann::json::parse(std::ifstream(dir / "with_bench.json"));
    CHECK(j2["benchmarks"][0]["energy_joules"].is_null());
    CHECK(j2["comparison"][1]["seconds_per_iteration"] == 0.03);
    CHECK(load_report(dir / "with_bench.json").benches[0].median_s == 0.03);

    CHECK_THROWS_AS(emit_report(Report{}, dir / "empty.json"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("parallel grid search matches the serial result") {
    autoencoder::LatentDataset lat;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> d(0, 1);
    for (int s = 0; s < 4; ++s) {
        autoencoder::LatentSequence ls{"s" + std::to_string(s), {}};
        for (int t = 0; t < 6; ++t) {
            autoencoder::FeatureMap m(2, 3, 3);
            for (auto& v : m.data) v = d(rng);
            ls.maps.push_back(m);
        }
        lat.push_back(ls);
    }
    auto grid = HyperGrid::parse(ojson::parse(R"({"hidden_size": [2, 4], "learning_rate": [0.01, 0.001]})"));
    seq::SeqModelConfig base;
    base.kind = seq::SeqModelKind::CNN3D;
    base.hidden_layers.reset();
    base.window = 3;
    TrainSchedule s;
    s.max_epochs = 2;
    s.batch_size = 4;
    auto serial = grid_search_predictor(grid, base, lat, 2, s, 1, 1);
    auto threaded = grid_search_predictor(grid, base, lat, 2, s, 1, 3);
    REQUIRE(serial.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(serial[i].val_mse == threaded[i].val_mse);
    CHECK(best_result(serial) == best_result(threaded));
}
