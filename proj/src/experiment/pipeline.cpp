#include <chrono>

#include "latentcast/error.hpp"
#include "latentcast/experiment.hpp"
#include "latentcast/log.hpp"

namespace latentcast::experiment {

using autoencoder::FeatureMap;
using dataio::Frame;

void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = nlohmann::json{{"autoencoder", c.ae},          {"predictor", c.seq},
                       {"ae_schedule", c.ae_schedule}, {"seq_schedule", c.seq_schedule},
                       {"test_fraction", c.test_fraction}, {"val_fraction", c.val_fraction},
                       {"seed", c.seed},               {"normalize_latents", c.normalize_latents}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
    c = PipelineConfig{};
    if (j.contains("autoencoder")) c.ae = j["autoencoder"].get<autoencoder::AutoencoderConfig>();
    if (j.contains("predictor")) c.seq = j["predictor"].get<seq::SeqModelConfig>();
    if (j.contains("ae_schedule")) c.ae_schedule = j["ae_schedule"].get<TrainSchedule>();
    if (j.contains("seq_schedule")) c.seq_schedule = j["seq_schedule"].get<TrainSchedule>();
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
    c.normalize_latents = j.value("normalize_latents", c.normalize_latents);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), stage + ": " + e.what());
    }
}

struct Scored {
    FrameScores scores;
    std::vector<double> ssim;
};

Scored score_frames(std::span<const Frame> predicted, std::span<const Frame* const> truth) {
    Scored s;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double q = metrics::ssim(*truth[i], predicted[i]);
        s.ssim.push_back(q);
        s.scores.ssim += q;
        s.scores.mae += metrics::mae(*truth[i], predicted[i]);
        s.scores.mse += metrics::mse(*truth[i], predicted[i]);
    }
    s.scores.count = predicted.size();
    if (s.scores.count) {
        const double n = static_cast<double>(s.scores.count);
        s.scores.ssim /= n;
        s.scores.mae /= n;
        s.scores.mse /= n;
    }
    return s;
}

std::optional<metrics::IntervalReport> intervals_of(std::span<const double> scores) {
    try {
        return metrics::bucketize_intervals(scores);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRange) throw;
        return std::nullopt;
    }
}

std::optional<double> kl_per_unit(const autoencoder::LatentDataset& latents) {
    std::vector<float> values;
    std::size_t units = 0;
    for (const auto& s : latents)
        for (const auto& m : s.maps) {
            units = m.size();
            values.insert(values.end(), m.data.begin(), m.data.end());
        }
    if (units == 0) return std::nullopt;
    auto stats = metrics::latent_stats(values, units);
    metrics::LatentStats live;
    std::size_t d = 0;
    for (std::size_t u = 0; u < units; ++u) {
        if (d < stats.degenerate.size() && stats.degenerate[d] == u) {
            ++d;
            continue;
        }
        live.mean.push_back(stats.mean[u]);
        live.stddev.push_back(stats.stddev[u]);
    }
    if (live.mean.empty()) return std::nullopt;
    return metrics::kl_gauss(live) / static_cast<double>(live.mean.size());
}

std::vector<const Frame*> target_frames(const dataio::Dataset& data, const autoencoder::LatentDataset& maps,
                                        std::span<const seq::WindowSample> windows, std::size_t k) {
    // `maps` was built from `data` sequence by sequence, so indices line up.
    std::vector<const Frame*> out;
    for (const auto& w : windows) {
        const auto s = static_cast<std::size_t>(w.sequence - maps.data());
        out.push_back(&data.at(s).frames.at(w.start + k));
    }
    return out;
}

struct Partitions {
    dataio::DatasetSplit split;
    dataio::Dataset train, val, test;
};

Partitions partition(const dataio::Dataset& dataset, const PipelineConfig& config, HygieneLog* log) {
    Partitions p;
    const auto ids = dataio::ids_of(dataset);
    p.split = dataio::split_sequences(ids, config.test_fraction, config.val_fraction, config.seed);
    p.train = dataio::select(dataset, p.split.train_ids);
    p.val = dataio::select(dataset, p.split.val_ids);
    p.test = dataio::select(dataset, p.split.test_ids);
    if (log) log->record_test(p.split.test_ids);
    return p;
}

void check_frames(const dataio::Dataset& dataset) {
    if (dataset.empty()) throw Error(ErrorKind::InsufficientData, "empty dataset");
    for (const auto& s : dataset)
        for (const auto& f : s.frames)
            if (f.raw) throw Error(ErrorKind::Config, "dataset must be preprocessed to [0,1] first");
}

} // namespace

RunReport run_pipeline(const dataio::Dataset& dataset, const PipelineConfig& config, HygieneLog* log,
                       const std::optional<std::filesystem::path>& checkpoint_dir) {
    check_frames(dataset);
    HygieneLog local;
    HygieneLog& hl = log ? *log : local;
    auto p = partition(dataset, config, &hl);
    config.seq.validate(dataset.front().length());

    RunReport r;
    r.name = seq::kind_name(config.seq.kind);
    r.approach = "latent";
    r.config = config;
    r.seed = config.seed;
    r.split = p.split;

    // Stage 1: autoencoder.
    auto t1 = Clock::now();
    auto ae = in_stage("stage 1 (autoencoder)", [&] {
        auto model = autoencoder::Autoencoder::build(config.ae, config.seed);
        const auto train = autoencoder::frame_pointers(p.train), val = autoencoder::frame_pointers(p.val);
        hl.record("autoencoder.train", p.split.train_ids);
        hl.record("autoencoder.validation", p.split.val_ids);
        auto sch = config.ae_schedule;
        sch.seed = config.seed;
        r.ae_run = autoencoder::train_autoencoder(model, train, val, sch);
        return model;
    });
    log::info("stage 1: autoencoder trained, best epoch " + std::to_string(r.ae_run->best_epoch));

    auto latents = in_stage("feature extraction", [&] {
        struct {
            autoencoder::LatentDataset train, val, test;
        } l{autoencoder::extract_latents(ae, p.train), autoencoder::extract_latents(ae, p.val),
            autoencoder::extract_latents(ae, p.test)};
        return l;
    });
    {
        const auto frames = autoencoder::frame_pointers(p.test);
        std::vector<Frame> rec;
        for (const auto& s : latents.test)
            for (auto& f : ae.decode_batch([&] {
                     std::vector<const FeatureMap*> v;
                     for (const auto& m : s.maps) v.push_back(&m);
                     return v;
                 }()))
                rec.push_back(std::move(f));
        r.reconstruction = score_frames(rec, frames).scores;
        r.kl_per_unit = kl_per_unit(latents.test);
    }
    std::optional<autoencoder::LatentNormalizer> norm;
    if (config.normalize_latents) {
        norm = autoencoder::LatentNormalizer::fit(latents.train);
        norm->apply(latents.train);
        norm->apply(latents.val);
        norm->apply(latents.test);
    }
    r.times.stage1 += seconds_since(t1);

    // Stage 2: predictor on latent windows.
    auto t2 = Clock::now();
    const std::size_t k = config.seq.window;
    const auto train_w = seq::make_windows(latents.train, k);
    const auto val_w = latents.val.empty() ? std::vector<seq::WindowSample>{} : seq::make_windows(latents.val, k);
    const auto test_w = seq::make_windows(latents.test, k);
    auto model = in_stage("stage 2 (predictor)", [&] {
        auto m = seq::SeqModel::build(config.seq, seq::shape_of(latents.train.front().maps.front()), config.seed);
        hl.record("predictor.train", p.split.train_ids);
        hl.record("predictor.validation", p.split.val_ids);
        auto sch = config.seq_schedule;
        sch.seed = config.seed;
        r.seq_run = seq::train_seq_model(m, train_w, val_w, sch);
        return m;
    });
    hl.assert_clean();
    r.train_loss = seq::evaluate_seq_model(model, train_w, nn::LossKind::MSE);
    r.val_loss = val_w.empty() ? r.train_loss : seq::evaluate_seq_model(model, val_w, nn::LossKind::MSE);
    // Test partition is touched once, after training and selection are final.
    r.test_loss = seq::evaluate_seq_model(model, test_w, nn::LossKind::MSE);
    auto predicted = model.predict(test_w);
    r.times.stage2 += seconds_since(t2);

    // Stage 3: decode predictions and score against the true next frames.
    auto t3 = Clock::now();
    in_stage("stage 3 (reconstruction)", [&] {
        if (norm)
            for (auto& m : predicted) norm->invert(m);
        std::vector<const FeatureMap*> ptrs;
        for (const auto& m : predicted) ptrs.push_back(&m);
        std::vector<Frame> frames;
        for (std::size_t s = 0; s < ptrs.size(); s += 64) {
            auto part = ae.decode_batch(std::span<const FeatureMap* const>(ptrs.data() + s, std::min<std::size_t>(64, ptrs.size() - s)));
            for (auto& f : part) frames.push_back(std::move(f));
        }
        auto scored = score_frames(frames, target_frames(p.test, latents.test, test_w, k));
        r.prediction = scored.scores;
        r.ssim_scores = std::move(scored.ssim);
        return 0;
    });
    r.intervals = intervals_of(r.ssim_scores);
    r.times.stage1 += seconds_since(t3);

    if (checkpoint_dir) {
        ae.save(*checkpoint_dir / "autoencoder", nullptr, config.seed);
        model.save(*checkpoint_dir / "predictor", nullptr, config.seed);
        r.checkpoint = checkpoint_dir->string();
    }
    return r;
}

RunReport run_baseline(const dataio::Dataset& dataset, const PipelineConfig& config, HygieneLog* log) {
    check_frames(dataset);
    HygieneLog local;
    HygieneLog& hl = log ? *log : local;
    auto p = partition(dataset, config, &hl);
    auto cfg = config.seq;
    cfg.sigmoid_head = true;
    cfg.validate(dataset.front().length());

    RunReport r;
    r.name = seq::kind_name(cfg.kind) + " baseline";
    r.approach = "baseline";
    PipelineConfig echo = config;
    echo.seq = cfg;
    r.config = echo;
    r.config.erase("autoencoder");
    r.config.erase("ae_schedule");
    r.seed = config.seed;
    r.split = p.split;

    auto t2 = Clock::now();
    const auto train = seq::frames_as_maps(p.train), val = seq::frames_as_maps(p.val), test = seq::frames_as_maps(p.test);
    const std::size_t k = cfg.window;
    const auto train_w = seq::make_windows(train, k);
    const auto val_w = val.empty() ? std::vector<seq::WindowSample>{} : seq::make_windows(val, k);
    const auto test_w = seq::make_windows(test, k);
    auto model = in_stage("baseline predictor", [&] {
        auto m = seq::SeqModel::build(cfg, seq::shape_of(train.front().maps.front()), config.seed);
        hl.record("baseline.train", p.split.train_ids);
        hl.record("baseline.validation", p.split.val_ids);
        auto sch = config.seq_schedule;
        sch.seed = config.seed;
        r.seq_run = seq::train_seq_model(m, train_w, val_w, sch);
        return m;
    });
    hl.assert_clean();
    r.train_loss = seq::evaluate_seq_model(model, train_w, nn::LossKind::MSE);
    r.val_loss = val_w.empty() ? r.train_loss : seq::evaluate_seq_model(model, val_w, nn::LossKind::MSE);
    r.test_loss = seq::evaluate_seq_model(model, test_w, nn::LossKind::MSE);
    const auto predicted = model.predict(test_w);
    std::vector<Frame> frames;
    for (const auto& m : predicted) frames.push_back(autoencoder::chw_to_frame(m.data.data(), m.channels, m.height, m.width));
    auto scored = score_frames(frames, target_frames(p.test, test, test_w, k));
    r.prediction = scored.scores;
    r.ssim_scores = std::move(scored.ssim);
    r.intervals = intervals_of(r.ssim_scores);
    r.times.stage2 = seconds_since(t2);
    return r;
}

} // namespace latentcast::experiment
