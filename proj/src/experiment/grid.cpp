#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "latentcast/error.hpp"
#include "latentcast/experiment.hpp"

namespace latentcast::experiment {

HyperGrid HyperGrid::parse(const ojson& j) {
    if (!j.is_object() || j.empty()) throw Error(ErrorKind::Grid, "grid must be a non-empty object of axis -> values");
    HyperGrid g;
    for (const auto& [name, values] : j.items()) {
        if (!values.is_array()) throw Error(ErrorKind::Grid, "axis '" + name + "' must be a list");
        if (values.empty()) throw Error(ErrorKind::Grid, "axis '" + name + "' is empty");
        g.axes[name] = values;
    }
    return g;
}

HyperGrid HyperGrid::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open grid file " + path.string());
    try {
        return parse(ojson::parse(in));
    } catch (const ojson::parse_error& e) {
        throw Error(ErrorKind::Grid, path.string() + ": " + e.what());
    }
}

HyperGrid autoencoder_grid() {
    return HyperGrid::parse(ojson{{"dims", {{32, 64, 128}, {64, 128, 256}}},
                                  {"loss", {"L1", "MSE", "MSLE", "RMSE"}},
                                  {"optimizer", {"Adam", "RMSProp"}},
                                  {"learning_rate", {0.001, 0.0005}}});
}

HyperGrid predictor_grid() {
    return HyperGrid::parse(ojson{{"hidden_layers", {1, 2, 3}},
                                  {"hidden_size", {128, 256}},
                                  {"loss", {"L1", "MSE", "MSLE", "RMSE"}},
                                  {"optimizer", {"Adam", "RMSProp"}},
                                  {"learning_rate", {0.01, 0.001, 0.0001}},
                                  {"window", {3, 5, 10}}});
}

std::vector<ojson> grid_enumerate(const HyperGrid& grid, std::optional<seq::SeqModelKind> kind) {
    std::vector<std::pair<std::string, ojson>> axes;
    for (const auto& [name, values] : grid.axes.items()) {
        if (values.empty()) throw Error(ErrorKind::Grid, "axis '" + name + "' is empty");
        if (kind && name == "hidden_layers" && !seq::uses_hidden_layers(*kind)) continue;
        axes.emplace_back(name, values);
    }
    if (axes.empty()) throw Error(ErrorKind::Grid, "grid has no axes");
    std::vector<ojson> out;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        ojson point = ojson::object();
        if (kind) point["kind"] = seq::kind_name(*kind);
        for (std::size_t a = 0; a < axes.size(); ++a) point[axes[a].first] = axes[a].second[idx[a]];
        out.push_back(std::move(point));
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++idx[a] < axes[a].second.size()) break;
            idx[a] = 0;
            if (a == 0) return out;
        }
    }
}

namespace {

template <typename F>
void apply_axes(const ojson& point, F&& apply) {
    for (const auto& [name, value] : point.items()) {
        try {
            if (!apply(name, value)) throw Error(ErrorKind::Grid, "unknown axis '" + name + "'");
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Grid, "axis '" + name + "': " + e.what());
        }
    }
}

} // namespace

autoencoder::AutoencoderConfig ae_config_from(const ojson& point, autoencoder::AutoencoderConfig c) {
    apply_axes(point, [&](const std::string& name, const ojson& v) {
        if (name == "dims") c.dims = v.get<std::vector<std::size_t>>();
        else if (name == "loss") c.loss = nn::loss_from_name(v.get<std::string>());
        else if (name == "optimizer") c.optimizer.kind = nn::optimizer_from_name(v.get<std::string>());
        else if (name == "learning_rate") c.optimizer.learning_rate = v.get<double>();
        else return false;
        return true;
    });
    c.validate();
    return c;
}

seq::SeqModelConfig seq_config_from(const ojson& point, seq::SeqModelConfig c) {
    apply_axes(point, [&](const std::string& name, const ojson& v) {
        if (name == "kind") c.kind = seq::kind_from_name(v.get<std::string>());
        else if (name == "hidden_layers") c.hidden_layers = v.get<std::size_t>();
        else if (name == "hidden_size") c.hidden_size = v.get<std::size_t>();
        else if (name == "loss") c.loss = nn::loss_from_name(v.get<std::string>());
        else if (name == "optimizer") c.optimizer.kind = nn::optimizer_from_name(v.get<std::string>());
        else if (name == "learning_rate") c.optimizer.learning_rate = v.get<double>();
        else if (name == "window") c.window = v.get<std::size_t>();
        else return false;
        return true;
    });
    if (!seq::uses_hidden_layers(c.kind)) c.hidden_layers.reset();
    else if (!c.hidden_layers) c.hidden_layers = 1;
    c.validate();
    return c;
}

void to_json(nlohmann::json& j, const FoldStats& f) {
    j = nlohmann::json{{"losses", f.losses}, {"mean", f.mean}, {"std", f.stddev}};
}

void from_json(const nlohmann::json& j, FoldStats& f) {
    f.losses = j.at("losses").get<std::vector<double>>();
    f.mean = j.at("mean").get<double>();
    f.stddev = j.at("std").get<double>();
}

FoldStats fold_statistics(std::span<const double> losses) {
    if (losses.empty()) throw Error(ErrorKind::Fold, "no fold losses");
    FoldStats f;
    f.losses.assign(losses.begin(), losses.end());
    if (std::all_of(losses.begin(), losses.end(), [&](double l) { return l == losses.front(); })) {
        f.mean = losses.front();
        return f;
    }
    f.mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    if (losses.size() > 1) {
        double ss = 0.0;
        for (double l : losses) ss += (l - f.mean) * (l - f.mean);
        f.stddev = std::sqrt(ss / static_cast<double>(losses.size() - 1));
    }
    return f;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorKind::Fold, "K must be at least 2");
    if (k > n)
        throw Error(ErrorKind::Fold, "K = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " sequences");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

FoldStats kfold_validate(const seq::SeqModelConfig& config, const autoencoder::LatentDataset& sequences, std::size_t k,
                         std::uint64_t seed, const TrainSchedule& schedule) {
    if (sequences.empty()) throw Error(ErrorKind::InsufficientData, "no sequences for K-fold");
    config.validate(sequences.front().maps.size());
    const auto folds = kfold_partition(sequences.size(), k, seed);
    const auto shape = seq::shape_of(sequences.front().maps.front());
    std::vector<double> losses;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<bool> held(sequences.size(), false);
        for (auto i : folds[f]) held[i] = true;
        std::vector<seq::WindowSample> train, val;
        for (std::size_t i = 0; i < sequences.size(); ++i) {
            auto w = seq::make_windows(sequences[i], config.window);
            (held[i] ? val : train).insert((held[i] ? val : train).end(), w.begin(), w.end());
        }
        auto model = seq::SeqModel::build(config, shape, seed + f);
        auto sch = schedule;
        sch.seed = schedule.seed + f;
        seq::train_seq_model(model, train, val, sch);
        losses.push_back(seq::evaluate_seq_model(model, val, nn::LossKind::MSE));
    }
    return fold_statistics(losses);
}

void HygieneLog::record(const std::string& stage, std::span<const std::string> ids) {
    stages_[stage].insert(ids.begin(), ids.end());
}

void HygieneLog::record_test(std::span<const std::string> ids) { test_.insert(ids.begin(), ids.end()); }

void HygieneLog::assert_clean() const {
    for (const auto& [stage, ids] : stages_)
        for (const auto& id : ids)
            if (test_.count(id)) throw Error(ErrorKind::State, "test sequence " + id + " reached stage " + stage);
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex m;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!first) first = std::current_exception();
                }
            }
        });
    for (auto& t : workers) t.join();
    if (first) std::rethrow_exception(first);
}

void to_json(nlohmann::json& j, const GridResult& r) {
    j = nlohmann::json{{"point", nlohmann::json::parse(r.point.dump())}, {"config", r.config}, {"val_mse", r.val_mse}};
    if (r.folds) j["folds"] = *r.folds;
    if (r.error) j["error"] = *r.error;
}

std::size_t best_result(std::span<const GridResult> results) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < results.size(); ++i)
        if (!results[i].error && std::isfinite(results[i].val_mse) && (!best || results[i].val_mse < results[*best].val_mse))
            best = i;
    if (!best) throw Error(ErrorKind::TrainingAbort, "every grid configuration failed");
    return *best;
}

std::vector<GridResult> grid_search_autoencoder(const HyperGrid& grid, const autoencoder::AutoencoderConfig& base,
                                                std::span<const dataio::Frame* const> train,
                                                std::span<const dataio::Frame* const> val,
                                                const TrainSchedule& schedule, std::uint64_t seed, std::size_t jobs) {
    const auto points = grid_enumerate(grid);
    std::vector<GridResult> results(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        results[i].point = points[i];
        results[i].config = ae_config_from(points[i], base);
    }
    parallel_for(points.size(), jobs, [&](std::size_t i) {
        try {
            const auto cfg = results[i].config.get<autoencoder::AutoencoderConfig>();
            auto ae = autoencoder::Autoencoder::build(cfg, seed);
            autoencoder::train_autoencoder(ae, train, val, schedule);
            auto held = val.empty() ? train : val;
            double sum = 0.0;
            for (const auto* f : held) sum += metrics::mse(*f, ae.reconstruct(*f));
            results[i].val_mse = sum / static_cast<double>(held.size());
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::TrainingAbort && e.kind() != ErrorKind::NonFinite) throw;
            results[i].error = e.what();
        }
    });
    return results;
}

std::vector<GridResult> grid_search_predictor(const HyperGrid& grid, const seq::SeqModelConfig& base,
                                              const autoencoder::LatentDataset& sequences, std::size_t kfold,
                                              const TrainSchedule& schedule, std::uint64_t seed, std::size_t jobs) {
    const auto points = grid_enumerate(grid, base.kind);
    std::vector<GridResult> results(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        results[i].point = points[i];
        results[i].config = seq_config_from(points[i], base);
    }
    parallel_for(points.size(), jobs, [&](std::size_t i) {
        try {
            const auto cfg = results[i].config.get<seq::SeqModelConfig>();
            auto f = kfold_validate(cfg, sequences, kfold, seed, schedule);
            results[i].val_mse = f.mean;
            results[i].folds = std::move(f);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::TrainingAbort && e.kind() != ErrorKind::NonFinite) throw;
            results[i].error = e.what();
        }
    });
    return results;
}

} // namespace latentcast::experiment
