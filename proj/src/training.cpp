#include "latentcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "latentcast/error.hpp"
#include "latentcast/log.hpp"

namespace latentcast {

void TrainSchedule::validate() const {
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be positive");
    if (max_epochs == 0) throw Error(ErrorKind::Config, "max epochs must be positive");
}

void to_json(nlohmann::json& j, const TrainSchedule& s) {
    j = nlohmann::json{{"batch_size", s.batch_size}, {"max_epochs", s.max_epochs},     {"patience", s.patience},
                       {"seed", s.seed},             {"restore_best", s.restore_best}, {"min_delta", s.min_delta}};
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
    s = TrainSchedule{};
    s.batch_size = j.value("batch_size", s.batch_size);
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.patience = j.value("patience", s.patience);
    s.seed = j.value("seed", s.seed);
    s.restore_best = j.value("restore_best", s.restore_best);
    s.min_delta = j.value("min_delta", s.min_delta);
}

void to_json(nlohmann::json& j, const TrainRun& r) {
    auto hist = nlohmann::json::array();
    for (const auto& e : r.history)
        hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    j = nlohmann::json{{"history", hist},
                       {"best_epoch", r.best_epoch},
                       {"best_val_loss", r.best_val_loss},
                       {"stopped_early", r.stopped_early},
                       {"steps", r.steps}};
}

void from_json(const nlohmann::json& j, TrainRun& r) {
    r = TrainRun{};
    for (const auto& e : j.at("history"))
        r.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                             e.at("val_loss").get<double>()});
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_val_loss = j.at("best_val_loss").get<double>();
    r.stopped_early = j.at("stopped_early").get<bool>();
    r.steps = j.at("steps").get<std::uint64_t>();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

double evaluate_loss(nn::Network<float>& net, nn::LossKind loss, std::size_t n, const BatchFn& batch,
                     std::size_t batch_size) {
    if (n == 0) throw Error(ErrorKind::InsufficientData, "no samples to evaluate");
    double total = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
        auto [x, y] = batch(idx);
        const auto pred = net.forward(x, nn::Mode::Eval);
        double l = nn::loss(loss, pred, y);
        // RMSE does not decompose over batches; accumulate its square and take the root at the end.
        if (loss == nn::LossKind::RMSE) l *= l;
        total += l * static_cast<double>(idx.size());
    }
    const double mean = total / static_cast<double>(n);
    return loss == nn::LossKind::RMSE ? std::sqrt(mean) : mean;
}

TrainRun fit(nn::Network<float>& net, nn::Optimizer<float>& optimizer, nn::LossKind loss, std::size_t n_train,
             const BatchFn& train_batch, std::size_t n_val, const BatchFn& val_batch, const TrainSchedule& schedule) {
    schedule.validate();
    if (n_train == 0) throw Error(ErrorKind::InsufficientData, "no training samples");
    TrainRun run;
    nn::Network<float> best = net;
    double best_loss = INFINITY;
    std::size_t since_best = 0;
    std::vector<std::size_t> idx;
    for (std::size_t epoch = 0; epoch < schedule.max_epochs; ++epoch) {
        const auto order = epoch_order(n_train, schedule.seed, epoch);
        double total = 0.0;
        for (std::size_t start = 0; start < n_train; start += schedule.batch_size) {
            idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, start + schedule.batch_size)));
            auto [x, y] = train_batch(idx);
            double l = 0.0;
            try {
                l = net.train_step(x, y, loss, optimizer);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::NonFinite)
                    throw Error(ErrorKind::TrainingAbort, "epoch " + std::to_string(epoch) + ", step " +
                                                              std::to_string(run.steps) + ": " + e.what());
                throw;
            }
            total += l * static_cast<double>(idx.size());
            ++run.steps;
        }
        EpochRecord rec{epoch, total / static_cast<double>(n_train), 0.0};
        rec.val_loss = n_val > 0 ? evaluate_loss(net, loss, n_val, val_batch, schedule.batch_size) : rec.train_loss;
        if (!std::isfinite(rec.val_loss))
            throw Error(ErrorKind::TrainingAbort, "non-finite validation loss at epoch " + std::to_string(epoch));
        run.history.push_back(rec);
        log::info("epoch " + std::to_string(epoch) + " train " + std::to_string(rec.train_loss) + " val " +
                  std::to_string(rec.val_loss));
        if (rec.val_loss < best_loss - schedule.min_delta) {
            best_loss = rec.val_loss;
            run.best_epoch = epoch;
            since_best = 0;
            if (schedule.restore_best) best = net;
        } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
            run.stopped_early = true;
            break;
        }
    }
    run.best_val_loss = best_loss;
    if (schedule.restore_best) net = best;
    return run;
}

} // namespace latentcast
