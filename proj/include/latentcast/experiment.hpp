#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/dataio.hpp"
#include "latentcast/metrics.hpp"
#include "latentcast/seqmodels.hpp"
#include "latentcast/training.hpp"

namespace latentcast::experiment {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Grids

/// Named axes, each a non-empty value list; axis order is the file order.
struct HyperGrid {
    ojson axes = ojson::object();

    static HyperGrid parse(const ojson& j);
    static HyperGrid load(const std::filesystem::path& path);
    std::size_t axis_count() const { return axes.size(); }
};

/// Autoencoder grid: dims, loss, optimizer, learning_rate.
HyperGrid autoencoder_grid();
/// Predictor grid: hidden_layers, hidden_size, loss, optimizer, learning_rate, window.
HyperGrid predictor_grid();

/// Cartesian product in lexicographic order (last axis varies fastest). With a
/// kind that takes no hidden-layer count, the hidden_layers axis is skipped.
std::vector<ojson> grid_enumerate(const HyperGrid& grid, std::optional<seq::SeqModelKind> kind = std::nullopt);

/// Applies a grid point to a base config. Unknown axis names are a grid error.
autoencoder::AutoencoderConfig ae_config_from(const ojson& point, autoencoder::AutoencoderConfig base);
seq::SeqModelConfig seq_config_from(const ojson& point, seq::SeqModelConfig base);

// ---------------------------------------------------------------------------
// K-fold

struct FoldStats {
    std::vector<double> losses;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1)
};

void to_json(nlohmann::json& j, const FoldStats& f);
void from_json(const nlohmann::json& j, FoldStats& f);

FoldStats fold_statistics(std::span<const double> losses);

/// Assigns n sequences to K folds after a seeded shuffle; fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed);

/// Trains one model per fold on the other folds' windows and reports the
/// validation MSE of the held-out fold. Folds are formed over whole sequences.
FoldStats kfold_validate(const seq::SeqModelConfig& config, const autoencoder::LatentDataset& sequences, std::size_t k,
                         std::uint64_t seed, const TrainSchedule& schedule);

// ---------------------------------------------------------------------------
// Test-set hygiene

/// Records which sequence ids each stage touched.
class HygieneLog {
public:
    void record(const std::string& stage, std::span<const std::string> ids);
    void record_test(std::span<const std::string> ids);
    const std::map<std::string, std::set<std::string>>& stages() const noexcept { return stages_; }
    const std::set<std::string>& test_ids() const noexcept { return test_; }
    /// Throws State naming the stage and id if a test id reached any recorded stage.
    void assert_clean() const;

private:
    std::map<std::string, std::set<std::string>> stages_;
    std::set<std::string> test_;
};

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
    autoencoder::AutoencoderConfig ae{};
    seq::SeqModelConfig seq{};
    TrainSchedule ae_schedule{};
    TrainSchedule seq_schedule{};
    double test_fraction = 0.2;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    bool normalize_latents = false;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

struct FrameScores {
    double mae = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    std::size_t count = 0;
};

void to_json(nlohmann::json& j, const FrameScores& s);
void from_json(const nlohmann::json& j, FrameScores& s);

struct StageTimes {
    double stage1 = 0.0;  // autoencoder training, feature extraction and final decoding
    double stage2 = 0.0;  // predictor training and latent prediction
    double total() const { return stage1 + stage2; }
};

struct RunReport {
    std::string name;
    std::string approach;  // "latent" or "baseline"
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    dataio::DatasetSplit split;
    std::optional<TrainRun> ae_run;
    std::optional<FrameScores> reconstruction;  // autoencoder on test frames
    std::optional<double> kl_per_unit;
    TrainRun seq_run;
    double train_loss = 0.0;  // predictor MSE, latent space for the pipeline
    double val_loss = 0.0;
    double test_loss = 0.0;
    std::optional<FoldStats> folds;
    FrameScores prediction;  // reconstructed predictions vs ground-truth next frames
    std::vector<double> ssim_scores;
    std::optional<metrics::IntervalReport> intervals;
    StageTimes times;
    std::optional<std::string> checkpoint;
};

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

/// Stage 1 autoencoder, latent extraction, stage 2 predictor on latent windows,
/// stage 3 decoding of test predictions scored against the true next frames.
/// Stage failures are rethrown with the stage name prefixed.
RunReport run_pipeline(const dataio::Dataset& dataset, const PipelineConfig& config, HygieneLog* log = nullptr,
                       const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// The same predictor trained directly on frames, with a sigmoid output head.
RunReport run_baseline(const dataio::Dataset& dataset, const PipelineConfig& config, HygieneLog* log = nullptr);

// ---------------------------------------------------------------------------
// Grid search

struct GridResult {
    ojson point;
    nlohmann::json config;
    double val_mse = 0.0;
    std::optional<FoldStats> folds;
    std::optional<std::string> error;  // set when the configuration aborted
};

void to_json(nlohmann::json& j, const GridResult& r);

/// Index of the lowest validation MSE among successful results.
std::size_t best_result(std::span<const GridResult> results);

/// Autoencoder configurations trained on `train`, scored by validation reconstruction MSE.
std::vector<GridResult> grid_search_autoencoder(const HyperGrid& grid, const autoencoder::AutoencoderConfig& base,
                                                std::span<const dataio::Frame* const> train,
                                                std::span<const dataio::Frame* const> val,
                                                const TrainSchedule& schedule, std::uint64_t seed, std::size_t jobs);

/// Predictor configurations scored by K-fold validation MSE over `sequences`.
std::vector<GridResult> grid_search_predictor(const HyperGrid& grid, const seq::SeqModelConfig& base,
                                              const autoencoder::LatentDataset& sequences, std::size_t kfold,
                                              const TrainSchedule& schedule, std::uint64_t seed, std::size_t jobs);

/// Runs f(0..n-1) on up to `jobs` threads; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f);

// ---------------------------------------------------------------------------
// Benchmarking

struct BenchReport {
    std::string name;
    std::size_t warmup = 0;
    std::size_t iterations = 0;
    double median_s = 0.0;
    double mean_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    std::string hardware;
    std::optional<double> stage2_s;
    std::optional<double> stage13_s;
    std::optional<double> total_s;  // stage2_s + stage13_s
    std::optional<double> energy_joules;
};

void to_json(nlohmann::json& j, const BenchReport& b);
void from_json(const nlohmann::json& j, BenchReport& b);

std::string hardware_descriptor();

/// Times `iteration` with a monotonic clock; warmup >= 5 and iterations >= 30.
BenchReport benchmark(const std::function<void()>& iteration, std::size_t warmup, std::size_t iterations,
                      const std::string& name = "");

/// Per-window prediction latency of a sequence model.
BenchReport benchmark_inference(seq::SeqModel& model, std::span<const autoencoder::FeatureMap> inputs,
                                std::size_t warmup, std::size_t iterations);

/// Fills the total-time fields from a run's stage timings.
void attach_stage_times(BenchReport& bench, const StageTimes& times);

// ---------------------------------------------------------------------------
// Reports

struct Report {
    std::vector<RunReport> runs;
    std::vector<BenchReport> benches;
};

struct TableRow {
    std::string name;
    std::string approach;
    std::string kind;
    double test_loss = 0.0;
    std::optional<FoldStats> folds;
    double mse = 0.0;
    double mae = 0.0;
    double ssim = 0.0;
    std::optional<double> seconds_per_iteration;
};

/// One row per run, sorted by reconstructed-prediction SSIM, best first.
std::vector<TableRow> comparison_table(const Report& report);
std::string render_table(std::span<const TableRow> rows);

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
/// Writes the JSON report; an SVG histogram of per-frame SSIM when svg is set.
void emit_report(const Report& report, const std::filesystem::path& out,
                 const std::optional<std::filesystem::path>& svg = std::nullopt);
Report load_report(const std::filesystem::path& path);

std::string ssim_histogram_svg(std::span<const double> scores, std::size_t bins = 20, const std::string& title = "");

} // namespace latentcast::experiment
