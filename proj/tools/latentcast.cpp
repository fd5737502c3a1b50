#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/dataio.hpp"
#include "latentcast/error.hpp"
#include "latentcast/experiment.hpp"
#include "latentcast/log.hpp"
#include "latentcast/metrics.hpp"
#include "latentcast/preprocess.hpp"
#include "latentcast/seqmodels.hpp"
#include "latentcast/synth.hpp"

using namespace latentcast;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<std::size_t> parse_dims(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');) {
        try {
            out.push_back(std::stoul(part));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Usage, "bad channel list '" + s + "'");
        }
    }
    return out;
}

std::vector<const dataio::Frame*> frames_of(const dataio::Dataset& ds) { return autoencoder::frame_pointers(ds); }

dataio::DatasetSplit split_for(const std::vector<std::string>& ids, const std::string& split_path, std::uint64_t seed) {
    if (!split_path.empty()) return read_json(split_path).get<dataio::DatasetSplit>();
    return dataio::split_sequences(ids, 0.2, 0.2, seed);
}

autoencoder::LatentDataset select_latents(const autoencoder::LatentDataset& all, std::span<const std::string> ids) {
    std::map<std::string, const autoencoder::LatentSequence*> by_id;
    for (const auto& s : all) by_id[s.id] = &s;
    autoencoder::LatentDataset out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorKind::InsufficientData, "sequence " + id + " missing from latents");
        out.push_back(*it->second);
    }
    return out;
}

struct ScheduleFlags {
    std::size_t epochs = 100;
    std::size_t batch = 32;
    std::size_t patience = 10;

    void add(CLI::App* app) {
        app->add_option("--epochs", epochs, "maximum epochs")->capture_default_str();
        app->add_option("--batch", batch, "batch size")->capture_default_str();
        app->add_option("--patience", patience, "early-stopping patience (0 disables)")->capture_default_str();
    }
    TrainSchedule schedule(std::uint64_t seed) const {
        TrainSchedule s;
        s.max_epochs = epochs;
        s.batch_size = batch;
        s.patience = patience;
        s.seed = seed;
        return s;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentcast: video frame prediction in autoencoder latent space"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "progress messages");
    app.add_flag("-q,--quiet", quiet, "errors only");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "convert an array file or frame directories into a dataset file");
    std::string in_path, in_format = "npy", out_path;
    std::size_t channels = 1, seq_len = 20;
    std::optional<std::size_t> time_axis;
    ingest->add_option("--input", in_path, "array file, or a directory of sequence directories")->required();
    ingest->add_option("--format", in_format, "npy|pnm-dir")->check(CLI::IsMember({"npy", "pnm-dir"}));
    ingest->add_option("--channels", channels, "1 or 3 (pnm-dir)")->check(CLI::IsMember({1, 3}));
    ingest->add_option("--time-axis", time_axis, "override time-axis detection (0 or 1)");
    ingest->add_option("--length", seq_len, "expected sequence length used to detect the time axis");
    ingest->add_option("--out", out_path, "output dataset file")->required();

    // split
    auto* split = app.add_subcommand("split", "sequence-preserving train/val/test split");
    std::string dataset_path;
    double test_fraction = 0.2, val_fraction = 0.2;
    std::uint64_t seed = 0;
    split->add_option("--dataset", dataset_path)->required();
    split->add_option("--test", test_fraction)->capture_default_str();
    split->add_option("--val", val_fraction)->capture_default_str();
    split->add_option("--seed", seed);
    split->add_option("--out", out_path)->required();

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "truncate, crop, resize, binarize, subset");
    std::size_t len = 20, size = 64, stratify = 0;
    bool binarize = false, crop = false;
    std::string continuity_path, labels_path;
    prep->add_option("--in", in_path)->required();
    prep->add_option("--len", len)->capture_default_str();
    prep->add_option("--size", size)->capture_default_str();
    prep->add_flag("--binarize,!--no-binarize", binarize, "Otsu binarization");
    prep->add_flag("--crop-borders", crop, "remove black borders before resizing");
    prep->add_option("--stratify", stratify, "keep m sequences, stratified by label when labels are given");
    prep->add_option("--labels", labels_path, "JSON object sequence id -> label");
    prep->add_option("--seed", seed);
    prep->add_option("--continuity-report", continuity_path);
    prep->add_option("--out", out_path)->required();

    // synth
    auto* syn = app.add_subcommand("synth", "write a procedural dataset");
    std::string synth_kind = "digits";
    std::size_t sequences = 64, border = 0, classes = 10;
    syn->add_option("--kind", synth_kind, "digits|corridor|action")->check(CLI::IsMember({"digits", "corridor", "action"}));
    syn->add_option("--sequences", sequences)->capture_default_str();
    syn->add_option("--length", seq_len)->capture_default_str();
    syn->add_option("--size", size)->capture_default_str();
    syn->add_option("--classes", classes, "action classes")->capture_default_str();
    syn->add_option("--border", border, "letterbox rows (action)");
    syn->add_option("--seed", seed);
    syn->add_option("--labels-out", labels_path, "write id -> label JSON (action)");
    syn->add_option("--out", out_path)->required();

    // train-ae
    auto* train_ae = app.add_subcommand("train-ae", "train an autoencoder on dataset frames");
    std::string dims = "64,128,256", loss = "l1", opt = "adam", split_path;
    double lr = 1e-3;
    ScheduleFlags ae_flags;
    train_ae->add_option("--dataset", dataset_path)->required();
    train_ae->add_option("--dims", dims)->capture_default_str();
    train_ae->add_option("--loss", loss, "l1|mse|msle|rmse")->capture_default_str();
    train_ae->add_option("--opt", opt, "adam|rmsprop")->capture_default_str();
    train_ae->add_option("--lr", lr)->capture_default_str();
    train_ae->add_option("--seed", seed);
    train_ae->add_option("--split", split_path, "split JSON; default 0.2/0.2 split with --seed");
    train_ae->add_option("--out", out_path, "checkpoint directory")->required();
    ae_flags.add(train_ae);

    // extract
    auto* extract = app.add_subcommand("extract", "encode every frame of a dataset");
    std::string ckpt;
    extract->add_option("--ckpt", ckpt)->required();
    extract->add_option("--dataset", dataset_path)->required();
    extract->add_option("--out", out_path)->required();

    // train-seq
    auto* train_seq = app.add_subcommand("train-seq", "train a latent predictor");
    std::string latents_path, kind = "convlstm";
    std::size_t layers = 1, hidden = 128, window = 5;
    ScheduleFlags seq_flags;
    train_seq->add_option("--latents", latents_path)->required();
    train_seq->add_option("--kind", kind, "rnn|lstm|gru|cnn3d|convlstm|crnn")->capture_default_str();
    train_seq->add_option("--layers", layers, "hidden layers (rnn, lstm, gru, convlstm)")->capture_default_str();
    train_seq->add_option("--hidden", hidden)->capture_default_str();
    train_seq->add_option("--window", window)->capture_default_str();
    train_seq->add_option("--loss", loss)->capture_default_str();
    train_seq->add_option("--opt", opt)->capture_default_str();
    train_seq->add_option("--lr", lr)->capture_default_str();
    train_seq->add_option("--seed", seed);
    train_seq->add_option("--split", split_path);
    train_seq->add_option("--out", out_path)->required();
    seq_flags.add(train_seq);

    // predict
    auto* predict = app.add_subcommand("predict", "predict next frames for the test split and decode them");
    std::string ae_ckpt, seq_ckpt, truth_out;
    predict->add_option("--ae", ae_ckpt)->required();
    predict->add_option("--seq", seq_ckpt)->required();
    predict->add_option("--dataset", dataset_path)->required();
    predict->add_option("--split", split_path, "predict only the test ids of this split");
    predict->add_option("--out", out_path, "predicted frames (windows, 1, h, w, c)")->required();
    predict->add_option("--truth-out", truth_out, "matching ground-truth next frames");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score predicted frames against ground truth");
    std::string pred_path, truth_path, metric_list = "mae,mse,ssim,kl";
    bool intervals = false;
    evaluate->add_option("--pred", pred_path)->required();
    evaluate->add_option("--truth", truth_path)->required();
    evaluate->add_option("--metrics", metric_list)->capture_default_str();
    evaluate->add_flag("--intervals", intervals);
    evaluate->add_option("--out", out_path)->required();

    // run
    auto* run = app.add_subcommand("run", "full pipeline (or pixel baseline) from a config JSON");
    std::string config_path;
    bool baseline = false;
    run->add_option("--dataset", dataset_path)->required();
    run->add_option("--config", config_path, "pipeline config JSON")->required();
    run->add_flag("--baseline", baseline, "train the predictor on frames instead of latents");
    run->add_option("--ckpt", ckpt, "save trained models here");
    run->add_option("--out", out_path, "run report JSON")->required();

    // gridsearch
    auto* grid = app.add_subcommand("gridsearch", "grid search with K-fold validation for predictors");
    std::string stage = "seq", grid_path;
    std::size_t kfold = 5, jobs = 1;
    ScheduleFlags grid_flags;
    grid->add_option("--stage", stage, "ae|seq")->check(CLI::IsMember({"ae", "seq"}));
    grid->add_option("--grid", grid_path, "grid JSON; defaults to the built-in grid for the stage");
    grid->add_option("--dataset", dataset_path, "frames (ae) or latents (seq)")->required();
    grid->add_option("--kind", kind)->capture_default_str();
    grid->add_option("--kfold", kfold)->capture_default_str();
    grid->add_option("--jobs", jobs)->capture_default_str();
    grid->add_option("--seed", seed);
    grid->add_option("--split", split_path);
    grid->add_option("--input-size", size, "autoencoder input side")->capture_default_str();
    grid->add_option("--out", out_path, "output directory")->required();
    grid_flags.add(grid);

    // bench
    auto* bench = app.add_subcommand("bench", "per-window inference latency of a predictor");
    std::size_t iters = 100, warmup = 10;
    std::string frames_path, run_path;
    bench->add_option("--ckpt", ckpt)->required();
    auto* lat_opt = bench->add_option("--latents", latents_path);
    auto* frm_opt = bench->add_option("--frames", frames_path);
    lat_opt->excludes(frm_opt);
    bench->add_option("--iters", iters)->capture_default_str();
    bench->add_option("--warmup", warmup)->capture_default_str();
    bench->add_option("--run", run_path, "run report whose stage times fill the total-time fields");
    bench->add_option("--name", kind, "row name in reports");
    bench->add_option("--out", out_path, "benchmark JSON");

    // report
    auto* report = app.add_subcommand("report", "collect run and benchmark JSON files into one report");
    std::string runs_dir, svg_path;
    report->add_option("--runs", runs_dir)->required();
    report->add_option("--out", out_path)->required();
    report->add_option("--svg", svg_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    log::set_level(quiet ? log::Level::Quiet : verbose ? log::Level::Info : log::Level::Warn);

    try {
        if (*ingest) {
            dataio::Dataset ds;
            if (in_format == "npy") {
                dataio::ArrayParseOptions o;
                o.sequence_length = seq_len;
                o.time_axis_override = time_axis;
                ds = dataio::load_dataset(in_path, o);
            } else {
                std::vector<fs::path> dirs;
                for (const auto& e : fs::directory_iterator(in_path))
                    if (e.is_directory()) dirs.push_back(e.path());
                std::sort(dirs.begin(), dirs.end());
                if (dirs.empty()) throw Error(ErrorKind::InsufficientData, "no sequence directories in " + in_path);
                for (const auto& d : dirs) {
                    auto s = dataio::load_frame_directory(d, channels);
                    s.id = d.filename().string();
                    ds.push_back(std::move(s));
                }
            }
            dataio::save_dataset(out_path, ds);
            std::cout << "ingested " << ds.size() << " sequences\n";
        } else if (*split) {
            auto ds = dataio::load_dataset(dataset_path);
            auto s = dataio::split_sequences(dataio::ids_of(ds), test_fraction, val_fraction, seed);
            write_json(out_path, s);
            std::cout << "train " << s.train_ids.size() << ", val " << s.val_ids.size() << ", test "
                      << s.test_ids.size() << '\n';
        } else if (*prep) {
            auto ds = dataio::load_dataset(in_path);
            if (stratify) {
                std::vector<std::string> keep;
                if (!labels_path.empty()) {
                    const auto labels = read_json(labels_path);
                    std::vector<preprocess::LabeledId> l;
                    for (const auto& s : ds) {
                        if (!labels.contains(s.id)) throw Error(ErrorKind::InsufficientData, "no label for " + s.id);
                        l.push_back({s.id, labels[s.id].get<std::string>()});
                    }
                    keep = preprocess::stratified_subset(l, stratify, seed);
                } else {
                    const auto ids = dataio::ids_of(ds);
                    keep = preprocess::random_subset(ids, stratify, seed);
                }
                ds = dataio::select(ds, keep);
            }
            preprocess::PreprocessSpec spec;
            spec.target_length = len;
            spec.target_height = spec.target_width = size;
            spec.binarize = binarize;
            spec.crop_borders = crop;
            json continuity = json::array();
            for (auto& s : ds) {
                s = preprocess::preprocess_sequence(s, spec);
                if (!continuity_path.empty()) continuity.push_back(preprocess::verify_continuity(s));
            }
            dataio::save_dataset(out_path, ds);
            if (!continuity_path.empty()) write_json(continuity_path, continuity);
            std::cout << "preprocessed " << ds.size() << " sequences\n";
        } else if (*syn) {
            synth::SynthOptions o;
            o.sequences = sequences;
            o.length = seq_len;
            o.height = o.width = size;
            o.seed = seed;
            dataio::Dataset ds = synth_kind == "digits"     ? synth::moving_digits(o)
                                 : synth_kind == "corridor" ? synth::corridor_scene(o)
                                                            : synth::action_scene(o, classes, border);
            dataio::save_dataset(out_path, ds);
            if (!labels_path.empty()) {
                json labels = json::object();
                for (const auto& s : ds)
                    if (s.label) labels[s.id] = *s.label;
                write_json(labels_path, labels);
            }
            std::cout << "wrote " << ds.size() << " sequences\n";
        } else if (*train_ae) {
            auto ds = dataio::load_dataset(dataset_path);
            const auto sp = split_for(dataio::ids_of(ds), split_path, seed);
            const auto train = dataio::select(ds, sp.train_ids), val = dataio::select(ds, sp.val_ids);
            autoencoder::AutoencoderConfig cfg;
            cfg.dims = parse_dims(dims);
            cfg.loss = nn::loss_from_name(loss);
            cfg.optimizer.kind = nn::optimizer_from_name(opt);
            cfg.optimizer.learning_rate = lr;
            const auto& f0 = ds.at(0).frames.at(0);
            cfg.input_size = f0.height;
            cfg.input_channels = f0.channels;
            auto ae = autoencoder::Autoencoder::build(cfg, seed);
            nn::Optimizer<float> optimizer(cfg.optimizer);
            auto result = autoencoder::train_autoencoder(ae, frames_of(train), frames_of(val),
                                                         ae_flags.schedule(seed), &optimizer);
            ae.save(out_path, &optimizer, seed, json{{"train_run", result}, {"split", sp}});
            std::cout << "best epoch " << result.best_epoch << ", validation loss " << result.best_val_loss << '\n';
        } else if (*extract) {
            auto ae = autoencoder::Autoencoder::load(ckpt);
            auto ds = dataio::load_dataset(dataset_path);
            auto lat = autoencoder::extract_latents(ae, ds);
            autoencoder::save_latents(out_path, lat);
            const auto& m = lat.at(0).maps.at(0);
            std::cout << "latents (" << lat.size() << ", " << lat[0].maps.size() << ", " << m.height << ", "
                      << m.width << ", " << m.channels << ")\n";
        } else if (*train_seq) {
            auto lat = autoencoder::load_latents(latents_path);
            std::vector<std::string> ids;
            for (const auto& s : lat) ids.push_back(s.id);
            const auto sp = split_for(ids, split_path, seed);
            seq::SeqModelConfig cfg;
            cfg.kind = seq::kind_from_name(kind);
            if (seq::uses_hidden_layers(cfg.kind)) cfg.hidden_layers = layers;
            else cfg.hidden_layers.reset();
            cfg.hidden_size = hidden;
            cfg.window = window;
            cfg.loss = nn::loss_from_name(loss);
            cfg.optimizer.kind = nn::optimizer_from_name(opt);
            cfg.optimizer.learning_rate = lr;
            cfg.validate(lat.at(0).maps.size());
            const auto train = select_latents(lat, sp.train_ids), val = select_latents(lat, sp.val_ids);
            const auto tw = seq::make_windows(train, window);
            const auto vw = val.empty() ? std::vector<seq::WindowSample>{} : seq::make_windows(val, window);
            auto model = seq::SeqModel::build(cfg, seq::shape_of(lat[0].maps[0]), seed);
            nn::Optimizer<float> optimizer(cfg.optimizer);
            auto result = seq::train_seq_model(model, tw, vw, seq_flags.schedule(seed), &optimizer);
            model.save(out_path, &optimizer, seed, json{{"train_run", result}, {"split", sp}});
            std::cout << "best epoch " << result.best_epoch << ", validation loss " << result.best_val_loss << '\n';
        } else if (*predict) {
            auto ae = autoencoder::Autoencoder::load(ae_ckpt);
            auto model = seq::SeqModel::load(seq_ckpt);
            auto ds = dataio::load_dataset(dataset_path);
            if (!split_path.empty()) ds = dataio::select(ds, read_json(split_path).get<dataio::DatasetSplit>().test_ids);
            auto lat = autoencoder::extract_latents(ae, ds);
            const std::size_t k = model.config().window;
            const auto windows = seq::make_windows(lat, k);
            auto maps = model.predict(windows);
            std::vector<const autoencoder::FeatureMap*> ptrs;
            for (const auto& m : maps) ptrs.push_back(&m);
            dataio::Dataset pred, truth;
            const auto frames = ae.decode_batch(ptrs);
            for (std::size_t i = 0; i < windows.size(); ++i) {
                const auto s = static_cast<std::size_t>(windows[i].sequence - lat.data());
                pred.push_back({ds[s].id + "/" + std::to_string(windows[i].start + k), {frames[i]}, std::nullopt});
                truth.push_back({pred.back().id, {ds[s].frames[windows[i].start + k]}, std::nullopt});
            }
            dataio::save_dataset(out_path, pred);
            if (!truth_out.empty()) dataio::save_dataset(truth_out, truth);
            std::cout << "predicted " << pred.size() << " frames\n";
        } else if (*evaluate) {
            dataio::ArrayParseOptions o;
            o.time_axis_override = 1;
            const auto pred = dataio::load_dataset(pred_path, o), truth = dataio::load_dataset(truth_path, o);
            std::vector<const dataio::Frame*> p, t;
            for (const auto& s : pred)
                for (const auto& f : s.frames) p.push_back(&f);
            for (const auto& s : truth)
                for (const auto& f : s.frames) t.push_back(&f);
            if (p.size() != t.size() || p.empty())
                throw Error(ErrorKind::Shape, "prediction and truth frame counts differ or are zero");
            std::set<std::string> wanted;
            std::stringstream ss(metric_list);
            for (std::string m; std::getline(ss, m, ',');) {
                if (m != "mae" && m != "mse" && m != "ssim" && m != "kl") throw Error(ErrorKind::Usage, "unknown metric " + m);
                wanted.insert(m);
            }
            json out;
            std::vector<double> ssim;
            double mae = 0, mse = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (wanted.count("mae")) mae += metrics::mae(*t[i], *p[i]);
                if (wanted.count("mse")) mse += metrics::mse(*t[i], *p[i]);
                if (wanted.count("ssim") || intervals) ssim.push_back(metrics::ssim(*t[i], *p[i]));
            }
            const double n = static_cast<double>(p.size());
            out["count"] = p.size();
            if (wanted.count("mae")) out["mae"] = mae / n;
            if (wanted.count("mse")) out["mse"] = mse / n;
            if (!ssim.empty()) {
                out["ssim"] = std::accumulate(ssim.begin(), ssim.end(), 0.0) / n;
                out["ssim_per_frame"] = ssim;
            }
            if (wanted.count("kl")) {
                std::vector<float> values;
                for (const auto* f : p) values.insert(values.end(), f->data.begin(), f->data.end());
                auto stats = metrics::latent_stats(values, p[0]->size());
                metrics::LatentStats live;
                for (std::size_t u = 0; u < stats.mean.size(); ++u)
                    if (stats.stddev[u] > 0) live.mean.push_back(stats.mean[u]), live.stddev.push_back(stats.stddev[u]);
                out["kl_per_unit"] = live.mean.empty() ? json(nullptr) : json(metrics::kl_gauss(live) / live.mean.size());
                out["kl_degenerate_units"] = stats.degenerate.size();
            }
            if (intervals) out["intervals"] = metrics::bucketize_intervals(ssim);
            write_json(out_path, out);
            std::cout << out.dump(2).substr(0, 400) << '\n';
        } else if (*run) {
            auto ds = dataio::load_dataset(dataset_path);
            auto cfg = read_json(config_path).get<experiment::PipelineConfig>();
            experiment::HygieneLog hl;
            auto r = baseline ? experiment::run_baseline(ds, cfg, &hl)
                              : experiment::run_pipeline(ds, cfg, &hl, ckpt.empty() ? std::nullopt : std::optional<fs::path>(ckpt));
            hl.assert_clean();
            write_json(out_path, r);
            std::cout << r.name << ": test MSE " << r.test_loss << ", SSIM " << r.prediction.ssim << '\n';
        } else if (*grid) {
            fs::create_directories(out_path);
            std::vector<experiment::GridResult> results;
            if (stage == "ae") {
                auto ds = dataio::load_dataset(dataset_path);
                const auto sp = split_for(dataio::ids_of(ds), split_path, seed);
                const auto train = dataio::select(ds, sp.train_ids), val = dataio::select(ds, sp.val_ids);
                autoencoder::AutoencoderConfig base;
                base.input_size = ds.at(0).frames.at(0).height;
                base.input_channels = ds[0].frames[0].channels;
                const auto g = grid_path.empty() ? experiment::autoencoder_grid() : experiment::HyperGrid::load(grid_path);
                results = experiment::grid_search_autoencoder(g, base, frames_of(train), frames_of(val),
                                                              grid_flags.schedule(seed), seed, jobs);
            } else {
                auto lat = autoencoder::load_latents(dataset_path);
                std::vector<std::string> ids;
                for (const auto& s : lat) ids.push_back(s.id);
                const auto sp = split_for(ids, split_path, seed);
                // Folds rotate over training and validation sequences; the test ids stay out.
                std::vector<std::string> pool = sp.train_ids;
                pool.insert(pool.end(), sp.val_ids.begin(), sp.val_ids.end());
                seq::SeqModelConfig base;
                base.kind = seq::kind_from_name(kind);
                const auto g = grid_path.empty() ? experiment::predictor_grid() : experiment::HyperGrid::load(grid_path);
                results = experiment::grid_search_predictor(g, base, select_latents(lat, pool), kfold,
                                                            grid_flags.schedule(seed), seed, jobs);
            }
            const auto best = experiment::best_result(results);
            write_json(fs::path(out_path) / "results.json", results);
            write_json(fs::path(out_path) / "best.json", results[best]);
            std::cout << results.size() << " configurations, best validation MSE " << results[best].val_mse << '\n';
        } else if (*bench) {
            auto model = seq::SeqModel::load(ckpt);
            autoencoder::LatentDataset data;
            if (!latents_path.empty()) data = autoencoder::load_latents(latents_path);
            else if (!frames_path.empty()) data = seq::frames_as_maps(dataio::load_dataset(frames_path));
            else throw Error(ErrorKind::Usage, "bench needs --latents or --frames");
            const auto& maps = data.at(0).maps;
            if (maps.size() < model.config().window) throw Error(ErrorKind::Window, "first sequence is shorter than the window");
            auto b = experiment::benchmark_inference(
                model, std::span<const autoencoder::FeatureMap>(maps.data(), model.config().window), warmup, iters);
            if (bench->count("--name")) b.name = kind;
            if (!run_path.empty()) {
                const auto r = read_json(run_path).get<experiment::RunReport>();
                experiment::attach_stage_times(b, r.times);
                if (!bench->count("--name")) b.name = r.name;
            }
            if (!out_path.empty()) write_json(out_path, b);
            std::cout << "median " << b.median_s << " s, mean " << b.mean_s << " s over " << b.iterations
                      << " iterations (" << b.hardware << ")\n";
        } else if (*report) {
            experiment::Report rep;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(runs_dir))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const auto j = read_json(f);
                if (j.contains("approach")) rep.runs.push_back(j.get<experiment::RunReport>());
                else if (j.contains("iterations") && j.contains("median_s")) rep.benches.push_back(j.get<experiment::BenchReport>());
            }
            if (rep.runs.empty()) throw Error(ErrorKind::InsufficientData, "no run reports in " + runs_dir);
            experiment::emit_report(rep, out_path, svg_path.empty() ? std::nullopt : std::optional<fs::path>(svg_path));
            std::cout << experiment::render_table(experiment::comparison_table(rep));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
