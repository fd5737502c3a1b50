#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "latentcast/error.hpp"
#include "latentcast/experiment.hpp"

namespace latentcast::experiment {

namespace {

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& v) {
    if (j.contains(key) && !j[key].is_null()) v = j[key].get<T>();
    else v.reset();
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

void to_json(nlohmann::json& j, const FrameScores& s) {
    j = nlohmann::json{{"mae", s.mae}, {"mse", s.mse}, {"ssim", s.ssim}, {"count", s.count}};
}

void from_json(const nlohmann::json& j, FrameScores& s) {
    s.mae = j.at("mae").get<double>();
    s.mse = j.at("mse").get<double>();
    s.ssim = j.at("ssim").get<double>();
    s.count = j.at("count").get<std::size_t>();
}

void to_json(nlohmann::json& j, const RunReport& r) {
    j = nlohmann::json{{"name", r.name},
                       {"approach", r.approach},
                       {"config", r.config},
                       {"seed", r.seed},
                       {"split", r.split},
                       {"predictor_run", r.seq_run},
                       {"losses", {{"train", r.train_loss}, {"validation", r.val_loss}, {"test", r.test_loss}}},
                       {"prediction", r.prediction},
                       {"ssim_scores", r.ssim_scores},
                       {"times", {{"stage1_s", r.times.stage1}, {"stage2_s", r.times.stage2}, {"total_s", r.times.total()}}}};
    put_optional(j, "autoencoder_run", r.ae_run);
    put_optional(j, "reconstruction", r.reconstruction);
    put_optional(j, "kl_per_unit", r.kl_per_unit);
    put_optional(j, "folds", r.folds);
    put_optional(j, "intervals", r.intervals);
    put_optional(j, "checkpoint", r.checkpoint);
}

void from_json(const nlohmann::json& j, RunReport& r) {
    r = RunReport{};
    r.name = j.at("name").get<std::string>();
    r.approach = j.at("approach").get<std::string>();
    r.config = j.at("config");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.split = j.at("split").get<dataio::DatasetSplit>();
    r.seq_run = j.at("predictor_run").get<TrainRun>();
    const auto& l = j.at("losses");
    r.train_loss = l.at("train").get<double>();
    r.val_loss = l.at("validation").get<double>();
    r.test_loss = l.at("test").get<double>();
    r.prediction = j.at("prediction").get<FrameScores>();
    r.ssim_scores = j.at("ssim_scores").get<std::vector<double>>();
    r.times.stage1 = j.at("times").at("stage1_s").get<double>();
    r.times.stage2 = j.at("times").at("stage2_s").get<double>();
    get_optional(j, "autoencoder_run", r.ae_run);
    get_optional(j, "reconstruction", r.reconstruction);
    get_optional(j, "kl_per_unit", r.kl_per_unit);
    get_optional(j, "folds", r.folds);
    get_optional(j, "intervals", r.intervals);
    get_optional(j, "checkpoint", r.checkpoint);
}

std::vector<TableRow> comparison_table(const Report& report) {
    std::vector<TableRow> rows;
    for (const auto& r : report.runs) {
        TableRow row;
        row.name = r.name;
        row.approach = r.approach;
        row.kind = r.config.contains("predictor") ? r.config["predictor"].value("kind", "") : "";
        row.test_loss = r.test_loss;
        row.folds = r.folds;
        row.mse = r.prediction.mse;
        row.mae = r.prediction.mae;
        row.ssim = r.prediction.ssim;
        for (const auto& b : report.benches)
            if (b.name == r.name) row.seconds_per_iteration = b.median_s;
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) { return a.ssim > b.ssim; });
    return rows;
}

std::string render_table(std::span<const TableRow> rows) {
    std::ostringstream out;
    out << "Model\tApproach\tTest MSE\tFold MSE\tFrame MSE\tFrame MAE\tSSIM\tTime/iter\n";
    for (const auto& r : rows) {
        out << r.name << '\t' << r.approach << '\t' << fixed(r.test_loss, 4) << '\t'
            << (r.folds ? fixed(r.folds->mean, 4) + " ± " + fixed(r.folds->stddev, 4) : std::string("-")) << '\t'
            << fixed(r.mse, 4) << '\t' << fixed(r.mae, 4) << '\t' << fixed(r.ssim, 4) << '\t'
            << (r.seconds_per_iteration ? fixed(*r.seconds_per_iteration, 4) + " s" : std::string("-")) << '\n';
    }
    return out.str();
}

nlohmann::json report_to_json(const Report& report) {
    nlohmann::json j;
    j["format"] = "latentcast-report";
    j["version"] = 1;
    j["runs"] = report.runs;
    if (!report.benches.empty()) j["benchmarks"] = report.benches;
    const auto rows = comparison_table(report);
    auto& table = j["comparison"];
    table = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row{{"name", r.name}, {"approach", r.approach}, {"test_loss", r.test_loss},
                           {"mse", r.mse},   {"mae", r.mae},           {"ssim", r.ssim}};
        if (r.folds) row["fold_mean"] = r.folds->mean, row["fold_std"] = r.folds->stddev;
        if (r.seconds_per_iteration) row["seconds_per_iteration"] = *r.seconds_per_iteration;
        table.push_back(row);
    }
    j["comparison_text"] = render_table(rows);
    return j;
}

Report report_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "latentcast-report") throw Error(ErrorKind::Format, "not a latentcast report");
    Report r;
    r.runs = j.at("runs").get<std::vector<RunReport>>();
    if (j.contains("benchmarks")) r.benches = j["benchmarks"].get<std::vector<BenchReport>>();
    return r;
}

void emit_report(const Report& report, const std::filesystem::path& out, const std::optional<std::filesystem::path>& svg) {
    if (report.runs.empty()) throw Error(ErrorKind::InsufficientData, "a report needs at least one run");
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream f(out);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + out.string());
    f << report_to_json(report).dump(2) << '\n';
    if (!f) throw Error(ErrorKind::Io, "write failed for " + out.string());
    if (svg) {
        std::vector<double> scores;
        for (const auto& r : report.runs) scores.insert(scores.end(), r.ssim_scores.begin(), r.ssim_scores.end());
        std::ofstream s(*svg);
        if (!s) throw Error(ErrorKind::Io, "cannot write " + svg->string());
        s << ssim_histogram_svg(scores, 20, "Per-frame SSIM");
    }
}

Report load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

std::string ssim_histogram_svg(std::span<const double> scores, std::size_t bins, const std::string& title) {
    bins = std::max<std::size_t>(1, bins);
    std::vector<std::size_t> counts(bins, 0);
    double lo = 0.0, hi = 1.0;
    if (!scores.empty()) {
        lo = *std::min_element(scores.begin(), scores.end());
        hi = *std::max_element(scores.begin(), scores.end());
        if (hi <= lo) hi = lo + 1e-9;
        for (double s : scores) {
            auto b = static_cast<std::size_t>((s - lo) / (hi - lo) * static_cast<double>(bins));
            counts[std::min(b, bins - 1)]++;
        }
    }
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
    constexpr double W = 640, H = 360, left = 50, bottom = 40, top = 30;
    const double bw = (W - left - 10) / static_cast<double>(bins);
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << " (n=" << scores.size() << ")</text>\n";
    for (std::size_t b = 0; b < bins; ++b) {
        const double h = (H - bottom - top) * static_cast<double>(counts[b]) / static_cast<double>(peak);
        o << "<rect x=\"" << left + b * bw << "\" y=\"" << H - bottom - h << "\" width=\"" << bw - 1 << "\" height=\""
          << h << "\" fill=\"#4477aa\"><title>" << counts[b] << "</title></rect>\n";
    }
    o << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - 10 << "\" y2=\"" << H - bottom
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << fixed(lo, 3) << "</text>\n";
    o << "<text x=\"" << W - 10 << "\" y=\"" << H - bottom + 16
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fixed(hi, 3) << "</text>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << peak << "</text>\n";
    o << "</svg>\n";
    return o.str();
}

} // namespace latentcast::experiment
