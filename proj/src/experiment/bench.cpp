#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <thread>

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

} // namespace

void to_json(nlohmann::json& j, const BenchReport& b) {
    j = nlohmann::json{{"name", b.name},         {"warmup", b.warmup}, {"iterations", b.iterations},
                       {"median_s", b.median_s}, {"mean_s", b.mean_s}, {"min_s", b.min_s},
                       {"max_s", b.max_s},       {"hardware", b.hardware}};
    put_optional(j, "stage2_s", b.stage2_s);
    put_optional(j, "stage13_s", b.stage13_s);
    put_optional(j, "total_s", b.total_s);
    j["energy_joules"] = b.energy_joules ? nlohmann::json(*b.energy_joules) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, BenchReport& b) {
    b.name = j.value("name", std::string());
    b.warmup = j.at("warmup").get<std::size_t>();
    b.iterations = j.at("iterations").get<std::size_t>();
    b.median_s = j.at("median_s").get<double>();
    b.mean_s = j.at("mean_s").get<double>();
    b.min_s = j.at("min_s").get<double>();
    b.max_s = j.at("max_s").get<double>();
    b.hardware = j.value("hardware", std::string());
    get_optional(j, "stage2_s", b.stage2_s);
    get_optional(j, "stage13_s", b.stage13_s);
    get_optional(j, "total_s", b.total_s);
    get_optional(j, "energy_joules", b.energy_joules);
}

std::string hardware_descriptor() {
    std::string model;
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);)
        if (line.rfind("model name", 0) == 0) {
            model = line.substr(line.find(':') + 2);
            break;
        }
    if (model.empty()) model = "unknown CPU";
    return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) +
           " hardware threads, single-threaded inference";
}

BenchReport benchmark(const std::function<void()>& iteration, std::size_t warmup, std::size_t iterations,
                      const std::string& name) {
    if (warmup < 5) throw Error(ErrorKind::Config, "benchmark needs at least 5 warmup iterations");
    if (iterations < 30) throw Error(ErrorKind::Config, "benchmark needs at least 30 timed iterations");
    for (std::size_t i = 0; i < warmup; ++i) iteration();
    std::vector<double> t(iterations);
    for (auto& s : t) {
        const auto t0 = std::chrono::steady_clock::now();
        iteration();
        s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    BenchReport b;
    b.name = name;
    b.warmup = warmup;
    b.iterations = iterations;
    b.mean_s = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
    std::sort(t.begin(), t.end());
    const std::size_t n = t.size();
    b.median_s = n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
    b.min_s = t.front();
    b.max_s = t.back();
    b.hardware = hardware_descriptor();
    return b;
}

BenchReport benchmark_inference(seq::SeqModel& model, std::span<const autoencoder::FeatureMap> inputs,
                                std::size_t warmup, std::size_t iterations) {
    if (inputs.size() != model.config().window)
        throw Error(ErrorKind::Shape, "benchmark inputs must be one window");
    volatile float sink = 0.0f;
    auto b = benchmark([&] { sink = sink + model.predict_next(inputs).data[0]; }, warmup, iterations,
                       seq::kind_name(model.config().kind));
    return b;
}

void attach_stage_times(BenchReport& bench, const StageTimes& times) {
    bench.stage2_s = times.stage2;
    bench.stage13_s = times.stage1;
    bench.total_s = times.stage2 + times.stage1;
}

} // namespace latentcast::experiment
