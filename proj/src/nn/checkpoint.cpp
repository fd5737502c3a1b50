#include "latentcast/nn/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "latentcast/dataio.hpp"
#include "latentcast/error.hpp"

namespace latentcast::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> parameter_names(const Network<float>& net) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < net.specs().size(); ++i)
        for (const auto& ps : param_shapes(net.specs()[i])) names.push_back(std::to_string(i) + "." + ps.name);
    return names;
}

std::string file_name(const std::string& prefix, const std::string& name) {
    std::string s = prefix + "_" + name;
    std::replace(s.begin(), s.end(), '.', '_');
    return s + ".npy";
}

void store(const fs::path& dir, const std::string& file, const Shape& shape, std::span<const float> values) {
    dataio::write_array_file(dir / file, shape, values);
}

std::vector<float> fetch(const fs::path& dir, const std::string& file, const Shape& shape) {
    auto a = dataio::read_array_file(dir / file);
    if (a.shape != shape)
        throw Error(ErrorKind::Format, file + ": stored shape " + shape_string(a.shape) + " does not match " +
                                           shape_string(shape));
    return std::move(a.values);
}

} // namespace

Optimizer<float> Checkpoint::make_optimizer() const {
    if (!optimizer) throw Error(ErrorKind::State, "checkpoint carries no optimizer state");
    Optimizer<float> opt(*optimizer);
    opt.restore(step, slots);
    return opt;
}

void save_checkpoint(const fs::path& dir, const Network<float>& network, const Optimizer<float>* optimizer,
                     std::uint64_t seed, const json& extra) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    auto& net = const_cast<Network<float>&>(network);

    json manifest;
    manifest["format"] = "latentcast-checkpoint";
    manifest["version"] = 1;
    manifest["input_shape"] = network.input_shape();
    manifest["layers"] = network.specs();
    manifest["seed"] = seed;
    manifest["extra"] = extra;

    const auto names = parameter_names(network);
    auto params = net.parameters();
    json pj = json::array();
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string file = file_name("param", names[k]);
        store(dir, file, params[k]->value.shape(), params[k]->value.values());
        pj.push_back({{"name", names[k]}, {"file", file}});
    }
    manifest["parameters"] = pj;

    json bj = json::array();
    std::size_t bi = 0;
    for (auto& b : net.buffers()) {
        const std::string file = file_name("buffer" + std::to_string(bi++), b.name);
        store(dir, file, b.value->shape(), b.value->values());
        bj.push_back({{"name", b.name}, {"file", file}});
    }
    manifest["buffers"] = bj;

    if (optimizer) {
        json oj;
        oj["config"] = optimizer->config();
        oj["step"] = optimizer->steps();
        json sj = json::array();
        const auto& slots = optimizer->slots();
        for (std::size_t k = 0; k < slots.size(); ++k) {
            json entry = json::object();
            const Shape shape = params[k]->value.shape();
            if (!slots[k].first.empty()) {
                entry["first"] = file_name("opt_m", names[k]);
                store(dir, entry["first"], shape, slots[k].first);
            }
            if (!slots[k].second.empty()) {
                entry["second"] = file_name("opt_v", names[k]);
                store(dir, entry["second"], shape, slots[k].second);
            }
            sj.push_back(entry);
        }
        oj["slots"] = sj;
        manifest["optimizer"] = oj;
    }

    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error(ErrorKind::Io, "cannot read " + (dir / "manifest.json").string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "manifest.json: " + std::string(e.what()));
    }
    try {
        Checkpoint cp;
        cp.network = Network<float>(manifest.at("layers").get<std::vector<LayerSpec>>(),
                                    manifest.at("input_shape").get<Shape>());
        cp.seed = manifest.value("seed", std::uint64_t{0});
        cp.extra = manifest.value("extra", json::object());
        auto params = cp.network.parameters();
        const auto& pj = manifest.at("parameters");
        if (pj.size() != params.size()) throw Error(ErrorKind::Format, "checkpoint parameter count mismatch");
        for (std::size_t k = 0; k < params.size(); ++k)
            params[k]->value.assign(fetch(dir, pj[k].at("file"), params[k]->value.shape()));
        auto buffers = cp.network.buffers();
        const auto& bj = manifest.at("buffers");
        if (bj.size() != buffers.size()) throw Error(ErrorKind::Format, "checkpoint buffer count mismatch");
        for (std::size_t k = 0; k < buffers.size(); ++k)
            buffers[k].value->assign(fetch(dir, bj[k].at("file"), buffers[k].value->shape()));
        if (manifest.contains("optimizer")) {
            const auto& oj = manifest["optimizer"];
            cp.optimizer = oj.at("config").get<OptimizerConfig>();
            cp.step = oj.at("step").get<std::uint64_t>();
            for (std::size_t k = 0; k < oj.at("slots").size(); ++k) {
                const auto& e = oj["slots"][k];
                OptimizerSlots<float> s;
                const Shape shape = params.at(k)->value.shape();
                if (e.contains("first")) s.first = fetch(dir, e["first"], shape);
                if (e.contains("second")) s.second = fetch(dir, e["second"], shape);
                cp.slots.push_back(std::move(s));
            }
        }
        return cp;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "manifest.json: " + std::string(e.what()));
    }
}

} // namespace latentcast::nn
