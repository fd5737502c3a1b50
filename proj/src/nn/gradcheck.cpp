#include "latentcast/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace latentcast::nn {

namespace {

std::vector<std::size_t> pick(std::size_t n, std::size_t samples, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (samples == 0 || samples >= n) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(samples);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

GradCheckReport gradient_check(Network<double>& net, const Tensor<double>& x, const Tensor<double>& target,
                               LossKind loss_kind, const GradCheckOptions& options) {
    GradCheckReport report;
    std::mt19937_64 rng(options.seed);

    net.zero_grad();
    const Tensor<double> pred = net.forward(x, Mode::Train);
    const auto lg = loss_with_grad(loss_kind, pred, target);
    const Tensor<double> gx = net.backward(lg.grad);

    auto eval = [&](const Tensor<double>& input) { return loss(loss_kind, net.forward(input, Mode::Train), target); };

    auto record = [&](double analytic, double numeric, const std::string& where) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (report.worst.empty() || rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst = where;
        }
    };

    auto params = net.parameters();
    std::vector<Tensor<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k]->value;
        for (std::size_t i : pick(value.size(), options.samples_per_tensor, rng)) {
            const double saved = value[i];
            value[i] = saved + options.epsilon;
            const double up = eval(x);
            value[i] = saved - options.epsilon;
            const double down = eval(x);
            value[i] = saved;
            record(analytic[k][i], (up - down) / (2.0 * options.epsilon),
                   "param" + std::to_string(k) + "." + params[k]->name + "[" + std::to_string(i) + "]");
        }
    }
    if (options.check_input) {
        Tensor<double> xp = x;
        for (std::size_t i : pick(x.size(), options.samples_per_tensor, rng)) {
            xp[i] = x[i] + options.epsilon;
            const double up = eval(xp);
            xp[i] = x[i] - options.epsilon;
            const double down = eval(xp);
            xp[i] = x[i];
            record(gx[i], (up - down) / (2.0 * options.epsilon), "input[" + std::to_string(i) + "]");
        }
    }
    return report;
}

} // namespace latentcast::nn
