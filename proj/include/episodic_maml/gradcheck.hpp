#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "episodic_maml/episodes.hpp"
#include "episodic_maml/maml.hpp"
#include "episodic_maml/mlp.hpp"
#include "episodic_maml/rng.hpp"

namespace episodic_maml {

// Independent derivative estimates by central finite differences. These only
// evaluate the loss (or the gradient, for curvature), so they cross-check the
// backpropagation path rather than reusing it.

inline std::vector<double> finite_difference_gradient(const MlpParameters& params,
                                                      const LabeledBatch& batch) {
    std::vector<double> grad(params.size());
    MlpParameters probe = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(params.values[j]));
        probe.values[j] = params.values[j] + h;
        const double up = loss(probe, batch);
        probe.values[j] = params.values[j] - h;
        const double down = loss(probe, batch);
        probe.values[j] = params.values[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Dense P x P Hessian, column j by central differencing of loss_gradient.
inline std::vector<double> finite_difference_hessian(const MlpParameters& params,
                                                     const LabeledBatch& batch) {
    const std::size_t p = params.size();
    std::vector<double> hessian(p * p);
    MlpParameters probe = params;
    for (std::size_t j = 0; j < p; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(params.values[j]));
        probe.values[j] = params.values[j] + h;
        const auto g_up = loss_gradient(probe, batch).grad;
        probe.values[j] = params.values[j] - h;
        const auto g_down = loss_gradient(probe, batch).grad;
        probe.values[j] = params.values[j];
        for (std::size_t i = 0; i < p; ++i)
            hessian[i * p + j] = (g_up[i] - g_down[i]) / (2.0 * h);
    }
    return hessian;
}

inline std::vector<double> dense_matvec(const std::vector<double>& matrix,
                                        const std::vector<double>& v) {
    const std::size_t p = v.size();
    std::vector<double> out(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) out[i] += matrix[i * p + j] * v[j];
    return out;
}

// The scalar meta-objective of a task batch: mean post-adaptation query loss.
inline double meta_objective(const MlpParameters& theta, const std::vector<Episode>& episodes,
                             double alpha, int steps) {
    double total = 0.0;
    for (const auto& ep : episodes) {
        const auto adapted = inner_adapt(theta, ep.support, steps, alpha);
        total += loss(adapted, ep.query);
    }
    return total / static_cast<double>(episodes.size());
}

inline std::vector<double> finite_difference_meta_gradient(const MlpParameters& theta,
                                                           const std::vector<Episode>& episodes,
                                                           double alpha, int steps) {
    std::vector<double> grad(theta.size());
    MlpParameters probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta.values[j]));
        probe.values[j] = theta.values[j] + h;
        const double up = meta_objective(probe, episodes, alpha, steps);
        probe.values[j] = theta.values[j] - h;
        const double down = meta_objective(probe, episodes, alpha, steps);
        probe.values[j] = theta.values[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

// ||a - b||inf scaled by ||b||inf (the reference), floored to dodge 0/0
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        diff = std::max(diff, std::abs(a[j] - b[j]));
        ref = std::max(ref, std::abs(b[j]));
    }
    return diff / std::max(ref, 1e-12);
}

// test fixtures: a small random net in general position and a random batch
inline MlpParameters random_parameters(const MlpArchitecture& arch, std::uint64_t seed) {
    auto params = init_parameters(arch, seed);
    Rng rng(derive_seed(seed, 0xfeed));
    for (double& v : params.values) v += 0.3 * rng.normal();
    return params;
}

inline LabeledBatch random_batch(Rng& rng, int n, int dim, int n_classes) {
    LabeledBatch batch;
    batch.feature_dim = dim;
    batch.features.reserve(static_cast<std::size_t>(n) * dim);
    for (int i = 0; i < n * dim; ++i) batch.features.push_back(rng.normal());
    for (int i = 0; i < n; ++i) batch.labels.push_back(static_cast<int>(rng.index(n_classes)));
    return batch;
}

struct GradCheckReport {
    double max_gradient_rel_error = 0.0;
    double max_hvp_rel_error = 0.0;
    double max_hvp_symmetry_error = 0.0;

    static constexpr double kGradientTolerance = 1e-5;
    static constexpr double kHvpTolerance = 1e-4;
    static constexpr double kSymmetryTolerance = 1e-6;

    bool passed() const {
        return max_gradient_rel_error <= kGradientTolerance &&
               max_hvp_rel_error <= kHvpTolerance &&
               max_hvp_symmetry_error <= kSymmetryTolerance;
    }
};

// The numeric self-check suite: backprop vs finite differences on a spread of
// small random nets (both activations), and HVP vs an explicit brute-force
// Hessian, including the symmetry identity v'Hu = u'Hv.
inline GradCheckReport run_gradcheck(std::uint64_t seed = 20240501) {
    GradCheckReport report;
    Rng rng(seed);

    for (int trial = 0; trial < 20; ++trial) {
        MlpArchitecture arch;
        arch.input_dim = 2 + static_cast<int>(rng.index(4));
        arch.hidden_widths = {3 + static_cast<int>(rng.index(5))};
        if (rng.index(2) == 0) arch.hidden_widths.push_back(3 + static_cast<int>(rng.index(4)));
        arch.output_dim = 2 + static_cast<int>(rng.index(3));
        arch.activation = trial % 2 == 0 ? Activation::relu : Activation::tanh;

        const auto params = random_parameters(arch, rng.next_u64());
        const auto batch = random_batch(rng, 3 + static_cast<int>(rng.index(5)),
                                        arch.input_dim, arch.output_dim);
        const auto analytic = loss_gradient(params, batch).grad;
        const auto numeric = finite_difference_gradient(params, batch);
        report.max_gradient_rel_error =
            std::max(report.max_gradient_rel_error, max_relative_error(analytic, numeric));
    }

    for (int trial = 0; trial < 10; ++trial) {
        MlpArchitecture arch;
        arch.input_dim = 2 + static_cast<int>(rng.index(2));
        arch.hidden_widths = {3 + static_cast<int>(rng.index(3))};
        arch.output_dim = 2;
        arch.activation = Activation::tanh;  // smooth, so curvature probes are well posed

        const auto params = random_parameters(arch, rng.next_u64());
        const auto batch = random_batch(rng, 4, arch.input_dim, arch.output_dim);
        const auto hessian = finite_difference_hessian(params, batch);

        std::vector<double> u(params.size()), v(params.size());
        for (auto& x : u) x = rng.normal();
        for (auto& x : v) x = rng.normal();

        const auto hv = hessian_vector_product(params, batch, v);
        report.max_hvp_rel_error =
            std::max(report.max_hvp_rel_error, max_relative_error(hv, dense_matvec(hessian, v)));

        const auto hu = hessian_vector_product(params, batch, u);
        double vhu = 0.0, uhv = 0.0;
        for (std::size_t j = 0; j < params.size(); ++j) {
            vhu += v[j] * hu[j];
            uhv += u[j] * hv[j];
        }
        const double sym = std::abs(vhu - uhv) / std::max({std::abs(vhu), std::abs(uhv), 1e-12});
        report.max_hvp_symmetry_error = std::max(report.max_hvp_symmetry_error, sym);
    }
    return report;
}

}  // namespace episodic_maml
