#pragma once

// Reference implementations kept deliberately naive and independent of the
// library code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "driftlab/nn/graph.hpp"
#include "driftlab/nn/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Gaussian-weighted average of displacements with a plain double loop, no
// exponent shift, accumulated in long double.
inline std::vector<double> interpolate(const Matrix& positions, const Matrix& displacements,
                                       const std::vector<double>& query, double sigma) {
    const std::size_t d = query.size();
    long double mass = 0.0L;
    std::vector<long double> acc(d, 0.0L);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        long double sq = 0.0L;
        for (std::size_t k = 0; k < d; ++k) {
            const long double diff = static_cast<long double>(positions[i][k]) - query[k];
            sq += diff * diff;
        }
        const long double w = std::exp(-sq / (2.0L * sigma * sigma));
        mass += w;
        for (std::size_t k = 0; k < d; ++k) acc[k] += w * displacements[i][k];
    }
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<double>(acc[k] / mass);
    return out;
}

inline Matrix to_matrix(const driftlab::nn::Tensor& t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    return m;
}

inline std::map<int, std::vector<double>> group_mean(const Matrix& x, const std::vector<int>& labels) {
    std::map<int, std::vector<double>> sum;
    std::map<int, int> count;
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto& s = sum[labels[i]];
        if (s.empty()) s.assign(x[i].size(), 0.0);
        for (std::size_t k = 0; k < x[i].size(); ++k) s[k] += x[i][k];
        ++count[labels[i]];
    }
    for (auto& [c, s] : sum)
        for (double& v : s) v /= count[c];
    return sum;
}

// a[k][j], 0-based, lower triangle filled.
inline double avg_incremental_accuracy(const Matrix& a, std::size_t k) {
    double s = 0.0;
    for (std::size_t j = 1; j <= k; ++j) s += a[k - 1][j - 1];
    return s / static_cast<double>(k);
}

inline double avg_forgetting(const Matrix& a, std::size_t k) {
    double total = 0.0;
    for (std::size_t j = 1; j < k; ++j) {
        double best = -1e300;
        for (std::size_t l = j; l < k; ++l) best = std::max(best, a[l - 1][j - 1] - a[k - 1][j - 1]);
        total += best;
    }
    return total / static_cast<double>(k - 1);
}

// Central-difference check of every input of a scalar graph function.
// `build` receives the graph and one Var per tensor in `inputs` (bound as
// parameters) and returns the scalar loss.
struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

using GraphFn = std::function<driftlab::nn::Var(driftlab::nn::Graph&, const std::vector<driftlab::nn::Var>&)>;

inline double eval(const GraphFn& build, std::vector<driftlab::nn::Tensor>& inputs) {
    driftlab::nn::Graph g;
    std::vector<driftlab::nn::Var> vars;
    for (auto& t : inputs) vars.push_back(g.constant(t));
    return g.value(build(g, vars)).item();
}

inline GradCheck check_gradients(const GraphFn& build, std::vector<driftlab::nn::Tensor> inputs, double h = 1e-6) {
    std::vector<std::vector<double>> analytic;
    {
        driftlab::nn::Graph g;
        std::vector<driftlab::nn::Var> vars;
        for (auto& t : inputs) {
            t.zero_grad();
            vars.push_back(g.parameter(t));
        }
        g.backward(build(g, vars));
        for (auto& t : inputs) {
            const auto gr = t.grad();
            analytic.emplace_back(gr.begin(), gr.end());
            t.drop_grad();
        }
    }
    GradCheck out;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        for (std::size_t i = 0; i < inputs[p].size(); ++i) {
            const double orig = inputs[p][i];
            inputs[p][i] = orig + h;
            const double up = eval(build, inputs);
            inputs[p][i] = orig - h;
            const double down = eval(build, inputs);
            inputs[p][i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[p][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            ++out.checked;
        }
    }
    out.max_rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-7});
    return out;
}

inline driftlab::nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    driftlab::nn::Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : t.data()) v = n(rng);
    return t;
}

}  // namespace oracle
