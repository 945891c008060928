#include "driftlab/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "driftlab/error.hpp"

namespace driftlab::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t) {
    return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(std::span<double> buf, std::size_t rows, std::size_t cols) {
    return MatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatMap as_matrix(std::span<const double> buf, std::size_t rows, std::size_t cols) {
    return ConstMatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 input, got " + shape_string(t.shape()));
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
    }
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    Tensor out(Shape{n, m});
    as_matrix(out.data(), n, m).noalias() = as_matrix(av) * as_matrix(bv);
    return g.record(std::move(out), {a.id, b.id}, [n, k, m](Graph& gr, std::size_t self) {
        const auto& in = gr.inputs(self);
        const auto dy = as_matrix(gr.upstream(self), n, m);
        if (auto da = gr.accumulator(in[0]); !da.empty()) {
            as_matrix(da, n, k).noalias() += dy * as_matrix(gr.value(Var{in[1]})).transpose();
        }
        if (auto db = gr.accumulator(in[1]); !db.empty()) {
            as_matrix(db, k, m).noalias() += as_matrix(gr.value(Var{in[0]})).transpose() * dy;
        }
    });
}

Var affine(Graph& g, Var x, Var w, Var b) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    const Tensor& bv = g.value(b);
    require_rank2(xv, "affine");
    require_rank2(wv, "affine");
    if (xv.cols() != wv.rows()) {
        throw ShapeError("affine: input has " + std::to_string(xv.cols()) + " features but weight expects " +
                         std::to_string(wv.rows()));
    }
    if (bv.size() != wv.cols()) {
        throw ShapeError("affine: bias length " + std::to_string(bv.size()) + " does not match output width " +
                         std::to_string(wv.cols()));
    }
    const std::size_t n = xv.rows(), k = xv.cols(), m = wv.cols();
    Tensor out(Shape{n, m});
    auto y = as_matrix(out.data(), n, m);
    y.noalias() = as_matrix(xv) * as_matrix(wv);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), static_cast<Eigen::Index>(m));
    return g.record(std::move(out), {x.id, w.id, b.id}, [n, k, m](Graph& gr, std::size_t self) {
        const auto& in = gr.inputs(self);
        const auto dy = as_matrix(gr.upstream(self), n, m);
        if (auto dx = gr.accumulator(in[0]); !dx.empty()) {
            as_matrix(dx, n, k).noalias() += dy * as_matrix(gr.value(Var{in[1]})).transpose();
        }
        if (auto dw = gr.accumulator(in[1]); !dw.empty()) {
            as_matrix(dw, k, m).noalias() += as_matrix(gr.value(Var{in[0]})).transpose() * dy;
        }
        if (auto db = gr.accumulator(in[2]); !db.empty()) {
            Eigen::Map<Eigen::RowVectorXd>(db.data(), static_cast<Eigen::Index>(m)) += dy.colwise().sum();
        }
    });
}

Var relu(Graph& g, Var x) {
    Tensor out = g.value(x);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return g.record(std::move(out), {x.id}, [](Graph& gr, std::size_t self) {
        const std::size_t in = gr.inputs(self)[0];
        auto dx = gr.accumulator(in);
        if (dx.empty()) return;
        const auto xv = gr.value(Var{in}).data();
        const auto dy = gr.upstream(self);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (xv[i] > 0.0) dx[i] += dy[i];
        }
    });
}

Var add(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "add");
    Tensor out = g.value(a);
    const auto bv = g.value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return g.record(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
        const auto dy = gr.upstream(self);
        for (std::size_t in : gr.inputs(self)) {
            auto d = gr.accumulator(in);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
    });
}

Var sub(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "sub");
    Tensor out = g.value(a);
    const auto bv = g.value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return g.record(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
        const auto dy = gr.upstream(self);
        const auto& in = gr.inputs(self);
        auto da = gr.accumulator(in[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
        auto db = gr.accumulator(in[1]);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dy[i];
    });
}

Var mul(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "mul");
    Tensor out = g.value(a);
    const auto bv = g.value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return g.record(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
        const auto dy = gr.upstream(self);
        const auto& in = gr.inputs(self);
        const auto av = gr.value(Var{in[0]}).data();
        const auto bv = gr.value(Var{in[1]}).data();
        auto da = gr.accumulator(in[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv[i];
        auto db = gr.accumulator(in[1]);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    });
}

Var scale(Graph& g, Var a, double factor) {
    Tensor out = g.value(a);
    for (double& v : out.data()) v *= factor;
    return g.record(std::move(out), {a.id}, [factor](Graph& gr, std::size_t self) {
        const auto dy = gr.upstream(self);
        auto da = gr.accumulator(gr.inputs(self)[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * dy[i];
    });
}

Var add_scalar(Graph& g, Var a, double offset) {
    Tensor out = g.value(a);
    for (double& v : out.data()) v += offset;
    return g.record(std::move(out), {a.id}, [](Graph& gr, std::size_t self) {
        const auto dy = gr.upstream(self);
        auto da = gr.accumulator(gr.inputs(self)[0]);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
    });
}

Var sum(Graph& g, Var a) {
    double total = 0.0;
    for (double v : g.value(a).data()) total += v;
    return g.record(Tensor::scalar(total), {a.id}, [](Graph& gr, std::size_t self) {
        const double dy = gr.upstream(self)[0];
        auto da = gr.accumulator(gr.inputs(self)[0]);
        for (double& d : da) d += dy;
    });
}

Var mean(Graph& g, Var a) {
    const std::size_t n = g.value(a).size();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    return scale(g, sum(g, a), 1.0 / static_cast<double>(n));
}

Var l2_normalize(Graph& g, Var x, std::size_t axis) {
    const Tensor& xv = g.value(x);
    // View the tensor as `outer` slices of length `len`, elements `stride` apart.
    std::size_t outer = 0, len = 0, stride = 0, step = 0;
    if (xv.rank() == 1 && axis == 0) {
        outer = 1, len = xv.size(), stride = 1, step = 0;
    } else if (xv.rank() == 2 && axis == 1) {
        outer = xv.rows(), len = xv.cols(), stride = 1, step = xv.cols();
    } else if (xv.rank() == 2 && axis == 0) {
        outer = xv.cols(), len = xv.rows(), stride = xv.cols(), step = 1;
    } else {
        throw ShapeError("l2_normalize: unsupported axis " + std::to_string(axis) + " for shape " +
                         shape_string(xv.shape()));
    }
    Tensor out(xv.shape());
    std::vector<double> norms(outer);
    for (std::size_t s = 0; s < outer; ++s) {
        double sq = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double v = xv[s * step + i * stride];
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm < kNormalizeFloor) {
            throw NormalizationError("l2_normalize: slice " + std::to_string(s) + " has norm " +
                                     std::to_string(norm) + " (degenerate embedding)");
        }
        norms[s] = norm;
        for (std::size_t i = 0; i < len; ++i) out[s * step + i * stride] = xv[s * step + i * stride] / norm;
    }
    return g.record(std::move(out), {x.id},
                    [outer, len, stride, step, norms = std::move(norms)](Graph& gr, std::size_t self) {
                        auto dx = gr.accumulator(gr.inputs(self)[0]);
                        if (dx.empty()) return;
                        const auto y = gr.value(Var{self}).data();
                        const auto dy = gr.upstream(self);
                        for (std::size_t s = 0; s < outer; ++s) {
                            double dot = 0.0;
                            for (std::size_t i = 0; i < len; ++i) {
                                const std::size_t k = s * step + i * stride;
                                dot += y[k] * dy[k];
                            }
                            for (std::size_t i = 0; i < len; ++i) {
                                const std::size_t k = s * step + i * stride;
                                dx[k] += (dy[k] - y[k] * dot) / norms[s];
                            }
                        }
                    });
}

Var row_squared_norm(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    require_rank2(xv, "row_squared_norm");
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor out(Shape{n});
    for (std::size_t r = 0; r < n; ++r) {
        double sq = 0.0;
        for (double v : xv.row(r)) sq += v * v;
        out[r] = sq;
    }
    return g.record(std::move(out), {x.id}, [n, d](Graph& gr, std::size_t self) {
        const std::size_t in = gr.inputs(self)[0];
        auto dx = gr.accumulator(in);
        if (dx.empty()) return;
        const auto xv = gr.value(Var{in}).data();
        const auto dy = gr.upstream(self);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) dx[r * d + c] += 2.0 * xv[r * d + c] * dy[r];
        }
    });
}

Var gather_rows(Graph& g, Var x, std::span<const std::size_t> rows) {
    const Tensor& xv = g.value(x);
    require_rank2(xv, "gather_rows");
    Tensor out = xv.select_rows(rows);
    const std::size_t d = xv.cols();
    return g.record(std::move(out), {x.id},
                    [d, idx = std::vector<std::size_t>(rows.begin(), rows.end())](Graph& gr, std::size_t self) {
                        auto dx = gr.accumulator(gr.inputs(self)[0]);
                        if (dx.empty()) return;
                        const auto dy = gr.upstream(self);
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                            for (std::size_t c = 0; c < d; ++c) dx[idx[i] * d + c] += dy[i * d + c];
                        }
                    });
}

Var row_distance(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank2(av, "row_distance");
    require_same_shape(av, bv, "row_distance");
    const std::size_t n = av.rows(), d = av.cols();
    Tensor out(Shape{n});
    for (std::size_t r = 0; r < n; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = av.at(r, c) - bv.at(r, c);
            sq += diff * diff;
        }
        out[r] = std::sqrt(sq);
    }
    return g.record(std::move(out), {a.id, b.id}, [n, d](Graph& gr, std::size_t self) {
        const auto& in = gr.inputs(self);
        const auto av = gr.value(Var{in[0]}).data();
        const auto bv = gr.value(Var{in[1]}).data();
        const auto dist = gr.value(Var{self}).data();
        const auto dy = gr.upstream(self);
        auto da = gr.accumulator(in[0]);
        auto db = gr.accumulator(in[1]);
        for (std::size_t r = 0; r < n; ++r) {
            if (dist[r] == 0.0) continue;
            const double coef = dy[r] / dist[r];
            for (std::size_t c = 0; c < d; ++c) {
                const double gk = coef * (av[r * d + c] - bv[r * d + c]);
                if (!da.empty()) da[r * d + c] += gk;
                if (!db.empty()) db[r * d + c] -= gk;
            }
        }
    });
}

Var frobenius_norm(Graph& g, Var x) {
    double sq = 0.0;
    for (double v : g.value(x).data()) sq += v * v;
    return g.record(Tensor::scalar(std::sqrt(sq)), {x.id}, [](Graph& gr, std::size_t self) {
        const std::size_t in = gr.inputs(self)[0];
        const double norm = gr.value(Var{self}).item();
        if (norm == 0.0) return;
        auto dx = gr.accumulator(in);
        const auto xv = gr.value(Var{in}).data();
        const double coef = gr.upstream(self)[0] / norm;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += coef * xv[i];
    });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels) {
    const Tensor& zv = g.value(logits);
    require_rank2(zv, "softmax_cross_entropy");
    const std::size_t n = zv.rows(), k = zv.cols();
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    Tensor probs(Shape{n, k});
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                                    " outside [0, " + std::to_string(k) + ")");
        }
        const auto row = zv.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t c = 0; c < k; ++c) probs.at(r, c) = std::exp(row[c] - log_z);
        loss += log_z - row[static_cast<std::size_t>(labels[r])];
    }
    loss /= static_cast<double>(n);
    return g.record(Tensor::scalar(loss), {logits.id},
                    [n, k, probs = std::move(probs), lab = std::vector<int>(labels.begin(), labels.end())](
                        Graph& gr, std::size_t self) {
                        auto dz = gr.accumulator(gr.inputs(self)[0]);
                        if (dz.empty()) return;
                        const double coef = gr.upstream(self)[0] / static_cast<double>(n);
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t c = 0; c < k; ++c) {
                                const double target = static_cast<int>(c) == lab[r] ? 1.0 : 0.0;
                                dz[r * k + c] += coef * (probs.at(r, c) - target);
                            }
                        }
                    });
}

Var weighted_squared_distance(Graph& g, Var theta, const Tensor& anchor, const Tensor& weight) {
    const Tensor& tv = g.value(theta);
    require_same_shape(tv, anchor, "weighted_squared_distance(anchor)");
    require_same_shape(tv, weight, "weighted_squared_distance(weight)");
    double total = 0.0;
    for (std::size_t i = 0; i < tv.size(); ++i) {
        const double diff = tv[i] - anchor[i];
        total += 0.5 * weight[i] * diff * diff;
    }
    return g.record(Tensor::scalar(total), {theta.id}, [a = &anchor, w = &weight](Graph& gr, std::size_t self) {
        const std::size_t in = gr.inputs(self)[0];
        auto dt = gr.accumulator(in);
        const auto tv = gr.value(Var{in}).data();
        const double dy = gr.upstream(self)[0];
        for (std::size_t i = 0; i < dt.size(); ++i) dt[i] += dy * (*w)[i] * (tv[i] - (*a)[i]);
    });
}

}  // namespace driftlab::nn
