#pragma once

// Reference implementations used only by tests: finite differences, plain-loop
// attention, triple-loop metrics and a least-squares linear probe.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "dgcl/dot_transform.hpp"
#include "dgcl/graph.hpp"
#include "dgcl/metrics.hpp"
#include "dgcl/rng.hpp"
#include "dgcl/tensor.hpp"

namespace oracle {

using dgcl::Graph;
using dgcl::NodeId;
using dgcl::Tensor;

inline Tensor random_tensor(std::size_t r, std::size_t c, dgcl::Rng& rng, double sd = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sd * rng.normal();
    return t;
}

// Builds the loss on a fresh graph; params[i] is the leaf for inputs[i].
using LossBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

struct GradCheck {
    double max_rel_error = 0.0;  // worst per-tensor ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)
    double max_abs_error = 0.0;
};

inline double evaluate(const LossBuilder& build, const std::vector<Tensor>& inputs) {
    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : inputs) ids.push_back(g.leaf(t, true));
    return g.scalar(build(g, ids));
}

inline GradCheck check_gradients(const LossBuilder& build, std::vector<Tensor> inputs, double h = 1e-5,
                                 double floor = 1e-8) {
    Graph g;
    std::vector<NodeId> ids;
    for (const auto& t : inputs) ids.push_back(g.leaf(t, true));
    auto grads = g.backward(build(g, ids));

    GradCheck out;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        const Tensor& analytic = grads.at(ids[p]);
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < inputs[p].size(); ++i) {
            const double x = inputs[p][i];
            inputs[p][i] = x + h;
            const double up = evaluate(build, inputs);
            inputs[p][i] = x - h;
            const double down = evaluate(build, inputs);
            inputs[p][i] = x;
            const double numeric = (up - down) / (2 * h);
            const double d = analytic[i] - numeric;
            diff2 += d * d;
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
            out.max_abs_error = std::max(out.max_abs_error, std::abs(d));
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
        out.max_rel_error = std::max(out.max_rel_error, std::sqrt(diff2) / denom);
    }
    return out;
}

// Multi-head attention readout evaluated one scalar at a time.
inline Tensor attention_reference(const dgcl::DotParameters& p, const Tensor& r_cls, const Tensor& R_dom) {
    const std::size_t m = p.w_sem.rows(), L = R_dom.rows(), H = p.heads, dh = m / H;
    auto vecmat = [&](const std::vector<double>& x, const Tensor& W) {
        std::vector<double> y(W.cols(), 0.0);
        for (std::size_t j = 0; j < W.cols(); ++j)
            for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * W(i, j);
        return y;
    };
    std::vector<double> r(r_cls.values().begin(), r_cls.values().end());
    std::vector<double> q = vecmat(vecmat(r, p.w_sem), p.w_q);
    std::vector<std::vector<double>> keys, vals;
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> row(R_dom.row_ptr(l), R_dom.row_ptr(l) + m);
        std::vector<double> e = vecmat(row, p.w_dom);
        keys.push_back(vecmat(e, p.w_k));
        vals.push_back(vecmat(e, p.w_v));
    }
    const double width = p.scale == dgcl::AttentionScale::per_head ? double(dh) : double(m);
    std::vector<double> a(m, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
        std::vector<double> s(L);
        for (std::size_t l = 0; l < L; ++l) {
            double dot = 0.0;
            for (std::size_t j = 0; j < dh; ++j) dot += q[h * dh + j] * keys[l][h * dh + j];
            s[l] = dot / std::sqrt(width);
        }
        const double mx = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (double& x : s) z += (x = std::exp(x - mx));
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t j = 0; j < dh; ++j) a[h * dh + j] += s[l] / z * vals[l][h * dh + j];
    }
    std::vector<double> o = vecmat(a, p.w_o);
    Tensor out(1, m);
    for (std::size_t j = 0; j < m; ++j) {
        double x = r[j] + o[j];
        switch (p.activation) {
            case dgcl::Activation::relu: x = x > 0 ? x : 0.0; break;
            case dgcl::Activation::gelu:
                x = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
                break;
            case dgcl::Activation::identity: break;
        }
        out[j] = x;
    }
    return out;
}

struct Metrics {
    double a_all, a_in;
    std::optional<double> a_out, w_out, a_un, f_un;
    double f_all;
};

// Direct evaluation of every metric: loops over tasks, domains and checkpoints.
inline Metrics metrics_reference(const dgcl::AccuracyTensor& A) {
    const std::size_t T = A.num_tasks(), last = T - 1;
    const auto& dt = A.train_domains();
    std::set<dgcl::DomainId> S(dt.begin(), dt.end());
    Metrics r{};
    double all = 0, in = 0, out = 0, worst = 0, fall = 0;
    bool out_ok = true;
    for (std::size_t t = 0; t < T; ++t) {
        double row = 0, orow = 0, wmin = 2, frow = 0;
        std::size_t on = 0;
        for (auto d : S) {
            const double v = *A.get(t, d, last);
            row += v;
            double best = -1;
            for (std::size_t i = t; i < T; ++i) best = std::max(best, *A.get(t, d, i));
            frow += best - v;
            if (d != dt[t]) {
                orow += v;
                wmin = std::min(wmin, v);
                ++on;
            }
        }
        all += row / S.size();
        fall += frow / S.size();
        in += *A.get(t, dt[t], last);
        if (on == 0) out_ok = false;
        else {
            out += orow / on;
            worst += wmin;
        }
    }
    r.a_all = all / T;
    r.a_in = in / T;
    r.f_all = fall / T;
    if (out_ok) {
        r.a_out = out / T;
        r.w_out = worst / T;
    }
    if (auto u = A.unseen_domain()) {
        double un = 0, fu = 0;
        for (std::size_t t = 0; t < T; ++t) {
            un += *A.get(t, *u, last);
            double best = -1;
            for (std::size_t i = t; i < T; ++i) best = std::max(best, *A.get(t, *u, i));
            fu += best - *A.get(t, *u, last);
        }
        r.a_un = un / T;
        r.f_un = fu / T;
    }
    return r;
}

// One-vs-all ridge regression probe; returns test accuracy.
inline double linear_probe(const Eigen::MatrixXd& Xtr, const std::vector<int>& ytr, const Eigen::MatrixXd& Xte,
                           const std::vector<int>& yte, int classes, double ridge = 1e-3) {
    const Eigen::Index n = Xtr.rows(), m = Xtr.cols();
    Eigen::VectorXd mu = Xtr.colwise().mean();
    Eigen::VectorXd sd = ((Xtr.rowwise() - mu.transpose()).array().square().colwise().sum() / double(n)).sqrt();
    sd = sd.array().max(1e-9);
    auto standardize = [&](const Eigen::MatrixXd& X) {
        Eigen::MatrixXd Z(X.rows(), m + 1);
        Z.leftCols(m) = ((X.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array()).matrix();
        Z.col(m).setOnes();
        return Z;
    };
    Eigen::MatrixXd Z = standardize(Xtr);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(n, classes, -1.0);
    for (Eigen::Index i = 0; i < n; ++i) Y(i, ytr[i]) = 1.0;
    Eigen::MatrixXd A = Z.transpose() * Z + ridge * Eigen::MatrixXd::Identity(m + 1, m + 1);
    Eigen::MatrixXd W = A.ldlt().solve(Z.transpose() * Y);
    Eigen::MatrixXd scores = standardize(Xte) * W;
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best;
        scores.row(i).maxCoeff(&best);
        hits += best == yte[i];
    }
    return double(hits) / double(yte.size());
}

}  // namespace oracle
