// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/expansion.hpp"

#include <cmath>
#include <string>

#include "cca/numerics.hpp"

namespace cca {

namespace {

double naive_dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

}  // namespace

ExpandedWeights expand_weights(const Matrix& q, const Matrix& k, const Matrix& v, const CoreTokenSet& core,
                               const AttentionConfig& config) {
    config.validate();
    const std::size_t length = q.rows();
    if (k.rows() != length || v.rows() != length || q.cols() != k.cols()) {
        throw Error("expand_weights: q, k, v shapes disagree");
    }
    if (length > kMaxExpansionLength) {
        throw Error("expand_weights: L=" + std::to_string(length) + " exceeds the expansion guard of " +
                    std::to_string(kMaxExpansionLength));
    }
    const std::size_t g = config.group_size;
    if (core.group_size != g || core.group_count() < length / g) {
        throw Error("expand_weights: core token set does not match the config or length");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));

    ExpandedWeights out{Matrix(length, length), std::vector<WeightSource>(length * length, WeightSource::none)};
    std::vector<double> logits;
    for (std::size_t i = 1; i <= length; ++i) {
        const IndexPlan plan = index_plan(i, g, config.local_window);
        logits.clear();
        for (std::size_t p = 0; p < plan.global_end; ++p) {
            logits.push_back(scale * naive_dot(q.row(i - 1), core.core_k.row(p)));
        }
        for (std::size_t t = plan.local_start; t <= i; ++t) {
            logits.push_back(scale * naive_dot(q.row(i - 1), k.row(t - 1)));
        }
        const std::vector<double> probs = stable_softmax(logits);

        for (std::size_t p = 0; p < plan.global_end; ++p) {
            for (std::size_t slot = 0; slot < g; ++slot) {
                const std::size_t t = p * g + slot;  // 0-based token
                const double phi = core.phi(p, slot);
                out.a(i - 1, t) = probs[p] * phi;
                const bool structural_zero = config.pooling == PoolingMode::max && phi == 0.0;
                out.provenance[(i - 1) * length + t] = structural_zero ? WeightSource::none : WeightSource::global;
            }
        }
        for (std::size_t t = plan.local_start; t <= i; ++t) {
            out.a(i - 1, t - 1) = probs[plan.global_end + (t - plan.local_start)];
            out.provenance[(i - 1) * length + (t - 1)] = WeightSource::local;
        }
    }
    return out;
}

Matrix reconstruct_output(const ExpandedWeights& weights, const Matrix& v) {
    const std::size_t length = weights.length();
    if (v.rows() != length) {
        throw Error("reconstruct_output: V has " + std::to_string(v.rows()) + " rows, weights cover " +
                    std::to_string(length));
    }
    Matrix out(length, v.cols());
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t t = 0; t <= i; ++t) {
            const double a = weights.a(i, t);
            for (std::size_t c = 0; c < v.cols(); ++c) {
                out(i, c) += a * v(t, c);
            }
        }
    }
    return out;
}

ReachabilityReport reachability_report(const ExpandedWeights& weights) {
    ReachabilityReport report;
    const std::size_t length = weights.length();
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t t = 0; t <= i; ++t) {
            if (weights.a(i, t) > kPositivityFloor) {
                continue;
            }
            const std::pair<std::size_t, std::size_t> pair{i + 1, t + 1};
            report.violations.push_back(pair);
            if (weights.source(i, t) == WeightSource::none) {
                report.structural.push_back(pair);
            } else {
                report.underflow.push_back(pair);
            }
        }
    }
    report.ok = report.violations.empty();
    return report;
}

double max_row_sum_error(const ExpandedWeights& weights) {
    double worst = 0.0;
    for (std::size_t i = 0; i < weights.length(); ++i) {
        double sum = 0.0;
        for (double a : weights.a.row(i)) {
            sum += a;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

}  // namespace cca
