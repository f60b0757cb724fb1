#include "semidqg/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace semidqg::kernels {

namespace {

int default_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::atomic<int> g_threads{0};  // 0 = not yet initialized

}  // namespace

int threads() {
    int t = g_threads.load(std::memory_order_relaxed);
    if (t == 0) {
        t = default_threads();
        g_threads.store(t, std::memory_order_relaxed);
    }
    return t;
}

void set_threads(int n) {
    g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

namespace serial {

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
    assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = w.data() + i * cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y) {
    assert(w.size() == rows * cols && x.size() == rows && y.size() == cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += w[i * cols + j] * x[i];
        y[j] = acc;
    }
}

void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
    assert(w.size() == rows * cols && g.size() == rows && x.size() == cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = w.data() + i * cols;
        const double gi = g[i];
        for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
    }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (const auto& p : parts) acc += p[i];
        out[i] = acc;
    }
}

}  // namespace serial

namespace omp {

// Each output element is produced by one thread with the serial inner loop,
// so the result does not depend on the thread count.

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
    assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
    const auto* wp = w.data();
    const auto* xp = x.data();
    auto* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
        const double* row = wp + static_cast<std::size_t>(i) * cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * xp[j];
        yp[i] = acc;
    }
}

void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y) {
    assert(w.size() == rows * cols && x.size() == rows && y.size() == cols);
    const auto* wp = w.data();
    const auto* xp = x.data();
    auto* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i)
            acc += wp[i * cols + static_cast<std::size_t>(j)] * xp[i];
        yp[j] = acc;
    }
}

void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
    assert(w.size() == rows * cols && g.size() == rows && x.size() == cols);
    auto* wp = w.data();
    const auto* gp = g.data();
    const auto* xp = x.data();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
        double* row = wp + static_cast<std::size_t>(i) * cols;
        const double gi = gp[i];
        for (std::size_t j = 0; j < cols; ++j) row[j] += gi * xp[j];
    }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    const auto* xp = x.data();
    auto* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(x.size()); ++i)
        yp[i] += a * xp[i];
}

void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out) {
    auto* op = out.data();
#pragma omp parallel for schedule(static) num_threads(threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size());
         ++i) {
        double acc = 0.0;
        for (const auto& p : parts) acc += p[static_cast<std::size_t>(i)];
        op[i] = acc;
    }
}

}  // namespace omp

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
    if (threads() > 1 && rows * cols >= parallel_grain)
        omp::matvec(w, rows, cols, x, y);
    else
        serial::matvec(w, rows, cols, x, y);
}

void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y) {
    if (threads() > 1 && rows * cols >= parallel_grain)
        omp::matvec_t(w, rows, cols, x, y);
    else
        serial::matvec_t(w, rows, cols, x, y);
}

void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
    if (threads() > 1 && rows * cols >= parallel_grain)
        omp::add_outer(w, rows, cols, g, x);
    else
        serial::add_outer(w, rows, cols, g, x);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    if (threads() > 1 && x.size() >= parallel_grain)
        omp::axpy(a, x, y);
    else
        serial::axpy(a, x, y);
}

void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out) {
    if (threads() > 1 && out.size() >= parallel_grain)
        omp::reduce_sum(parts, out);
    else
        serial::reduce_sum(parts, out);
}

double softmax_inplace(std::span<double> v) {
    assert(!v.empty());
    double mx = v[0];
    for (double a : v) mx = std::max(mx, a);
    double sum = 0.0;
    for (double& a : v) {
        a = std::exp(a - mx);
        sum += a;
    }
    for (double& a : v) a /= sum;
    return mx + std::log(sum);
}

}  // namespace semidqg::kernels
