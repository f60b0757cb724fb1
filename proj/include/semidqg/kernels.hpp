#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense linear-algebra kernels for the reference seq2seq model.
//
// Every kernel exists in two forms: a serial reference in kernels::serial
// and an OpenMP version in kernels::omp. The parallel versions split work
// by output element only, so each element is accumulated in the same
// floating-point order as the serial code and results are bit-identical
// for any thread count. The unqualified wrappers dispatch on problem size.

namespace semidqg::kernels {

// Number of OpenMP threads the dispatch layer will use (respects
// OMP_NUM_THREADS; override with set_threads). 1 disables parallelism.
int threads();
void set_threads(int n);

// Output elements below this count are not worth a parallel region.
inline constexpr std::size_t parallel_grain = 4096;

namespace serial {

// y = W x, W is rows x cols row-major.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);

// y = W^T x, W is rows x cols row-major, x has rows elements.
void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y);

// W += g x^T (rank-1 update), g has rows elements.
void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

// out[i] = sum over b of parts[b][i]; parts summed in index order.
void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out);

}  // namespace serial

namespace omp {

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y);
void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);
void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out);

}  // namespace omp

// Size-dispatched entry points used by the model code.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
void matvec_t(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y);
void add_outer(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);
void reduce_sum(std::span<const std::vector<double>> parts,
                std::span<double> out);

// Numerically stable in-place softmax; returns log of the normalizer
// (logsumexp of the input). Always serial: vectors here are small.
double softmax_inplace(std::span<double> v);

}  // namespace semidqg::kernels
