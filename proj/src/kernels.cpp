#include "sparselab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sparselab::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1U << 15;

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[i * k + p] * b[j * k + p];
            }
            c[i * n + j] = acc;
        }
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[p * m + i] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data() + i * n;
        double* out = y.data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            mx = std::max(mx, row[j]);
        }
        if (!std::isfinite(mx)) {
            return false;
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - mx);
            total += out[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[j] /= total;
        }
    }
    return true;
}

}  // namespace serial

namespace omp {

// The loop nests below reorder iterations for vectorization but keep the
// per-element reduction sequential in the contraction index.

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c.data() + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) {
            bt[p * n + j] = b[j * k + p];
        }
    }
    gemm_nn(a, bt, c, m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c.data() + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += api * brow[j];
            }
        }
    }
}

bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok) if (m * n >= kParallelWork)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        ok = serial::softmax_rows(x.subspan(i * n, n), y.subspan(i * n, n), 1, n) && ok;
    }
    return ok;
}

}  // namespace omp

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    omp::gemm_nn(a, b, c, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    omp::gemm_nt(a, b, c, m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
    omp::gemm_tn(a, b, c, m, k, n);
}

bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
    return omp::softmax_rows(x, y, m, n);
}

bool parallel_enabled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

}  // namespace sparselab::kernels
