#pragma once

#include <Eigen/Core>

namespace rsbp::nn {

// Thin wrappers over Eigen's matrix product for row-major buffers.
// All matrices are dense row-major; dimensions are (rows, cols).

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C(m,n) = A(m,k) * B(k,n), optionally accumulating into C.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate = false) {
  ConstMatMap<T> A(a, m, k), B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C(m,n) = A(k,m)^T * B(k,n).
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate = false) {
  ConstMatMap<T> A(a, k, m), B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

// C(m,n) = A(m,k) * B(n,k)^T.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n,
             bool accumulate = false) {
  ConstMatMap<T> A(a, m, k), B(b, n, k);
  MatMap<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

}  // namespace rsbp::nn
