#include "ceb/svd.hpp"

#include <Eigen/SVD>

namespace ceb {

SvdResult svd(const Matrix& K) {
  require(K.allFinite(), "svd: non-finite input");
  SvdResult out;
  // Divide-and-conquer for anything beyond tiny inputs; it falls back to
  // Jacobi internally for small blocks and is deterministic.
  if (std::min(K.rows(), K.cols()) <= 16) {
    Eigen::JacobiSVD<Matrix> dec(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = dec.matrixU();
    out.S = dec.singularValues();
    out.V = dec.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> dec(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success)
      throw std::runtime_error("svd: did not converge");
    out.U = dec.matrixU();
    out.S = dec.singularValues();
    out.V = dec.matrixV();
  }
  for (Eigen::Index k = 0; k < out.S.size(); ++k) {
    Eigen::Index imax = 0;
    out.U.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.U(imax, k) < 0.0) {
      out.U.col(k) = -out.U.col(k);
      out.V.col(k) = -out.V.col(k);
    }
  }
  return out;
}

}  // namespace ceb
