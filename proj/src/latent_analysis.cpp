#include "mf/latent_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mf/error.hpp"

namespace mf {

Eigen::MatrixXd encoder_activations(const LimbCvae& model, const Eigen::Ref<const Eigen::MatrixXd>& windows,
                                    ActivationLayer layer) {
  if (windows.rows() != model.net.io_dim())
    throw Error(ErrorCode::ShapeMismatch, "windows have " + std::to_string(windows.rows()) + " rows, model expects " +
                                              std::to_string(model.net.io_dim()));
  const Eigen::MatrixXd cols = layer == ActivationLayer::LatentMean
                                   ? encoder_means_batch(model.net, model.scaling.to_net(windows))
                                   : encoder_hidden_batch(model.net, model.scaling.to_net(windows));
  return cols.transpose();
}

SymmetricEigen jacobi_eigen(const Eigen::Ref<const Eigen::MatrixXd>& symmetric, int max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) throw Error(ErrorCode::ShapeMismatch, "eigendecomposition needs a square matrix");
  Eigen::MatrixXd a = 0.5 * (symmetric + symmetric.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * scale) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle zeroing a(p,q) (Golub & Van Loan, symmetric Schur).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

PcaModel pca_fit(const Eigen::Ref<const Eigen::MatrixXd>& data, int k) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n < 2) throw Error(ErrorCode::DegenerateData, "PCA needs at least two samples");
  if (k < 1 || k > d) throw Error(ErrorCode::InvalidArgument, "PCA rank " + std::to_string(k) + " out of range");
  if (!data.allFinite()) throw Error(ErrorCode::NonFiniteInput, "PCA input not finite");

  PcaModel pca;
  pca.mean = data.colwise().mean();
  const Eigen::MatrixXd centred = data.rowwise() - pca.mean;
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  pca.total_variance = cov.trace();
  if (!(pca.total_variance > 0.0)) throw Error(ErrorCode::DegenerateData, "data has zero variance");

  const SymmetricEigen eig = jacobi_eigen(cov);
  pca.components.resize(k, d);
  pca.variances.resize(k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd c = eig.vectors.col(i).normalized();
    Eigen::Index imax = 0;
    c.cwiseAbs().maxCoeff(&imax);
    if (c[imax] < 0) c = -c;
    pca.components.row(i) = c.transpose();
    pca.variances[i] = std::max(eig.values[i], 0.0);
  }
  return pca;
}

Eigen::MatrixXd project(const PcaModel& pca, const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.cols() != pca.mean.size())
    throw Error(ErrorCode::ShapeMismatch, "projection input has " + std::to_string(data.cols()) + " columns, PCA has " +
                                              std::to_string(pca.mean.size()));
  return (data.rowwise() - pca.mean) * pca.components.transpose();
}

double separation_score(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() < 2 || b.rows() < 2) throw Error(ErrorCode::GroupTooSmall, "each group needs at least two points");
  if (a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "groups differ in dimension");

  auto mean_dist = [](const Eigen::RowVectorXd& x, const Eigen::Ref<const Eigen::MatrixXd>& group, Eigen::Index skip) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < group.rows(); ++i)
      if (i != skip) s += (group.row(i) - x).norm();
    return s / static_cast<double>(skip >= 0 ? group.rows() - 1 : group.rows());
  };
  auto silhouette = [&](const Eigen::Ref<const Eigen::MatrixXd>& own, const Eigen::Ref<const Eigen::MatrixXd>& other) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < own.rows(); ++i) {
      const Eigen::RowVectorXd x = own.row(i);
      const double intra = mean_dist(x, own, i);
      const double inter = mean_dist(x, other, -1);
      const double m = std::max(intra, inter);
      if (m > 0.0) s += (inter - intra) / m;
    }
    return s;
  };
  return (silhouette(a, b) + silhouette(b, a)) / static_cast<double>(a.rows() + b.rows());
}

Eigen::MatrixXd windows_ending(const Recording& normalized, Limb limb, int delta_t, int first_end, int last_end) {
  if (first_end - delta_t + 1 < 0 || last_end >= normalized.length() || last_end < first_end)
    throw Error(ErrorCode::RecordingTooShort, "window range [" + std::to_string(first_end) + ", " +
                                                  std::to_string(last_end) + "] does not fit " + normalized.id);
  Eigen::MatrixXd out(3 * limb_size(limb) * delta_t, last_end - first_end + 1);
  for (int e = first_end; e <= last_end; ++e)
    out.col(e - first_end) = vectorize(select_limb(window_at(normalized, e - delta_t + 1, delta_t), limb));
  return out;
}

}  // namespace mf
