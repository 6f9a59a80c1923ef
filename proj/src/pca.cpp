#include <Eigen/Dense>
#include <cmath>

#include "texsyn/errors.hpp"
#include "texsyn/gram.hpp"

namespace texsyn {

PCABasis pca_fit(std::span<const FeatureTensor> samples, std::size_t k, std::string layer) {
    if (samples.empty()) throw ValidationError("pca_fit: no samples");
    const std::size_t n = samples.front().channels();
    std::size_t positions = 0;
    for (const FeatureTensor& s : samples) {
        if (s.channels() != n)
            throw DimensionError("pca_fit: samples disagree on channel count (" +
                                 std::to_string(n) + " vs " + std::to_string(s.channels()) + ")");
        positions += s.spatial();
    }
    if (k == 0 || k > n)
        throw ValidationError("pca_fit: k = " + std::to_string(k) + " must be in [1, " +
                              std::to_string(n) + "]");
    if (positions < n)
        throw ValidationError("pca_fit: " + std::to_string(positions) +
                              " sample positions for " + std::to_string(n) +
                              " features of layer " + layer + "; need at least as many positions "
                              "as features");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (const FeatureTensor& s : samples)
        for (std::size_t c = 0; c < n; ++c)
            for (double v : s.channel(c)) mean[static_cast<Eigen::Index>(c)] += v;
    mean /= static_cast<double>(positions);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n));
    for (const FeatureTensor& s : samples) {
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const RowMajor> f(s.data(), static_cast<Eigen::Index>(n),
                                     static_cast<Eigen::Index>(s.spatial()));
        const Eigen::MatrixXd centered = f.colwise() - mean;
        cov.noalias() += centered * centered.transpose();
    }
    cov /= static_cast<double>(positions);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigensolver failed");
    const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
    const Eigen::MatrixXd& evecs = solver.eigenvectors();

    const double top = std::max(evals[evals.size() - 1], 0.0);
    const double tol = top * 1e-10;
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < evals.size(); ++i)
        if (evals[i] > tol) ++rank;
    if (rank < k)
        throw ValidationError("pca_fit: covariance of layer " + layer + " has rank " +
                              std::to_string(rank) + " < k = " + std::to_string(k) +
                              "; achievable rank is " + std::to_string(rank));

    PCABasis b;
    b.layer = std::move(layer);
    b.k = k;
    b.features = n;
    b.mean.assign(mean.data(), mean.data() + n);
    b.basis.resize(k * n);
    b.variances.resize(k);
    for (std::size_t r = 0; r < k; ++r) {
        const Eigen::Index col = static_cast<Eigen::Index>(n - 1 - r);
        Eigen::VectorXd v = evecs.col(col);
        Eigen::Index lead = 0;
        for (Eigen::Index i = 1; i < v.size(); ++i)
            if (std::abs(v[i]) > std::abs(v[lead])) lead = i;
        if (v[lead] < 0) v = -v;
        for (std::size_t c = 0; c < n; ++c) b.basis[r * n + c] = v[static_cast<Eigen::Index>(c)];
        b.variances[r] = evals[col];
    }
    return b;
}

FeatureTensor project_features(const FeatureTensor& features, const PCABasis& basis) {
    if (features.channels() != basis.features)
        throw DimensionError("project_features: tensor has " +
                             std::to_string(features.channels()) + " channels, basis expects " +
                             std::to_string(basis.features));
    const std::size_t n = basis.features, m = features.spatial();
    FeatureTensor out(basis.k, features.height(), features.width());
    std::vector<double> centered(n * m);
    for (std::size_t c = 0; c < n; ++c) {
        auto src = features.channel(c);
        for (std::size_t p = 0; p < m; ++p) centered[c * m + p] = src[p] - basis.mean[c];
    }
    for (std::size_t r = 0; r < basis.k; ++r) {
        const double* row = basis.basis.data() + r * n;
        auto dst = out.channel(r);
        for (std::size_t c = 0; c < n; ++c) {
            const double w = row[c];
            const double* src = centered.data() + c * m;
            for (std::size_t p = 0; p < m; ++p) dst[p] += w * src[p];
        }
    }
    return out;
}

}  // namespace texsyn
