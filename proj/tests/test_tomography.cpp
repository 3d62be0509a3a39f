#include <gtest/gtest.h>

#include "dlambda/tomography.hpp"
#include "oracles.hpp"

using namespace dlambda;
using namespace dlambda::tomo;

namespace {

QuadratureDataset dataset(const std::vector<oracle::Quad>& q) {
  QuadratureDataset d;
  for (const auto& p : q) d.pairs.push_back({p.theta, p.x});
  return d;
}

QuadratureDataset coherent_data(Complex alpha, std::size_t n, std::uint64_t seed) {
  return dataset(oracle::coherent_quadratures(alpha, n, seed));
}

DensityMatrix random_state(int cutoff, std::uint64_t seed, int rank = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix A(cutoff, rank);
  for (int i = 0; i < cutoff; ++i)
    for (int j = 0; j < rank; ++j) A(i, j) = Complex(g(rng), g(rng)) * std::exp(-0.3 * i);
  Matrix m = A * A.adjoint();
  return DensityMatrix(m / m.trace().real());
}

// Tr(rho Pi(theta, x)) straight from the POVM definition
double povm_prob(const DensityMatrix& rho, double theta, double x) {
  return (rho.elems * povm_element(theta, x, rho.cutoff)).trace().real();
}

}  // namespace

TEST(FockWavefunction, Values) {
  EXPECT_NEAR(fock_wavefunction(0, 0.0), 0.63162, 1e-5);
  EXPECT_EQ(fock_wavefunction(1, 0.0), 0.0);
  for (int n = 0; n <= 20; ++n)
    for (double x : {-3.1, -0.4, 0.0, 1.7, 5.2})
      EXPECT_NEAR(fock_wavefunction(n, x), oracle::fock_closed_form(n, x), 1e-12) << n << " " << x;
}

TEST(FockWavefunction, Normalized) {
  for (int n = 0; n <= 20; ++n) {
    const double s = oracle::simpson([n](double x) { return std::pow(fock_wavefunction(n, x), 2); }, -20.0, 20.0, 8000);
    EXPECT_NEAR(s, 1.0, 1e-8) << n;
  }
}

TEST(FockWavefunction, BatchMatchesSingle) {
  std::vector<double> v(12);
  fock_wavefunctions(12, 1.3, v);
  for (int n = 0; n < 12; ++n) EXPECT_DOUBLE_EQ(v[n], fock_wavefunction(n, 1.3));
}

TEST(Povm, RealAtZeroAngle) {
  const auto P = povm_element(0.0, 0.8, 8);
  EXPECT_EQ(P.imag().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Povm, VacuumGivesStandardNormal) {
  const auto vac = DensityMatrix::fock(0, 6);
  for (double th : {0.0, 1.1, 4.0})
    for (double x : {-2.0, 0.0, 0.5, 3.0})
      EXPECT_NEAR(povm_prob(vac, th, x), std::exp(-0.5 * x * x) / std::sqrt(kTwoPi), 1e-14);
}

TEST(Povm, CompletenessOnTruncatedSubspace) {
  const int N = 10;
  const double dx = 0.01;
  for (double th : {0.0, 0.9}) {
    Matrix S = Matrix::Zero(N, N);
    for (double x = -15.0; x <= 15.0; x += dx) S += povm_element(th, x, N) * dx;
    EXPECT_LT((S.topLeftCorner(N - 2, N - 2) - Matrix::Identity(N - 2, N - 2)).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Povm, CoherentStateMeanQuadrature) {
  // <X_theta> = 2|alpha| cos(theta - arg alpha)
  const Complex alpha = std::polar(0.8, 0.6);
  const auto rho = coherent_dm(alpha, 16);
  for (double th : {0.0, 0.6, 2.0}) {
    const double m = oracle::simpson([&](double x) { return x * povm_prob(rho, th, x); }, -10.0, 10.0, 2000);
    EXPECT_NEAR(m, 2.0 * std::abs(alpha) * std::cos(th - std::arg(alpha)), 1e-7);
  }
}

TEST(DensityMatrixType, Validation) {
  EXPECT_NO_THROW(DensityMatrix::maximally_mixed(5).validate());
  auto bad = DensityMatrix::fock(1, 4);
  bad.elems(0, 1) = 0.1;
  EXPECT_THROW(bad.validate(), Error);
  bad = DensityMatrix::fock(1, 4);
  bad.elems(1, 1) = 1.1;
  EXPECT_THROW(bad.validate(), Error);
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  try {
    DensityMatrix(neg).validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_state);
  }
}

TEST(Fidelity, Examples) {
  const auto r = random_state(8, 1);
  EXPECT_NEAR(fidelity(r, r), 1.0, 1e-10);
  EXPECT_NEAR(fidelity(DensityMatrix::fock(0, 5), DensityMatrix::fock(1, 5)), 0.0, 1e-12);
  EXPECT_NEAR(fidelity(coherent_dm(0.71, 15), coherent_dm(0.0, 15)), std::exp(-0.5041), 1e-3);
  const Complex a{0.3, -0.4}, b{-0.2, 0.5};
  EXPECT_NEAR(fidelity(coherent_dm(a, 20), coherent_dm(b, 20)), std::exp(-std::norm(a - b)), 1e-9);
}

TEST(Fidelity, Symmetric) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = random_state(10, 100 + s, 1 + s % 5), b = random_state(10, 200 + s, 1 + (s + 2) % 5);
    // rank-deficient states: zero eigenvalues come back as sqrt(eps) ~ 1e-8
    EXPECT_NEAR(fidelity(a, b), fidelity(b, a), 1e-7);
  }
}

TEST(Fidelity, Errors) {
  EXPECT_THROW(fidelity(DensityMatrix::fock(0, 4), DensityMatrix::fock(0, 5)), Error);
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  try {
    fidelity(DensityMatrix(neg), DensityMatrix::fock(0, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_state);
  }
}

TEST(Metrics, PurityAndMeanPhoton) {
  EXPECT_NEAR(purity(DensityMatrix::pure(Vector::Random(6))), 1.0, 1e-12);
  EXPECT_NEAR(purity(DensityMatrix::maximally_mixed(7)), 1.0 / 7, 1e-15);
  EXPECT_NEAR(mean_photon(coherent_dm(0.71, 15)), 0.5041, 1e-6);
  EXPECT_EQ(mean_photon(DensityMatrix::fock(3, 5)), 3.0);
}

TEST(CoherentDm, Properties) {
  EXPECT_NEAR((coherent_dm(0.0, 6).elems - DensityMatrix::fock(0, 6).elems).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  const Complex a = std::polar(0.71, 1.2);
  const auto rho = coherent_dm(a, 15);
  EXPECT_NEAR(std::abs(mean_amplitude(rho) - a), 0.0, 1e-6);
  EXPECT_NEAR(rho.elems(0, 0).real(), 0.6041, 1e-4);
  for (int n = 0; n < 8; ++n)
    EXPECT_NEAR(rho.elems(n, n).real(), std::exp(-0.5041) * std::pow(0.5041, n) / std::tgamma(n + 1.0), 1e-9);
  try {
    coherent_dm(3.0, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::cutoff_too_small);
  }
}

TEST(CoherentOverlap, Examples) {
  EXPECT_NEAR(coherent_overlap(coherent_dm(0.5, 12)), 1.0, 1e-6);
  EXPECT_NEAR(coherent_overlap(coherent_dm(std::polar(0.7, -2.0), 12)), 1.0, 1e-6);
  EXPECT_NEAR(coherent_overlap(DensityMatrix::fock(1, 20)), std::exp(-1.0), 1e-6);
}

TEST(Rotate, CoherentStatePicksUpPhase) {
  const Complex a = std::polar(0.6, 0.2);
  const auto r = rotate(coherent_dm(a, 15), 0.9);
  EXPECT_LT((r.elems - coherent_dm(a * std::polar(1.0, 0.9), 15).elems).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Wigner, FockValuesAtOrigin) {
  EXPECT_NEAR(wigner_point(DensityMatrix::fock(0, 5), 0, 0), 1.0 / kTwoPi, 1e-6);
  EXPECT_NEAR(wigner_point(DensityMatrix::fock(1, 5), 0, 0), -1.0 / kTwoPi, 1e-6);
}

TEST(Wigner, RandomStateNormalization) {
  const auto rho = random_state(10, 77, 4);
  const auto axis = uniform_axis(-10.0, 10.0, 201);
  const auto g = wigner(rho, axis, axis);
  EXPECT_NEAR(g.riemann_sum(), 1.0, 1e-4);
}

TEST(Wigner, MarginalsAreQuadratureDistributions) {
  const auto rho = random_state(8, 5, 3);
  for (double x : {-1.5, 0.3, 2.2}) {
    const double mx = oracle::simpson([&](double p) { return wigner_point(rho, x, p); }, -12.0, 12.0, 1200);
    EXPECT_NEAR(mx, povm_prob(rho, 0.0, x), 1e-8);
    const double mp = oracle::simpson([&](double q) { return wigner_point(rho, q, x); }, -12.0, 12.0, 1200);
    EXPECT_NEAR(mp, povm_prob(rho, kPi / 2, x), 1e-8);
  }
}

TEST(Wigner, CoherentPeakLocation) {
  const Complex a{0.5, -0.3};
  const auto rho = coherent_dm(a, 15);
  const auto axis = uniform_axis(-5.0, 5.0, 101);
  const auto loc = wigner_max_location(rho, wigner(rho, axis, axis));
  EXPECT_NEAR(loc[0], 2 * a.real(), 1e-4);
  EXPECT_NEAR(loc[1], 2 * a.imag(), 1e-4);
}

TEST(Mle, VacuumReconstruction) {
  const auto fit = mle_fit(coherent_data(0.0, 10000, 1), 10);
  EXPECT_TRUE(fit.converged);
  EXPECT_GE(fidelity(fit.rho, DensityMatrix::fock(0, 10)), 0.99);
  EXPECT_NO_THROW(fit.rho.validate());
  EXPECT_GE(fit.min_accepted_step, 0.0);
}

TEST(Mle, CoherentMeanPhoton) {
  const auto fit = mle_fit(coherent_data(0.71, 10000, 2), 10);
  EXPECT_NEAR(mean_photon(fit.rho), 0.5041, 0.05 * 0.5041);
  EXPECT_GE(fidelity(fit.rho, coherent_dm(0.71, 10)), 0.99);
  EXPECT_TRUE(std::isfinite(fit.log_likelihood));
}

TEST(Mle, FixedPointLeavesStateInvariant) {
  const auto data = coherent_data(std::polar(0.71, 0.5), 5000, 3);
  MleOptions opt;
  opt.tol = 1e-13;
  opt.max_iter = 20000;
  const auto fit = mle_fit(data, 8, opt);
  Matrix R = Matrix::Zero(8, 8);
  for (const auto& q : data.pairs) {
    const Matrix P = povm_element(q.theta, q.x, 8);
    R += P / (fit.rho.elems * P).trace().real();
  }
  R /= static_cast<double>(data.pairs.size());
  EXPECT_NEAR((R * fit.rho.elems).trace().real(), 1.0, 1e-10);
  EXPECT_LT((R * fit.rho.elems - fit.rho.elems).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Mle, LikelihoodNeverDecreases) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto fit = mle_fit(coherent_data(std::polar(0.3 * s, static_cast<double>(s)), 2000, 10 + s), 10);
    EXPECT_GE(fit.min_accepted_step, 0.0);
  }
}

TEST(Mle, NonConvergenceIsReported) {
  MleOptions opt;
  opt.max_iter = 2;
  const auto fit = mle_fit(coherent_data(0.71, 2000, 4), 10, opt);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations, 2);
}

TEST(Mle, EmptyDatasetFails) {
  try {
    mle_fit(QuadratureDataset{}, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_data);
  }
}

TEST(Mle, RotationalCovariance) {
  const double delta = 0.8;
  auto data = coherent_data(std::polar(0.71, 0.3), 5000, 5);
  const auto a = mle_fit(data, 10);
  for (auto& q : data.pairs) q.theta += delta;
  const auto b = mle_fit(data, 10);
  EXPECT_GE(fidelity(b.rho, rotate(a.rho, delta)), 0.999);
  EXPECT_GE(fidelity(b.rho, coherent_dm(std::polar(0.71, 0.3 + delta), 10)), 0.99);
}

TEST(Mle, CutoffStability) {
  const auto data = coherent_data(std::polar(0.71, -0.4), 10000, 6);
  const auto a = mle_reconstruct(data, 10), b = mle_reconstruct(data, 14);
  EXPECT_NEAR(b.mean_photon.value / a.mean_photon.value, 1.0, 0.005);
  EXPECT_NEAR(b.purity.value / a.purity.value, 1.0, 0.005);
  EXPECT_NEAR(b.coherent_overlap.value / a.coherent_overlap.value, 1.0, 0.005);
}

TEST(Mle, ReportMetricsInRange) {
  const Complex alpha = std::polar(0.71, 2.0);
  const auto r = mle_reconstruct(coherent_data(alpha, 10000, 7), 10);
  EXPECT_NO_THROW(r.rho.validate());
  for (double v : {r.purity.value, r.coherent_overlap.value}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(r.mean_photon.value, 0.0);
  EXPECT_EQ(r.n_points, 10000u);
  // Wigner peak on the circle of radius 2|alpha|, within grid resolution
  EXPECT_NEAR(r.wigner_max_location[0], 2 * alpha.real(), 0.1);
  EXPECT_NEAR(r.wigner_max_location[1], 2 * alpha.imag(), 0.1);
}

TEST(Dataset, ThetaSpanAndRecordFilter) {
  QuadratureDataset d;
  for (int i = 0; i <= 10; ++i) d.pairs.push_back({0.1 * i, 0.0});
  EXPECT_NEAR(d.theta_span(), 1.0, 1e-12);
  extract::QuadratureRecord good, bad;
  good.points = {{0.1, 1.0}, {0.2, 2.0}};
  bad.points = {{0.3, 3.0}};
  bad.degenerate = true;
  const std::vector<extract::QuadratureRecord> recs{good, bad};
  EXPECT_EQ(dataset_from_records(recs).pairs.size(), 2u);
}

TEST(Bootstrap, SingleResampleIsInsufficient) {
  const auto r = bootstrap_errors(coherent_data(0.0, 500, 8), 6, 1,
                                  [](const DensityMatrix& m) { return std::vector<double>{purity(m)}; }, 1);
  EXPECT_TRUE(r.insufficient);
  EXPECT_EQ(r.stddev.at(0), 0.0);
  EXPECT_THROW(bootstrap_errors(coherent_data(0.0, 99, 8), 6, 5,
                                [](const DensityMatrix& m) { return std::vector<double>{purity(m)}; }, 1),
               Error);
}

TEST(Bootstrap, VacuumFidelitySpread) {
  const auto vac = DensityMatrix::fock(0, 10);
  const auto r = bootstrap_errors(coherent_data(0.0, 10000, 9), 10, 20,
                                  [&](const DensityMatrix& m) { return std::vector<double>{fidelity(m, vac)}; }, 2);
  EXPECT_FALSE(r.insufficient);
  EXPECT_EQ(r.used + r.failed, 20);
  EXPECT_LE(r.stddev[0], 0.01);
}

TEST(Bootstrap, DuplicatedDatasetShrinksSpread) {
  const auto d = coherent_data(0.71, 2000, 10);
  auto dd = d;
  dd.pairs.insert(dd.pairs.end(), d.pairs.begin(), d.pairs.end());
  const MetricSet nbar = [](const DensityMatrix& m) { return std::vector<double>{mean_photon(m)}; };
  const auto a = bootstrap_errors(d, 8, 60, nbar, 3);
  const auto b = bootstrap_errors(dd, 8, 60, nbar, 4);
  EXPECT_NEAR(b.stddev[0] / a.stddev[0], 1.0 / std::sqrt(2.0), 0.2);
}
