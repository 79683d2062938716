#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "dense_oracle.hpp"
#include "toy_scene.hpp"
#include "vical/information.hpp"
#include "vical/segment.hpp"

using namespace vical;

namespace {

Eigen::MatrixXd random_spd(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::MatrixXd a(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = n01(rng);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(k, k);
}

double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace

TEST_CASE("five or fewer keyframes leave the calibration unobservable") {
  // both paths must agree that the inverse does not exist
  for (int trial = 0; trial < 6; ++trial) {
    const Segment seg = testing::small_segment(3 + trial % 3, 10 + 2 * trial, 200 + trial);
    const Problem p = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {});
    const testing::DenseCovariance dense = testing::dense_calibration_covariance(p);
    CHECK(dense.nullity > 0);
    const MarginalCovariance m = marginal_covariance(p);
    CHECK(m.singular);
    CHECK_FALSE(m.reason.empty());
  }
}

TEST_CASE("QR marginal matches the dense inverse on small observable segments") {
  // a backward-stable double-precision factorization is accurate to about
  // eps * cond(J); the oracle works in extended precision
  double worst = 0.0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Segment seg = testing::small_segment(8 + trial % 3, 10 + trial % 11, 100 + trial);
    const Problem p = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {});
    REQUIRE(p.landmarks().size() <= 20);
    const testing::DenseCovariance dense = testing::dense_calibration_covariance(p);
    REQUIRE(dense.nullity == 0);
    const MarginalCovariance m = marginal_covariance(p);
    REQUIRE_FALSE(m.singular);
    const double err = rel_frobenius(m.covariance, dense.covariance);
    worst = std::max(worst, err);
    worst_ratio = std::max(worst_ratio, err / (dense.condition * std::numeric_limits<double>::epsilon()));
    CHECK((m.covariance - m.covariance.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<CalibMatrix> es(m.covariance);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
  MESSAGE("worst relative error " << worst << ", worst error / (eps cond) " << worst_ratio);
  CHECK(worst_ratio < 1.0);
  CHECK(worst < 1e-7);
}

TEST_CASE("duplicating every factor halves the marginal") {
  const Segment seg = testing::small_segment(10, 20, 7);
  const Problem once = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {});
  Problem twice(testing::toy_calibration(), testing::toy_noise(), {});
  for (const auto& k : once.keyframes()) twice.add_keyframe(k);
  for (const auto& l : once.landmarks()) twice.add_landmark(l);
  for (int rep = 0; rep < 2; ++rep) {
    for (const auto& f : once.inertial_factors()) twice.add_inertial_factor(f.from, f.to, f.samples);
    for (const auto& f : once.reprojection_factors()) twice.add_reprojection_factor({f.keyframe, f.landmark, f.pixel});
  }
  // the gauge prior only touches directions no other factor sees
  twice.fix_gauge(seg.keyframes.front().id);
  const MarginalCovariance a = marginal_covariance(once);
  const MarginalCovariance b = marginal_covariance(twice);
  CHECK(rel_frobenius(b.covariance, 0.5 * a.covariance) < 1e-7);

  const NormalizationRef ref;
  const auto ha = group_entropies(a, default_grouping(), ref);
  const auto hb = group_entropies(b, default_grouping(), ref);
  for (std::size_t q = 0; q < ha.size(); ++q) {
    CHECK(hb[q] < ha[q]);
    const double k = static_cast<double>(default_grouping().groups[q].indices.size());
    CHECK(ha[q] - hb[q] == doctest::Approx(0.5 * k * std::log(2.0)).epsilon(1e-6));
  }
}

TEST_CASE("unobservable calibration is flagged singular") {
  const Segment seg = testing::small_segment(10, 20, 9);
  Problem p = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {});
  p.set_calibration_fixed(calib_index::kDistortion, true);
  const MarginalCovariance m = marginal_covariance(p);
  CHECK(m.singular);
  CHECK(m.reason.find("w") != std::string::npos);
  const auto h = group_entropies(m, default_grouping(), NormalizationRef{});
  for (double x : h) CHECK(x == kInfiniteEntropy);

  Problem empty(testing::toy_calibration(), testing::toy_noise(), {});
  CHECK_THROWS_AS(marginal_covariance(empty), std::invalid_argument);
}

TEST_CASE("segment without a gauge fix is singular") {
  const Segment seg = testing::small_segment(10, 20, 10);
  SegmentProblemOptions opt;
  opt.gauge = false;
  const Problem p = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {}, opt);
  const MarginalCovariance m = marginal_covariance(p);
  CHECK(m.singular);
  CHECK(m.reason.find("keyframe") != std::string::npos);
}

TEST_CASE("normalization") {
  std::mt19937_64 rng(4);
  const CalibMatrix sigma = random_spd(kCalibrationDim, rng);
  NormalizationRef ones;
  CHECK(normalize(sigma, ones) == sigma);

  NormalizationRef ref;
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int i = 0; i < kCalibrationDim; ++i) ref.sigma(i) = u(rng);
  const CalibMatrix diag = ref.sigma.cwiseAbs2().asDiagonal();
  CHECK((normalize(diag, ref) - CalibMatrix::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  const CalibMatrix n = normalize(sigma, ref);
  for (int i = 0; i < kCalibrationDim; ++i) {
    CHECK(n(i, i) == doctest::Approx(sigma(i, i) / (ref.sigma(i) * ref.sigma(i))).epsilon(1e-14));
  }
  ref.sigma(3) = 0.0;
  CHECK_THROWS_AS(normalize(sigma, ref), std::invalid_argument);
  ref.sigma(3) = -1.0;
  CHECK_THROWS_AS(ref.validate(), std::invalid_argument);
}

TEST_CASE("entropy closed forms") {
  CHECK(entropy(Eigen::MatrixXd::Identity(1, 1)) == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  for (int k : {1, 5, 11, 15, 26}) {
    const double expected = 0.5 * k * std::log(2.0 * M_PI * M_E);
    CHECK(std::abs(entropy(Eigen::MatrixXd::Identity(k, k)) - expected) < 1e-10);
    const double c = 0.37;
    CHECK(std::abs(entropy(c * Eigen::MatrixXd::Identity(k, k)) - 0.5 * k * std::log(2.0 * M_PI * M_E * c)) < 1e-10);
  }
}

TEST_CASE("entropy matches the eigenvalue oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 26;
    const Eigen::MatrixXd s = random_spd(k, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double oracle = 0.5 * (k * std::log(2.0 * M_PI * M_E) + es.eigenvalues().array().log().sum());
    CHECK(std::abs(entropy(s) - oracle) < 1e-10);
  }
  Eigen::Matrix2d indefinite;
  indefinite << 1, 2, 2, 1;
  CHECK(entropy(indefinite) == kInfiniteEntropy);
  CHECK(entropy(Eigen::Matrix2d::Zero()) == kInfiniteEntropy);
}

TEST_CASE("groupings") {
  const ParameterGrouping g = default_grouping();
  REQUIRE(g.size() == 3);
  CHECK(g.groups[0].indices.size() == 15);
  CHECK(g.groups[0].indices.front() == calib_index::kInertialBegin);
  CHECK(g.groups[1].indices == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(g.groups[2].indices == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(grouping_from_json(nlohmann::json::parse(to_json(g).dump())).groups[1].indices == g.groups[1].indices);

  ParameterGrouping overlap = g;
  overlap.groups[1].indices.push_back(0);
  CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);
  CHECK_THROWS_AS(grouping_from_json(nlohmann::json::parse(R"([{"name":"x","blocks":["nope"]}])")),
                  std::invalid_argument);
  // a strict subset of the parameters is allowed
  CHECK_NOTHROW(grouping_from_json(nlohmann::json::parse(R"([{"name":"x","blocks":["f"]}])")));

  // one group over everything is the scalar entropy of the whole normalized marginal
  const Segment seg = testing::small_segment(10, 20, 3);
  const Problem p = make_segment_problem(seg, testing::toy_calibration(), testing::toy_noise(), {});
  const MarginalCovariance m = marginal_covariance(p);
  NormalizationRef ref;
  ref.sigma.setConstant(0.01);
  const auto h = group_entropies(m, single_grouping(), ref);
  REQUIRE(h.size() == 1);
  CHECK(h[0] == doctest::Approx(entropy(normalize(m.covariance, ref))).epsilon(1e-12));
}

TEST_CASE("scores are a pure function of the segment") {
  const Segment seg = testing::small_segment(10, 20, 21);
  const auto a = score_segment(seg, testing::toy_calibration(), testing::toy_noise(), {},
                               default_grouping(), NormalizationRef{});
  const auto b = score_segment(seg, testing::toy_calibration(), testing::toy_noise(), {},
                               default_grouping(), NormalizationRef{});
  CHECK(a.entropies == b.entropies);
  CHECK(a.segment_id == seg.id);
  CHECK(a.first_keyframe == seg.keyframes.front().id);

  std::ostringstream csv;
  SegmentScore inf = a;
  inf.entropies[1] = kInfiniteEntropy;
  write_score_csv(csv, {a, inf}, default_grouping());
  const std::string text = csv.str();
  CHECK(text.rfind("segment_id,start_time,H_imu,H_camera,H_extrinsics\n", 0) == 0);
  CHECK(text.find(",inf,") != std::string::npos);
}

TEST_CASE("reference sigma is the geometric mean of marginal deviations") {
  MarginalCovariance a, b, bad;
  a.covariance = CalibMatrix::Identity() * 4.0;
  b.covariance = CalibMatrix::Identity() * 16.0;
  bad.singular = true;
  const NormalizationRef ref = reference_from_marginals({a, b, bad});
  CHECK((ref.sigma.array() - std::sqrt(8.0)).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(reference_from_marginals({bad}), std::invalid_argument);
  CHECK(normalization_from_json(nlohmann::json::parse(to_json(ref).dump())).sigma == ref.sigma);
}
