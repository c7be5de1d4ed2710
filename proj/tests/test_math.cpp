#include "spinhover/math.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace spinhover;

namespace {

using Vec1 = Eigen::Matrix<double, 1, 1>;

Vec1 scalar(double v) { return Vec1::Constant(v); }

// Global error of RK4 on x' = lambda x at t = horizon.
double decay_error(double lambda, double dt, double horizon) {
  Vec1 x = scalar(1.0);
  const long n = std::lround(horizon / dt);
  for (long i = 0; i < n; ++i) {
    x = rk4_step([lambda](double, const Vec1& y) { return Vec1(lambda * y); }, x, i * dt, dt);
  }
  return std::abs(x(0) - std::exp(lambda * horizon));
}

}  // namespace

TEST(Rk4, ZeroDerivativeKeepsState) {
  const Vec1 x = rk4_step([](double, const Vec1&) { return scalar(0.0); }, scalar(7.0), 0.0, 0.1);
  EXPECT_EQ(x(0), 7.0);
}

TEST(Rk4, ExponentialGrowthOneStep) {
  const Vec1 x = rk4_step([](double, const Vec1& y) { return y; }, scalar(1.0), 0.0, 0.1);
  EXPECT_NEAR(x(0), std::exp(0.1), 1e-7);
  EXPECT_NEAR(x(0), 1.105170918, 1e-7);
}

TEST(Rk4, HalvingStepCutsErrorSixteenfold) {
  const double e1 = decay_error(-10.0, 0.02, 1.0);
  const double e2 = decay_error(-10.0, 0.01, 1.0);
  EXPECT_NEAR(e1 / e2, 16.0, 1.5);
}

TEST(Rk4, EmpiricalOrderFromLogLogSlope) {
  std::vector<double> log_dt, log_err;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    log_dt.push_back(std::log(dt));
    log_err.push_back(std::log(decay_error(-10.0, dt, 1.0)));
  }
  // Least-squares slope.
  const double n = static_cast<double>(log_dt.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_dt.size(); ++i) {
    sx += log_dt[i];
    sy += log_err[i];
    sxx += log_dt[i] * log_dt[i];
    sxy += log_dt[i] * log_err[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, 4.0, 0.2);
}

TEST(Rk4, NonFiniteDerivativeFaultsWithTime) {
  try {
    rk4_step([](double, const Vec1&) { return scalar(std::nan("")); }, scalar(1.0), 2.5, 0.1);
    FAIL() << "expected IntegrationFault";
  } catch (const IntegrationFault& e) {
    EXPECT_DOUBLE_EQ(e.time(), 2.5);
  }
}

TEST(Rk4, RejectsNonPositiveStep) {
  auto f = [](double, const Vec1& y) { return y; };
  EXPECT_THROW(rk4_step(f, scalar(1.0), 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(rk4_step(f, scalar(1.0), 0.0, -1e-3), std::invalid_argument);
}

TEST(Lpf, ConstantInputConverges) {
  Lpf1 f{5.0};
  f.initialized = true;
  double y = 0.0;
  for (int i = 0; i < 5000; ++i) y = lpf_step(f, 3.0, 1e-3);
  EXPECT_NEAR(y, 3.0, 1e-9);
}

TEST(Lpf, StepResponseAtOneTimeConstant) {
  const double wc = 10.0, dt = 1e-3;
  Lpf1 f{wc};
  f.initialized = true;  // start from 0
  double y = 0.0;
  const int n = static_cast<int>(std::lround(1.0 / wc / dt));
  for (int i = 0; i < n; ++i) y = lpf_step(f, 1.0, dt);
  EXPECT_NEAR(y, 1.0 - std::exp(-1.0), 1e-9);
  EXPECT_NEAR(y, 0.632, 0.01);
}

TEST(Lpf, AttenuatesTenTimesCutoff) {
  const double wc = 10.0, dt = 1e-4, w = 10.0 * wc;
  Lpf1 f{wc};
  f.initialized = true;
  double peak = 0.0;
  for (int i = 0; i < 40000; ++i) {
    const double y = lpf_step(f, std::sin(w * i * dt), dt);
    if (i > 20000) peak = std::max(peak, std::abs(y));
  }
  EXPECT_LE(peak, 0.12);
  EXPECT_NEAR(peak, 1.0 / std::sqrt(101.0), 2e-3);
}

TEST(Lpf, FirstSampleSeedsState) {
  Lpf1 f{1.0};
  EXPECT_DOUBLE_EQ(lpf_step(f, 4.0, 0.01), 4.0);
}

TEST(Lpf, OutputStaysWithinInputBounds) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  Lpf1 f{30.0};
  for (int i = 0; i < 10000; ++i) {
    const double y = lpf_step(f, u(rng), 5e-3);
    EXPECT_GE(y, -2.0);
    EXPECT_LE(y, 5.0);
  }
}

TEST(Tilt, IdentityIsUpright) {
  const TiltReading r = zb_to_xi(Orientation::Identity());
  EXPECT_TRUE(r.xi.isZero(0.0));
  EXPECT_FALSE(r.out_of_envelope);
}

TEST(Tilt, SmallRollMapsToXiX) {
  for (double phi : {0.01, 0.05, 0.1}) {
    const Orientation q(Eigen::AngleAxisd(phi, Vec3::UnitX()));
    const Vec2 xi = zb_to_xi(q).xi;
    EXPECT_NEAR(xi.x(), phi, phi * phi * phi);
    EXPECT_NEAR(xi.y(), 0.0, 1e-15);
  }
}

TEST(Tilt, YawDoesNotTilt) {
  for (double psi : {-3.0, -1.0, 0.5, 2.0, 3.1}) {
    const Orientation q(Eigen::AngleAxisd(psi, Vec3::UnitZ()));
    EXPECT_LT(zb_to_xi(q).xi.norm(), 1e-15);
  }
}

TEST(Tilt, RoundTripWithinCubicError) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < 500; ++i) {
    Vec2 xi(u(rng), u(rng));
    if (xi.norm() > 0.2) xi *= 0.2 / xi.norm();
    const Vec2 back = zb_to_xi(orientation_from_xi(xi, 0.0)).xi;
    EXPECT_LE((back - xi).norm(), std::pow(xi.norm(), 3) + 1e-15);
  }
}

TEST(Tilt, FlagsTiltBeyondHorizontal) {
  const Orientation q(Eigen::AngleAxisd(1.7, Vec3::UnitY()));
  EXPECT_TRUE(zb_to_xi(q).out_of_envelope);
  EXPECT_NEAR(tilt_angle(q), 1.7, 1e-12);
}

TEST(Tilt, HeadingOfYawRotation) {
  for (double psi : {-2.5, 0.0, 1.0, 3.0}) {
    const Orientation q(Eigen::AngleAxisd(psi, Vec3::UnitZ()));
    EXPECT_NEAR(yaw_of(q), psi, 1e-12);
    EXPECT_NEAR(yaw_of(orientation_from_xi(Vec2(0.05, -0.02), psi)), psi, 2e-3);
  }
}

TEST(Quaternion, StaysOrthonormalOverMillionSteps) {
  using Vec4 = Eigen::Vector4d;
  const Vec3 omega(0.7, -1.3, 35.0);
  Orientation q = orientation_from_xi(Vec2(0.1, 0.05), 0.2);
  const double dt = 5e-4;
  for (int i = 0; i < 1000000; ++i) {
    Vec4 x(q.w(), q.x(), q.y(), q.z());
    x = rk4_step(
        [&](double, const Vec4& y) {
          return quaternion_rate(Orientation(y(0), y(1), y(2), y(3)), omega);
        },
        x, i * dt, dt);
    q = Orientation(x(0), x(1), x(2), x(3)).normalized();
  }
  const Mat3 r = q.toRotationMatrix();
  EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-6);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
}

TEST(Quaternion, RateMatchesSmallRotation) {
  const Orientation q = orientation_from_xi(Vec2(0.2, -0.1), 0.7);
  const Vec3 omega(0.3, 0.2, -0.5);
  const double h = 1e-6;
  const Orientation ahead = q * Orientation(Eigen::AngleAxisd(omega.norm() * h, omega.normalized()));
  const Eigen::Vector4d numeric =
      (Eigen::Vector4d(ahead.w(), ahead.x(), ahead.y(), ahead.z()) -
       Eigen::Vector4d(q.w(), q.x(), q.y(), q.z())) / h;
  EXPECT_LT((quaternion_rate(q, omega) - numeric).norm(), 1e-6);
}

TEST(Angles, WrapIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3.0 * kPi + 0.1), -kPi + 0.1, 1e-12);
  EXPECT_NEAR(wrap_angle(-0.3), -0.3, 1e-15);
}

TEST(Angles, GyroMatrixIsQuarterTurn) {
  const Mat2 j = gyro_j();
  EXPECT_TRUE((j * j + Mat2::Identity()).isZero(0.0));
  EXPECT_TRUE((j * Vec2(1.0, 0.0)).isApprox(Vec2(0.0, -1.0)));
}
