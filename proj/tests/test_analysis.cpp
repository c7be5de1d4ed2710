#include "spinhover/analysis.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>

using namespace spinhover;

namespace {

VehicleParams unit(Handedness h = Handedness::Cw, AirframeConstants k = {}) {
  return make_bicopter(k, h);
}

AirframeConstants spec_calibration() {
  AirframeConstants k;
  k.torque_ratio = 0.006;
  k.drag_h = 0.01214;
  return k;
}

// Closed-form stability of I_d s^2 + (b - i I_z Omega) s - i delta K = 0,
// written with z = xi_x + i xi_y (J acts as multiplication by -i).
bool analytic_stable(double kp, double kd, const VehicleParams& p) {
  const double w = std::abs(equilibrium_yaw_rate(p));
  const double b = kd + 0.5 * p.arm * p.arm * p.drag_v;
  return kp > 0.0 && b * w * p.inertia_z / p.inertia_d > kp;
}

// Roots of the complex quadratic, independent of the 4x4 assembly.
double analytic_max_real(double kp, double kd, const VehicleParams& p) {
  using C = std::complex<double>;
  const double spin = equilibrium_yaw_rate(p);
  const double b = kd + 0.5 * p.arm * p.arm * p.drag_v;
  const C a2(p.inertia_d, 0.0);
  const C a1(b, -p.inertia_z * spin);
  const C a0(0.0, -p.handedness * kp);
  const C disc = std::sqrt(a1 * a1 - 4.0 * a2 * a0);
  return std::max(((-a1 + disc) / (2.0 * a2)).real(), ((-a1 - disc) / (2.0 * a2)).real());
}

}  // namespace

TEST(Equilibrium, CalibratedDefaultsGive35) {
  EXPECT_NEAR(equilibrium_yaw_rate(unit()), 35.0, 0.1);
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Cw, spec_calibration())), 35.0, 0.1);
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Ccw, spec_calibration())), -35.0, 0.1);
}

TEST(Equilibrium, ZeroTorqueRatioGivesZero) {
  AirframeConstants k;
  k.torque_ratio = 0.0;
  EXPECT_EQ(equilibrium_yaw_rate(unit(Handedness::Cw, k)), 0.0);
}

TEST(Equilibrium, ScalesWithParameters) {
  const AirframeConstants base;
  const double w0 = equilibrium_yaw_rate(unit(Handedness::Cw, base));
  AirframeConstants k = base;
  k.torque_ratio *= 2.0;
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Cw, k)), 2.0 * w0, 1e-12);
  k = base;
  k.mass *= 1.5;
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Cw, k)), 1.5 * w0, 1e-12);
  k = base;
  k.drag_h *= 4.0;
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Cw, k)), w0 / 4.0, 1e-12);
  k = base;
  k.arm *= 2.0;
  EXPECT_NEAR(equilibrium_yaw_rate(unit(Handedness::Cw, k)), w0 / 4.0, 1e-12);
}

TEST(Equilibrium, HoverThrustPerPropeller) {
  const RelaxedHoverEquilibrium eq = relaxed_hover_equilibrium(unit());
  EXPECT_NEAR(eq.thrust_per_prop, 0.026 * 9.81 / 2, 1e-15);
  EXPECT_NEAR(precession_rate(unit()), 68.8, 0.05);
}

TEST(Reduced, RestIsEquilibrium) {
  ReducedAttitudeState s;
  s.xi = Vec2(0.05, -0.02);
  s.spin = 35.0;
  const auto d = reduced_attitude_derivative(s, Vec2::Zero(), unit());
  EXPECT_TRUE(d.xi_dot.isZero(0.0));
  EXPECT_TRUE(d.xi_ddot.isZero(0.0));
  EXPECT_DOUBLE_EQ(d.psi_dot, 35.0);
}

TEST(Reduced, ConstantTorqueDriftIsOrthogonal) {
  const VehicleParams p = unit();
  const double tau = 1e-4, spin = equilibrium_yaw_rate(p);
  ReducedAttitudeState s;
  s.spin = spin;
  s.xi_dot = Vec2(0.0, tau / (p.inertia_z * spin));
  const auto d = reduced_attitude_derivative(s, Vec2(tau, 0.0), p);
  EXPECT_LT(d.xi_ddot.norm(), 1e-12);
}

TEST(Reduced, FreePrecessionKeepsRateMagnitude) {
  AirframeConstants k;
  k.drag_v = 0.0;
  const VehicleParams p = unit(Handedness::Cw, k);
  const double spin = equilibrium_yaw_rate(p);
  const double wp = p.inertia_z * spin / p.inertia_d;
  using Vec4 = Eigen::Vector4d;
  Vec4 x(0.0, 0.0, 2e-3, -1e-3);
  const Vec2 v0 = x.tail<2>();
  const double dt = 1e-4;
  for (int i = 0; i < 10000; ++i) {
    x = rk4_step(
        [&](double, const Vec4& y) {
          ReducedAttitudeState s{y.head<2>(), y.tail<2>(), 0.0, spin};
          const auto d = reduced_attitude_derivative(s, Vec2::Zero(), p);
          Vec4 dy;
          dy << d.xi_dot, d.xi_ddot;
          return dy;
        },
        x, i * dt, dt);
  }
  EXPECT_LT(std::abs(x.tail<2>().norm() - v0.norm()) / v0.norm(), 1e-9);
  // Closed form: xi'(t) = (cos(wp t) I - sin(wp t) J) xi'(0).
  const double t = 1.0;
  const Vec2 expected = (std::cos(wp * t) * Mat2::Identity() - std::sin(wp * t) * gyro_j()) * v0;
  EXPECT_LT((x.tail<2>() - expected).norm(), 1e-9);
}

TEST(Reduced, FlagsEnvelopeBreach) {
  ReducedAttitudeState s;
  s.xi = Vec2(0.31, 0.0);
  s.spin = 35.0;
  EXPECT_TRUE(reduced_attitude_derivative(s, Vec2::Zero(), unit()).out_of_envelope);
}

TEST(InertialTorque, ZeroDifferential) {
  const auto t = inertial_torque(0.7, 0.0, Vec2::Zero(), unit());
  EXPECT_TRUE(t.total().isZero(0.0));
}

TEST(InertialTorque, DifferentialAlongHeading) {
  const VehicleParams p = unit();
  EXPECT_TRUE(inertial_torque(0.0, 0.006, Vec2::Zero(), p).thrust.isApprox(Vec2(0.006, 0.0)));
  // Same from per-propeller thrusts: l (f1 - f3) = 0.006.
  const double f3 = 0.1, f1 = f3 + 0.006 / p.arm;
  EXPECT_TRUE(inertial_torque(0.0, {f1, f3}, Vec2::Zero(), p).thrust.isApprox(Vec2(0.006, 0.0)));
  EXPECT_TRUE(inertial_torque(kPi / 2, 0.006, Vec2::Zero(), p)
                  .thrust.isApprox(Vec2(0.0, 0.006), 1e-12));
}

TEST(InertialTorque, DragProjectionAveragesToHalfIdentity) {
  const int n = 64;
  Mat2 sum = Mat2::Zero();
  for (int i = 0; i < n; ++i) sum += drag_projection(2.0 * kPi * i / n);
  EXPECT_LT((sum / n - 0.5 * Mat2::Identity()).norm(), 1e-12);
}

TEST(InertialTorque, CycleAveragedDragDamping) {
  const VehicleParams p = unit();
  const Vec2 rate(0.3, -0.2);
  Vec2 sum = Vec2::Zero();
  const int n = 90;
  for (int i = 0; i < n; ++i) sum += inertial_torque(2.0 * kPi * i / n, 0.0, rate, p).drag;
  EXPECT_TRUE((sum / n).isApprox(-0.5 * p.arm * p.arm * p.drag_v * rate, 1e-12));
}

TEST(ClosedLoop, FreeGyroscopeSpectrum) {
  AirframeConstants k;
  k.drag_v = 0.0;
  const VehicleParams p = unit(Handedness::Cw, k);
  const ClosedLoopModel m = closed_loop_matrix({0.0, 0.0}, p);
  Eigen::EigenSolver<Eigen::Matrix4d> es(m.a);
  std::vector<double> mags;
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(es.eigenvalues()(i).real(), 0.0, 1e-9);
    mags.push_back(std::abs(es.eigenvalues()(i).imag()));
  }
  std::sort(mags.begin(), mags.end());
  EXPECT_NEAR(mags[0], 0.0, 1e-9);
  EXPECT_NEAR(mags[1], 0.0, 1e-9);
  EXPECT_NEAR(mags[2], precession_rate(p), 1e-9);
  EXPECT_NEAR(mags[3], precession_rate(p), 1e-9);
}

TEST(ClosedLoop, EigenvaluesMatchComplexQuadratic) {
  for (Handedness h : {Handedness::Cw, Handedness::Ccw}) {
    const VehicleParams p = unit(h);
    for (double kp : {-2e-3, 5e-4, 1e-3, 4e-3, 0.04}) {
      for (double kd : {0.0, 1e-4, 8e-4}) {
        const double oracle = analytic_max_real(kp, kd, p);
        EXPECT_NEAR(max_real_eigenvalue(closed_loop_matrix({kp, kd}, p)), oracle, 1e-8)
            << "kp=" << kp << " kd=" << kd << " delta=" << p.handedness;
      }
    }
  }
}

TEST(RouthHurwitz, SpecExamples) {
  const VehicleParams p = unit();
  const StabilityReport ok = routh_hurwitz_check({1e-3, 0.0}, p);
  EXPECT_EQ(ok.verdict, Stability::Stable);
  EXPECT_NEAR(ok.kp_upper_bound, 2.48e-3, 0.01e-3);
  EXPECT_TRUE(ok.violated.empty());

  const StabilityReport neg = routh_hurwitz_check({-1e-3, 0.0}, p);
  EXPECT_EQ(neg.verdict, Stability::Unstable);
  EXPECT_NE(neg.violated.find("sign condition"), std::string::npos);

  const StabilityReport big = routh_hurwitz_check({5e-3, 0.0}, p);
  EXPECT_EQ(big.verdict, Stability::Unstable);
  EXPECT_NE(big.violated.find("damping condition"), std::string::npos);
  EXPECT_GT(max_real_eigenvalue(closed_loop_matrix({5e-3, 0.0}, p)), 0.0);
}

TEST(RouthHurwitz, MarginalAtBoundary) {
  const VehicleParams p = unit();
  const double bound = routh_hurwitz_check({1e-3, 0.0}, p).kp_upper_bound;
  EXPECT_EQ(routh_hurwitz_check({bound, 0.0}, p).verdict, Stability::Marginal);
  EXPECT_EQ(routh_hurwitz_check({bound * (1 + 1e-3), 0.0}, p).verdict, Stability::Unstable);
  EXPECT_EQ(routh_hurwitz_check({bound * (1 - 1e-3), 0.0}, p).verdict, Stability::Stable);
}

TEST(RouthHurwitz, DefaultGainsStableOnBothUnits) {
  for (Handedness h : {Handedness::Cw, Handedness::Ccw}) {
    EXPECT_EQ(routh_hurwitz_check({0.04, 8e-4}, unit(h)).verdict, Stability::Stable);
  }
}

TEST(RouthHurwitz, UndefinedWithoutSpin) {
  AirframeConstants k;
  k.torque_ratio = 0.0;
  EXPECT_THROW(routh_hurwitz_check({1e-3, 0.0}, unit(Handedness::Cw, k)), UndefinedRegime);
}

TEST(RouthHurwitz, AgreesWithOraclesOnRandomGains) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> kp(-0.01, 0.06), kd(0.0, 2e-3);
  int compared = 0;
  for (int i = 0; i < 2000; ++i) {
    const VehicleParams p = unit(i % 2 ? Handedness::Ccw : Handedness::Cw);
    const AttitudeGains g{kp(rng), kd(rng)};
    const StabilityReport r = routh_hurwitz_check(g, p);
    if (r.verdict == Stability::Marginal) continue;
    ++compared;
    const bool stable = r.verdict == Stability::Stable;
    EXPECT_EQ(stable, analytic_stable(g.kp, g.kd, p));
    EXPECT_EQ(stable, max_real_eigenvalue(closed_loop_matrix(g, p)) < 0.0);
  }
  EXPECT_GT(compared, 1900);
}

TEST(StabilityMap, GridAgreementBothUnits) {
  const auto rows = stability_map(AirframeConstants{}, SweepSpec{});
  ASSERT_EQ(rows.size(), 5000u);
  int stable = 0;
  for (const StabilityMapRow& r : rows) {
    if (r.verdict == Stability::Marginal) continue;
    EXPECT_EQ(r.verdict == Stability::Stable, r.max_real_eig < 0.0)
        << r.kp << " " << r.kd << " " << r.delta;
    stable += r.verdict == Stability::Stable;
  }
  EXPECT_GT(stable, 0);
  EXPECT_LT(stable, 5000);
}

TEST(StabilityMap, CsvShape) {
  const auto rows = stability_map(AirframeConstants{}, SweepSpec{}, {Handedness::Cw});
  std::ostringstream os;
  write_stability_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "K_tau_p,K_tau_d,delta,verdict,max_real_eig");
  int n = 0;
  while (std::getline(is, line)) ++n;
  EXPECT_EQ(n, 2500);
}

TEST(Linearization, AtRestNoDeviation) {
  const auto e = linearization_error(unit(), Vec2::Zero(), cyclic_program(Vec2::Zero()), 1.0);
  EXPECT_LT(e.max_deviation, 1e-9);
  EXPECT_FALSE(e.out_of_envelope);
}

TEST(Linearization, SmallTiltAgrees) {
  const auto e =
      linearization_error(unit(), Vec2(0.05, 0.0), cyclic_program(Vec2(1e-4, 0.0)), 1.0);
  EXPECT_LT(e.max_deviation, 0.01);
}

TEST(Linearization, LargeTiltFlagged) {
  const auto small = linearization_error(unit(), Vec2(0.05, 0.0), cyclic_program(Vec2::Zero()), 1.0);
  const auto large = linearization_error(unit(), Vec2(0.3, 0.0), cyclic_program(Vec2::Zero()), 1.0);
  EXPECT_TRUE(large.out_of_envelope);
  EXPECT_GT(large.max_deviation, small.max_deviation);
}
