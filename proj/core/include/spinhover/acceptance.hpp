#pragma once

// Acceptance battery: each criterion runs against a config and reports a
// verdict with the measured numbers. Tolerances are fixed here.

#include "spinhover/config.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace spinhover {

namespace tolerance {
inline constexpr double kSpinupRelative = 0.01;     // |Omega - Omega*| / Omega*
inline constexpr double kSpinupHorizon = 10.0;      // s simulated
inline constexpr double kSpinupWall = 5.0;          // s
inline constexpr double kPrecessionRelative = 0.005;
inline constexpr double kCycleAverageRelative = 1e-10;
inline constexpr double kLinearization = 0.01;      // rad over 1 s
inline constexpr double kLinearizationTilt = 0.05;  // rad, initial |xi|
inline constexpr double kBicopterRmsH = 0.157;      // m
inline constexpr double kBicopterRmsV = 0.088;      // m
inline constexpr double kBicopterWall = 30.0;       // s
inline constexpr double kQuadRmsH = 0.097;          // m
inline constexpr double kQuadRmsV = 0.076;          // m
inline constexpr double kLaunchRate = 10.0;         // rad/s
inline constexpr double kThresholdRate = 8.7;       // rad/s
inline constexpr int kThrowSeeds = 20;
inline constexpr double kThrowSuccess = 0.9;
inline constexpr double kThrowTiltMax = 0.3;        // rad
inline constexpr double kThrowYawRate = 26.0;       // rad/s
inline constexpr double kConservationRelative = 1e-3;
inline constexpr double kRk4Order = 4.0;
inline constexpr double kRk4OrderBand = 0.2;
}  // namespace tolerance

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double wall_seconds = 0.0;
};

struct AcceptanceCriterion {
  std::string id;
  std::string title;
  std::function<CriterionResult(const Config&)> run;
};

/// All criteria in reporting order.
const std::vector<AcceptanceCriterion>& acceptance_criteria();

/// Runs the criteria whose ids are listed (all when `only` is empty).
/// Throws ConfigError for an unknown id. A criterion that throws is
/// reported as failed with the message.
std::vector<CriterionResult> run_acceptance(const Config& config,
                                            const std::vector<std::string>& only = {},
                                            std::ostream* progress = nullptr);

/// One "PASS|FAIL id  detail" line per result.
void print_result(std::ostream& os, const CriterionResult& r);

// Individual criteria, also used by the unit tests.
CriterionResult check_relaxed_hover(const Config& c);
CriterionResult check_precession(const Config& c);
CriterionResult check_routh_hurwitz(const Config& c);
CriterionResult check_cycle_average(const Config& c);
CriterionResult check_linearization(const Config& c);
CriterionResult check_bicopter_flight(const Config& c);
CriterionResult check_quad_flight(const Config& c);
CriterionResult check_mode_detection(const Config& c);
CriterionResult check_hand_throw(const Config& c);
CriterionResult check_conservation(const Config& c);

/// Measured order of RK4 on the drag-free rigid body from the errors at
/// dt, dt/2 and dt/4 against a fine reference.
double rk4_empirical_order(const VehicleParams& p, double horizon = 1.0, double dt = 4e-3);

/// Oscillation frequency of xi' in the torque-free reduced model, from the
/// unwrapped phase of xi' over `horizon`.
double measured_precession_rate(const VehicleParams& p, double horizon = 1.0,
                                double dt = 1e-4);

}  // namespace spinhover
