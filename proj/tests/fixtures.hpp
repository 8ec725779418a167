#pragma once

#include "balsam/model.hpp"
#include "balsam/simulate.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fixtures {

inline balsam::SubjectRecord subject(std::string id, double t, int delta, std::vector<double> x,
                                     std::vector<double> times, std::vector<double> z) {
  balsam::SubjectRecord s;
  s.id = std::move(id);
  s.t = t;
  s.delta = delta;
  s.x = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  s.times = std::move(times);
  s.z = std::move(z);
  return s;
}

inline balsam::ModelSpec model1(int p = 1) {
  balsam::ModelSpec spec;
  spec.kind = balsam::ModelKind::I;
  spec.num_covariates = p;
  return balsam::resolve(spec);
}

inline balsam::ModelSpec model2(int quad_points = 50) {
  balsam::ModelSpec spec;
  spec.kind = balsam::ModelKind::II;
  spec.num_covariates = 1;
  spec.spline = balsam::SplineConfig{3, {12.0}, 0.0, 24.0};
  spec.quad_points = quad_points;
  return balsam::resolve(spec);
}

inline Eigen::MatrixXd table1a_sigma() {
  Eigen::MatrixXd s(2, 2);
  s << 2.0, 3.0, 3.0, 5.0;
  return s;
}

inline Eigen::MatrixXd table1b_sigma() {
  Eigen::MatrixXd s(4, 4);
  s << 6.60, 5.24, 5.24, 5.93,
       5.24, 7.85, 5.80, 6.08,
       5.24, 5.80, 6.53, 4.57,
       5.93, 6.08, 4.57, 6.43;
  return s;
}

inline balsam::SimulationDesign table1a_design(int n, std::uint64_t seed) {
  balsam::SimulationDesign d;
  d.n = n;
  d.spec = model1();
  d.truth.lambda = 0.02;
  d.truth.beta = Eigen::VectorXd::Constant(1, 0.05);
  d.truth.alpha = 0.25;
  d.truth.mu = Eigen::Vector2d(1.20, 0.25);
  d.truth.Sigma = table1a_sigma();
  d.truth.sigma2 = 4.0;
  d.covariates = {balsam::CovariateLaw{}};
  for (int k = 0; k <= 12; ++k) d.schedule.push_back(2.0 * k);
  d.censoring.administrative_time = 24.0;
  d.censoring.independent_rate = 0.01;
  d.seed = seed;
  return d;
}

inline balsam::SimulationDesign table1b_design(int n, std::uint64_t seed, int quad_points = 50) {
  balsam::SimulationDesign d = table1a_design(n, seed);
  d.spec = model2(quad_points);
  d.truth.mu = Eigen::Vector4d(1.20, 0.25, 1.20, 0.25);
  d.truth.Sigma = table1b_sigma();
  return d;
}

}  // namespace fixtures
