#pragma once

#include <Eigen/Core>

#include <functional>

namespace prodenv {

struct NelderMeadOptions {
    int max_evaluations = 1000;
    double initial_step = 0.1;
    double x_tolerance = 1e-8;
    double f_tolerance = 1e-14;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
};

/// Derivative-free local minimization (standard reflection/expansion/contraction/shrink).
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opt = {});

}  // namespace prodenv
