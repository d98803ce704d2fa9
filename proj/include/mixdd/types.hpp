#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixdd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
public:
  using Error::Error;
};

/// Degenerate element Jacobian met during assembly.
class AssemblyError : public Error {
public:
  using Error::Error;
};

class PartitionError : public Error {
public:
  using Error::Error;
};

/// A factorization that should succeed failed (singular interior block,
/// non positive definite coarse matrix, ...).
class FactorizationError : public Error {
public:
  using Error::Error;
};

/// Interface impedance that does not keep the Robin problem SPD.
class ImpedanceError : public Error {
public:
  using Error::Error;
};

/// Newton process that did not reach its threshold. Carries the residual
/// history so callers can report it.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const { return history_; }

private:
  std::vector<double> history_;
};

/// Krylov solver failure (iteration cap, stagnation, breakdown).
class KrylovError : public Error {
public:
  KrylovError(const std::string& what, int iterations,
              std::vector<double> residuals)
      : Error(what), iterations_(iterations), residuals_(std::move(residuals)) {}

  int iterations() const { return iterations_; }
  const std::vector<double>& residuals() const { return residuals_; }

private:
  int iterations_;
  std::vector<double> residuals_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace mixdd
