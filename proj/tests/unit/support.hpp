#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "sqs/errors.hpp"
#include "sqs/lattice_field.hpp"

namespace sqs::test {

inline FieldSpec checkerboard(double eta = 0.5, int d = 2, double q = 0.5) {
  return FieldSpec(d, eta, Matrix::Identity(d, d), UnitCellCoefficient(Matrix::Identity(d, d)), CellLaw::bernoulli(q));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sqs_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace sqs::test
