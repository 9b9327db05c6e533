#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "emr/autodiff.hpp"
#include "emr/memory.hpp"
#include "emr/parameter_store.hpp"

namespace emr::testing {

ad::Array random_array(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                       double scale = 1.0);

struct GradCheck {
  double max_relative_error = 0.0;  // worst tensor: |a - n| / max(|a| + |n|, 1e-4), L2 norms
  std::size_t checked = 0;          // scalar entries perturbed
  std::string worst;                // label of the worst tensor
};

/// Central differences of the scalar `f()` against backward() for every entry
/// of every input. Inputs must be leaves that f() reads.
GradCheck gradcheck(const std::function<ad::Node()>& f, const std::vector<ad::Node>& inputs,
                    const std::vector<std::string>& labels = {}, double h = 1e-6);

/// Wraps a matrix-valued function into a scalar by a fixed random projection.
ad::Node project(const ad::Node& out, const ad::Array& weights);

/// One primitive instance with freshly drawn inputs.
struct PrimitiveCase {
  std::string name;
  std::vector<ad::Node> inputs;
  std::function<ad::Node()> forward;  // scalar
};
/// Every differentiable primitive and composite, drawn with random shapes.
std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng);

/// All parameters of a store, in name order, with labels.
std::vector<ad::Node> store_nodes(const ParameterStore& store, std::vector<std::string>* labels);

/// A full memory of `n` random slots plus an incoming entry, all leaves.
struct RandomState {
  MemoryState memory;
  EncodedEntry incoming;
  std::vector<ad::Node> leaves;
};
RandomState random_state(std::size_t n, std::size_t k, std::mt19937_64& rng, double scale = 1.0);

}  // namespace emr::testing
