#include "emr/parameter_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace emr {

ad::Node ParameterStore::add(const std::string& name, ad::Array init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Entry entry;
  entry.first_moment = ad::Array(init.rows(), init.cols());
  entry.second_moment = ad::Array(init.rows(), init.cols());
  entry.node = ad::parameter(std::move(init));
  auto node = entry.node;
  entries_.emplace(name, std::move(entry));
  return node;
}

ad::Node ParameterStore::add_gaussian(const std::string& name, std::size_t rows, std::size_t cols,
                                      double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Array init(rows, cols);
  for (double& v : init.values()) v = dist(rng);
  return add(name, std::move(init));
}

ad::Node ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second.node;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.node.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.node.zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, e] : entries_) {
    if (!e.node.has_grad()) continue;
    for (double g : e.node.impl()->grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& [_, e] : entries_) {
      if (!e.node.has_grad()) continue;
      for (double& g : e.node.grad_buffer().values()) g *= factor;
    }
  }
  return norm;
}

ParameterStore ParameterStore::snapshot() const {
  ParameterStore copy;
  for (const auto& [name, e] : entries_) copy.add(name, e.node.value());
  return copy;
}

void ParameterStore::merge_gradients(const ParameterStore& worker, double weight) {
  if (worker.size() != size()) throw std::invalid_argument("merge_gradients: layout differs");
  auto it = worker.entries_.begin();
  for (auto& [name, e] : entries_) {
    if (it->first != name) throw std::invalid_argument("merge_gradients: name mismatch at " + name);
    if (it->second.node.has_grad()) {
      const auto& src = it->second.node.impl()->grad;
      auto& dst = e.node.grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
    }
    ++it;
  }
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.size() != size()) throw std::invalid_argument("copy_values_from: layout differs");
  auto it = other.entries_.begin();
  for (auto& [name, e] : entries_) {
    if (it->first != name || !it->second.node.value().same_shape(e.node.value())) {
      throw std::invalid_argument("copy_values_from: mismatch at " + name);
    }
    e.node.mutable_value() = it->second.node.value();
    ++it;
  }
}

void adam_step(ParameterStore& store, double learning_rate, const AdamOptions& options) {
  for (const auto& [name, e] : store.entries()) {
    if (e.node.has_grad() && !e.node.impl()->grad.all_finite()) throw NonFiniteGradientError(name);
  }
  for (auto& [name, e] : store.entries()) {
    // Entries untouched by the loss are skipped entirely, moments included.
    if (!e.node.has_grad()) continue;
    ++e.step;
    const ad::Array grad = e.node.grad();
    auto& value = e.node.mutable_value();
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(e.step));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(e.step));
    for (std::size_t i = 0; i < value.size(); ++i) {
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = options.beta1 * m + (1.0 - options.beta1) * grad[i];
      v = options.beta2 * v + (1.0 - options.beta2) * grad[i] * grad[i];
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
  store.zero_grad();
}

namespace {

void write_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(bytes, 8);
}

double read_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv");
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("cannot write checkpoint in " + dir.string());
  std::uint64_t offset = 0;
  for (const auto& [name, e] : store.entries()) {
    const auto& v = e.node.value();
    manifest << name << '\t' << v.rows() << ',' << v.cols() << "\tf64\t" << offset << '\n';
    for (double x : v.values()) write_le(blob, x);
    offset += 8 * v.size();
  }
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  std::ifstream blob_file(dir / "weights.bin", std::ios::binary);
  if (!manifest || !blob_file) throw std::runtime_error("cannot open checkpoint in " + dir.string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(blob_file)),
                               std::istreambuf_iterator<char>());

  std::map<std::string, bool> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, shape, dtype;
    std::uint64_t offset = 0;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, shape, '\t') ||
        !std::getline(fields, dtype, '\t') || !(fields >> offset)) {
      throw std::runtime_error("malformed manifest line " + std::to_string(lineno));
    }
    if (dtype != "f64") throw std::runtime_error("unsupported dtype '" + dtype + "' for " + name);
    std::size_t rows = 0, cols = 0;
    char comma = 0;
    std::istringstream shape_in(shape);
    if (!(shape_in >> rows >> comma >> cols) || comma != ',') {
      throw std::runtime_error("malformed shape '" + shape + "' for " + name);
    }
    if (!store.contains(name)) throw std::runtime_error("checkpoint has unknown parameter " + name);
    auto node = store.get(name);
    auto& value = node.mutable_value();
    if (value.rows() != rows || value.cols() != cols) {
      throw std::runtime_error("shape mismatch for " + name + ": checkpoint " + shape +
                               ", model " + std::to_string(value.rows()) + "," +
                               std::to_string(value.cols()));
    }
    if (offset + 8 * value.size() > blob.size()) {
      throw std::runtime_error("weights blob too short for " + name);
    }
    const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = read_le(base + 8 * i);
    seen[name] = true;
  }
  for (const auto& name : store.names()) {
    if (!seen.count(name)) throw std::runtime_error("checkpoint is missing parameter " + name);
  }
}

}  // namespace emr
