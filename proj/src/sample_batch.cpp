#include "jko/sample_batch.hpp"

#include "jko/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace jko {

SampleBatch SampleBatch::select(std::span<const Eigen::Index> idx) const {
  SampleBatch out;
  out.points.resize(dim(), static_cast<Eigen::Index>(idx.size()));
  const bool dens = has_density();
  if (dens) out.log_density.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out.points.col(jj) = points.col(idx[j]);
    if (dens) out.log_density[jj] = log_density[idx[j]];
  }
  return out;
}

SampleBatch concat(const SampleBatch& a, const SampleBatch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.dim() != b.dim()) throw ArgumentError("concat: dimension mismatch");
  SampleBatch out;
  out.points.resize(a.dim(), a.size() + b.size());
  out.points << a.points, b.points;
  if (a.has_density() && b.has_density()) {
    out.log_density.resize(a.size() + b.size());
    out.log_density << a.log_density, b.log_density;
  }
  return out;
}

double standard_normal_log_density(const Eigen::Ref<const Vec>& x) {
  const double d = static_cast<double>(x.size());
  return -0.5 * x.squaredNorm() - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

SampleBatch sample_standard_normal(Eigen::Index dim, Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal;
  SampleBatch out;
  out.points.resize(dim, n);
  out.log_density.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) out.points(i, j) = normal(rng);
    out.log_density[j] = standard_normal_log_density(out.points.col(j));
  }
  return out;
}

namespace {

void put_double(std::ostream& os, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  os.write(buf, res.ptr - buf);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(std::ostream& os, const SampleBatch& batch) {
  const auto d = batch.dim();
  for (Eigen::Index i = 0; i < d; ++i) os << "x_" << (i + 1) << ',';
  os << "log_density\n";
  const bool dens = batch.has_density();
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      put_double(os, batch.points(i, j));
      os << ',';
    }
    if (dens) put_double(os, batch.log_density[j]);
    os << '\n';
  }
}

void write_csv(const std::string& path, const SampleBatch& batch) {
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open " + path + " for writing");
  write_csv(os, batch);
}

SampleBatch read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ArgumentError("read_csv: missing header");
  const auto header = split_commas(line);
  if (header.empty() || header.back() != "log_density")
    throw ArgumentError("read_csv: header must end with log_density");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);

  std::vector<double> coords;
  std::vector<double> dens;
  bool any_missing = false;
  Eigen::Index n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (static_cast<Eigen::Index>(cells.size()) != d + 1)
      throw ArgumentError("read_csv: row " + std::to_string(n + 1) + " has wrong column count");
    for (Eigen::Index i = 0; i < d; ++i) coords.push_back(std::stod(cells[i]));
    if (cells.back().empty()) {
      any_missing = true;
    } else {
      dens.push_back(std::stod(cells.back()));
    }
    ++n;
  }
  SampleBatch out;
  out.points = Eigen::Map<Mat>(coords.data(), d, n);
  if (!any_missing && n > 0) out.log_density = Eigen::Map<Vec>(dens.data(), n);
  return out;
}

SampleBatch read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArgumentError("cannot open " + path);
  return read_csv(is);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace jko
