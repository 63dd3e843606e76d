// SPDX-License-Identifier: Apache-2.0
#include "sla/cli/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sla::io {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line); }

std::size_t parse_size(std::string_view s, const std::string& context) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidInput(context + ": expected a non-negative integer, got '" + std::string(s) + "'");
  return v;
}

int parse_int(std::string_view s, const std::string& context) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidInput(context + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw InvalidInput("cannot format double");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw InvalidInput(context + ": cannot parse '" + std::string(s) + "' as a number");
  return v;
}

Matrix read_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool have_header = false;
  Matrix m;
  std::size_t filled = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = split(view);
    if (!have_header) {
      if (fields.size() != 2)
        throw InvalidInput(at_line(lineno) + ": header must be 'n,k'");
      rows = parse_size(fields[0], at_line(lineno));
      cols = parse_size(fields[1], at_line(lineno));
      if (rows == 0 || cols == 0) throw InvalidInput(at_line(lineno) + ": empty shape in header");
      m = Matrix(rows, cols);
      have_header = true;
      continue;
    }
    if (filled == rows)
      throw InvalidInput(at_line(lineno) + ": more than " + std::to_string(rows) + " data rows");
    if (fields.size() != cols)
      throw InvalidInput(at_line(lineno) + ": expected " + std::to_string(cols) + " values, got " +
                         std::to_string(fields.size()));
    for (std::size_t j = 0; j < cols; ++j)
      m(filled, j) = parse_double(fields[j], at_line(lineno) + ", column " + std::to_string(j + 1));
    ++filled;
  }
  if (!have_header) throw InvalidInput("matrix CSV has no 'n,k' header");
  if (filled != rows)
    throw InvalidInput("line " + std::to_string(lineno) + ": expected " + std::to_string(rows) +
                       " data rows, got " + std::to_string(filled));
  return m;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_matrix_csv(in);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << m.rows() << ',' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out = open_out(path);
  write_matrix_csv(out, m);
}

void write_split_csv(std::ostream& out, const Matrix& features, std::span<const int> labels) {
  if (labels.size() != features.rows()) throw InvalidInput("write_split_csv: label count != rows");
  for (std::size_t j = 0; j < features.cols(); ++j) out << 'x' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < features.cols(); ++j) out << format_double(features(i, j)) << ',';
    out << labels[i] << '\n';
  }
}

LabeledSplit read_split_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  bool have_header = false;
  Vector values;
  LabeledSplit split_out;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view);
    if (!have_header) {
      if (fields.size() < 2 || fields.back() != "label")
        throw InvalidInput(at_line(lineno) + ": header must be 'x0,...,label'");
      dim = fields.size() - 1;
      have_header = true;
      continue;
    }
    if (fields.size() != dim + 1)
      throw InvalidInput(at_line(lineno) + ": expected " + std::to_string(dim + 1) + " fields");
    for (std::size_t j = 0; j < dim; ++j) values.push_back(parse_double(fields[j], at_line(lineno)));
    split_out.labels.push_back(parse_int(fields[dim], at_line(lineno)));
  }
  if (!have_header) throw InvalidInput("dataset CSV has no header");
  split_out.features = Matrix(split_out.labels.size(), dim);
  std::copy(values.begin(), values.end(), split_out.features.flat().begin());
  return split_out;
}

Vector parse_list(std::string_view csv, const std::string& context) {
  Vector out;
  for (std::string_view field : split(trim(csv))) out.push_back(parse_double(field, context));
  return out;
}

Json to_json(const ScalingVars& s) { return Json{{"alpha", s.alpha}, {"beta", s.beta}}; }

Json to_json(const SolveStatus& s) {
  return Json{{"converged", s.converged}, {"iterations", s.iterations}, {"residual", s.residual}};
}

Json to_json(const AllocationSummary& s) {
  return Json{{"allocated_fraction", s.allocated_fraction},
              {"per_class_mass", s.per_class_mass},
              {"abstained_rows", s.abstained_rows}};
}

Json to_json(const selftrain::Checkpoint& cp) {
  Json j;
  j["t"] = cp.t;
  j["rho_t"] = cp.rho_t ? Json(*cp.rho_t) : Json(nullptr);
  j["test_error"] = cp.test_error;
  j["ema_test_error"] = cp.ema_test_error;
  if (cp.allocation) {
    const auto& a = *cp.allocation;
    j["allocated_fraction"] = a.allocated_fraction;
    j["per_class_mass"] = a.per_class_mass;
    j["sinkhorn_iters"] = a.sinkhorn_iters;
    j["col_residual"] = a.col_residual;
  } else {
    j["allocated_fraction"] = nullptr;
    j["per_class_mass"] = nullptr;
    j["sinkhorn_iters"] = nullptr;
    j["col_residual"] = nullptr;
  }
  j["lr"] = cp.lr;
  j["labeled_loss"] = cp.labeled_loss;
  j["unlabeled_loss"] = cp.unlabeled_loss;
  j["batch_assigned_mass"] = cp.batch_assigned_mass ? Json(*cp.batch_assigned_mass) : Json(nullptr);
  if (cp.allocation) {
    const auto& a = *cp.allocation;
    j["allocation"] = Json{{"converged", a.converged},
                           {"epsilon", a.epsilon},
                           {"total_mass", a.total_mass},
                           {"mass_lower_bound", a.mass_lower_bound},
                           {"max_col_excess", a.max_col_excess},
                           {"max_row_excess", a.max_row_excess},
                           {"row_residual", a.row_residual},
                           {"abstained_rows", a.abstained_rows},
                           {"beta", a.beta}};
  }
  if (cp.failed) j["failure"] = cp.failure;
  return j;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

}  // namespace sla::io
