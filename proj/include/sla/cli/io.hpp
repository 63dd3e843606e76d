// SPDX-License-Identifier: Apache-2.0
#pragma once

// File formats.
//
// Matrix CSV: optional '#' comment lines, then a header line "n,k" giving the
// shape, then n rows of k comma-separated reals.
//
// Dataset CSV: header "x0,...,x{d-1},label", one example per line, label -1
// for unlabeled examples. Reals use shortest round-trip formatting, so export
// followed by import reproduces values bitwise.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sla/allocation.hpp"
#include "sla/matrix.hpp"
#include "sla/selftrain/trainer.hpp"
#include "sla/sinkhorn.hpp"

namespace sla::io {

using Json = nlohmann::ordered_json;

/// Shortest representation that parses back to the same double.
std::string format_double(double x);
/// Strict full-string parse; throws InvalidInput naming `context` on failure.
double parse_double(std::string_view s, const std::string& context);

Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(std::ostream& out, const Matrix& m);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

struct LabeledSplit {
  Matrix features;
  std::vector<int> labels;
};

void write_split_csv(std::ostream& out, const Matrix& features, std::span<const int> labels);
LabeledSplit read_split_csv(std::istream& in);

/// "0.1,0.2,0.7" -> {0.1, 0.2, 0.7}
Vector parse_list(std::string_view csv, const std::string& context);

Json to_json(const ScalingVars& s);
Json to_json(const SolveStatus& s);
Json to_json(const AllocationSummary& s);
Json to_json(const selftrain::Checkpoint& cp);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// Git-style content hash: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::string_view content);

}  // namespace sla::io
