#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "json.hpp"

namespace coop {

/// All randomness flows through this engine. mt19937_64 output is fixed by
/// the standard; distributions come from Boost so draws match across
/// standard libraries.
using Rng = std::mt19937_64;

/// Derives an independent engine for (seed, stream) via splitmix64 mixing.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double uniform_real(Rng& rng, double lo, double hi);
/// Uniform integer on [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
double standard_normal(Rng& rng);
bool bernoulli(Rng& rng, double p);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Calls fn(i) for i in [0, n) across hardware threads. Callers write results
/// into per-index slots, so output never depends on scheduling. The first
/// exception thrown by any call is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Rounds to `digits` significant decimal digits.
double round_significant(double value, int digits);

}  // namespace coop
