#pragma once

#include <cstdint>
#include <string>

#include "cbgopt/gp.hpp"
#include "cbgopt/robustness.hpp"
#include "cbgopt/warp.hpp"

namespace cbgopt::io {

/// Model file layout (little endian):
///   "CBGMODEL"  u32 version  u32 kind  str metadata  payload
/// str = u64 length + bytes. The payload stores training points, values and kernel
/// parameters as raw doubles; models are rebuilt by refactorizing, which reproduces
/// predictions bit for bit on the same machine.
inline constexpr std::uint32_t kFormatVersion = 1;

enum class ModelKind : std::uint32_t { GP = 1, WarpedGP = 2, Bundle = 3 };

void save_gp(const std::string& path, const gp::GPModel& model, const std::string& metadata = "");
void save_warped_gp(const std::string& path, const warp::WarpedGPModel& model,
                    const std::string& metadata = "");
void save_bundle(const std::string& path, const robust::SurrogateBundle& bundle,
                 const std::string& metadata = "");

/// Loaders throw InvalidArgument on a missing file, bad magic, unknown version or a kind
/// mismatch.
gp::GPModel load_gp(const std::string& path, std::string* metadata = nullptr);
warp::WarpedGPModel load_warped_gp(const std::string& path, std::string* metadata = nullptr);
robust::SurrogateBundle load_bundle(const std::string& path, std::string* metadata = nullptr);

/// Kind stored in a model file header.
ModelKind peek_kind(const std::string& path);

}  // namespace cbgopt::io
