#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "orthoconv/tensor.hpp"

namespace orthoconv {

/// Raised when an okt-v1 document (or any JSON input) is malformed.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr const char* kOktFormat = "okt-v1";

inline nlohmann::json to_okt_json(const KernelTensor& k) {
  nlohmann::json j;
  j["format"] = kOktFormat;
  j["shape"] = {k.c_out(), k.c_in_per_group(), k.k_h(), k.k_w()};
  j["groups"] = k.groups();
  j["dtype"] = "f64";
  j["order"] = "row-major";
  j["data"] = std::vector<double>(k.values().begin(), k.values().end());
  return j;
}

inline KernelTensor from_okt_json(const nlohmann::json& j) {
  auto fail = [](const std::string& m) -> KernelTensor { throw FormatError("okt-v1: " + m); };
  if (!j.is_object()) return fail("document is not an object");
  if (!j.contains("format") || !j["format"].is_string()) return fail("missing \"format\"");
  if (j["format"].get<std::string>() != kOktFormat)
    return fail("unknown format \"" + j["format"].get<std::string>() + "\"");
  if (j.value("dtype", std::string{}) != "f64") return fail("dtype must be \"f64\"");
  if (j.value("order", std::string{}) != "row-major") return fail("order must be \"row-major\"");
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 4) return fail("shape must have 4 entries");
  KernelTensor::Shape shape{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& e = j["shape"][i];
    if (!e.is_number_unsigned() || e.get<std::size_t>() == 0) return fail("shape entries must be positive integers");
    shape[i] = e.get<std::size_t>();
  }
  if (!j.contains("groups") || !j["groups"].is_number_unsigned()) return fail("missing integer \"groups\"");
  if (!j.contains("data") || !j["data"].is_array()) return fail("missing \"data\" array");
  std::vector<double> data;
  data.reserve(j["data"].size());
  for (const auto& v : j["data"]) {
    if (!v.is_number()) return fail("data entries must be numbers");
    data.push_back(v.get<double>());
  }
  try {
    return KernelTensor(shape, std::move(data), j["groups"].get<std::size_t>());
  } catch (const ShapeError& e) {
    return fail(e.what());
  }
}

/// Canonical serialization: compact JSON, shortest round-trip doubles,
/// trailing newline. Reading and re-writing a file is byte-identical.
inline std::string dump_okt(const KernelTensor& k) { return to_okt_json(k).dump() + "\n"; }

inline void write_okt(const std::filesystem::path& path, const KernelTensor& k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << dump_okt(k);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline KernelTensor read_okt(const std::filesystem::path& path) { return from_okt_json(read_json_file(path)); }

}  // namespace orthoconv
