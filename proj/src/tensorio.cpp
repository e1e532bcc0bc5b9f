// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shiftnl/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "shiftnl/errors.hpp"

namespace shiftnl {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxRank = 8;

template <typename T>
void write_le(std::ostream& out, const std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
  } else {
    for (const T& v : values) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      std::reverse(std::begin(bytes), std::end(bytes));
      out.write(bytes, sizeof(T));
    }
  }
}

template <typename T>
std::vector<T> decode_le(const std::vector<char>& bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (T& v : out) {
      char b[sizeof(T)];
      std::memcpy(b, &v, sizeof(T));
      std::reverse(std::begin(b), std::end(b));
      std::memcpy(&v, b, sizeof(T));
    }
  }
  return out;
}

ElementKind parse_kind(const std::string& s) {
  if (s == "f64") return ElementKind::kF64;
  if (s == "i32") return ElementKind::kI32;
  if (s == "i8") return ElementKind::kI8;
  throw FramingError("unsupported element kind '" + s + "'");
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  json header;
  header["kind"] = std::string(element_kind_name(t.kind()));
  header["shape"] = t.shape();
  header["byte_order"] = "little";
  if (t.scale()) header["scale"] = *t.scale();
  out << kTensorMagic << '\n' << header.dump() << '\n';
  std::visit([&](const auto& v) { write_le(out, v); }, t.storage());
  if (!out) throw Error("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& in) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kTensorMagic) {
    throw FramingError("bad magic (expected " + std::string(kTensorMagic) + ")");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) throw FramingError("missing header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw FramingError(std::string("malformed header: ") + e.what());
  }
  std::vector<std::size_t> shape;
  ElementKind kind{};
  std::optional<double> scale;
  try {
    kind = parse_kind(header.at("kind").get<std::string>());
    shape = header.at("shape").get<std::vector<std::size_t>>();
    if (header.value("byte_order", std::string("little")) != "little") {
      throw FramingError("unsupported byte order");
    }
    if (header.contains("scale") && !header["scale"].is_null()) scale = header["scale"].get<double>();
  } catch (const json::exception& e) {
    throw FramingError(std::string("malformed header: ") + e.what());
  }
  if (shape.size() > kMaxRank) throw FramingError("rank above " + std::to_string(kMaxRank));

  std::size_t numel = 1;
  for (std::size_t d : shape) {
    if (d != 0 && numel > (std::size_t{1} << 40) / d) throw FramingError("shape too large");
    numel *= d;
  }
  const std::size_t expected = numel * element_size(kind);
  std::vector<char> payload(expected);
  in.read(payload.data(), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected) {
    throw FramingError("truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                       std::to_string(in.gcount()));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FramingError("trailing bytes after payload");

  switch (kind) {
    case ElementKind::kF64: return Tensor(shape, decode_le<double>(payload));
    case ElementKind::kI32: return Tensor(shape, decode_le<std::int32_t>(payload), scale);
    case ElementKind::kI8: return Tensor(shape, decode_le<std::int8_t>(payload), scale);
  }
  throw FramingError("unsupported element kind");
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return read_tensor(in);
  } catch (const FramingError& e) {
    throw FramingError(path.string() + ": " + e.what());
  }
}

json plan_to_json(const GroupPlan& plan) {
  return json{{"channels", plan.channels()},     {"bits", plan.bits},
              {"q_max", plan.q_max},             {"permutation", plan.permutation},
              {"group_bounds", plan.group_bounds}, {"base_scale", plan.base_scale},
              {"k", plan.k},                     {"thresholds", plan.thresholds}};
}

GroupPlan plan_from_json(const json& j) {
  GroupPlan plan;
  try {
    plan.permutation = j.at("permutation").get<std::vector<std::size_t>>();
    plan.group_bounds = j.at("group_bounds").get<std::vector<std::size_t>>();
    plan.base_scale = j.at("base_scale").get<double>();
    plan.k = j.at("k").get<std::vector<int>>();
    plan.thresholds = j.at("thresholds").get<std::vector<double>>();
    plan.bits = j.at("bits").get<int>();
    plan.q_max = j.at("q_max").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

void write_plan_file(const std::filesystem::path& path, const std::vector<LayerPlanRecord>& layers,
                     const json& header) {
  json doc = header.is_object() ? header : json::object();
  doc["schema"] = "shiftnl.plan";
  doc["schema_version"] = 1;
  json arr = json::array();
  for (const LayerPlanRecord& l : layers) {
    json e = plan_to_json(l.plan);
    e["name"] = l.name;
    if (!l.extra.is_null()) e["calibration"] = l.extra;
    arr.push_back(std::move(e));
  }
  doc["layers"] = std::move(arr);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

std::vector<LayerPlanRecord> read_plan_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
  if (doc.value("schema", std::string()) != "shiftnl.plan") {
    throw ContractError(path.string() + ": not a plan file");
  }
  std::vector<LayerPlanRecord> out;
  for (const json& e : doc.at("layers")) {
    LayerPlanRecord r;
    r.name = e.value("name", std::string());
    r.plan = plan_from_json(e);
    if (e.contains("calibration")) r.extra = e["calibration"];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace shiftnl
