#pragma once

// Checkpoints. Both formats are a few text lines followed by the flat
// parameters as little-endian IEEE-754 doubles in the standard layout
// (per layer: weights row-major, then biases).
//
//   TDCA-MLP v1
//   784:100:tanh 100:10:softmax
//   <doubles>
//
//   TDCA-CREDITNET v1
//   21:32:tanh 32:110:tanh scale=10 rule=local_error
//   group kind=line n=100 credits=10 sigma=5
//   <doubles>

#include "tdca/error.hpp"
#include "tdca/nn.hpp"
#include "tdca/tdca.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tdca {

inline constexpr std::string_view kMlpHeader = "TDCA-MLP v1";
inline constexpr std::string_view kCreditNetHeader = "TDCA-CREDITNET v1";

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

inline std::size_t parse_count(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw FormatError("bad count '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string specs_to_text(std::span<const LayerSpec> specs) {
  std::string s;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    if (t) s += ' ';
    s += std::to_string(specs[t].in_dim) + ":" + std::to_string(specs[t].out_dim) + ":" +
         std::string(to_string(specs[t].activation));
  }
  return s;
}

inline LayerSpec parse_layer_token(const std::string& tok) {
  const auto a = tok.find(':');
  const auto b = tok.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) {
    throw FormatError("bad layer token '" + tok + "', expected in:out:activation");
  }
  LayerSpec l;
  l.in_dim = parse_count(std::string_view(tok).substr(0, a), "layer input size");
  l.out_dim = parse_count(std::string_view(tok).substr(a + 1, b - a - 1), "layer output size");
  l.activation = activation_from_string(std::string_view(tok).substr(b + 1));
  return l;
}

inline std::map<std::string, std::string> parse_kv_tokens(const std::vector<std::string>& toks,
                                                          std::size_t first) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = first; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value, found '" + toks[i] + "'");
    kv[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
  }
  return kv;
}

inline const std::string& kv_at(const std::map<std::string, std::string>& kv, const std::string& key,
                                std::string_view line) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    throw FormatError("missing '" + key + "' in '" + std::string(line) + "'");
  }
  return it->second;
}

inline void write_le_doubles(std::ostream& os, const Vector& v) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(v.size()) * 8);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b) buf[static_cast<std::size_t>(i) * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

/// Text lines and the remaining binary payload of a checkpoint file.
struct RawCheckpoint {
  std::vector<std::string> lines;
  std::vector<unsigned char> payload;
};

inline RawCheckpoint read_checkpoint(const std::filesystem::path& path, std::size_t text_lines,
                                     std::string_view header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  RawCheckpoint raw;
  std::size_t pos = 0;
  for (std::size_t l = 0; l < text_lines; ++l) {
    std::size_t end = pos;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    if (end == bytes.size()) {
      if (l == 0) {
        throw FormatError(path.string() + ": header mismatch: expected '" + std::string(header) +
                          "', file has no header line");
      }
      throw FormatError(path.string() + ": truncated checkpoint header");
    }
    raw.lines.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                           bytes.begin() + static_cast<std::ptrdiff_t>(end));
    pos = end + 1;
    if (l == 0 && raw.lines[0] != header) {
      throw FormatError(path.string() + ": header mismatch: expected '" + std::string(header) +
                        "', found '" + raw.lines[0].substr(0, 64) + "'");
    }
  }
  raw.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return raw;
}

inline Vector decode_le_doubles(const std::vector<unsigned char>& payload, std::size_t count,
                                const std::filesystem::path& path) {
  const std::size_t expected = count * 8;
  if (payload.size() != expected) {
    throw FormatError(path.string() + ": " + (payload.size() < expected ? "truncated" : "oversized") +
                      " parameter block: expected " + std::to_string(expected) + " bytes (" +
                      std::to_string(count) + " doubles), found " + std::to_string(payload.size()));
  }
  Vector v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(payload[i * 8 + b]) << (8 * b);
    v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
  }
  return v;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Granularity line

inline std::string granularity_to_text(const Granularity& g) {
  switch (g.kind) {
    case Granularity::Kind::PerParameter: return "parameter";
    case Granularity::Kind::PerNeuron: return "neuron";
    case Granularity::Kind::PerGroup: break;
  }
  const GroupSpec& gs = *g.group;
  std::string s = "group kind=";
  if (gs.structure.kind == NeighborStructure::Kind::Line) {
    s += "line n=" + std::to_string(gs.structure.width);
  } else {
    s += "grid h=" + std::to_string(gs.structure.height) + " w=" + std::to_string(gs.structure.width);
  }
  s += " credits=" + std::to_string(gs.credits);
  s += " sigma=" + (gs.sigma > 0.0 ? detail::format_double(gs.sigma) : std::string("auto"));
  if (gs.include_outputs) s += " outputs=1";
  return s;
}

inline Granularity granularity_from_text(std::string_view line) {
  const auto toks = detail::split_ws(line);
  if (toks.empty()) throw FormatError("empty granularity line");
  if (toks[0] == "parameter" && toks.size() == 1) return Granularity::per_parameter();
  if (toks[0] == "neuron" && toks.size() == 1) return Granularity::per_neuron();
  if (toks[0] != "group") {
    throw FormatError("unknown granularity '" + std::string(line) + "'");
  }
  const auto kv = detail::parse_kv_tokens(toks, 1);
  GroupSpec gs;
  const std::string& kind = detail::kv_at(kv, "kind", line);
  if (kind == "line") {
    gs.structure = NeighborStructure::line(detail::parse_count(detail::kv_at(kv, "n", line), "n"));
  } else if (kind == "grid") {
    gs.structure = NeighborStructure::grid(detail::parse_count(detail::kv_at(kv, "h", line), "h"),
                                           detail::parse_count(detail::kv_at(kv, "w", line), "w"));
  } else {
    throw FormatError("unknown neighbor structure '" + kind + "'");
  }
  gs.credits = detail::parse_count(detail::kv_at(kv, "credits", line), "credits");
  const std::string& sigma = detail::kv_at(kv, "sigma", line);
  gs.sigma = sigma == "auto" ? 0.0 : detail::parse_double(sigma, "sigma");
  if (const auto it = kv.find("outputs"); it != kv.end()) gs.include_outputs = it->second == "1";
  return Granularity::per_group(gs);
}

// ---------------------------------------------------------------------------
// Bottom-up network

inline void save_mlp(const std::filesystem::path& path, const Mlp& mlp) {
  auto os = detail::open_for_write(path);
  os << kMlpHeader << '\n' << detail::specs_to_text(mlp.layers()) << '\n';
  detail::write_le_doubles(os, mlp.flatten().values);
  if (!os) throw Error("failed writing " + path.string());
}

inline Mlp load_mlp(const std::filesystem::path& path) {
  const auto raw = detail::read_checkpoint(path, 2, kMlpHeader);
  std::vector<LayerSpec> specs;
  for (const auto& tok : detail::split_ws(raw.lines[1])) specs.push_back(detail::parse_layer_token(tok));
  validate_specs(specs);
  Mlp mlp(specs);
  ParamVector p = ParamVector::zeros(specs);
  p.values = detail::decode_le_doubles(raw.payload, parameter_count(specs), path);
  mlp.unflatten(p);
  return mlp;
}

// ---------------------------------------------------------------------------
// Credit network

inline void save_tdca(const std::filesystem::path& path, const TdcaNetwork& tdca) {
  auto os = detail::open_for_write(path);
  os << kCreditNetHeader << '\n'
     << detail::specs_to_text(tdca.net.layers()) << " scale=" << detail::format_double(tdca.credit_scale)
     << " rule=" << to_string(tdca.rule) << '\n'
     << granularity_to_text(tdca.granularity) << '\n';
  detail::write_le_doubles(os, tdca.parameters());
  if (!os) throw Error("failed writing " + path.string());
}

inline TdcaNetwork load_tdca(const std::filesystem::path& path) {
  const auto raw = detail::read_checkpoint(path, 3, kCreditNetHeader);
  const auto toks = detail::split_ws(raw.lines[1]);
  std::vector<LayerSpec> specs;
  std::size_t i = 0;
  for (; i < toks.size() && toks[i].find('=') == std::string::npos; ++i) {
    specs.push_back(detail::parse_layer_token(toks[i]));
  }
  validate_specs(specs);
  const auto kv = detail::parse_kv_tokens(toks, i);
  TdcaNetwork tdca{Mlp(specs), granularity_from_text(raw.lines[2]),
                   detail::parse_double(detail::kv_at(kv, "scale", raw.lines[1]), "scale"),
                   expansion_rule_from_string(detail::kv_at(kv, "rule", raw.lines[1]))};
  tdca.set_parameters(detail::decode_le_doubles(raw.payload, parameter_count(specs), path));
  return tdca;
}

/// A loaded credit network must match the state and credit sizes a bottom-up
/// architecture needs before it can drive it.
inline void require_compatible(const TdcaNetwork& tdca, std::size_t state_dim,
                               std::span<const LayerSpec> bottom_up) {
  if (tdca.state_dim() != state_dim) {
    throw DimensionError("credit network reads " + std::to_string(tdca.state_dim()) +
                         " state values, task provides " + std::to_string(state_dim));
  }
  const std::size_t need = credit_dimension(tdca.granularity, bottom_up);
  if (tdca.credit_dim() != need) {
    throw DimensionError("credit network emits " + std::to_string(tdca.credit_dim()) +
                         " credits, bottom-up architecture " + detail::specs_to_text(bottom_up) +
                         " with granularity '" + granularity_to_text(tdca.granularity) + "' needs " +
                         std::to_string(need));
  }
}

}  // namespace tdca
