#pragma once

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blindemod/core.hpp"
#include "blindemod/gen_net.hpp"

namespace blindemod {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Flat ordered key/value document, the text format behind configs and
/// reports. Lines are "key: value"; values may be whitespace-separated lists.
/// '#' starts a comment line. serialize/parse round-trip exactly.
class TextDoc {
 public:
  struct Entry {
    std::string key;
    std::string value;
    bool operator==(const Entry&) const = default;
  };

  bool has(std::string_view key) const { return find(key) != nullptr; }

  const std::string& get(std::string_view key) const {
    const Entry* e = find(key);
    if (!e) throw std::invalid_argument("missing key: " + std::string(key));
    return e->value;
  }

  std::string get_or(std::string_view key, std::string fallback) const {
    const Entry* e = find(key);
    return e ? e->value : std::move(fallback);
  }

  long long get_int(std::string_view key) const { return std::stoll(get(key)); }
  long long get_int_or(std::string_view key, long long fallback) const {
    const Entry* e = find(key);
    return e ? std::stoll(e->value) : fallback;
  }
  std::uint64_t get_uint(std::string_view key) const { return std::stoull(get(key)); }
  std::uint64_t get_uint_or(std::string_view key, std::uint64_t fallback) const {
    const Entry* e = find(key);
    return e ? std::stoull(e->value) : fallback;
  }
  double get_double(std::string_view key) const { return std::stod(get(key)); }
  double get_double_or(std::string_view key, double fallback) const {
    const Entry* e = find(key);
    return e ? std::stod(e->value) : fallback;
  }

  std::vector<long long> get_int_list(std::string_view key) const {
    std::istringstream in(get(key));
    std::vector<long long> out;
    long long v;
    while (in >> v) out.push_back(v);
    return out;
  }

  std::vector<double> get_double_list(std::string_view key) const {
    std::istringstream in(get(key));
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    return out;
  }

  void set(std::string_view key, std::string_view value) {
    if (Entry* e = find_mutable(key)) {
      e->value = value;
      return;
    }
    entries_.push_back({std::string(key), std::string(value)});
  }

  void set_int(std::string_view key, long long v) { set(key, std::to_string(v)); }
  void set_uint(std::string_view key, std::uint64_t v) { set(key, std::to_string(v)); }
  void set_double(std::string_view key, double v) { set(key, format_double(v)); }

  template <typename Range>
  void set_list(std::string_view key, const Range& values) {
    std::string out;
    for (const auto& v : values) {
      if (!out.empty()) out += ' ';
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
        out += format_double(v);
      } else {
        out += std::to_string(v);
      }
    }
    set(key, out);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  bool operator==(const TextDoc&) const = default;

  std::string serialize() const {
    std::string out;
    for (const Entry& e : entries_) {
      out += e.key;
      out += ": ";
      out += e.value;
      out += '\n';
    }
    return out;
  }

  static TextDoc parse(std::istream& in) {
    TextDoc doc;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) {
        throw std::invalid_argument("malformed line (no ':'): " + line.substr(0, 64));
      }
      std::string key = line.substr(0, colon);
      std::string value = line.substr(colon + 1);
      while (!key.empty() && key.back() == ' ') key.pop_back();
      while (!value.empty() && value.front() == ' ') value.erase(value.begin());
      while (!value.empty() && (value.back() == '\r' || value.back() == ' ')) value.pop_back();
      doc.entries_.push_back({std::move(key), std::move(value)});
    }
    return doc;
  }

  static TextDoc parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static TextDoc load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    return parse(in);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << serialize();
  }

 private:
  const Entry* find(std::string_view key) const {
    for (const Entry& e : entries_) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }
  Entry* find_mutable(std::string_view key) {
    for (Entry& e : entries_) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  std::vector<Entry> entries_;
};

inline const char* to_string(LastLayerRule rule) {
  return rule == LastLayerRule::kGaussian ? "gaussian" : "truncated_last";
}

inline LastLayerRule last_layer_rule_from_string(const std::string& s) {
  if (s == "gaussian") return LastLayerRule::kGaussian;
  if (s == "truncated_last") return LastLayerRule::kTruncatedLast;
  throw std::invalid_argument("unknown variance_rule: " + s);
}

/// How a stored network was drawn; kept alongside the weights so every file
/// is reproducible from its own header.
struct NetworkSpec {
  std::vector<int> dims;
  std::uint64_t seed = 0;
  LastLayerRule rule = LastLayerRule::kGaussian;
};

struct StoredNetwork {
  NetworkSpec spec;
  GeneratorNetwork net;
};

/// Network file: a text document with dims/seed/variance_rule plus one
/// "layer<i>" key per layer holding the row-major entries in decimal.
inline TextDoc network_to_doc(const StoredNetwork& stored) {
  TextDoc doc;
  doc.set("format", "blindemod-network-v1");
  doc.set_list("dims", stored.spec.dims);
  doc.set_uint("seed", stored.spec.seed);
  doc.set("variance_rule", to_string(stored.spec.rule));
  for (std::size_t i = 0; i < stored.net.layers.size(); ++i) {
    const Matrix& W = stored.net.layers[i];
    std::string data;
    data.reserve(static_cast<std::size_t>(W.size()) * 20);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        if (!data.empty()) data += ' ';
        data += format_double(W(r, c));
      }
    }
    doc.set("layer" + std::to_string(i), data);
  }
  return doc;
}

inline StoredNetwork network_from_doc(const TextDoc& doc) {
  if (doc.get_or("format", "") != "blindemod-network-v1") {
    throw std::invalid_argument("not a blindemod network file");
  }
  StoredNetwork stored;
  for (long long d : doc.get_int_list("dims")) stored.spec.dims.push_back(static_cast<int>(d));
  stored.spec.seed = doc.get_uint("seed");
  stored.spec.rule = last_layer_rule_from_string(doc.get("variance_rule"));
  require(stored.spec.dims.size() >= 2, "network file needs at least 2 dims");
  for (std::size_t i = 0; i + 1 < stored.spec.dims.size(); ++i) {
    const int rows = stored.spec.dims[i + 1], cols = stored.spec.dims[i];
    const std::vector<double> vals =
        doc.get_double_list("layer" + std::to_string(i));
    require(static_cast<int>(vals.size()) == rows * cols,
            "layer entry count does not match dims");
    Matrix W(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) W(r, c) = vals[static_cast<std::size_t>(r) * cols + c];
    }
    stored.net.layers.push_back(std::move(W));
  }
  return stored;
}

inline void save_network(const std::string& path, const StoredNetwork& stored) {
  network_to_doc(stored).save(path);
}

inline StoredNetwork load_network(const std::string& path) {
  return network_from_doc(TextDoc::load(path));
}

/// Whitespace-separated vector of doubles (one or more per line).
inline Vector load_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  Vector out(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) out[static_cast<Eigen::Index>(i)] = vals[i];
  return out;
}

inline void save_vector(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

}  // namespace blindemod
