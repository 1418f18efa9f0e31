#pragma once

// Model file: a versioned text header followed by the four parameter
// matrices in row-major order.
//
//   TRALFM-MODEL <tab> 1
//   encoding <tab> text | binary
//   factors, sequences, objects, bins, trajectories, order, bin_hours,
//   tz_offset                                     one "key <tab> value" line each
//   alpha | beta | eta | gamma <tab> sym <v>      or  <tab> vec <v1> <v2> ...
//   components <tab> seq[,obj][,time]
//   locations <tab> L          + L name lines
//   sequence_table <tab> S     + S lines of r+1 location ids
//   object_table <tab> O       + O name lines
//   next_location_counts <tab> L  + one line of L space-separated values
//   matrix <tab> theta|phi|psi|phi_time <tab> rows <tab> cols
//     text:   `rows` lines of tab-separated decimals
//     binary: rows*cols IEEE-754 doubles, little-endian, then '\n'
//   end
//
// Decimals are written in shortest round-trip form, so both encodings
// reproduce the matrices exactly.

#include <bit>
#include <cstring>
#include <fstream>

#include "tralfm/corpus_io.hpp"
#include "tralfm/model.hpp"

namespace tralfm {

inline constexpr const char* kModelMagic = "TRALFM-MODEL";
inline constexpr int kModelVersion = 1;

enum class Encoding { text, binary };

inline Encoding parse_encoding(std::string_view s) {
  if (s == "text") return Encoding::text;
  if (s == "binary") return Encoding::binary;
  throw UsageError("model encoding must be 'text' or 'binary'");
}

/// Everything needed to apply a trained model to new data.
struct Model {
  ModelConfig config;
  Vocabularies vocab;
  TimeBinScheme scheme;
  double tz_offset_hours = 0.0;
  ModelParams params;
  std::vector<double> location_counts;

  friend bool operator==(const Model&, const Model&) = default;
};

namespace detail {

inline void write_prior(std::ostream& out, const char* name, const Prior& p) {
  out << name << '\t';
  if (p.weights.empty()) {
    out << "sym " << format_double(p.symmetric);
  } else {
    out << "vec";
    for (double w : p.weights) out << ' ' << format_double(w);
  }
  out << '\n';
}

inline Prior read_prior(LineReader& rd, const char* name) {
  const auto value = rd.keyed(name);
  const auto toks = split(value, ' ');
  Prior p;
  if (toks.size() == 2 && toks[0] == "sym") {
    auto v = parse_number<double>(toks[1]);
    if (!v) rd.fail(std::string("bad prior ") + name);
    p.symmetric = *v;
  } else if (!toks.empty() && toks[0] == "vec") {
    for (std::size_t i = 1; i < toks.size(); ++i) {
      auto v = parse_number<double>(toks[i]);
      if (!v) rd.fail(std::string("bad prior ") + name);
      p.weights.push_back(*v);
    }
  } else {
    rd.fail(std::string("prior ") + name + " must be 'sym <v>' or 'vec <v...>'");
  }
  return p;
}

inline void write_matrix(std::ostream& out, const char* name, const Matrix<double>& m, Encoding enc) {
  out << "matrix\t" << name << '\t' << m.rows() << '\t' << m.cols() << '\n';
  if (enc == Encoding::text) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "\t" : "") << format_double(m(r, c));
      out << '\n';
    }
    return;
  }
  for (double v : m.data()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  out << '\n';
}

inline Matrix<double> read_matrix(LineReader& rd, const char* name, std::size_t rows, std::size_t cols, Encoding enc) {
  const auto header = rd.next("matrix header");
  const auto head = split(header, '\t');
  if (head.size() != 4 || head[0] != "matrix" || head[1] != name) rd.fail(std::string("expected matrix ") + name);
  if (parse_number<std::size_t>(head[2]) != rows || parse_number<std::size_t>(head[3]) != cols)
    rd.fail(std::string("matrix ") + name + " has unexpected shape");
  Matrix<double> m(rows, cols);
  if (enc == Encoding::text) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto line = rd.next("matrix row");
      const auto cells = split(line, '\t');
      if (cells.size() != cols && !(cols == 0 && cells.size() == 1)) rd.fail("matrix row has wrong width");
      for (std::size_t c = 0; c < cols; ++c) {
        auto v = parse_number<double>(cells[c]);
        if (!v) rd.fail("bad matrix entry");
        m(r, c) = *v;
      }
    }
    return m;
  }
  for (double& v : m.data()) {
    char bytes[8];
    if (!rd.stream().read(bytes, 8)) rd.fail(std::string("truncated binary matrix ") + name);
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  if (rd.stream().get() != '\n') rd.fail(std::string("missing terminator after matrix ") + name);
  return m;
}

}  // namespace detail

inline void write_model(std::ostream& out, const Model& model, Encoding enc) {
  using detail::format_double;
  const auto& p = model.params;
  const auto& v = model.vocab;
  out << kModelMagic << '\t' << kModelVersion << '\n';
  out << "encoding\t" << (enc == Encoding::text ? "text" : "binary") << '\n';
  out << "factors\t" << p.phi.rows() << '\n';
  out << "sequences\t" << p.phi.cols() << '\n';
  out << "objects\t" << p.psi.cols() << '\n';
  out << "bins\t" << p.phi_time.cols() << '\n';
  out << "trajectories\t" << p.theta.rows() << '\n';
  out << "order\t" << model.config.order << '\n';
  out << "bin_hours\t" << model.scheme.bin_hours << '\n';
  out << "tz_offset\t" << format_double(model.tz_offset_hours) << '\n';
  detail::write_prior(out, "alpha", model.config.alpha_prior());
  detail::write_prior(out, "beta", model.config.beta);
  detail::write_prior(out, "eta", model.config.eta);
  detail::write_prior(out, "gamma", model.config.gamma);
  out << "components\t" << model.config.components.str() << '\n';
  out << "locations\t" << v.locations.size() << '\n';
  for (const auto& name : v.locations.keys()) out << name << '\n';
  out << "sequence_table\t" << v.sequences.size() << '\n';
  for (const auto& key : v.sequences.keys()) {
    for (std::size_t j = 0; j < key.size(); ++j) out << (j ? " " : "") << key[j];
    out << '\n';
  }
  out << "object_table\t" << v.objects.size() << '\n';
  for (const auto& name : v.objects.keys()) out << name << '\n';
  out << "next_location_counts\t" << model.location_counts.size() << '\n';
  for (std::size_t i = 0; i < model.location_counts.size(); ++i)
    out << (i ? " " : "") << format_double(model.location_counts[i]);
  out << '\n';
  detail::write_matrix(out, "theta", p.theta, enc);
  detail::write_matrix(out, "phi", p.phi, enc);
  detail::write_matrix(out, "psi", p.psi, enc);
  detail::write_matrix(out, "phi_time", p.phi_time, enc);
  out << "end\n";
}

inline Model read_model(std::istream& in, const std::string& source = "<model>") {
  detail::LineReader rd(in, source);
  {
    const auto header = rd.next("header");
    const auto head = detail::split(header, '\t');
    if (head.size() != 2 || head[0] != kModelMagic) rd.fail("not a model file (missing TRALFM-MODEL header)");
    if (detail::parse_number<int>(head[1]) != kModelVersion) rd.fail("unsupported model format version");
  }
  Model m;
  const auto enc = parse_encoding(rd.keyed("encoding"));
  const auto K = rd.keyed_number<std::size_t>("factors");
  const auto S = rd.keyed_number<std::size_t>("sequences");
  const auto O = rd.keyed_number<std::size_t>("objects");
  const auto B = rd.keyed_number<std::size_t>("bins");
  const auto M = rd.keyed_number<std::size_t>("trajectories");
  m.config.num_factors = static_cast<int>(K);
  m.config.order = rd.keyed_number<int>("order");
  m.vocab.order = m.config.order;
  m.scheme.bin_hours = rd.keyed_number<int>("bin_hours");
  if (!TimeBinScheme::valid_bin_hours(m.scheme.bin_hours) || static_cast<std::size_t>(m.scheme.total_bins()) != B)
    rd.fail("bin_hours inconsistent with bin count");
  m.tz_offset_hours = rd.keyed_number<double>("tz_offset");
  m.config.alpha = detail::read_prior(rd, "alpha");
  m.config.beta = detail::read_prior(rd, "beta");
  m.config.eta = detail::read_prior(rd, "eta");
  m.config.gamma = detail::read_prior(rd, "gamma");
  try {
    m.config.components = Components::parse(rd.keyed("components"));
    m.config.validate();
  } catch (const UsageError& e) {
    rd.fail(e.what());
  }

  const auto L = rd.keyed_number<std::size_t>("locations");
  for (std::size_t i = 0; i < L; ++i)
    if (m.vocab.locations.intern(rd.next("location")) != i) rd.fail("duplicate location");
  if (rd.keyed_number<std::size_t>("sequence_table") != S) rd.fail("sequence table size mismatch");
  for (std::size_t i = 0; i < S; ++i) {
    SequenceKey key;
    const auto line = rd.next("sequence");
    for (auto tok : detail::split(line, ' ')) {
      auto id = detail::parse_number<Id>(tok);
      if (!id || *id >= L) rd.fail("bad location id in sequence table");
      key.push_back(*id);
    }
    if (key.size() != static_cast<std::size_t>(m.config.order) + 1) rd.fail("sequence width != order + 1");
    if (m.vocab.sequences.intern(key) != i) rd.fail("duplicate sequence");
  }
  if (rd.keyed_number<std::size_t>("object_table") != O) rd.fail("object table size mismatch");
  for (std::size_t i = 0; i < O; ++i)
    if (m.vocab.objects.intern(rd.next("object")) != i) rd.fail("duplicate object");
  const auto n_counts = rd.keyed_number<std::size_t>("next_location_counts");
  {
    const auto line = rd.next("location counts");
    if (n_counts > 0) {
      for (auto tok : detail::split(line, ' ')) {
        auto v = detail::parse_number<double>(tok);
        if (!v) rd.fail("bad location count");
        m.location_counts.push_back(*v);
      }
    }
    if (m.location_counts.size() != n_counts) rd.fail("location count length mismatch");
  }
  m.params.theta = detail::read_matrix(rd, "theta", M, K, enc);
  m.params.phi = detail::read_matrix(rd, "phi", K, S, enc);
  m.params.psi = detail::read_matrix(rd, "psi", K, O, enc);
  m.params.phi_time = detail::read_matrix(rd, "phi_time", K, B, enc);
  if (rd.next("end marker") != "end") rd.fail("missing end marker");
  return m;
}

inline void save_model(const std::string& path, const Model& model, Encoding enc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  write_model(out, model, enc);
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return read_model(in, path);
}

}  // namespace tralfm
