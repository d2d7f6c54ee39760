#include "purelab/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "purelab/csv.hpp"

namespace purelab {

namespace {

constexpr const char* kMagic = "purelab-ckpt";

void write_doubles_le(std::ofstream& out, const double* p, std::int64_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(n * 8));
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(p[i]);
      char buf[8];
      for (int b = 0; b < 8; ++b)
        buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(buf, 8);
    }
  }
}

void read_doubles_le(std::ifstream& in, double* p, std::int64_t n,
                     const std::string& path) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
    if (in.gcount() != n * 8)
      throw config_error("truncated checkpoint payload: " + path);
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      char buf[8];
      in.read(buf, 8);
      if (in.gcount() != 8)
        throw config_error("truncated checkpoint payload: " + path);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[b]))
                << (8 * b);
      p[i] = std::bit_cast<double>(bits);
    }
  }
}

std::string header_line(const CheckpointMeta& meta) {
  std::ostringstream h;
  h << kMagic << " schema=" << meta.schema << " d=" << meta.d
    << " k=" << meta.k << " m=" << meta.m << " b=" << fmt_double(meta.b)
    << " sigma_rho=" << fmt_double(meta.sigma_rho)
    << " lambda=" << fmt_double(meta.lambda)
    << " iteration=" << meta.iteration << " seed=" << meta.seed
    << " single_v=" << (meta.single_v ? 1 : 0);
  return h.str();
}

CheckpointMeta parse_header(const std::string& line, const std::string& path) {
  std::istringstream in(line);
  std::string tok;
  if (!(in >> tok) || tok != kMagic)
    throw config_error("not a checkpoint file: " + path);
  CheckpointMeta meta;
  while (in >> tok) {
    std::size_t eq = tok.find('=');
    if (eq == std::string::npos)
      throw config_error("bad checkpoint header token '" + tok + "' in " +
                         path);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    auto as_int = [&](auto& dst) {
      auto res = std::from_chars(val.data(), val.data() + val.size(), dst);
      if (res.ec != std::errc{} || res.ptr != val.data() + val.size())
        throw config_error("bad checkpoint header value for " + key + " in " +
                           path);
    };
    auto as_double = [&](double& dst) {
      auto res = std::from_chars(val.data(), val.data() + val.size(), dst);
      if (res.ec != std::errc{} || res.ptr != val.data() + val.size())
        throw config_error("bad checkpoint header value for " + key + " in " +
                           path);
    };
    if (key == "schema")
      meta.schema = val;
    else if (key == "d")
      as_int(meta.d);
    else if (key == "k")
      as_int(meta.k);
    else if (key == "m")
      as_int(meta.m);
    else if (key == "b")
      as_double(meta.b);
    else if (key == "sigma_rho")
      as_double(meta.sigma_rho);
    else if (key == "lambda")
      as_double(meta.lambda);
    else if (key == "iteration")
      as_int(meta.iteration);
    else if (key == "seed")
      as_int(meta.seed);
    else if (key == "single_v") {
      int v = 0;
      as_int(v);
      meta.single_v = v != 0;
    } else {
      throw config_error("unknown checkpoint header key '" + key + "' in " +
                         path);
    }
  }
  if (meta.d < 1 || meta.m < 1)
    throw config_error("checkpoint header missing dimensions: " + path);
  return meta;
}

std::ifstream open_and_parse(const std::string& path, CheckpointMeta& meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw config_error("empty checkpoint file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  meta = parse_header(line, path);
  return in;
}

void expect_eof(std::ifstream& in, const std::string& path) {
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw config_error("trailing bytes after checkpoint payload: " + path);
}

}  // namespace

void save_net_checkpoint(const std::string& path, const SymmetricNet& net,
                         const CheckpointMeta& meta_in) {
  CheckpointMeta meta = meta_in;
  meta.schema = "net1";
  meta.d = net.d();
  meta.m = net.m();
  meta.b = net.b;
  meta.sigma_rho = net.sigma_rho;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open for writing: " + path);
  out << header_line(meta) << '\n';
  write_doubles_le(out, net.W.data(), net.W.size());
  if (!out) throw config_error("write failed: " + path);
}

SymmetricNet load_net_checkpoint(const std::string& path,
                                 CheckpointMeta* meta_out) {
  CheckpointMeta meta;
  std::ifstream in = open_and_parse(path, meta);
  if (meta.schema != "net1")
    throw config_error("expected schema net1, found " + meta.schema + ": " +
                       path);
  SymmetricNet net;
  net.W.resize(meta.m, meta.d);
  read_doubles_le(in, net.W.data(), net.W.size(), path);
  expect_eof(in, path);
  net.b = meta.b;
  net.sigma_rho = meta.sigma_rho;
  if (meta_out) *meta_out = meta;
  return net;
}

void save_ntk_checkpoint(const std::string& path, const NtkModel& model,
                         const CheckpointMeta& meta_in) {
  CheckpointMeta meta = meta_in;
  meta.schema = "ntk1";
  meta.d = model.d();
  meta.m = model.m();
  meta.single_v = model.single_v;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open for writing: " + path);
  out << header_line(meta) << '\n';
  write_doubles_le(out, model.W.data(), model.W.size());
  write_doubles_le(out, model.Vp.data(), model.Vp.size());
  write_doubles_le(out, model.Vm.data(), model.Vm.size());
  write_doubles_le(out, model.b_vec.data(), model.b_vec.size());
  write_doubles_le(out, model.sigma_vec.data(), model.sigma_vec.size());
  if (!out) throw config_error("write failed: " + path);
}

NtkModel load_ntk_checkpoint(const std::string& path,
                             CheckpointMeta* meta_out) {
  CheckpointMeta meta;
  std::ifstream in = open_and_parse(path, meta);
  if (meta.schema != "ntk1")
    throw config_error("expected schema ntk1, found " + meta.schema + ": " +
                       path);
  NtkModel model;
  model.W.resize(meta.m, meta.d);
  model.Vp.resize(meta.m, meta.d);
  model.Vm.resize(meta.m, meta.d);
  model.b_vec.resize(meta.m);
  model.sigma_vec.resize(meta.m);
  read_doubles_le(in, model.W.data(), model.W.size(), path);
  read_doubles_le(in, model.Vp.data(), model.Vp.size(), path);
  read_doubles_le(in, model.Vm.data(), model.Vm.size(), path);
  read_doubles_le(in, model.b_vec.data(), model.b_vec.size(), path);
  read_doubles_le(in, model.sigma_vec.data(), model.sigma_vec.size(), path);
  expect_eof(in, path);
  model.single_v = meta.single_v;
  if (meta_out) *meta_out = meta;
  return model;
}

}  // namespace purelab
