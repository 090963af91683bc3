#pragma once

// Binary checkpoint of a TrainState. Layout is described in docs/checkpoint-format.md.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/trainer.hpp"

namespace dtcn {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CorruptFileError : CheckpointError {
  using CheckpointError::CheckpointError;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'T', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string format_model_config(const DTCNConfig& c) {
  std::ostringstream os;
  os << "N=" << c.N << "\nB=" << c.B << "\nH=" << c.H << "\nP=" << c.P << "\nL=" << c.L << "\nX=" << c.X << "\nR=" << c.R
     << "\nC=" << c.C << "\ndeformable=" << c.deformable << "\nshared_weights=" << c.shared_weights
     << "\nskip_connections=" << c.skip_connections << "\nsample_rate=" << c.sample_rate << '\n';
  return os.str();
}

inline DTCNConfig parse_model_config(const std::string& text) {
  DTCNConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t seen = 0;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptFileError("bad model config line: " + line);
    const std::string key = line.substr(0, eq);
    const unsigned long long v = std::stoull(line.substr(eq + 1));
    if (key == "N") c.N = v;
    else if (key == "B") c.B = v;
    else if (key == "H") c.H = v;
    else if (key == "P") c.P = v;
    else if (key == "L") c.L = v;
    else if (key == "X") c.X = v;
    else if (key == "R") c.R = v;
    else if (key == "C") c.C = v;
    else if (key == "deformable") c.deformable = v != 0;
    else if (key == "shared_weights") c.shared_weights = v != 0;
    else if (key == "skip_connections") c.skip_connections = v != 0;
    else if (key == "sample_rate") c.sample_rate = static_cast<int>(v);
    else throw CorruptFileError("unknown model config key: " + key);
    ++seen;
  }
  if (seen != 12) throw CorruptFileError("incomplete model config");
  return c;
}

namespace detail {

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void tensor(const std::string& name, const Tensor& t) {
    bytes(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }
  std::string& buffer() { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string bytes() {
    const std::size_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = bytes();
    const std::uint32_t rank = u32();
    if (rank > 4) throw CorruptFileError("implausible tensor rank for " + name);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = u64();
      if (d > (end_ - pos_)) throw CorruptFileError("implausible tensor dimension for " + name);
      n *= d;
    }
    need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = f64();
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CorruptFileError("checkpoint truncated");
  }
  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf_[pos_ + i]);
    pos_ += n;
    return v;
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const TrainState& st) {
  detail::ByteWriter w;
  w.buffer().append(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.bytes(format_model_config(st.model.config));
  w.u64(st.step);
  w.u64(st.epoch);
  w.f64(st.best_delta);
  w.f64(st.lr);
  w.u64(st.stall);
  const auto& params = st.model.params.all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    w.tensor(params[k].name, params[k].value);
    w.tensor("adam.m/" + params[k].name, st.adam.m[k]);
    w.tensor("adam.v/" + params[k].name, st.adam.v[k]);
  }
  w.u64(detail::fnv1a(w.buffer()));
  return std::move(w.buffer());
}

inline TrainState deserialize_checkpoint(const std::string& buf) {
  if (buf.size() < 12 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) throw CorruptFileError("not a checkpoint (bad magic)");
  {
    detail::ByteReader r(buf, buf.size());
    r.u64();
    const auto version = r.u32();
    if (version != kCheckpointVersion)
      throw VersionError("checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }
  if (buf.size() < 20) throw CorruptFileError("checkpoint truncated");
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | static_cast<unsigned char>(buf[body + i]);
  if (stored != detail::fnv1a(buf.substr(0, body))) throw CorruptFileError("checkpoint checksum mismatch (truncated or corrupt)");

  detail::ByteReader r(buf, body);
  r.u64();
  r.u32();
  DTCNConfig cfg;
  try {
    cfg = parse_model_config(r.bytes());
    cfg.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptFileError(std::string("bad model config: ") + e.what());
  }
  TrainState st{build_separator(cfg, 0), {}, 0, 0, 0.0, 0.0, 0};
  st.step = r.u64();
  st.epoch = r.u64();
  st.best_delta = r.f64();
  st.lr = r.f64();
  st.stall = r.u64();
  auto& params = st.model.params.all();
  if (r.u32() != params.size()) throw CorruptFileError("parameter count does not match the model config");
  auto expect = [&](const std::string& name, const Tensor& like) {
    auto [got, t] = r.tensor();
    if (got != name) throw CorruptFileError("expected tensor " + name + ", found " + got);
    if (t.shape() != like.shape()) throw CorruptFileError("shape mismatch for " + name);
    return std::move(t);
  };
  for (auto& p : params) {
    p.value = expect(p.name, p.value);
    st.adam.m.push_back(expect("adam.m/" + p.name, p.value));
    st.adam.v.push_back(expect("adam.v/" + p.name, p.value));
  }
  if (r.pos() != body) throw CorruptFileError("trailing bytes after tensors");
  return st;
}

inline void save_checkpoint(const TrainState& st, const std::string& path) {
  const std::string bytes = serialize_checkpoint(st);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + tmp);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into place: " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  const std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf);
}

}  // namespace dtcn
