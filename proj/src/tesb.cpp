#include "tes/tesb.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tes {

namespace {

constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& b, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(b, u);
}

void put_i16(std::string& b, std::int16_t v) {
  put_u16(b, static_cast<std::uint16_t>(v));
}

struct Cursor {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size())
      throw std::runtime_error("trace file: truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data[pos++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(data[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    need(4);
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    need(8);
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
};

} // namespace

void write_tesb(const std::string& path, const TraceBatch& batch) {
  const std::uint32_t n_traces = static_cast<std::uint32_t>(batch.traces.size());
  const std::uint32_t n_samples =
      n_traces ? static_cast<std::uint32_t>(batch.traces[0].samples.size())
               : batch.digitizer.trace_length;
  for (const Trace& tr : batch.traces)
    if (tr.samples.size() != n_samples)
      throw std::runtime_error("trace file: traces must share one length");

  std::string b;
  b.reserve(32 + static_cast<std::size_t>(n_traces) *
                     (2u * n_samples + (batch.has_truth ? 9u : 0u)));
  b += "TESB";
  put_u16(b, kVersion);
  b.push_back(static_cast<char>(batch.has_truth ? 1 : 0));
  b.push_back(static_cast<char>(batch.digitizer.bits));
  put_f64(b, batch.digitizer.sample_rate);
  put_f64(b, batch.digitizer.full_scale);
  put_u32(b, n_traces);
  put_u32(b, n_samples);
  for (const Trace& tr : batch.traces) {
    for (std::int16_t s : tr.samples) put_i16(b, s);
    if (batch.has_truth) {
      put_f64(b, tr.t0_true);
      b.push_back(static_cast<char>(tr.n_true < 0 ? 0 : tr.n_true));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("trace file: cannot open for writing: " + path);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("trace file: write failed: " + path);
}

TraceBatch read_tesb(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trace file: cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Cursor c{data};

  c.need(4);
  if (data.compare(0, 4, "TESB") != 0)
    throw std::runtime_error("trace file: bad magic");
  c.pos = 4;
  std::uint16_t version = c.u16();
  if (version != kVersion)
    throw std::runtime_error("trace file: unsupported version");
  std::uint8_t flags = c.u8();
  std::uint8_t bits = c.u8();
  if (bits < 1 || bits > 16)
    throw std::runtime_error("trace file: bits out of range");

  TraceBatch batch;
  batch.has_truth = (flags & 1u) != 0;
  batch.digitizer.bits = bits;
  batch.digitizer.sample_rate = c.f64();
  batch.digitizer.full_scale = c.f64();
  if (!(batch.digitizer.sample_rate > 0) || !(batch.digitizer.full_scale > 0))
    throw std::runtime_error("trace file: bad header values");
  std::uint32_t n_traces = c.u32();
  std::uint32_t n_samples = c.u32();
  batch.digitizer.trace_length = n_samples;
  batch.digitizer.pre_trigger = 0; // analysis setting, not stored

  std::size_t per_trace = 2u * static_cast<std::size_t>(n_samples) +
                          (batch.has_truth ? 9u : 0u);
  if (data.size() != 32 + per_trace * n_traces)
    throw std::runtime_error("trace file: size does not match header");

  const double dt = 1.0 / batch.digitizer.sample_rate;
  batch.traces.resize(n_traces);
  for (std::uint32_t i = 0; i < n_traces; ++i) {
    Trace& tr = batch.traces[i];
    tr.dt = dt;
    tr.samples.resize(n_samples);
    for (std::uint32_t j = 0; j < n_samples; ++j) tr.samples[j] = c.i16();
    if (batch.has_truth) {
      tr.t0_true = c.f64();
      tr.n_true = c.u8();
    }
  }
  return batch;
}

} // namespace tes
