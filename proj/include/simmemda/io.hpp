#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simmemda/core.hpp"
#include "simmemda/membank.hpp"

namespace simmemda::io {

using core::Box;
using core::Detection;
using core::Tensor;

/// Malformed-input error carrying the byte offset of the problem.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

namespace detail {

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw ParseError("cannot open '" + path + "'", 0);
  }

  std::uint64_t offset() const { return offset_; }

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw ParseError(std::string("truncated ") + what, offset_);
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::uint8_t b[4];
    bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint16_t u16(const char* what) {
    std::uint8_t b[2];
    bytes(b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  float f32(const char* what) {
    std::uint32_t u = u32(what);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }

  void expect_magic(const char* magic) {
    char b[4];
    bytes(b, 4, "magic");
    if (std::memcmp(b, magic, 4) != 0)
      throw ParseError(std::string("bad magic, expected '") + magic + "'", 0);
  }

  bool eof_clean() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }

  void bytes(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u16(std::uint16_t v) {
    std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
    bytes(b, 2);
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }

 private:
  std::ofstream out_;
};

}  // namespace detail

// ---- TEN1: magic, u32 rank, rank x u32 dims, f32 row-major payload ----

inline void write_tensor(const std::string& path, const Tensor& t) {
  detail::Writer w(path);
  w.bytes("TEN1", 4);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

inline Tensor read_tensor(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic("TEN1");
  const std::uint32_t rank = r.u32("rank");
  if (rank == 0 || rank > 8) throw ParseError("implausible rank", r.offset() - 4);
  std::vector<std::size_t> dims(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    dims[i] = r.u32("dimension");
    if (dims[i] == 0) throw ParseError("zero dimension", r.offset() - 4);
    n *= dims[i];
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = r.f32("payload");
  if (!r.eof_clean()) throw ParseError("trailing bytes", r.offset());
  return Tensor(std::move(dims), std::move(data));
}

// ---- EMB1: magic, u32 count, u32 dim, count x dim f32 ----

inline void write_embeddings(const std::string& path,
                             const std::vector<std::vector<double>>& embs) {
  detail::Writer w(path);
  w.bytes("EMB1", 4);
  w.u32(static_cast<std::uint32_t>(embs.size()));
  w.u32(embs.empty() ? 0 : static_cast<std::uint32_t>(embs[0].size()));
  for (const auto& e : embs)
    for (double v : e) w.f32(static_cast<float>(v));
}

inline std::vector<std::vector<double>> read_embeddings(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic("EMB1");
  const std::uint32_t count = r.u32("count");
  const std::uint32_t dim = r.u32("dim");
  std::vector<std::vector<double>> embs(count, std::vector<double>(dim));
  for (auto& e : embs)
    for (double& v : e) v = r.f32("embedding payload");
  if (!r.eof_clean()) throw ParseError("trailing bytes", r.offset());
  return embs;
}

// ---- MBK1: magic, u32 count, u32 dim, per entry: f32 confidence,
//      u32 epoch, 4 x f32 box, u16 id length + UTF-8 id, dim x f32 ----

inline void write_bank(const std::string& path, const membank::MemoryBank& bank) {
  detail::Writer w(path);
  w.bytes("MBK1", 4);
  w.u32(static_cast<std::uint32_t>(bank.entries.size()));
  w.u32(bank.entries.empty()
            ? 0
            : static_cast<std::uint32_t>(bank.entries[0].feature.size()));
  for (const auto& e : bank.entries) {
    w.f32(static_cast<float>(e.confidence));
    w.u32(static_cast<std::uint32_t>(e.epoch));
    w.f32(static_cast<float>(e.box.x1));
    w.f32(static_cast<float>(e.box.y1));
    w.f32(static_cast<float>(e.box.x2));
    w.f32(static_cast<float>(e.box.y2));
    w.u16(static_cast<std::uint16_t>(e.image_id.size()));
    w.bytes(e.image_id.data(), e.image_id.size());
    for (double v : e.feature) w.f32(static_cast<float>(v));
  }
}

inline membank::MemoryBank read_bank(const std::string& path,
                                     std::size_t capacity = 2048) {
  detail::Reader r(path);
  r.expect_magic("MBK1");
  const std::uint32_t count = r.u32("entry count");
  const std::uint32_t dim = r.u32("feature dim");
  membank::MemoryBank bank;
  bank.capacity = capacity;
  for (std::uint32_t i = 0; i < count; ++i) {
    membank::MemEntry e;
    e.confidence = r.f32("confidence");
    e.epoch = static_cast<int>(r.u32("epoch"));
    const float x1 = r.f32("box"), y1 = r.f32("box");
    const float x2 = r.f32("box"), y2 = r.f32("box");
    const std::uint64_t box_off = r.offset() - 16;
    const std::uint16_t len = r.u16("image id length");
    std::string id(len, '\0');
    if (len > 0) r.bytes(id.data(), len, "image id");
    e.image_id = std::move(id);
    e.feature.resize(dim);
    for (double& v : e.feature) v = r.f32("feature payload");
    try {
      e.box = Box(x1, y1, x2, y2);
    } catch (const std::invalid_argument&) {
      throw ParseError("degenerate box", box_off);
    }
    bank.entries.push_back(std::move(e));
  }
  if (!r.eof_clean()) throw ParseError("trailing bytes", r.offset());
  return bank;
}

// ---- Detections JSONL ----

inline nlohmann::json detection_to_json(const Detection& d) {
  return nlohmann::json{{"image_id", d.image_id},
                        {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                        {"score", d.score},
                        {"class_id", d.class_id}};
}

inline void write_detections(const std::string& path,
                             const std::vector<Detection>& dets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const Detection& d : dets) out << detection_to_json(d).dump() << '\n';
}

inline std::vector<Detection> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::vector<Detection> dets;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      offset += line.size() + 1;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const auto& b = j.at("box");
      dets.emplace_back(j.at("image_id").get<std::string>(),
                        Box(b.at(0).get<double>(), b.at(1).get<double>(),
                            b.at(2).get<double>(), b.at(3).get<double>()),
                        j.at("score").get<double>(), j.at("class_id").get<int>());
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad detection record: ") + e.what(), offset);
    }
    offset += line.size() + 1;
  }
  return dets;
}

}  // namespace simmemda::io
