#include "mi_skills/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

namespace mi_skills::io {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'S', 'K', 'C', 'K', 'P', 'T'};

template <typename U>
void write_le(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) throw std::runtime_error("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

void Checkpoint::add(Section s) {
  if (has(s.name)) throw ConfigError("duplicate checkpoint section '" + s.name + "'");
  sections_.push_back(std::move(s));
}

void Checkpoint::add_params(const std::string& name, const nn::ParamVector& params) {
  Section s;
  s.name = name;
  s.kind = SectionKind::Floats;
  s.shapes = params.shapes();
  s.floats.assign(params.values().begin(), params.values().end());
  add(std::move(s));
}

void Checkpoint::add_floats(const std::string& name, std::vector<double> values) {
  Section s;
  s.name = name;
  s.kind = SectionKind::Floats;
  s.floats = std::move(values);
  add(std::move(s));
}

void Checkpoint::add_text(const std::string& name, std::string text) {
  Section s;
  s.name = name;
  s.kind = SectionKind::Text;
  s.text = std::move(text);
  add(std::move(s));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return true;
  }
  return false;
}

const Section& Checkpoint::find(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return s;
  }
  throw std::runtime_error("checkpoint has no section '" + name + "'");
}

nn::ParamVector Checkpoint::params(const std::string& name) const {
  const auto& s = find(name);
  if (s.kind != SectionKind::Floats || s.shapes.empty()) {
    throw std::runtime_error("checkpoint section '" + name + "' is not a parameter vector");
  }
  return nn::ParamVector(s.shapes, s.floats);
}

const std::vector<double>& Checkpoint::floats(const std::string& name) const {
  const auto& s = find(name);
  if (s.kind != SectionKind::Floats) throw std::runtime_error("section '" + name + "' is not numeric");
  return s.floats;
}

const std::string& Checkpoint::text(const std::string& name) const {
  const auto& s = find(name);
  if (s.kind != SectionKind::Text) throw std::runtime_error("section '" + name + "' is not text");
  return s.text;
}

void Checkpoint::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& s : sections_) {
    write_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_u32(out, static_cast<std::uint32_t>(s.kind));
    write_u64(out, s.kind == SectionKind::Floats ? s.floats.size() : s.text.size());
    write_u32(out, static_cast<std::uint32_t>(s.shapes.size()));
  }
  for (const auto& s : sections_) {
    if (s.kind == SectionKind::Floats) {
      for (const auto& shape : s.shapes) {
        write_u64(out, shape.rows);
        write_u64(out, shape.cols);
        write_u64(out, shape.bias);
      }
      for (double v : s.floats) write_f64(out, v);
    } else {
      out.write(s.text.data(), static_cast<std::streamsize>(s.text.size()));
    }
  }
}

Checkpoint Checkpoint::read(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("not a checkpoint file");
  const auto version = read_u32(in);
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto count = read_u32(in);
  struct Entry {
    std::string name;
    SectionKind kind;
    std::uint64_t length;
    std::uint32_t shape_count;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name.resize(read_u32(in));
    in.read(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto kind = read_u32(in);
    if (kind > 1) throw std::runtime_error("unknown section kind in '" + e.name + "'");
    e.kind = static_cast<SectionKind>(kind);
    e.length = read_u64(in);
    e.shape_count = read_u32(in);
    manifest.push_back(std::move(e));
  }
  Checkpoint ck;
  for (const auto& e : manifest) {
    Section s;
    s.name = e.name;
    s.kind = e.kind;
    if (e.kind == SectionKind::Floats) {
      for (std::uint32_t k = 0; k < e.shape_count; ++k) {
        nn::LayerShape shape;
        shape.rows = read_u64(in);
        shape.cols = read_u64(in);
        shape.bias = read_u64(in);
        s.shapes.push_back(shape);
      }
      s.floats.resize(e.length);
      for (auto& v : s.floats) v = read_f64(in);
    } else {
      s.text.resize(e.length);
      in.read(s.text.data(), static_cast<std::streamsize>(e.length));
      if (!in) throw std::runtime_error("unexpected end of file in section '" + e.name + "'");
    }
    ck.add(std::move(s));
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    write(out);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read(in);
}

}  // namespace mi_skills::io
