#pragma once

#include "mi_skills/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mi_skills::io {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// On-disk layout, all integers and floats little-endian:
//   "MISKCKPT" u32 format_version u32 section_count
//   manifest, per section: u32 name_len, name, u32 kind, u64 length, u32 shape_count
//   bodies, per section in manifest order:
//     kind 0 (floats): shape_count x (u64 rows, u64 cols, u64 bias), then length x f64
//     kind 1 (text):   length bytes
enum class SectionKind : std::uint32_t { Floats = 0, Text = 1 };

struct Section {
  std::string name;
  SectionKind kind = SectionKind::Floats;
  std::vector<nn::LayerShape> shapes;
  std::vector<double> floats;
  std::string text;
};

class Checkpoint {
 public:
  void add_params(const std::string& name, const nn::ParamVector& params);
  void add_floats(const std::string& name, std::vector<double> values);
  void add_text(const std::string& name, std::string text);

  bool has(const std::string& name) const;
  nn::ParamVector params(const std::string& name) const;
  const std::vector<double>& floats(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  const std::vector<Section>& sections() const { return sections_; }

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  const Section& find(const std::string& name) const;
  void add(Section s);
  std::vector<Section> sections_;
};

// Little-endian primitives shared with the replay dump format.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

}  // namespace mi_skills::io
