#include "feudal/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace feudal {

namespace {

void write_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  out.write(bytes, 8);
}

double read_le_double(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) throw std::runtime_error("checkpoint: truncated data section");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i]))
            << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << "feudal-checkpoint v1\n";
  out << "tensors " << params.size() << "\n";
  for (const auto& p : params) {
    out << p.name << " " << p.value->shape.size();
    for (std::size_t s : p.value->shape) out << " " << s;
    out << "\n";
  }
  out << "data\n";
  for (const auto& p : params) {
    for (double v : p.value->data) write_le_double(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, ParamList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "feudal-checkpoint v1") {
    throw std::runtime_error("checkpoint: unrecognized header in " + path);
  }
  if (!std::getline(in, line)) {
    throw std::runtime_error("checkpoint: missing tensor count");
  }
  std::istringstream counts(line);
  std::string tag;
  std::size_t n = 0;
  counts >> tag >> n;
  if (tag != "tensors" || n != params.size()) {
    throw std::runtime_error(
        "checkpoint: incompatible tensor count (file has " +
        std::to_string(n) + ", model has " + std::to_string(params.size()) +
        ")");
  }
  for (auto& p : params) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("checkpoint: truncated manifest");
    }
    std::istringstream row(line);
    std::string name;
    std::size_t ndims = 0;
    row >> name >> ndims;
    std::vector<std::size_t> shape(ndims);
    for (auto& s : shape) row >> s;
    if (!row || name != p.name || shape != p.value->shape) {
      throw std::runtime_error("checkpoint: incompatible tensor '" + name +
                               "' (model expects '" + p.name + "')");
    }
  }
  if (!std::getline(in, line) || line != "data") {
    throw std::runtime_error("checkpoint: missing data marker");
  }
  for (auto& p : params) {
    for (double& v : p.value->data) v = read_le_double(in);
  }
}

}  // namespace feudal
