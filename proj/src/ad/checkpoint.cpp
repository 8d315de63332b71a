#include "simsr/ad/checkpoint.hpp"

#include "simsr/binary_io.hpp"
#include "simsr/error.hpp"

#include <fstream>

namespace simsr::ad {

void write_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  binio::put_magic(out, "SSCK");
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.all()) {
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.values()) binio::put_f32(out, v);
  }
  if (!out) throw Error(Errc::io_failure, "write failed: " + path.string());
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  binio::expect_magic(in, "SSCK");
  auto version = binio::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(Errc::parse_failure, "unsupported checkpoint version " + std::to_string(version));
  }
  auto count = binio::get<std::uint32_t>(in);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    auto len = binio::get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw Error(Errc::parse_failure, "truncated tensor name");
    auto rank = binio::get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = binio::get<std::uint32_t>(in);
    Tensor t(shape);
    for (auto& v : t.values()) v = binio::get_f32(in);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void load_checkpoint(ParamSet& params, const std::filesystem::path& path) {
  auto named = read_checkpoint(path);
  for (auto& p : params.all()) {
    bool found = false;
    for (auto& [name, t] : named) {
      if (name != p.name) continue;
      if (t.shape() != p.value.shape()) {
        throw Error(Errc::shape_mismatch, "checkpoint tensor " + name + " has shape " + shape_string(t.shape()) +
                                              ", model expects " + shape_string(p.value.shape()));
      }
      p.value = std::move(t);
      found = true;
      break;
    }
    if (!found) throw Error(Errc::parse_failure, "checkpoint lacks tensor " + p.name);
  }
}

void round_to_f32(ParamSet& params) {
  for (auto& p : params.all())
    for (auto& v : p.value.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace simsr::ad
