#include "siamapn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace siamapn {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'P', 'N', 'C', 'K', 'P', 'T'};

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

void write_u64(std::ostream& os, std::uint64_t v) {
  const std::uint64_t le = to_le(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t le = 0;
  is.read(reinterpret_cast<char*>(&le), sizeof(le));
  return to_le(le);
}

}  // namespace

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header = archive.meta;
  header["format"] = 1;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedTensor& nt : archive.tensors) {
    index.push_back({{"name", nt.name}, {"offset", offset}, {"shape", nt.tensor.shape()}});
    offset += nt.tensor.numel() * sizeof(double);
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const NamedTensor& nt : archive.tensors) {
    for (double v : nt.tensor.data()) write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  }
  const std::uint64_t header_len = read_u64(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  nlohmann::json header = nlohmann::json::parse(text);
  if (header.value("format", 0) != 1) throw std::runtime_error(path.string() + ": unknown format");

  const std::streamoff payload = in.tellg();
  TensorArchive archive;
  for (const auto& entry : header.at("tensors")) {
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(payload + static_cast<std::streamoff>(offset));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(read_u64(in));
    if (!in) throw std::runtime_error(path.string() + ": truncated payload");
    archive.tensors.push_back({entry.at("name").get<std::string>(), Tensor(shape, std::move(values))});
  }
  header.erase("tensors");
  header.erase("format");
  archive.meta = std::move(header);
  return archive;
}

void save_checkpoint(const std::filesystem::path& path, const SiamApnPP& model,
                     const Config& cfg) {
  TensorArchive archive;
  archive.meta["config"] = to_json(cfg);
  for (const Param& p : model.params().params()) archive.tensors.push_back({p.name, p.tensor});
  write_tensor_archive(path, archive);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  TensorArchive archive = read_tensor_archive(path);
  LoadedCheckpoint out;
  out.config = config_from_json(archive.meta.at("config"));
  out.model = std::make_unique<SiamApnPP>(out.config.model);
  ParameterSet& ps = out.model->params();
  if (archive.tensors.size() != ps.params().size()) {
    throw std::runtime_error(path.string() + ": parameter count does not match its config");
  }
  for (const NamedTensor& nt : archive.tensors) {
    Param* p = ps.find(nt.name);
    if (p == nullptr || p->tensor.shape() != nt.tensor.shape()) {
      throw std::runtime_error(path.string() + ": unexpected tensor " + nt.name);
    }
    std::copy(nt.tensor.data().begin(), nt.tensor.data().end(), p->tensor.data_mut().begin());
  }
  return out;
}

}  // namespace siamapn
