#include "cnsdiff/model.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace cnsdiff {

namespace {

void write_floats(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, std::vector<float>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model, uint64_t seed,
                     int epoch) {
  json sections = json::array();
  model.dense.for_each_tensor([&](const char* name, const std::vector<float>& t) {
    sections.push_back({{"name", name}, {"size", t.size()}});
  });
  json header = {{"M", model.dims.num_users},
                 {"N", model.dims.num_items},
                 {"d", model.dims.d},
                 {"K", model.dims.K},
                 {"hidden", model.dims.hidden},
                 {"time_dim", model.dims.time_dim},
                 {"env_dim", model.dims.env_dim},
                 {"num_envs", model.dims.num_envs},
                 {"seed", seed},
                 {"epoch", epoch},
                 {"sections", sections}};
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  uint32_t len = static_cast<uint32_t>(hs.size());
  char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                  static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  out.write(lenb, 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  write_floats(out, model.user_table.a);
  write_floats(out, model.item_table.a);
  model.dense.for_each_tensor(
      [&](const char*, const std::vector<float>& t) { write_floats(out, t); });
  if (!out) throw std::runtime_error("checkpoint write failure: " + path);
}

Model<float> load_checkpoint(const std::string& path, uint64_t* seed_out, int* epoch_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  const uint32_t len = static_cast<uint32_t>(lenb[0]) | (static_cast<uint32_t>(lenb[1]) << 8) |
                       (static_cast<uint32_t>(lenb[2]) << 16) |
                       (static_cast<uint32_t>(lenb[3]) << 24);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(hs);

  Model<float> m;
  m.dims.num_users = header.at("M").get<int32_t>();
  m.dims.num_items = header.at("N").get<int32_t>();
  m.dims.d = header.at("d").get<int>();
  m.dims.K = header.at("K").get<int>();
  m.dims.hidden = header.at("hidden").get<int>();
  m.dims.time_dim = header.at("time_dim").get<int>();
  m.dims.env_dim = header.at("env_dim").get<int>();
  m.dims.num_envs = header.at("num_envs").get<int>();
  if (seed_out) *seed_out = header.at("seed").get<uint64_t>();
  if (epoch_out) *epoch_out = header.at("epoch").get<int>();

  m.user_table = Mat<float>(m.dims.num_users, m.dims.d);
  m.item_table = Mat<float>(m.dims.num_items, m.dims.d);
  m.dense.init_shapes(m.dims);
  read_floats(in, m.user_table.a);
  read_floats(in, m.item_table.a);
  std::size_t si = 0;
  const json& sections = header.at("sections");
  m.dense.for_each_tensor([&](const char* name, std::vector<float>& t) {
    if (si >= sections.size() || sections[si].at("name").get<std::string>() != name ||
        sections[si].at("size").get<std::size_t>() != t.size()) {
      throw std::runtime_error("checkpoint section mismatch at '" + std::string(name) + "'");
    }
    read_floats(in, t);
    ++si;
  });
  if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
  return m;
}

}  // namespace cnsdiff
