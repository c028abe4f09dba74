// SPDX-License-Identifier: Apache-2.0
#include "scandiff/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace scandiff::dataset {

namespace fs = std::filesystem;

void write_object_file(const std::string& path, const objects::CanonicalObject& obj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_object_file: cannot open " + path);
  const uint32_t n = static_cast<uint32_t>(obj.pts.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  std::vector<float> buf;
  buf.reserve(n * 4 + 6);
  for (const objects::Point& p : obj.pts.points) {
    buf.push_back(static_cast<float>(p.x));
    buf.push_back(static_cast<float>(p.y));
    buf.push_back(static_cast<float>(p.z));
    buf.push_back(static_cast<float>(p.i));
  }
  const objects::Condition& k = obj.kappa;
  for (double v : {k.phi, k.d, k.z, k.l, k.w, k.h}) buf.push_back(static_cast<float>(v));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(&obj.class_id), sizeof(obj.class_id));
  if (!out) throw std::runtime_error("write_object_file: write failed " + path);
}

objects::CanonicalObject read_object_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("read_object_file: cannot open " + path);
  uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::vector<float> buf(static_cast<std::size_t>(n) * 4 + 6);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  objects::CanonicalObject obj;
  in.read(reinterpret_cast<char*>(&obj.class_id), sizeof(obj.class_id));
  if (!in) throw ContractError("read_object_file: truncated file " + path);
  obj.pts.points.reserve(n);
  for (uint32_t i = 0; i < n; ++i)
    obj.pts.points.push_back(
        {buf[i * 4 + 0], buf[i * 4 + 1], buf[i * 4 + 2], buf[i * 4 + 3]});
  const std::size_t k = static_cast<std::size_t>(n) * 4;
  obj.kappa.phi = buf[k + 0];
  obj.kappa.d = buf[k + 1];
  obj.kappa.z = buf[k + 2];
  obj.kappa.l = buf[k + 3];
  obj.kappa.w = buf[k + 4];
  obj.kappa.h = buf[k + 5];
  return obj;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  nlohmann::json j;
  j["name"] = m.name;
  j["i_max"] = m.i_max;
  j["classes"] = m.classes;
  j["splits"] = {{"train", m.train_files}, {"val", m.val_files}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("write_manifest: cannot open manifest in " + dir);
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw ContractError("read_manifest: no manifest.json in " + dir);
  nlohmann::json j = nlohmann::json::parse(in);
  Manifest m;
  m.name = j.at("name").get<std::string>();
  m.i_max = j.at("i_max").get<double>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.train_files = j.at("splits").at("train").get<std::vector<std::string>>();
  m.val_files = j.at("splits").at("val").get<std::vector<std::string>>();
  return m;
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  for (const std::string& f : ds.manifest.train_files)
    ds.train.push_back(read_object_file((fs::path(dir) / f).string()));
  for (const std::string& f : ds.manifest.val_files)
    ds.val.push_back(read_object_file((fs::path(dir) / f).string()));
  return ds;
}

void write_dataset(const std::string& dir, const Manifest& manifest_base,
                   const std::vector<objects::CanonicalObject>& train,
                   const std::vector<objects::CanonicalObject>& val) {
  fs::create_directories(dir);
  Manifest m = manifest_base;
  m.train_files.clear();
  m.val_files.clear();
  char name[64];
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::snprintf(name, sizeof(name), "train_%06zu.bin", i);
    write_object_file((fs::path(dir) / name).string(), train[i]);
    m.train_files.push_back(name);
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    std::snprintf(name, sizeof(name), "val_%06zu.bin", i);
    write_object_file((fs::path(dir) / name).string(), val[i]);
    m.val_files.push_back(name);
  }
  write_manifest(dir, m);
}

}  // namespace scandiff::dataset
