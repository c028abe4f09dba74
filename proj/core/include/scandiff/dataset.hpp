// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scandiff/objects.hpp"

namespace scandiff::dataset {

// Directory layout: manifest.json + one little-endian binary per object,
// layout [n:uint32][n x 4 float32 canonical points][6 float32 kappa][class-id:uint32].
struct Manifest {
  std::string name;
  double i_max = 255.0;
  std::vector<std::string> classes;
  std::vector<std::string> train_files;
  std::vector<std::string> val_files;
};

void write_object_file(const std::string& path, const objects::CanonicalObject& obj);
objects::CanonicalObject read_object_file(const std::string& path);

void write_manifest(const std::string& dir, const Manifest& m);
Manifest read_manifest(const std::string& dir);

struct Dataset {
  Manifest manifest;
  std::vector<objects::CanonicalObject> train;
  std::vector<objects::CanonicalObject> val;
};

Dataset load_dataset(const std::string& dir);

// Writes objects + manifest into `dir` (created if absent), all objects
// in one split list given by `split` ("train" or "val").
void write_dataset(const std::string& dir, const Manifest& manifest_base,
                   const std::vector<objects::CanonicalObject>& train,
                   const std::vector<objects::CanonicalObject>& val);

}  // namespace scandiff::dataset
