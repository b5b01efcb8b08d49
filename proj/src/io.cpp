#include "bodytrack/io.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bodytrack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

void write_float_le(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  char buf[4];
  std::memcpy(buf, &v, 4);  // little-endian host assumed (x86/arm64)
  out.write(buf, 4);
}

void write_int_le(std::ostream& out, std::int32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
};

PlyHeader parse_ply_header(std::istream& in, const fs::path& path) {
  PlyHeader header;
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw ParseError("not a PLY file: " + path.string());
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment") continue;
    if (token == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        header.binary = true;
      } else if (fmt == "ascii") {
        header.binary = false;
      } else {
        throw ParseError("unsupported PLY format: " + fmt);
      }
    } else if (token == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      header.elements.push_back(el);
    } else if (token == "property") {
      if (header.elements.empty()) throw ParseError("PLY property before element");
      std::string type;
      ls >> type;
      PlyProperty prop;
      if (type == "list") {
        std::string count_type, value_type;
        ls >> count_type >> value_type >> prop.name;
        prop.is_list = true;
      } else {
        if (type != "float" && type != "float32" && type != "double") {
          throw ParseError("unsupported PLY property type: " + type);
        }
        ls >> prop.name;
      }
      header.elements.back().properties.push_back(prop);
    } else if (token == "end_header") {
      return header;
    }
  }
  throw ParseError("PLY header not terminated: " + path.string());
}

void write_ply_header(std::ostream& out, bool binary, std::size_t vertices,
                      bool normals, std::size_t faces, bool with_faces) {
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << vertices << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (normals) {
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  }
  if (with_faces) {
    out << "element face " << faces << "\n";
    out << "property list uchar int vertex_indices\n";
  }
  out << "end_header\n";
}

}  // namespace

void write_ply(const fs::path& path, const PointCloud& cloud, bool binary) {
  std::ofstream out = open_out(path, binary);
  write_ply_header(out, binary, cloud.size(), cloud.has_normals(), 0, false);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (binary) {
      for (int a = 0; a < 3; ++a) {
        write_float_le(out, static_cast<float>(cloud.points[i](a)));
      }
      if (cloud.has_normals()) {
        for (int a = 0; a < 3; ++a) {
          write_float_le(out, static_cast<float>(cloud.normals[i](a)));
        }
      }
    } else {
      const auto& p = cloud.points[i];
      out << static_cast<float>(p.x()) << " " << static_cast<float>(p.y())
          << " " << static_cast<float>(p.z());
      if (cloud.has_normals()) {
        const auto& n = cloud.normals[i];
        out << " " << static_cast<float>(n.x()) << " "
            << static_cast<float>(n.y()) << " " << static_cast<float>(n.z());
      }
      out << "\n";
    }
  }
}

void write_ply(const fs::path& path, const TriangleMesh& mesh, bool binary) {
  std::ofstream out = open_out(path, binary);
  write_ply_header(out, binary, mesh.vertices.size(), mesh.has_normals(),
                   mesh.triangles.size(), true);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (binary) {
      for (int a = 0; a < 3; ++a) {
        write_float_le(out, static_cast<float>(mesh.vertices[i](a)));
      }
      if (mesh.has_normals()) {
        for (int a = 0; a < 3; ++a) {
          write_float_le(out, static_cast<float>(mesh.vertex_normals[i](a)));
        }
      }
    } else {
      const auto& v = mesh.vertices[i];
      out << static_cast<float>(v.x()) << " " << static_cast<float>(v.y())
          << " " << static_cast<float>(v.z());
      if (mesh.has_normals()) {
        const auto& n = mesh.vertex_normals[i];
        out << " " << static_cast<float>(n.x()) << " "
            << static_cast<float>(n.y()) << " " << static_cast<float>(n.z());
      }
      out << "\n";
    }
  }
  for (const auto& t : mesh.triangles) {
    if (binary) {
      const unsigned char n = 3;
      out.write(reinterpret_cast<const char*>(&n), 1);
      for (int a = 0; a < 3; ++a) write_int_le(out, t(a));
    } else {
      out << "3 " << t(0) << " " << t(1) << " " << t(2) << "\n";
    }
  }
}

namespace {

struct PlyData {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
  std::vector<Eigen::Vector3i> faces;
};

PlyData read_ply(const fs::path& path) {
  std::ifstream in = open_in(path, true);
  const PlyHeader header = parse_ply_header(in, path);
  PlyData data;

  for (const auto& element : header.elements) {
    if (element.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
      for (std::size_t p = 0; p < element.properties.size(); ++p) {
        const std::string& n = element.properties[p].name;
        if (n == "x") ix = static_cast<int>(p);
        if (n == "y") iy = static_cast<int>(p);
        if (n == "z") iz = static_cast<int>(p);
        if (n == "nx") inx = static_cast<int>(p);
        if (n == "ny") iny = static_cast<int>(p);
        if (n == "nz") inz = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) {
        throw ParseError("PLY vertex element lacks x/y/z: " + path.string());
      }
      const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
      std::vector<double> values(element.properties.size());
      for (std::size_t i = 0; i < element.count; ++i) {
        if (header.binary) {
          for (auto& v : values) {
            float f;
            in.read(reinterpret_cast<char*>(&f), 4);
            v = f;
          }
        } else {
          for (auto& v : values) in >> v;
        }
        if (!in) throw ParseError("truncated PLY vertices: " + path.string());
        data.points.emplace_back(values[ix], values[iy], values[iz]);
        if (with_normals) {
          data.normals.emplace_back(values[inx], values[iny], values[inz]);
        }
      }
    } else if (element.name == "face") {
      for (std::size_t i = 0; i < element.count; ++i) {
        unsigned int n = 0;
        std::vector<int> idx;
        if (header.binary) {
          unsigned char count;
          in.read(reinterpret_cast<char*>(&count), 1);
          n = count;
          idx.resize(n);
          in.read(reinterpret_cast<char*>(idx.data()), 4 * n);
        } else {
          in >> n;
          idx.resize(n);
          for (auto& v : idx) in >> v;
        }
        if (!in) throw ParseError("truncated PLY faces: " + path.string());
        if (n != 3) throw ParseError("non-triangular PLY face: " + path.string());
        data.faces.emplace_back(idx[0], idx[1], idx[2]);
      }
    } else {
      throw ParseError("unsupported PLY element '" + element.name + "'");
    }
  }
  return data;
}

}  // namespace

PointCloud read_ply_cloud(const fs::path& path) {
  PlyData data = read_ply(path);
  PointCloud cloud;
  cloud.points = std::move(data.points);
  cloud.normals = std::move(data.normals);
  return cloud;
}

TriangleMesh read_ply_mesh(const fs::path& path) {
  PlyData data = read_ply(path);
  TriangleMesh mesh;
  mesh.vertices = std::move(data.points);
  mesh.vertex_normals = std::move(data.normals);
  mesh.triangles = std::move(data.faces);
  return mesh;
}

void write_pgm16(const fs::path& path, const DepthImage& image) {
  std::ofstream out = open_out(path, true);
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 2);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const std::uint16_t d = image.at(u, v);
      row[2 * u] = static_cast<unsigned char>(d >> 8);  // MSB first
      row[2 * u + 1] = static_cast<unsigned char>(d & 0xff);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

DepthImage read_pgm16(const fs::path& path) {
  std::ifstream in = open_in(path, true);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError("not a binary PGM: " + path.string());
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (maxval != 65535) {
    throw ParseError("expected 16-bit PGM (maxval 65535): " + path.string());
  }
  in.get();  // single whitespace after maxval
  DepthImage image;
  image.width = width;
  image.height = height;
  image.data.resize(static_cast<std::size_t>(width) * height);
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 2);
  for (int v = 0; v < height; ++v) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw ParseError("truncated PGM: " + path.string());
    for (int u = 0; u < width; ++u) {
      image.at(u, v) =
          static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1]);
    }
  }
  return image;
}

void write_pose_file(const fs::path& path, const RigidTransform& pose) {
  open_out(path) << to_pose_text(pose) << "\n";
}

RigidTransform read_pose_file(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("empty pose file: " + path.string());
  }
  return from_pose_text(line);
}

void write_intrinsics_json(const fs::path& path, const CameraIntrinsics& k) {
  json j;
  j["fx"] = k.fx;
  j["fy"] = k.fy;
  j["cx"] = k.cx;
  j["cy"] = k.cy;
  j["width"] = k.width;
  j["height"] = k.height;
  open_out(path) << j.dump(2) << "\n";
}

CameraIntrinsics read_intrinsics_json(const fs::path& path) {
  json j = json::parse(open_in(path));
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  if (!k.valid()) throw ParseError("invalid intrinsics in " + path.string());
  return k;
}

void write_marker_map_json(const fs::path& path, const MarkerMap& map) {
  json markers = json::object();
  for (const auto& [id, corners] : map.markers) {
    json flat = json::array();
    for (const auto& c : corners) {
      flat.push_back(c.x());
      flat.push_back(c.y());
      flat.push_back(c.z());
    }
    markers[std::to_string(id)] = flat;
  }
  json j;
  j["marker_side"] = map.marker_side;
  j["markers"] = markers;  // corner order counter-clockwise from top-left
  open_out(path) << j.dump(2) << "\n";
}

MarkerMap read_marker_map_json(const fs::path& path) {
  json j = json::parse(open_in(path));
  MarkerMap map;
  map.marker_side = j.at("marker_side").get<double>();
  for (const auto& [key, flat] : j.at("markers").items()) {
    if (flat.size() != 12) {
      throw ParseError("marker " + key + " must have 12 floats");
    }
    std::array<Eigen::Vector3d, 4> corners;
    for (int c = 0; c < 4; ++c) {
      corners[c] = Eigen::Vector3d(flat[3 * c].get<double>(),
                                   flat[3 * c + 1].get<double>(),
                                   flat[3 * c + 2].get<double>());
    }
    map.markers[std::stoi(key)] = corners;
  }
  return map;
}

namespace {

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.pgm", index);
  return buf;
}

std::string csv_pose(const RigidTransform& pose) {
  std::string text = to_pose_text(pose);
  for (auto& c : text) {
    if (c == ' ') c = ',';
  }
  return text;
}

RigidTransform pose_from_fields(const std::vector<std::string>& fields,
                                std::size_t offset) {
  std::string text;
  for (std::size_t i = 0; i < 7; ++i) {
    text += fields.at(offset + i);
    text += ' ';
  }
  return from_pose_text(text);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

struct SequenceWriter::Impl {
  fs::path dir;
  std::ofstream detections;
  std::ofstream scene_poses;
  std::ofstream ground_truth;
  bool finished = false;
};

SequenceWriter::SequenceWriter(const fs::path& dir, const CameraIntrinsics& k,
                               const BodyModel& model, bool force)
    : impl_(new Impl) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw IoError("output directory exists and is not empty: " +
                    dir.string() + " (use force to overwrite)");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "frames");
  impl_->dir = dir;
  write_intrinsics_json(dir / "intrinsics.json", k);
  write_ply(dir / "body_model.ply", model.mesh);
  write_marker_map_json(dir / "marker_map.json", model.marker_map);
  impl_->detections = open_out(dir / "detections.jsonl");
  impl_->scene_poses = open_out(dir / "scene_poses.csv");
  impl_->scene_poses << "frame,valid,tx,ty,tz,qx,qy,qz,qw\n";
  impl_->ground_truth = open_out(dir / "ground_truth.csv");
  impl_->ground_truth << "frame,body_tx,body_ty,body_tz,body_qx,body_qy,"
                         "body_qz,body_qw,cam_tx,cam_ty,cam_tz,cam_qx,"
                         "cam_qy,cam_qz,cam_qw\n";
}

SequenceWriter::~SequenceWriter() = default;

void SequenceWriter::add(const Frame& frame) {
  write_pgm16(impl_->dir / "frames" / frame_name(frame.index), frame.depth);

  json markers = json::array();
  for (const auto& det : frame.detections.markers) {
    json corners = json::array();
    for (const auto& c : det.corners) {
      corners.push_back(c.x());
      corners.push_back(c.y());
    }
    markers.push_back({{"id", det.id}, {"corners", corners}});
  }
  json line;
  line["frame"] = frame.index;
  line["markers"] = markers;
  impl_->detections << line.dump() << "\n";

  impl_->scene_poses << frame.index << ","
                     << (frame.scene_pose_valid ? 1 : 0) << ","
                     << csv_pose(frame.scene_pose) << "\n";
  impl_->ground_truth << frame.index << ","
                      << csv_pose(frame.ground_truth.body_pose) << ","
                      << csv_pose(frame.ground_truth.camera_pose) << "\n";
}

void SequenceWriter::finish() {
  impl_->detections.flush();
  impl_->scene_poses.flush();
  impl_->ground_truth.flush();
  impl_->finished = true;
}

SequenceReader::SequenceReader(const fs::path& dir) : dir_(dir) {
  if (!fs::exists(dir / "intrinsics.json")) {
    throw IoError("not a sequence directory (missing intrinsics.json): " +
                  dir.string());
  }
  intrinsics_ = read_intrinsics_json(dir / "intrinsics.json");
  marker_map_ = read_marker_map_json(dir / "marker_map.json");
  body_mesh_ = read_ply_mesh(dir / "body_model.ply");

  {
    std::ifstream in = open_in(dir / "detections.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const int index = j.at("frame").get<int>();
      if (static_cast<int>(detections_.size()) < index) {
        detections_.resize(index);
      }
      MarkerDetections det;
      for (const auto& m : j.at("markers")) {
        MarkerDetection d;
        d.id = m.at("id").get<int>();
        const auto& corners = m.at("corners");
        for (int c = 0; c < 4; ++c) {
          d.corners[c] = Eigen::Vector2d(corners[2 * c].get<double>(),
                                         corners[2 * c + 1].get<double>());
        }
        det.markers.push_back(d);
      }
      detections_[index - 1] = std::move(det);
    }
  }
  {
    std::ifstream in = open_in(dir / "scene_poses.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv(line);
      const int index = std::stoi(fields.at(0));
      if (static_cast<int>(scene_poses_.size()) < index) {
        scene_poses_.resize(index);
      }
      scene_poses_[index - 1] = {pose_from_fields(fields, 2),
                                 fields.at(1) == "1"};
    }
  }
  {
    std::ifstream in = open_in(dir / "ground_truth.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv(line);
      const int index = std::stoi(fields.at(0));
      if (static_cast<int>(ground_truth_.size()) < index) {
        ground_truth_.resize(index);
      }
      ground_truth_[index - 1] = {pose_from_fields(fields, 1),
                                  pose_from_fields(fields, 8)};
    }
  }
  frame_count_ = static_cast<int>(scene_poses_.size());
  if (static_cast<int>(detections_.size()) != frame_count_ ||
      static_cast<int>(ground_truth_.size()) != frame_count_) {
    throw ParseError("sequence metadata frame counts disagree in " +
                     dir.string());
  }
}

Frame SequenceReader::frame(int index) const {
  if (index < 1 || index > frame_count_) {
    throw IoError("frame index out of range: " + std::to_string(index));
  }
  Frame f;
  f.index = index;
  f.depth = read_pgm16(dir_ / "frames" / frame_name(index));
  f.detections = detections_[index - 1];
  f.scene_pose = scene_poses_[index - 1].first;
  f.scene_pose_valid = scene_poses_[index - 1].second;
  f.ground_truth = ground_truth_[index - 1];
  return f;
}

std::vector<RigidTransform> SequenceReader::ground_truth_body_poses() const {
  std::vector<RigidTransform> poses;
  poses.reserve(ground_truth_.size());
  for (const auto& gt : ground_truth_) poses.push_back(gt.body_pose);
  return poses;
}

void write_track_results_csv(const fs::path& path,
                             const std::vector<TrackResult>& results) {
  std::ofstream out = open_out(path);
  out << "frame,status,tx,ty,tz,qx,qy,qz,qw,rot_err_deg,trans_err_mm,"
         "marker_us,cloud_us,visibility_us,crop_us,icp_us,total_us\n";
  char buf[64];
  for (const auto& r : results) {
    out << r.frame_index << "," << to_string(r.status) << ",";
    const auto world = world_patient_pose(r);
    if (world) {
      out << csv_pose(*world);
    } else {
      out << ",,,,,,";
    }
    out << ",";
    if (r.rotational_error_deg) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.rotational_error_deg);
      out << buf;
    }
    out << ",";
    if (r.translational_error_mm) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.translational_error_mm);
      out << buf;
    }
    out << "," << r.timings.marker_us << "," << r.timings.cloud_us << ","
        << r.timings.visibility_us << "," << r.timings.crop_us << ","
        << r.timings.icp_us << "," << r.timings.total_us << "\n";
  }
}

std::vector<TrackRow> read_track_results_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("empty results CSV: " + path.string());
  }
  std::vector<TrackRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 17) {
      throw ParseError("results CSV row with wrong field count in " +
                       path.string());
    }
    TrackRow row;
    row.frame_index = std::stoi(fields[0]);
    row.status = track_status_from_string(fields[1]);
    if (!fields[2].empty()) {
      row.world_pose = pose_from_fields(fields, 2);
    }
    if (!fields[9].empty()) row.rot_err_deg = std::stod(fields[9]);
    if (!fields[10].empty()) row.trans_err_mm = std::stod(fields[10]);
    row.timings.marker_us = std::stoll(fields[11]);
    row.timings.cloud_us = std::stoll(fields[12]);
    row.timings.visibility_us = std::stoll(fields[13]);
    row.timings.crop_us = std::stoll(fields[14]);
    row.timings.icp_us = std::stoll(fields[15]);
    row.timings.total_us = std::stoll(fields[16]);
    rows.push_back(row);
  }
  return rows;
}

std::vector<RigidTransform> read_ground_truth_body_poses(
    const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<RigidTransform> poses;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    const int index = std::stoi(fields.at(0));
    if (static_cast<int>(poses.size()) < index) poses.resize(index);
    poses[index - 1] = pose_from_fields(fields, 1);
  }
  return poses;
}

}  // namespace bodytrack
