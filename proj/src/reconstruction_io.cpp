#include "streamsfm/reconstruction_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "streamsfm/packet.hpp"

namespace streamsfm {

ReconstructionExport BuildExport(const SubmapRegistry& registry) {
  ReconstructionExport data;
  std::map<uint32_t, CameraIntrinsics> cameras;
  std::map<uint64_t, ExportImage> images;
  std::map<uint64_t, ExportPoint> points;

  for (const auto& [submap_id, submap] : registry.All()) {
    for (const auto& [image_id, pose] : submap.images) {
      ExportImage image;
      image.image_id = image_id;
      image.agent_id = AgentOfImageId(image_id);
      image.pose = pose;
      image.submap_id = submap_id;
      images[image_id] = image;
      cameras.emplace(image.agent_id, submap.intrinsics.at(image_id));
    }
    for (const auto& [point_id, track] : submap.tracks) {
      ExportPoint point;
      point.point_id = point_id;
      point.xyz = track.xyz;
      for (const auto& [image_id, kp] : track.observations) {
        point.track.emplace_back(image_id, kp);
      }
      points[point_id] = std::move(point);
    }
  }
  for (auto& [agent_id, intrinsics] : cameras) data.cameras.push_back({agent_id, intrinsics});
  for (auto& [image_id, image] : images) data.images.push_back(std::move(image));
  for (auto& [point_id, point] : points) data.points.push_back(std::move(point));
  return data;
}

void WriteExport(const ReconstructionExport& data, std::ostream& out) {
  char buffer[1024];
  out << "# STREAMSFM_EXPORT 1\n";
  out << "# CAMERAS " << data.cameras.size() << "\n";
  for (const ExportCamera& cam : data.cameras) {
    std::snprintf(buffer, sizeof(buffer), "%u %.17g %.17g %.17g %.17g %u %u\n", cam.camera_id,
                  cam.intrinsics.fx, cam.intrinsics.fy, cam.intrinsics.cx, cam.intrinsics.cy,
                  cam.intrinsics.width, cam.intrinsics.height);
    out << buffer;
  }
  out << "# IMAGES " << data.images.size() << "\n";
  for (const ExportImage& image : data.images) {
    std::snprintf(buffer, sizeof(buffer),
                  "%" PRIu64 " %u %.17g %.17g %.17g %.17g %.17g %.17g %.17g %" PRIu64 "\n",
                  image.image_id, image.agent_id, image.pose.rotation.w(),
                  image.pose.rotation.x(), image.pose.rotation.y(), image.pose.rotation.z(),
                  image.pose.translation.x(), image.pose.translation.y(),
                  image.pose.translation.z(), image.submap_id);
    out << buffer;
  }
  out << "# POINTS " << data.points.size() << "\n";
  for (const ExportPoint& point : data.points) {
    std::snprintf(buffer, sizeof(buffer), "%" PRIu64 " %.17g %.17g %.17g %zu", point.point_id,
                  point.xyz.x(), point.xyz.y(), point.xyz.z(), point.track.size());
    out << buffer;
    for (const auto& [image_id, kp] : point.track) {
      out << " " << image_id << ":" << kp;
    }
    out << "\n";
  }
}

void WriteExportFile(const ReconstructionExport& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write export: " + path);
  WriteExport(data, out);
}

ReconstructionExport ReadExport(std::istream& in) {
  ReconstructionExport data;
  std::string line;
  if (!std::getline(in, line) || line != "# STREAMSFM_EXPORT 1") {
    throw std::runtime_error("not a reconstruction export");
  }
  auto read_header = [&](const std::string& tag) -> size_t {
    if (!std::getline(in, line)) throw std::runtime_error("missing section " + tag);
    std::istringstream header(line);
    std::string hash, name;
    size_t count = 0;
    header >> hash >> name >> count;
    if (hash != "#" || name != tag) throw std::runtime_error("expected section " + tag);
    return count;
  };

  const size_t num_cameras = read_header("CAMERAS");
  for (size_t i = 0; i < num_cameras; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated CAMERAS section");
    std::istringstream fields(line);
    ExportCamera cam;
    fields >> cam.camera_id >> cam.intrinsics.fx >> cam.intrinsics.fy >> cam.intrinsics.cx >>
        cam.intrinsics.cy >> cam.intrinsics.width >> cam.intrinsics.height;
    if (!fields) throw std::runtime_error("bad camera line: " + line);
    data.cameras.push_back(cam);
  }

  const size_t num_images = read_header("IMAGES");
  for (size_t i = 0; i < num_images; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated IMAGES section");
    std::istringstream fields(line);
    ExportImage image;
    double qw, qx, qy, qz;
    fields >> image.image_id >> image.agent_id >> qw >> qx >> qy >> qz >>
        image.pose.translation.x() >> image.pose.translation.y() >>
        image.pose.translation.z() >> image.submap_id;
    if (!fields) throw std::runtime_error("bad image line: " + line);
    image.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz);  // already unit in the file
    data.images.push_back(image);
  }

  const size_t num_points = read_header("POINTS");
  for (size_t i = 0; i < num_points; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated POINTS section");
    std::istringstream fields(line);
    ExportPoint point;
    size_t track_len = 0;
    fields >> point.point_id >> point.xyz.x() >> point.xyz.y() >> point.xyz.z() >> track_len;
    if (!fields) throw std::runtime_error("bad point line: " + line);
    for (size_t k = 0; k < track_len; ++k) {
      std::string pair;
      fields >> pair;
      const size_t colon = pair.find(':');
      if (!fields || colon == std::string::npos) {
        throw std::runtime_error("bad track element: " + line);
      }
      point.track.emplace_back(std::stoull(pair.substr(0, colon)),
                               static_cast<uint32_t>(std::stoul(pair.substr(colon + 1))));
    }
    data.points.push_back(std::move(point));
  }
  return data;
}

ReconstructionExport ReadExportFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read export: " + path);
  return ReadExport(in);
}

std::vector<double> ExportResiduals(const ReconstructionExport& data,
                                    const KeypointLookup& keypoints) {
  std::map<uint64_t, const ExportImage*> images;
  for (const ExportImage& image : data.images) images[image.image_id] = &image;
  std::map<uint32_t, const CameraIntrinsics*> cameras;
  for (const ExportCamera& cam : data.cameras) cameras[cam.camera_id] = &cam.intrinsics;

  std::vector<double> residuals;
  for (const ExportPoint& point : data.points) {
    for (const auto& [image_id, kp] : point.track) {
      auto image = images.find(image_id);
      if (image == images.end()) throw std::runtime_error("track references unknown image");
      const auto pixel =
          Project(*cameras.at(image->second->agent_id), image->second->pose, point.xyz);
      residuals.push_back(pixel ? (*pixel - keypoints(image_id, kp)).norm() : -1.0);
    }
  }
  return residuals;
}

}  // namespace streamsfm
