#include "streamsfm/dataset.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "streamsfm/wire.hpp"

namespace streamsfm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void WritePoseLine(std::ostream& out, const FrameTruth& frame) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer),
                "%llu %u %llu %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                static_cast<unsigned long long>(frame.image_id), frame.agent_id,
                static_cast<unsigned long long>(frame.frame_id), frame.timestamp,
                frame.pose.rotation.w(), frame.pose.rotation.x(), frame.pose.rotation.y(),
                frame.pose.rotation.z(), frame.pose.translation.x(),
                frame.pose.translation.y(), frame.pose.translation.z());
  out << buffer;
}

}  // namespace

void SaveDataset(const SyntheticScene& scene, const std::vector<FramePacket>& packets,
                 const std::string& dir, const std::string& name) {
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = "streamsfm-dataset";
  manifest["version"] = 1;
  manifest["name"] = name;
  manifest["seed"] = scene.spec.seed;
  manifest["descriptor_dim"] = scene.spec.descriptor_dim;
  manifest["frame_count"] = packets.size();
  manifest["sigma_px"] = scene.spec.sigma_px;
  manifest["outlier_fraction"] = scene.spec.outlier_fraction;
  manifest["diameter"] = scene.spec.diameter;
  std::vector<uint32_t> agents;
  for (const AgentArc& arc : scene.spec.agents) agents.push_back(arc.agent_id);
  manifest["agent_ids"] = agents;
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest: " + dir);
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "packets.bin", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write packets: " + dir);
    for (const FramePacket& packet : packets) {
      const std::vector<uint8_t> bytes = EncodeFrame(packet);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
  }
  {
    std::ofstream out(fs::path(dir) / "groundtruth.txt");
    if (!out) throw std::runtime_error("cannot write ground truth: " + dir);
    out << "# GT_POSES " << scene.frames.size() << "\n";
    for (const FrameTruth& frame : scene.frames) WritePoseLine(out, frame);
    out << "# GT_POINTS " << scene.points.size() << "\n";
    char buffer[256];
    for (size_t i = 0; i < scene.points.size(); ++i) {
      std::snprintf(buffer, sizeof(buffer), "%zu %.17g %.17g %.17g\n", i, scene.points[i].x(),
                    scene.points[i].y(), scene.points[i].z());
      out << buffer;
    }
    out << "# GT_VISIBILITY " << scene.frames.size() << "\n";
    for (const FrameTruth& frame : scene.frames) {
      out << frame.image_id << " " << frame.visible_points.size();
      for (uint64_t id : frame.visible_points) out << " " << id;
      out << "\n";
    }
  }
}

DatasetManifest LoadManifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::runtime_error("cannot read manifest in " + dir);
  json parsed = json::parse(in);
  if (parsed.value("format", "") != "streamsfm-dataset") {
    throw std::runtime_error("not a dataset directory: " + dir);
  }
  DatasetManifest manifest;
  manifest.name = parsed.value("name", "");
  manifest.seed = parsed.value("seed", 0ULL);
  manifest.descriptor_dim = parsed.value("descriptor_dim", 256);
  manifest.frame_count = parsed.value("frame_count", 0ULL);
  manifest.sigma_px = parsed.value("sigma_px", 0.0);
  manifest.outlier_fraction = parsed.value("outlier_fraction", 0.0);
  manifest.diameter = parsed.value("diameter", 0.0);
  for (const auto& id : parsed.value("agent_ids", std::vector<uint32_t>{})) {
    manifest.agent_ids.push_back(id);
  }
  return manifest;
}

std::vector<FramePacket> LoadPackets(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "packets.bin", std::ios::binary);
  if (!in) throw std::runtime_error("cannot read packets in " + dir);
  std::vector<FramePacket> packets;
  size_t index = 0;
  while (true) {
    std::optional<WireMessage> message;
    try {
      message = ReadMessage(in);
    } catch (const std::exception& e) {
      throw std::runtime_error("corrupt packet record " + std::to_string(index) + ": " +
                               e.what());
    }
    if (!message) break;
    if (message->type != WireType::kFrame) {
      throw std::runtime_error("unexpected message type in record " + std::to_string(index));
    }
    try {
      packets.push_back(DecodePacketPayload(message->payload));
    } catch (const std::exception& e) {
      throw std::runtime_error("corrupt packet record " + std::to_string(index) + ": " +
                               e.what());
    }
    ++index;
  }
  return packets;
}

GroundTruth LoadGroundTruth(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "groundtruth.txt");
  if (!in) throw std::runtime_error("cannot read ground truth in " + dir);
  GroundTruth gt;
  std::string line;
  enum class Section { kNone, kPoses, kPoints, kVisibility } section = Section::kNone;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line);
      std::string hash, tag;
      header >> hash >> tag;
      if (tag == "GT_POSES") section = Section::kPoses;
      else if (tag == "GT_POINTS") section = Section::kPoints;
      else if (tag == "GT_VISIBILITY") section = Section::kVisibility;
      else throw std::runtime_error("unknown ground-truth section: " + tag);
      continue;
    }
    std::istringstream fields(line);
    if (section == Section::kPoses) {
      FrameTruth frame;
      double qw, qx, qy, qz, tx, ty, tz;
      fields >> frame.image_id >> frame.agent_id >> frame.frame_id >> frame.timestamp >> qw >>
          qx >> qy >> qz >> tx >> ty >> tz;
      if (!fields) throw std::runtime_error("bad GT_POSES line: " + line);
      frame.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
      frame.pose.translation = Eigen::Vector3d(tx, ty, tz);
      gt.frames[frame.image_id] = frame;
    } else if (section == Section::kPoints) {
      uint64_t id;
      double x, y, z;
      fields >> id >> x >> y >> z;
      if (!fields) throw std::runtime_error("bad GT_POINTS line: " + line);
      gt.points[id] = Eigen::Vector3d(x, y, z);
    } else if (section == Section::kVisibility) {
      uint64_t image_id;
      size_t count;
      fields >> image_id >> count;
      if (!fields) throw std::runtime_error("bad GT_VISIBILITY line: " + line);
      auto it = gt.frames.find(image_id);
      if (it == gt.frames.end()) throw std::runtime_error("visibility for unknown frame");
      it->second.visible_points.resize(count);
      for (size_t i = 0; i < count; ++i) fields >> it->second.visible_points[i];
      if (!fields) throw std::runtime_error("bad GT_VISIBILITY line: " + line);
    } else {
      throw std::runtime_error("ground-truth data before any section header");
    }
  }
  return gt;
}

size_t ReplayDataset(const std::string& dir, Engine* engine, double cadence_ms,
                     const std::function<void(const FrameEvent&)>& on_frame) {
  const std::vector<FramePacket> packets = LoadPackets(dir);
  size_t processed = 0;
  for (const FramePacket& packet : packets) {
    if (cadence_ms > 0.0 && processed > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cadence_ms));
    }
    const FrameEvent event = engine->ProcessFrame(packet);
    if (on_frame) on_frame(event);
    ++processed;
  }
  return processed;
}

}  // namespace streamsfm
