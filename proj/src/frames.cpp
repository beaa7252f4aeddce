#include "grainsim/frames.hpp"

#include <fstream>
#include <sstream>

#include "grainsim/errors.hpp"

namespace grainsim {

struct FrameWriter::Impl {
  std::ofstream out;
  int npart = 0;
  bool text = false;
};

FrameWriter::FrameWriter(const std::string& path, int npart, double dt_control,
                         bool text)
    : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);
  if (!impl_->out) throw ValidationError("cannot open frame dump '" + path + "'");
  impl_->npart = npart;
  impl_->text = text;
  char head[256];
  std::snprintf(head, sizeof(head), "GSIMFRAMES 1\nnpart %d\ndt %.17g\nformat %s\nend\n",
                npart, dt_control, text ? "text" : "f32");
  impl_->out << head;
}

FrameWriter::~FrameWriter() {
  close();
  delete impl_;
}

void FrameWriter::close() {
  if (impl_->out.is_open()) impl_->out.close();
}

void FrameWriter::write(const Vec3& tool_pos, const Quat& q,
                        const std::vector<Vec3>& x) {
  if (static_cast<int>(x.size()) != impl_->npart)
    throw ValidationError("frame dump: particle count changed mid-rollout");
  if (impl_->text) {
    char line[256];
    std::snprintf(line, sizeof(line), "pose %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  tool_pos.x(), tool_pos.y(), tool_pos.z(), q.w, q.x, q.y, q.z);
    impl_->out << line;
    for (const Vec3& p : x) {
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
      impl_->out << line;
    }
    return;
  }
  double pose[7] = {tool_pos.x(), tool_pos.y(), tool_pos.z(), q.w, q.x, q.y, q.z};
  impl_->out.write(reinterpret_cast<const char*>(pose), sizeof(pose));
  std::vector<float> buf(x.size() * 3);
  for (size_t i = 0; i < x.size(); ++i) {
    buf[3 * i] = static_cast<float>(x[i].x());
    buf[3 * i + 1] = static_cast<float>(x[i].y());
    buf[3 * i + 2] = static_cast<float>(x[i].z());
  }
  impl_->out.write(reinterpret_cast<const char*>(buf.data()),
                   std::streamsize(buf.size() * sizeof(float)));
}

FrameDump read_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open frame dump '" + path + "'");
  std::string magic, version;
  in >> magic >> version;
  if (magic != "GSIMFRAMES")
    throw ValidationError("'" + path + "' is not a frame dump");
  FrameDump dump;
  std::string key, fmt = "f32";
  while (in >> key && key != "end") {
    if (key == "npart")
      in >> dump.npart;
    else if (key == "dt")
      in >> dump.dt_control;
    else if (key == "format")
      in >> fmt;
    else {
      std::string skip;
      in >> skip;
    }
  }
  in.get();  // newline after "end"
  const bool text = fmt == "text";
  while (true) {
    Frame f;
    if (text) {
      std::string tag;
      if (!(in >> tag)) break;
      if (tag != "pose") throw ValidationError("frame dump: expected pose record");
      in >> f.tool_pos.x() >> f.tool_pos.y() >> f.tool_pos.z() >> f.tool_q.w >>
          f.tool_q.x >> f.tool_q.y >> f.tool_q.z;
      f.x.resize(dump.npart);
      for (int i = 0; i < dump.npart; ++i)
        in >> f.x[i].x() >> f.x[i].y() >> f.x[i].z();
      if (!in) throw ValidationError("frame dump: truncated text frame");
    } else {
      double pose[7];
      in.read(reinterpret_cast<char*>(pose), sizeof(pose));
      if (in.gcount() == 0) break;
      if (in.gcount() != sizeof(pose))
        throw ValidationError("frame dump: truncated pose record");
      f.tool_pos = Vec3(pose[0], pose[1], pose[2]);
      f.tool_q = Quat(pose[3], pose[4], pose[5], pose[6]);
      std::vector<float> buf(size_t(dump.npart) * 3);
      in.read(reinterpret_cast<char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
      if (in.gcount() != std::streamsize(buf.size() * sizeof(float)))
        throw ValidationError("frame dump: truncated frame");
      f.x.resize(dump.npart);
      for (int i = 0; i < dump.npart; ++i)
        f.x[i] = Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
    }
    dump.frames.push_back(std::move(f));
  }
  return dump;
}

}  // namespace grainsim
