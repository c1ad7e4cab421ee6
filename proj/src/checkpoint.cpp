#include "psi/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "psi/detail/binary.hpp"

namespace psi {

std::string to_string(TrainPhase p) {
  switch (p) {
    case TrainPhase::warmup: return "warmup";
    case TrainPhase::stable: return "stable";
    case TrainPhase::decay: return "decay";
    case TrainPhase::final_: return "final";
  }
  throw InvariantError("unknown train phase");
}

TrainPhase phase_from_string(const std::string& s) {
  if (s == "warmup") return TrainPhase::warmup;
  if (s == "stable") return TrainPhase::stable;
  if (s == "decay") return TrainPhase::decay;
  if (s == "final") return TrainPhase::final_;
  throw IoError("unknown train phase: " + s);
}

namespace {

void write_tensors(std::ostream& os, const std::vector<Tensor>& ts) {
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(ts.size()));
  for (const Tensor& t : ts) {
    detail::write_string(os, t.name);
    detail::write_pod<uint8_t>(os, static_cast<uint8_t>(t.shape.size()));
    for (int d : t.shape) detail::write_pod<uint32_t>(os, static_cast<uint32_t>(d));
    // Eigen default storage is column-major; serialize row-major so the file
    // layout is independent of the matrix library.
    for (Eigen::Index r = 0; r < t.v.rows(); ++r)
      for (Eigen::Index c = 0; c < t.v.cols(); ++c)
        detail::write_pod<float>(os, t.v(r, c));
  }
}

std::vector<Tensor> read_tensors(std::istream& is) {
  uint32_t n = detail::read_pod<uint32_t>(is);
  std::vector<Tensor> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Tensor t;
    t.name = detail::read_string(is);
    uint8_t dims = detail::read_pod<uint8_t>(is);
    if (dims != 2) throw IoError("checkpoint tensors must be rank 2");
    t.shape.resize(dims);
    for (uint8_t d = 0; d < dims; ++d)
      t.shape[d] = static_cast<int>(detail::read_pod<uint32_t>(is));
    t.v.resize(t.shape[0], t.shape[1]);
    for (Eigen::Index r = 0; r < t.v.rows(); ++r)
      for (Eigen::Index c = 0; c < t.v.cols(); ++c)
        t.v(r, c) = detail::read_pod<float>(is);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  auto os = detail::open_out(path);
  detail::write_bytes(os, "PSI0", 4);
  detail::write_pod<uint16_t>(os, 1);  // format version

  nlohmann::json meta{{"model", model},
                      {"schedule", schedule},
                      {"step", step},
                      {"phase", to_string(phase)},
                      {"registry", registry},
                      {"vocab", vocab},
                      {"data_rng_state", data_rng_state},
                      {"camera_fraction", camera_fraction},
                      {"extra", extra}};
  detail::write_string32(os, meta.dump());

  write_tensors(os, params);
  write_tensors(os, adam_m);
  write_tensors(os, adam_v);
  if (!os) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, "PSI0");
  uint16_t version = detail::read_pod<uint16_t>(is);
  if (version != 1) throw IoError("unsupported checkpoint version");

  Checkpoint ck;
  nlohmann::json meta = nlohmann::json::parse(detail::read_string32(is));
  meta.at("model").get_to(ck.model);
  meta.at("schedule").get_to(ck.schedule);
  meta.at("step").get_to(ck.step);
  ck.phase = phase_from_string(meta.at("phase").get<std::string>());
  meta.at("registry").get_to(ck.registry);
  meta.at("vocab").get_to(ck.vocab);
  meta.at("data_rng_state").get_to(ck.data_rng_state);
  meta.at("camera_fraction").get_to(ck.camera_fraction);
  ck.extra = meta.at("extra");

  ck.params = read_tensors(is);
  ck.adam_m = read_tensors(is);
  ck.adam_v = read_tensors(is);
  return ck;
}

void save_loss_csv(const std::filesystem::path& path,
                   const std::vector<TrainLogPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << "step,lr,loss\n";
  for (const TrainLogPoint& p : curve) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", p.step,
                  static_cast<double>(p.lr), static_cast<double>(p.loss));
    os << buf;
  }
  if (!os) throw IoError("loss csv write failed");
}

std::vector<TrainLogPoint> load_loss_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "step,lr,loss")
    throw IoError("loss csv missing header");
  std::vector<TrainLogPoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    TrainLogPoint p;
    std::istringstream ss(line);
    char c1, c2;
    if (!(ss >> p.step >> c1 >> p.lr >> c2 >> p.loss) || c1 != ',' || c2 != ',')
      throw IoError("malformed loss csv line: " + line);
    out.push_back(p);
  }
  return out;
}

}  // namespace psi
