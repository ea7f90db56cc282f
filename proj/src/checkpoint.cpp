#include "rcalad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rcalad/error.hpp"
#include "rcalad/rng.hpp"

namespace rcalad {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'R', 'C', 'A', 'L'};

class Writer {
public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    bytes_.append(b, sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void put_tensor(const std::string& name, const Tensor& t) {
    put_string(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(d);
    for (Real v : t.values()) put<double>(static_cast<double>(v));
  }
  std::string& bytes() { return bytes_; }

private:
  std::string bytes_;
};

class Reader {
public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::checkpoint_corrupt, source_ + ": truncated");
  }
  std::size_t pos() const { return pos_; }

private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct Parsed {
  CheckpointInfo info;
  std::map<std::string, Tensor> blocks;
};

// Every tensor a trainer checkpoint carries, in a stable order.
void visit_trainer(const Trainer& tr, const ConstStateVisitor& visit) {
  tr.bundle().visit_state(visit);
  const auto opt = [&](const char* prefix, const OptimizerState& s) {
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      visit(std::string(prefix) + "/m/" + std::to_string(i), s.m[i]);
      visit(std::string(prefix) + "/v/" + std::to_string(i), s.v[i]);
    }
    visit(std::string(prefix) + "/t", Tensor::scalar(static_cast<Real>(s.t)));
  };
  opt("adam_d", tr.d_optimizer());
  opt("adam_g", tr.g_optimizer());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Parsed parse(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string src = path.string();
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0,
          ErrorCode::checkpoint_corrupt, src + ": not a checkpoint (bad magic)");
  Reader r(bytes, src);
  r.need(4);
  r.get<std::uint32_t>();  // magic
  Parsed p;
  p.info.version = r.get<std::uint32_t>();
  require(p.info.version == kCheckpointVersion, ErrorCode::checkpoint_version,
          src + ": format version " + std::to_string(p.info.version) + ", this build reads " +
              std::to_string(kCheckpointVersion));
  require(bytes.size() >= 8 + 8, ErrorCode::checkpoint_corrupt, src + ": truncated");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  require(fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8)) == stored,
          ErrorCode::checkpoint_corrupt, src + ": checksum mismatch");
  Reader body(std::string_view(bytes).substr(0, bytes.size() - 8), src);
  body.get<std::uint32_t>();
  body.get<std::uint32_t>();
  p.info.config_hash = body.get<std::uint64_t>();
  p.info.seed = body.get<std::uint64_t>();
  p.info.global_step = body.get<std::uint64_t>();
  p.info.epoch = body.get<std::uint64_t>();
  const auto count = body.get<std::uint64_t>();
  for (std::uint64_t b = 0; b < count; ++b) {
    std::string name = body.get_string();
    const auto rank = body.get<std::uint32_t>();
    require(rank <= 8, ErrorCode::checkpoint_corrupt, src + ": implausible rank in " + name);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = body.get<std::uint64_t>();
      n *= d;
    }
    body.need(n * sizeof(double));
    std::vector<Real> values(n);
    for (auto& v : values) v = static_cast<Real>(body.get<double>());
    p.info.blocks.push_back(name);
    require(p.blocks.emplace(name, Tensor(shape, std::move(values))).second,
            ErrorCode::checkpoint_corrupt, src + ": duplicate block " + name);
  }
  return p;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer,
                     std::uint64_t config_hash) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(config_hash);
  w.put<std::uint64_t>(trainer.config().seed);
  w.put<std::uint64_t>(trainer.global_step());
  w.put<std::uint64_t>(trainer.epoch());
  const std::size_t count_at = w.bytes().size();
  w.put<std::uint64_t>(0);
  std::uint64_t count = 0;
  nlohmann::json blocks = nlohmann::json::array();
  visit_trainer(trainer, [&](const std::string& name, const Tensor& t) {
    w.put_tensor(name, t);
    ++count;
    blocks.push_back({{"name", name}, {"shape", t.shape()}});
  });
  std::memcpy(w.bytes().data() + count_at, &count, 8);
  w.put<std::uint64_t>(fnv1a64(w.bytes()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io, "cannot write checkpoint " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    require(out.good(), ErrorCode::io, "failed writing checkpoint " + path.string());
  }
  nlohmann::json side = {{"format", "RCAL"},
                         {"version", kCheckpointVersion},
                         {"config_hash", config_hash},
                         {"seed", trainer.config().seed},
                         {"global_step", trainer.global_step()},
                         {"epoch", trainer.epoch()},
                         {"blocks", blocks}};
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  require(js.good(), ErrorCode::io, "cannot write " + path.string() + ".json");
  js << side.dump(2) << '\n';
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) { return parse(path).info; }

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Trainer& trainer,
                               std::uint64_t expected_config_hash) {
  Parsed p = parse(path);
  require(p.info.config_hash == expected_config_hash, ErrorCode::checkpoint_version,
          path.string() + ": written for a different config (hash mismatch)");
  // check everything first so a bad file leaves the trainer untouched
  std::size_t expected = 0;
  visit_trainer(trainer, [&](const std::string& name, const Tensor& t) {
    const auto it = p.blocks.find(name);
    require(it != p.blocks.end(), ErrorCode::checkpoint_corrupt,
            path.string() + ": missing block " + name);
    require(it->second.shape() == t.shape(), ErrorCode::checkpoint_corrupt,
            path.string() + ": block " + name + " has shape " + to_string(it->second.shape()) +
                ", expected " + to_string(t.shape()));
    ++expected;
  });
  require(expected == p.blocks.size(), ErrorCode::checkpoint_corrupt,
          path.string() + ": unexpected extra blocks");

  trainer.bundle().visit_state(
      [&](const std::string& name, Tensor& t) { t = p.blocks.at(name); });
  const auto opt = [&](const char* prefix, OptimizerState& s) {
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      s.m[i] = p.blocks.at(std::string(prefix) + "/m/" + std::to_string(i));
      s.v[i] = p.blocks.at(std::string(prefix) + "/v/" + std::to_string(i));
    }
    s.t = static_cast<std::uint64_t>(p.blocks.at(std::string(prefix) + "/t").values()[0]);
  };
  opt("adam_d", trainer.d_optimizer());
  opt("adam_g", trainer.g_optimizer());
  trainer.set_progress(p.info.global_step, p.info.epoch);
  return p.info;
}

} // namespace rcalad
