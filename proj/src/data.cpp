#include "spikemix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikemix/rng.hpp"

namespace fs = std::filesystem;

namespace spikemix {

void Dataset::validate(int num_classes) const {
  if (count() != static_cast<int64_t>(labels.size()))
    throw ConfigError("dataset: image count " + std::to_string(count()) + " != label count " +
                      std::to_string(labels.size()));
  for (int l : labels)
    if (l < 0 || l >= num_classes)
      throw ConfigError("dataset: label " + std::to_string(l) + " out of range [0," + std::to_string(num_classes) +
                        ")");
  for (int64_t i = 0; i < images.size(); ++i)
    if (images[i] < 0.0 || images[i] > 1.0)
      throw ConfigError("dataset: pixel value outside [0,1]");
}

Tensor Dataset::sample(int64_t i) const {
  const int64_t per = images.size() / images.dim(0);
  Tensor out({images.dim(1), images.dim(2), images.dim(3)});
  std::memcpy(out.data(), images.data() + i * per, static_cast<size_t>(per) * sizeof(double));
  return out;
}

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

uint32_t be32(const std::vector<unsigned char>& b, size_t off) {
  return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

}  // namespace

Tensor parse_idx_images(const std::string& path) {
  auto bytes = read_bytes(path);
  if (bytes.size() < 16) throw IoError("idx: truncated header in " + path);
  const uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000803u)
    throw IoError("idx: bad image magic 0x" + [&] {
      std::ostringstream os;
      os << std::hex << magic;
      return os.str();
    }() + " in " + path);
  const int64_t n = be32(bytes, 4);
  const int64_t h = be32(bytes, 8);
  const int64_t w = be32(bytes, 12);
  const size_t need = 16 + static_cast<size_t>(n * h * w);
  if (bytes.size() < need) throw IoError("idx: truncated image data in " + path);
  Tensor out({n, 1, h, w});
  for (int64_t i = 0; i < n * h * w; ++i) out[i] = bytes[16 + static_cast<size_t>(i)] / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(const std::string& path, int num_classes) {
  auto bytes = read_bytes(path);
  if (bytes.size() < 8) throw IoError("idx: truncated header in " + path);
  const uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000801u) throw IoError("idx: bad label magic in " + path);
  const int64_t n = be32(bytes, 4);
  if (bytes.size() < 8 + static_cast<size_t>(n)) throw IoError("idx: truncated label data in " + path);
  std::vector<int> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int l = bytes[8 + static_cast<size_t>(i)];
    if (l >= num_classes) throw ConfigError("idx: label " + std::to_string(l) + " out of range in " + path);
    labels[static_cast<size_t>(i)] = l;
  }
  return labels;
}

Dataset load_cifar_binary(const std::string& path) {
  auto bytes = read_bytes(path);
  constexpr size_t kRecord = 3073;  // 1 label byte + 3x32x32 pixels
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw IoError("cifar: file size " + std::to_string(bytes.size()) + " is not a multiple of 3073 in " + path);
  const int64_t n = static_cast<int64_t>(bytes.size() / kRecord);
  Dataset ds;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + static_cast<size_t>(i) * kRecord;
    const int label = rec[0];
    if (label >= 10) throw ConfigError("cifar: label " + std::to_string(label) + " out of range in " + path);
    ds.labels[static_cast<size_t>(i)] = label;
    for (int64_t j = 0; j < 3072; ++j) ds.images[i * 3072 + j] = rec[1 + j] / 255.0;
  }
  ds.split = fs::path(path).filename().string();
  return ds;
}

Dataset make_synthetic(const SyntheticSpec& spec, int64_t n, uint64_t seed, const std::string& split) {
  if (spec.classes < 2) throw ConfigError("synthetic: classes must be >= 2");
  if (spec.hw < 4) throw ConfigError("synthetic: hw must be >= 4");
  if (n < 1) throw ConfigError("synthetic: sample count must be >= 1");

  // class prototypes: a few signed Gaussian bumps at class-specific spots
  const int C = 3, H = spec.hw, W = spec.hw, bumps = 3;
  Rng proto_rng(spec.seed * 0x9e3779b97f4a7c15ULL + 17);
  std::vector<Tensor> prototypes;
  for (int k = 0; k < spec.classes; ++k) {
    Tensor p({C, H, W});
    for (int b = 0; b < bumps; ++b) {
      const double cy = proto_rng.uniform(0.2 * H, 0.8 * H);
      const double cx = proto_rng.uniform(0.2 * W, 0.8 * W);
      const double amp = proto_rng.coin() ? 1.0 : -1.0;
      const double sigma = proto_rng.uniform(0.08 * H, 0.18 * H);
      const int ch = static_cast<int>(proto_rng.below(C));
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          p.at({ch, y, x}) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    prototypes.push_back(std::move(p));
  }

  Dataset ds;
  ds.images = Tensor({n, C, H, W});
  ds.labels.resize(static_cast<size_t>(n));
  ds.split = split;
  Rng rng(seed);
  std::vector<int> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i % spec.classes);
  for (int64_t i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.below(i + 1))]);

  const int64_t per = static_cast<int64_t>(C) * H * W;
  for (int64_t i = 0; i < n; ++i) {
    const int k = order[static_cast<size_t>(i)];
    ds.labels[static_cast<size_t>(i)] = k;
    const Tensor& p = prototypes[static_cast<size_t>(k)];
    for (int64_t j = 0; j < per; ++j) {
      double v = 0.5 + 0.15 * spec.sep * p[j] + spec.noise * rng.normal();
      ds.images[i * per + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ds;
}

SyntheticSpec parse_synthetic_spec(const std::string& args) {
  SyntheticSpec spec;
  if (args.empty()) return spec;
  std::stringstream ss(args);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec: expected k=v, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    try {
      if (key == "classes") spec.classes = std::stoi(val);
      else if (key == "n_train") spec.n_train = std::stoll(val);
      else if (key == "n_eval") spec.n_eval = std::stoll(val);
      else if (key == "hw") spec.hw = std::stoi(val);
      else if (key == "sep") spec.sep = std::stod(val);
      else if (key == "noise") spec.noise = std::stod(val);
      else if (key == "seed") spec.seed = std::stoull(val);
      else throw ConfigError("synthetic spec: unknown key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("synthetic spec: bad value for '" + key + "': " + val);
    }
  }
  return spec;
}

namespace {

Tensor grey_to_rgb(const Tensor& mono) {
  const int64_t n = mono.dim(0), h = mono.dim(2), w = mono.dim(3);
  Tensor out({n, 3, h, w});
  const int64_t plane = h * w;
  for (int64_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      std::memcpy(out.data() + (i * 3 + c) * plane, mono.data() + i * plane,
                  static_cast<size_t>(plane) * sizeof(double));
  return out;
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path, const std::string& split) {
  Dataset ds;
  Tensor mono = parse_idx_images(images_path);
  ds.images = grey_to_rgb(mono);
  ds.labels = parse_idx_labels(labels_path);
  ds.split = split;
  if (ds.count() != static_cast<int64_t>(ds.labels.size()))
    throw IoError("idx: image/label count mismatch between " + images_path + " and " + labels_path);
  return ds;
}

Dataset concat_datasets(std::vector<Dataset> parts) {
  if (parts.size() == 1) return std::move(parts[0]);
  int64_t n = 0;
  for (const auto& p : parts) n += p.count();
  Dataset out;
  Shape s = parts[0].images.shape();
  s[0] = n;
  out.images = Tensor(s);
  out.split = parts[0].split;
  int64_t row = 0;
  const int64_t per = parts[0].images.size() / parts[0].images.dim(0);
  for (auto& p : parts) {
    std::memcpy(out.images.data() + row * per, p.images.data(),
                static_cast<size_t>(p.images.size()) * sizeof(double));
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    row += p.count();
  }
  return out;
}

}  // namespace

DatasetPair load_source(const std::string& source) {
  const size_t colon = source.find(':');
  if (colon == std::string::npos)
    throw ConfigError("dataset source must be '<kind>:<args>', got '" + source + "'");
  const std::string kind = source.substr(0, colon);
  const std::string args = source.substr(colon + 1);
  DatasetPair pair;

  if (kind == "synthetic") {
    SyntheticSpec spec = parse_synthetic_spec(args);
    pair.train = make_synthetic(spec, spec.n_train, spec.seed, "train");
    pair.eval = make_synthetic(spec, spec.n_eval, spec.seed + 1, "eval");
    return pair;
  }
  if (kind == "cifar10") {
    fs::path dir(args);
    if (fs::is_regular_file(dir)) {
      pair.train = load_cifar_binary(args);
      pair.eval = pair.train;
      return pair;
    }
    if (!fs::is_directory(dir)) throw IoError("cifar10: no such file or directory: " + args);
    std::vector<Dataset> train_parts;
    for (int i = 1; i <= 5; ++i) {
      fs::path p = dir / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(p)) train_parts.push_back(load_cifar_binary(p.string()));
    }
    if (train_parts.empty()) throw IoError("cifar10: no data_batch_*.bin under " + args);
    pair.train = concat_datasets(std::move(train_parts));
    pair.train.split = "train";
    fs::path test = dir / "test_batch.bin";
    pair.eval = fs::exists(test) ? load_cifar_binary(test.string()) : pair.train;
    pair.eval.split = "eval";
    return pair;
  }
  if (kind == "idx") {
    fs::path dir(args);
    if (!fs::is_directory(dir)) throw IoError("idx: no such directory: " + args);
    auto pick = [&](std::initializer_list<const char*> cands) -> std::string {
      for (const char* c : cands)
        if (fs::exists(dir / c)) return (dir / c).string();
      return "";
    };
    std::string ti = pick({"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
    std::string tl = pick({"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
    if (ti.empty() || tl.empty()) throw IoError("idx: train image/label files not found under " + args);
    pair.train = load_idx_pair(ti, tl, "train");
    std::string ei = pick({"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"});
    std::string el = pick({"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"});
    pair.eval = (!ei.empty() && !el.empty()) ? load_idx_pair(ei, el, "eval") : pair.train;
    return pair;
  }
  throw ConfigError("dataset source kind '" + kind + "' is not one of synthetic|cifar10|idx");
}

}  // namespace spikemix
