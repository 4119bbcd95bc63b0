#include "spikemix/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace spikemix {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a real number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma-separated integer list");
  return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value': " + s);
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (seen.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    seen[key] = true;

    if (key == "c1") cfg.net.c1 = parse_int(key, val);
    else if (key == "stage_layers") cfg.net.stage_layers = parse_int_list(key, val);
    else if (key == "alpha") cfg.net.alpha = parse_int(key, val);
    else if (key == "patch_size") cfg.net.patch_size = parse_int(key, val);
    else if (key == "img_h") cfg.net.img_h = parse_int(key, val);
    else if (key == "img_w") cfg.net.img_w = parse_int(key, val);
    else if (key == "num_classes") cfg.net.num_classes = parse_int(key, val);
    else if (key == "t_steps") cfg.net.t_steps = parse_int(key, val);
    else if (key == "tau") cfg.net.tau = parse_real(key, val);
    else if (key == "v_th") cfg.net.v_th = parse_real(key, val);
    else if (key == "surrogate_slope") cfg.net.surrogate_slope = parse_real(key, val);
    else if (key == "skip_pt") cfg.net.skips.pt = parse_bool(key, val);
    else if (key == "skip_pc") cfg.net.skips.pc = parse_bool(key, val);
    else if (key == "skip_tc") cfg.net.skips.tc = parse_bool(key, val);
    else if (key == "skip_ct") cfg.net.skips.ct = parse_bool(key, val);
    else if (key == "seed") cfg.net.seed = parse_u64(key, val);
    else if (key == "lr0") cfg.lr0 = parse_real(key, val);
    else if (key == "momentum") cfg.momentum = parse_real(key, val);
    else if (key == "weight_decay") cfg.weight_decay = parse_real(key, val);
    else if (key == "epochs") cfg.epochs = parse_int(key, val);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, val);
    else if (key == "augment") cfg.augment = parse_bool(key, val);
    else if (key == "augment_pad") cfg.augment_pad = parse_int(key, val);
    else if (key == "dataset") cfg.dataset = val;
    else if (key == "out_dir") cfg.out_dir = val;
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  if (cfg.epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.augment_pad < 0) throw ConfigError("config: augment_pad must be >= 0");
  if (!(cfg.lr0 >= 0)) throw ConfigError("config: lr0 must be >= 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ConfigError("config: momentum must be in [0,1)");
  validate(cfg.net);
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "c1 = " << net.c1 << "\n";
  os << "stage_layers = ";
  for (size_t i = 0; i < net.stage_layers.size(); ++i) {
    if (i) os << ",";
    os << net.stage_layers[i];
  }
  os << "\n";
  os << "alpha = " << net.alpha << "\n";
  os << "patch_size = " << net.patch_size << "\n";
  os << "img_h = " << net.img_h << "\n";
  os << "img_w = " << net.img_w << "\n";
  os << "num_classes = " << net.num_classes << "\n";
  os << "t_steps = " << net.t_steps << "\n";
  os << "tau = " << fmt_double(net.tau) << "\n";
  os << "v_th = " << fmt_double(net.v_th) << "\n";
  os << "surrogate_slope = " << fmt_double(net.surrogate_slope) << "\n";
  os << "skip_pt = " << (net.skips.pt ? "true" : "false") << "\n";
  os << "skip_pc = " << (net.skips.pc ? "true" : "false") << "\n";
  os << "skip_tc = " << (net.skips.tc ? "true" : "false") << "\n";
  os << "skip_ct = " << (net.skips.ct ? "true" : "false") << "\n";
  os << "seed = " << net.seed << "\n";
  os << "lr0 = " << fmt_double(lr0) << "\n";
  os << "momentum = " << fmt_double(momentum) << "\n";
  os << "weight_decay = " << fmt_double(weight_decay) << "\n";
  os << "epochs = " << epochs << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "augment = " << (augment ? "true" : "false") << "\n";
  os << "augment_pad = " << augment_pad << "\n";
  os << "dataset = " << dataset << "\n";
  os << "out_dir = " << out_dir << "\n";
  return os.str();
}

}  // namespace spikemix
