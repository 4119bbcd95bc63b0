#pragma once

#include <string>

#include "spikemix/network.hpp"

namespace spikemix {

// Whole-run description: architecture + optimizer + schedule + data + output.
// Serialized as strict key = value text; unknown keys are rejected and the
// serialization is canonical (fixed key order, fixed float formatting), so
// parse -> serialize -> parse is a fixed point.
struct RunConfig {
  NetworkConfig net;

  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 10;
  int batch_size = 32;
  bool augment = true;
  int augment_pad = 4;

  // dataset source, e.g.
  //   synthetic:classes=2,n_train=512,n_eval=128,hw=16,sep=2.0,noise=0.1,seed=11
  //   cifar10:/path/to/dir
  //   idx:/path/to/dir
  std::string dataset = "synthetic:classes=2,n_train=512,n_eval=128,hw=32,sep=2.0,noise=0.1,seed=11";
  std::string out_dir = "run";

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);
  std::string serialize() const;
};

std::string fmt_double(double v);  // %.17g, round-trips exactly

}  // namespace spikemix
