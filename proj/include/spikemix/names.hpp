#pragma once

#include <string>

// Canonical names for layers, LIF sites, and parameters. The trainer, the
// inference interpreter, and the cost model all refer to the same graph
// locations, so the strings are built in exactly one place.
namespace spikemix::names {

inline std::string stage(int s) { return "stage" + std::to_string(s + 1); }  // printed 1-based
inline std::string mixer(int s, int m) { return stage(s) + ".mixer" + std::to_string(m); }
inline std::string token(int s, int m) { return mixer(s, m) + ".token"; }
inline std::string channel(int s, int m) { return mixer(s, m) + ".channel"; }
inline std::string spe(int s) { return stage(s) + ".spe"; }

// weighted layers
inline std::string patch_conv() { return "patch.conv"; }
inline std::string patch_bn() { return "patch.bn"; }
inline std::string token_wh(int s, int m) { return token(s, m) + ".w_h"; }
inline std::string token_ww(int s, int m) { return token(s, m) + ".w_w"; }
inline std::string token_wf(int s, int m) { return token(s, m) + ".w_f"; }
inline std::string channel_w1(int s, int m) { return channel(s, m) + ".w_c1"; }
inline std::string channel_w2(int s, int m) { return channel(s, m) + ".w_c2"; }
inline std::string spe_in(int s, int node) { return spe(s) + ".in" + std::to_string(node); }
inline std::string spe_edge12(int s) { return spe(s) + ".edge12"; }
inline std::string spe_edge23(int s) { return spe(s) + ".edge23"; }
inline std::string head_whw() { return "head.w_hw"; }
inline std::string head_classifier() { return "head.classifier"; }

// LIF sites
inline std::string token_entry(int s, int m) { return token(s, m) + ".entry"; }
inline std::string token_spike_h(int s, int m) { return token(s, m) + ".spike_h"; }
inline std::string token_spike_w(int s, int m) { return token(s, m) + ".spike_w"; }
inline std::string channel_entry(int s, int m) { return channel(s, m) + ".entry"; }
inline std::string channel_hidden(int s, int m) { return channel(s, m) + ".hidden"; }
inline std::string spe_entry(int s) { return spe(s) + ".entry"; }
inline std::string spe_node(int s, int node) { return spe(s) + ".node" + std::to_string(node); }
inline std::string head_entry() { return "head.entry"; }
inline std::string head_hidden() { return "head.hidden"; }

}  // namespace spikemix::names
