#pragma once

#include <filesystem>
#include <iosfwd>

#include "qact/graph.hpp"

namespace qact::io {

// Line-oriented network description:
//   input H W
//   flow L BOUND
//   classes N
//   stream spatial|temporal
//   conv IN OUT K S P ACT        (ACT: relu | leaky_relu_0p1 | none)
//   pool K S
//   fc IN OUT
//   fusion linear_concat | fusion weighted_sum ALPHA_S ALPHA_T
// '#' starts a comment; blank lines are ignored. Every failure is a
// ConfigError carrying the offending line number; the returned config has
// passed all structural invariants.
net::NetworkConfig read_config(std::istream& in);
net::NetworkConfig read_config(const std::filesystem::path& path);

} // namespace qact::io
