#pragma once

#include <string>
#include <vector>

namespace prosody::ssml {

struct Rate {
  int percent = 100;
  bool clamped = false;  // hit the engine-safe [20, 400] range
};

// SSML rate is a speed multiplier while r is a duration ratio, so
// rate = round(100 / (1 + r)), clamped to [20, 400]. r = 0 maps to 100
// and the paper's r = 1.0 example maps to 50.
Rate relative_to_rate(double r);

// One <prosody rate="P%"> element per word inside <speak><voice>.
// Deterministic bytes; text and attribute values are entity-escaped.
std::string emit_ssml(const std::vector<std::string>& tokens,
                      const std::vector<int>& rate_percents,
                      const std::string& voice);

std::string escape_text(const std::string& s);
std::string escape_attribute(const std::string& s);

}  // namespace prosody::ssml
