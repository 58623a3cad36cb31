#include "prosody/ssml.hpp"

#include <algorithm>
#include <cmath>

#include "prosody/error.hpp"

namespace prosody::ssml {

Rate relative_to_rate(double r) {
  if (!(r > -1.0)) {
    fail("ssml: relative length ", r, " implies a non-positive duration");
  }
  const double exact = 100.0 / (1.0 + r);
  Rate rate;
  rate.percent = static_cast<int>(std::llround(exact));
  if (rate.percent < 20) {
    rate.percent = 20;
    rate.clamped = true;
  } else if (rate.percent > 400) {
    rate.percent = 400;
    rate.clamped = true;
  }
  return rate;
}

std::string escape_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_attribute(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string emit_ssml(const std::vector<std::string>& tokens,
                      const std::vector<int>& rate_percents,
                      const std::string& voice) {
  if (tokens.size() != rate_percents.size()) {
    fail("ssml: ", tokens.size(), " tokens but ", rate_percents.size(), " rates");
  }
  std::string out;
  out += "<speak version=\"1.0\" xml:lang=\"en-US\">\n";
  out += "  <voice name=\"" + escape_attribute(voice) + "\">\n";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (rate_percents[i] < 1) {
      fail("ssml: rate percent ", rate_percents[i], " below 1 at word ", i);
    }
    out += "    <prosody rate=\"" + std::to_string(rate_percents[i]) + "%\">" +
           escape_text(tokens[i]) + "</prosody>\n";
  }
  out += "  </voice>\n";
  out += "</speak>\n";
  return out;
}

}  // namespace prosody::ssml
