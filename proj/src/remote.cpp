#include "adp/remote.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>

namespace adp {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ClassifierError(ClassifierErrorKind::kNetwork,
                          "endpoint is not an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

const char* to_string(ClassifierErrorKind kind) {
  switch (kind) {
    case ClassifierErrorKind::kNetwork: return "network";
    case ClassifierErrorKind::kTimeout: return "timeout";
    case ClassifierErrorKind::kParse: return "parse";
  }
  return "unknown";
}

HttpResponse HttpTransport::post_json(const std::string& url,
                                      const std::string& body,
                                      std::chrono::milliseconds timeout) {
  const ParsedUrl u = split_url(url);
  httplib::Client cli(u.origin);
  if (!cli.is_valid()) {
    throw ClassifierError(ClassifierErrorKind::kNetwork,
                          "unsupported endpoint: " + url);
  }
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = cli.Post(u.path, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    const bool timed_out =
        err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= timeout);
    throw ClassifierError(
        timed_out ? ClassifierErrorKind::kTimeout : ClassifierErrorKind::kNetwork,
        "POST " + url + " failed: " + httplib::to_string(err));
  }
  return {res->status, res->body};
}

std::optional<std::string> endpoint_from_env() {
  const char* v = std::getenv(kEndpointEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) |
                            (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (rest == 2) v |= std::uint32_t{bytes[i + 1]} << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Frame& frame) {
  if (frame.width < 1 || frame.height < 1 ||
      frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3) {
    throw std::invalid_argument("malformed frame");
  }
  const std::string header = "P6\n" + std::to_string(frame.width) + " " +
                             std::to_string(frame.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), frame.rgb.begin(), frame.rgb.end());
  return out;
}

Frame letterbox(const Frame& frame, int size) {
  if (size < 1 || frame.width < 1 || frame.height < 1) {
    throw std::invalid_argument("letterbox needs positive sizes");
  }
  const double scale =
      std::min(static_cast<double>(size) / frame.width,
               static_cast<double>(size) / frame.height);
  const int w = std::max(1, static_cast<int>(frame.width * scale));
  const int h = std::max(1, static_cast<int>(frame.height * scale));
  const int ox = (size - w) / 2, oy = (size - h) / 2;
  Frame out;
  out.width = out.height = size;
  out.rgb.assign(static_cast<std::size_t>(size) * size * 3, 0);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(frame.height - 1, static_cast<int>(y / scale));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(frame.width - 1, static_cast<int>(x / scale));
      const auto* src = &frame.rgb[static_cast<std::size_t>((sy * frame.width + sx) * 3)];
      auto* dst = &out.rgb[static_cast<std::size_t>(((oy + y) * size + ox + x) * 3)];
      std::copy(src, src + 3, dst);
    }
  }
  return out;
}

std::string ppm_data_uri(std::span<const std::uint8_t> ppm) {
  return "data:image/x-portable-pixmap;base64," + base64_encode(ppm);
}

std::string build_chat_request(const RemoteConfig& cfg, const std::string& prompt,
                               std::span<const std::vector<std::uint8_t>> images) {
  nlohmann::ordered_json content = nlohmann::ordered_json::array();
  for (const auto& img : images) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", ppm_data_uri(img)}}}});
  }
  content.push_back({{"type", "text"}, {"text", prompt}});
  nlohmann::ordered_json body;
  body["model"] = cfg.model;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "user"}, {"content", std::move(content)}}});
  body["temperature"] = cfg.temperature;
  body["top_p"] = cfg.top_p;
  body["max_new_tokens"] = cfg.max_new_tokens;
  body["max_tokens"] = cfg.max_new_tokens;
  return body.dump();
}

std::string extract_reply_text(const std::string& response_body) {
  const auto j = nlohmann::json::parse(response_body, nullptr, false);
  if (j.is_discarded()) {
    throw ClassifierError(ClassifierErrorKind::kParse, "response is not JSON");
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some servers echo the multi-part format back.
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
    }
    return text;
  } catch (const nlohmann::json::exception& e) {
    throw ClassifierError(ClassifierErrorKind::kParse,
                          std::string("unexpected response shape: ") + e.what());
  }
}

std::string complete_remote(Transport& transport, const RemoteConfig& cfg,
                            const std::string& prompt,
                            std::span<const std::vector<std::uint8_t>> images) {
  if (cfg.endpoint.empty()) {
    throw ClassifierError(ClassifierErrorKind::kNetwork, "no endpoint configured");
  }
  const HttpResponse res = transport.post_json(
      cfg.endpoint, build_chat_request(cfg, prompt, images), cfg.timeout);
  if (res.status < 200 || res.status >= 300) {
    throw ClassifierError(ClassifierErrorKind::kNetwork,
                          "HTTP status " + std::to_string(res.status));
  }
  return extract_reply_text(res.body);
}

StageBelief classify_remote(Transport& transport, const RemoteConfig& cfg,
                            std::span<const std::vector<std::uint8_t>> frames,
                            const std::string& prompt,
                            std::span<const StageTemplate> stages, int top_k) {
  const std::string text = complete_remote(transport, cfg, prompt, frames);
  try {
    return parse_stage_probs(text, stages, top_k);
  } catch (const HvtsError& e) {
    throw ClassifierError(ClassifierErrorKind::kParse, e.what());
  }
}

RemoteClassifier::RemoteClassifier(Transport& transport, RemoteConfig cfg,
                                   std::vector<StageTemplate> stages, int top_k)
    : transport_(transport),
      cfg_(std::move(cfg)),
      stages_(std::move(stages)),
      top_k_(top_k),
      prompt_(build_classification_prompt(stages_, top_k)) {}

StageBelief RemoteClassifier::classify(const ClassifierInput& input) {
  return classify_remote(transport_, cfg_, input.frames_ppm, prompt_, stages_,
                         top_k_);
}

}  // namespace adp
