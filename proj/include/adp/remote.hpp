#pragma once

// Client side of the vision-language exchange: chat-completions request
// bodies, image payload encoding, and a stage classifier over an injectable
// HTTP transport.

#include "adp/env.hpp"
#include "adp/hvts.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adp {

enum class ClassifierErrorKind { kNetwork, kTimeout, kParse };

const char* to_string(ClassifierErrorKind kind);

class ClassifierError : public std::runtime_error {
 public:
  ClassifierError(ClassifierErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ClassifierErrorKind kind() const { return kind_; }

 private:
  ClassifierErrorKind kind_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Blocking POST of a JSON body. Implementations throw ClassifierError with
/// kNetwork or kTimeout on transport failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                 std::chrono::milliseconds timeout) = 0;
};

class HttpTransport final : public Transport {
 public:
  HttpResponse post_json(const std::string& url, const std::string& body,
                         std::chrono::milliseconds timeout) override;
};

/// Name of the environment variable holding the endpoint URL.
inline constexpr const char* kEndpointEnv = "VADF_VLM_ENDPOINT";
std::optional<std::string> endpoint_from_env();

struct RemoteConfig {
  std::string endpoint;  // full URL, e.g. http://host:8000/v1/chat/completions
  std::string model = "Qwen2-VL-7B-Instruct";
  std::chrono::milliseconds timeout{30000};
  double temperature = 0.1;
  double top_p = 0.7;
  int max_new_tokens = 1024;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Binary P6 image.
std::vector<std::uint8_t> encode_ppm(const Frame& frame);

/// Nearest-neighbour scale to fit inside size x size, centred on black.
Frame letterbox(const Frame& frame, int size = 448);

/// "data:image/x-portable-pixmap;base64,..."
std::string ppm_data_uri(std::span<const std::uint8_t> ppm);

/// Chat-completions body: one user message holding the images in order and
/// then the prompt text.
std::string build_chat_request(const RemoteConfig& cfg, const std::string& prompt,
                               std::span<const std::vector<std::uint8_t>> images);

/// choices[0].message.content; throws ClassifierError(kParse).
std::string extract_reply_text(const std::string& response_body);

/// Sends the request and returns the reply text. Non-2xx statuses are
/// network errors.
std::string complete_remote(Transport& transport, const RemoteConfig& cfg,
                            const std::string& prompt,
                            std::span<const std::vector<std::uint8_t>> images);

StageBelief classify_remote(Transport& transport, const RemoteConfig& cfg,
                            std::span<const std::vector<std::uint8_t>> frames,
                            const std::string& prompt,
                            std::span<const StageTemplate> stages, int top_k);

class RemoteClassifier final : public StageClassifier {
 public:
  RemoteClassifier(Transport& transport, RemoteConfig cfg,
                   std::vector<StageTemplate> stages, int top_k = 3);
  StageBelief classify(const ClassifierInput& input) override;

 private:
  Transport& transport_;
  RemoteConfig cfg_;
  std::vector<StageTemplate> stages_;
  int top_k_;
  std::string prompt_;
};

}  // namespace adp
