#include "adp/remote.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

using namespace adp;

namespace {

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

std::vector<StageTemplate> three_stages() {
  return {{"reach", "Action features: a"}, {"grasp", "Action features: b"},
          {"lift", "Action features: c"}};
}

std::string chat_reply(const std::string& text) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}});
  return j.dump();
}

// Records requests and replays a fixed response.
class FakeTransport final : public Transport {
 public:
  HttpResponse reply{200, ""};
  bool timeout = false;
  std::vector<std::string> bodies;
  std::vector<std::string> urls;
  HttpResponse post_json(const std::string& url, const std::string& body,
                         std::chrono::milliseconds) override {
    urls.push_back(url);
    bodies.push_back(body);
    if (timeout) throw ClassifierError(ClassifierErrorKind::kTimeout, "scripted timeout");
    return reply;
  }
};

// Local chat-completions server on an ephemeral port.
class MockServer {
 public:
  explicit MockServer(std::chrono::milliseconds delay = std::chrono::milliseconds(0)) {
    svr_.Post("/v1/chat/completions", [this, delay](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      ++hits;
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      res.set_content(chat_reply("grasp: 0.6\nreach: 0.3\nlift: 0.1\n"), "application/json");
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~MockServer() {
    svr_.stop();
    thread_.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  std::string last_body;
  std::atomic<int> hits{0};

 private:
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("remote") {

TEST_CASE("base64 vectors") {
  CHECK(base64_encode(bytes("")) == "");
  CHECK(base64_encode(bytes("f")) == "Zg==");
  CHECK(base64_encode(bytes("fo")) == "Zm8=");
  CHECK(base64_encode(bytes("foo")) == "Zm9v");
  CHECK(base64_encode(bytes("foobar")) == "Zm9vYmFy");
  CHECK(ppm_data_uri(bytes("foo")) == "data:image/x-portable-pixmap;base64,Zm9v");
}

TEST_CASE("ppm encoding and letterbox") {
  Frame f{2, 1, {255, 0, 0, 0, 255, 0}};
  const auto ppm = encode_ppm(f);
  const std::string header = "P6\n2 1\n255\n";
  REQUIRE(ppm.size() == header.size() + 6);
  CHECK(std::string(ppm.begin(), ppm.begin() + static_cast<long>(header.size())) == header);
  CHECK(ppm.back() == 0);
  CHECK_THROWS(encode_ppm(Frame{2, 2, {1, 2, 3}}));

  const Frame lb = letterbox(f, 4);
  CHECK(lb.width == 4);
  CHECK(lb.height == 4);
  // 2x1 scaled by 2 fills rows 1..2; rows 0 and 3 stay black.
  auto px = [&](int x, int y, int c) { return lb.rgb[static_cast<std::size_t>((y * 4 + x) * 3 + c)]; };
  CHECK(px(0, 0, 0) == 0);
  CHECK(px(0, 1, 0) == 255);
  CHECK(px(3, 2, 1) == 255);
  CHECK(px(3, 3, 1) == 0);
  CHECK(letterbox(Frame{96, 96, std::vector<std::uint8_t>(96 * 96 * 3, 7)}).width == 448);
}

TEST_CASE("request body") {
  RemoteConfig cfg;
  cfg.model = "test-model";
  const std::vector<std::vector<std::uint8_t>> imgs{bytes("a"), bytes("bc")};
  const auto j = nlohmann::json::parse(build_chat_request(cfg, "hello", imgs));
  CHECK(j["model"] == "test-model");
  CHECK(j["temperature"].get<double>() == 0.1);
  CHECK(j["top_p"].get<double>() == 0.7);
  CHECK(j["max_new_tokens"].get<int>() == 1024);
  const auto& content = j["messages"][0]["content"];
  REQUIRE(content.size() == 3);
  CHECK(content[0]["image_url"]["url"] == ppm_data_uri(imgs[0]));
  CHECK(content[1]["image_url"]["url"] == ppm_data_uri(imgs[1]));
  CHECK(content[2]["text"] == "hello");
}

TEST_CASE("reply extraction") {
  CHECK(extract_reply_text(chat_reply("x: 1")) == "x: 1");
  try {
    extract_reply_text("not json");
    FAIL("expected a parse error");
  } catch (const ClassifierError& e) {
    CHECK(e.kind() == ClassifierErrorKind::kParse);
  }
  CHECK_THROWS_AS(extract_reply_text("{\"choices\": []}"), ClassifierError);
}

TEST_CASE("error kinds through an injected transport") {
  FakeTransport t;
  RemoteConfig cfg;
  cfg.endpoint = "http://example.invalid/v1/chat/completions";
  const auto stages = three_stages();
  auto kind_of = [&] {
    try {
      classify_remote(t, cfg, {}, "p", stages, 3);
    } catch (const ClassifierError& e) {
      return std::string(to_string(e.kind()));
    }
    return std::string("none");
  };
  t.reply = {200, chat_reply("lift: 0.8\ngrasp: 0.2\n")};
  const auto b = classify_remote(t, cfg, {}, "p", stages, 3);
  REQUIRE(b.size() == 2);
  CHECK(b[0].stage == 2);
  CHECK(t.urls.back() == cfg.endpoint);
  t.reply = {500, "oops"};
  CHECK(kind_of() == "network");
  t.reply = {200, chat_reply("nothing useful")};
  CHECK(kind_of() == "parse");
  t.timeout = true;
  CHECK(kind_of() == "timeout");
  cfg.endpoint.clear();
  CHECK(kind_of() == "network");
}

TEST_CASE("remote classifier against a local mock server") {
  MockServer server;
  HttpTransport http;
  RemoteConfig cfg;
  cfg.endpoint = server.url();
  cfg.timeout = std::chrono::milliseconds(5000);
  RemoteClassifier rc(http, cfg, three_stages(), 3);
  const std::vector<std::vector<std::uint8_t>> frames{bytes("img")};
  ClassifierInput in;
  in.frames_ppm = frames;
  const auto b = rc.classify(in);
  REQUIRE(b.size() == 3);
  CHECK(b[0] == StageProb{1, 0.6});
  CHECK(b[1] == StageProb{0, 0.3});
  CHECK(b[2] == StageProb{2, 0.1});
  CHECK(server.hits == 1);
  const auto body = nlohmann::json::parse(server.last_body);
  CHECK(body["messages"][0]["content"][1]["text"] ==
        build_classification_prompt(three_stages(), 3));
}

TEST_CASE("slow server times out") {
  MockServer server(std::chrono::milliseconds(300));
  HttpTransport http;
  try {
    http.post_json(server.url(), "{}", std::chrono::milliseconds(1));
    FAIL("expected a timeout");
  } catch (const ClassifierError& e) {
    CHECK(e.kind() == ClassifierErrorKind::kTimeout);
  }
}

TEST_CASE("unreachable endpoint is a network error") {
  HttpTransport http;
  // Bind an ephemeral port and release it so nothing listens there.
  int port = 0;
  {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    ::close(fd);
  }
  try {
    http.post_json("http://127.0.0.1:" + std::to_string(port) + "/x", "{}",
                   std::chrono::milliseconds(2000));
    FAIL("expected a network error");
  } catch (const ClassifierError& e) {
    CHECK(e.kind() == ClassifierErrorKind::kNetwork);
  }
  CHECK_THROWS_AS(http.post_json("no-scheme", "{}", std::chrono::milliseconds(10)),
                  ClassifierError);
}

}  // TEST_SUITE
