#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "s3a/prompt.hpp"

namespace s3a {

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  require(scheme != std::string::npos, "LLM endpoint must be an absolute URL: " + url);
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpLlmClient::HttpLlmClient(HttpClientOptions options) : options_(std::move(options)) {
  split_endpoint(options_.endpoint);
  if (options_.model.empty()) options_.model = "default";
}

std::optional<HttpClientOptions> HttpLlmClient::options_from_env() {
  const char* endpoint = std::getenv("S3A_LLM_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0') return std::nullopt;
  HttpClientOptions o;
  o.endpoint = endpoint;
  if (const char* key = std::getenv("S3A_LLM_API_KEY")) o.api_key = key;
  if (const char* model = std::getenv("S3A_LLM_MODEL")) o.model = model;
  return o;
}

std::string HttpLlmClient::complete(const std::string& request) {
  const Endpoint ep = split_endpoint(options_.endpoint);
  httplib::Client cli(ep.scheme_host_port);
  const auto secs = static_cast<time_t>(options_.timeout_s);
  const auto usecs = static_cast<time_t>((options_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const nlohmann::json body = {
      {"model", options_.model},
      {"temperature", options_.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request}}})}};

  auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("LLM request to " + options_.endpoint + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw TransportError("LLM endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    fail(ErrorKind::kExternal, "LLM endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                   res->body.substr(0, 200));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kExternal, std::string("malformed LLM response: ") + e.what());
  }
}

}  // namespace s3a
