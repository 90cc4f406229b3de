#include <cstdlib>
#include <httplib.h>

#include "oxy/error.hpp"
#include "oxy/model/model.hpp"

namespace oxy {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::ConfigError, "base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

bool is_timeout(httplib::Error e) {
  return e == httplib::Error::Read || e == httplib::Error::Write ||
         e == httplib::Error::ConnectionTimeout;
}

}  // namespace

HttpModel::HttpModel(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  split_url(endpoint_.base_url);
}

Json HttpModel::request_body(std::span<const ChatMessage> messages) const {
  Json body = endpoint_.params.is_object() ? endpoint_.params : Json::object();
  body["model"] = endpoint_.model;
  body["messages"] = to_json(messages);
  body["stream"] = false;
  return body;
}

std::string HttpModel::complete(std::span<const ChatMessage> messages) {
  const auto url = split_url(endpoint_.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::milliseconds(endpoint_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!endpoint_.auth_env.empty()) {
    if (const char* token = std::getenv(endpoint_.auth_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const auto body = request_body(messages).dump();
  const auto path = url.prefix + "/chat/completions";

  httplib::Result result = client.Post(path, headers, body, "application/json");
  if (!result && is_timeout(result.error()))
    result = client.Post(path, headers, body, "application/json");
  if (!result)
    throw Error(Errc::ModelUnavailable, "chat completion failed: " + httplib::to_string(result.error()));
  if (result->status != 200)
    throw Error(Errc::ModelUnavailable,
                "chat completion returned HTTP " + std::to_string(result->status));
  const auto reply = Json::parse(result->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
    throw Error(Errc::ModelUnavailable, "malformed chat completion response");
  const auto& message = reply["choices"][0].value("message", Json::object());
  const auto& content = message.value("content", Json());
  if (!content.is_string()) throw Error(Errc::ModelUnavailable, "completion has no text content");
  return content.get<std::string>();
}

}  // namespace oxy
