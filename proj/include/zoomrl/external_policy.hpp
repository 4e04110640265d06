#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "zoomrl/policy.hpp"
#include "zoomrl/prompts.hpp"
#include "zoomrl/response.hpp"

namespace zoomrl {

// How to reach a chat-completion style endpoint. The auth token is read
// from the named environment variable at call time; an unset variable just
// means no Authorization header.
struct EndpointConfig {
  std::string url = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "external-model";
  double temperature = 0.0;
  int max_tokens = 1024;
  double timeout_s = 30.0;
  int retries = 1;
  std::string auth_token_env = "ZOOMRL_API_TOKEN";
  std::string object_name = "object";
};

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/...
};

inline SplitUrl split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("EndpointConfig: url lacks scheme");
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace detail

// Prompt-protocol policy backed by an external model. The model sees the
// initial observation's coordinate frame; its boxes are validated there and
// remapped to the full image. Every failure mode (network, status, parse,
// validation) degrades to an empty proposal list with the raw text kept for
// the format reward.
class ExternalModelPolicy final : public SensingPolicy {
 public:
  ExternalModelPolicy(EndpointConfig cfg, TaskKind task) : cfg_(std::move(cfg)), task_(task) {}

  PolicyOutput propose(const PolicyContext& ctx, Rng&) const override {
    PolicyOutput out;
    const PromptTemplate tmpl = task_ == TaskKind::detection ? detection_prompt() : segmentation_prompt();
    const std::string prompt = render_prompt(tmpl, cfg_.object_name);

    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["max_tokens"] = cfg_.max_tokens;
    body["messages"] = nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", prompt}}});

    const auto [base, path] = detail::split_url(cfg_.url);
    httplib::Client client(base);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - secs) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!cfg_.auth_token_env.empty()) {
      if (const char* token = std::getenv(cfg_.auth_token_env.c_str()); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string content;
    bool got_response = false;
    for (int attempt = 0; attempt <= cfg_.retries && !got_response; ++attempt) {
      auto res = client.Post(path, headers, body.dump(), "application/json");
      if (!res) {
        std::cerr << "external policy: request failed (" << httplib::to_string(res.error())
                  << "), attempt " << attempt + 1 << "\n";
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        std::cerr << "external policy: status " << res->status << ", attempt " << attempt + 1
                  << "\n";
        continue;
      }
      const auto doc = nlohmann::json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
          !doc["choices"][0].contains("message") ||
          !doc["choices"][0]["message"].contains("content") ||
          !doc["choices"][0]["message"]["content"].is_string()) {
        std::cerr << "external policy: malformed completion body\n";
        continue;
      }
      content = doc["choices"][0]["message"]["content"].get<std::string>();
      got_response = true;
    }
    if (!got_response) return out;

    out.raw_text = content;
    const auto parsed = parse_response(content);
    if (!parsed) {
      std::cerr << "external policy: format error " << to_string(parsed.error().kind) << "\n";
      return out;
    }
    int k_min = 0, k_max = 0;
    proposal_count_bounds(task_, k_min, k_max);
    const auto validated = validate_proposals(parsed.value(), ctx.init_obs.transform.target_w,
                                              ctx.init_obs.transform.target_h, k_min, k_max);
    if (!validated) {
      std::cerr << "external policy: validation error " << to_string(validated.error().kind)
                << "\n";
      return out;
    }
    for (const BBox& b : validated.value())
      out.proposals.push_back(remap_to_full(ctx.init_obs.transform, b));
    return out;
  }

  std::string name() const override { return "external"; }

  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  TaskKind task_;
};

}  // namespace zoomrl
