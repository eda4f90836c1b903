#include "http.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <thread>

#include "miwv/error.hpp"

namespace miwv::detail {
namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path component of base_url, without trailing '/'
};

SplitUrl split_url(std::string_view base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw Error(ErrorKind::Config, "base_url needs a scheme: '" + std::string(base_url) + "'");
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = std::string(base_url.substr(0, path_start));
    if (path_start != std::string_view::npos) out.prefix = std::string(base_url.substr(path_start));
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

}  // namespace

std::string post_json(std::string_view base_url, std::string_view path, const std::string& body,
                      const HttpPolicy& policy) {
    const auto url = split_url(base_url);
    const std::string full_path = url.prefix + std::string(path);
    std::string last_error;
    int delay = policy.backoff_ms;
    for (std::size_t attempt = 0; attempt <= policy.retries; ++attempt) {
        if (attempt > 0 && delay > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
        httplib::Client client(url.origin);
        client.set_connection_timeout(policy.timeout_s, 0);
        client.set_read_timeout(policy.timeout_s, 0);
        client.set_write_timeout(policy.timeout_s, 0);
        auto res = client.Post(full_path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return res->body;
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        throw Error(ErrorKind::MalformedResponse,
                    std::string(base_url) + std::string(path) + " returned HTTP " +
                        std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    throw Error(ErrorKind::BackendUnavailable,
                std::string(base_url) + std::string(path) + " after " +
                    std::to_string(policy.retries + 1) + " attempt(s): " + last_error);
}

}  // namespace miwv::detail
