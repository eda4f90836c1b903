#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace miwv::detail {

struct HttpPolicy {
    std::size_t retries = 2;
    int backoff_ms = 200;  // doubles after every failed attempt
    int timeout_s = 60;
};

// POSTs a JSON body to base_url + path. Connection failures, 429 and 5xx are
// retried; once retries are spent they raise BackendUnavailable. Other non-200
// statuses raise MalformedResponse immediately.
std::string post_json(std::string_view base_url, std::string_view path, const std::string& body,
                      const HttpPolicy& policy);

}  // namespace miwv::detail
