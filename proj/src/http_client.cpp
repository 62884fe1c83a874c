// HTTP transport for the live provider, isolated here because httplib is a
// heavy header. Everything else in the gateway is transport-agnostic.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "vulnbench/common.hpp"
#include "vulnbench/gateway.hpp"

namespace vulnbench::gateway::detail {

std::string post_json(const std::string& base_url, const std::string& path,
                      const std::string& body, const std::string& api_key) {
    httplib::Client client(base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(600);
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
    httplib::Result response = client.Post(path, headers, body, "application/json");
    if (!response) {
        throw TransientProviderError("connection failed: " +
                                     httplib::to_string(response.error()));
    }
    if (response->status == 401 || response->status == 403) {
        throw EnvironmentError("authentication failed (HTTP " +
                               std::to_string(response->status) + ")");
    }
    if (response->status == 429 || response->status >= 500) {
        throw TransientProviderError("HTTP " + std::to_string(response->status));
    }
    if (response->status != 200) {
        throw GatewayError("HTTP " + std::to_string(response->status) + ": " + response->body);
    }
    return response->body;
}

}  // namespace vulnbench::gateway::detail
