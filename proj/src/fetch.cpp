#include <chrono>
#include <string>

#include "httplib.h"
#include "v2n/error.hpp"
#include "v2n/ingest.hpp"

namespace v2n::ingest {

Snapshot fetch_snapshot(const std::string& url, std::chrono::milliseconds timeout) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) {
        throw TransportError("only http:// endpoints are supported: '" + url + "'");
    }
    const auto path_pos = url.find('/', scheme.size());
    const std::string origin = url.substr(0, path_pos);
    const std::string path = path_pos == std::string::npos ? "/" : url.substr(path_pos);

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Get(path);
    if (!res) {
        throw TransportError("GET " + url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("GET " + url + " returned HTTP " + std::to_string(res->status),
                             res->status);
    }
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return {res->body, std::chrono::duration_cast<std::chrono::seconds>(now).count()};
}

}  // namespace v2n::ingest
