#include "svfd/error.hpp"

#include <iostream>
#include <mutex>

namespace svfd {

void throw_validation(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }
void throw_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }
void throw_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

namespace {
std::mutex g_sink_mutex;
WarningSink g_sink;
}  // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard<std::mutex> lock(g_sink_mutex);
    g_sink = std::move(sink);
}

void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_sink_mutex);
    if (g_sink) {
        g_sink(msg);
    } else {
        std::cerr << "svfd warning: " << msg << '\n';
    }
}

}  // namespace svfd
