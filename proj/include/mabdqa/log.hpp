#pragma once

#include <iostream>
#include <string>

namespace mabdqa {

inline void log_warn(const std::string& msg) {
    std::cerr << "[mabdqa] warning: " << msg << "\n";
}

inline void log_info(const std::string& msg) {
    std::cerr << "[mabdqa] " << msg << "\n";
}

}  // namespace mabdqa
