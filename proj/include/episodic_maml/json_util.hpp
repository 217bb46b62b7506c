#pragma once

#include <cstdio>
#include <span>
#include <string>
#include <string_view>

#include "episodic_maml/errors.hpp"
#include "episodic_maml/metrics.hpp"

namespace episodic_maml {

// Decimal with 17 significant digits: enough to reconstruct the exact double
// on load, and stable across runs for byte-identical reports.
inline void append_json_number(std::string& out, double v) {
    if (!std::isfinite(v)) throw ValidationError("refusing to serialize a non-finite number");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

inline void append_json_string(std::string& out, std::string_view s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

inline void append_json_array(std::string& out, std::span<const double> values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        append_json_number(out, values[i]);
    }
    out += ']';
}

// one metrics report line: the JSONL record emitted per evaluated batch
inline std::string metrics_record_json(const MetricsRecord& r) {
    std::string line = "{\"batch_index\": " + std::to_string(r.batch_index);
    line += ", \"accuracy\": ";
    append_json_number(line, r.accuracy);
    line += ", \"precision\": ";
    append_json_number(line, r.precision);
    line += ", \"recall\": ";
    append_json_number(line, r.recall);
    line += ", \"loss\": ";
    append_json_number(line, r.loss);
    line += "}";
    return line;
}

}  // namespace episodic_maml
