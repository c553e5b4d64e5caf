#include "mrfault/error.hpp"

namespace mrfault {

const char* to_string(FormatErrc code) {
    switch (code) {
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::truncated: return "truncated";
        case FormatErrc::trailing_data: return "trailing data";
        case FormatErrc::duplicate_name: return "duplicate tensor name";
        case FormatErrc::version_mismatch: return "version mismatch";
        case FormatErrc::count_mismatch: return "count mismatch";
        case FormatErrc::bad_manifest: return "bad manifest";
        case FormatErrc::bad_label: return "label out of range";
        case FormatErrc::io: return "i/o error";
    }
    return "unknown";
}

}  // namespace mrfault
