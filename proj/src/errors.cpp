#include "csbrnn/errors.hpp"

namespace csbrnn {

const char* to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::bad_magic: return "bad magic";
        case FormatErrorKind::truncated: return "truncated stream";
        case FormatErrorKind::invariant: return "invariant violation";
        case FormatErrorKind::trailing_bytes: return "trailing bytes";
        case FormatErrorKind::syntax: return "syntax error";
    }
    return "format error";
}

}  // namespace csbrnn
