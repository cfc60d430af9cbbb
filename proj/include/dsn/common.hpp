#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsn {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Contract and I/O error identities. Everything except IoError maps to
// CLI exit code 1; IoError maps to exit code 2.
enum class Errc {
    MissingColumn,
    UnparsableScore,
    EmptyManifest,
    CropTooLarge,
    InvalidConfig,
    BackendParamsMissing,
    ImageTooSmall,
    ParamShapeMismatch,
    DimMismatch,
    LengthMismatch,
    EmptyBatch,
    MixedSizeBatch,
    EmptySplit,
    VersionMismatch,
    CorruptCheckpoint,
    MissingReferenceIds,
    TooFewItems,
    MissingDistortionLabels,
    DegenerateInput,
    TargetLargerThanInput,
    TooFewSamples,
    UnknownSubcommand,
    BadConfig,
    IoError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

// FNV-1a, used for config digests and checkpoint integrity.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// Formats a double the way the CLI prints metric values: shortest round
// number but always with a decimal point ("1" -> "1.0").
std::string format_real(double v);

}  // namespace dsn
