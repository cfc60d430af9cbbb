#include "dsn/common.hpp"

#include <cstdio>

namespace dsn {

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::MissingColumn: return "MissingColumn";
        case Errc::UnparsableScore: return "UnparsableScore";
        case Errc::EmptyManifest: return "EmptyManifest";
        case Errc::CropTooLarge: return "CropTooLarge";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::BackendParamsMissing: return "BackendParamsMissing";
        case Errc::ImageTooSmall: return "ImageTooSmall";
        case Errc::ParamShapeMismatch: return "ParamShapeMismatch";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::EmptyBatch: return "EmptyBatch";
        case Errc::MixedSizeBatch: return "MixedSizeBatch";
        case Errc::EmptySplit: return "EmptySplit";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
        case Errc::MissingReferenceIds: return "MissingReferenceIds";
        case Errc::TooFewItems: return "TooFewItems";
        case Errc::MissingDistortionLabels: return "MissingDistortionLabels";
        case Errc::DegenerateInput: return "DegenerateInput";
        case Errc::TargetLargerThanInput: return "TargetLargerThanInput";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::UnknownSubcommand: return "UnknownSubcommand";
        case Errc::BadConfig: return "BadConfig";
        case Errc::IoError: return "IoError";
    }
    return "UnknownError";
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    std::string s(buf);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

}  // namespace dsn
