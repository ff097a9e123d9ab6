#pragma once

#include <stdexcept>
#include <string>

namespace syncd {

/// Pipeline stage that raised an error. The CLI maps each stage to an exit code.
enum class Stage {
    Parse = 2,
    Assumption = 3,
    Design = 4,
    Certificate = 5,
    Divergence = 6,
};

inline const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Parse: return "parse";
    case Stage::Assumption: return "assumption";
    case Stage::Design: return "design";
    case Stage::Certificate: return "certificate";
    case Stage::Divergence: return "divergence";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Stage stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
    [[nodiscard]] Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(Stage::Parse, what) {}
};

class AssumptionError : public Error {
public:
    explicit AssumptionError(const std::string& what) : Error(Stage::Assumption, what) {}
};

class DesignError : public Error {
public:
    explicit DesignError(const std::string& what) : Error(Stage::Design, what) {}
};

class CertificateError : public Error {
public:
    explicit CertificateError(const std::string& what) : Error(Stage::Certificate, what) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error(Stage::Divergence, what) {}
};

} // namespace syncd
