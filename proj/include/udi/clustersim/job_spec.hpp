#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "udi/imagekit/image_reference.hpp"

namespace udi {

/// Generic resource that marks a job as containerized.
inline constexpr const char* kUdiGres = "udi";

enum class ImageMode { Directive, PerCommand };
std::string_view to_string(ImageMode mode);
std::optional<ImageMode> parse_image_mode(std::string_view text);

struct JobCommand {
    std::string text;
    std::optional<ImageReference> image;  // PerCommand --image=

    friend bool operator==(const JobCommand&, const JobCommand&) = default;
};

struct JobSpec {
    std::string job_id;
    int nodes = 1;
    int ranks_per_node = 1;
    ImageMode mode = ImageMode::PerCommand;
    std::optional<ImageReference> image;  // Directive mode
    std::vector<std::string> gres;
    std::vector<JobCommand> script;
    std::uint32_t uid = 1000;

    bool containerized() const;
    bool has_gres(const std::string& token) const;
    /// Throws InvalidSpec or MissingGres.
    void validate() const;

    /// Script grammar, one item per line:
    ///
    ///   # comment
    ///   job_id = NAME            nodes = N            ranks_per_node = R
    ///   mode = directive|per-command                  udi = name:tag
    ///   gres = udi[,other...]    uid = N
    ///   exec [--image=name:tag] COMMAND...
    ///
    /// `udi =` implies directive mode unless `mode` says otherwise.
    static JobSpec parse(const std::string& text, const std::string& system);
    std::string to_text() const;

    friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

}  // namespace udi
