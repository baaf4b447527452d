#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dla/evalmetrics.hpp"
#include "dla/model.hpp"
#include "dla/synthcorpus.hpp"
#include "dla/trainer.hpp"

namespace dla {

// Bad usage, malformed config, or schema violations; callers map this to a
// distinct exit code from io and runtime failures.
struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Current threshold, from DLA_LOG (error|warn|info|debug) unless overridden.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_line(LogLevel level, const std::string& msg);  // stderr, filtered

// Sectioned key/value text: [section] headers, key = value lines, '#'
// comments. Keys flatten to "section.key".
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config(const std::string& path);

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    CorpusConfig corpus;
    int pages = 16;
};

// Applies a parsed map over the defaults. Unknown keys and malformed values
// throw CliError. A missing train.top_k follows the model vocabulary.
RunConfig config_from_map(const ConfigMap& m);

// The [model] section a checkpoint needs to rebuild its network.
std::string model_config_text(const ModelConfig& m);

// Checkpoint layout: "DLAF", u32 version, length-prefixed config text, u32
// tensor count, then per tensor a length-prefixed name, u32 rank, u32 dims,
// and the data as little-endian 32-bit floats.
void save_checkpoint(const std::string& path, const ParameterStore<float>& store,
                     const std::string& config_text);

struct Checkpoint {
    std::string config_text;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into matching store entries by name; a missing,
// extra, or reshaped tensor throws CliError.
void restore_parameters(ParameterStore<float>& store, const Checkpoint& ckpt);

// Structure files carry {page, width, height, regions:[{id, role,
// member_lines, box}], reading_order, links, graphics:[{box, category,
// score}]} with roles and categories by name and boxes as [cx, cy, w, h].
std::string write_structure(const DocumentPage& page, const DocumentStructure& s,
                            const std::vector<GraphicalProposal>& graphics,
                            const RoleVocab& vocab);

struct ParsedStructure {
    int page_id = 0;
    int width = 0, height = 0;
    DocumentStructure structure;
    std::vector<GraphicalProposal> graphics;
};

ParsedStructure parse_structure(const std::string& json_text, const RoleVocab& vocab);

// SVG overlay: role-colored region boxes with a legend, purple arrows along
// intra-region line chains, green arrows along the reading order and
// attachment links, orange arrows from members to their region box.
std::string render_svg(const DocumentPage& page, const RoleVocab& vocab);

} // namespace dla
