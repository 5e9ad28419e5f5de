#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sleicl/embedder.hpp"
#include "sleicl/llm_gateway.hpp"
#include "sleicl/selector.hpp"

// Grimoire generation: render the PG/SG prompts, call the strong model, and
// persist the candidate set.

namespace sleicl {

enum class Paradigm { PG, SG };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

/// Framing line every grimoire preamble starts with.
inline constexpr std::string_view kGrimoireFraming =
    "Below are some skills needed to solve the task; you need to carefully "
    "learn and consider the process and methods step by step:";

/// Instruction markers the deterministic mock strong model keys on.
inline constexpr std::string_view kPgInstructionMarker = "Summarize step-by-step";
inline constexpr std::string_view kSgInstructionMarker =
    "Condense the following skills text";

struct Grimoire {
  std::string id;  // hash of the provenance fields below
  std::string task;
  SelectionMethod method = SelectionMethod::ZeroShot;
  Paradigm paradigm = Paradigm::PG;
  SelectionParams params;
  std::vector<std::string> selection_ids;
  std::string text;
  std::string strong_model;
  std::string created_at;  // ISO-8601; fixed epoch under mock strong models
  std::optional<Embedding> embedding;
  bool truncated = false;        // text was cut back to the length cap
  bool sg_not_shorter = false;   // SG attempts never got below the PG length

  size_t token_estimate() const;
  /// "KCS-PG", "HSS-SG (r=0.5)", "Zero-Shot-PG", ...
  std::string display_name() const;
};

/// Deterministic provenance hash (task, method, paradigm, params, selection
/// ids, strong model); the store's dedup key.
std::string grimoire_id(const std::string& task, SelectionMethod method,
                        Paradigm paradigm, const SelectionParams& params,
                        const std::vector<std::string>& selection_ids,
                        const std::string& strong_model);

/// PG generation prompt: task description, the labeled examples (omitted
/// for ZeroShot), the skill-synthesis instruction, and a word cap.
std::string render_pg_prompt(const TaskSpec& task,
                             const std::vector<Sample>& selection,
                             int word_cap = 600);

/// SG generation prompt over an existing PG text.
std::string render_sg_prompt(const std::string& pg_text, int word_cap = 120);

struct GrimoireCaps {
  int pg_words = 600;
  int sg_words = 120;
};

/// Condenses pg_text via the strong model; retries once if the result is
/// not shorter, keeping the longest attempt with a warning flag when both
/// fail.
struct SgResult {
  std::string text;
  bool not_shorter = false;
};
SgResult simplify_to_sg(const std::string& pg_text, const ModelSpec& strong,
                        const TaskSpec& task, Gateway& gateway, int word_cap = 120);

/// Word-capped copy: text over cap*1.1 is cut at the last sentence boundary
/// within the cap (hard word cut if none).
struct CapResult {
  std::string text;
  bool truncated = false;
};
CapResult enforce_word_cap(const std::string& text, int word_cap);

// --- store -------------------------------------------------------------------

/// grimoires/<task>/<id>.json, one checksummed record per grimoire, plus an
/// index JSON-lines file per task.
class GrimoireStore {
 public:
  explicit GrimoireStore(std::filesystem::path root);

  void save(const Grimoire& g);
  Grimoire load(const std::string& task, const std::string& id) const;
  bool contains(const std::string& task, const std::string& id) const;
  std::vector<Grimoire> load_all(const std::string& task) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path record_path(const std::string& task,
                                    const std::string& id) const;
  std::filesystem::path root_;
};

// --- candidate-set generation --------------------------------------------------

struct GenerationOptions {
  GrimoireCaps caps;
  SelectionParams selection;          // seed, c, n, k shared by the methods
  std::vector<double> hss_ratios{1.0};
};

struct GenerationError {
  std::string key;  // display name of the failed combination
  std::string message;
};

struct GenerationResult {
  std::vector<Grimoire> grimoires;
  std::vector<GenerationError> errors;
  size_t cached = 0;  // combinations already present in the store
};

/// Builds the candidate set {KCS,HCS,HSS,RSS,ZeroShot} x {PG,SG}: ten
/// grimoires with one HSS ratio, two more per extra ratio. Existing store
/// entries are reused without strong-model calls. Embeddings are computed
/// at store time.
GenerationResult generate_grimoire_set(
    const TaskSpec& task, const SampleSet& set,
    const std::map<std::string, Embedding>& train_embeddings,
    const std::vector<HardnessAnnotation>& annotations, const ModelSpec& strong,
    Gateway& gateway, EmbeddingProvider& provider, GrimoireStore& store,
    const GenerationOptions& options);

}  // namespace sleicl
