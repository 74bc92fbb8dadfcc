#pragma once

// Run configuration (TOML) and construction of the run's collaborators.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spark/backend.hpp"
#include "spark/evaluator.hpp"
#include "spark/feasibility.hpp"
#include "spark/search.hpp"

namespace spark {

enum class BackendKind : std::uint8_t { kOpenAI, kScripted, kStochastic };
enum class EvaluatorKind : std::uint8_t { kCommand, kSynthetic };

struct BackendSpec {
    BackendKind kind = BackendKind::kOpenAI;
    OpenAIConfig openai;
    std::string api_key_env = "SPARK_API_KEY";
    std::filesystem::path script;  // scripted: JSON file keyed by role
    MockEditorConfig mock;         // stochastic
};

struct RunConfig {
    LoopConfig loop;
    std::filesystem::path seed_program;
    std::filesystem::path scratch_dir;
    std::string candidate_suffix = ".py";
    BackendSpec backend;
    EvaluatorKind evaluator_kind = EvaluatorKind::kCommand;
    EvaluatorSpec evaluator;
    SyntheticTask synthetic;
    std::vector<ValidatorHook> hooks;
    std::map<std::string, std::filesystem::path> prompt_files;
};

/// Parses and validates a TOML document. Relative paths resolve against
/// `base_dir`. Every problem found is listed in the thrown ConfigError, one per line.
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// The API key is read from the environment variable named in the spec.
std::unique_ptr<ChatBackend> make_backend(const RunConfig& config);
std::unique_ptr<Evaluator> make_evaluator(const RunConfig& config);
FeasibilityChecker make_checker(const RunConfig& config);

}  // namespace spark
