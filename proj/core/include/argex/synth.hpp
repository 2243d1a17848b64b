#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "argex/corpus.hpp"

namespace argex {

/// Configuration for the seeded synthetic corpus generator. The generator
/// stands in for real document-level EAE data at desk scale: filler text,
/// type-specific trigger words, and role-flavored entity spans planted
/// within a bounded distance of their triggers so the task is learnable.
struct GenConfig {
  struct TypeSpec {
    std::string type;
    std::string template_text;           // «role:Name» marker format
    std::vector<std::string> triggers;   // surface forms for the trigger token
  };

  int n_docs = 50;
  int vocab_size = 120;                  // filler word inventory
  int doc_len_min = 30;
  int doc_len_max = 60;
  std::vector<double> event_count_weights = {0.0, 0.5, 0.3, 0.2};  // index = #events
  int args_min = 1;
  int args_max = 3;
  int arg_len_min = 1;
  int arg_len_max = 2;
  double arg_overlap_prob = 0.3;         // chance a later event reuses an existing span
  int max_arg_distance = 8;              // tokens between trigger and a fresh argument
  std::vector<TypeSpec> types;           // empty -> built-in inventory
};

/// Built-in event-type inventory used when GenConfig.types is empty.
std::vector<GenConfig::TypeSpec> default_type_inventory();

TemplateRegistry registry_from(const GenConfig& config);

/// Pure function of (config, seed); every generated document validates
/// against the registry.
Corpus generate_synthetic(const GenConfig& config, std::uint64_t seed);

GenConfig gen_config_from_json(const std::string& text);
GenConfig load_gen_config(const std::string& path);

}  // namespace argex
