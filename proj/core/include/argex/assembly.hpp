#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "argex/corpus.hpp"
#include "argex/tensor.hpp"

namespace argex {

/// Word-level token vocabulary. Id 0 is the sequence-start token, which also
/// serves as the empty-span anchor (0,0); id 1 is the unknown-word fallback.
class Vocabulary {
 public:
  static const char* start_token() { return "<s>"; }
  static const char* unk_token() { return "<unk>"; }
  static std::string trigger_open(int i);
  static std::string trigger_close(int i);
  static std::string event_open(int i);
  static std::string event_close(int i);

  Vocabulary();

  int add(const std::string& token);        // idempotent
  int id(const std::string& token) const;   // unknown words map to <unk>
  bool has(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int max_events() const { return max_events_; }

  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, int max_events);

  /// Collects corpus words, template/type tokens, and marker tokens for up
  /// to max_events events per document.
  static Vocabulary build(const Corpus& corpus, const TemplateRegistry& reg, int max_events);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
  int max_events_ = 0;
};

struct TriggerMark {
  int event = 0;      // occurrence index
  int open_pos = 0;   // position of the opening marker (the trigger's representative token)
  int close_pos = 0;  // position of the closing marker
  int region_lo() const { return open_pos; }
  int region_hi() const { return close_pos + 1; }
};

struct MarkedContext {
  std::vector<std::string> tokens;
  std::vector<TriggerMark> triggers;  // occurrence order
  std::vector<int> event_order;       // occurrence index -> index into doc.events
  std::vector<int> orig_to_marked;    // original token index -> marked position
};

/// Wraps each trigger in its own marker pair, in occurrence order.
/// Overlapping trigger spans are rejected: the marker scheme cannot
/// represent them without corrupting offsets.
MarkedContext mark_triggers(const Document& doc);

struct PromptSlot {
  int unit = 0;
  int lo = 0, hi = 0;  // token range
  std::string role;
};

struct PromptUnit {
  int lo = 0, hi = 0;       // token range including the event-type markers
  std::string event_type;
  std::vector<int> events;  // occurrence indices this prompt serves
};

struct Prompt {
  std::vector<std::string> tokens;
  std::vector<PromptUnit> units;
  std::vector<PromptSlot> slots;
  std::vector<int> event_unit;  // occurrence index -> unit
};

/// One prompt unit per distinct event type (first-occurrence order), or per
/// event when duplicate_same_type is set.
Prompt build_prompt(const std::vector<std::string>& event_types, const TemplateRegistry& reg,
                    bool duplicate_same_type);

struct GoldSpan {
  int event = 0;  // occurrence index
  std::string role;
  int lo = 0, hi = 0;  // assembled coordinates
};

/// The model input: [start] + marked context + multi-event prompt, with all
/// index maps in assembled coordinates. Window passes reuse this shape with
/// global_pos pointing back into the full assembly.
struct AssembledInput {
  std::vector<std::string> tokens;
  std::vector<int> token_ids;
  int context_lo = 1;
  int context_hi = 1;  // [context_lo, context_hi)
  std::vector<TriggerMark> triggers;
  std::vector<PromptUnit> units;
  std::vector<PromptSlot> slots;
  std::vector<int> event_unit;
  std::vector<std::string> event_ids;
  std::vector<std::string> event_types;
  std::vector<GoldSpan> gold;
  std::vector<int> words_before;  // boundary -> original word tokens before it
  std::vector<int> global_pos;    // position -> global assembled position

  int size() const { return static_cast<int>(tokens.size()); }
  int n_events() const { return static_cast<int>(event_ids.size()); }

  /// Positions a predicted span may use: the null anchor, the context
  /// tokens, and the context's half-open end boundary.
  std::vector<std::uint8_t> span_position_mask() const;

  /// Maps an assembled-coordinate span back to original document token
  /// coordinates. Spans covering only marker tokens come back empty.
  Span to_doc_span(int lo, int hi) const;

  std::string dump_json() const;
};

AssembledInput assemble(const Document& doc, const TemplateRegistry& reg, const Vocabulary& vocab,
                        bool duplicate_same_type);

enum class Dep : std::uint8_t { NA = 0, Intra = 1, Inter = 2 };

class DependencyMatrix {
 public:
  explicit DependencyMatrix(int n) : n_(n), cells_(static_cast<std::size_t>(n) * n, Dep::NA) {}
  int size() const { return n_; }
  Dep at(int i, int j) const { return cells_[static_cast<std::size_t>(i) * n_ + j]; }
  void set(int i, int j, Dep d) { cells_[static_cast<std::size_t>(i) * n_ + j] = d; }
  bool any_non_na() const;
  struct Counts {
    long long intra = 0, inter = 0, na = 0;
  };
  Counts counts() const;

 private:
  int n_;
  std::vector<Dep> cells_;
};

/// Intra: trigger <-> its own prompt, and within-prompt pairs (diagonal
/// included). Inter: trigger <-> other prompts, prompt <-> other prompt.
/// Everything else, including trigger <-> trigger and plain context, is NA.
/// A shared prompt is Intra with every event it serves.
DependencyMatrix build_dependency_matrix(const AssembledInput& inp);

struct WindowPlan {
  struct Window {
    int context_lo = 0, context_hi = 0;  // global assembled coordinates
    std::vector<int> events;             // occurrence indices assigned here
    std::vector<AssembledInput> passes;  // one per prompt segment
  };
  bool single = false;
  int total_len = 0;
  std::vector<Window> windows;
  int dropped_gold = 0;  // gold spans that crossed a window border

  int n_passes() const;
  std::vector<const AssembledInput*> all_passes() const;
};

/// Splits an over-length input into overlapping context windows of at most
/// d1 tokens (stride d1/2) with per-window prompts, packed into segments of
/// at most d2 prompt tokens. Short inputs yield a single identity window.
WindowPlan plan_windows(const AssembledInput& inp, int d1, int d2, int max_len);

/// Recombines per-pass representation matrices into a full-length matrix:
/// prompt segments are averaged per window first, then positions covered by
/// several windows are averaged across windows.
nn::Tensor merge_windows(const WindowPlan& plan, const std::vector<nn::Tensor>& per_pass);

}  // namespace argex
