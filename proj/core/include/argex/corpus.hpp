#pragma once

#include <map>
#include <string>
#include <vector>

namespace argex {

/// Half-open token span [start, end).
struct Span {
  int start = 0;
  int end = 0;
  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
  bool operator<(const Span& o) const { return start != o.start ? start < o.start : end < o.end; }
  int len() const { return end - start; }
  bool empty() const { return end <= start; }
};

struct Argument {
  std::string role;
  Span span;
};

struct Event {
  std::string event_id;
  std::string event_type;
  Span trigger;
  std::vector<Argument> arguments;
};

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<Event> events;
};

struct Corpus {
  std::vector<Document> docs;
};

/// Prompt template for one event type. Tokens are the template surface; each
/// slot is a maximal run of tokens carrying one role label. A role may occur
/// in more than one slot.
struct Template {
  struct Slot {
    std::string role;
    int lo = 0;  // token range [lo, hi) within the template
    int hi = 0;
  };
  std::vector<std::string> tokens;
  std::vector<Slot> slots;
};

class TemplateRegistry {
 public:
  void add(const std::string& event_type, Template tpl);
  bool has(const std::string& event_type) const { return templates_.count(event_type) > 0; }
  const Template& get(const std::string& event_type) const;
  const std::map<std::string, Template>& all() const { return templates_; }

 private:
  std::map<std::string, Template> templates_;
};

// JSONL corpus ingestion; rejects files violating any Document/Event
// invariant with an error naming the offending line and doc.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus parse_corpus_jsonl(const std::string& text);
std::string corpus_to_jsonl(const Corpus& corpus);

// Template file: JSON object mapping event type to a template string with
// role slots written as «role:Name» markers.
TemplateRegistry load_templates(const std::string& path);
TemplateRegistry parse_templates_json(const std::string& text);
Template parse_template_string(const std::string& text);

/// Throws DataError describing the first violated invariant, if any.
void validate_document(const Document& doc, const TemplateRegistry& reg);
void validate_corpus(const Corpus& corpus, const TemplateRegistry& reg);

}  // namespace argex
