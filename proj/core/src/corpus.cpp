#include "argex/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"

namespace argex {

using nlohmann::json;

void TemplateRegistry::add(const std::string& event_type, Template tpl) {
  if (templates_.count(event_type))
    throw DataError("duplicate template for event type '" + event_type + "'");
  templates_.emplace(event_type, std::move(tpl));
}

const Template& TemplateRegistry::get(const std::string& event_type) const {
  auto it = templates_.find(event_type);
  if (it == templates_.end())
    throw DataError("no template for event type '" + event_type + "'");
  return it->second;
}

namespace {

Span parse_span(const json& j) {
  Span s;
  s.start = j.at("start").get<int>();
  s.end = j.at("end").get<int>();
  return s;
}

void check_span(const Span& s, int n_tokens, const std::string& what, const std::string& doc_id) {
  if (!(0 <= s.start && s.start < s.end && s.end <= n_tokens)) {
    std::ostringstream os;
    os << what << " span [" << s.start << "," << s.end << ") out of range in doc '" << doc_id
       << "' (" << n_tokens << " tokens)";
    throw DataError(os.str());
  }
}

Document parse_document(const json& j) {
  Document doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const json& je : j.at("events")) {
    Event ev;
    ev.event_id = je.at("event_id").get<std::string>();
    ev.event_type = je.at("event_type").get<std::string>();
    ev.trigger = parse_span(je.at("trigger"));
    for (const json& ja : je.at("arguments")) {
      Argument arg;
      arg.role = ja.at("role").get<std::string>();
      arg.span.start = ja.at("start").get<int>();
      arg.span.end = ja.at("end").get<int>();
      ev.arguments.push_back(std::move(arg));
    }
    doc.events.push_back(std::move(ev));
  }
  return doc;
}

// Structural invariants that do not need the template registry.
void check_document(const Document& doc) {
  const int n = static_cast<int>(doc.tokens.size());
  std::set<std::string> ids;
  for (const Event& ev : doc.events) {
    if (!ids.insert(ev.event_id).second)
      throw DataError("duplicate event_id '" + ev.event_id + "' in doc '" + doc.doc_id + "'");
    check_span(ev.trigger, n, "trigger", doc.doc_id);
    for (const Argument& arg : ev.arguments)
      check_span(arg.span, n, "argument '" + arg.role + "'", doc.doc_id);
  }
}

json document_to_json(const Document& doc) {
  json events = json::array();
  for (const Event& ev : doc.events) {
    json args = json::array();
    for (const Argument& a : ev.arguments)
      args.push_back({{"role", a.role}, {"start", a.span.start}, {"end", a.span.end}});
    events.push_back({{"event_id", ev.event_id},
                      {"event_type", ev.event_type},
                      {"trigger", {{"start", ev.trigger.start}, {"end", ev.trigger.end}}},
                      {"arguments", args}});
  }
  return {{"doc_id", doc.doc_id}, {"tokens", doc.tokens}, {"events", events}};
}

}  // namespace

Corpus parse_corpus_jsonl(const std::string& text) {
  Corpus corpus;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      corpus.docs.push_back(parse_document(j));
    } catch (const json::exception& e) {
      std::ostringstream os;
      os << "corpus line " << line_no << ": " << e.what();
      throw DataError(os.str());
    }
    check_document(corpus.docs.back());
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus_jsonl(buf.str());
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::ostringstream out;
  for (const Document& doc : corpus.docs) out << document_to_json(doc).dump() << "\n";
  return out.str();
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file '" + path + "'");
  out << corpus_to_jsonl(corpus);
}

Template parse_template_string(const std::string& text) {
  static const std::string kOpen = "«";   // «
  static const std::string kClose = "»";  // »
  Template tpl;
  std::size_t pos = 0;
  auto flush_words = [&tpl](const std::string& chunk) {
    std::istringstream ws(chunk);
    std::string w;
    while (ws >> w) tpl.tokens.push_back(w);
  };
  while (pos < text.size()) {
    const std::size_t open = text.find(kOpen, pos);
    if (open == std::string::npos) {
      flush_words(text.substr(pos));
      break;
    }
    flush_words(text.substr(pos, open - pos));
    const std::size_t body = open + kOpen.size();
    const std::size_t close = text.find(kClose, body);
    if (close == std::string::npos) throw DataError("unterminated «role:...» marker in template");
    std::string inner = text.substr(body, close - body);
    if (inner.rfind("role:", 0) != 0) throw DataError("template marker must start with 'role:'");
    const std::string role = inner.substr(5);
    Template::Slot slot;
    slot.role = role;
    slot.lo = static_cast<int>(tpl.tokens.size());
    flush_words(role);
    slot.hi = static_cast<int>(tpl.tokens.size());
    if (slot.role.empty() || slot.hi == slot.lo) throw DataError("empty role in template marker");
    tpl.slots.push_back(std::move(slot));
    pos = close + kClose.size();
  }
  if (tpl.tokens.empty()) throw DataError("empty template string");
  if (tpl.slots.empty()) throw DataError("template has no «role:...» slot markers");
  return tpl;
}

TemplateRegistry parse_templates_json(const std::string& text) {
  // The SAX callback sees every key, so duplicate event types are caught
  // even though the parsed object would silently keep only one.
  std::vector<std::string> keys;
  json::parser_callback_t cb = [&keys](int depth, json::parse_event_t event, json& parsed) {
    if (depth == 1 && event == json::parse_event_t::key)
      keys.push_back(parsed.get<std::string>());
    return true;
  };
  json j;
  try {
    j = json::parse(text, cb);
  } catch (const json::exception& e) {
    throw DataError(std::string("template file: ") + e.what());
  }
  if (!j.is_object()) throw DataError("template file must be a JSON object");
  std::set<std::string> seen;
  for (const std::string& k : keys)
    if (!seen.insert(k).second) throw DataError("duplicate template for event type '" + k + "'");

  TemplateRegistry reg;
  for (const auto& [event_type, value] : j.items()) {
    if (!value.is_string()) throw DataError("template for '" + event_type + "' must be a string");
    try {
      reg.add(event_type, parse_template_string(value.get<std::string>()));
    } catch (const DataError& e) {
      throw DataError("event type '" + event_type + "': " + e.what());
    }
  }
  return reg;
}

TemplateRegistry load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_templates_json(buf.str());
}

void validate_document(const Document& doc, const TemplateRegistry& reg) {
  check_document(doc);
  for (const Event& ev : doc.events) {
    if (!reg.has(ev.event_type))
      throw DataError("doc '" + doc.doc_id + "': no template for event type '" + ev.event_type + "'");
    const Template& tpl = reg.get(ev.event_type);
    for (const Argument& arg : ev.arguments) {
      bool known = false;
      for (const Template::Slot& s : tpl.slots) known = known || (s.role == arg.role);
      if (!known)
        throw DataError("doc '" + doc.doc_id + "': role '" + arg.role +
                        "' not in template for event type '" + ev.event_type + "'");
    }
  }
}

void validate_corpus(const Corpus& corpus, const TemplateRegistry& reg) {
  for (const Document& doc : corpus.docs) validate_document(doc, reg);
}

}  // namespace argex
