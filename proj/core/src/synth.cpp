#include "argex/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"
#include "argex/rng.hpp"

namespace argex {

using nlohmann::json;

std::vector<GenConfig::TypeSpec> default_type_inventory() {
  return {
      {"attack",
       "«role:assailant» attacked «role:target» using «role:weapon» at «role:place» .",
       {"raided", "bombarding", "shelling", "striking"}},
      {"meeting",
       "«role:participant» met «role:participant» at «role:place» .",
       {"summit", "gathered", "convened"}},
      {"transfer",
       "«role:giver» gave «role:artifact» to «role:recipient» .",
       {"donated", "handed", "shipped"}},
      {"movement",
       "«role:traveler» moved from «role:origin» to «role:destination» .",
       {"fled", "marched", "migrated"}},
      {"injury",
       "«role:injurer» injured «role:victim» with «role:instrument» .",
       {"wounded", "hurt", "maimed"}},
  };
}

TemplateRegistry registry_from(const GenConfig& config) {
  TemplateRegistry reg;
  const auto types = config.types.empty() ? default_type_inventory() : config.types;
  for (const auto& spec : types) reg.add(spec.type, parse_template_string(spec.template_text));
  return reg;
}

namespace {

std::string role_slug(const std::string& role) {
  std::string s;
  for (char c : role) s += (c == ' ') ? '_' : static_cast<char>(std::tolower(c));
  return s;
}

void check_config(const GenConfig& c) {
  if (c.n_docs < 0) throw DataError("gen config: n_docs must be >= 0");
  if (c.vocab_size < 1) throw DataError("gen config: vocab_size must be >= 1");
  if (c.doc_len_min < 1 || c.doc_len_min > c.doc_len_max)
    throw DataError("gen config: invalid doc length range");
  if (c.event_count_weights.empty()) throw DataError("gen config: empty event-count distribution");
  double wsum = 0.0;
  for (double w : c.event_count_weights) {
    if (w < 0.0) throw DataError("gen config: negative event-count weight");
    wsum += w;
  }
  if (wsum <= 0.0) throw DataError("gen config: event-count weights sum to zero");
  if (c.args_min < 0 || c.args_min > c.args_max) throw DataError("gen config: invalid args range");
  if (c.arg_len_min < 1 || c.arg_len_min > c.arg_len_max)
    throw DataError("gen config: invalid argument length range");
  if (c.arg_overlap_prob < 0.0 || c.arg_overlap_prob > 1.0)
    throw DataError("gen config: arg_overlap_prob outside [0,1]");
  if (c.max_arg_distance < 0) throw DataError("gen config: negative max_arg_distance");
  // Worst-case feasibility: each event needs a 3-token block for its trigger.
  int max_events = 0;
  for (std::size_t k = 0; k < c.event_count_weights.size(); ++k)
    if (c.event_count_weights[k] > 0.0) max_events = static_cast<int>(k);
  if (3 * max_events > c.doc_len_min) {
    std::ostringstream os;
    os << "gen config infeasible: up to " << max_events << " events need "
       << 3 * max_events << " tokens but doc_len_min is " << c.doc_len_min;
    throw DataError(os.str());
  }
}

bool spans_intersect(const Span& a, const Span& b) {
  return a.start < b.end && b.start < a.end;
}

}  // namespace

Corpus generate_synthetic(const GenConfig& config, std::uint64_t seed) {
  check_config(config);
  const auto types = config.types.empty() ? default_type_inventory() : config.types;
  if (types.empty()) throw DataError("gen config: no event types");
  TemplateRegistry reg = registry_from(config);

  Rng rng(seed);
  Corpus corpus;
  for (int di = 0; di < config.n_docs; ++di) {
    Document doc;
    {
      std::ostringstream os;
      os << "d" << di;
      doc.doc_id = os.str();
    }
    const int len = rng.uniform_int(config.doc_len_min, config.doc_len_max);
    const int n_events = rng.categorical(config.event_count_weights);
    if (3 * n_events > len) throw DataError("gen config infeasible: more events than tokens allow");

    doc.tokens.resize(len);
    for (int i = 0; i < len; ++i) {
      std::ostringstream os;
      os << "w" << rng.uniform_int(0, config.vocab_size - 1);
      doc.tokens[i] = os.str();
    }

    // One trigger per equal-width block keeps triggers disjoint and ordered.
    std::vector<Span> trigger_spans;
    std::vector<int> type_idx(n_events);
    for (int e = 0; e < n_events; ++e) {
      const int block_lo = (len * e) / std::max(1, n_events);
      const int block_hi = (len * (e + 1)) / std::max(1, n_events);
      const int pos = rng.uniform_int(block_lo, block_hi - 1);
      trigger_spans.push_back({pos, pos + 1});
      type_idx[e] = rng.uniform_int(0, static_cast<int>(types.size()) - 1);
      const auto& tw = types[type_idx[e]].triggers;
      doc.tokens[pos] = tw.empty() ? types[type_idx[e]].type : tw[rng.uniform_int(0, static_cast<int>(tw.size()) - 1)];
    }

    std::vector<Span> placed_args;  // across all events, for reuse and collision checks
    for (int e = 0; e < n_events; ++e) {
      Event ev;
      {
        std::ostringstream os;
        os << "e" << e;
        ev.event_id = os.str();
      }
      ev.event_type = types[type_idx[e]].type;
      ev.trigger = trigger_spans[e];

      const Template& tpl = reg.get(ev.event_type);
      const int n_slots = static_cast<int>(tpl.slots.size());
      int want = rng.uniform_int(config.args_min, config.args_max);
      want = std::min(want, n_slots);

      std::vector<int> slot_order(n_slots);
      for (int i = 0; i < n_slots; ++i) slot_order[i] = i;
      rng.shuffle(slot_order);

      for (int ai = 0; ai < want; ++ai) {
        const std::string& role = tpl.slots[slot_order[ai]].role;
        // First argument of a later event may reuse an existing span,
        // producing the cross-event argument-overlap phenomenon.
        if (e > 0 && ai == 0 && !placed_args.empty() && rng.bernoulli(config.arg_overlap_prob)) {
          const Span reuse = placed_args[rng.uniform_int(0, static_cast<int>(placed_args.size()) - 1)];
          ev.arguments.push_back({role, reuse});
          continue;
        }
        const int alen = rng.uniform_int(config.arg_len_min, config.arg_len_max);
        const int lo = std::max(0, ev.trigger.start - config.max_arg_distance - alen + 1);
        const int hi = std::min(len - alen, ev.trigger.end - 1 + config.max_arg_distance);
        std::vector<int> candidates;
        for (int s = lo; s <= hi; ++s) {
          const Span cand{s, s + alen};
          bool clash = false;
          for (const Span& t : trigger_spans) clash = clash || spans_intersect(cand, t);
          for (const Span& p : placed_args) clash = clash || spans_intersect(cand, p);
          if (!clash) candidates.push_back(s);
        }
        if (candidates.empty()) continue;  // crowded neighborhood; drop this argument
        const int start = candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];
        const Span span{start, start + alen};
        const std::string slug = role_slug(role);
        for (int p = span.start; p < span.end; ++p) {
          std::ostringstream os;
          os << "ent_" << slug << "_" << rng.uniform_int(0, 5);
          doc.tokens[p] = os.str();
        }
        ev.arguments.push_back({role, span});
        placed_args.push_back(span);
      }
      doc.events.push_back(std::move(ev));
    }
    validate_document(doc, reg);
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

GenConfig gen_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("gen config: ") + e.what());
  }
  if (!j.is_object()) throw DataError("gen config must be a JSON object");
  GenConfig c;
  static const std::set<std::string> known = {
      "n_docs", "vocab_size", "doc_len", "event_count_weights", "args_per_event",
      "arg_len", "arg_overlap_prob", "max_arg_distance", "types"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("gen config: unknown key '" + key + "'");
  if (j.count("n_docs")) c.n_docs = j["n_docs"].get<int>();
  if (j.count("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
  if (j.count("doc_len")) {
    c.doc_len_min = j["doc_len"].at(0).get<int>();
    c.doc_len_max = j["doc_len"].at(1).get<int>();
  }
  if (j.count("event_count_weights"))
    c.event_count_weights = j["event_count_weights"].get<std::vector<double>>();
  if (j.count("args_per_event")) {
    c.args_min = j["args_per_event"].at(0).get<int>();
    c.args_max = j["args_per_event"].at(1).get<int>();
  }
  if (j.count("arg_len")) {
    c.arg_len_min = j["arg_len"].at(0).get<int>();
    c.arg_len_max = j["arg_len"].at(1).get<int>();
  }
  if (j.count("arg_overlap_prob")) c.arg_overlap_prob = j["arg_overlap_prob"].get<double>();
  if (j.count("max_arg_distance")) c.max_arg_distance = j["max_arg_distance"].get<int>();
  if (j.count("types")) {
    for (const json& t : j["types"]) {
      GenConfig::TypeSpec spec;
      spec.type = t.at("type").get<std::string>();
      spec.template_text = t.at("template").get<std::string>();
      if (t.count("triggers")) spec.triggers = t["triggers"].get<std::vector<std::string>>();
      c.types.push_back(std::move(spec));
    }
  }
  return c;
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open gen config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return gen_config_from_json(buf.str());
}

}  // namespace argex
