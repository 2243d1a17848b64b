#include "argex/assembly.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"

namespace argex {

using nlohmann::json;

std::string Vocabulary::trigger_open(int i) { return "<t_" + std::to_string(i) + ">"; }
std::string Vocabulary::trigger_close(int i) { return "</t_" + std::to_string(i) + ">"; }
std::string Vocabulary::event_open(int i) { return "<e_" + std::to_string(i) + ">"; }
std::string Vocabulary::event_close(int i) { return "</e_" + std::to_string(i) + ">"; }

Vocabulary::Vocabulary() {
  add(start_token());
  add(unk_token());
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 1 : it->second;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens, int max_events) {
  Vocabulary v;
  if (tokens.size() < 2 || tokens[0] != start_token() || tokens[1] != unk_token())
    throw DataError("vocabulary token list must start with the reserved tokens");
  for (std::size_t i = 2; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != static_cast<int>(tokens.size()))
    throw DataError("vocabulary token list contains duplicates");
  v.max_events_ = max_events;
  return v;
}

namespace {
std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}
}  // namespace

Vocabulary Vocabulary::build(const Corpus& corpus, const TemplateRegistry& reg, int max_events) {
  Vocabulary v;
  int seen_max = 0;
  for (const Document& doc : corpus.docs)
    seen_max = std::max(seen_max, static_cast<int>(doc.events.size()));
  v.max_events_ = std::max(max_events, seen_max);
  for (int i = 0; i < v.max_events_; ++i) {
    v.add(trigger_open(i));
    v.add(trigger_close(i));
    v.add(event_open(i));
    v.add(event_close(i));
  }
  for (const auto& [type, tpl] : reg.all()) {
    for (const std::string& w : split_words(type)) v.add(w);
    for (const std::string& w : tpl.tokens) v.add(w);
  }
  for (const Document& doc : corpus.docs)
    for (const std::string& w : doc.tokens) v.add(w);
  return v;
}

MarkedContext mark_triggers(const Document& doc) {
  const int n_events = static_cast<int>(doc.events.size());
  std::vector<int> order(n_events);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&doc](int a, int b) {
    const Span& sa = doc.events[a].trigger;
    const Span& sb = doc.events[b].trigger;
    if (sa.start != sb.start) return sa.start < sb.start;
    return sa.end < sb.end;
  });
  for (int i = 1; i < n_events; ++i) {
    const Span& prev = doc.events[order[i - 1]].trigger;
    const Span& cur = doc.events[order[i]].trigger;
    if (prev.end > cur.start)
      throw DataError("doc '" + doc.doc_id + "': overlapping trigger spans cannot be marked");
  }

  MarkedContext out;
  out.event_order = order;
  out.orig_to_marked.resize(doc.tokens.size());
  int cursor = 0;
  for (int i = 0; i < n_events; ++i) {
    const Span& trig = doc.events[order[i]].trigger;
    for (; cursor < trig.start; ++cursor) {
      out.orig_to_marked[cursor] = static_cast<int>(out.tokens.size());
      out.tokens.push_back(doc.tokens[cursor]);
    }
    TriggerMark mark;
    mark.event = i;
    mark.open_pos = static_cast<int>(out.tokens.size());
    out.tokens.push_back(Vocabulary::trigger_open(i));
    for (; cursor < trig.end; ++cursor) {
      out.orig_to_marked[cursor] = static_cast<int>(out.tokens.size());
      out.tokens.push_back(doc.tokens[cursor]);
    }
    mark.close_pos = static_cast<int>(out.tokens.size());
    out.tokens.push_back(Vocabulary::trigger_close(i));
    out.triggers.push_back(mark);
  }
  for (; cursor < static_cast<int>(doc.tokens.size()); ++cursor) {
    out.orig_to_marked[cursor] = static_cast<int>(out.tokens.size());
    out.tokens.push_back(doc.tokens[cursor]);
  }
  return out;
}

Prompt build_prompt(const std::vector<std::string>& event_types, const TemplateRegistry& reg,
                    bool duplicate_same_type) {
  Prompt out;
  const int n_events = static_cast<int>(event_types.size());
  out.event_unit.assign(n_events, -1);

  // Decide the unit list: per event, or per distinct type in first-occurrence order.
  std::vector<std::string> unit_types;
  std::vector<std::vector<int>> unit_events;
  if (duplicate_same_type) {
    for (int e = 0; e < n_events; ++e) {
      out.event_unit[e] = e;
      unit_types.push_back(event_types[e]);
      unit_events.push_back({e});
    }
  } else {
    std::map<std::string, int> seen;
    for (int e = 0; e < n_events; ++e) {
      auto it = seen.find(event_types[e]);
      if (it == seen.end()) {
        const int u = static_cast<int>(unit_types.size());
        seen.emplace(event_types[e], u);
        unit_types.push_back(event_types[e]);
        unit_events.push_back({e});
        out.event_unit[e] = u;
      } else {
        unit_events[it->second].push_back(e);
        out.event_unit[e] = it->second;
      }
    }
  }

  for (std::size_t u = 0; u < unit_types.size(); ++u) {
    const Template& tpl = reg.get(unit_types[u]);
    PromptUnit unit;
    unit.event_type = unit_types[u];
    unit.events = unit_events[u];
    unit.lo = static_cast<int>(out.tokens.size());
    out.tokens.push_back(Vocabulary::event_open(static_cast<int>(u)));
    for (const std::string& w : split_words(unit_types[u])) out.tokens.push_back(w);
    out.tokens.push_back(Vocabulary::event_close(static_cast<int>(u)));
    const int tpl_base = static_cast<int>(out.tokens.size());
    for (const std::string& w : tpl.tokens) out.tokens.push_back(w);
    unit.hi = static_cast<int>(out.tokens.size());
    for (const Template::Slot& s : tpl.slots) {
      PromptSlot slot;
      slot.unit = static_cast<int>(u);
      slot.lo = tpl_base + s.lo;
      slot.hi = tpl_base + s.hi;
      slot.role = s.role;
      out.slots.push_back(std::move(slot));
    }
    out.units.push_back(std::move(unit));
  }
  return out;
}

std::vector<std::uint8_t> AssembledInput::span_position_mask() const {
  std::vector<std::uint8_t> mask(tokens.size(), 0);
  mask[0] = 1;
  const int last = std::min(context_hi, static_cast<int>(tokens.size()) - 1);
  for (int p = context_lo; p <= last; ++p) mask[p] = 1;
  return mask;
}

Span AssembledInput::to_doc_span(int lo, int hi) const {
  if (lo == 0 && hi == 0) return {0, 0};
  if (!(context_lo <= lo && lo < hi && hi <= context_hi))
    throw std::invalid_argument("span outside context region");
  return {words_before[lo], words_before[hi]};
}

std::string AssembledInput::dump_json() const {
  json j;
  j["tokens"] = tokens;
  j["context"] = {{"lo", context_lo}, {"hi", context_hi}};
  json trigs = json::array();
  for (const TriggerMark& t : triggers)
    trigs.push_back({{"event", t.event}, {"open", t.open_pos}, {"close", t.close_pos}});
  j["triggers"] = trigs;
  json units_j = json::array();
  for (const PromptUnit& u : units)
    units_j.push_back({{"lo", u.lo}, {"hi", u.hi}, {"event_type", u.event_type}, {"events", u.events}});
  j["units"] = units_j;
  json slots_j = json::array();
  for (const PromptSlot& s : slots)
    slots_j.push_back({{"unit", s.unit}, {"lo", s.lo}, {"hi", s.hi}, {"role", s.role}});
  j["slots"] = slots_j;
  j["event_unit"] = event_unit;
  j["event_ids"] = event_ids;
  json gold_j = json::array();
  for (const GoldSpan& g : gold)
    gold_j.push_back({{"event", g.event}, {"role", g.role}, {"lo", g.lo}, {"hi", g.hi}});
  j["gold"] = gold_j;
  return j.dump(2);
}

AssembledInput assemble(const Document& doc, const TemplateRegistry& reg, const Vocabulary& vocab,
                        bool duplicate_same_type) {
  MarkedContext marked = mark_triggers(doc);
  const int n_events = static_cast<int>(doc.events.size());
  if (n_events > vocab.max_events())
    throw DataError("doc '" + doc.doc_id + "' has more events than the vocabulary supports");

  std::vector<std::string> types_in_order(n_events);
  for (int e = 0; e < n_events; ++e) types_in_order[e] = doc.events[marked.event_order[e]].event_type;
  Prompt prompt = build_prompt(types_in_order, reg, duplicate_same_type);

  AssembledInput out;
  out.tokens.push_back(Vocabulary::start_token());
  out.tokens.insert(out.tokens.end(), marked.tokens.begin(), marked.tokens.end());
  out.context_lo = 1;
  out.context_hi = 1 + static_cast<int>(marked.tokens.size());
  const int prompt_base = out.context_hi;
  out.tokens.insert(out.tokens.end(), prompt.tokens.begin(), prompt.tokens.end());

  out.token_ids.reserve(out.tokens.size());
  for (const std::string& t : out.tokens) out.token_ids.push_back(vocab.id(t));

  for (const TriggerMark& t : marked.triggers)
    out.triggers.push_back({t.event, t.open_pos + 1, t.close_pos + 1});
  for (const PromptUnit& u : prompt.units) {
    PromptUnit shifted = u;
    shifted.lo += prompt_base;
    shifted.hi += prompt_base;
    out.units.push_back(std::move(shifted));
  }
  for (const PromptSlot& s : prompt.slots) {
    PromptSlot shifted = s;
    shifted.lo += prompt_base;
    shifted.hi += prompt_base;
    out.slots.push_back(std::move(shifted));
  }
  out.event_unit = prompt.event_unit;
  for (int e = 0; e < n_events; ++e) {
    const Event& ev = doc.events[marked.event_order[e]];
    out.event_ids.push_back(ev.event_id);
    out.event_types.push_back(ev.event_type);
    for (const Argument& arg : ev.arguments) {
      GoldSpan g;
      g.event = e;
      g.role = arg.role;
      g.lo = 1 + marked.orig_to_marked[arg.span.start];
      g.hi = 1 + marked.orig_to_marked[arg.span.end - 1] + 1;
      out.gold.push_back(std::move(g));
    }
  }

  out.words_before.assign(out.tokens.size() + 1, 0);
  int words = 0;
  std::vector<std::uint8_t> is_word(out.tokens.size(), 0);
  for (int p = out.context_lo; p < out.context_hi; ++p) is_word[p] = 1;
  for (const TriggerMark& t : out.triggers) {
    is_word[t.open_pos] = 0;
    is_word[t.close_pos] = 0;
  }
  for (std::size_t p = 0; p < out.tokens.size(); ++p) {
    out.words_before[p] = words;
    if (is_word[p]) ++words;
  }
  out.words_before[out.tokens.size()] = words;

  out.global_pos.resize(out.tokens.size());
  std::iota(out.global_pos.begin(), out.global_pos.end(), 0);
  return out;
}

bool DependencyMatrix::any_non_na() const {
  for (Dep d : cells_)
    if (d != Dep::NA) return true;
  return false;
}

DependencyMatrix::Counts DependencyMatrix::counts() const {
  Counts c;
  for (Dep d : cells_) {
    if (d == Dep::Intra) ++c.intra;
    else if (d == Dep::Inter) ++c.inter;
    else ++c.na;
  }
  return c;
}

DependencyMatrix build_dependency_matrix(const AssembledInput& inp) {
  DependencyMatrix D(inp.size());
  const int n_units = static_cast<int>(inp.units.size());

  auto unit_serves = [&inp](int u, int event) {
    const auto& evs = inp.units[u].events;
    return std::find(evs.begin(), evs.end(), event) != evs.end();
  };

  // prompt <-> prompt
  for (int u = 0; u < n_units; ++u) {
    for (int v = 0; v < n_units; ++v) {
      const Dep d = (u == v) ? Dep::Intra : Dep::Inter;
      for (int i = inp.units[u].lo; i < inp.units[u].hi; ++i)
        for (int j = inp.units[v].lo; j < inp.units[v].hi; ++j) D.set(i, j, d);
    }
  }
  // trigger <-> prompt, both directions
  for (const TriggerMark& t : inp.triggers) {
    for (int u = 0; u < n_units; ++u) {
      const Dep d = unit_serves(u, t.event) ? Dep::Intra : Dep::Inter;
      for (int i = t.region_lo(); i < t.region_hi(); ++i) {
        for (int j = inp.units[u].lo; j < inp.units[u].hi; ++j) {
          D.set(i, j, d);
          D.set(j, i, d);
        }
      }
    }
  }
  return D;
}

int WindowPlan::n_passes() const {
  int n = 0;
  for (const Window& w : windows) n += static_cast<int>(w.passes.size());
  return n;
}

std::vector<const AssembledInput*> WindowPlan::all_passes() const {
  std::vector<const AssembledInput*> out;
  for (const Window& w : windows)
    for (const AssembledInput& p : w.passes) out.push_back(&p);
  return out;
}

namespace {

// Builds the model input for one (window, prompt-segment) pass by slicing
// the full assembly; marker tokens keep their global identities.
AssembledInput build_pass(const AssembledInput& inp, int ctx_lo, int ctx_hi,
                          const std::vector<int>& window_events,
                          const std::vector<int>& segment_units, int* dropped_gold) {
  AssembledInput pass;
  pass.event_ids = inp.event_ids;
  pass.event_types = inp.event_types;
  pass.event_unit.assign(inp.event_unit.size(), -1);

  pass.tokens.push_back(inp.tokens[0]);
  pass.token_ids.push_back(inp.token_ids[0]);
  pass.global_pos.push_back(inp.global_pos[0]);
  pass.context_lo = 1;
  for (int p = ctx_lo; p < ctx_hi; ++p) {
    pass.tokens.push_back(inp.tokens[p]);
    pass.token_ids.push_back(inp.token_ids[p]);
    pass.global_pos.push_back(inp.global_pos[p]);
  }
  pass.context_hi = static_cast<int>(pass.tokens.size());

  auto in_window = [&](int e) {
    return std::find(window_events.begin(), window_events.end(), e) != window_events.end();
  };

  const int shift = pass.context_lo - ctx_lo;
  for (const TriggerMark& t : inp.triggers) {
    if (!in_window(t.event)) continue;
    if (t.open_pos < ctx_lo || t.open_pos >= ctx_hi) continue;
    TriggerMark local;
    local.event = t.event;
    local.open_pos = t.open_pos + shift;
    local.close_pos = std::min(t.close_pos, ctx_hi - 1) + shift;
    pass.triggers.push_back(local);
  }

  for (int u : segment_units) {
    const PromptUnit& unit = inp.units[u];
    PromptUnit local;
    local.event_type = unit.event_type;
    local.lo = static_cast<int>(pass.tokens.size());
    for (int p = unit.lo; p < unit.hi; ++p) {
      pass.tokens.push_back(inp.tokens[p]);
      pass.token_ids.push_back(inp.token_ids[p]);
      pass.global_pos.push_back(inp.global_pos[p]);
    }
    local.hi = static_cast<int>(pass.tokens.size());
    const int local_idx = static_cast<int>(pass.units.size());
    for (int e : unit.events) {
      if (!in_window(e)) continue;
      local.events.push_back(e);
      pass.event_unit[e] = local_idx;
    }
    const int unit_shift = local.lo - unit.lo;
    for (const PromptSlot& s : inp.slots) {
      if (s.unit != u) continue;
      PromptSlot slot;
      slot.unit = local_idx;
      slot.lo = s.lo + unit_shift;
      slot.hi = s.hi + unit_shift;
      slot.role = s.role;
      pass.slots.push_back(std::move(slot));
    }
    pass.units.push_back(std::move(local));
  }

  for (const GoldSpan& g : inp.gold) {
    if (!in_window(g.event)) continue;
    if (g.lo >= ctx_lo && g.hi <= ctx_hi) {
      pass.gold.push_back({g.event, g.role, g.lo + shift, g.hi + shift});
    } else if (dropped_gold) {
      ++*dropped_gold;
    }
  }

  // Boundary p in [1, context_hi] corresponds to global boundary
  // ctx_lo + (p - 1); this keeps to_doc_span exact for spans ending at the
  // window edge. Prompt boundaries are never used for span mapping.
  pass.words_before.assign(pass.tokens.size() + 1, 0);
  for (std::size_t p = 1; p <= pass.tokens.size(); ++p) {
    const int boundary = std::min(ctx_lo + static_cast<int>(p) - 1, ctx_hi);
    pass.words_before[p] = inp.words_before[boundary];
  }
  return pass;
}

}  // namespace

WindowPlan plan_windows(const AssembledInput& inp, int d1, int d2, int max_len) {
  if (d1 < 1 || d2 < 1 || d1 + d2 > max_len)
    throw DataError("invalid window sizes: need d1 >= 1, d2 >= 1, d1 + d2 <= max_len");
  WindowPlan plan;
  plan.total_len = inp.size();

  if (inp.size() <= max_len) {
    plan.single = true;
    WindowPlan::Window w;
    w.context_lo = inp.context_lo;
    w.context_hi = inp.context_hi;
    for (int e = 0; e < inp.n_events(); ++e) w.events.push_back(e);
    w.passes.push_back(inp);
    plan.windows.push_back(std::move(w));
    return plan;
  }

  // Overlapping context windows, stride d1/2.
  const int stride = std::max(1, d1 / 2);
  std::vector<std::pair<int, int>> ranges;
  int lo = inp.context_lo;
  while (true) {
    const int hi = std::min(lo + d1, inp.context_hi);
    ranges.emplace_back(lo, hi);
    if (hi >= inp.context_hi) break;
    lo += stride;
  }

  // Each event goes to the first window that fully contains its trigger
  // region, falling back to the first containing the opening marker.
  std::vector<int> assigned(inp.n_events(), -1);
  for (const TriggerMark& t : inp.triggers) {
    for (std::size_t w = 0; w < ranges.size(); ++w) {
      if (ranges[w].first <= t.region_lo() && t.region_hi() <= ranges[w].second) {
        assigned[t.event] = static_cast<int>(w);
        break;
      }
    }
    if (assigned[t.event] < 0) {
      for (std::size_t w = 0; w < ranges.size(); ++w) {
        if (ranges[w].first <= t.open_pos && t.open_pos < ranges[w].second) {
          assigned[t.event] = static_cast<int>(w);
          break;
        }
      }
    }
  }

  for (std::size_t w = 0; w < ranges.size(); ++w) {
    WindowPlan::Window win;
    win.context_lo = ranges[w].first;
    win.context_hi = ranges[w].second;
    for (int e = 0; e < inp.n_events(); ++e)
      if (assigned[e] == static_cast<int>(w)) win.events.push_back(e);

    // Units serving at least one event of this window, in global order.
    std::vector<int> units;
    for (std::size_t u = 0; u < inp.units.size(); ++u) {
      for (int e : inp.units[u].events) {
        if (assigned[e] == static_cast<int>(w)) {
          units.push_back(static_cast<int>(u));
          break;
        }
      }
    }

    int prompt_len = 0;
    for (int u : units) prompt_len += inp.units[u].hi - inp.units[u].lo;
    const int ctx_len = win.context_hi - win.context_lo;

    std::vector<std::vector<int>> segments;
    if (1 + ctx_len + prompt_len <= max_len) {
      segments.push_back(units);
    } else {
      // A segment must respect d2 and still fit next to this window's
      // context inside max_len (the sequence-start token costs one slot).
      const int cap = std::min(d2, max_len - 1 - ctx_len);
      std::vector<int> cur;
      int cur_len = 0;
      for (int u : units) {
        const int ulen = inp.units[u].hi - inp.units[u].lo;
        if (ulen > cap)
          throw DataError("prompt unit longer than the window segment capacity");
        if (cur_len + ulen > cap && !cur.empty()) {
          segments.push_back(cur);
          cur.clear();
          cur_len = 0;
        }
        cur.push_back(u);
        cur_len += ulen;
      }
      if (!cur.empty()) segments.push_back(cur);
    }
    if (segments.empty()) segments.push_back({});  // window with no events still encodes context

    for (const auto& seg : segments)
      win.passes.push_back(
          build_pass(inp, win.context_lo, win.context_hi, win.events, seg, &plan.dropped_gold));
    plan.windows.push_back(std::move(win));
  }
  return plan;
}

nn::Tensor merge_windows(const WindowPlan& plan, const std::vector<nn::Tensor>& per_pass) {
  const auto passes = plan.all_passes();
  if (per_pass.size() != passes.size())
    throw std::invalid_argument("merge_windows: matrix count does not match plan passes");
  int dim = -1;
  std::size_t k = 0;
  for (const AssembledInput* p : passes) {
    const nn::Tensor& m = per_pass[k++];
    if (m.rows() != p->size())
      throw std::invalid_argument("merge_windows: matrix rows do not match pass length");
    if (dim < 0) dim = m.cols();
    if (m.cols() != dim) throw std::invalid_argument("merge_windows: inconsistent matrix width");
  }

  nn::Tensor out({plan.total_len, dim});
  std::vector<int> window_hits(plan.total_len, 0);
  k = 0;
  for (const WindowPlan::Window& win : plan.windows) {
    // Stage 1: average the window's prompt-segment passes position-wise.
    nn::Tensor wsum({plan.total_len, dim});
    std::vector<int> hits(plan.total_len, 0);
    for (const AssembledInput& pass : win.passes) {
      const nn::Tensor& m = per_pass[k++];
      for (int r = 0; r < pass.size(); ++r) {
        const int g = pass.global_pos[r];
        ++hits[g];
        for (int c = 0; c < dim; ++c) wsum.at(g, c) += m.at(r, c);
      }
    }
    // Stage 2: accumulate window means into the global average.
    for (int g = 0; g < plan.total_len; ++g) {
      if (hits[g] == 0) continue;
      ++window_hits[g];
      const double inv = 1.0 / hits[g];
      for (int c = 0; c < dim; ++c) out.at(g, c) += wsum.at(g, c) * inv;
    }
  }
  for (int g = 0; g < plan.total_len; ++g) {
    if (window_hits[g] == 0)
      throw std::invalid_argument("merge_windows: position not covered by any window");
    const double inv = 1.0 / window_hits[g];
    for (int c = 0; c < dim; ++c) out.at(g, c) *= inv;
  }
  return out;
}

}  // namespace argex
