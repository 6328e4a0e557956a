#include "leakprobe/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "leakprobe/error.hpp"
#include "leakprobe/rng.hpp"
#include "leakprobe/text.hpp"

namespace leakprobe::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_all(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void check_encoding(std::string_view buffer) {
  std::size_t line = 1;
  std::size_t start = 0;
  while (start <= buffer.size()) {
    std::size_t nl = buffer.find('\n', start);
    if (nl == std::string_view::npos) nl = buffer.size();
    if (!text::is_valid_utf8(buffer.substr(start, nl - start))) {
      throw Error(ErrorKind::InvalidEncoding, "input is not valid UTF-8", line);
    }
    start = nl + 1;
    ++line;
  }
}

std::string default_id(std::size_t position) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "email-%06zu", position);
  return buf;
}

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC-4180: fields separated by commas, records by CRLF or LF, quoted fields
// may hold commas, line breaks and doubled quotes. Blank lines are skipped.
std::vector<CsvRow> split_csv(std::string_view buf) {
  std::vector<CsvRow> rows;
  std::size_t i = 0;
  std::size_t line = 1;
  const std::size_t n = buf.size();
  while (i < n) {
    if (buf[i] == '\n' || (buf[i] == '\r' && i + 1 < n && buf[i + 1] == '\n')) {
      i += buf[i] == '\r' ? 2 : 1;
      ++line;
      continue;
    }
    CsvRow row;
    row.line = line;
    bool end_of_record = false;
    while (!end_of_record) {
      std::string field;
      if (i < n && buf[i] == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          if (buf[i] == '"') {
            if (i + 1 < n && buf[i + 1] == '"') {
              field.push_back('"');
              i += 2;
            } else {
              ++i;
              closed = true;
              break;
            }
          } else {
            if (buf[i] == '\n') ++line;
            field.push_back(buf[i++]);
          }
        }
        if (!closed) throw Error(ErrorKind::MalformedRow, "unterminated quoted field", row.line);
        if (i < n && buf[i] != ',' && buf[i] != '\n' && buf[i] != '\r') {
          throw Error(ErrorKind::MalformedRow, "unexpected character after closing quote", line);
        }
      } else {
        while (i < n && buf[i] != ',' && buf[i] != '\n' &&
               !(buf[i] == '\r' && i + 1 < n && buf[i + 1] == '\n')) {
          if (buf[i] == '"') throw Error(ErrorKind::MalformedRow, "stray quote in unquoted field", line);
          field.push_back(buf[i++]);
        }
      }
      row.fields.push_back(std::move(field));
      if (i < n && buf[i] == ',') {
        ++i;
      } else {
        end_of_record = true;
        if (i < n) {
          i += buf[i] == '\r' ? 2 : 1;
          ++line;
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EmailRecord> parse_csv(std::string_view buf) {
  auto rows = split_csv(buf);
  std::vector<EmailRecord> out;
  if (rows.empty()) return out;

  const CsvRow& header = rows.front();
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    for (std::size_t c = 0; c < header.fields.size(); ++c) {
      if (text::to_lower_ascii(text::trim(header.fields[c])) == name) return static_cast<std::ptrdiff_t>(c);
    }
    return -1;
  };
  const auto folder_col = column("folder");
  const auto subject_col = column("subject");
  const auto body_col = column("body");
  const auto id_col = column("id");
  for (auto [col, name] : {std::pair{folder_col, "folder"}, {subject_col, "subject"}, {body_col, "body"}}) {
    if (col < 0) throw Error(ErrorKind::MissingField, std::string("header lacks column '") + name + "'", header.line);
  }

  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() > header.fields.size()) {
      throw Error(ErrorKind::MalformedRow, "more fields than header columns", row.line);
    }
    auto field = [&](std::ptrdiff_t col, const char* name) -> const std::string& {
      if (static_cast<std::size_t>(col) >= row.fields.size()) {
        throw Error(ErrorKind::MissingField, std::string("row lacks '") + name + "'", row.line);
      }
      return row.fields[static_cast<std::size_t>(col)];
    };
    std::string id = id_col >= 0 ? field(id_col, "id") : default_id(r);
    if (id.empty()) id = default_id(r);
    out.push_back(make_record(std::move(id), field(folder_col, "folder"), field(subject_col, "subject"),
                              field(body_col, "body")));
  }
  return out;
}

std::vector<EmailRecord> parse_jsonl(std::string_view buf) {
  std::vector<EmailRecord> out;
  std::size_t line = 0;
  std::size_t start = 0;
  std::size_t position = 0;
  while (start < buf.size()) {
    std::size_t nl = buf.find('\n', start);
    if (nl == std::string_view::npos) nl = buf.size();
    const std::string_view raw = buf.substr(start, nl - start);
    start = nl + 1;
    ++line;
    if (text::trim(raw).empty()) continue;
    json obj;
    try {
      obj = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::MalformedRow, e.what(), line);
    }
    if (!obj.is_object()) throw Error(ErrorKind::MalformedRow, "line is not a JSON object", line);
    auto get = [&](const char* key, bool required) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) throw Error(ErrorKind::MissingField, std::string("missing key '") + key + "'", line);
        return {};
      }
      if (!it->is_string()) throw Error(ErrorKind::MalformedRow, std::string("key '") + key + "' is not a string", line);
      return it->get<std::string>();
    };
    ++position;
    std::string id = get("id", false);
    if (id.empty()) id = default_id(position);
    out.push_back(make_record(std::move(id), get("folder", true), get("subject", true), get("body", true)));
  }
  return out;
}

void check_unique_ids(const std::vector<EmailRecord>& records) {
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen.insert(records[i].id).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate record id '" + records[i].id + "'", i + 1);
    }
  }
}

}  // namespace

EmailRecord make_record(std::string id, std::string folder, std::string subject, std::string body) {
  EmailRecord r;
  r.id = std::move(id);
  r.folder = std::move(folder);
  r.subject = std::move(subject);
  r.body = std::move(body);
  r.word_count = text::count_words(r.body);
  r.sentence_count = text::count_sentences(r.body);
  r.empty_body = text::trim(r.body).empty();
  return r;
}

std::vector<EmailRecord> parse_email_corpus(std::istream& source, InputFormat format) {
  const std::string buf = read_all(source);
  check_encoding(buf);
  auto records = format == InputFormat::Csv ? parse_csv(buf) : parse_jsonl(buf);
  check_unique_ids(records);
  return records;
}

std::vector<EmailRecord> read_records_jsonl(std::istream& source) {
  return parse_email_corpus(source, InputFormat::Jsonl);
}

void write_records_jsonl(const std::vector<EmailRecord>& records, std::ostream& sink) {
  for (const auto& r : records) {
    ordered_json obj{{"id", r.id}, {"folder", r.folder}, {"subject", r.subject}, {"body", r.body}};
    sink << obj.dump() << '\n';
  }
  if (!sink) throw Error(ErrorKind::Io, "failed writing records");
}

// ---------------------------------------------------------------------------

const std::vector<std::pair<std::string, std::vector<std::string>>>& default_exclusion_keywords() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> lists = {
      {"notification",
       {"this is an automated", "automatically generated", "auto-generated", "do not reply",
        "no-reply", "noreply", "automatic notification"}},
      {"bulletin", {"bulletin", "newsletter", "press release", "daily digest"}},
      {"promotion",
       {"unsubscribe", "special offer", "limited time offer", "click here", "promo code",
        "free trial"}},
      {"customer_service",
       {"customer service", "thank you for contacting", "ticket number", "case number",
        "support request"}},
  };
  return lists;
}

double non_alphabetic_ratio(std::string_view body) {
  std::size_t total = 0;
  std::size_t non_alpha = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const auto c = static_cast<unsigned char>(body[i]);
    if ((c & 0xC0) == 0x80 || text::is_space(c)) continue;
    ++total;
    if (c < 0x80 && !text::is_alpha(c)) ++non_alpha;
  }
  return total == 0 ? 0.0 : static_cast<double>(non_alpha) / static_cast<double>(total);
}

FilterPolicy FilterPolicy::thresholds_only() { return FilterPolicy{}; }

FilterPolicy FilterPolicy::with_default_heuristics() {
  FilterPolicy p;
  for (const auto& [name, keywords] : default_exclusion_keywords()) {
    p.exclusion_heuristics.push_back({name, [keywords](const EmailRecord& r) {
                                        for (const auto& k : keywords) {
                                          if (text::contains_ci(r.subject, k) || text::contains_ci(r.body, k)) {
                                            return true;
                                          }
                                        }
                                        return false;
                                      }});
  }
  p.low_natural_language = {"low_natural_language", [](const EmailRecord& r) {
                              return non_alphabetic_ratio(r.body) >= kLowNaturalLanguageRatio;
                            }};
  return p;
}

void FilterPolicy::validate() const {
  if (min_words == 0 || min_words > max_words) {
    throw Error(ErrorKind::InvalidPolicy, "require 0 < min_words <= max_words");
  }
  if (min_sentences < 1) throw Error(ErrorKind::InvalidPolicy, "require min_sentences >= 1");
  for (const auto& h : exclusion_heuristics) {
    if (h.name.empty() || !h.matches) throw Error(ErrorKind::InvalidPolicy, "heuristic needs a name and predicate");
  }
}

FilterResult apply_filter_policy(const std::vector<EmailRecord>& records, const FilterPolicy& policy) {
  policy.validate();
  FilterResult result;
  for (const auto& r : records) {
    std::string reason;
    if (r.sentence_count < policy.min_sentences) {
      reason = "min_sentences";
    } else if (r.word_count < policy.min_words) {
      reason = "min_words";
    } else if (r.word_count > policy.max_words) {
      reason = "max_words";
    } else {
      for (const auto& h : policy.exclusion_heuristics) {
        if (h.matches(r)) {
          reason = h.name;
          break;
        }
      }
      if (reason.empty() && policy.low_natural_language.matches && policy.low_natural_language.matches(r)) {
        reason = policy.low_natural_language.name;
      }
    }
    if (reason.empty()) {
      result.kept.push_back(r);
    } else {
      result.rejected.push_back({r, std::move(reason)});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

CorpusSplit split_train_ood(const std::vector<EmailRecord>& records, std::size_t train_count,
                            std::uint64_t seed) {
  if (train_count > records.size()) {
    throw Error(ErrorKind::InsufficientRecords, "train_count " + std::to_string(train_count) +
                                                    " exceeds " + std::to_string(records.size()) + " records");
  }
  check_unique_ids(records);
  std::vector<EmailRecord> order = records;
  std::sort(order.begin(), order.end(), [](const EmailRecord& a, const EmailRecord& b) { return a.id < b.id; });
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  CorpusSplit split;
  split.seed = seed;
  split.train.assign(std::make_move_iterator(order.begin()),
                     std::make_move_iterator(order.begin() + static_cast<std::ptrdiff_t>(train_count)));
  split.ood.assign(std::make_move_iterator(order.begin() + static_cast<std::ptrdiff_t>(train_count)),
                   std::make_move_iterator(order.end()));
  return split;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Task task) {
  return task == Task::Classification ? "classification" : "autocomplete";
}

Task parse_task(std::string_view name) {
  const auto lower = text::to_lower_ascii(name);
  if (lower == "classification") return Task::Classification;
  if (lower == "autocomplete") return Task::Autocomplete;
  throw Error(ErrorKind::InvalidArgument, "unknown task '" + std::string(name) + "'");
}

std::vector<FinetuneExample> build_classification_examples(const std::vector<EmailRecord>& records,
                                                           std::string_view separator) {
  if (separator.empty()) throw Error(ErrorKind::InvalidArgument, "separator must be non-empty");
  std::vector<FinetuneExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.folder.empty()) throw Error(ErrorKind::MissingLabel, "record '" + r.id + "' has no folder label");
    out.push_back({Task::Classification, r.body + std::string(separator), " " + r.folder, r.id});
  }
  return out;
}

std::string autocomplete_prompt(std::string_view subject) {
  return std::string(kAutocompletePrefix) + std::string(subject);
}

std::vector<FinetuneExample> build_autocomplete_examples(const std::vector<EmailRecord>& records) {
  std::vector<FinetuneExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.subject.empty()) throw Error(ErrorKind::MissingSubject, "record '" + r.id + "' has no subject");
    out.push_back({Task::Autocomplete, autocomplete_prompt(r.subject), " " + r.body, r.id});
  }
  return out;
}

std::size_t export_finetune_file(const std::vector<FinetuneExample>& examples, std::ostream& sink) {
  if (examples.empty()) throw Error(ErrorKind::NoExamples, "no examples");
  for (const auto& e : examples) {
    ordered_json obj{{"prompt", e.prompt}, {"completion", e.completion}};
    sink << obj.dump() << '\n';
    if (!sink) throw Error(ErrorKind::Io, "failed writing fine-tune file");
  }
  sink.flush();
  if (!sink) throw Error(ErrorKind::Io, "failed flushing fine-tune file");
  return examples.size();
}

std::vector<std::pair<std::string, std::string>> parse_finetune_file(std::istream& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(source, line)) {
    ++n;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::MalformedRow, e.what(), n);
    }
    if (!obj.is_object() || obj.size() != 2 || !obj.contains("prompt") || !obj.contains("completion")) {
      throw Error(ErrorKind::MalformedRow, "expected exactly the keys prompt and completion", n);
    }
    out.emplace_back(obj["prompt"].get<std::string>(), obj["completion"].get<std::string>());
  }
  return out;
}

void write_examples_jsonl(const std::vector<FinetuneExample>& examples, std::ostream& sink) {
  for (const auto& e : examples) {
    ordered_json obj{{"task", to_string(e.task)},
                     {"source_id", e.source_id},
                     {"prompt", e.prompt},
                     {"completion", e.completion}};
    sink << obj.dump() << '\n';
  }
  if (!sink) throw Error(ErrorKind::Io, "failed writing examples");
}

std::vector<FinetuneExample> read_examples_jsonl(std::istream& source) {
  std::vector<FinetuneExample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(source, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const json obj = json::parse(line);
      out.push_back({parse_task(obj.at("task").get<std::string>()), obj.at("prompt").get<std::string>(),
                     obj.at("completion").get<std::string>(), obj.at("source_id").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedRow, e.what(), n);
    }
  }
  return out;
}

}  // namespace leakprobe::corpus
