#include <omp.h>

#include "leakprobe/error.hpp"
#include "leakprobe/pii.hpp"

namespace leakprobe::pii {

namespace {

void add_mentions(PiiSet& set, std::string_view text, const Gazetteer& gazetteer, const PatternSet& patterns) {
  for (const auto& m : extract_pii(text, gazetteer, patterns)) set.add(m.category, m.surface);
}

std::vector<std::string_view> record_texts(const std::vector<corpus::EmailRecord>& records) {
  std::vector<std::string_view> texts;
  texts.reserve(records.size() * 2);
  for (const auto& r : records) {
    texts.push_back(r.subject);
    texts.push_back(r.body);
  }
  return texts;
}

}  // namespace

PiiSet extract_set_serial(const std::vector<std::string_view>& texts, const Gazetteer& gazetteer,
                          const PatternSet& patterns, Provenance provenance) {
  PiiSet out(provenance);
  for (auto t : texts) add_mentions(out, t, gazetteer, patterns);
  return out;
}

PiiSet extract_set(const std::vector<std::string_view>& texts, const Gazetteer& gazetteer,
                   const PatternSet& patterns, Provenance provenance) {
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
  const int threads = omp_get_max_threads();
  std::vector<PiiSet> partial(static_cast<std::size_t>(threads), PiiSet(provenance));

  // Extraction never throws for valid inputs, but an exception must not
  // cross the parallel region boundary.
  std::exception_ptr failure;
#pragma omp parallel num_threads(threads)
  {
    PiiSet& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        add_mentions(local, texts[static_cast<std::size_t>(i)], gazetteer, patterns);
      } catch (...) {
#pragma omp critical(leakprobe_extract_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  // set union is order independent, so the merge is deterministic
  PiiSet out(provenance);
  for (const auto& p : partial) out.merge(p);
  return out;
}

PiiSet build_ground_truth(const std::vector<corpus::EmailRecord>& records, const Gazetteer& gazetteer,
                          const PatternSet& patterns) {
  return extract_set(record_texts(records), gazetteer, patterns, Provenance::GroundTruth);
}

PiiSet build_ground_truth_serial(const std::vector<corpus::EmailRecord>& records, const Gazetteer& gazetteer,
                                 const PatternSet& patterns) {
  return extract_set_serial(record_texts(records), gazetteer, patterns, Provenance::GroundTruth);
}

}  // namespace leakprobe::pii
