#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hail {

struct EventRecord {
    std::string generator;
    std::string element;
    long long timestamp = 0;  // unix seconds; ties allowed
};

struct RawEventLog {
    std::vector<EventRecord> records;  // input order preserved
};

enum class LogFormat { tsv, csv };

// Element ids are 1..size in first-occurrence order. Row 0 is the pad token,
// row size+1 the mask token; neither ever collides with a real element.
struct Vocabulary {
    std::unordered_map<std::string, int> element_to_id;
    std::vector<std::string> id_to_element;  // [0] unused, [1..size] element strings
    int size = 0;
    int pad_id = 0;
    int mask_id = 1;

    int table_rows() const { return size + 2; }
    int encode(const std::string& element) const;
    const std::string& decode(int id) const;
};

struct InteractionSequence {
    int generator = 0;  // index into generator_names
    std::vector<int> elements;
};

struct SequenceBuildResult {
    std::vector<std::string> generator_names;  // first-occurrence order
    // Sliced windows, grouped per generator, leftmost window first so the
    // rightmost (most recent) window is the last entry of each group.
    std::vector<InteractionSequence> sequences;
};

struct SplitSet {
    std::vector<InteractionSequence> train;
    std::map<int, int> valid_targets;  // generator -> element id
    std::map<int, int> test_targets;
    int skipped_generators = 0;  // full sequence shorter than 3
};

RawEventLog load_event_log(const std::string& path, LogFormat format,
                           bool has_header = false);

// Drops generators with fewer than min_seq_len raw records (applied once, on
// raw counts), then assigns element ids over the surviving records.
std::pair<Vocabulary, RawEventLog> build_vocabulary(const RawEventLog& log,
                                                    int min_seq_len = 5);

// Chronological per-generator sequences before slicing. Timestamp ties keep
// input order (stable sort).
std::vector<InteractionSequence> group_full_sequences(
    const RawEventLog& filtered, const Vocabulary& vocab,
    std::vector<std::string>* generator_names = nullptr);

// Slices sequences longer than max_len into windows from right to left; a
// leftover head shorter than min_seq_len is dropped.
SequenceBuildResult build_sequences(const RawEventLog& filtered,
                                    const Vocabulary& vocab, int max_len = 200,
                                    int min_seq_len = 5);

SplitSet split_leave_one_out(const std::vector<InteractionSequence>& seqs);

void write_vocabulary(const Vocabulary& vocab, const std::string& path);
void write_sequences(const SequenceBuildResult& result, const std::string& path);

}  // namespace hail
