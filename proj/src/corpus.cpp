#include "hail/corpus.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "hail/errors.hpp"

namespace hail {

int Vocabulary::encode(const std::string& element) const {
    auto it = element_to_id.find(element);
    if (it == element_to_id.end())
        throw DataError("unknown element '" + element + "'");
    return it->second;
}

const std::string& Vocabulary::decode(int id) const {
    if (id < 1 || id > size)
        throw DataError("element id " + std::to_string(id) + " out of range 1.." +
                        std::to_string(size));
    return id_to_element[static_cast<std::size_t>(id)];
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

RawEventLog load_event_log(const std::string& path, LogFormat format,
                           bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open event log: " + path);
    const char sep = format == LogFormat::tsv ? '\t' : ',';

    RawEventLog log;
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (has_header && line_no == 1) continue;

        auto fields = split_fields(line, sep);
        if (fields.size() < 3)
            throw DataError("parse error at line " + std::to_string(line_no) +
                            ": expected generator, element, timestamp");
        char* end = nullptr;
        const long long ts = std::strtoll(fields[2].c_str(), &end, 10);
        if (end == fields[2].c_str() || *end != '\0')
            throw DataError("parse error at line " + std::to_string(line_no) +
                            ": bad timestamp '" + fields[2] + "'");
        log.records.push_back({std::move(fields[0]), std::move(fields[1]), ts});
    }
    if (in.bad()) throw DataError("I/O error while reading " + path);
    return log;
}

std::pair<Vocabulary, RawEventLog> build_vocabulary(const RawEventLog& log,
                                                    int min_seq_len) {
    if (min_seq_len < 1) throw ContractError("min_seq_len must be >= 1");

    std::unordered_map<std::string, int> counts;
    for (const auto& r : log.records) ++counts[r.generator];

    RawEventLog filtered;
    filtered.records.reserve(log.records.size());
    for (const auto& r : log.records)
        if (counts[r.generator] >= min_seq_len) filtered.records.push_back(r);
    if (filtered.records.empty())
        throw DataError("empty corpus: every generator has fewer than " +
                        std::to_string(min_seq_len) + " records");

    Vocabulary vocab;
    vocab.id_to_element.push_back("");  // pad slot
    for (const auto& r : filtered.records) {
        auto [it, inserted] = vocab.element_to_id.try_emplace(
            r.element, static_cast<int>(vocab.id_to_element.size()));
        if (inserted) vocab.id_to_element.push_back(r.element);
    }
    vocab.size = static_cast<int>(vocab.id_to_element.size()) - 1;
    vocab.pad_id = 0;
    vocab.mask_id = vocab.size + 1;
    return {std::move(vocab), std::move(filtered)};
}

std::vector<InteractionSequence> group_full_sequences(
    const RawEventLog& filtered, const Vocabulary& vocab,
    std::vector<std::string>* generator_names) {
    std::unordered_map<std::string, int> generator_ids;
    std::vector<std::string> names;
    // (generator, timestamp, input position, element id)
    struct Row {
        int generator;
        long long ts;
        std::size_t pos;
        int element;
    };
    std::vector<Row> rows;
    rows.reserve(filtered.records.size());
    for (std::size_t i = 0; i < filtered.records.size(); ++i) {
        const auto& r = filtered.records[i];
        auto [it, inserted] =
            generator_ids.try_emplace(r.generator, static_cast<int>(names.size()));
        if (inserted) names.push_back(r.generator);
        rows.push_back({it->second, r.timestamp, i, vocab.encode(r.element)});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.generator != b.generator) return a.generator < b.generator;
        return a.ts < b.ts;  // equal timestamps keep input order
    });

    std::vector<InteractionSequence> full(names.size());
    for (std::size_t g = 0; g < names.size(); ++g)
        full[g].generator = static_cast<int>(g);
    for (const auto& row : rows) full[row.generator].elements.push_back(row.element);

    if (generator_names) *generator_names = std::move(names);
    return full;
}

SequenceBuildResult build_sequences(const RawEventLog& filtered,
                                    const Vocabulary& vocab, int max_len,
                                    int min_seq_len) {
    if (max_len < 3) throw ContractError("max_len must be >= 3");

    SequenceBuildResult result;
    auto full = group_full_sequences(filtered, vocab, &result.generator_names);

    for (auto& seq : full) {
        const int n = static_cast<int>(seq.elements.size());
        if (n <= max_len) {
            result.sequences.push_back(std::move(seq));
            continue;
        }
        // cut windows from the sequence end moving leftward, then emit them
        // left-to-right so the rightmost window ends each generator's group
        std::vector<std::pair<int, int>> windows;  // [begin, end)
        int end = n;
        while (end > 0) {
            int begin = std::max(0, end - max_len);
            windows.emplace_back(begin, end);
            end = begin;
        }
        std::reverse(windows.begin(), windows.end());
        for (auto [b, e] : windows) {
            if (e - b < min_seq_len) continue;  // leftover head, dropped
            InteractionSequence w;
            w.generator = seq.generator;
            w.elements.assign(seq.elements.begin() + b, seq.elements.begin() + e);
            result.sequences.push_back(std::move(w));
        }
    }
    return result;
}

SplitSet split_leave_one_out(const std::vector<InteractionSequence>& seqs) {
    SplitSet split;
    // index of the rightmost window per generator (windows are grouped with
    // the rightmost last)
    std::map<int, std::size_t> last_window;
    for (std::size_t i = 0; i < seqs.size(); ++i) last_window[seqs[i].generator] = i;

    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& seq = seqs[i];
        if (last_window[seq.generator] != i) {
            split.train.push_back(seq);  // older window, train as-is
            continue;
        }
        const int n = static_cast<int>(seq.elements.size());
        if (n < 3) {
            ++split.skipped_generators;
            continue;
        }
        split.test_targets[seq.generator] = seq.elements[n - 1];
        split.valid_targets[seq.generator] = seq.elements[n - 2];
        InteractionSequence head;
        head.generator = seq.generator;
        head.elements.assign(seq.elements.begin(), seq.elements.end() - 2);
        split.train.push_back(std::move(head));
    }
    return split;
}

void write_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (int id = 1; id <= vocab.size; ++id)
        out << vocab.id_to_element[static_cast<std::size_t>(id)] << '\t' << id << '\n';
    if (!out) throw DataError("I/O error while writing " + path);
}

void write_sequences(const SequenceBuildResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write sequences file: " + path);
    for (const auto& seq : result.sequences) {
        out << result.generator_names[static_cast<std::size_t>(seq.generator)];
        char sep = '\t';
        for (int e : seq.elements) {
            out << sep << e;
            sep = ' ';
        }
        out << '\n';
    }
    if (!out) throw DataError("I/O error while writing " + path);
}

}  // namespace hail
