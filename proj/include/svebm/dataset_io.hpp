#pragma once

// Text formats:
//   points     CSV with header "x,y,component" (component may be omitted)
//   corpus     one sequence per line, space-separated tokens, optional "label<TAB>" prefix
//   documents  one document per line, "id:count" pairs, optional "label<TAB>" prefix

#include <filesystem>
#include <span>
#include <vector>

#include "svebm/data_synth.hpp"
#include "svebm/example.hpp"
#include "svebm/generator.hpp"

namespace svebm {

PointDataset read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const PointDataset& ds);
/// The component column is written only when every example has a label.
void write_point_examples(const std::filesystem::path& path, std::span<const Example> xs);

/// Unknown tokens are added to vocab when extend is set, otherwise mapped to
/// <unk>. Sequences longer than max_len are rejected (0: no limit).
std::vector<Example> read_corpus(const std::filesystem::path& path, Vocabulary& vocab, bool extend,
                                 std::size_t max_len = 0);
void write_corpus(const std::filesystem::path& path, std::span<const Example> xs, const Vocabulary& vocab);

std::vector<Example> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, std::span<const Example> xs);

/// Reads a dataset of the given modality.
std::vector<Example> load_dataset(const std::filesystem::path& path, Modality modality, Vocabulary& vocab,
                                  bool extend_vocab, std::size_t max_len = 0);

}  // namespace svebm
