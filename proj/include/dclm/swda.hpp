#ifndef DCLM_SWDA_HPP
#define DCLM_SWDA_HPP

#include "dclm/corpus.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dclm {

// Expands each input into the .csv files beneath it (files pass through,
// directories are scanned recursively) and returns them sorted by path.
std::vector<std::string> collect_csv_files(
    const std::vector<std::string>& inputs);

// Converts transcripts in the SwDA CSV layout into dialogs, one per file.
//
// Each file holds one conversation as RFC 4180 CSV with a header row.
// Required columns: swda_filename, conversation_no, caller, act_tag, pos.
// Rows are read in file order. Tokens and their part-of-speech tags come
// from the pos column ("word/TAG ..." items, split at the last slash and
// lowercased; items without a token and a tag are skipped). Rows whose
// pos column yields no tokens are dropped. An act_tag of "+" continues
// the same caller's previous utterance and inherits its tag; with
// nothing to inherit it is kept verbatim. Consecutive rows by one caller
// form a single turn. The dialog id is "sw" + the two-digit folder
// number from swda_filename (or from the file's own path) +
// conversation_no, which is what split_by_folder routes on.
//
// Dropped rows and skipped items are counted per file on warnings.
Corpus convert_swda(const std::vector<std::string>& csv_files,
                    std::ostream* warnings = nullptr);

}  // namespace dclm

#endif  // DCLM_SWDA_HPP
