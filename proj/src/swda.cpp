#include "dclm/swda.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace dclm {
namespace {

namespace fs = std::filesystem;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  const auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n;) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
      end_row();
      i += 2;
      continue;
    }
    if (c == '\n' || c == '\r') {
      end_row();
      ++i;
      continue;
    }
    field += c;
    ++i;
  }
  if (quoted) throw DataError(path + ": unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

int column(const std::unordered_map<std::string, int>& cols,
           const std::string& name, const std::string& path) {
  const auto it = cols.find(name);
  if (it == cols.end()) throw DataError(path + ": missing column " + name);
  return it->second;
}

// "word/TAG" items, token and tag lowercased. Returns the skipped count.
int parse_pos_items(const std::string& text, Utterance& u) {
  int skipped = 0;
  std::istringstream in(text);
  std::string item;
  while (in >> item) {
    const std::size_t cut = item.rfind('/');
    if (cut == std::string::npos || cut == 0 || cut + 1 == item.size()) {
      ++skipped;
      continue;
    }
    u.tokens.push_back(lower(item.substr(0, cut)));
    u.pos.push_back(lower(item.substr(cut + 1)));
  }
  return skipped;
}

// Two digits NN from the first "swNNutt" in s, or "".
std::string folder_digits(const std::string& s) {
  for (std::size_t i = 0; i + 7 <= s.size(); ++i) {
    if (s.compare(i, 2, "sw") == 0 &&
        std::isdigit(static_cast<unsigned char>(s[i + 2])) &&
        std::isdigit(static_cast<unsigned char>(s[i + 3])) &&
        s.compare(i + 4, 3, "utt") == 0) {
      return s.substr(i + 2, 2);
    }
  }
  return "";
}

Dialog convert_file(const std::string& path, std::ostream* warnings) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  const std::string text((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  const std::vector<std::vector<std::string>> rows = parse_csv(text, path);
  if (rows.empty()) throw DataError(path + ": no header row");

  std::unordered_map<std::string, int> cols;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    cols[trim(rows[0][i])] = static_cast<int>(i);
  }
  const int c_file = column(cols, "swda_filename", path);
  const int c_conv = column(cols, "conversation_no", path);
  const int c_caller = column(cols, "caller", path);
  const int c_act = column(cols, "act_tag", path);
  const int c_pos = column(cols, "pos", path);
  const std::size_t width =
      static_cast<std::size_t>(
          std::max({c_file, c_conv, c_caller, c_act, c_pos})) +
      1;

  Dialog d;
  int skipped_items = 0;
  int dropped_rows = 0;
  std::string last_act[2];
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::vector<std::string>& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() < width) {
      throw DataError(path + ": row " + std::to_string(r + 1) +
                      " has too few fields");
    }
    if (d.dialog_id.empty()) {
      std::string digits = folder_digits(row[c_file]);
      if (digits.empty()) digits = folder_digits(path);
      if (digits.empty()) {
        throw DataError(path + ": no swNNutt folder in swda_filename \"" +
                        row[c_file] + "\" or the file path");
      }
      d.dialog_id = "sw" + digits + trim(row[c_conv]);
    }
    const std::string caller = trim(row[c_caller]);
    if (caller != "A" && caller != "B") {
      throw DataError(path + ": row " + std::to_string(r + 1) +
                      ": caller must be A or B, got \"" + caller + "\"");
    }
    const int sp = caller == "A" ? 0 : 1;

    Utterance u;
    skipped_items += parse_pos_items(row[c_pos], u);
    if (u.tokens.empty()) {
      ++dropped_rows;
      continue;
    }
    std::string act = trim(row[c_act]);
    if (act == "+" && !last_act[sp].empty()) act = last_act[sp];
    last_act[sp] = act;
    u.da = std::move(act);

    if (d.turns.empty() || d.turns.back().speaker != caller) {
      Turn t;
      t.speaker = caller;
      d.turns.push_back(std::move(t));
    }
    d.turns.back().utterances.push_back(std::move(u));
  }
  if (d.turns.empty()) throw DataError(path + ": no usable utterances");
  if (warnings && (skipped_items > 0 || dropped_rows > 0)) {
    *warnings << path << ": skipped " << skipped_items
              << " untagged items, dropped " << dropped_rows
              << " token-free rows\n";
  }
  return d;
}

}  // namespace

std::vector<std::string> collect_csv_files(
    const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const std::string& in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      for (const auto& entry : fs::recursive_directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
          out.push_back(entry.path().string());
        }
      }
    } else if (fs::is_regular_file(in, ec)) {
      out.push_back(in);
    } else {
      throw DataError("no such file or directory: " + in);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Corpus convert_swda(const std::vector<std::string>& csv_files,
                    std::ostream* warnings) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  for (const std::string& path : csv_files) {
    Dialog d = convert_file(path, warnings);
    if (!seen.insert(d.dialog_id).second) {
      throw DataError(path + ": duplicate dialog id " + d.dialog_id);
    }
    corpus.push_back(std::move(d));
  }
  return corpus;
}

}  // namespace dclm
